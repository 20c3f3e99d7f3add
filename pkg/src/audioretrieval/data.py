"""Dataset loading, log-mel feature extraction, and caption preprocessing."""
from __future__ import annotations

import csv
import json
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile


@dataclass
class Waveform:
    samples: np.ndarray  # mono float64, nominal range [-1, 1]
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.size == 0:
            raise ValueError("waveform must be non-empty")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")


@dataclass
class FeatureConfig:
    n_fft: int = 1024
    hop: int = 320
    n_mels: int = 64
    target_sr: int = 32000
    f_min: float = 0.0
    f_max: float | None = None  # defaults to target_sr / 2
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.f_max is None:
            self.f_max = self.target_sr / 2
        if self.hop > self.n_fft:
            raise ValueError("hop must not exceed n_fft")
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")
        if not (self.f_min < self.f_max <= self.target_sr / 2):
            raise ValueError("need f_min < f_max <= target_sr/2")


@dataclass
class MelSpectrogram:
    """Natural-log mel power matrix, shape [n_mels, T].

    Columns beyond ``n_frames_valid`` are batch zero-padding, not audio.
    """

    values: np.ndarray
    n_frames_valid: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("values must be 2-D [n_mels, T]")
        if self.n_frames_valid > self.values.shape[1]:
            raise ValueError("n_frames_valid exceeds frame count")


@dataclass
class TokenVocab:
    token_to_id: dict[str, int] = field(default_factory=dict)

    PAD = 0
    UNK = 1

    def __len__(self):
        return len(self.token_to_id) + 2

    def id_for(self, word: str) -> int:
        return self.token_to_id.get(word, self.UNK)

    def words(self) -> list[str]:
        return list(self.token_to_id)


@dataclass
class TokenSequence:
    ids: np.ndarray  # int64, length <= MAX_TOKENS
    raw_text: str

    MAX_TOKENS = 32

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if self.ids.size > self.MAX_TOKENS:
            raise ValueError("token sequence longer than %d" % self.MAX_TOKENS)


@dataclass
class NormStats:
    mean: np.ndarray
    var: np.ndarray
    count: int = 0

    @classmethod
    def fresh(cls, n_mels: int) -> "NormStats":
        return cls(np.zeros(n_mels), np.ones(n_mels), 0)


@dataclass
class PairedDataset:
    items: list[tuple[str, Waveform, list[str]]]
    split: str = "train"

    def __post_init__(self):
        for audio_id, _, captions in self.items:
            if not captions:
                raise ValueError(f"item {audio_id!r} has no captions")

    def __len__(self):
        return len(self.items)


def load_wav(path) -> Waveform:
    """Read a RIFF WAV file (PCM 16/32-bit or IEEE float) as mono float."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    try:
        sr, raw = wavfile.read(str(path))
    except ValueError as exc:
        raise ValueError(f"unsupported WAV format in {path}: {exc}") from exc
    if raw.dtype == np.int16:
        samples = raw.astype(np.float64) / 2**15
    elif raw.dtype == np.int32:
        samples = raw.astype(np.float64) / 2**31
    elif raw.dtype in (np.float32, np.float64):
        samples = raw.astype(np.float64)
    else:
        raise ValueError(f"unsupported WAV sample format {raw.dtype} in {path}")
    if samples.ndim == 2:  # downmix by channel mean
        samples = samples.mean(axis=1)
    return Waveform(samples, int(sr))


def save_wav(path, w: Waveform) -> None:
    wavfile.write(str(path), w.sample_rate, w.samples.astype(np.float32))


def resample_linear(w: Waveform, target_sr: int) -> Waveform:
    """Linear-interpolation resampling; identity when rates already match."""
    if target_sr <= 0:
        raise ValueError("target_sr must be positive")
    if target_sr == w.sample_rate:
        return Waveform(w.samples.copy(), w.sample_rate)
    n_out = int(len(w.samples) * target_sr // w.sample_rate)
    src_pos = np.arange(n_out) * (w.sample_rate / target_sr)
    out = np.interp(src_pos, np.arange(len(w.samples)), w.samples)
    return Waveform(out, target_sr)


def _hz_to_mel(f):
    # Slaney scale: linear below 1 kHz, log above.
    f = np.asarray(f, dtype=np.float64)
    mel = f / (200.0 / 3.0)
    log_region = f >= 1000.0
    mel = np.where(log_region, 15.0 + np.log(np.maximum(f, 1e-12) / 1000.0) / (np.log(6.4) / 27.0), mel)
    return mel


def _mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    f = m * (200.0 / 3.0)
    log_region = m >= 15.0
    f = np.where(log_region, 1000.0 * np.exp((m - 15.0) * (np.log(6.4) / 27.0)), f)
    return f


def mel_filterbank(cfg: FeatureConfig) -> np.ndarray:
    """Area-normalized triangular filters, shape [n_mels, n_fft//2 + 1]."""
    n_bins = cfg.n_fft // 2 + 1
    fft_freqs = np.arange(n_bins) * (cfg.target_sr / cfg.n_fft)
    mel_pts = np.linspace(_hz_to_mel(cfg.f_min), _hz_to_mel(cfg.f_max), cfg.n_mels + 2)
    hz_pts = _mel_to_hz(mel_pts)
    fb = np.zeros((cfg.n_mels, n_bins))
    for m in range(cfg.n_mels):
        lo, ctr, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        up = (fft_freqs - lo) / max(ctr - lo, 1e-12)
        down = (hi - fft_freqs) / max(hi - ctr, 1e-12)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
        fb[m] *= 2.0 / (hi - lo)  # Slaney area normalization
    return fb


def logmel(w: Waveform, cfg: FeatureConfig) -> MelSpectrogram:
    """Hann STFT power -> mel filterbank -> natural log with additive floor.

    Frames are reflect-centered; T = 1 + len // hop.
    """
    if w.sample_rate != cfg.target_sr:
        raise ValueError(
            f"waveform rate {w.sample_rate} != feature rate {cfg.target_sr}; resample first"
        )
    n = len(w.samples)
    if n < cfg.hop:
        raise ValueError(f"waveform of {n} samples shorter than one hop ({cfg.hop})")
    n_frames = 1 + n // cfg.hop
    half = cfg.n_fft // 2
    padded = np.pad(w.samples, half, mode="reflect")
    # periodic Hann
    window = 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(cfg.n_fft) / cfg.n_fft))
    starts = np.arange(n_frames) * cfg.hop
    frames = np.lib.stride_tricks.sliding_window_view(padded, cfg.n_fft)[starts]
    spec = np.fft.rfft(frames * window, axis=1)
    power = (spec.real**2 + spec.imag**2).T  # [n_bins, T]
    mel_power = mel_filterbank(cfg) @ power
    return MelSpectrogram(np.log(mel_power + cfg.log_floor), n_frames)


def freq_normalize(
    batch: list[MelSpectrogram], stats: NormStats, update: bool = False
) -> list[MelSpectrogram]:
    """Standardize each mel bin.

    With ``update`` set (training), the batch's own per-bin statistics over
    valid frames are used and folded into the running stats with momentum
    0.1; otherwise the stored running stats apply. The statistics are
    constants for gradient purposes.
    """
    if update:
        cols = np.concatenate([m.values[:, : m.n_frames_valid] for m in batch], axis=1)
        mean = cols.mean(axis=1)
        var = cols.var(axis=1)
        stats.mean = 0.9 * stats.mean + 0.1 * mean
        stats.var = 0.9 * stats.var + 0.1 * var
        stats.count += cols.shape[1]
    else:
        mean, var = stats.mean, stats.var
    scale = 1.0 / np.sqrt(var + 1e-5)
    return [
        MelSpectrogram((m.values - mean[:, None]) * scale[:, None], m.n_frames_valid)
        for m in batch
    ]


def freq_denormalize(batch: list[MelSpectrogram], stats: NormStats) -> list[MelSpectrogram]:
    """Inverse of freq_normalize under the same (non-updating) stats."""
    scale = np.sqrt(stats.var + 1e-5)
    return [
        MelSpectrogram(m.values * scale[:, None] + stats.mean[:, None], m.n_frames_valid)
        for m in batch
    ]


def preprocess_caption(text: str) -> str:
    """Lowercase, strip Unicode punctuation, collapse whitespace."""
    lowered = text.lower()
    stripped = "".join(c for c in lowered if not unicodedata.category(c).startswith("P"))
    return " ".join(stripped.split())


def build_vocab(captions: list[str]) -> TokenVocab:
    vocab = TokenVocab()
    next_id = 2
    for cap in captions:
        for word in cap.split():
            if word not in vocab.token_to_id:
                vocab.token_to_id[word] = next_id
                next_id += 1
    return vocab


def tokenize(text: str, vocab: TokenVocab) -> TokenSequence:
    ids = [vocab.id_for(w) for w in text.split()][: TokenSequence.MAX_TOKENS]
    return TokenSequence(np.array(ids, dtype=np.int64), text)


def pad_token_batch(seqs: list[TokenSequence]) -> np.ndarray:
    """Stack sequences into an int matrix padded with PAD=0."""
    width = max((len(s.ids) for s in seqs), default=0)
    out = np.zeros((len(seqs), width), dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s.ids)] = s.ids
    return out


_CLASS_WORDS = [
    ["rain", "pours", "heavily", "outside"],
    ["dog", "barks", "loudly", "nearby"],
    ["engine", "rumbles", "idling", "steadily"],
    ["birds", "chirp", "morning", "trees"],
    ["waves", "crash", "shore", "rhythm"],
    ["crowd", "talks", "busy", "market"],
    ["bell", "rings", "church", "tower"],
    ["wind", "howls", "through", "canyon"],
    ["train", "passes", "rails", "clatter"],
    ["thunder", "rolls", "distant", "storm"],
    ["children", "laugh", "playing", "park"],
    ["door", "creaks", "slowly", "open"],
]

_DISTRACTORS = [
    "a", "the", "is", "and", "some", "very", "can", "be", "heard", "while",
    "in", "background", "with", "sound", "of", "it", "continues", "then",
]


def synth_dataset(
    n_classes: int,
    n_items: int,
    seed: int,
    split: str = "train",
    sample_rate: int = 32000,
    duration: float = 1.0,
    captions_per_item: int = 3,
) -> PairedDataset:
    """Paired sine-mixture recordings and templated captions.

    Each item draws a latent class; the class fixes both the component
    frequencies of the audio and a word set shared by all its captions.
    """
    if n_classes < 2:
        raise ValueError("n_classes must be >= 2")
    if n_classes > len(_CLASS_WORDS):
        raise ValueError(f"at most {len(_CLASS_WORDS)} classes supported")
    rng = np.random.default_rng(seed)
    n_samp = int(sample_rate * duration)
    t = np.arange(n_samp) / sample_rate
    # class frequencies spread across distinct mel regions
    base_freqs = np.geomspace(200.0, sample_rate / 2 * 0.6, n_classes * 3).reshape(n_classes, 3)
    items = []
    for i in range(n_items):
        k = int(rng.integers(n_classes))
        phases = rng.uniform(0, 2 * np.pi, size=3)
        jitter = rng.uniform(0.97, 1.03, size=3)
        sig = sum(
            np.sin(2 * np.pi * f * j * t + p) / 3.0
            for f, j, p in zip(base_freqs[k], jitter, phases)
        )
        sig = sig + rng.normal(0, 0.02, size=n_samp)
        sig = np.clip(sig, -1.0, 1.0)
        captions = []
        for _ in range(captions_per_item):
            extra = rng.choice(_DISTRACTORS, size=3, replace=False)
            words = list(_CLASS_WORDS[k]) + list(extra)
            rng.shuffle(words)
            captions.append(" ".join(words))
        items.append((f"{split}_{i:05d}_c{k}", Waveform(sig, sample_rate), captions))
    return PairedDataset(items, split=split)


def load_manifest(path, audio_root=None) -> PairedDataset:
    """Read a CSV (file_name,caption_1..caption_5) or JSONL dataset manifest."""
    path = Path(path)
    root = Path(audio_root) if audio_root else path.parent
    items = []
    if path.suffix.lower() == ".jsonl":
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                wav = load_wav(root / rec["audio"])
                items.append((str(rec["audio"]), wav, list(rec["captions"])))
    else:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "file_name" not in reader.fieldnames:
                raise ValueError(f"manifest {path} lacks a file_name column")
            cap_cols = [c for c in reader.fieldnames if c.startswith("caption_")]
            for row in reader:
                wav = load_wav(root / row["file_name"])
                caps = [row[c] for c in cap_cols if row.get(c)]
                items.append((row["file_name"], wav, caps))
    return PairedDataset(items)
