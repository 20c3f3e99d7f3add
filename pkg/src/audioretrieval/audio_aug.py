"""Audio augmentations: random gain, SpecAugment, Freq-MixStyle."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import MelSpectrogram, Waveform


@dataclass
class AudioAugConfig:
    g_max: int = 0       # dB, {0..6}
    n_f: int = 0         # frequency stripes, {0, 1}
    w_f: int = 1         # max stripe width in mel bins, {1..32}
    n_t: int = 0         # time stripes, {0..8}
    w_t: int = 1         # max stripe width in frames, {1..64}
    p_ms: float = 0.0    # Freq-MixStyle probability
    alpha: float = 0.5   # Beta shape for the mixing coefficient

    def __post_init__(self):
        if not 0 <= self.g_max <= 6:
            raise ValueError("g_max outside {0..6}")
        if self.n_f not in (0, 1):
            raise ValueError("n_f must be 0 or 1")
        if not 1 <= self.w_f <= 32:
            raise ValueError("w_f outside {1..32}")
        if not 0 <= self.n_t <= 8:
            raise ValueError("n_t outside {0..8}")
        if not 1 <= self.w_t <= 64:
            raise ValueError("w_t outside {1..64}")
        if not 0.0 <= self.p_ms <= 1.0:
            raise ValueError("p_ms outside [0, 1]")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha outside (0, 1]")

    def is_identity(self) -> bool:
        return self.g_max == 0 and self.n_f == 0 and self.n_t == 0 and self.p_ms == 0.0


def sample_gain(rng: np.random.Generator, g_max: int) -> float:
    """Draw a gain in dB uniformly from [-g_max, g_max]."""
    if g_max < 0:
        raise ValueError("g_max must be >= 0")
    if g_max == 0:
        return 0.0
    return float(rng.uniform(-g_max, g_max))


def apply_gain(w: Waveform, g: float) -> Waveform:
    """Scale the waveform by 10^(g/20); no clipping."""
    return Waveform(w.samples * 10.0 ** (g / 20.0), w.sample_rate)


def spec_augment(
    m: MelSpectrogram, n_f: int, w_f: int, n_t: int, w_t: int, rng: np.random.Generator
) -> MelSpectrogram:
    """Zero out random frequency and time stripes.

    Stripe width ~ Uniform{1..w_max} (clamped to the dimension), offset
    uniform over valid placements. Time stripes touch valid frames only.
    """
    values = m.values.copy()
    n_mels, _ = values.shape
    t_valid = m.n_frames_valid
    for _ in range(n_f):
        width = int(rng.integers(1, min(w_f, n_mels) + 1))
        offset = int(rng.integers(0, n_mels - width + 1))
        values[offset : offset + width, :t_valid] = 0.0
    for _ in range(n_t):
        width = int(rng.integers(1, min(w_t, t_valid) + 1))
        offset = int(rng.integers(0, t_valid - width + 1))
        values[:, offset : offset + width] = 0.0
    return MelSpectrogram(values, m.n_frames_valid)


def _bin_stats(m: MelSpectrogram) -> tuple[np.ndarray, np.ndarray]:
    valid = m.values[:, : m.n_frames_valid]
    return valid.mean(axis=1), valid.std(axis=1)  # population std


def sample_mix_lambdas(rng: np.random.Generator, alpha: float, n: int) -> np.ndarray:
    """Draw n mixing coefficients from Beta(alpha, alpha) folded to [0.5, 1]."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    lambdas = rng.beta(alpha, alpha, size=n)
    return np.maximum(lambdas, 1.0 - lambdas)


def freq_mixstyle(
    batch: list[MelSpectrogram],
    alpha: float,
    p_ms: float,
    rng: np.random.Generator,
    forced_lambda: float | None = None,
) -> list[MelSpectrogram]:
    """Mix per-bin mean/std statistics between random batch partners.

    For each example that fires (probability p_ms): draw a partner from one
    random permutation of the batch and lambda ~ Beta(alpha, alpha) folded
    to max(lambda, 1 - lambda), so the example's own statistics always get
    the larger weight. ``forced_lambda`` pins lambda for testing.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    n = len(batch)
    fire = rng.uniform(size=n) < p_ms
    partners = rng.permutation(n)
    lambdas = sample_mix_lambdas(rng, alpha, n)
    if forced_lambda is not None:
        lambdas = np.full(n, forced_lambda)
    out = []
    for i, m in enumerate(batch):
        j = int(partners[i])
        if not fire[i] or j == i:
            out.append(MelSpectrogram(m.values.copy(), m.n_frames_valid))
            continue
        lam = float(lambdas[i])
        mu_i, sd_i = _bin_stats(m)
        mu_j, sd_j = _bin_stats(batch[j])
        mu_new = lam * mu_i + (1.0 - lam) * mu_j
        sd_new = lam * sd_i + (1.0 - lam) * sd_j
        # floor (not additive) stabilizer so lambda=1 is an exact identity
        norm = (m.values - mu_i[:, None]) / np.maximum(sd_i[:, None], 1e-5)
        out.append(MelSpectrogram(norm * sd_new[:, None] + mu_new[:, None], m.n_frames_valid))
    return out
