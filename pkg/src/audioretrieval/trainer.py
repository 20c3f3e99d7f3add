"""Training loop: Adam, step-decayed learning rate, on-the-fly augmentation,
validation with retrieval metrics, early stopping."""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from . import audio_aug, text_aug
from .data import (
    FeatureConfig,
    NormStats,
    PairedDataset,
    build_vocab,
    freq_normalize,
    logmel,
    preprocess_caption,
    resample_linear,
    tokenize,
)
from .metrics import evaluate
from .model import (
    ModelDims,
    ModelParams,
    backward,
    embed_audio,
    embed_text,
    init_params,
    save_checkpoint,
    similarity_matrix,
    zeros_like_params,
)


@dataclass
class OptimConfig:
    lr0: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 30
    epochs: int = 50
    lr_drop_factor: float = 3.0
    lr_drop_every: int = 10
    patience: int = 10
    tau: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


@dataclass
class AdamState:
    t: int = 0
    m: ModelParams | None = None
    v: ModelParams | None = None


@dataclass
class RunResult:
    train_losses: list[float] = field(default_factory=list)
    val_maps: list[float] = field(default_factory=list)
    best_val_map: float = 0.0
    best_epoch: int = -1
    stopped_early: bool = False
    epochs_run: int = 0
    checkpoint_path: str | None = None

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def lr_at(epoch: int, cfg: OptimConfig) -> float:
    """Initial rate divided by drop_factor every drop_every epochs."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return cfg.lr0 / cfg.lr_drop_factor ** (epoch // cfg.lr_drop_every)


def adam_step(
    params: ModelParams, grads: ModelParams, state: AdamState, lr: float, cfg: OptimConfig
) -> None:
    """One in-place Adam update with bias correction."""
    if state.m is None:
        state.m = zeros_like_params(params)
        state.v = zeros_like_params(params)
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, g in grads.arrays():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in {name}")
        m = getattr(state.m, name)
        v = getattr(state.v, name)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p = getattr(params, name)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)


class EarlyStopping:
    """Stop when the monitored value has not strictly improved for `patience` epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = -np.inf
        self.best_epoch = -1

    def update(self, epoch: int, value: float) -> bool:
        """Record an epoch's value; returns True when training should stop."""
        if value > self.best:
            self.best = value
            self.best_epoch = epoch
        return epoch - self.best_epoch >= self.patience


def _prepare_features(dataset: PairedDataset, feat: FeatureConfig):
    """Resampled waveforms plus cached un-augmented log-mels."""
    waves, mels = [], []
    for _, w, _ in dataset.items:
        w = resample_linear(w, feat.target_sr)
        waves.append(w)
        mels.append(logmel(w, feat))
    return waves, mels


def train_run(
    train: PairedDataset,
    val: PairedDataset,
    dims: ModelDims,
    feat: FeatureConfig,
    audio_cfg: audio_aug.AudioAugConfig | None,
    text_cfg: text_aug.TextAugConfig | None,
    optim: OptimConfig,
    provider=None,
    lexicon: text_aug.SynonymLexicon | None = None,
    checkpoint_path=None,
    epoch_hook=None,
) -> RunResult:
    """Full optimization run; returns per-epoch losses and validation mAP@10.

    Pass ``audio_cfg`` / ``text_cfg`` as None to disable that augmentation
    path entirely. RNG streams: one for batch order and caption sampling,
    one for augmentation; per batch the augmentation draws happen in the
    fixed order caption text (BT then EDA, per item) -> gain (per item) ->
    Freq-MixStyle -> SpecAugment (per item).
    """
    seeds = np.random.SeedSequence(optim.seed).spawn(3)
    rng_init, rng_order, rng_aug = (np.random.default_rng(s) for s in seeds)
    lexicon = lexicon or text_aug.SynonymLexicon(({}))

    caps_pre = [[preprocess_caption(c) for c in caps] for _, _, caps in train.items]
    vocab = build_vocab([c for caps in caps_pre for c in caps])
    dims = ModelDims(**{f.name: getattr(dims, f.name) for f in fields(ModelDims)})
    dims.vocab_size = len(vocab)

    params = init_params(dims, int(rng_init.integers(2**31)))
    stats = NormStats.fresh(dims.n_mels)
    state = AdamState()

    train_waves, train_mels = _prepare_features(train, feat)
    _, val_mels = _prepare_features(val, feat)
    val_tokens = [
        tokenize(preprocess_caption(c), vocab)
        for _, _, caps in val.items
        for c in caps
    ]
    val_targets = np.array(
        [i for i, (_, _, caps) in enumerate(val.items) for _ in caps], dtype=np.int64
    )

    result = RunResult(checkpoint_path=str(checkpoint_path) if checkpoint_path else None)
    stopper = EarlyStopping(optim.patience)
    n = len(train)

    for epoch in range(optim.epochs):
        lr = lr_at(epoch, optim)
        order = rng_order.permutation(n)
        cap_choice = {int(i): int(rng_order.integers(len(train.items[i][2]))) for i in order}
        batch_losses = []
        for start in range(0, n, optim.batch_size):
            idx = order[start : start + optim.batch_size]
            if len(idx) < 2:
                continue  # nt_xent needs N >= 2
            tokens = []
            for i in idx:
                raw = train.items[i][2][cap_choice[int(i)]]
                if text_cfg is not None:
                    text = text_aug.augment_caption(raw, text_cfg, provider, lexicon, vocab, rng_aug)
                else:
                    text = caps_pre[i][cap_choice[int(i)]]
                tokens.append(tokenize(text, vocab))
            if audio_cfg is not None:
                mels = []
                for i in idx:
                    g = audio_aug.sample_gain(rng_aug, audio_cfg.g_max)
                    if g == 0.0:
                        mels.append(train_mels[i])
                    else:
                        mels.append(logmel(audio_aug.apply_gain(train_waves[i], g), feat))
            else:
                mels = [train_mels[i] for i in idx]
            mels = freq_normalize(mels, stats, update=True)
            if audio_cfg is not None:
                mels = audio_aug.freq_mixstyle(mels, audio_cfg.alpha, audio_cfg.p_ms, rng_aug)
                mels = [
                    audio_aug.spec_augment(
                        m, audio_cfg.n_f, audio_cfg.w_f, audio_cfg.n_t, audio_cfg.w_t, rng_aug
                    )
                    for m in mels
                ]
            loss, grads = backward(mels, tokens, params, dims, optim.tau)
            adam_step(params, grads, state, lr, optim)
            batch_losses.append(loss)

        result.train_losses.append(float(np.mean(batch_losses)))
        val_map = _validate(val_mels, val_tokens, val_targets, params, dims, stats)
        result.val_maps.append(val_map)
        result.epochs_run = epoch + 1

        improved = val_map > stopper.best
        stop = stopper.update(epoch, val_map)
        if improved and checkpoint_path is not None:
            save_checkpoint(checkpoint_path, params, dims, stats)
        if epoch_hook is not None:
            epoch_hook(epoch, val_map)
        if stop:
            result.stopped_early = True
            break

    result.best_val_map = stopper.best if stopper.best_epoch >= 0 else 0.0
    result.best_epoch = stopper.best_epoch
    return result


def _validate(val_mels, val_tokens, val_targets, params, dims, stats) -> float:
    normed = freq_normalize(val_mels, stats, update=False)
    audio_emb = embed_audio(normed, params, dims)
    text_emb = embed_text(val_tokens, params, dims)
    scores = similarity_matrix(text_emb, audio_emb)  # queries x recordings
    return evaluate(scores, val_targets).map10
