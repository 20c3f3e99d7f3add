"""Audio/caption encoders, cosine similarity matrix, NT-Xent loss, and
hand-written reverse-mode gradients for the full objective."""
from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .data import MelSpectrogram, NormStats, TokenSequence

NORM_EPS = 1e-12  # guard added to embedding norms before division


@dataclass
class ModelDims:
    n_mels: int = 64
    embed_dim: int = 64
    audio_hidden: int = 128
    text_hidden: int = 128
    token_embed_dim: int = 64
    vocab_size: int = 2

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 1:
                raise ValueError(f"{f.name} must be >= 1")


@dataclass
class ModelParams:
    """All trainable arrays: audio head (w1/b1/w2/b2), token table, text head."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    embed: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    w4: np.ndarray
    b4: np.ndarray

    def arrays(self):
        for f in fields(self):
            yield f.name, getattr(self, f.name)

    def copy(self) -> "ModelParams":
        return ModelParams(**{name: arr.copy() for name, arr in self.arrays()})


def zeros_like_params(params: ModelParams) -> ModelParams:
    return ModelParams(**{name: np.zeros_like(arr) for name, arr in params.arrays()})


def init_params(dims: ModelDims, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases, Normal(0, 0.02) token embeddings."""
    rng = np.random.default_rng(seed)

    def glorot(fan_in, fan_out):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-s, s, size=(fan_in, fan_out))

    return ModelParams(
        w1=glorot(dims.n_mels, dims.audio_hidden),
        b1=np.zeros(dims.audio_hidden),
        w2=glorot(dims.audio_hidden, dims.embed_dim),
        b2=np.zeros(dims.embed_dim),
        embed=rng.normal(0.0, 0.02, size=(dims.vocab_size, dims.token_embed_dim)),
        w3=glorot(dims.token_embed_dim, dims.text_hidden),
        b3=np.zeros(dims.text_hidden),
        w4=glorot(dims.text_hidden, dims.embed_dim),
        b4=np.zeros(dims.embed_dim),
    )


def pool_audio(batch: list[MelSpectrogram]) -> np.ndarray:
    """Per-bin (mean + max) / 2 over valid frames, shape [N, n_mels]."""
    if not batch:
        raise ValueError("empty batch")
    rows = []
    for m in batch:
        valid = m.values[:, : m.n_frames_valid]
        rows.append(0.5 * (valid.mean(axis=1) + valid.max(axis=1)))
    return np.stack(rows)


def pool_text(batch: list[TokenSequence], embed: np.ndarray) -> np.ndarray:
    """Mean token embedding over non-PAD positions; empty sequence -> zeros."""
    rows = []
    for s in batch:
        ids = s.ids[s.ids != 0]
        if ids.size == 0:
            rows.append(np.zeros(embed.shape[1]))
        else:
            rows.append(embed[ids].mean(axis=0))
    return np.stack(rows)


def embed_audio(batch: list[MelSpectrogram], params: ModelParams, dims: ModelDims) -> np.ndarray:
    pooled = pool_audio(batch)
    hidden = np.maximum(pooled @ params.w1 + params.b1, 0.0)
    return hidden @ params.w2 + params.b2


def embed_text(batch: list[TokenSequence], params: ModelParams, dims: ModelDims) -> np.ndarray:
    pooled = pool_text(batch, params.embed)
    hidden = np.maximum(pooled @ params.w3 + params.b3, 0.0)
    return hidden @ params.w4 + params.b4


def similarity_matrix(audio_emb: np.ndarray, text_emb: np.ndarray) -> np.ndarray:
    """Cosine agreement C[i, j] between audio row i and caption row j."""
    a_norm = np.linalg.norm(audio_emb, axis=1, keepdims=True) + NORM_EPS
    t_norm = np.linalg.norm(text_emb, axis=1, keepdims=True) + NORM_EPS
    return (audio_emb / a_norm) @ (text_emb / t_norm).T


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def nt_xent(C: np.ndarray, tau: float = 1.0) -> float:
    """Average of row-wise and column-wise softmax CE against the identity."""
    n = C.shape[0]
    if C.shape != (n, n) or n < 2:
        raise ValueError("similarity matrix must be square with N >= 2")
    if tau <= 0:
        raise ValueError("tau must be positive")
    logits = C / tau
    row_ce = -np.diag(_log_softmax(logits))
    col_ce = -np.diag(_log_softmax(logits.T))
    return float((row_ce.sum() + col_ce.sum()) / (2.0 * n))


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def backward(
    audio_batch: list[MelSpectrogram],
    text_batch: list[TokenSequence],
    params: ModelParams,
    dims: ModelDims,
    tau: float = 1.0,
) -> tuple[float, ModelParams]:
    """Loss and exact gradients of nt_xent(similarity(embeddings)) w.r.t. params.

    Feature normalization statistics are constants; the cosine gradient uses
    the full quotient rule.
    """
    n = len(audio_batch)
    if len(text_batch) != n:
        raise ValueError("audio and text batch sizes differ")

    # forward with caches
    pooled_a = pool_audio(audio_batch)
    pre1 = pooled_a @ params.w1 + params.b1
    h1 = np.maximum(pre1, 0.0)
    A = h1 @ params.w2 + params.b2

    pooled_t = pool_text(text_batch, params.embed)
    pre3 = pooled_t @ params.w3 + params.b3
    h3 = np.maximum(pre3, 0.0)
    T = h3 @ params.w4 + params.b4

    a_raw = np.linalg.norm(A, axis=1, keepdims=True)
    t_raw = np.linalg.norm(T, axis=1, keepdims=True)
    a_den = a_raw + NORM_EPS
    t_den = t_raw + NORM_EPS
    An = A / a_den
    Tn = T / t_den
    C = An @ Tn.T
    loss = nt_xent(C, tau)
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite loss")

    logits = C / tau
    eye = np.eye(n)
    dC = ((_softmax(logits) - eye) + (_softmax(logits.T) - eye).T) / (2.0 * n * tau)

    # cosine backward: An = A / (|A| + eps)
    dAn = dC @ Tn
    dTn = dC.T @ An

    def through_norm(dXn, X, raw, den):
        safe = np.maximum(raw, NORM_EPS)
        return dXn / den - X * ((dXn * X).sum(axis=1, keepdims=True) / (safe * den**2))

    dA = through_norm(dAn, A, a_raw, a_den)
    dT = through_norm(dTn, T, t_raw, t_den)

    grads = zeros_like_params(params)

    # audio head
    grads.w2 = h1.T @ dA
    grads.b2 = dA.sum(axis=0)
    dh1 = (dA @ params.w2.T) * (pre1 > 0.0)
    grads.w1 = pooled_a.T @ dh1
    grads.b1 = dh1.sum(axis=0)

    # text head + token table
    grads.w4 = h3.T @ dT
    grads.b4 = dT.sum(axis=0)
    dh3 = (dT @ params.w4.T) * (pre3 > 0.0)
    grads.w3 = pooled_t.T @ dh3
    grads.b3 = dh3.sum(axis=0)
    dpool_t = dh3 @ params.w3.T
    for i, s in enumerate(text_batch):
        ids = s.ids[s.ids != 0]
        if ids.size:
            np.add.at(grads.embed, ids, dpool_t[i] / ids.size)

    return loss, grads


def save_checkpoint(path, params: ModelParams, dims: ModelDims, stats: NormStats | None = None):
    arrays = {name: {"shape": list(arr.shape), "data": arr.ravel().tolist()} for name, arr in params.arrays()}
    if stats is not None:
        arrays["norm_mean"] = {"shape": list(stats.mean.shape), "data": stats.mean.tolist()}
        arrays["norm_var"] = {"shape": list(stats.var.shape), "data": stats.var.tolist()}
    doc = {"dims": {f.name: getattr(dims, f.name) for f in fields(ModelDims)}, "arrays": arrays, "version": 1}
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> tuple[ModelParams, ModelDims, NormStats | None]:
    doc = json.loads(Path(path).read_text())
    if doc.get("version") != 1:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    dims = ModelDims(**doc["dims"])
    arrays = {
        name: np.array(rec["data"], dtype=np.float64).reshape(rec["shape"])
        for name, rec in doc["arrays"].items()
    }
    stats = None
    if "norm_mean" in arrays:
        stats = NormStats(arrays.pop("norm_mean"), arrays.pop("norm_var"))
    params = ModelParams(**arrays)
    return params, dims, stats
