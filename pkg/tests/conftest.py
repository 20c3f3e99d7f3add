import numpy as np
import pytest

from audioretrieval.data import MelSpectrogram, TokenSequence
from audioretrieval.model import ModelDims, init_params


@pytest.fixture
def small_dims():
    return ModelDims(
        n_mels=8, embed_dim=8, audio_hidden=16, text_hidden=16,
        token_embed_dim=8, vocab_size=10,
    )


@pytest.fixture
def small_params(small_dims):
    return init_params(small_dims, 1)


def random_mel_batch(rng, n, n_mels=8, t=12, t_valid=10):
    return [MelSpectrogram(rng.normal(size=(n_mels, t)), t_valid) for _ in range(n)]


def random_token_batch(rng, n, vocab_size=10, max_len=8):
    return [
        TokenSequence(rng.integers(1, vocab_size, size=int(rng.integers(2, max_len))), "")
        for _ in range(n)
    ]
