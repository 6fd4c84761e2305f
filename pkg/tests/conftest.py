import numpy as np
import pytest

from labelattn.config import ModelConfig
from labelattn.model import init_model
from labelattn.tokenizer import CLS_ID, SEP_ID, TokenizedText


def fake_tokens(ids) -> TokenizedText:
    """TokenizedText straight from ids, for tests that bypass the tokenizer."""
    ids = tuple(int(i) for i in ids)
    return TokenizedText(
        ids=ids,
        tokens=tuple(f"t{i}" for i in ids),
        spans=tuple((k, k + 1) for k in range(len(ids))),
    )


def wrapped(ids) -> TokenizedText:
    """Ids bracketed by [CLS]/[SEP], like real tokenizer output."""
    return fake_tokens((CLS_ID,) + tuple(ids) + (SEP_ID,))


@pytest.fixture
def tiny_config():
    return ModelConfig(
        vocab_size=24,
        num_labels=3,
        d_h=8,
        num_layers=1,
        enc_heads=2,
        label_heads=2,
        ffn_mult=2,
        max_seq_len=16,
    )


@pytest.fixture
def tiny_model(tiny_config):
    return init_model(tiny_config, seed=42)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
