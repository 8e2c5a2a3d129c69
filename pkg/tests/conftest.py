#!/usr/bin/env python3
"""
Fixtures partagées : grammaire par défaut, petites scènes et petit modèle.
"""

import numpy as np
import pytest

from src.autodiff.tensor import reset_tape
from src.data.dataset import generate_dataset
from src.data.grammar import default_grammar
from src.data.scene import grammar_vocab
from src.model.settings import make_model_config
from src.model.weights import ModelWeights
from src.training.settings import make_train_config

N_REGIONS = 4
T_WORDS = 12
D_IN = 32


@pytest.fixture(scope="session")
def grammar():
    return default_grammar()


@pytest.fixture(scope="session")
def vocab(grammar):
    return grammar_vocab(grammar)


@pytest.fixture(scope="session")
def scenes(grammar):
    return generate_dataset(grammar, range(8), N=N_REGIONS, noise=0.1, d_in=D_IN)


def tiny_model_config(vocab_size, **overrides):
    fields = dict(layers=1, d=16, heads=2, ffn=32, N=N_REGIONS, T=T_WORDS, d_in=D_IN,
                  vocab_size=vocab_size, n_classes=16, n_answers=8, vqa_hidden=16, dropout=0.0)
    fields.update(overrides)
    return make_model_config(**fields)


def tiny_train_config(vocab_size, model_overrides=None, **overrides):
    fields = dict(model=tiny_model_config(vocab_size, **(model_overrides or {})), batch_size=4,
                  steps=4, warmup=0, eval_every=0, log_every=1000, lr=1e-3)
    fields.update(overrides)
    return make_train_config(**fields)


@pytest.fixture
def model_config(vocab):
    return tiny_model_config(len(vocab))


@pytest.fixture
def train_config(vocab):
    return tiny_train_config(len(vocab))


@pytest.fixture
def weights(model_config):
    return ModelWeights.initialize(model_config, np.random.default_rng(0))


@pytest.fixture(autouse=True)
def fresh_tape():
    reset_tape()
    yield
    reset_tape()
