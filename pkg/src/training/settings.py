#!/usr/bin/env python3
"""
Configuration d'entraînement et flux aléatoires nommés.
"""

from typing import Any, Dict

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.model.settings import ModelConfig
from src.utils.errors import ConfigError
import config

STREAMS = ("init", "data", "corruption", "dropout", "head")


class TrainConfig(BaseModel):
    """Hyper-paramètres d'un entraînement ; sérialisée dans les points de contrôle."""

    model_config = ConfigDict(extra="forbid")

    model: ModelConfig = Field(default_factory=ModelConfig)
    lam: float = Field(default=config.LAMBDAS["pretrain"], ge=0.0, le=1.0)
    mask_rate: float = Field(default=config.MASKING["rate"], gt=0.0, le=1.0)
    p_mask: float = config.MASKING["p_mask"]
    p_rand: float = config.MASKING["p_rand"]
    p_keep: float = config.MASKING["p_keep"]
    strict_bert_masking: bool = config.MASKING["strict_bert_masking"]
    lr: float = Field(default=config.TRAIN_DEFAULTS["lr"], gt=0.0)
    beta1: float = config.TRAIN_DEFAULTS["beta1"]
    beta2: float = config.TRAIN_DEFAULTS["beta2"]
    eps: float = config.TRAIN_DEFAULTS["eps"]
    warmup: int = config.TRAIN_DEFAULTS["warmup"]
    batch_size: int = Field(default=config.TRAIN_DEFAULTS["batch_size"], ge=1)
    steps: int = Field(default=config.TRAIN_DEFAULTS["steps"], ge=0)
    clip_norm: float = config.TRAIN_DEFAULTS["clip_norm"]
    checkpoint_every: int = Field(default=config.TRAIN_DEFAULTS["checkpoint_every"], ge=0)
    eval_every: int = Field(default=config.TRAIN_DEFAULTS["eval_every"], ge=0)
    log_every: int = Field(default=config.TRAIN_DEFAULTS["log_every"], ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _check_masking(self) -> "TrainConfig":
        probs = (self.p_mask, self.p_rand, self.p_keep)
        if min(probs) < 0 or abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError(f"p_mask+p_rand+p_keep doit valoir 1, reçu {probs}")
        return self


def make_train_config(**fields: Any) -> TrainConfig:
    """Construit une TrainConfig ; les erreurs de validation deviennent des ConfigError."""
    try:
        return TrainConfig(**fields)
    except ValidationError as e:
        raise ConfigError(f"Configuration d'entraînement invalide : {e}") from e


class RngStreams:
    """Générateurs indépendants dérivés d'une graine : init, data, corruption, dropout, head."""

    def __init__(self, seed: int):
        self.seed = seed
        children = np.random.SeedSequence(seed).spawn(len(STREAMS))
        self._streams: Dict[str, np.random.Generator] = {
            name: np.random.default_rng(child) for name, child in zip(STREAMS, children)
        }

    def __getitem__(self, name: str) -> np.random.Generator:
        return self._streams[name]

    @property
    def init(self) -> np.random.Generator:
        return self._streams["init"]

    @property
    def data(self) -> np.random.Generator:
        return self._streams["data"]

    @property
    def corruption(self) -> np.random.Generator:
        return self._streams["corruption"]

    @property
    def dropout(self) -> np.random.Generator:
        return self._streams["dropout"]


def preset(name: str) -> Dict[str, Any]:
    """Préréglage grande échelle (documentation)."""
    try:
        return dict(config.PRESETS[name])
    except KeyError as e:
        raise ConfigError(f"Préréglage inconnu : {name} (disponibles : {sorted(config.PRESETS)})") from e
