#!/usr/bin/env python3
"""
Configuration typée de l'architecture.
"""

from typing import Any, Dict, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.data.vocab import RESERVED
from src.utils.errors import ConfigError
import config

TRUNK_FIELDS = ("layers", "d", "heads", "ffn", "vocab_size", "max_U", "N", "T", "d_in",
                "n_classes", "region_positional", "visual_sees_sep", "class_probs_as_input")


class ModelConfig(BaseModel):
    """Dimensions du transformer partagé et de ses têtes."""

    model_config = ConfigDict(extra="forbid")

    layers: int = Field(default=config.MODEL_DEFAULTS["layers"], ge=0)
    d: int = Field(default=config.MODEL_DEFAULTS["d"], ge=2)
    heads: int = Field(default=config.MODEL_DEFAULTS["heads"], ge=1)
    ffn: int = Field(default=config.MODEL_DEFAULTS["ffn"], ge=1)
    vocab_size: int = Field(default=64, gt=len(RESERVED))
    N: int = Field(default=config.MODEL_DEFAULTS["N"], ge=1)
    T: int = Field(default=config.MODEL_DEFAULTS["T"], ge=1)
    max_U: Optional[int] = None
    d_in: int = Field(default=config.MODEL_DEFAULTS["d_in"], ge=1)
    n_classes: int = Field(default=16, ge=1)
    n_answers: int = Field(default=config.MODEL_DEFAULTS["n_answers"], ge=1)
    vqa_hidden: int = Field(default=config.MODEL_DEFAULTS["vqa_hidden"], ge=1)
    dropout: float = Field(default=config.MODEL_DEFAULTS["dropout"], ge=0.0, lt=1.0)
    layer_norm_eps: float = Field(default=config.MODEL_DEFAULTS["layer_norm_eps"], ge=0.0)
    region_positional: Literal["global", "none"] = config.MODEL_DEFAULTS["region_positional"]
    visual_sees_sep: bool = config.MODEL_DEFAULTS["visual_sees_sep"]
    class_probs_as_input: bool = True
    region_pretext: bool = False

    @model_validator(mode="after")
    def _check_dimensions(self) -> "ModelConfig":
        if self.d % self.heads:
            raise ValueError(f"d={self.d} doit être divisible par heads={self.heads}")
        if self.d % 2:
            raise ValueError(f"d={self.d} doit être pair (branches C et G de largeur d/2)")
        if self.ffn < self.d:
            raise ValueError(f"ffn={self.ffn} doit être >= d={self.d}")
        if self.region_pretext and self.class_probs_as_input:
            raise ValueError("region_pretext et class_probs_as_input sont mutuellement exclusifs")
        if self.max_U is None:
            self.max_U = self.U
        return self

    @property
    def U(self) -> int:
        return self.N + self.T + 3

    @property
    def head_dim(self) -> int:
        return self.d // self.heads

    @property
    def branch_width(self) -> int:
        return self.d // 2


def make_model_config(**fields: Any) -> ModelConfig:
    """Construit une ModelConfig ; les erreurs de validation deviennent des ConfigError."""
    try:
        return ModelConfig(**fields)
    except ValidationError as e:
        raise ConfigError(f"Configuration du modèle invalide : {e}") from e


def trunk_mismatches(a: ModelConfig, b: ModelConfig) -> Dict[str, tuple]:
    """Champs du tronc qui diffèrent entre deux configurations."""
    return {name: (getattr(a, name), getattr(b, name))
            for name in TRUNK_FIELDS if getattr(a, name) != getattr(b, name)}
