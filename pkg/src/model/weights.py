#!/usr/bin/env python3
"""
Paramètres apprenables : tables d'embeddings, couches, têtes LM, VQA et prétexte.
"""

from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from src.autodiff.tensor import Tensor
from src.model.settings import ModelConfig
from src.utils.logger import get_logger

logger = get_logger(__name__)

INIT_STD = 0.02
N_SEGMENTS = 4
GEOMETRY_SIZE = 5


@dataclass
class EmbeddingTables:
    """Projections de l'équation des régions et tables token/position/segment."""

    W_r: Tensor
    W_c: Tensor
    W_g: Tensor
    W_p: Tensor
    ln_c_gain: Tensor
    ln_c_bias: Tensor
    ln_g_gain: Tensor
    ln_g_bias: Tensor
    token: Tensor
    position: Tensor
    segment: Tensor

    @property
    def d(self) -> int:
        return self.W_r.shape[0]


@dataclass
class LayerWeights:
    W_Q: Tensor
    W_K: Tensor
    W_V: Tensor
    W_O: Tensor
    W_1: Tensor
    b_1: Tensor
    W_2: Tensor
    b_2: Tensor
    ln1_gain: Tensor
    ln1_bias: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor


def parameter_shapes(cfg: ModelConfig) -> "OrderedDict[str, Tuple[Tuple[int, ...], str]]":
    """Forme et mode d'initialisation (normal, zeros, ones) de chaque paramètre, dans l'ordre."""
    d, h = cfg.d, cfg.branch_width
    shapes: "OrderedDict[str, Tuple[Tuple[int, ...], str]]" = OrderedDict()
    shapes["emb.W_r"] = ((d, cfg.d_in), "normal")
    shapes["emb.W_c"] = ((h, cfg.n_classes), "normal")
    shapes["emb.W_g"] = ((h, GEOMETRY_SIZE), "normal")
    shapes["emb.W_p"] = ((d, 2 * h), "normal")
    shapes["emb.ln_c.gain"] = ((h,), "ones")
    shapes["emb.ln_c.bias"] = ((h,), "zeros")
    shapes["emb.ln_g.gain"] = ((h,), "ones")
    shapes["emb.ln_g.bias"] = ((h,), "zeros")
    shapes["emb.token"] = ((cfg.vocab_size, d), "normal")
    shapes["emb.position"] = ((cfg.max_U, d), "normal")
    shapes["emb.segment"] = ((N_SEGMENTS, d), "normal")
    for i in range(cfg.layers):
        p = f"layer{i}."
        for name in ("W_Q", "W_K", "W_V", "W_O"):
            shapes[p + name] = ((d, d), "normal")
        shapes[p + "W_1"] = ((cfg.ffn, d), "normal")
        shapes[p + "b_1"] = ((cfg.ffn,), "zeros")
        shapes[p + "W_2"] = ((d, cfg.ffn), "normal")
        shapes[p + "b_2"] = ((d,), "zeros")
        shapes[p + "ln1.gain"] = ((d,), "ones")
        shapes[p + "ln1.bias"] = ((d,), "zeros")
        shapes[p + "ln2.gain"] = ((d,), "ones")
        shapes[p + "ln2.bias"] = ((d,), "zeros")
    shapes["lm.dense.W"] = ((d, d), "normal")
    shapes["lm.dense.b"] = ((d,), "zeros")
    shapes["lm.ln.gain"] = ((d,), "ones")
    shapes["lm.ln.bias"] = ((d,), "zeros")
    shapes["lm.bias"] = ((cfg.vocab_size,), "zeros")
    shapes["vqa.W_1"] = ((cfg.vqa_hidden, d), "normal")
    shapes["vqa.b_1"] = ((cfg.vqa_hidden,), "zeros")
    shapes["vqa.W_2"] = ((cfg.n_answers, cfg.vqa_hidden), "normal")
    shapes["vqa.b_2"] = ((cfg.n_answers,), "zeros")
    if cfg.region_pretext:
        shapes["pretext.W"] = ((cfg.n_classes, d), "normal")
        shapes["pretext.b"] = ((cfg.n_classes,), "zeros")
    return shapes


def _init_array(shape: Tuple[int, ...], mode: str, rng: np.random.Generator) -> np.ndarray:
    if mode == "normal":
        return rng.normal(0.0, INIT_STD, size=shape)
    if mode == "ones":
        return np.ones(shape)
    return np.zeros(shape)


class ModelWeights:
    """Ensemble nommé et ordonné des tenseurs du modèle."""

    def __init__(self, cfg: ModelConfig, tensors: "OrderedDict[str, Tensor]"):
        self.config = cfg
        self.tensors = tensors

    @classmethod
    def initialize(cls, cfg: ModelConfig, rng: np.random.Generator) -> "ModelWeights":
        """Initialisation BERT : N(0, 0.02) pour les matrices, 1 pour les gains, 0 pour les biais."""
        tensors = OrderedDict()
        for name, (shape, mode) in parameter_shapes(cfg).items():
            tensors[name] = Tensor(_init_array(shape, mode, rng), requires_grad=True, name=name)
        logger.debug(f"Poids initialisés : {len(tensors)} tenseurs, "
                     f"{sum(t.size for t in tensors.values())} paramètres")
        return cls(cfg, tensors)

    @classmethod
    def from_arrays(cls, cfg: ModelConfig, arrays: Dict[str, np.ndarray]) -> "ModelWeights":
        tensors = OrderedDict(
            (name, Tensor(arrays[name], requires_grad=True, name=name)) for name in parameter_shapes(cfg)
        )
        return cls(cfg, tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def items(self):
        return self.tensors.items()

    def names(self, prefix: Optional[str] = None) -> List[str]:
        return [n for n in self.tensors if prefix is None or n.startswith(prefix)]

    def arrays(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((n, t.data) for n, t in self.tensors.items())

    def copy(self) -> "ModelWeights":
        """Copie indépendante (instantané figé pour l'évaluation concurrente)."""
        return ModelWeights.from_arrays(self.config, {n: t.data.copy() for n, t in self.tensors.items()})

    def reinitialize(self, prefix: str, rng: np.random.Generator) -> None:
        """Réinitialise en place les tenseurs dont le nom commence par `prefix`."""
        for name, (shape, mode) in parameter_shapes(self.config).items():
            if name.startswith(prefix):
                self.tensors[name].data = _init_array(shape, mode, rng)
                self.tensors[name].zero_grad()

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    @property
    def tables(self) -> EmbeddingTables:
        t = self.tensors
        return EmbeddingTables(
            W_r=t["emb.W_r"], W_c=t["emb.W_c"], W_g=t["emb.W_g"], W_p=t["emb.W_p"],
            ln_c_gain=t["emb.ln_c.gain"], ln_c_bias=t["emb.ln_c.bias"],
            ln_g_gain=t["emb.ln_g.gain"], ln_g_bias=t["emb.ln_g.bias"],
            token=t["emb.token"], position=t["emb.position"], segment=t["emb.segment"],
        )

    def layer(self, i: int) -> LayerWeights:
        t, p = self.tensors, f"layer{i}."
        return LayerWeights(
            W_Q=t[p + "W_Q"], W_K=t[p + "W_K"], W_V=t[p + "W_V"], W_O=t[p + "W_O"],
            W_1=t[p + "W_1"], b_1=t[p + "b_1"], W_2=t[p + "W_2"], b_2=t[p + "b_2"],
            ln1_gain=t[p + "ln1.gain"], ln1_bias=t[p + "ln1.bias"],
            ln2_gain=t[p + "ln2.gain"], ln2_bias=t[p + "ln2.bias"],
        )
