#!/usr/bin/env python3
"""
Têtes de sortie : modèle de langue (liée aux embeddings), VQA et prétexte de région.
"""

from typing import Optional, Sequence

import numpy as np

from src.autodiff import ops
from src.autodiff.tensor import Tensor
from src.masking.attention import text_start
from src.model.weights import ModelWeights
from src.utils.errors import ConfigError


def _as_batched(H_L: Tensor) -> Tensor:
    return ops.reshape(H_L, (1,) + H_L.shape) if H_L.ndim == 2 else H_L


def lm_logits(H_L: Tensor, positions: Sequence[int], weights: ModelWeights,
              batch_index: Optional[Sequence[int]] = None) -> Tensor:
    """Logits sur le vocabulaire aux positions texte demandées.

    dense d→d + gelu + LayerNorm, puis projection par la table de tokens
    transposée et biais de sortie.

    Args:
        H_L (Tensor): États finaux (B, U, d) ou (U, d)
        positions (Sequence[int]): Indices de colonnes dans le bloc texte
        weights (ModelWeights): Poids
        batch_index (Sequence[int], optional): Élément du lot de chaque position (0 par défaut)

    Returns:
        Tensor: Logits (|positions|, vocab)

    Raises:
        IndexError: Si une position sort du bloc texte
    """
    H = _as_batched(H_L)
    U = H.shape[1]
    start = text_start(weights.config.N)
    cols = np.asarray(positions, dtype=np.int64).reshape(-1)
    bad = cols[(cols < start) | (cols >= U)]
    if bad.size:
        raise IndexError(f"Positions hors du bloc texte [{start}, {U - 1}] : {bad.tolist()}")
    rows = np.zeros_like(cols) if batch_index is None else np.asarray(batch_index, dtype=np.int64)
    selected = ops.index(H, (rows, cols))
    w = weights.tensors
    h = ops.gelu(ops.linear(selected, w["lm.dense.W"], w["lm.dense.b"]))
    h = ops.layer_norm(h, w["lm.ln.gain"], w["lm.ln.bias"], weights.config.layer_norm_eps)
    return ops.linear(h, w["emb.token"], w["lm.bias"])


def vqa_logits(H_L: Tensor, weights: ModelWeights) -> Tensor:
    """Logits pré-sigmoïde (B, k) : W₂·relu(W₁·(H[CLS] ⊙ H[SEP]) + b₁) + b₂."""
    H = _as_batched(H_L)
    sep = weights.config.N + 1
    z = ops.mul(ops.index(H, (slice(None), 0)), ops.index(H, (slice(None), sep)))
    w = weights.tensors
    hidden = ops.relu(ops.linear(z, w["vqa.W_1"], w["vqa.b_1"]))
    return ops.linear(hidden, w["vqa.W_2"], w["vqa.b_2"])


def vqa_scores(H_L: Tensor, weights: ModelWeights) -> Tensor:
    return ops.sigmoid(vqa_logits(H_L, weights))


def pretext_logits(H_L: Tensor, batch_index: Sequence[int], region_index: Sequence[int],
                   weights: ModelWeights) -> Tensor:
    """Logits de classe (P, l) aux colonnes des régions r_i (colonne 1+i)."""
    if not weights.config.region_pretext:
        raise ConfigError("La tête de prétexte de région est désactivée")
    H = _as_batched(H_L)
    cols = 1 + np.asarray(region_index, dtype=np.int64)
    selected = ops.index(H, (np.asarray(batch_index, dtype=np.int64), cols))
    return ops.linear(selected, weights["pretext.W"], weights["pretext.b"])
