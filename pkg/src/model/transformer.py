#!/usr/bin/env python3
"""
Transformer partagé : attention multi-têtes masquée et blocs résiduels post-norm.
"""

import math
from typing import List, Optional, Tuple, Union

import numpy as np

from src.autodiff import ops
from src.autodiff.tensor import Tensor
from src.masking.attention import AttentionMask
from src.model.embeddings import InputSequence
from src.model.settings import ModelConfig
from src.model.weights import LayerWeights, ModelWeights
from src.utils.errors import ConfigError, ShapeError
from src.utils.logger import get_logger

logger = get_logger(__name__)

MaskLike = Union[AttentionMask, np.ndarray]


def _allow(mask: MaskLike) -> np.ndarray:
    allow = mask.allow if isinstance(mask, AttentionMask) else np.asarray(mask, dtype=bool)
    # (U, U) -> (1, 1, U, U) ; (B, U, U) -> (B, 1, U, U)
    return allow[None, None] if allow.ndim == 2 else allow[:, None]


def masked_self_attention(H: Tensor, mask: MaskLike, weights: LayerWeights, heads: int,
                          return_weights: bool = False) -> Union[Tensor, Tuple[Tensor, Tensor]]:
    """Attention multi-têtes : softmax_masqué(Q Kᵀ / sqrt(d/heads)) V, puis projection W_O.

    Args:
        H (Tensor): États (B, U, d) ou (U, d)
        mask (AttentionMask | np.ndarray): Masque (U, U) ou (B, U, U)
        weights (LayerWeights): Poids de la couche
        heads (int): Nombre de têtes
        return_weights (bool): Retourner aussi les poids d'attention (B, heads, U, U)

    Returns:
        Tensor: Sortie de même forme que H
    """
    squeeze = H.ndim == 2
    if squeeze:
        H = ops.reshape(H, (1,) + H.shape)
    B, U, d = H.shape
    if d % heads:
        raise ShapeError(f"d={d} n'est pas divisible par heads={heads}")
    allow = _allow(mask)
    if allow.shape[-1] != U or allow.shape[-2] != U:
        raise ShapeError(f"Masque {allow.shape[-2:]} incompatible avec U={U}")
    dk = d // heads

    def split(x: Tensor) -> Tensor:
        return ops.transpose(ops.reshape(x, (B, U, heads, dk)), (0, 2, 1, 3))

    Q = split(ops.linear(H, weights.W_Q))
    K = split(ops.linear(H, weights.W_K))
    V = split(ops.linear(H, weights.W_V))
    scores = ops.mul(ops.matmul(Q, ops.transpose(K, (0, 1, 3, 2))), 1.0 / math.sqrt(dk))
    A = ops.masked_softmax(scores, allow)
    context = ops.reshape(ops.transpose(ops.matmul(A, V), (0, 2, 1, 3)), (B, U, d))
    out = ops.linear(context, weights.W_O)
    if squeeze:
        out = ops.reshape(out, (U, d))
    return (out, A) if return_weights else out


def feed_forward(x: Tensor, weights: LayerWeights) -> Tensor:
    return ops.linear(ops.gelu(ops.linear(x, weights.W_1, weights.b_1)), weights.W_2, weights.b_2)


def transformer_block(H: Tensor, mask: MaskLike, weights: LayerWeights, cfg: ModelConfig,
                      rng: Optional[np.random.Generator] = None,
                      attention: Optional[List[Tensor]] = None) -> Tensor:
    """H' = LN(H + Attn(H)) ; sortie = LN(H' + FFN(H')).

    Le dropout n'est actif que si un générateur est fourni.
    """
    attn, weights_A = masked_self_attention(H, mask, weights, cfg.heads, return_weights=True)
    if attention is not None:
        attention.append(weights_A)
    attn = ops.dropout(attn, cfg.dropout, rng)
    H1 = ops.layer_norm(ops.add(H, attn), weights.ln1_gain, weights.ln1_bias, cfg.layer_norm_eps)
    ff = ops.dropout(feed_forward(H1, weights), cfg.dropout, rng)
    return ops.layer_norm(ops.add(H1, ff), weights.ln2_gain, weights.ln2_bias, cfg.layer_norm_eps)


def forward(inp: InputSequence, mask: MaskLike, weights: ModelWeights, cfg: Optional[ModelConfig] = None,
            rng: Optional[np.random.Generator] = None,
            return_attention: bool = False) -> Union[Tensor, Tuple[Tensor, List[Tensor]]]:
    """Applique les L blocs à H⁰.

    Args:
        inp (InputSequence): Entrée assemblée
        mask (AttentionMask | np.ndarray): Masque (U, U) ou (B, U, U)
        weights (ModelWeights): Poids
        cfg (ModelConfig, optional): Configuration (celle des poids par défaut)
        rng (np.random.Generator, optional): Générateur de dropout (entraînement uniquement)
        return_attention (bool): Retourner aussi les poids d'attention de chaque couche

    Returns:
        Tensor: H^L (B, U, d)

    Raises:
        ConfigError: Si U dépasse max_U
    """
    cfg = cfg or weights.config
    if inp.U > cfg.max_U:
        raise ConfigError(f"U={inp.U} dépasse max_U={cfg.max_U}")
    H = inp.H0
    attention: List[Tensor] = []
    for i in range(cfg.layers):
        H = transformer_block(H, mask, weights.layer(i), cfg, rng, attention)
    return (H, attention) if return_attention else H
