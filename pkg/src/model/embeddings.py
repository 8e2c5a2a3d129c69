#!/usr/bin/env python3
"""
Construction de la séquence d'entrée H⁰ : régions, tokens spéciaux et texte.

H⁰ est stocké en (B, U, d) ; la ligne j correspond à la colonne j de la notation d×U.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from src.autodiff import ops
from src.autodiff.tensor import Tensor
from src.data.scene import Region, SceneExample, collate
from src.data.vocab import CLS_ID, SEP_ID
from src.masking.attention import sequence_length, text_start
from src.masking.schedule import Objective
from src.model.settings import ModelConfig
from src.model.weights import EmbeddingTables
from src.utils.errors import ConfigError, ShapeError

VISUAL, TEXT = 0, 1


@dataclass
class InputSequence:
    """Entrée assemblée d'un lot : H0 (B, U, d) et identifiants texte alignés (B, T+1)."""

    H0: Tensor
    U: int
    text_start: int
    token_ids: np.ndarray
    region_count: int
    objective: Objective

    @property
    def batch_size(self) -> int:
        return self.H0.shape[0]


def segment_row(objective: Objective, modality: int) -> int:
    return Objective(objective).index * 2 + modality


def _check_region_shapes(features: np.ndarray, class_probs: np.ndarray, geometry: np.ndarray,
                         tables: EmbeddingTables) -> None:
    expected = {
        "features": (features.shape[-1], tables.W_r.shape[1]),
        "class_probs": (class_probs.shape[-1], tables.W_c.shape[1]),
        "geometry": (geometry.shape[-1], tables.W_g.shape[1]),
    }
    for name, (found, wanted) in expected.items():
        if found != wanted:
            raise ShapeError(f"Région : {name} de taille {found}, la table attend {wanted}")


def embed_regions(features: np.ndarray, class_probs: np.ndarray, geometry: np.ndarray,
                  tables: EmbeddingTables, eps: float = 1e-12) -> Tensor:
    """r = W_r R + W_p [LayerNorm(W_c C) | LayerNorm(W_g G)], sans biais ni non-linéarité.

    Accepte n'importe quelles dimensions de tête (par exemple (B, N, ·)).
    """
    features = np.asarray(features, dtype=np.float64)
    class_probs = np.asarray(class_probs, dtype=np.float64)
    geometry = np.asarray(geometry, dtype=np.float64)
    _check_region_shapes(features, class_probs, geometry, tables)
    c = ops.layer_norm(ops.linear(Tensor(class_probs), tables.W_c), tables.ln_c_gain, tables.ln_c_bias, eps)
    g = ops.layer_norm(ops.linear(Tensor(geometry), tables.W_g), tables.ln_g_gain, tables.ln_g_bias, eps)
    branches = ops.concat([c, g], axis=-1)
    return ops.add(ops.linear(Tensor(features), tables.W_r), ops.linear(branches, tables.W_p))


def embed_region(region: Region, tables: EmbeddingTables, eps: float = 1e-12) -> Tensor:
    """Embedding d'une seule région (vecteur de taille d)."""
    return embed_regions(region.features, region.class_probs, region.geometry, tables, eps)


def assemble_batch(regions: Dict[str, np.ndarray], text_ids: np.ndarray, objective: Objective,
                   tables: EmbeddingTables, cfg: ModelConfig) -> InputSequence:
    """Assemble [CLS], r_1..r_N, [SEP], y_1..y_T, [STOP] pour un lot.

    Args:
        regions (Dict[str, np.ndarray]): features (B,N,d_in), class_probs (B,N,l), geometry (B,N,5)
        text_ids (np.ndarray): Emplacements texte (B, T+1)
        objective (Objective): Choisit les lignes de la table de segments
        tables (EmbeddingTables): Tables d'embeddings
        cfg (ModelConfig): Configuration

    Returns:
        InputSequence: H0 de forme (B, U, d)

    Raises:
        ShapeError: Si le texte n'a pas T+1 emplacements
        ConfigError: Si U dépasse la table de positions
    """
    objective = Objective(objective)
    text_ids = np.asarray(text_ids, dtype=np.int64)
    if text_ids.ndim != 2 or text_ids.shape[1] != cfg.T + 1:
        raise ShapeError(f"Le texte doit avoir T+1={cfg.T + 1} emplacements (T={cfg.T}), "
                         f"forme reçue {text_ids.shape}")
    B = text_ids.shape[0]
    N = regions["features"].shape[1]
    if N != cfg.N:
        raise ShapeError(f"Nombre de régions {N} différent de N={cfg.N}")
    U = sequence_length(N, cfg.T)
    if U > tables.position.shape[0]:
        raise ConfigError(f"U={U} dépasse max_U={tables.position.shape[0]}")

    class_probs = regions["class_probs"]
    if not cfg.class_probs_as_input:
        class_probs = np.zeros_like(class_probs)
    region_rows = embed_regions(regions["features"], class_probs, regions["geometry"],
                                tables, cfg.layer_norm_eps)
    cls = ops.embedding(tables.token, np.full((B, 1), CLS_ID))
    sep = ops.embedding(tables.token, np.full((B, 1), SEP_ID))
    text = ops.embedding(tables.token, text_ids)
    tokens = ops.concat([cls, region_rows, sep, text], axis=1)

    start = text_start(N)
    position_scale = np.ones((U, 1))
    if cfg.region_positional == "none":
        position_scale[1:N + 1] = 0.0
    positions = ops.mul(ops.embedding(tables.position, np.arange(U)), position_scale)

    modality = np.full(U, TEXT)
    modality[:N + 1] = VISUAL
    segments = ops.embedding(tables.segment, objective.index * 2 + modality)

    H0 = ops.add(ops.add(tokens, positions), segments)
    return InputSequence(H0=H0, U=U, text_start=start, token_ids=text_ids,
                         region_count=N, objective=objective)


def assemble_input(scene: SceneExample, text_ids: Sequence[int], objective: Objective,
                   tables: EmbeddingTables, cfg: ModelConfig) -> InputSequence:
    """Assemble l'entrée d'une seule scène (lot de taille 1)."""
    text_ids = np.asarray(text_ids, dtype=np.int64)
    if text_ids.ndim != 1 or text_ids.shape[0] != cfg.T + 1:
        raise ShapeError(f"Le texte doit avoir T+1={cfg.T + 1} emplacements (T={cfg.T}), "
                         f"longueur reçue {text_ids.shape}")
    return assemble_batch(collate([scene]), text_ids[None, :], objective, tables, cfg)


def assemble_scenes(scenes: Sequence[SceneExample], text_ids: np.ndarray, objective: Objective,
                    tables: EmbeddingTables, cfg: ModelConfig,
                    zero_regions: Optional[np.ndarray] = None) -> InputSequence:
    """Assemble un lot de scènes ; `zero_regions` (B, N) annule les caractéristiques choisies."""
    regions = collate(list(scenes))
    if zero_regions is not None:
        regions["features"] = np.where(zero_regions[..., None], 0.0, regions["features"])
    return assemble_batch(regions, text_ids, objective, tables, cfg)
