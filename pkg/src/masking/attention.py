#!/usr/bin/env python3
"""
Masques d'attention U×U des deux objectifs.

Disposition des colonnes : [CLS] (0), régions 1..N, [SEP] (N+1), puis T+1
emplacements texte (mots et [STOP]) de N+2 à U-1, avec U = N+T+3.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np

from src.data.vocab import PAD_ID
from src.masking.schedule import Objective
from src.utils.errors import InvalidMaskError
from src.utils.logger import get_logger

logger = get_logger(__name__)

PadPattern = Tuple[bool, ...]


@dataclass(frozen=True)
class AttentionMask:
    """Matrice booléenne : allow[j, k] vrai si la requête j peut lire la clé k."""

    allow: np.ndarray

    def __post_init__(self):
        if not self.allow.any(axis=-1).all():
            raise InvalidMaskError("Chaque ligne du masque doit autoriser au moins une colonne")

    @property
    def U(self) -> int:
        return self.allow.shape[-1]


def sequence_length(N: int, T: int) -> int:
    return N + T + 3


def text_start(N: int) -> int:
    """Index de la première position texte (juste après [SEP])."""
    return N + 2


def _normalize_pad(T: int, pad: Optional[Sequence[bool]]) -> PadPattern:
    if pad is None:
        return (False,) * (T + 1)
    pad = tuple(bool(p) for p in pad)
    if len(pad) != T + 1:
        raise ValueError(f"Le motif de remplissage doit couvrir T+1={T + 1} emplacements, reçu {len(pad)}")
    return pad


def pad_pattern(text_ids: Sequence[int]) -> PadPattern:
    return tuple(int(i) == PAD_ID for i in text_ids)


def _pad_columns(N: int, T: int, pad: PadPattern) -> np.ndarray:
    columns = np.zeros(sequence_length(N, T), dtype=bool)
    columns[text_start(N):] = pad
    return columns


def _freeze(allow: np.ndarray) -> np.ndarray:
    allow.setflags(write=False)
    return allow


@lru_cache(maxsize=1024)
def _bidirectional(N: int, T: int, pad: PadPattern) -> np.ndarray:
    U = sequence_length(N, T)
    allow = np.ones((U, U), dtype=bool)
    allow[:, _pad_columns(N, T, pad)] = False
    return _freeze(allow)


@lru_cache(maxsize=1024)
def _seq2seq(N: int, T: int, pad: PadPattern, visual_sees_sep: bool) -> np.ndarray:
    U = sequence_length(N, T)
    sep = N + 1
    start = text_start(N)
    allow = np.zeros((U, U), dtype=bool)
    # Bloc visuel ([CLS] et régions)
    allow[:sep, :sep] = True
    if visual_sees_sep:
        allow[:sep, sep] = True
    # [SEP] et texte : V ∪ {[SEP]} ∪ texte à gauche (inclus)
    allow[sep:, :sep + 1] = True
    allow[start:, start:] = np.tril(np.ones((T + 1, T + 1), dtype=bool))
    allow[:, _pad_columns(N, T, pad)] = False
    return _freeze(allow)


def build_bidirectional_mask(N: int, T: int, pad: Optional[Sequence[bool]] = None) -> AttentionMask:
    """Attention sans restriction, sauf vers les colonnes [PAD].

    Args:
        N (int): Nombre de régions
        T (int): Longueur du texte
        pad (Sequence[bool], optional): Motif de remplissage sur les T+1 emplacements texte

    Returns:
        AttentionMask: Masque (N+T+3)×(N+T+3)
    """
    if N < 1 or T < 1:
        raise ValueError(f"N et T doivent être >= 1, reçus N={N}, T={T}")
    return AttentionMask(_bidirectional(N, T, _normalize_pad(T, pad)))


def build_seq2seq_mask(N: int, T: int, pad: Optional[Sequence[bool]] = None,
                       visual_sees_sep: bool = True) -> AttentionMask:
    """Masque auto-régressif : le visuel ne voit jamais le texte, le texte voit sa gauche.

    Args:
        N (int): Nombre de régions
        T (int): Longueur du texte
        pad (Sequence[bool], optional): Motif de remplissage sur les T+1 emplacements texte
        visual_sees_sep (bool): Le bloc visuel peut lire [SEP]

    Returns:
        AttentionMask: Masque (N+T+3)×(N+T+3)
    """
    if N < 1 or T < 1:
        raise ValueError(f"N et T doivent être >= 1, reçus N={N}, T={T}")
    return AttentionMask(_seq2seq(N, T, _normalize_pad(T, pad), bool(visual_sees_sep)))


def build_mask(objective: Objective, N: int, T: int, pad: Optional[Sequence[bool]] = None,
               visual_sees_sep: bool = True) -> AttentionMask:
    if Objective(objective) is Objective.SEQ2SEQ:
        return build_seq2seq_mask(N, T, pad, visual_sees_sep)
    return build_bidirectional_mask(N, T, pad)


def batch_masks(objective: Objective, N: int, T: int, text_ids: np.ndarray,
                visual_sees_sep: bool = True) -> np.ndarray:
    """Empile les masques d'un lot d'emplacements texte (B, T+1) en (B, U, U)."""
    return np.stack([
        build_mask(objective, N, T, pad_pattern(row), visual_sees_sep).allow
        for row in np.asarray(text_ids)
    ])
