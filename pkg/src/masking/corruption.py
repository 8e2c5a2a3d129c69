#!/usr/bin/env python3
"""
Corruption des tokens façon BERT (15 %, puis 80 % [MASK] / 10 % aléatoire / 10 % inchangé).
"""

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from src.data.vocab import CLS_ID, PAD_ID, SEP_ID, MASK_ID, Vocab
from src.utils.errors import ConfigError, DegenerateInputError
from src.utils.logger import get_logger

logger = get_logger(__name__)

REPLACE_MASK = "mask"
REPLACE_RANDOM = "random"
REPLACE_KEEP = "keep"

UNMASKABLE = (CLS_ID, SEP_ID, PAD_ID)


@dataclass
class CorruptionPlan:
    """Positions texte sélectionnées, remplacement appliqué et identifiants d'origine."""

    masked_positions: List[int] = field(default_factory=list)
    replacement: List[str] = field(default_factory=list)
    original_ids: List[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.masked_positions)


def maskable_positions(text_ids: Sequence[int]) -> np.ndarray:
    """Positions éligibles : tout sauf [CLS], [SEP] et [PAD] ([STOP] est masquable)."""
    ids = np.asarray(text_ids)
    return np.flatnonzero(~np.isin(ids, UNMASKABLE))


def validate_rates(rate: float, p_mask: float, p_rand: float, p_keep: float) -> None:
    if not 0.0 < rate <= 1.0:
        raise ConfigError(f"Le taux de masquage doit être dans (0, 1], reçu {rate}")
    if min(p_mask, p_rand, p_keep) < 0 or abs(p_mask + p_rand + p_keep - 1.0) > 1e-9:
        raise ConfigError(f"p_mask+p_rand+p_keep doit valoir 1, reçu {p_mask}+{p_rand}+{p_keep}")


def corrupt_tokens(text_ids: Sequence[int], rng: np.random.Generator, rate: float, p_mask: float,
                   p_rand: float, p_keep: float, vocab: Vocab,
                   strict: bool = False) -> Tuple[np.ndarray, CorruptionPlan]:
    """Corrompt une séquence de tokens texte.

    Tirages, dans l'ordre : un uniforme par position éligible (sélection, répété
    tant que rien n'est sélectionné sauf en mode strict), un uniforme par position
    sélectionnée (type de remplacement), puis un entier par remplacement aléatoire
    dans le vocabulaire non réservé.

    Args:
        text_ids (Sequence[int]): Identifiants texte
        rng (np.random.Generator): Générateur dédié à la corruption
        rate (float): Probabilité de sélection par position
        p_mask (float): Part des sélections remplacées par [MASK]
        p_rand (float): Part remplacée par un token aléatoire
        p_keep (float): Part laissée inchangée
        vocab (Vocab): Vocabulaire
        strict (bool): Sélection strictement indépendante (plan éventuellement vide)

    Returns:
        Tuple[np.ndarray, CorruptionPlan]: Identifiants corrompus et plan

    Raises:
        DegenerateInputError: Si aucune position n'est masquable
    """
    validate_rates(rate, p_mask, p_rand, p_keep)
    ids = np.asarray(text_ids, dtype=np.int64)
    candidates = maskable_positions(ids)
    if candidates.size == 0:
        raise DegenerateInputError("Aucune position masquable (texte entièrement [PAD])")

    while True:
        selected = candidates[rng.random(candidates.size) < rate]
        if selected.size or strict:
            break

    corrupted = ids.copy()
    u = rng.random(selected.size)
    kinds = np.where(u < p_mask, 0, np.where(u < p_mask + p_rand, 1, 2))
    regular = vocab.regular_ids
    random_tokens = rng.integers(regular.start, regular.stop, size=int((kinds == 1).sum()))

    plan = CorruptionPlan(original_ids=[int(ids[p]) for p in selected],
                          masked_positions=[int(p) for p in selected])
    r = 0
    for position, kind in zip(selected, kinds):
        if kind == 0:
            corrupted[position] = MASK_ID
            plan.replacement.append(REPLACE_MASK)
        elif kind == 1:
            corrupted[position] = random_tokens[r]
            r += 1
            plan.replacement.append(REPLACE_RANDOM)
        else:
            plan.replacement.append(REPLACE_KEEP)
    return corrupted, plan
