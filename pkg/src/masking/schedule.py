#!/usr/bin/env python3
"""
Objectifs de pré-entraînement et alternance par batch selon lambda.
"""

from enum import Enum
from fractions import Fraction

from src.utils.errors import ConfigError
from src.utils.logger import get_logger

logger = get_logger(__name__)


class Objective(str, Enum):
    """Objectif de modélisation ; seul le masque d'attention les distingue."""

    SEQ2SEQ = "seq2seq"
    BIDIRECTIONAL = "bidirectional"

    @property
    def index(self) -> int:
        """Rang de l'objectif dans la table de segments (seq2seq=0, bidirectionnel=1)."""
        return 0 if self is Objective.SEQ2SEQ else 1


class ObjectiveSchedule:
    """Accumulateur fractionnaire déterministe.

    Sur toute fenêtre de n appels, le nombre de batches seq2seq vaut
    floor(n*lambda) ou ceil(n*lambda).
    """

    def __init__(self, lam: float):
        if not 0.0 <= float(lam) <= 1.0:
            raise ConfigError(f"lambda doit être dans [0, 1], reçu {lam}")
        self.lam = Fraction(lam).limit_denominator(10**6)
        self.accumulator = self.lam
        self.calls = 0
        self.seq2seq_count = 0

    def next(self) -> Objective:
        self.calls += 1
        self.accumulator += self.lam
        if self.accumulator >= 1:
            self.accumulator -= 1
            self.seq2seq_count += 1
            return Objective.SEQ2SEQ
        return Objective.BIDIRECTIONAL

    @property
    def seq2seq_fraction(self) -> float:
        return self.seq2seq_count / self.calls if self.calls else 0.0


def next_objective(schedule: ObjectiveSchedule) -> Objective:
    return schedule.next()
