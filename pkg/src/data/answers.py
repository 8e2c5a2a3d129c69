#!/usr/bin/env python3
"""
Vocabulaire de réponses VQA (k réponses les plus fréquentes).
"""

from collections import Counter
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

from src.data.scene import QAPair, SceneExample
from src.utils.logger import get_logger

logger = get_logger(__name__)


@dataclass
class AnswerVocab:
    """Réponses retenues, dans l'ordre de leurs identifiants."""

    answers: List[str]

    def __post_init__(self):
        self.index: Dict[str, int] = {a: i for i, a in enumerate(self.answers)}

    def __len__(self) -> int:
        return len(self.answers)


def build_answer_vocab(examples: Sequence[SceneExample], k: int,
                       source_answers: Optional[Sequence[str]] = None
                       ) -> Tuple[AnswerVocab, List[SceneExample]]:
    """Retient les k réponses les plus fréquentes et réétiquette les questions.

    Les égalités de fréquence sont départagées dans l'ordre lexicographique. Les
    étiquettes souples sont transportées vers le nouveau vocabulaire : la masse
    d'une réponse retenue est conservée, celle d'une réponse écartée est perdue.

    Args:
        examples (Sequence[SceneExample]): Scènes avec questions
        k (int): Nombre de réponses à retenir
        source_answers (Sequence[str], optional): Réponses indexées par les étiquettes
            souples actuelles ; sans elles, l'étiquette est refaite en one-hot

    Returns:
        Tuple[AnswerVocab, List[SceneExample]]: Vocabulaire et scènes réétiquetées
    """
    if k < 1:
        raise ValueError(f"k doit être >= 1, reçu {k}")
    counts = Counter(qa.answer for ex in examples for qa in ex.qa)
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    if len(ranked) < k:
        logger.warning(f"Seulement {len(ranked)} réponses distinctes pour k={k} : toutes retenues")
    vocab = AnswerVocab([answer for answer, _ in ranked[:k]])

    relabeled = []
    for ex in examples:
        qa_pairs = [_relabel(qa, vocab, source_answers) for qa in ex.qa]
        relabeled.append(replace(ex, qa=qa_pairs))
    return vocab, relabeled


def _relabel(qa: QAPair, vocab: AnswerVocab, source_answers: Optional[Sequence[str]]) -> QAPair:
    soft = [0.0] * len(vocab)
    if source_answers is not None and len(qa.soft_label) == len(source_answers):
        for old_index, value in enumerate(qa.soft_label):
            new_index = vocab.index.get(source_answers[old_index])
            if new_index is not None:
                soft[new_index] = value
    elif qa.answer in vocab.index:
        soft[vocab.index[qa.answer]] = 1.0
    return replace(qa, answer_id=vocab.index.get(qa.answer, -1), soft_label=soft)


def relabel(examples: Sequence[SceneExample], vocab: AnswerVocab,
            source_answers: Optional[Sequence[str]] = None) -> List[SceneExample]:
    """Réétiquette des scènes (par exemple la validation) avec un vocabulaire existant."""
    return [replace(ex, qa=[_relabel(qa, vocab, source_answers) for qa in ex.qa]) for ex in examples]
