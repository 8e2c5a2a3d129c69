#!/usr/bin/env python3
"""
Métriques : BLEU@4 au niveau du corpus et précision VQA par étiquette souple.
"""

import math
from collections import Counter
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.utils.errors import ShapeError

Sentence = Union[str, Sequence[str]]
MAX_ORDER = 4


def _tokens(sentence: Sentence) -> List[str]:
    return sentence.split() if isinstance(sentence, str) else [str(t) for t in sentence]


def _ngrams(tokens: List[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def clipped_counts(hypothesis: Sentence, references: Sequence[Sentence], n: int) -> Tuple[int, int]:
    """(n-grammes de l'hypothèse présents dans une référence, avec écrêtage ; total de n-grammes)."""
    hyp = _ngrams(_tokens(hypothesis), n)
    max_ref: Counter = Counter()
    for ref in references:
        for gram, count in _ngrams(_tokens(ref), n).items():
            max_ref[gram] = max(max_ref[gram], count)
    matched = sum(min(count, max_ref[gram]) for gram, count in hyp.items())
    return matched, sum(hyp.values())


def _closest_ref_length(hyp_len: int, references: Sequence[Sentence]) -> int:
    lengths = [len(_tokens(r)) for r in references]
    return min(lengths, key=lambda r: (abs(r - hyp_len), r))


def bleu4(hypotheses: Sequence[Sentence], references: Sequence[Sequence[Sentence]]) -> float:
    """BLEU@4 corpus : moyenne géométrique des précisions écrêtées n=1..4 et pénalité de brièveté.

    Une précision nulle est lissée en (0+1)/(total+1).

    Args:
        hypotheses (Sequence[Sentence]): Hypothèses (chaînes ou listes de tokens)
        references (Sequence[Sequence[Sentence]]): Une ou plusieurs références par hypothèse

    Returns:
        float: Score dans [0, 1]

    Raises:
        ValueError: Si le corpus est vide
        ShapeError: Si les nombres d'hypothèses et de références diffèrent
    """
    if len(hypotheses) != len(references):
        raise ShapeError(f"{len(hypotheses)} hypothèses pour {len(references)} listes de références")
    if not hypotheses:
        raise ValueError("Corpus vide")
    matched = np.zeros(MAX_ORDER)
    totals = np.zeros(MAX_ORDER)
    hyp_len = ref_len = 0
    for hyp, refs in zip(hypotheses, references):
        if isinstance(refs, str):
            refs = [refs]
        if not refs:
            raise ValueError("Chaque hypothèse doit avoir au moins une référence")
        length = len(_tokens(hyp))
        hyp_len += length
        ref_len += _closest_ref_length(length, refs)
        for n in range(1, MAX_ORDER + 1):
            m, t = clipped_counts(hyp, refs, n)
            matched[n - 1] += m
            totals[n - 1] += t
    if hyp_len == 0:
        return 0.0
    smoothed = matched == 0
    precisions = np.where(smoothed, (matched + 1) / (totals + 1), matched / np.maximum(totals, 1))
    brevity = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return float(brevity * math.exp(np.mean(np.log(precisions))))


def qa_accuracy(predictions: Sequence[int], gold: Sequence[Sequence[float]]) -> float:
    """Moyenne de l'étiquette souple de référence à la réponse top-1 prédite.

    Raises:
        ShapeError: Si les listes ne sont pas alignées
    """
    if len(predictions) != len(gold):
        raise ShapeError(f"{len(predictions)} prédictions pour {len(gold)} étiquettes")
    if len(predictions) == 0:
        raise ValueError("Aucune prédiction à évaluer")
    return float(np.mean([float(labels[int(p)]) for p, labels in zip(predictions, gold)]))


def qa_accuracy_by_type(predictions: Sequence[int], gold: Sequence[Sequence[float]],
                        qtypes: Sequence[str]) -> Dict[str, float]:
    """Précision par type de question (attribute, class, count)."""
    if len(qtypes) != len(predictions):
        raise ShapeError(f"{len(qtypes)} types pour {len(predictions)} prédictions")
    result: Dict[str, float] = {}
    for qtype in sorted(set(qtypes)):
        idx = [i for i, q in enumerate(qtypes) if q == qtype]
        result[qtype] = qa_accuracy([predictions[i] for i in idx], [gold[i] for i in idx])
    return result


def exact_match(hypotheses: Sequence[Sentence], references: Sequence[Sentence]) -> float:
    if len(hypotheses) != len(references):
        raise ShapeError(f"{len(hypotheses)} hypothèses pour {len(references)} références")
    if not hypotheses:
        return 0.0
    return float(np.mean([_tokens(h) == _tokens(r) for h, r in zip(hypotheses, references)]))


def sentence_bleu(hypothesis: Sentence, references: Optional[Sequence[Sentence]]) -> float:
    return bleu4([hypothesis], [list(references or [])])
