#!/usr/bin/env python3
"""
Génération de légendes par ajout itératif de [MASK] : recherche gloutonne et en faisceau.

À l'étape t, les emplacements texte valent : t tokens générés, un [MASK], puis
[PAD]. Le masque seq2seq rend le contenu après le [MASK] sans effet.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from src.autodiff.tensor import no_grad
from src.autodiff.ops import log_softmax_array
from src.data.scene import SceneExample, collate
from src.data.vocab import MASK_ID, PAD_ID, RESERVED, STOP_ID
from src.masking.attention import batch_masks, text_start
from src.masking.schedule import Objective
from src.model.embeddings import assemble_batch
from src.model.heads import lm_logits
from src.model.transformer import forward
from src.model.weights import ModelWeights
from src.utils.errors import ConfigError
from src.utils.logger import get_logger

logger = get_logger(__name__)

StepFn = Callable[[List[List[int]]], np.ndarray]


@dataclass
class Beam:
    """Hypothèse partielle : tokens, log-probabilité cumulée, terminée ou non."""

    tokens: List[int] = field(default_factory=list)
    log_prob: float = 0.0
    finished: bool = False

    def score(self, length_alpha: float = 0.0) -> float:
        if length_alpha == 0.0 or not self.tokens:
            return self.log_prob
        return self.log_prob / (len(self.tokens) ** length_alpha)


@dataclass
class Prediction:
    """Légende (sans tokens spéciaux) ou liste de réponses classées avec leurs scores."""

    tokens: Optional[List[int]] = None
    text: Optional[str] = None
    answers: Optional[List[Tuple[str, float]]] = None
    answer_ids: Optional[List[int]] = None
    score: float = 0.0

    def to_dict(self):
        return {k: v for k, v in self.__dict__.items() if v is not None}


def allowed_vocab(vocab_size: int) -> np.ndarray:
    """Tokens candidats : vocabulaire non réservé plus [STOP]."""
    allowed = np.zeros(vocab_size, dtype=bool)
    allowed[len(RESERVED):] = True
    allowed[STOP_ID] = True
    return allowed


def restricted_log_probs(logits: np.ndarray, allowed: np.ndarray) -> np.ndarray:
    """Log-softmax renormalisé sur les tokens autorisés ; -inf ailleurs."""
    out = np.full(logits.shape, -np.inf)
    out[..., allowed] = log_softmax_array(logits[..., allowed])
    return out


def decoding_slots(generated: Sequence[int], T: int) -> List[int]:
    return list(generated) + [MASK_ID] + [PAD_ID] * (T - len(generated))


def model_step_fn(scene: SceneExample, weights: ModelWeights) -> StepFn:
    """Fonction de pas : pour chaque préfixe, log-probabilités au [MASK] final."""
    cfg = weights.config
    regions = collate([scene])
    allowed = allowed_vocab(cfg.vocab_size)

    def step(prefixes: List[List[int]]) -> np.ndarray:
        B = len(prefixes)
        text = np.array([decoding_slots(p, cfg.T) for p in prefixes], dtype=np.int64)
        batch_regions = {k: np.repeat(v, B, axis=0) for k, v in regions.items()}
        with no_grad():
            inp = assemble_batch(batch_regions, text, Objective.SEQ2SEQ, weights.tables, cfg)
            mask = batch_masks(Objective.SEQ2SEQ, cfg.N, cfg.T, text, cfg.visual_sees_sep)
            H = forward(inp, mask, weights, cfg)
            cols = text_start(cfg.N) + np.array([len(p) for p in prefixes])
            logits = lm_logits(H, cols, weights, np.arange(B)).data
        return restricted_log_probs(logits, allowed)

    return step


def _check_budget(max_len: int, T: int) -> None:
    if not 1 <= max_len <= T:
        raise ConfigError(f"max_len doit être dans [1, T={T}], reçu {max_len}")


def greedy_core(step_fn: StepFn, max_len: int) -> Beam:
    beam = Beam()
    for _ in range(max_len):
        log_probs = step_fn([beam.tokens])[0]
        token = int(np.argmax(log_probs))
        beam.log_prob += float(log_probs[token])
        if token == STOP_ID:
            beam.finished = True
            break
        beam.tokens.append(token)
    return beam


def beam_search_core(step_fn: StepFn, beam: int, max_len: int, length_alpha: float = 0.0) -> Beam:
    """Recherche en faisceau synchronisée en longueur.

    Chaque hypothèse vivante est étendue par ses `beam` meilleurs tokens ; les
    `beam` meilleurs candidats globaux (log-probabilité cumulée) sont retenus.
    Les candidats terminés par [STOP] sont figés et comparés par
    log_prob / longueur^alpha (la longueur compte [STOP]). Les égalités suivent
    l'ordre (hypothèse, rang du token).

    Returns:
        Beam: Meilleure hypothèse terminée, ou meilleure hypothèse vivante au budget
    """
    if beam < 1:
        raise ConfigError(f"beam doit être >= 1, reçu {beam}")
    live = [Beam()]
    finished: List[Beam] = []
    for _ in range(max_len):
        log_probs = step_fn([b.tokens for b in live])
        candidates = []
        for i, b in enumerate(live):
            ranked = np.argsort(-log_probs[i], kind="stable")[:beam]
            for token in ranked:
                if np.isfinite(log_probs[i, token]):
                    candidates.append((b.log_prob + float(log_probs[i, token]), i, int(token)))
        order = sorted(range(len(candidates)), key=lambda c: -candidates[c][0])[:beam]
        next_live = []
        for c in order:
            score, i, token = candidates[c]
            if token == STOP_ID:
                finished.append(Beam(live[i].tokens + [STOP_ID], score, True))
            else:
                next_live.append(Beam(live[i].tokens + [token], score, False))
        live = next_live
        if not live:
            break

    if finished:
        return max(finished, key=lambda b: b.score(length_alpha))
    return max(live, key=lambda b: b.log_prob)


def _to_prediction(best: Beam, vocab=None) -> Prediction:
    tokens = [t for t in best.tokens if t != STOP_ID]
    text = " ".join(vocab.decode(t) for t in tokens) if vocab is not None else None
    return Prediction(tokens=tokens, text=text, score=best.log_prob)


def greedy_decode(scene: SceneExample, weights: ModelWeights, max_len: Optional[int] = None,
                  vocab=None) -> Prediction:
    """Décodage glouton : argmax au [MASK] final jusqu'à [STOP] ou max_len tokens."""
    cfg = weights.config
    max_len = cfg.T if max_len is None else max_len
    _check_budget(max_len, cfg.T)
    return _to_prediction(greedy_core(model_step_fn(scene, weights), max_len), vocab)


def beam_search(scene: SceneExample, weights: ModelWeights, beam: int, max_len: Optional[int] = None,
                length_alpha: float = 0.0, vocab=None) -> Prediction:
    """Recherche en faisceau sur le modèle (les hypothèses d'un pas partagent un seul passage avant)."""
    cfg = weights.config
    max_len = cfg.T if max_len is None else max_len
    _check_budget(max_len, cfg.T)
    return _to_prediction(beam_search_core(model_step_fn(scene, weights), beam, max_len, length_alpha), vocab)
