#!/usr/bin/env python3
"""
Batterie de vérifications de gradient : opérations élémentaires et modèle complet.
"""

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from src.autodiff import ops
from src.autodiff.gradcheck import finite_diff_check
from src.autodiff.tensor import Tensor
from src.data.answers import build_answer_vocab
from src.data.grammar import default_grammar
from src.data.scene import generate_scene, grammar_vocab
from src.masking.schedule import Objective
from src.model.settings import make_model_config
from src.model.weights import ModelWeights
from src.training.objectives import flatten_qa, masked_lm_loss, region_pretext_loss, vqa_loss
from src.training.settings import make_train_config
from src.utils.logger import get_logger

logger = get_logger(__name__)

TOLERANCE = 1e-4


@dataclass
class GradCheckResult:
    name: str
    max_rel_error: float
    tolerance: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def _uniform(rng: np.random.Generator, *shape: int) -> Tensor:
    return Tensor(rng.uniform(-1.0, 1.0, size=shape), requires_grad=True)


def _op_checks(rng: np.random.Generator) -> List[GradCheckResult]:
    a, b = _uniform(rng, 3, 4), _uniform(rng, 4, 2)
    x, gain, bias = _uniform(rng, 8), _uniform(rng, 8), _uniform(rng, 8)
    logits = _uniform(rng, 1, 3)
    allow = np.array([[True, True, False]])
    g = _uniform(rng, 5)
    checks: Sequence = [
        ("matmul", lambda: ops.sum(ops.matmul(a, b)), [a, b]),
        ("layer_norm", lambda: ops.sum(ops.mul(ops.layer_norm(x, gain, bias, 1e-12), x)), [x, gain, bias]),
        ("masked_softmax+cross_entropy",
         lambda: ops.cross_entropy(ops.masked_softmax(logits, allow), np.array([1])), [logits]),
        ("gelu", lambda: ops.sum(ops.mul(ops.gelu(g), g)), [g]),
    ]
    return [GradCheckResult(name, finite_diff_check(f, params)) for name, f, params in checks]


# Plancher du dénominateur : au-dessous, la différence finie est dominée par l'arrondi
NOISE_FLOOR = 1e-5


def _toy_scenes(seed: int):
    spec = default_grammar()
    scenes = [generate_scene(seed + i, spec, N=4, noise=0.1) for i in range(2)]
    for scene in scenes:
        scene.caption = scene.caption[:6]
    return scenes, grammar_vocab(spec), len(spec.classes)


def _toy_model(seed: int, **overrides):
    """Modèle L=2, d=16, heads=2, N=4, T=6, lot de 2 ; poids tirés uniformément dans [-1, 1]."""
    rng = np.random.default_rng(seed)
    scenes, vocab, n_classes = _toy_scenes(seed)
    fields = dict(layers=2, d=16, heads=2, ffn=32, N=4, T=6, d_in=32, vocab_size=len(vocab),
                  n_classes=n_classes, vqa_hidden=8, dropout=0.0)
    fields.update(overrides)
    model = make_model_config(**fields)
    weights = ModelWeights.initialize(model, rng)
    for tensor in weights.tensors.values():
        tensor.data = rng.uniform(-1.0, 1.0, size=tensor.shape)
    return weights, scenes, vocab, make_train_config(model=model, batch_size=2)


def _check(name: str, loss: Callable[[], Tensor], weights: ModelWeights, heads: Tuple[str, ...],
           seed: int, trunk_coords: Optional[int]) -> GradCheckResult:
    """Vérifie toutes les coordonnées des têtes listées, et le tronc (échantillonné si demandé)."""
    head_params = [t for n, t in weights.items() if n.startswith(heads)]
    trunk_params = [t for n, t in weights.items() if n.startswith(("emb.", "layer", "lm."))]
    error = finite_diff_check(loss, trunk_params, max_coords=trunk_coords,
                              rng=np.random.default_rng(seed), noise_floor=NOISE_FLOOR)
    if head_params:
        error = max(error, finite_diff_check(loss, head_params, noise_floor=NOISE_FLOOR))
    return GradCheckResult(name, error)


def full_model_check(seed: int = 0, objective: Objective = Objective.SEQ2SEQ,
                     max_coords: Optional[int] = None) -> GradCheckResult:
    """Perte LM masquée du modèle jouet, sur toutes les coordonnées par défaut."""
    objective = Objective(objective)
    weights, scenes, vocab, cfg = _toy_model(seed)

    def loss() -> Tensor:
        value, _, _ = masked_lm_loss(scenes, objective, weights, cfg, np.random.default_rng(seed), vocab)
        return value

    name = "full_model" if objective is Objective.SEQ2SEQ else f"full_model_{objective.value}"
    return _check(name, loss, weights, (), seed, max_coords)


def vqa_head_check(seed: int = 0, trunk_coords: Optional[int] = 32) -> GradCheckResult:
    """Perte BCE de la tête VQA : toutes ses coordonnées, tronc échantillonné."""
    scenes, _, _ = _toy_scenes(seed)
    answers, relabeled = build_answer_vocab(scenes, 8)
    weights, _, _, _ = _toy_model(seed, n_answers=len(answers))
    items = flatten_qa(relabeled)[:4]

    def loss() -> Tensor:
        return vqa_loss(items, weights)[0]

    return _check("vqa_head", loss, weights, ("vqa.",), seed, trunk_coords)


def pretext_head_check(seed: int = 0, trunk_coords: Optional[int] = 32) -> GradCheckResult:
    """Perte de prétexte de régions : toutes les coordonnées de sa tête, tronc échantillonné."""
    weights, scenes, _, cfg = _toy_model(seed, region_pretext=True, class_probs_as_input=False)

    def loss() -> Tensor:
        return region_pretext_loss(scenes, weights, cfg, np.random.default_rng(seed))[0]

    return _check("region_pretext", loss, weights, ("pretext.",), seed, trunk_coords)


def run_gradcheck_suite(seed: int = 0, include_model: bool = True) -> List[GradCheckResult]:
    rng = np.random.default_rng(seed)
    results = _op_checks(rng)
    if include_model:
        results.append(full_model_check(seed))
        results.append(full_model_check(seed, Objective.BIDIRECTIONAL, max_coords=32))
        results.append(vqa_head_check(seed))
        results.append(pretext_head_check(seed))
    for r in results:
        logger.debug(f"Vérification {r.name} : erreur relative max {r.max_rel_error:.3e}")
    return results
