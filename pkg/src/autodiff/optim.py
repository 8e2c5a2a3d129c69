#!/usr/bin/env python3
"""
Optimiseur Adam avec échauffement linéaire et écrêtage de la norme globale.
"""

from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from src.autodiff.tensor import Tensor
from src.utils.errors import NonFiniteError
from src.utils.logger import get_logger

logger = get_logger(__name__)


@dataclass
class AdamState:
    """Premiers et seconds moments par paramètre."""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def warmup_factor(step: int, warmup: int) -> float:
    return 1.0 if warmup <= 0 else min(1.0, step / warmup)


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray], state: AdamState,
              lr: float, beta1: float, beta2: float, eps: float, step: int, warmup: int) -> None:
    """Applique une mise à jour Adam avec correction de biais.

    Args:
        params (Mapping[str, Tensor]): Paramètres nommés, modifiés en place
        grads (Mapping[str, np.ndarray]): Gradients nommés (absents = nuls)
        state (AdamState): Moments, mis à jour en place
        lr (float): Taux d'apprentissage de base
        beta1 (float): Décroissance du premier moment
        beta2 (float): Décroissance du second moment
        eps (float): Terme de stabilité
        step (int): Numéro d'étape (>= 1)
        warmup (int): Nombre d'étapes d'échauffement linéaire

    Raises:
        NonFiniteError: Si un gradient contient une valeur non finie
    """
    if step < 1:
        raise ValueError(f"L'étape Adam doit être >= 1, reçu {step}")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"Gradient non fini pour le paramètre {name} à l'étape {step}")

    effective_lr = lr * warmup_factor(step, warmup)
    bias1 = 1.0 - beta1 ** step
    bias2 = 1.0 - beta2 ** step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1.0 - beta1) * g if m is None else beta1 * m + (1.0 - beta1) * g
        v = (1.0 - beta2) * g * g if v is None else beta2 * v + (1.0 - beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        p.data -= effective_lr * (m / bias1) / (np.sqrt(v / bias2) + eps)
    state.step = step


def clip_grad_norm(grads: Dict[str, np.ndarray], max_norm: float) -> float:
    """Écrête les gradients à une norme globale maximale (en place).

    Returns:
        float: Norme globale avant écrêtage
    """
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for name in grads:
            grads[name] = grads[name] * scale
    return total


class AdamOptimizer:
    """Adam (β1=0.9, β2=0.999, eps=1e-8) avec échauffement linéaire."""

    def __init__(self, params: Mapping[str, Tensor], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, warmup: int = 100):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.warmup = warmup
        self.state = AdamState()

    def step(self, grads: Mapping[str, np.ndarray]) -> None:
        adam_step(self.params, grads, self.state, self.lr, self.beta1, self.beta2, self.eps,
                  self.state.step + 1, self.warmup)

    def collect_grads(self) -> Dict[str, np.ndarray]:
        return {name: p.grad for name, p in self.params.items() if p.grad is not None}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()
