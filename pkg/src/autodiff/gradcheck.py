#!/usr/bin/env python3
"""
Vérification des gradients par différences finies centrées.
"""

from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from src.autodiff.tensor import Tensor, backward, no_grad, reset_tape
from src.utils.logger import get_logger

logger = get_logger(__name__)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def finite_diff_check(f: Callable[[], Tensor], params: Union[Tensor, Sequence[Tensor]],
                      h: float = 1e-5, max_coords: Optional[int] = None,
                      rng: Optional[np.random.Generator] = None, noise_floor: float = 1e-8) -> float:
    """Compare le gradient analytique de `f` à des différences finies centrées.

    Les coordonnées sont tirées sans regarder le gradient analytique : un gradient
    analytique nul face à une différence finie au-dessus du plancher compte comme une erreur de 1.

    Args:
        f (Callable[[], Tensor]): Fonction sans argument retournant une perte scalaire ;
            elle lit les paramètres en place
        params (Tensor | Sequence[Tensor]): Paramètres à vérifier
        h (float): Pas des différences finies
        max_coords (int, optional): Nombre maximal de coordonnées tirées par paramètre
            (toutes si None)
        rng (np.random.Generator, optional): Générateur pour le tirage des coordonnées
        noise_floor (float): Plancher du dénominateur de l'erreur relative ; aucune
            coordonnée n'est écartée

    Returns:
        float: Erreur relative maximale |a-n| / max(|a|, |n|, noise_floor)
    """
    if h <= 0:
        raise ValueError(f"Le pas h doit être positif, reçu {h}")
    tensors: List[Tensor] = [params] if isinstance(params, Tensor) else list(params)
    rng = rng or np.random.default_rng(0)

    reset_tape()
    for p in tensors:
        p.zero_grad()
    backward(f())
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in tensors]

    worst = 0.0
    with no_grad():
        for p, grad in zip(tensors, analytic):
            flat = p.data.reshape(-1)
            coords = np.arange(flat.size)
            if max_coords is not None and coords.size > max_coords:
                coords = np.sort(rng.choice(coords, size=max_coords, replace=False))
            numeric = np.empty(len(coords))
            for j, i in enumerate(coords):
                original = flat[i]
                flat[i] = original + h
                f_plus = f().item()
                flat[i] = original - h
                f_minus = f().item()
                flat[i] = original
                numeric[j] = (f_plus - f_minus) / (2.0 * h)
            if len(coords):
                err = float(relative_error(grad.reshape(-1)[coords], numeric, noise_floor).max())
                worst = max(worst, err)
                logger.debug(f"Paramètre {p.name or p.shape} : {len(coords)} coordonnées, "
                             f"erreur relative max {err:.3e}")
    return worst
