#!/usr/bin/env python3
"""
Tenseurs denses et différentiation automatique en mode inverse.

Chaque opération différentiable enregistre un noeud sur la bande (tape) du thread
courant. `backward` parcourt la bande en ordre inverse et accumule les gradients
dans les tenseurs feuilles qui en demandent.
"""

import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.utils.errors import ShapeError
from src.utils.logger import get_logger

logger = get_logger(__name__)

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_state = threading.local()


@dataclass
class TapeNode:
    """Noeud de la bande : type d'opération, entrées et règle de rétropropagation."""

    kind: str
    inputs: Tuple["Tensor", ...]
    backward: BackwardFn

    @property
    def input_ids(self) -> Tuple[Optional[int], ...]:
        return tuple(t.node_id for t in self.inputs)


class Tape:
    """Liste ordonnée de noeuds ; les entrées d'un noeud le précèdent toujours."""

    def __init__(self):
        self.nodes: List[TapeNode] = []

    def record(self, kind: str, inputs: Tuple["Tensor", ...], backward: BackwardFn) -> int:
        self.nodes.append(TapeNode(kind, inputs, backward))
        return len(self.nodes) - 1

    def clear(self) -> None:
        self.nodes = []

    def __len__(self) -> int:
        return len(self.nodes)


def current_tape() -> Tape:
    """Retourne la bande du thread courant (créée à la demande)."""
    tape = getattr(_state, "tape", None)
    if tape is None:
        tape = Tape()
        _state.tape = tape
    return tape


def grad_enabled() -> bool:
    return not getattr(_state, "no_grad", False)


@contextmanager
def no_grad() -> Iterator[None]:
    """Désactive l'enregistrement sur la bande (inférence)."""
    previous = getattr(_state, "no_grad", False)
    _state.no_grad = True
    try:
        yield
    finally:
        _state.no_grad = previous


class Tensor:
    """Tableau dense de réels 64 bits avec un emplacement de gradient."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.node_id: Optional[int] = None
        self._tape: Optional[Tape] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64).reshape(self.shape)
        else:
            self.grad = self.grad + g

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # Opérateurs (délégués au module ops)
    def __add__(self, other):
        from src.autodiff import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from src.autodiff import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from src.autodiff import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from src.autodiff import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from src.autodiff import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from src.autodiff import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from src.autodiff import ops
        return ops.div(self, other)

    def __neg__(self):
        from src.autodiff import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from src.autodiff import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from src.autodiff import ops
        return ops.index(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        from src.autodiff import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        from src.autodiff import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from src.autodiff import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from src.autodiff import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)


def record_op(data: np.ndarray, kind: str, inputs: Sequence[Tensor], backward: BackwardFn) -> Tensor:
    """Crée le tenseur résultat d'une opération et l'enregistre si nécessaire.

    Args:
        data (np.ndarray): Valeur calculée par la passe avant
        kind (str): Nom de l'opération
        inputs (Sequence[Tensor]): Tenseurs d'entrée, dans l'ordre attendu par `backward`
        backward (BackwardFn): Reçoit le gradient de la sortie, retourne un gradient par entrée

    Returns:
        Tensor: Résultat, relié à la bande si une entrée demande un gradient
    """
    inputs = tuple(inputs)
    needs_grad = grad_enabled() and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs_grad)
    if needs_grad:
        tape = current_tape()
        out.node_id = tape.record(kind, inputs, backward)
        out._tape = tape
    return out


def backward(loss: Tensor, retain_tape: bool = False) -> None:
    """Rétropropage depuis une perte scalaire.

    Les gradients s'accumulent dans `grad` des tenseurs feuilles ; des appels
    successifs s'additionnent. La bande est vidée ensuite sauf si `retain_tape`.

    Args:
        loss (Tensor): Perte scalaire présente sur la bande
        retain_tape (bool): Conserver la bande après le parcours

    Raises:
        ShapeError: Si la perte n'est pas scalaire
    """
    if loss.size != 1:
        raise ShapeError(f"backward attend une perte scalaire, forme reçue {loss.shape}")

    seed = np.ones_like(loss.data)
    if loss.node_id is None:
        if loss.requires_grad:
            loss.accumulate_grad(seed)
        return

    tape = loss._tape
    grads = {loss.node_id: seed}
    for node_id in range(loss.node_id, -1, -1):
        g = grads.pop(node_id, None)
        if g is None:
            continue
        node = tape.nodes[node_id]
        input_grads = node.backward(g)
        for tensor, tg in zip(node.inputs, input_grads):
            if tg is None or not tensor.requires_grad:
                continue
            if tensor.node_id is not None and tensor._tape is tape:
                previous = grads.get(tensor.node_id)
                grads[tensor.node_id] = tg if previous is None else previous + tg
            else:
                tensor.accumulate_grad(tg)

    logger.trace(f"Rétropropagation sur {loss.node_id + 1} noeuds")
    if not retain_tape:
        tape.clear()
        if getattr(_state, "tape", None) is tape:
            _state.tape = Tape()


def reset_tape() -> None:
    """Abandonne la bande du thread courant (début d'une étape d'entraînement)."""
    _state.tape = Tape()
