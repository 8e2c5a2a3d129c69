#!/usr/bin/env python3
"""
Opérations différentiables sur les tenseurs.
"""

import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from src.autodiff.tensor import Tensor, record_op
from src.utils.errors import DegenerateInputError, InvalidMaskError, ShapeError

ArrayLike = Union[Tensor, np.ndarray, float, int]

_GELU_C = math.sqrt(2.0 / math.pi)


def as_tensor(x: ArrayLike) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Réduit un gradient diffusé à la forme de l'entrée."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# Opérations élément par élément

def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return record_op(a.data + b.data, "add", (a, b), _backward)


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return record_op(a.data - b.data, "sub", (a, b), _backward)


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return record_op(a.data * b.data, "mul", (a, b), _backward)


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _backward(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return record_op(a.data / b.data, "div", (a, b), _backward)


def gelu(x: Tensor) -> Tensor:
    """GELU, approximation tanh."""
    u = _GELU_C * (x.data + 0.044715 * x.data ** 3)
    t = np.tanh(u)
    out = 0.5 * x.data * (1.0 + t)

    def _backward(g):
        du = _GELU_C * (1.0 + 3 * 0.044715 * x.data ** 2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t * t) * du),)

    return record_op(out, "gelu", (x,), _backward)


def relu(x: Tensor) -> Tensor:
    active = x.data > 0

    def _backward(g):
        return (g * active,)

    return record_op(np.where(active, x.data, 0.0), "relu", (x,), _backward)


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x: Tensor) -> Tensor:
    s = _stable_sigmoid(x.data)

    def _backward(g):
        return (g * s * (1.0 - s),)

    return record_op(s, "sigmoid", (x,), _backward)


def dropout(x: Tensor, rate: float, rng: Optional[np.random.Generator]) -> Tensor:
    """Dropout inversé ; identité si le taux est nul ou sans générateur."""
    if rate <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return mul(x, Tensor(keep))


# Algèbre linéaire et restructuration

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Produit matriciel (avec dimensions de lot diffusées).

    Raises:
        ShapeError: Si les dimensions internes ne concordent pas
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul : formes incompatibles {a.shape} et {b.shape}")

    def _backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return record_op(np.matmul(a.data, b.data), "matmul", (a, b), _backward)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Couche dense y = x·Wᵀ + b, avec W de forme (sortie, entrée)."""
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear : entrée {x.shape} incompatible avec le poids {weight.shape}")
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data

    def _backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        x2 = x.data.reshape(-1, x.shape[-1])
        grads = [g @ weight.data, g2.T @ x2]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return grads

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record_op(out, "linear", inputs, _backward)


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    axes = tuple(axes) if axes is not None else tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))

    def _backward(g):
        return (np.transpose(g, inverse),)

    return record_op(np.transpose(a.data, axes), "transpose", (a,), _backward)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    def _backward(g):
        return (g.reshape(a.shape),)

    return record_op(a.data.reshape(tuple(shape)), "reshape", (a,), _backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def _backward(g):
        return np.split(g, bounds, axis=axis)

    return record_op(np.concatenate([t.data for t in tensors], axis=axis), "concat", tensors, _backward)


def index(a: Tensor, idx) -> Tensor:
    """Sélection par indices (tranches ou tableaux d'indices)."""

    def _backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return record_op(a.data[idx], "index", (a,), _backward)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Lecture de lignes d'une table d'embeddings."""
    ids = np.asarray(ids, dtype=np.int64)

    def _backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        return (full,)

    return record_op(table.data[ids], "embedding", (table,), _backward)


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    def _backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return record_op(np.sum(a.data, axis=axis, keepdims=keepdims), "sum", (a,), _backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / float(count))


# Normalisation et probabilités

def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-12) -> Tensor:
    """Normalisation de couche sur le dernier axe.

    Raises:
        DegenerateInputError: Si le dernier axe compte moins de deux valeurs
    """
    d = x.shape[-1]
    if d < 2:
        raise DegenerateInputError(f"layer_norm exige d >= 2, reçu d={d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = centered * rstd
    out = xhat * gain.data + bias.data

    def _backward(g):
        dxhat = g * gain.data
        dx = rstd * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                     - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        g2 = g.reshape(-1, d)
        return dx, (g2 * xhat.reshape(-1, d)).sum(axis=0), g2.sum(axis=0)

    return record_op(out, "layer_norm", (x, gain, bias), _backward)


def masked_softmax(logits: Tensor, mask: np.ndarray) -> Tensor:
    """Softmax sur le dernier axe restreinte aux colonnes autorisées.

    Les colonnes interdites sont exclues de la normalisation et reçoivent une
    probabilité exactement nulle.

    Raises:
        InvalidMaskError: Si une ligne n'a aucune colonne autorisée
    """
    allow = np.broadcast_to(np.asarray(mask, dtype=bool), logits.shape)
    if not allow.any(axis=-1).all():
        raise InvalidMaskError("Masque invalide : ligne sans aucune colonne autorisée")
    x = logits.data
    row_max = np.max(np.where(allow, x, -np.inf), axis=-1, keepdims=True)
    e = np.exp(np.where(allow, x - row_max, 0.0)) * allow
    p = e / e.sum(axis=-1, keepdims=True)

    def _backward(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return record_op(p, "masked_softmax", (logits,), _backward)


def log_softmax_array(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Entropie croisée moyenne sur les lignes (cibles entières)."""
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy : logits {logits.shape}, cibles {targets.shape}")
    rows = np.arange(len(targets))
    logp = log_softmax_array(logits.data)
    loss = -logp[rows, targets].mean()

    def _backward(g):
        grad = np.exp(logp)
        grad[rows, targets] -= 1.0
        return (g * grad / len(targets),)

    return record_op(np.array(loss), "cross_entropy", (logits,), _backward)


def binary_cross_entropy_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Entropie croisée binaire moyenne, cibles réelles dans [0, 1]."""
    y = np.asarray(targets, dtype=np.float64)
    if y.shape != logits.shape:
        raise ShapeError(f"BCE : logits {logits.shape}, cibles {y.shape}")
    z = logits.data
    loss = (np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))).mean()

    def _backward(g):
        return (g * (_stable_sigmoid(z) - y) / z.size,)

    return record_op(np.array(loss), "bce_with_logits", (logits,), _backward)
