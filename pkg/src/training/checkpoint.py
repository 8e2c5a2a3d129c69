#!/usr/bin/env python3
"""
Points de contrôle : signature "UVLP1", longueur du manifeste, manifeste JSON,
puis charge utile de réels 64 bits petit-boutistes dans l'ordre du manifeste.
"""

import json
import struct
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np
from pydantic import ValidationError

from src.model.weights import ModelWeights, parameter_shapes
from src.training.settings import TrainConfig
from src.utils.errors import (CheckpointError, CheckpointShapeError, CheckpointTruncatedError,
                              CheckpointVersionError)
from src.utils.io import atomic_open
from src.utils.logger import get_logger
import config

logger = get_logger(__name__)

MAGIC = config.CHECKPOINT["magic"]
VERSION = config.CHECKPOINT["version"]
_LENGTH = struct.Struct("<Q")
_DTYPE = np.dtype("<f8")


@dataclass
class Checkpoint:
    weights: ModelWeights
    config: TrainConfig
    step: int
    extra: Dict[str, Any] = field(default_factory=dict)


def build_manifest(weights: ModelWeights, cfg: TrainConfig, step: int,
                   extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    tensors = []
    offset = 0
    for name, t in weights.items():
        tensors.append({"name": name, "shape": list(t.shape), "offset": offset, "size": int(t.size)})
        offset += int(t.size)
    return {
        "version": VERSION,
        "config": cfg.model_dump(mode="json"),
        "step": int(step),
        "extra": extra or {},
        "tensors": tensors,
    }


def encode_checkpoint(manifest: Dict[str, Any], payload: bytes) -> bytes:
    header = json.dumps(manifest, ensure_ascii=False).encode("utf-8")
    return MAGIC + _LENGTH.pack(len(header)) + header + payload


def save_checkpoint(weights: ModelWeights, cfg: TrainConfig, step: int, path: str,
                    extra: Optional[Dict[str, Any]] = None) -> None:
    """Écrit un point de contrôle de manière atomique.

    Args:
        weights (ModelWeights): Poids
        cfg (TrainConfig): Configuration complète
        step (int): Étape atteinte
        path (str): Fichier de sortie
        extra (Dict[str, Any], optional): Métadonnées (vocabulaire, réponses, ...)
    """
    if cfg.model != weights.config:
        cfg = cfg.model_copy(update={"model": weights.config})
    manifest = build_manifest(weights, cfg, step, extra)
    payload = b"".join(np.ascontiguousarray(t.data, dtype=_DTYPE).tobytes() for _, t in weights.items())
    with atomic_open(path, "wb") as f:
        f.write(encode_checkpoint(manifest, payload))
    logger.info(f"Point de contrôle écrit : {path} (étape {step})")


def decode_checkpoint(blob: bytes) -> Dict[str, Any]:
    if not blob.startswith(MAGIC):
        raise CheckpointVersionError("Signature de point de contrôle absente (UVLP1 attendu)")
    start = len(MAGIC) + _LENGTH.size
    if len(blob) < start:
        raise CheckpointTruncatedError("En-tête tronqué")
    (length,) = _LENGTH.unpack_from(blob, len(MAGIC))
    if len(blob) < start + length:
        raise CheckpointTruncatedError("Manifeste tronqué")
    try:
        manifest = json.loads(blob[start:start + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"Manifeste illisible : {e}") from e
    manifest["_payload"] = blob[start + length:]
    return manifest


def load_checkpoint(path: str) -> Checkpoint:
    """Relit un point de contrôle écrit par `save_checkpoint`.

    Raises:
        CheckpointVersionError: Signature ou version non supportée
        CheckpointTruncatedError: Charge utile plus courte que le manifeste
        CheckpointShapeError: Forme d'un tenseur incohérente
    """
    with open(path, "rb") as f:
        manifest = decode_checkpoint(f.read())
    if manifest.get("version") != VERSION:
        raise CheckpointVersionError(f"Version {manifest.get('version')} non supportée (attendue {VERSION})")

    try:
        cfg = TrainConfig(**manifest["config"])
    except (ValidationError, TypeError) as e:
        raise CheckpointError(f"Configuration illisible dans le manifeste : {e}") from e
    expected = parameter_shapes(cfg.model)
    payload = manifest["_payload"]
    total = sum(entry["size"] for entry in manifest["tensors"])
    if len(payload) < total * _DTYPE.itemsize:
        raise CheckpointTruncatedError(
            f"Charge utile de {len(payload)} octets, {total * _DTYPE.itemsize} attendus")

    flat = np.frombuffer(payload, dtype=_DTYPE, count=total)
    arrays = {}
    for entry in manifest["tensors"]:
        name, shape = entry["name"], tuple(entry["shape"])
        wanted = expected.get(name, (None,))[0]
        if wanted is None:
            raise CheckpointError(f"Tenseur inattendu dans le manifeste : {name}")
        if shape != tuple(wanted) or int(np.prod(shape)) != entry["size"]:
            raise CheckpointShapeError(name, wanted, shape)
        arrays[name] = flat[entry["offset"]:entry["offset"] + entry["size"]].reshape(shape).astype(np.float64)
    missing = [name for name in expected if name not in arrays]
    if missing:
        raise CheckpointError(f"Tenseurs absents du point de contrôle : {missing}")

    logger.info(f"Point de contrôle chargé : {path} (étape {manifest['step']})")
    return Checkpoint(ModelWeights.from_arrays(cfg.model, arrays), cfg, int(manifest["step"]),
                      manifest.get("extra", {}))
