#!/usr/bin/env python3
"""
Lecture et écriture des jeux de données (un objet JSON par ligne).
"""

import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

from src.data.grammar import GrammarSpec
from src.data.scene import SceneExample, generate_scene, grammar_vocab
from src.data.vocab import Vocab
from src.utils.errors import DatasetParseError
from src.utils.io import atomic_open
from src.utils.logger import get_logger

logger = get_logger(__name__)

REQUIRED_FIELDS = ("scene_id", "regions", "caption", "qa")


def write_dataset(examples: Iterable[SceneExample], path: str) -> int:
    """Écrit les scènes, une par ligne (réels en précision aller-retour).

    Returns:
        int: Nombre de scènes écrites
    """
    count = 0
    with atomic_open(path, "w") as f:
        for example in examples:
            f.write(json.dumps(example.to_dict(), ensure_ascii=False))
            f.write("\n")
            count += 1
    logger.info(f"{count} scènes écrites dans {path}")
    return count


def read_dataset(path: str) -> List[SceneExample]:
    """Lit un jeu de données ligne par ligne.

    Raises:
        DatasetParseError: Si une ligne est mal formée (numéro de ligne à partir de 1)
    """
    examples = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetParseError(line_number, str(e)) from e
            if not isinstance(data, dict):
                raise DatasetParseError(line_number, "objet JSON attendu")
            missing = [k for k in REQUIRED_FIELDS if k not in data]
            if missing:
                raise DatasetParseError(line_number, f"champs manquants {missing}")
            try:
                examples.append(SceneExample.from_dict(data))
            except (KeyError, TypeError, ValueError) as e:
                raise DatasetParseError(line_number, str(e)) from e
    logger.debug(f"{len(examples)} scènes lues depuis {path}")
    return examples


def generate_dataset(spec: GrammarSpec, seeds: Iterable[int], N: int, noise: float,
                     d_in: int, vocab: Optional[Vocab] = None) -> List[SceneExample]:
    return [generate_scene(seed, spec, N, noise, d_in=d_in, vocab=vocab) for seed in seeds]


def metadata_path(path: str) -> str:
    return f"{path}.meta.json"


def write_metadata(path: str, spec: GrammarSpec, answers: Optional[List[str]] = None,
                   extra: Optional[Dict[str, Any]] = None, vocab: Optional[Vocab] = None) -> None:
    """Écrit le fichier annexe : vocabulaire, réponses et grammaire."""
    meta = {
        "vocab": (vocab or grammar_vocab(spec)).to_list(),
        "answers": answers if answers is not None else spec.answers,
        "grammar": spec.model_dump(),
    }
    meta.update(extra or {})
    with atomic_open(metadata_path(path), "w") as f:
        json.dump(meta, f, ensure_ascii=False, indent=2)


def read_metadata(path: str) -> Dict[str, Any]:
    """Lit le fichier annexe ; le vocabulaire est reconstruit en objet Vocab."""
    meta_file = Path(metadata_path(path))
    with open(meta_file, "r", encoding="utf-8") as f:
        meta = json.load(f)
    meta["vocab"] = Vocab.from_list(meta["vocab"])
    meta["grammar"] = GrammarSpec(**meta["grammar"])
    return meta
