#!/usr/bin/env python3
"""
Scènes synthétiques : régions, légende et paires question/réponse.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Dict, List, Optional

import numpy as np

from src.data.grammar import GrammarSpec, relation_between
from src.data.templates import QUESTION_ANSWER_TYPES
from src.data.vocab import Vocab
from src.utils.errors import ConfigError
from src.utils.logger import get_logger

logger = get_logger(__name__)

GEOMETRY_SIZE = 5
OBJECT_PEAK = 5.0
DISTRACTOR_PEAK = 1.0


@dataclass
class Region:
    """Une région : caractéristiques R_i, probabilités de classe C_i, géométrie G_i."""

    features: np.ndarray
    class_probs: np.ndarray
    geometry: np.ndarray

    def validate(self) -> None:
        probs = self.class_probs
        if abs(float(probs.sum()) - 1.0) >= 1e-9 or np.any(probs < 0):
            raise ValueError("class_probs doit être une distribution de probabilité")
        x1, y1, x2, y2, area = self.geometry
        if not (x2 > x1 and y2 > y1):
            raise ValueError(f"Boîte dégénérée : {self.geometry.tolist()}")
        if abs(area - (x2 - x1) * (y2 - y1)) >= 1e-9:
            raise ValueError("Aire relative incohérente avec la boîte")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "features": self.features.tolist(),
            "class_probs": self.class_probs.tolist(),
            "geometry": self.geometry.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Region":
        return cls(
            features=np.asarray(data["features"], dtype=np.float64),
            class_probs=np.asarray(data["class_probs"], dtype=np.float64),
            geometry=np.asarray(data["geometry"], dtype=np.float64),
        )


@dataclass
class QAPair:
    """Question tokenisée, réponse et étiquette souple sur les k réponses."""

    question: List[int]
    answer: str
    answer_id: int
    soft_label: List[float]
    qtype: str = "attribute"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "question": list(self.question),
            "answer": self.answer,
            "answer_id": self.answer_id,
            "soft_label": list(self.soft_label),
            "qtype": self.qtype,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "QAPair":
        return cls(
            question=[int(i) for i in data["question"]],
            answer=data["answer"],
            answer_id=int(data["answer_id"]),
            soft_label=[float(v) for v in data["soft_label"]],
            qtype=data.get("qtype", "attribute"),
        )


@dataclass
class SceneExample:
    """Image synthétique (N régions), légende et questions."""

    scene_id: str
    regions: List[Region]
    caption: List[int]
    qa: List[QAPair] = field(default_factory=list)
    objects: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scene_id": self.scene_id,
            "regions": [r.to_dict() for r in self.regions],
            "caption": list(self.caption),
            "qa": [q.to_dict() for q in self.qa],
            "objects": [dict(o) for o in self.objects],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SceneExample":
        return cls(
            scene_id=str(data["scene_id"]),
            regions=[Region.from_dict(r) for r in data["regions"]],
            caption=[int(i) for i in data["caption"]],
            qa=[QAPair.from_dict(q) for q in data.get("qa", [])],
            objects=[dict(o) for o in data.get("objects", [])],
        )


@lru_cache(maxsize=16)
def _grammar_vocab(spec_json: str) -> Vocab:
    return Vocab(GrammarSpec.model_validate_json(spec_json).words())


def grammar_vocab(spec: GrammarSpec) -> Vocab:
    """Vocabulaire déterministe d'une grammaire."""
    return _grammar_vocab(spec.model_dump_json())


def _box(rng: np.random.Generator, size_index: int, n_sizes: int) -> np.ndarray:
    lo = 0.08 + 0.27 * size_index / n_sizes
    hi = 0.08 + 0.27 * (size_index + 1) / n_sizes
    w, h = rng.uniform(lo, hi, size=2)
    x1 = rng.uniform(0.0, 1.0 - w)
    y1 = rng.uniform(0.0, 1.0 - h)
    x2, y2 = x1 + w, y1 + h
    return np.array([x1, y1, x2, y2, (x2 - x1) * (y2 - y1)])


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max())
    return e / e.sum()


def generate_scene(rng_seed: int, spec: GrammarSpec, N: int, noise: float,
                   d_in: int = 32, vocab: Optional[Vocab] = None) -> SceneExample:
    """Génère une scène de manière déterministe à partir d'une graine.

    Args:
        rng_seed (int): Graine de la scène
        spec (GrammarSpec): Grammaire
        N (int): Nombre total de régions (objets + distracteurs)
        noise (float): Écart-type du bruit gaussien sur les caractéristiques et les logits
        d_in (int): Taille des caractéristiques de région
        vocab (Vocab, optional): Vocabulaire d'encodage (celui de la grammaire sinon) ;
            utile quand la grammaire est un sous-ensemble d'une grammaire plus large

    Returns:
        SceneExample: Scène avec légende et questions

    Raises:
        ConfigError: Si N est inférieur à spec.max_objects, ou si d_in ne peut pas
            contenir les attributs. La borne porte sur le maximum de la grammaire et
            non sur le nombre d'objets tiré : elle est vérifiée avant tout tirage
    """
    if N < spec.max_objects:
        raise ConfigError(f"N={N} est inférieur au nombre maximal d'objets ({spec.max_objects})")
    n_cls, n_col, n_siz = len(spec.classes), len(spec.colors), len(spec.sizes)
    if n_cls + n_col + n_siz > d_in:
        raise ConfigError(f"d_in={d_in} trop petit pour {n_cls + n_col + n_siz} attributs")

    rng = np.random.default_rng(rng_seed)
    vocab = grammar_vocab(spec) if vocab is None else vocab
    n_objects = int(rng.integers(spec.min_objects, spec.max_objects + 1))
    classes = rng.choice(n_cls, size=n_objects, replace=False)
    colors = rng.choice(n_col, size=n_objects, replace=False)
    sizes = rng.integers(0, n_siz, size=n_objects)
    slots = rng.permutation(N)

    regions: List[Optional[Region]] = [None] * N
    objects = []
    for k in range(n_objects):
        features = np.zeros(d_in)
        features[classes[k]] = 1.0
        features[n_cls + colors[k]] = 1.0
        features[n_cls + n_col + sizes[k]] = 1.0
        features = features + noise * rng.standard_normal(d_in)
        logits = OBJECT_PEAK * np.eye(n_cls)[classes[k]] + noise * rng.standard_normal(n_cls)
        box = _box(rng, int(sizes[k]), n_siz)
        regions[slots[k]] = Region(features, _softmax(logits), box)
        objects.append({
            "class": spec.classes[classes[k]],
            "color": spec.colors[colors[k]],
            "size": spec.sizes[sizes[k]],
            "box": box[:4].tolist(),
            "region": int(slots[k]),
        })

    # Distracteurs : classes et boîtes aléatoires, sans attributs
    for k in range(n_objects, N):
        c = int(rng.integers(0, n_cls))
        features = np.zeros(d_in)
        features[c] = 0.5
        features = features + noise * rng.standard_normal(d_in)
        logits = DISTRACTOR_PEAK * np.eye(n_cls)[c] + max(noise, 0.5) * rng.standard_normal(n_cls)
        regions[slots[k]] = Region(features, _softmax(logits), _box(rng, int(rng.integers(0, n_siz)), n_siz))

    a, b = objects[0], objects[1]
    template = spec.caption_templates[int(rng.integers(0, len(spec.caption_templates)))]
    caption = template.format(
        a_size=a["size"], a_color=a["color"], a_cls=a["class"],
        b_size=b["size"], b_color=b["color"], b_cls=b["class"],
        rel=spec.relations[relation_between(a["box"], b["box"])],
        count=spec.count_words[n_objects],
    )

    answer_list = spec.answers
    qa = []
    for qtype, q_template in spec.question_templates.items():
        target = objects[int(rng.integers(0, n_objects))]
        question = q_template.format(cls=target["class"], color=target["color"], size=target["size"])
        answer = {
            "color": target["color"],
            "class": target["class"],
            "size": target["size"],
            "count": spec.count_words[n_objects],
        }.get(qtype)
        if answer is None:
            logger.warning(f"Type de question inconnu ignoré : {qtype}")
            continue
        answer_id = answer_list.index(answer)
        soft = [0.0] * len(answer_list)
        soft[answer_id] = 1.0
        qa.append(QAPair([vocab.encode(w) for w in question.split()], answer, answer_id, soft,
                         QUESTION_ANSWER_TYPES.get(qtype, "attribute")))

    return SceneExample(
        scene_id=f"scene-{rng_seed}",
        regions=regions,
        caption=[vocab.encode(w) for w in caption.split()],
        qa=qa,
        objects=objects,
    )


def collate(scenes: List[SceneExample]) -> Dict[str, np.ndarray]:
    """Empile les régions d'un lot : features (B,N,d_in), class_probs (B,N,l), geometry (B,N,5)."""
    return {
        "features": np.stack([np.stack([r.features for r in s.regions]) for s in scenes]),
        "class_probs": np.stack([np.stack([r.class_probs for r in s.regions]) for s in scenes]),
        "geometry": np.stack([np.stack([r.geometry for r in s.regions]) for s in scenes]),
    }
