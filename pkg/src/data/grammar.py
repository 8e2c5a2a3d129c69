#!/usr/bin/env python3
"""
Spécification de la grammaire synthétique (scènes, légendes, questions).
"""

import json
import re
import string
from typing import Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, ValidationError, model_validator

from src.data.templates import CAPTION_FIELDS, DEFAULT_GRAMMAR, QUESTION_FIELDS
from src.utils.errors import ConfigError
from src.utils.io import atomic_open
from src.utils.logger import get_logger

logger = get_logger(__name__)


def template_fields(template: str) -> List[str]:
    return [name for _, name, _, _ in string.Formatter().parse(template) if name]


class GrammarSpec(BaseModel):
    """Classes d'objets, attributs, relations et templates de la grammaire."""

    classes: List[str]
    colors: List[str]
    sizes: List[str]
    relations: Dict[str, str]
    count_words: List[str]
    caption_templates: List[str]
    question_templates: Dict[str, str]
    min_objects: int = 2
    max_objects: int = 4

    @model_validator(mode="after")
    def _check_templates(self) -> "GrammarSpec":
        if not self.classes or not self.colors or not self.sizes or not self.relations:
            raise ValueError("La grammaire doit déclarer des classes, couleurs, tailles et relations")
        if not self.caption_templates:
            raise ValueError("La grammaire doit déclarer au moins un template de légende")
        if not 1 <= self.min_objects <= self.max_objects:
            raise ValueError(f"Bornes d'objets invalides : {self.min_objects}..{self.max_objects}")
        if self.max_objects >= len(self.count_words):
            raise ValueError("count_words ne couvre pas max_objects")
        if len(self.classes) < self.max_objects or len(self.colors) < self.max_objects:
            raise ValueError("Pas assez de classes ou de couleurs distinctes pour max_objects")
        for template in self.caption_templates:
            unknown = set(template_fields(template)) - CAPTION_FIELDS
            if unknown or "rel" not in template_fields(template):
                raise ValueError(f"Template de légende invalide : {template!r}")
        for qtype, template in self.question_templates.items():
            if set(template_fields(template)) - QUESTION_FIELDS:
                raise ValueError(f"Template de question invalide ({qtype}) : {template!r}")
        return self

    @property
    def answers(self) -> List[str]:
        """Vocabulaire de réponses fixe de la grammaire."""
        counts = self.count_words[self.min_objects:self.max_objects + 1]
        return list(counts) + list(self.colors) + list(self.classes) + list(self.sizes)

    def words(self) -> List[str]:
        """Tous les mots pouvant apparaître dans une légende ou une question."""
        words = set()
        for template in list(self.caption_templates) + list(self.question_templates.values()):
            literal = "".join(text for text, _, _, _ in string.Formatter().parse(template))
            words.update(literal.split())
        for phrase in self.relations.values():
            words.update(phrase.split())
        words.update(self.classes)
        words.update(self.colors)
        words.update(self.sizes)
        words.update(self.count_words)
        return sorted(w.lower() for w in words)


def default_grammar() -> GrammarSpec:
    return GrammarSpec(**DEFAULT_GRAMMAR)


def load_grammar(path: Optional[str]) -> GrammarSpec:
    """Charge une grammaire JSON (grammaire par défaut si aucun chemin).

    Raises:
        ConfigError: Si le document est illisible ou invalide
    """
    if not path:
        return default_grammar()
    try:
        with open(path, "r", encoding="utf-8") as f:
            spec = GrammarSpec(**json.load(f))
    except (OSError, json.JSONDecodeError, ValidationError, TypeError) as e:
        raise ConfigError(f"Grammaire invalide ({path}) : {e}") from e
    logger.info(f"Grammaire chargée depuis {path} : {len(spec.classes)} classes, "
                f"{len(spec.caption_templates)} templates")
    return spec


def save_grammar(spec: GrammarSpec, path: str) -> None:
    with atomic_open(path) as f:
        f.write(spec.model_dump_json(indent=2))


def split_grammar(spec: GrammarSpec) -> Tuple[GrammarSpec, GrammarSpec]:
    """Sépare les templates de légendes en une grammaire de pré-entraînement
    (indices pairs) et une grammaire aval (indices impairs)."""
    if len(spec.caption_templates) < 2:
        raise ConfigError("Il faut au moins deux templates pour séparer la grammaire")
    pretrain = spec.model_copy(update={"caption_templates": spec.caption_templates[0::2]})
    downstream = spec.model_copy(update={"caption_templates": spec.caption_templates[1::2]})
    return pretrain, downstream


def relation_between(box_a: Sequence[float], box_b: Sequence[float]) -> str:
    """Relation spatiale de a par rapport à b, d'après les centres des boîtes.

    L'axe dominant l'emporte ; y croît vers le bas.
    """
    ax, ay = (box_a[0] + box_a[2]) / 2.0, (box_a[1] + box_a[3]) / 2.0
    bx, by = (box_b[0] + box_b[2]) / 2.0, (box_b[1] + box_b[3]) / 2.0
    dx, dy = bx - ax, by - ay
    if abs(dx) >= abs(dy):
        return "left" if dx > 0 else "right"
    return "above" if dy > 0 else "below"


def _template_regex(template: str, spec: GrammarSpec) -> "re.Pattern":
    choices = {
        "cls": spec.classes,
        "color": spec.colors,
        "size": spec.sizes,
        "rel": list(spec.relations.values()),
        "count": spec.count_words,
    }
    parts = []
    for literal, field, _, _ in string.Formatter().parse(template):
        parts.append(re.escape(literal))
        if field:
            key = field.split("_")[-1]
            alternatives = "|".join(re.escape(v) for v in sorted(choices[key], key=len, reverse=True))
            parts.append(f"(?P<{field}>{alternatives})")
    return re.compile("^" + "".join(parts) + "$")


def check_caption(caption: str, objects: Sequence[dict], spec: GrammarSpec) -> bool:
    """Vérifie qu'une légende décrit bien les objets d'une scène.

    Rejoue chaque template : la légende doit correspondre à l'un d'eux avec deux
    objets distincts de la scène dont les attributs et la relation concordent.

    Args:
        caption (str): Légende en texte
        objects (Sequence[dict]): Objets décrits (class, color, size, box)
        spec (GrammarSpec): Grammaire de référence

    Returns:
        bool: True si la légende est cohérente avec la scène
    """
    phrase_to_rel = {phrase: key for key, phrase in spec.relations.items()}
    for template in spec.caption_templates:
        match = _template_regex(template, spec).match(caption.strip())
        if not match:
            continue
        slots = match.groupdict()
        if "count" in slots and slots["count"] != spec.count_words[len(objects)]:
            continue
        for i, a in enumerate(objects):
            for j, b in enumerate(objects):
                if i == j:
                    continue
                if not _matches(a, slots, "a") or not _matches(b, slots, "b"):
                    continue
                if relation_between(a["box"], b["box"]) == phrase_to_rel[slots["rel"]]:
                    return True
    return False


def _matches(obj: dict, slots: Dict[str, str], prefix: str) -> bool:
    for attr, key in (("cls", "class"), ("color", "color"), ("size", "size")):
        value = slots.get(f"{prefix}_{attr}")
        if value is not None and value != obj[key]:
            return False
    return True
