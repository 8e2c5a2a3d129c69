#!/usr/bin/env python3
"""
Templates de légendes et de questions de la grammaire synthétique par défaut.
"""

# Classes d'objets (l = 16)
OBJECT_CLASSES = [
    "square", "circle", "triangle", "star", "hexagon", "diamond", "cross", "heart",
    "ring", "arrow", "moon", "cube", "cone", "pyramid", "cylinder", "sphere",
]

# Attributs
COLORS = ["red", "blue", "green", "yellow", "purple", "orange", "black", "white"]
SIZES = ["small", "medium", "large"]

# Relations spatiales (clé -> expression)
RELATIONS = {
    "left": "left of",
    "right": "right of",
    "above": "above",
    "below": "below",
}

# Mots de dénombrement, indexés par le nombre d'objets
COUNT_WORDS = ["zero", "one", "two", "three", "four", "five", "six"]

# Templates de légendes : chacun mentionne deux objets et une relation
CAPTION_TEMPLATES = [
    # Description complète des deux objets
    "a {a_size} {a_color} {a_cls} is {rel} a {b_size} {b_color} {b_cls}",

    # Couleurs uniquement
    "there is a {a_color} {a_cls} {rel} a {b_color} {b_cls}",

    # Avec le nombre d'objets de la scène
    "{count} objects with a {a_color} {a_cls} {rel} a {b_color} {b_cls}",

    # Tailles uniquement
    "the {a_size} {a_cls} is {rel} the {b_size} {b_cls}",

    # Variante mixte
    "a {a_color} {a_cls} sits {rel} a {b_size} {b_cls}",

    # Nombre de formes et couleurs
    "{count} shapes where the {a_color} {a_cls} is {rel} the {b_color} {b_cls}",
]

# Templates de questions, par type de réponse
QUESTION_TEMPLATES = {
    # Attribut : couleur d'une classe
    "color": "what color is the {cls}",

    # Classe : forme de l'objet d'une couleur donnée
    "class": "what shape is the {color} object",

    # Attribut : taille
    "size": "what size is the {color} {cls}",

    # Dénombrement
    "count": "how many objects are there",
}

# Type de réponse de chaque template (répartition de l'exactitude)
QUESTION_ANSWER_TYPES = {
    "color": "attribute",
    "size": "attribute",
    "class": "class",
    "count": "count",
}

# Champs autorisés dans les templates
CAPTION_FIELDS = {"a_size", "a_color", "a_cls", "b_size", "b_color", "b_cls", "rel", "count"}
QUESTION_FIELDS = {"cls", "color", "size"}

DEFAULT_GRAMMAR = {
    "classes": OBJECT_CLASSES,
    "colors": COLORS,
    "sizes": SIZES,
    "relations": RELATIONS,
    "count_words": COUNT_WORDS,
    "caption_templates": CAPTION_TEMPLATES,
    "question_templates": QUESTION_TEMPLATES,
    "min_objects": 2,
    "max_objects": 4,
}
