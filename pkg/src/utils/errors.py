#!/usr/bin/env python3
"""
Hiérarchie d'exceptions du projet.
"""

from typing import Iterable


class UVLPError(Exception):
    """Erreur de base pour toutes les erreurs du modèle."""


class ShapeError(UVLPError, ValueError):
    """Dimensions incompatibles entre tenseurs."""


class DegenerateInputError(UVLPError, ValueError):
    """Entrée dégénérée (par exemple une normalisation sur une seule valeur)."""


class InvalidMaskError(UVLPError, ValueError):
    """Masque d'attention invalide (ligne entièrement masquée)."""


class ConfigError(UVLPError, ValueError):
    """Configuration invalide."""


class ConfigMismatchError(ConfigError):
    """Configuration incompatible avec un point de contrôle."""

    def __init__(self, fields: Iterable[str]):
        self.fields = sorted(fields)
        super().__init__(f"Configuration incompatible sur les champs : {', '.join(self.fields)}")


class DatasetParseError(UVLPError, ValueError):
    """Ligne de jeu de données mal formée."""

    def __init__(self, line_number: int, reason: str):
        self.line_number = line_number
        super().__init__(f"Ligne {line_number} invalide : {reason}")


class NonFiniteError(UVLPError, FloatingPointError):
    """Valeur non finie rencontrée pendant l'entraînement."""


class CheckpointError(UVLPError):
    """Erreur de lecture ou d'écriture d'un point de contrôle."""


class CheckpointVersionError(CheckpointError):
    """Version ou signature de point de contrôle non supportée."""


class CheckpointTruncatedError(CheckpointError):
    """Charge utile du point de contrôle tronquée."""


class CheckpointShapeError(CheckpointError):
    """Forme de tenseur incohérente dans le manifeste."""

    def __init__(self, name: str, expected, found):
        self.name = name
        super().__init__(f"Tenseur {name} : forme attendue {tuple(expected)}, trouvée {tuple(found)}")


class UsageError(UVLPError):
    """Mauvaise utilisation de la ligne de commande."""
