#!/usr/bin/env python3
"""
Module de journalisation pour le modèle vision-langage.
"""

import sys
from pathlib import Path

from loguru import logger as _root_logger

_LEVELS = {"TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL"}

# Valeur par défaut tant que setup_logger n'a pas été appelé
_root_logger.configure(extra={"name": "uvlp"})


def setup_logger(level, log_format, log_file=None):
    """Configure le système de journalisation.

    Args:
        level (str): Niveau de journalisation (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_format (str): Format des messages de journal (syntaxe loguru)
        log_file (str, optional): Chemin du fichier de journal. Si None, les journaux sont envoyés à stdout.
    """
    level = level.upper()
    if level not in _LEVELS:
        raise ValueError(f"Niveau de journalisation invalide : {level}")

    # Remplacer la configuration existante
    _root_logger.remove()
    _root_logger.add(sys.stdout, level=level, format=log_format)

    # Handler de fichier (si spécifié)
    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        _root_logger.add(str(log_path), level=level, format=log_format)

    return _root_logger


def get_logger(name):
    """Obtient un logger nommé.

    Args:
        name (str): Nom du logger

    Returns:
        loguru.Logger: Logger lié au nom du module
    """
    return _root_logger.bind(name=name)
