"""
Configuration globale pour le modèle unifié vision-langage.
"""

import os

from dotenv import load_dotenv

# Variables d'environnement (fichier .env optionnel à la racine)
load_dotenv()

# Configuration du modèle à l'échelle "bureau" (valeurs par défaut)
MODEL_DEFAULTS = {
    "layers": 2,
    "d": 64,
    "heads": 4,
    "ffn": 256,
    "N": 8,  # Nombre de régions par scène
    "T": 20,  # Longueur maximale des légendes
    "d_in": 32,  # Taille des caractéristiques de région
    "n_answers": 32,  # Taille du vocabulaire de réponses
    "vqa_hidden": 128,
    "dropout": 0.1,
    "layer_norm_eps": 1e-12,
    "region_positional": "none",  # "global" ou "none"
    "visual_sees_sep": True,
}

# Configuration de l'entraînement
TRAIN_DEFAULTS = {
    "lr": 3e-3,
    "beta1": 0.9,
    "beta2": 0.999,
    "eps": 1e-8,
    "warmup": 100,
    "batch_size": 16,
    "steps": 1000,
    "clip_norm": 1.0,
    "checkpoint_every": 0,  # 0 = uniquement à la fin
    "eval_every": 50,
    "log_every": 50,
}

# Schéma de masquage BERT (15 %, puis 80/10/10)
MASKING = {
    "rate": 0.15,
    "p_mask": 0.8,
    "p_rand": 0.1,
    "p_keep": 0.1,
    "strict_bert_masking": False,
}

# Proportion de batches seq2seq selon la tâche
LAMBDAS = {
    "pretrain": 0.75,
    "caption": 1.0,
    "vqa": 0.0,
}

# Paramètres de décodage
DECODING = {
    "beam": 5,
    "length_alpha": 0.0,
    "topk": 5,
}

# Préréglages grande échelle (documentation uniquement, jamais par défaut)
PRESETS = {
    "bert_base": {"layers": 12, "d": 768, "heads": 12, "ffn": 3072, "N": 100, "T": 20,
                  "n_classes": 1600, "n_answers": 3129},
    "cc": {"batch_size": 64 * 8, "lr": 1e-4 * 8, "epochs": 30, "lambda": 0.75},
    "coco": {"batch_size": 64 * 8, "lr": 3e-5 * 8, "epochs": 30, "lambda": 1.0},
    "vqa2": {"batch_size": 64 * 2, "lr": 2e-5 * 2, "epochs": 20, "lambda": 0.0},
    "flickr30k": {"batch_size": 64 * 8, "lr": 3e-5 * 8, "epochs": 30, "lambda": 1.0},
    "coco_scratch": {"batch_size": 64 * 8, "lr": 3e-4 * 8, "epochs": 30, "lambda": 1.0},
}

# Configuration du système de journalisation
LOGGING = {
    "level": os.getenv("UVLP_LOG_LEVEL", "INFO"),
    "format": "{time:YYYY-MM-DD HH:mm:ss} - {extra[name]} - {level} - {message}",
    "file": os.getenv("UVLP_LOG_FILE") or None,
}

# Parallélisme du décodage (évaluation)
THREADS = max(1, int(os.getenv("UVLP_THREADS", "1")))

# Format des points de contrôle
CHECKPOINT = {
    "magic": b"UVLP1",
    "version": 1,
}
