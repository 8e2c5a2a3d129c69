#!/usr/bin/env python3
"""
Fonctions de perte : modèle de langue masqué, prétexte de région et VQA.
"""

from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.autodiff import ops
from src.autodiff.tensor import Tensor
from src.data.scene import QAPair, SceneExample
from src.data.vocab import Vocab, text_slots
from src.masking.attention import batch_masks, text_start
from src.masking.corruption import CorruptionPlan, corrupt_tokens
from src.masking.schedule import Objective
from src.model.embeddings import assemble_scenes
from src.model.heads import lm_logits, pretext_logits, vqa_logits
from src.model.transformer import forward
from src.model.weights import ModelWeights
from src.training.settings import TrainConfig
from src.utils.errors import ConfigError, ShapeError
from src.utils.logger import get_logger

logger = get_logger(__name__)

QAItem = Tuple[SceneExample, QAPair]


def caption_slots(batch: Sequence[SceneExample], T: int) -> np.ndarray:
    return np.array([text_slots(scene.caption, T) for scene in batch], dtype=np.int64)


def masked_lm_loss(batch: Sequence[SceneExample], objective: Objective, weights: ModelWeights,
                   cfg: TrainConfig, rng: np.random.Generator, vocab: Vocab,
                   dropout_rng: Optional[np.random.Generator] = None
                   ) -> Tuple[Tensor, float, List[CorruptionPlan]]:
    """Perte de prédiction des tokens masqués sous l'objectif donné.

    La corruption précède tout ce qui dépend de l'objectif : à graine égale, le
    plan est identique pour les deux objectifs.

    Args:
        batch (Sequence[SceneExample]): Scènes du lot
        objective (Objective): seq2seq ou bidirectionnel
        weights (ModelWeights): Poids
        cfg (TrainConfig): Configuration (taux de masquage)
        rng (np.random.Generator): Générateur de corruption
        vocab (Vocab): Vocabulaire (remplacements aléatoires)
        dropout_rng (np.random.Generator, optional): Générateur de dropout

    Returns:
        Tuple[Tensor, float, List[CorruptionPlan]]: Perte moyenne, précision aux
            positions masquées et plans de corruption
    """
    if not batch:
        raise ValueError("Lot vide")
    mcfg = weights.config
    clean = caption_slots(batch, mcfg.T)
    corrupted = np.empty_like(clean)
    plans = []
    for b, row in enumerate(clean):
        corrupted[b], plan = corrupt_tokens(row, rng, cfg.mask_rate, cfg.p_mask, cfg.p_rand,
                                            cfg.p_keep, vocab, strict=cfg.strict_bert_masking)
        plans.append(plan)

    batch_index = np.array([b for b, plan in enumerate(plans) for _ in plan.masked_positions], dtype=np.int64)
    slots = np.array([p for plan in plans for p in plan.masked_positions], dtype=np.int64)
    targets = np.array([t for plan in plans for t in plan.original_ids], dtype=np.int64)
    if targets.size == 0:
        logger.warning("Aucune position masquée dans le lot : perte nulle")
        return Tensor(0.0), 0.0, plans

    inp = assemble_scenes(batch, corrupted, objective, weights.tables, mcfg)
    mask = batch_masks(objective, mcfg.N, mcfg.T, corrupted, mcfg.visual_sees_sep)
    H = forward(inp, mask, weights, mcfg, rng=dropout_rng)
    logits = lm_logits(H, text_start(mcfg.N) + slots, weights, batch_index)
    loss = ops.cross_entropy(logits, targets)
    accuracy = float(np.mean(np.argmax(logits.data, axis=-1) == targets))
    return loss, accuracy, plans


def select_regions(n_scenes: int, N: int, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Sélection (B, N) de régions ; au moins une par scène."""
    selected = rng.random((n_scenes, N)) < rate
    for b in np.flatnonzero(~selected.any(axis=1)):
        selected[b, rng.integers(0, N)] = True
    return selected


def region_pretext_loss(batch: Sequence[SceneExample], weights: ModelWeights, cfg: TrainConfig,
                        rng: np.random.Generator, objective: Objective = Objective.BIDIRECTIONAL,
                        dropout_rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, float]:
    """Prédit la classe des régions dont les caractéristiques sont annulées.

    La cible est l'argmax de C_i ; la branche classe/géométrie reste en entrée.

    Raises:
        ConfigError: Si la tête de prétexte est désactivée
    """
    mcfg = weights.config
    if not mcfg.region_pretext:
        raise ConfigError("region_pretext_loss exige region_pretext=True")
    selected = select_regions(len(batch), mcfg.N, cfg.mask_rate, rng)
    batch_index, region_index = np.nonzero(selected)
    targets = np.array([int(np.argmax(batch[b].regions[i].class_probs))
                        for b, i in zip(batch_index, region_index)], dtype=np.int64)

    text = caption_slots(batch, mcfg.T)
    inp = assemble_scenes(batch, text, objective, weights.tables, mcfg, zero_regions=selected)
    mask = batch_masks(objective, mcfg.N, mcfg.T, text, mcfg.visual_sees_sep)
    H = forward(inp, mask, weights, mcfg, rng=dropout_rng)
    logits = pretext_logits(H, batch_index, region_index, weights)
    loss = ops.cross_entropy(logits, targets)
    accuracy = float(np.mean(np.argmax(logits.data, axis=-1) == targets))
    return loss, accuracy


def flatten_qa(scenes: Sequence[SceneExample]) -> List[QAItem]:
    return [(scene, qa) for scene in scenes for qa in scene.qa]


def vqa_forward(items: Sequence[QAItem], weights: ModelWeights,
                dropout_rng: Optional[np.random.Generator] = None) -> Tensor:
    """Logits VQA (B, k) ; les questions passent telles quelles (aucune corruption)."""
    mcfg = weights.config
    scenes = [scene for scene, _ in items]
    text = np.array([text_slots(qa.question, mcfg.T) for _, qa in items], dtype=np.int64)
    inp = assemble_scenes(scenes, text, Objective.BIDIRECTIONAL, weights.tables, mcfg)
    mask = batch_masks(Objective.BIDIRECTIONAL, mcfg.N, mcfg.T, text, mcfg.visual_sees_sep)
    H = forward(inp, mask, weights, mcfg, rng=dropout_rng)
    return vqa_logits(H, weights)


def vqa_loss(items: Sequence[QAItem], weights: ModelWeights, cfg: Optional[TrainConfig] = None,
             dropout_rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, float]:
    """Entropie croisée binaire moyenne des scores sigmoïdes contre les étiquettes souples.

    Returns:
        Tuple[Tensor, float]: Perte et précision top-1 (étiquette souple à la réponse prédite)
    """
    if not items:
        raise ValueError("Lot vide")
    k = weights.config.n_answers
    labels = np.array([qa.soft_label for _, qa in items], dtype=np.float64)
    if labels.shape != (len(items), k):
        raise ShapeError(f"Étiquettes souples de forme {labels.shape}, k={k} attendu")
    logits = vqa_forward(items, weights, dropout_rng)
    loss = ops.binary_cross_entropy_with_logits(logits, labels)
    top1 = np.argmax(logits.data, axis=-1)
    accuracy = float(labels[np.arange(len(items)), top1].mean())
    return loss, accuracy


# Pertes disponibles ; pas de tâche de correspondance image-texte
LOSS_REGISTRY: Dict[str, Callable] = {
    "masked_lm": masked_lm_loss,
    "region_pretext": region_pretext_loss,
    "vqa_bce": vqa_loss,
}

