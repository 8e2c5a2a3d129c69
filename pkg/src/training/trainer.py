#!/usr/bin/env python3
"""
Boucles d'entraînement : pré-entraînement alterné, fine-tuning légende et VQA.
"""

import math
import time
from dataclasses import dataclass
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from src.autodiff import ops
from src.autodiff.optim import AdamOptimizer, clip_grad_norm
from src.autodiff.tensor import Tensor, backward, no_grad, reset_tape
from src.data.answers import build_answer_vocab, relabel
from src.data.scene import SceneExample
from src.data.vocab import Vocab
from src.masking.schedule import Objective, ObjectiveSchedule
from src.model.settings import trunk_mismatches
from src.model.weights import ModelWeights
from src.training.checkpoint import Checkpoint, save_checkpoint
from src.training.objectives import flatten_qa, masked_lm_loss, region_pretext_loss, vqa_loss
from src.training.settings import RngStreams, TrainConfig
from src.training.trainlog import TrainLog
from src.utils.errors import ConfigError, ConfigMismatchError, NonFiniteError
from src.utils.logger import get_logger
import config

logger = get_logger(__name__)


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    log: TrainLog


def transfer_weights(init: ModelWeights, cfg: TrainConfig, rng: np.random.Generator,
                     skip_prefixes: Sequence[str] = ()) -> ModelWeights:
    """Nouveaux poids pour `cfg`, avec le tronc recopié depuis `init`.

    Raises:
        ConfigMismatchError: Si le tronc de `init` diffère de celui demandé
    """
    mismatched = trunk_mismatches(init.config, cfg.model)
    if mismatched:
        raise ConfigMismatchError(mismatched)
    weights = ModelWeights.initialize(cfg.model, rng)
    for name, tensor in weights.items():
        if name in init and not name.startswith(tuple(skip_prefixes)) and init[name].shape == tensor.shape:
            tensor.data = init[name].data.copy()
    return weights


class Trainer:
    """Boucle commune : lot, objectif, perte, rétropropagation, Adam, journal."""

    task = "pretrain"
    lam: Optional[float] = None
    val_metric = "mlm_acc"

    def __init__(self, cfg: TrainConfig, vocab: Vocab, weights: Optional[ModelWeights] = None,
                 name: Optional[str] = None, extra: Optional[Dict[str, Any]] = None,
                 progress: bool = False):
        """Initialise un entraîneur.

        Args:
            cfg (TrainConfig): Configuration ; lambda est fixé par la tâche si elle en impose un
            vocab (Vocab): Vocabulaire du jeu de données
            weights (ModelWeights, optional): Poids de départ (initialisation fraîche sinon)
            name (str, optional): Nom de l'exécution dans les journaux
            extra (Dict[str, Any], optional): Métadonnées recopiées dans le point de contrôle
            progress (bool): Afficher une barre de progression
        """
        if self.lam is not None and cfg.lam != self.lam:
            cfg = cfg.model_copy(update={"lam": self.lam})
        if len(vocab) != cfg.model.vocab_size:
            raise ConfigError(f"Vocabulaire de {len(vocab)} tokens, le modèle en attend {cfg.model.vocab_size}")
        self.cfg = cfg
        self.vocab = vocab
        self.name = name or self.task
        self.streams = RngStreams(cfg.seed)
        self.weights = weights if weights is not None else ModelWeights.initialize(cfg.model, self.streams.init)
        self.extra = dict(extra or {})
        self.extra.setdefault("vocab", vocab.to_list())
        self.schedule = ObjectiveSchedule(cfg.lam)
        self.log = TrainLog(self.name)
        self.optimizer = AdamOptimizer(self.weights.tensors, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2,
                                       eps=cfg.eps, warmup=cfg.warmup)
        self.progress = progress
        self.step = 0
        logger.info(f"Entraîneur {self.name} ({self.task}) initialisé : lambda={cfg.lam}, "
                    f"{cfg.steps} étapes, lot de {cfg.batch_size}")

    # Points d'extension des sous-classes

    def items(self, dataset: Sequence[SceneExample]) -> List[Any]:
        return list(dataset)

    def compute_loss(self, batch: List[Any], objective: Objective) -> Tuple[Tensor, float]:
        loss, acc, _ = masked_lm_loss(batch, objective, self.weights, self.cfg, self.streams.corruption,
                                      self.vocab, dropout_rng=self._dropout_rng())
        if self.cfg.model.region_pretext:
            pretext, _ = region_pretext_loss(batch, self.weights, self.cfg, self.streams.corruption,
                                             objective, dropout_rng=self._dropout_rng())
            loss = ops.add(loss, pretext)
        return loss, acc

    def evaluate(self, val: Sequence[SceneExample]) -> float:
        """Précision du modèle de langue masqué (seq2seq) sur la validation, corruption à graine fixe."""
        return masked_lm_accuracy(val, self.weights, self.cfg, self.vocab)

    # Boucle

    def _dropout_rng(self) -> Optional[np.random.Generator]:
        return self.streams.dropout if self.cfg.model.dropout > 0 else None

    def _batches(self, items: List[Any]) -> Iterator[List[Any]]:
        n = len(items)
        size = min(self.cfg.batch_size, n)
        while True:
            order = self.streams.data.permutation(n)
            for start in range(0, n - size + 1, size):
                yield [items[i] for i in order[start:start + size]]

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(self.weights, self.cfg, self.step, self.extra)

    def run(self, dataset: Sequence[SceneExample], val: Optional[Sequence[SceneExample]] = None,
            checkpoint_path: Optional[str] = None) -> TrainResult:
        """Exécute `cfg.steps` étapes d'optimisation.

        Raises:
            NonFiniteError: Si la perte devient non finie
        """
        items = self.items(dataset)
        if not items:
            raise ValueError("Jeu de données vide")
        val = self.prepare_val(val) if val else None
        batches = self._batches(items)
        started = time.perf_counter()

        steps = range(self.step + 1, self.step + self.cfg.steps + 1)
        for step in tqdm(steps, desc=self.name, disable=not self.progress, leave=False):
            reset_tape()
            self.weights.zero_grad()
            objective = self.schedule.next()
            loss, acc = self.compute_loss(next(batches), objective)
            value = loss.item()
            if not math.isfinite(value):
                raise NonFiniteError(f"Perte non finie ({value}) à l'étape {step}, objectif {objective.value}")
            backward(loss)
            grads = self.optimizer.collect_grads()
            clip_grad_norm(grads, self.cfg.clip_norm)
            self.optimizer.step(grads)
            self.step = step

            entry = self.log.record(step, objective.value, value, acc, (time.perf_counter() - started) * 1e3)
            logger.debug(f"{self.name} {entry.to_dict()}")
            if step % self.cfg.log_every == 0:
                logger.info(f"{self.name} étape {step} : perte {value:.4f}, précision {acc:.3f} ({objective.value})")
            if val and self.cfg.eval_every and (step % self.cfg.eval_every == 0 or step == steps[-1]):
                with no_grad():
                    metric = self.evaluate(val)
                self.log.record_val(step, self.val_metric, metric)
                logger.info(f"{self.name} étape {step} : {self.val_metric} validation {metric:.4f}")
            if checkpoint_path and self.cfg.checkpoint_every and step % self.cfg.checkpoint_every == 0:
                save_checkpoint(self.weights, self.cfg, step, checkpoint_path, self.extra)

        if checkpoint_path:
            save_checkpoint(self.weights, self.cfg, self.step, checkpoint_path, self.extra)
        counts = self.log.objective_counts()
        logger.info(f"{self.name} terminé à l'étape {self.step} : objectifs {counts}")
        return TrainResult(self.checkpoint(), self.log)

    def prepare_val(self, val: Sequence[SceneExample]) -> List[Any]:
        return list(val)


class Pretrainer(Trainer):
    """Pré-entraînement : alternance seq2seq / bidirectionnel selon lambda."""

    task = "pretrain"


class CaptionFinetuner(Trainer):
    """Fine-tuning légende : objectif seq2seq à chaque lot."""

    task = "finetune-caption"
    lam = config.LAMBDAS["caption"]


class VqaFinetuner(Trainer):
    """Fine-tuning VQA : objectif bidirectionnel, tête sigmoïde, aucune corruption."""

    task = "finetune-vqa"
    lam = config.LAMBDAS["vqa"]
    val_metric = "qa_acc"

    def items(self, dataset: Sequence[SceneExample]) -> List[Any]:
        return flatten_qa(dataset)

    def prepare_val(self, val: Sequence[SceneExample]) -> List[Any]:
        return flatten_qa(val)

    def compute_loss(self, batch: List[Any], objective: Objective) -> Tuple[Tensor, float]:
        return vqa_loss(batch, self.weights, self.cfg, dropout_rng=self._dropout_rng())

    def evaluate(self, val: Sequence[Any]) -> float:
        return qa_items_accuracy(val, self.weights, self.cfg.batch_size)


def masked_lm_accuracy(scenes: Sequence[SceneExample], weights: ModelWeights, cfg: TrainConfig,
                       vocab: Vocab, objective: Objective = Objective.SEQ2SEQ) -> float:
    """Précision aux positions masquées, corruption tirée d'un générateur à graine fixe."""
    rng = np.random.default_rng(cfg.seed)
    eval_cfg = cfg.model_copy(update={"strict_bert_masking": False})
    hits = total = 0
    with no_grad():
        for start in range(0, len(scenes), cfg.batch_size):
            batch = list(scenes[start:start + cfg.batch_size])
            _, acc, plans = masked_lm_loss(batch, objective, weights, eval_cfg, rng, vocab)
            n = sum(len(p) for p in plans)
            hits += acc * n
            total += n
    return hits / total if total else 0.0


def qa_items_accuracy(items: Sequence[Any], weights: ModelWeights, batch_size: int) -> float:
    scores = []
    with no_grad():
        for start in range(0, len(items), batch_size):
            batch = list(items[start:start + batch_size])
            _, acc = vqa_loss(batch, weights)
            scores.append(acc * len(batch))
    return float(np.sum(scores) / len(items)) if items else 0.0


def pretrain(dataset: Sequence[SceneExample], cfg: TrainConfig, vocab: Vocab, seed: Optional[int] = None,
             val: Optional[Sequence[SceneExample]] = None, checkpoint_path: Optional[str] = None,
             progress: bool = False, name: Optional[str] = None) -> TrainResult:
    """Pré-entraîne un modèle frais ; entièrement déterminé par (données, configuration, graine)."""
    if seed is not None:
        cfg = cfg.model_copy(update={"seed": seed})
    trainer = Pretrainer(cfg, vocab, progress=progress, name=name)
    return trainer.run(dataset, val, checkpoint_path)


def finetune_caption(dataset: Sequence[SceneExample], init: Optional[Checkpoint], cfg: TrainConfig,
                     vocab: Vocab, val: Optional[Sequence[SceneExample]] = None,
                     checkpoint_path: Optional[str] = None, progress: bool = False,
                     name: Optional[str] = None) -> TrainResult:
    """Fine-tuning légende depuis un point de contrôle ou depuis des poids frais (init=None).

    Raises:
        ConfigMismatchError: Si le tronc du point de contrôle diffère de `cfg.model`
    """
    weights = None
    if init is not None:
        weights = transfer_weights(init.weights, cfg, RngStreams(cfg.seed).init)
    trainer = CaptionFinetuner(cfg, vocab, weights=weights, progress=progress, name=name)
    return trainer.run(dataset, val, checkpoint_path)


def finetune_vqa(dataset: Sequence[SceneExample], init: Optional[Checkpoint], cfg: TrainConfig,
                 vocab: Vocab, answers: Optional[Sequence[str]] = None,
                 val: Optional[Sequence[SceneExample]] = None, checkpoint_path: Optional[str] = None,
                 progress: bool = False, name: Optional[str] = None) -> TrainResult:
    """Fine-tuning VQA ; la tête est toujours réinitialisée, même si le tronc est chargé.

    Args:
        answers (Sequence[str], optional): Réponses indexées par les étiquettes souples actuelles

    Raises:
        ConfigMismatchError: Si le tronc du point de contrôle diffère de `cfg.model`
    """
    answer_vocab, dataset = build_answer_vocab(dataset, cfg.model.n_answers, source_answers=answers)
    if val:
        val = relabel(val, answer_vocab, source_answers=answers)
    if len(answer_vocab) != cfg.model.n_answers:
        cfg = cfg.model_copy(update={"model": cfg.model.model_copy(update={"n_answers": len(answer_vocab)})})
    streams = RngStreams(cfg.seed)
    weights = None
    if init is not None:
        weights = transfer_weights(init.weights, cfg, streams["head"], skip_prefixes=("vqa.",))
    trainer = VqaFinetuner(cfg, vocab, weights=weights, extra={"answers": answer_vocab.answers},
                           progress=progress, name=name)
    return trainer.run(dataset, val, checkpoint_path)
