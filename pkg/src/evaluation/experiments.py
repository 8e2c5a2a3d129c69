#!/usr/bin/env python3
"""
Expériences de bout en bout : accélération du fine-tuning par le pré-entraînement
et comparaison des deux usages des étiquettes de région.
"""

import json
import statistics
import time
from typing import Any, Dict, List, Optional, Sequence

from src.data.scene import SceneExample
from src.data.vocab import Vocab
from src.evaluation.report import evaluate_captions, merge_curves, write_curves
from src.training.settings import TrainConfig
from src.training.trainer import TrainResult, finetune_caption, finetune_vqa, pretrain
from src.utils.io import atomic_open
from src.utils.logger import get_logger

logger = get_logger(__name__)

TASKS = ("caption", "vqa")
ARMS = {
    "region_label_pretext": {"region_pretext": True, "class_probs_as_input": False},
    "region_label_input": {"region_pretext": False, "class_probs_as_input": True},
}


def _median_steps(values: Sequence[Optional[int]]) -> Optional[float]:
    """Médiane des étapes ; une exécution qui n'atteint pas le seuil compte comme infinie."""
    finite = [float("inf") if v is None else float(v) for v in values]
    m = statistics.median(finite)
    return None if m == float("inf") else m


def _with_model(cfg: TrainConfig, **model_fields: Any) -> TrainConfig:
    return cfg.model_copy(update={"model": cfg.model.model_copy(update=model_fields)})


def _finetune(task: str, train: Sequence[SceneExample], init, cfg: TrainConfig, vocab: Vocab,
              answers: Optional[Sequence[str]], val: Sequence[SceneExample], name: str,
              progress: bool) -> TrainResult:
    if task == "caption":
        return finetune_caption(train, init, cfg, vocab, val=val, progress=progress, name=name)
    return finetune_vqa(train, init, cfg, vocab, answers=answers, val=val, progress=progress, name=name)


def run_speedup_experiment(pretrain_data: Sequence[SceneExample], train: Sequence[SceneExample],
                           val: Sequence[SceneExample], pretrain_cfg: TrainConfig,
                           finetune_cfgs: Dict[str, TrainConfig], vocab: Vocab,
                           answers: Optional[Sequence[str]] = None, seeds: Sequence[int] = (0, 1, 2),
                           threshold: float = 0.9, tasks: Sequence[str] = TASKS,
                           curves_path: Optional[str] = None, progress: bool = False) -> Dict[str, Any]:
    """Compare, par tâche, le fine-tuning depuis un modèle pré-entraîné et depuis zéro.

    Args:
        pretrain_data (Sequence[SceneExample]): Données de pré-entraînement
        train (Sequence[SceneExample]): Données aval (grammaire disjointe)
        val (Sequence[SceneExample]): Validation aval
        pretrain_cfg (TrainConfig): Configuration du pré-entraînement
        finetune_cfgs (Dict[str, TrainConfig]): Configuration par tâche ("caption", "vqa")
        vocab (Vocab): Vocabulaire commun
        answers (Sequence[str], optional): Réponses indexées par les étiquettes souples
        seeds (Sequence[int]): Graines ; la médiane est prise sur elles
        threshold (float): Seuil de la métrique de validation
        tasks (Sequence[str]): Tâches à exécuter
        curves_path (str, optional): CSV des courbes de perte (une colonne par exécution)
        progress (bool): Barres de progression

    Returns:
        Dict[str, Any]: Étapes pour atteindre le seuil et métrique finale, par tâche et initialisation
    """
    start = time.time()
    runs: Dict[str, Dict[str, List[TrainResult]]] = {t: {"pretrained": [], "scratch": []} for t in tasks}
    for seed in seeds:
        logger.info(f"Expérience d'accélération : graine {seed}")
        pre = pretrain(pretrain_data, pretrain_cfg, vocab, seed=seed, progress=progress, name=f"pretrain-s{seed}")
        for task in tasks:
            cfg = finetune_cfgs[task].model_copy(update={"seed": seed})
            for arm, init in (("pretrained", pre.checkpoint), ("scratch", None)):
                result = _finetune(task, train, init, cfg, vocab, answers, val,
                                   f"{task}-{arm}-s{seed}", progress)
                runs[task][arm].append(result)

    summary: Dict[str, Any] = {"threshold": threshold, "seeds": list(seeds), "tasks": {}}
    for task in tasks:
        entry = {}
        for arm, results in runs[task].items():
            steps = [r.log.steps_to_reach(threshold) for r in results]
            finals = [r.log.final_val() or 0.0 for r in results]
            entry[arm] = {"steps_to_reach": steps, "median_steps": _median_steps(steps),
                          "median_final_val": statistics.median(finals)}
        pre_steps, scratch_steps = entry["pretrained"]["median_steps"], entry["scratch"]["median_steps"]
        entry["faster_with_pretraining"] = pre_steps is not None and (scratch_steps is None or pre_steps < scratch_steps)
        entry["final_not_worse"] = entry["pretrained"]["median_final_val"] >= entry["scratch"]["median_final_val"]
        summary["tasks"][task] = entry
        logger.info(f"Tâche {task} : médiane {pre_steps} étapes (pré-entraîné) contre {scratch_steps} (zéro)")

    if curves_path:
        logs = [r.log for task in tasks for arm in ("pretrained", "scratch") for r in runs[task][arm]]
        write_curves(curves_path, merge_curves(logs))
    summary["duration_s"] = time.time() - start
    return summary


def run_region_label_ablation(pretrain_data: Sequence[SceneExample], train: Sequence[SceneExample],
                              test: Sequence[SceneExample], pretrain_cfg: TrainConfig,
                              caption_cfg: TrainConfig, vocab: Vocab, beam: int = 1,
                              report_path: Optional[str] = None, progress: bool = False) -> Dict[str, Any]:
    """Exécute les deux bras (étiquette en prétexte / probabilités en entrée) et compare BLEU@4."""
    report: Dict[str, Any] = {"arms": {}}
    for arm, fields in ARMS.items():
        logger.info(f"Ablation des étiquettes de région : bras {arm}")
        pre = pretrain(pretrain_data, _with_model(pretrain_cfg, **fields), vocab,
                       progress=progress, name=f"pretrain-{arm}")
        tuned = finetune_caption(train, pre.checkpoint, _with_model(caption_cfg, **fields), vocab,
                                 progress=progress, name=f"caption-{arm}")
        evaluation = evaluate_captions(test, tuned.checkpoint.weights, vocab, f"test-{arm}",
                                       beam=beam, greedy=beam == 1)
        report["arms"][arm] = {
            "pretrain_final_loss": pre.log.records[-1].loss if pre.log.records else None,
            "caption_final_loss": tuned.log.records[-1].loss if tuned.log.records else None,
            **evaluation.metrics,
        }
    scores = {arm: values["bleu4"] for arm, values in report["arms"].items()}
    report["best_arm"] = max(scores, key=scores.get)
    if report_path:
        with atomic_open(report_path, "w") as f:
            json.dump(report, f, ensure_ascii=False, indent=2, sort_keys=True)
    logger.info(f"Ablation terminée : BLEU@4 {scores}")
    return report
