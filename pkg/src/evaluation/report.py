#!/usr/bin/env python3
"""
Rapports d'évaluation et fusion des courbes d'entraînement.
"""

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

from src.data.answers import AnswerVocab
from src.data.scene import SceneExample
from src.data.vocab import Vocab, detokenize
from src.evaluation.metrics import bleu4, exact_match, qa_accuracy, qa_accuracy_by_type, sentence_bleu
from src.inference.decoding import Prediction, beam_search, greedy_decode
from src.inference.vqa import vqa_predict
from src.model.weights import ModelWeights
from src.training.trainlog import TrainLog
from src.utils.io import atomic_open
from src.utils.logger import get_logger

logger = get_logger(__name__)


@dataclass
class EvalReport:
    """Identifiant du jeu de données, métriques et enregistrements par exemple."""

    dataset: str
    metrics: Dict[str, float] = field(default_factory=dict)
    examples: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {"dataset": self.dataset, "metrics": dict(self.metrics), "examples": list(self.examples)}

    def write_json(self, path: str) -> None:
        with atomic_open(path, "w") as f:
            json.dump(self.to_dict(), f, ensure_ascii=False, indent=2, sort_keys=True)

    def write_csv(self, path: str) -> None:
        """Un enregistrement par exemple : référence, hypothèse, score."""
        with atomic_open(path, "w") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["reference", "hypothesis", "score"])
            for ex in self.examples:
                writer.writerow([ex["reference"], ex["hypothesis"], repr(ex["score"])])


def decode_scenes(scenes: Sequence[SceneExample], weights: ModelWeights, beam: int = 1,
                  greedy: bool = False, max_len: Optional[int] = None, length_alpha: float = 0.0,
                  vocab: Optional[Vocab] = None, threads: int = 1) -> List[Prediction]:
    """Décode chaque scène ; le décodage est pur, donc parallélisable par scène."""

    def decode(scene: SceneExample) -> Prediction:
        if greedy:
            return greedy_decode(scene, weights, max_len, vocab)
        return beam_search(scene, weights, beam, max_len, length_alpha, vocab)

    if threads <= 1:
        return [decode(s) for s in scenes]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(decode, scenes))


def evaluate_captions(scenes: Sequence[SceneExample], weights: ModelWeights, vocab: Vocab,
                      dataset_id: str, beam: int = 1, greedy: bool = False,
                      max_len: Optional[int] = None, length_alpha: float = 0.0,
                      threads: int = 1) -> EvalReport:
    predictions = decode_scenes(scenes, weights, beam, greedy, max_len, length_alpha, vocab, threads)
    hypotheses = [p.text or "" for p in predictions]
    references = [detokenize(s.caption, vocab) for s in scenes]
    report = EvalReport(dataset_id)
    report.metrics["bleu4"] = bleu4(hypotheses, [[r] for r in references])
    report.metrics["exact_match"] = exact_match(hypotheses, references)
    for scene, hyp, ref in zip(scenes, hypotheses, references):
        score = sentence_bleu(hyp, [ref]) if hyp else 0.0
        report.examples.append({"scene_id": scene.scene_id, "reference": ref, "hypothesis": hyp, "score": score})
    logger.info(f"Évaluation légendes {dataset_id} : BLEU@4 {report.metrics['bleu4']:.4f}, "
                f"exact {report.metrics['exact_match']:.3f}")
    return report


def evaluate_vqa(scenes: Sequence[SceneExample], weights: ModelWeights, answers: AnswerVocab,
                 dataset_id: str, threads: int = 1) -> EvalReport:
    """Précision top-1 globale et par type ; les étiquettes doivent suivre `answers`."""
    items = [(scene, qa) for scene in scenes for qa in scene.qa]

    def predict(item):
        scene, qa = item
        return vqa_predict(scene, qa.question, weights, topk=1, answers=answers.answers)

    if threads <= 1:
        predictions = [predict(item) for item in items]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            predictions = list(pool.map(predict, items))
    top1 = [p.answer_ids[0] for p in predictions]
    gold = [qa.soft_label for _, qa in items]
    report = EvalReport(dataset_id)
    report.metrics["qa_acc"] = qa_accuracy(top1, gold)
    for qtype, value in qa_accuracy_by_type(top1, gold, [qa.qtype for _, qa in items]).items():
        report.metrics[f"qa_acc_{qtype}"] = value
    for (scene, qa), pred, p in zip(items, predictions, top1):
        report.examples.append({"scene_id": scene.scene_id, "reference": qa.answer,
                                "hypothesis": pred.answers[0][0], "score": float(qa.soft_label[p])})
    logger.info(f"Évaluation VQA {dataset_id} : précision {report.metrics['qa_acc']:.4f}")
    return report


def merge_curves(logs: Sequence[TrainLog], names: Optional[Sequence[str]] = None,
                 column: str = "loss") -> List[List[Any]]:
    """Aligne plusieurs journaux par étape : step, run1_<col>, run2_<col>, ..."""
    names = list(names) if names else [log.name for log in logs]
    if len(names) != len(logs):
        raise ValueError(f"{len(names)} noms pour {len(logs)} journaux")
    series = [{r.step: getattr(r, column) for r in log.records} for log in logs]
    steps = sorted(set().union(*series)) if series else []
    rows: List[List[Any]] = [["step"] + [f"{name}_{column}" for name in names]]
    for step in steps:
        rows.append([step] + [repr(s[step]) if step in s else "" for s in series])
    return rows


def write_curves(path: str, rows: List[List[Any]]) -> None:
    with atomic_open(path, "w") as f:
        csv.writer(f, lineterminator="\n").writerows(rows)
