#!/usr/bin/env python3
"""
Journal d'entraînement : enregistrements par étape, métriques de validation et CSV.
"""

import csv
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, List, Optional

from src.utils.io import atomic_open
from src.utils.logger import get_logger

logger = get_logger(__name__)

TRAIN_HEADER = ["step", "objective", "loss", "acc", "wallclock_ms"]
VAL_HEADER = ["step", "metric", "value"]


@dataclass
class StepRecord:
    step: int
    objective: str
    loss: float
    acc: float
    wallclock_ms: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "StepRecord":
        return cls(
            step=int(data["step"]),
            objective=data["objective"],
            loss=float(data["loss"]),
            acc=float(data["acc"]),
            wallclock_ms=float(data["wallclock_ms"]),
        )


@dataclass
class ValRecord:
    step: int
    metric: str
    value: float


class TrainLog:
    """Enregistrements d'un entraînement ; les étapes sont strictement croissantes.

    Des abonnés peuvent être notifiés à chaque enregistrement, avec un filtre
    optionnel sur les champs (par exemple {"objective": "seq2seq"}).
    """

    def __init__(self, name: str = "run"):
        self.name = name
        self.records: List[StepRecord] = []
        self.val_records: List[ValRecord] = []
        self.subscribers: List[Dict[str, Any]] = []

    def __len__(self) -> int:
        return len(self.records)

    def record(self, step: int, objective: str, loss: float, acc: float, wallclock_ms: float) -> StepRecord:
        if self.records and step <= self.records[-1].step:
            raise ValueError(f"Étape {step} non croissante (dernière : {self.records[-1].step})")
        entry = StepRecord(int(step), str(objective), float(loss), float(acc), float(wallclock_ms))
        self.records.append(entry)
        self._notify(entry)
        return entry

    def record_val(self, step: int, metric: str, value: float) -> ValRecord:
        if self.val_records and step <= self.val_records[-1].step:
            raise ValueError(f"Étape de validation {step} non croissante")
        entry = ValRecord(int(step), metric, float(value))
        self.val_records.append(entry)
        return entry

    def subscribe(self, callback: Callable[[StepRecord], None],
                  record_filter: Optional[Dict[str, Any]] = None) -> None:
        self.subscribers.append({"filter": record_filter or {}, "callback": callback})

    def _notify(self, entry: StepRecord) -> None:
        for subscriber in self.subscribers:
            if all(getattr(entry, key) == value for key, value in subscriber["filter"].items()):
                subscriber["callback"](entry)

    def objective_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for r in self.records:
            counts[r.objective] = counts.get(r.objective, 0) + 1
        return counts

    def steps_to_reach(self, threshold: float, source: str = "val") -> Optional[int]:
        """Première étape où la métrique atteint le seuil (validation ou précision d'entraînement)."""
        series = ([(r.step, r.value) for r in self.val_records] if source == "val"
                  else [(r.step, r.acc) for r in self.records])
        for step, value in series:
            if value >= threshold:
                return step
        return None

    def final_val(self) -> Optional[float]:
        return self.val_records[-1].value if self.val_records else None

    def write_csv(self, path: str, include_wallclock: bool = True) -> None:
        """Écrit `path` (étapes) et `<path>.val.csv` (validation) si présente."""
        header = TRAIN_HEADER if include_wallclock else TRAIN_HEADER[:-1]
        with atomic_open(path, "w") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for r in self.records:
                row = [r.step, r.objective, repr(r.loss), repr(r.acc), f"{r.wallclock_ms:.3f}"]
                writer.writerow(row[:len(header)])
        if self.val_records:
            with atomic_open(val_path(path), "w") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(VAL_HEADER)
                for r in self.val_records:
                    writer.writerow([r.step, r.metric, repr(r.value)])
        logger.debug(f"Journal {self.name} écrit dans {path} ({len(self.records)} étapes)")

    @classmethod
    def read_csv(cls, path: str, name: Optional[str] = None) -> "TrainLog":
        log = cls(name or path)
        with open(path, "r", encoding="utf-8", newline="") as f:
            for row in csv.DictReader(f):
                row.setdefault("wallclock_ms", 0.0)
                entry = StepRecord.from_dict(row)
                log.record(entry.step, entry.objective, entry.loss, entry.acc, entry.wallclock_ms)
        try:
            with open(val_path(path), "r", encoding="utf-8", newline="") as f:
                for row in csv.DictReader(f):
                    log.record_val(int(row["step"]), row["metric"], float(row["value"]))
        except FileNotFoundError:
            pass
        return log


def val_path(path: str) -> str:
    return f"{path[:-4] if path.endswith('.csv') else path}.val.csv"
