"""Binary confusion-matrix statistics and per-round experiment records."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np


@dataclass(frozen=True)
class ConfusionCounts:
    """Counts with class 1 (attack) as the positive class."""

    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


class ClassificationMetrics(NamedTuple):
    accuracy: float
    precision: float
    sensitivity: float
    specificity: float
    f1: float


def confusion(predictions: Sequence[int], labels: Sequence[int]) -> ConfusionCounts:
    """Confusion counts for binary predictions against binary labels."""
    pred = np.asarray(predictions, dtype=np.int64)
    lab = np.asarray(labels, dtype=np.int64)
    if pred.shape != lab.shape or pred.ndim != 1:
        raise ValueError(f"length mismatch: {pred.shape} predictions vs {lab.shape} labels")
    for name, arr in (("predictions", pred), ("labels", lab)):
        if len(arr) and not np.isin(arr, (0, 1)).all():
            raise ValueError(f"{name} must be binary (0/1)")
    return ConfusionCounts(
        tp=int(((pred == 1) & (lab == 1)).sum()),
        fp=int(((pred == 1) & (lab == 0)).sum()),
        tn=int(((pred == 0) & (lab == 0)).sum()),
        fn=int(((pred == 0) & (lab == 1)).sum()),
    )


def _ratio(num: int, den: int) -> float:
    # 0/0 is defined as 0 so records stay plottable.
    return num / den if den else 0.0


def classification_metrics(c: ConfusionCounts) -> ClassificationMetrics:
    """Accuracy, precision, sensitivity, specificity and F1 from counts."""
    if c.total == 0:
        raise ValueError("metrics of an empty confusion matrix are undefined")
    precision = _ratio(c.tp, c.tp + c.fp)
    sensitivity = _ratio(c.tp, c.tp + c.fn)
    return ClassificationMetrics(
        accuracy=(c.tp + c.tn) / c.total,
        precision=precision,
        sensitivity=sensitivity,
        specificity=_ratio(c.tn, c.tn + c.fp),
        f1=_ratio_f1(precision, sensitivity),
    )


def _ratio_f1(precision: float, sensitivity: float) -> float:
    if precision + sensitivity == 0.0:
        return 0.0
    return 2.0 * precision * sensitivity / (precision + sensitivity)


def degenerate_ratios(c: ConfusionCounts) -> tuple[str, ...]:
    """Names of the rates that hit a 0/0 and were forced to 0."""
    flags = []
    if c.tp + c.fp == 0:
        flags.append("precision_undefined")
    if c.tp + c.fn == 0:
        flags.append("sensitivity_undefined")
    if c.tn + c.fp == 0:
        flags.append("specificity_undefined")
    return tuple(flags)


@dataclass(frozen=True)
class RoundRecord:
    """Everything observed in one aggregation round (or centralized block).

    ``epoch`` is the annealing-epoch index for runs driven by the annealer
    (0 for the bootstrap round), ``temperature`` likewise; both are None for
    the other drivers. ``flags`` carries event markers such as ``accepted``,
    ``accepted_worse``, ``reinitialized`` and ``*_undefined`` rate warnings.
    """

    round_index: int
    phase: str
    loss: float
    accuracy: float
    precision: float
    sensitivity: float
    specificity: float
    f1: float
    tau: int | None = None
    eta: float | None = None
    participants: tuple[int, ...] | None = None
    temperature: float | None = None
    epoch: int | None = None
    train_objective: float | None = None
    flags: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        for name in ("accuracy", "precision", "sensitivity", "specificity", "f1"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")

    def to_json_dict(self) -> dict:
        """JSON-ready mapping with a stable key order."""
        return {
            "round_index": self.round_index,
            "phase": self.phase,
            "tau": self.tau,
            "eta": self.eta,
            "participants": list(self.participants) if self.participants is not None else None,
            "loss": self.loss,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "f1": self.f1,
            "temperature": self.temperature,
            "epoch": self.epoch,
            "train_objective": self.train_objective,
            "flags": list(self.flags),
        }


def round_record(
    round_index: int,
    phase: str,
    loss: float,
    counts: ConfusionCounts,
    *,
    tau: int | None = None,
    eta: float | None = None,
    participants: Sequence[int] | None = None,
    temperature: float | None = None,
    epoch: int | None = None,
    train_objective: float | None = None,
    extra_flags: Sequence[str] = (),
) -> RoundRecord:
    """Build a RoundRecord from raw counts, computing the five rates."""
    m = classification_metrics(counts)
    return RoundRecord(
        round_index=round_index,
        phase=phase,
        loss=loss,
        accuracy=m.accuracy,
        precision=m.precision,
        sensitivity=m.sensitivity,
        specificity=m.specificity,
        f1=m.f1,
        tau=tau,
        eta=eta,
        participants=tuple(int(p) for p in participants) if participants is not None else None,
        temperature=temperature,
        epoch=epoch,
        train_objective=train_objective,
        flags=tuple(extra_flags) + degenerate_ratios(counts),
    )
