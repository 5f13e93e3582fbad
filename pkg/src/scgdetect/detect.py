"""Thresholding, box extraction, TP/FP/FN matching and metric reports."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ContractError, DataError

DEFAULT_TAU_GRID = tuple(round(0.05 * i, 2) for i in range(1, 20))
DEFAULT_MIN_BOX_LEN = 2


@dataclass(frozen=True)
class DetectionBox:
    start: int
    end: int      # inclusive
    peak_prob: float = float("nan")

    def __contains__(self, index) -> bool:
        return self.start <= index <= self.end

    def __len__(self) -> int:
        return self.end - self.start + 1


def threshold_mask(probs, tau: float) -> np.ndarray:
    """``1`` where ``probs > tau`` (strict)."""
    return (np.asarray(probs) > tau).astype(np.uint8)


def mask_to_boxes(mask, min_len: int = DEFAULT_MIN_BOX_LEN, probs=None) -> list[DetectionBox]:
    """Maximal runs of ones at least ``min_len`` long, ordered by start."""
    if min_len < 1:
        raise ValueError("min_len must be >= 1")
    m = np.asarray(mask).astype(bool).ravel()
    if not m.any():
        return []
    edges = np.diff(np.concatenate([[0], m.view(np.int8), [0]]))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1
    boxes = []
    for s, e in zip(starts, ends):
        if e - s + 1 >= min_len:
            peak = float(np.max(probs[s:e + 1])) if probs is not None else float("nan")
            boxes.append(DetectionBox(int(s), int(e), peak))
    return boxes


def match_detections(boxes: Sequence[DetectionBox], ao_indices) -> tuple[int, int, int]:
    """One-to-one greedy matching of boxes to the AO points they contain.

    Boxes must be sorted and disjoint, so every AO falls in at most one box
    and a single sweep yields a maximum matching.
    """
    ao = np.sort(np.asarray(ao_indices, dtype=np.int64))
    prev_end = None
    for b in boxes:
        if b.start > b.end:
            raise ContractError(f"box start {b.start} after end {b.end}")
        if prev_end is not None and b.start <= prev_end:
            raise ContractError("boxes must be sorted and non-overlapping")
        prev_end = b.end
    tp = 0
    j = 0
    for b in boxes:
        while j < len(ao) and ao[j] < b.start:
            j += 1
        if j < len(ao) and ao[j] <= b.end:
            tp += 1
            j += 1
            # further AO in the same box stay unmatched
            while j < len(ao) and ao[j] <= b.end:
                j += 1
    return tp, len(boxes) - tp, len(ao) - tp


@dataclass
class Scores:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        d = self.tp + self.fp
        return self.tp / d if d else 0.0

    @property
    def recall(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else 0.0

    @property
    def f1(self) -> float:
        d = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / d if d else 0.0

    def __add__(self, other: "Scores") -> "Scores":
        return Scores(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "precision": self.precision,
                "recall": self.recall, "f1": self.f1}


def compute_metrics(tp: int, fp: int, fn: int) -> Scores:
    if min(tp, fp, fn) < 0:
        raise ValueError("counts must be non-negative")
    return Scores(int(tp), int(fp), int(fn))


def f1_from_pr(precision: float, recall: float) -> float:
    s = precision + recall
    return 2 * precision * recall / s if s > 0 else 0.0


@dataclass
class MetricsReport:
    """Per-user counts plus an aggregate.

    ``averaging="users"`` reports the unweighted mean of per-user precision,
    recall and F1; ``"pooled"`` derives them from the summed counts.
    """

    per_user: dict[str, Scores] = field(default_factory=dict)
    averaging: str = "users"

    def add(self, subject_id: str, scores: Scores) -> None:
        self.per_user[subject_id] = self.per_user.get(subject_id, Scores()) + scores

    @property
    def totals(self) -> Scores:
        out = Scores()
        for s in self.per_user.values():
            out = out + s
        return out

    def aggregate(self) -> dict:
        tot = self.totals
        agg = {"tp": tot.tp, "fp": tot.fp, "fn": tot.fn, "n_users": len(self.per_user),
               "averaging": self.averaging}
        if self.averaging == "pooled" or not self.per_user:
            agg.update(precision=tot.precision, recall=tot.recall, f1=tot.f1)
        else:
            users = [self.per_user[k] for k in sorted(self.per_user)]
            agg.update(precision=float(np.mean([u.precision for u in users])),
                       recall=float(np.mean([u.recall for u in users])),
                       f1=float(np.mean([u.f1 for u in users])))
        return agg

    @property
    def precision(self) -> float:
        return self.aggregate()["precision"]

    @property
    def recall(self) -> float:
        return self.aggregate()["recall"]

    @property
    def f1(self) -> float:
        return self.aggregate()["f1"]

    def merge(self, other: "MetricsReport") -> "MetricsReport":
        out = MetricsReport(dict(self.per_user), self.averaging)
        for k, v in other.per_user.items():
            out.add(k, v)
        return out

    def to_dict(self) -> dict:
        return {"aggregate": self.aggregate(),
                "per_user": {k: self.per_user[k].to_dict() for k in sorted(self.per_user)}}

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["subject_id", "tp", "fp", "fn", "precision", "recall", "f1"])
            for k in sorted(self.per_user):
                s = self.per_user[k]
                w.writerow([k, s.tp, s.fp, s.fn, repr(s.precision), repr(s.recall), repr(s.f1)])
        return path

    def write_json(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.aggregate(), indent=2, sort_keys=True) + "\n")
        return path


# ------------------------------------------------------------- evaluation

def score_probs(probs, ao_lists, tau: float, min_len: int = DEFAULT_MIN_BOX_LEN) -> Scores:
    """Summed counts over windows; ``probs`` is ``(N, L)`` or ``(N, 1, L)``."""
    p = np.asarray(probs)
    p = p.reshape(len(p), -1) if len(p) else p
    total = Scores()
    for row, ao in zip(p, ao_lists):
        boxes = mask_to_boxes(threshold_mask(row, tau), min_len)
        total = total + Scores(*match_detections(boxes, ao))
    return total


def sweep_thresholds(probs, ao_lists, grid=DEFAULT_TAU_GRID,
                     min_len: int = DEFAULT_MIN_BOX_LEN) -> list[tuple[float, Scores]]:
    return [(float(tau), score_probs(probs, ao_lists, tau, min_len)) for tau in grid]


def select_threshold_from_probs(probs, ao_lists, grid=DEFAULT_TAU_GRID,
                                min_len: int = DEFAULT_MIN_BOX_LEN) -> float:
    """Grid threshold with the highest F1; ties go to the lowest threshold."""
    grid = list(grid)
    if not grid:
        raise ValueError("threshold grid is empty")
    if len(probs) == 0:
        raise DataError("cannot select a threshold on an empty validation set")
    best_tau, best_f1 = None, -1.0
    for tau, s in sweep_thresholds(probs, ao_lists, sorted(grid), min_len):
        if s.f1 > best_f1:
            best_tau, best_f1 = tau, s.f1
    return best_tau


def select_threshold(model, x, ao_lists, grid=DEFAULT_TAU_GRID,
                     min_len: int = DEFAULT_MIN_BOX_LEN) -> float:
    """Validation-F1-optimal threshold for ``model`` on windows ``x``."""
    if len(x) == 0:
        raise DataError("cannot select a threshold on an empty validation set")
    return select_threshold_from_probs(model.predict(x), ao_lists, grid, min_len)
