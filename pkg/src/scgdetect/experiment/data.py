"""Labeled subjects, dataset directories and window batches."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..annotate import Annotation, LabelingConfig, annotate_from_ao, label_record
from ..errors import ConfigError, DataError
from ..signal import ChannelSelection, PreprocessConfig, Record, load_record, make_windows


@dataclass
class Subject:
    """A record paired with its target-rate annotation."""

    record: Record
    annotation: Annotation

    @property
    def subject_id(self) -> str:
        return self.record.subject_id


@dataclass
class WindowBatch:
    """Normalized windows with target masks and window-relative AO indices."""

    x: np.ndarray            # (N, C, L)
    y: np.ndarray            # (N, 1, L)
    starts: np.ndarray       # (N,) offsets on the target-rate grid
    subjects: list[str]
    ao: list[np.ndarray]

    def __len__(self) -> int:
        return len(self.x)

    @property
    def n_channels(self) -> int:
        return self.x.shape[1]

    def subset(self, idx) -> "WindowBatch":
        idx = np.asarray(idx, dtype=np.int64)
        return WindowBatch(self.x[idx], self.y[idx], self.starts[idx],
                           [self.subjects[i] for i in idx], [self.ao[i] for i in idx])

    def for_subject(self, subject_id: str) -> "WindowBatch":
        return self.subset([i for i, s in enumerate(self.subjects) if s == subject_id])

    @property
    def subject_ids(self) -> list[str]:
        return sorted(set(self.subjects))

    @classmethod
    def empty(cls, n_channels: int, length: int) -> "WindowBatch":
        return cls(np.zeros((0, n_channels, length), np.float32), np.zeros((0, 1, length), np.float32),
                   np.zeros(0, np.int64), [], [])

    @classmethod
    def concat(cls, batches: list["WindowBatch"]) -> "WindowBatch":
        batches = [b for b in batches if len(b)]
        if not batches:
            raise DataError("no windows to concatenate")
        return cls(np.concatenate([b.x for b in batches]), np.concatenate([b.y for b in batches]),
                   np.concatenate([b.starts for b in batches]),
                   [s for b in batches for s in b.subjects], [a for b in batches for a in b.ao])


def subject_windows(subject: Subject, mode: ChannelSelection | str,
                    pre: PreprocessConfig | None = None, stride_seconds: float | None = None,
                    span: tuple[int, int] | None = None) -> WindowBatch:
    pre = pre or PreprocessConfig()
    wins = make_windows(subject.record, mode, pre, stride_seconds=stride_seconds, span=span)
    length = pre.window_samples
    n_ch = ChannelSelection(mode).n_channels
    if not wins:
        return WindowBatch.empty(n_ch, length)
    ann = subject.annotation
    mask = ann.mask
    ao = ann.ao_indices
    xs, ys, aos = [], [], []
    for w in wins:
        s = w.start_index
        xs.append(w.samples)
        seg = np.zeros(length, np.float32)
        part = mask[s:s + length]
        seg[:len(part)] = part
        ys.append(seg[None])
        inside = ao[(ao >= s) & (ao < s + length)]
        aos.append((inside - s).astype(np.int64))
    return WindowBatch(np.asarray(xs, np.float32), np.asarray(ys, np.float32),
                       np.asarray([w.start_index for w in wins], np.int64),
                       [subject.subject_id] * len(wins), aos)


def windows_for(subjects: list[Subject], mode, pre: PreprocessConfig | None = None,
                stride_seconds: float | None = None) -> WindowBatch:
    pre = pre or PreprocessConfig()
    batches = [subject_windows(s, mode, pre, stride_seconds) for s in subjects]
    if not any(len(b) for b in batches):
        return WindowBatch.empty(ChannelSelection(mode).n_channels, pre.window_samples)
    return WindowBatch.concat(batches)


# -------------------------------------------------------------- datasets

def label_subject(record: Record, cfg: LabelingConfig | None = None, source: str = "ecg",
                  truth_ao_native=None) -> Subject:
    """Label a record from its ECG, or from known AO indices when ``source='truth'``."""
    cfg = cfg or LabelingConfig()
    if source == "ecg":
        return Subject(record, label_record(record, cfg))
    if source == "truth":
        if truth_ao_native is None:
            raise ConfigError(f"no ground-truth AO times available for {record.subject_id}")
        ann = annotate_from_ao(record.subject_id, truth_ao_native, record.sample_rate_hz,
                               len(record), cfg)
        return Subject(record, ann)
    raise ConfigError(f"unknown label source {source!r} (expected 'ecg' or 'truth')")


def load_dataset_dir(directory, cfg: LabelingConfig | None = None, source: str = "ecg") -> list[Subject]:
    """Load every record listed in ``dataset.json`` and label it."""
    cfg = cfg or LabelingConfig()
    directory = Path(directory)
    index_path = directory / "dataset.json"
    if not index_path.exists():
        raise ConfigError(f"{directory} has no dataset.json")
    index = json.loads(index_path.read_text())
    suffix = ".f32" if index.get("format") == "f32" else ".csv"
    out = []
    for sid in index["subjects"]:
        rec = load_record(directory / f"{sid}{suffix}")
        truth = None
        tpath = directory / f"{sid}.truth.json"
        if tpath.exists():
            ao_s = np.asarray(json.loads(tpath.read_text())["ao_times_s"])
            truth = np.floor(ao_s * rec.sample_rate_hz + 0.5).astype(np.int64)
        out.append(label_subject(rec, cfg, source, truth))
    return out
