"""Record ingestion, resampling, windowing and per-window normalization."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ChannelError, EmptyRecordError, ParseError, SchemaError, TooShortError

CANONICAL_CHANNELS = ("acc_x", "acc_y", "acc_z", "gyr_x", "gyr_y", "gyr_z")
ECG = "ecg"
TARGET_RATE_HZ = 64.0
WINDOW_SECONDS = 5.0


def round_half_up(x):
    """Round to the nearest integer with .5 going up (numpy rounds half to even)."""
    return np.floor(np.asarray(x, dtype=float) + 0.5).astype(np.int64)


def _canonical_order(names) -> list[str]:
    known = [c for c in CANONICAL_CHANNELS if c in names]
    return known + [c for c in names if c not in CANONICAL_CHANNELS]


@dataclass
class Record:
    """One subject's SCG channels (and optional ECG) at a single sample rate."""

    subject_id: str
    dataset_id: str
    sample_rate_hz: float
    channels: dict[str, np.ndarray]
    ecg: np.ndarray | None = None

    def __post_init__(self):
        if not self.sample_rate_hz > 0:
            raise SchemaError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if not self.channels:
            raise SchemaError("a record needs at least one SCG channel")
        if ECG in self.channels:
            raise SchemaError("'ecg' is not an SCG channel; pass it as ecg=")
        ordered = {}
        for name in _canonical_order(list(self.channels)):
            ordered[name] = np.asarray(self.channels[name], dtype=float)
        lengths = {len(v) for v in ordered.values()}
        if len(lengths) != 1:
            raise SchemaError(f"channels have unequal lengths {sorted(lengths)}")
        (n,) = lengths
        if n < 1:
            raise EmptyRecordError(f"record {self.subject_id} has no samples")
        if self.ecg is not None:
            self.ecg = np.asarray(self.ecg, dtype=float)
            if len(self.ecg) != n:
                raise SchemaError(f"ecg length {len(self.ecg)} differs from channel length {n}")
        self.channels = ordered
        self.sample_rate_hz = float(self.sample_rate_hz)

    def __len__(self) -> int:
        return len(next(iter(self.channels.values())))

    @property
    def channel_names(self) -> list[str]:
        return list(self.channels)

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    def matrix(self, names=None) -> np.ndarray:
        names = self.channel_names if names is None else names
        return np.stack([self.channels[n] for n in names])

    def equals(self, other: "Record") -> bool:
        if (self.subject_id, self.dataset_id, self.sample_rate_hz, self.channel_names) != (
                other.subject_id, other.dataset_id, other.sample_rate_hz, other.channel_names):
            return False
        if not all(np.array_equal(self.channels[k], other.channels[k]) for k in self.channels):
            return False
        if (self.ecg is None) != (other.ecg is None):
            return False
        return self.ecg is None or np.array_equal(self.ecg, other.ecg)


class ChannelSelection(str, Enum):
    SINGLE_Z = "single_z"
    ACC3 = "acc3"
    GYR3 = "gyr3"
    ACC3_GYR3 = "acc3_gyr3"

    @property
    def names(self) -> tuple[str, ...]:
        return {
            "single_z": ("acc_z",),
            "acc3": ("acc_x", "acc_y", "acc_z"),
            "gyr3": ("gyr_x", "gyr_y", "gyr_z"),
            "acc3_gyr3": CANONICAL_CHANNELS,
        }[self.value]

    @property
    def n_channels(self) -> int:
        return len(self.names)


def select_channels(record: Record, mode: ChannelSelection | str) -> np.ndarray:
    """Channel matrix ``(n_channels, n_samples)`` for a selection mode."""
    mode = ChannelSelection(mode)
    missing = [n for n in mode.names if n not in record.channels]
    if missing:
        raise ChannelError(f"record {record.subject_id} lacks {', '.join(missing)} "
                           f"required by channel mode {mode.value}")
    return record.matrix(mode.names)


# ------------------------------------------------------------------ ingestion

@dataclass
class DatasetSchema:
    """Describes a record file: which columns hold SCG and ECG, and the rate."""

    dataset_id: str
    sample_rate_hz: float
    channels: list[str]
    ecg: bool = True
    subject_id: str | None = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_sidecar(cls, path) -> "DatasetSchema":
        meta = json.loads(Path(path).read_text())
        names = list(meta["channels"])
        has_ecg = ECG in names
        return cls(dataset_id=meta["dataset_id"], sample_rate_hz=float(meta["sample_rate_hz"]),
                   channels=[n for n in names if n != ECG], ecg=has_ecg,
                   subject_id=meta.get("subject_id"))


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def load_record(path, schema: DatasetSchema | None = None) -> Record:
    """Load a CSV (header of channel names, one sample per row) or ``.f32`` blob.

    Without an explicit ``schema`` the JSON sidecar next to the file is used.
    """
    path = Path(path)
    if schema is None:
        side = _sidecar_path(path)
        if not side.exists():
            raise SchemaError(f"no schema given and no sidecar {side.name} next to {path.name}")
        schema = DatasetSchema.from_sidecar(side)
    subject = schema.subject_id or path.stem
    if path.suffix == ".f32":
        return _load_f32(path, schema, subject)
    wanted = list(schema.channels) + ([ECG] if schema.ecg else [])
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyRecordError(f"{path} is empty") from None
        for name in wanted:
            if name not in header:
                raise SchemaError(f"{path.name}: missing declared column {name}")
        cols = [header.index(n) for n in wanted]
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(row[c]) for c in cols])
            except (ValueError, IndexError):
                raise ParseError(f"{path.name}: non-numeric or missing value at line {line_no}") from None
    if not rows:
        raise EmptyRecordError(f"{path.name}: zero data rows")
    data = np.asarray(rows, dtype=float)
    channels = {n: data[:, i] for i, n in enumerate(schema.channels)}
    ecg = data[:, -1] if schema.ecg else None
    return Record(subject, schema.dataset_id, schema.sample_rate_hz, channels, ecg)


def _load_f32(path: Path, schema: DatasetSchema, subject: str) -> Record:
    names = list(schema.channels) + ([ECG] if schema.ecg else [])
    raw = np.fromfile(path, dtype="<f4")
    if raw.size == 0:
        raise EmptyRecordError(f"{path.name}: zero samples")
    if raw.size % len(names):
        raise ParseError(f"{path.name}: {raw.size} values do not fill {len(names)} columns")
    data = raw.reshape(-1, len(names)).astype(float)
    channels = {n: data[:, i] for i, n in enumerate(schema.channels)}
    ecg = data[:, -1] if schema.ecg else None
    return Record(subject, schema.dataset_id, schema.sample_rate_hz, channels, ecg)


def save_record(record: Record, path, binary: bool = False) -> Path:
    """Write a record plus its JSON sidecar; CSV keeps full float64 precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = record.channel_names + ([ECG] if record.ecg is not None else [])
    cols = [record.channels[n] for n in record.channel_names]
    if record.ecg is not None:
        cols.append(record.ecg)
    data = np.column_stack(cols)
    if binary:
        path = path.with_suffix(".f32")
        data.astype("<f4").tofile(path)
    else:
        path = path.with_suffix(".csv")
        with path.open("w", newline="") as fh:
            fh.write(",".join(names) + "\n")
            for row in data:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
    meta = {"subject_id": record.subject_id, "dataset_id": record.dataset_id,
            "sample_rate_hz": record.sample_rate_hz, "channels": names}
    _sidecar_path(path).write_text(json.dumps(meta, indent=2) + "\n")
    return path


# ------------------------------------------------------------------ resampling

def resampled_length(n: int, from_hz: float, to_hz: float) -> int:
    return int(round_half_up(n * to_hz / from_hz))


def resample(samples, from_hz: float, to_hz: float, n_out: int | None = None) -> np.ndarray:
    """Linear interpolation onto a ``to_hz`` grid sharing the time origin.

    Works along the last axis, so a ``(channels, n)`` matrix is resampled on
    one shared time axis.  Output samples past the last input time hold the
    last input value.
    """
    x = np.asarray(samples, dtype=float)
    if from_hz <= 0 or to_hz <= 0:
        raise ValueError("sample rates must be positive")
    n = x.shape[-1]
    if n < 2:
        raise TooShortError(f"need at least 2 samples to resample, got {n}")
    if from_hz == to_hz and (n_out is None or n_out == n):
        return x.copy()
    if n_out is None:
        n_out = resampled_length(n, from_hz, to_hz)
    t_in = np.arange(n) / from_hz
    t_out = np.arange(n_out) / to_hz
    if x.ndim == 1:
        return np.interp(t_out, t_in, x)
    flat = x.reshape(-1, n)
    out = np.stack([np.interp(t_out, t_in, row) for row in flat])
    return out.reshape(x.shape[:-1] + (n_out,))


# ------------------------------------------------------------------ windowing

def window_starts(n: int, window: int, stride: int) -> list[int]:
    if window < 1 or stride < 1:
        raise ValueError("window and stride must be positive")
    return list(range(0, n - window + 1, stride))


def cut_windows(record: Record | np.ndarray, window_seconds: float = WINDOW_SECONDS,
                stride_seconds: float | None = None, sample_rate_hz: float | None = None):
    """Split a record into ``(start_index, matrix)`` windows.

    The stride defaults to the window length (a partition); the incomplete
    trailing remainder is dropped.  A record shorter than one window gives an
    empty list.
    """
    if isinstance(record, Record):
        fs = record.sample_rate_hz
        data = record.matrix()
    else:
        data = np.atleast_2d(np.asarray(record, dtype=float))
        if sample_rate_hz is None:
            raise ValueError("sample_rate_hz is required for raw matrices")
        fs = sample_rate_hz
    stride_seconds = window_seconds if stride_seconds is None else stride_seconds
    win = int(round_half_up(window_seconds * fs))
    stride = int(round_half_up(stride_seconds * fs))
    return [(s, data[:, s:s + win].copy()) for s in window_starts(data.shape[1], win, stride)]


def minmax_normalize(window) -> np.ndarray:
    """Scale each channel (row) of a window to [0, 1]; constant rows become 0."""
    w = np.atleast_2d(np.asarray(window, dtype=float))
    lo = w.min(axis=-1, keepdims=True)
    span = w.max(axis=-1, keepdims=True) - lo
    safe = np.where(span > 0, span, 1.0)
    out = np.where(span > 0, (w - lo) / safe, 0.0)
    return out.reshape(np.shape(window)) if np.ndim(window) == 1 else out


@dataclass
class PreprocessConfig:
    window_seconds: float = WINDOW_SECONDS
    stride_seconds: float | None = None
    target_rate_hz: float = TARGET_RATE_HZ
    normalize_then_resample: bool = True

    @property
    def window_samples(self) -> int:
        return int(round_half_up(self.window_seconds * self.target_rate_hz))

    def stride_samples(self, stride_seconds: float | None = None) -> int:
        s = stride_seconds if stride_seconds is not None else self.stride_seconds
        s = self.window_seconds if s is None else s
        return int(round_half_up(s * self.target_rate_hz))


@dataclass
class Window:
    samples: np.ndarray  # (channels, L) in [0, 1]
    start_index: int     # offset into the target-rate record
    subject_id: str


def make_windows(record: Record, mode: ChannelSelection | str, cfg: PreprocessConfig | None = None,
                 stride_seconds: float | None = None, span: tuple[int, int] | None = None) -> list[Window]:
    """Normalized target-rate windows for one record.

    Window starts are laid on the target-rate grid.  With
    ``normalize_then_resample`` each window is cut at the native rate,
    min-max normalized and then interpolated to the target length; otherwise
    the whole record is resampled first and windows are normalized after
    cutting.  ``span = (lo, hi)`` keeps only windows lying inside
    ``[lo, hi)`` on the target grid.
    """
    cfg = cfg or PreprocessConfig()
    data = select_channels(record, mode)
    fs, target = record.sample_rate_hz, cfg.target_rate_hz
    n_target = resampled_length(len(record), fs, target)
    win = cfg.window_samples
    starts = window_starts(n_target, win, cfg.stride_samples(stride_seconds))
    if span is not None:
        lo, hi = span
        starts = [s for s in starts if s >= lo and s + win <= hi]
    out = []
    if cfg.normalize_then_resample:
        native_win = int(round_half_up(cfg.window_seconds * fs))
        n_native = data.shape[1]
        for s in starts:
            s_native = int(round_half_up(s * fs / target))
            if s_native + native_win > n_native:
                continue
            seg = minmax_normalize(data[:, s_native:s_native + native_win])
            # interpolate on the window's own time axis
            res = seg if fs == target else resample(seg, fs, target, n_out=win)
            out.append(Window(np.clip(res, 0.0, 1.0), s, record.subject_id))
    else:
        full = resample(data, fs, target, n_out=n_target) if fs != target else data
        for s in starts:
            out.append(Window(minmax_normalize(full[:, s:s + win]), s, record.subject_id))
    return out
