"""ECG-referenced ground truth: R-peaks, AO fiducial points and box masks.

The ECG is consulted only here.  R-peaks and AO points are located at the
native sampling rate, then mapped to the target rate where masks are built.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .errors import RateError, TooShortError
from .signal import TARGET_RATE_HZ, Record, resampled_length, round_half_up

MIN_ECG_RATE_HZ = 100.0
BANDPASS_HZ = (5.0, 15.0)
INTEGRATION_MS = 150.0
REFRACTORY_MS = 200.0
REFINE_MS = 25.0
T_WAVE_MS = 360.0


@dataclass
class LabelingConfig:
    ao_search_ms: float = 90.0
    box_ms: float = 25.0
    labeling_rate_hz: float = TARGET_RATE_HZ

    def __post_init__(self):
        if self.ao_search_ms <= 0 or self.box_ms <= 0:
            raise ValueError("ao_search_ms and box_ms must be positive")


@dataclass
class Annotation:
    subject_id: str
    native_rate_hz: float
    labeling_rate_hz: float
    ao_indices_native: np.ndarray
    ao_indices: np.ndarray          # at labeling_rate_hz
    trace_len: int                  # at labeling_rate_hz
    box_width_samples: int

    @property
    def box_halfwidth_samples(self) -> int:
        return (self.box_width_samples - 1) // 2

    @property
    def mask(self) -> np.ndarray:
        return build_mask_width(self.ao_indices, self.trace_len, self.box_width_samples)

    def to_json(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "native_rate_hz": self.native_rate_hz,
            "labeling_rate_hz": self.labeling_rate_hz,
            "ao_indices_native": [int(i) for i in self.ao_indices_native],
            "ao_indices_64hz": [int(i) for i in self.ao_indices],
            "trace_len_64hz": int(self.trace_len),
            "box_width_samples": int(self.box_width_samples),
        }

    @classmethod
    def from_json(cls, meta: dict) -> "Annotation":
        return cls(
            subject_id=meta["subject_id"],
            native_rate_hz=float(meta["native_rate_hz"]),
            labeling_rate_hz=float(meta["labeling_rate_hz"]),
            ao_indices_native=np.asarray(meta["ao_indices_native"], dtype=np.int64),
            ao_indices=np.asarray(meta["ao_indices_64hz"], dtype=np.int64),
            trace_len=int(meta["trace_len_64hz"]),
            box_width_samples=int(meta["box_width_samples"]),
        )

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), indent=2) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "Annotation":
        return cls.from_json(json.loads(Path(path).read_text()))


# ------------------------------------------------------------ Pan-Tompkins

def _moving_average(x: np.ndarray, n: int) -> np.ndarray:
    """Centered moving average of width ``n`` (zero padded at the edges)."""
    c = np.concatenate([[0.0], np.cumsum(x)])
    lo = np.clip(np.arange(len(x)) - n // 2, 0, len(x))
    hi = np.clip(lo + n, 0, len(x))
    return (c[hi] - c[lo]) / n


def pan_tompkins_stages(ecg, fs: float) -> dict[str, np.ndarray]:
    """Intermediate Pan-Tompkins signals: band-passed, derivative, squared, integrated."""
    x = np.asarray(ecg, dtype=float)
    x = x - x.mean()
    lp = sps.butter(2, BANDPASS_HZ[1], btype="low", fs=fs, output="sos")
    hp = sps.butter(2, BANDPASS_HZ[0], btype="high", fs=fs, output="sos")
    band = sps.sosfiltfilt(hp, sps.sosfiltfilt(lp, x))
    # five-point derivative (2x[n+2] + x[n+1] - x[n-1] - 2x[n-2]) * fs / 8
    deriv = np.convolve(band, np.array([2.0, 1.0, 0.0, -1.0, -2.0]) * fs / 8.0, mode="same")
    squared = deriv ** 2
    n_int = max(1, int(round_half_up(INTEGRATION_MS * fs / 1000.0)))
    integrated = _moving_average(squared, n_int)
    return {"band": band, "derivative": deriv, "squared": squared, "integrated": integrated}


def detect_r_peaks(ecg, fs: float) -> np.ndarray:
    """Pan-Tompkins R-wave detector.

    Band-pass (zero-phase 2nd-order Butterworth low-pass 15 Hz then
    high-pass 5 Hz), five-point derivative, squaring, 150 ms moving-window
    integration and adaptive signal/noise thresholds with a 200 ms refractory
    period, T-wave rejection and search-back.  Each detection is refined to
    the raw ECG maximum within +-25 ms.
    """
    ecg = np.asarray(ecg, dtype=float)
    if fs < MIN_ECG_RATE_HZ:
        raise RateError(f"R-peak detection needs fs >= {MIN_ECG_RATE_HZ:g} Hz, got {fs:g}")
    if len(ecg) < 2 * fs:
        raise TooShortError(f"ECG of {len(ecg)} samples is shorter than 2 s at {fs:g} Hz")
    if not np.ptp(ecg) > 0:
        return np.zeros(0, dtype=np.int64)
    st = pan_tompkins_stages(ecg, fs)
    mwi, band = st["integrated"], st["band"]
    if not mwi.max() > 0:
        return np.zeros(0, dtype=np.int64)
    refractory = int(round_half_up(REFRACTORY_MS * fs / 1000.0))
    t_wave = int(round_half_up(T_WAVE_MS * fs / 1000.0))
    half_int = int(round_half_up(INTEGRATION_MS * fs / 1000.0)) // 2
    cands, _ = sps.find_peaks(mwi, distance=refractory)
    if len(cands) == 0:
        return np.zeros(0, dtype=np.int64)

    def slope(p):
        lo, hi = max(0, p - half_int), min(len(band), p + half_int + 1)
        return np.abs(st["derivative"][lo:hi]).max()

    learn = mwi[: int(2 * fs)]
    spki = 0.25 * learn.max()
    npki = 0.5 * learn.mean()
    qrs: list[int] = []
    rr: list[int] = []
    last_slope = None
    i = 0
    while i < len(cands):
        p = cands[i]
        thr1 = npki + 0.25 * (spki - npki)
        thr2 = 0.5 * thr1
        # search back for a missed beat when the gap grows too long
        if len(rr) >= 2 and qrs and p - qrs[-1] > 1.66 * np.mean(rr[-8:]):
            gap = [c for c in cands[:i] if c > qrs[-1] + refractory and mwi[c] > thr2]
            if gap:
                best = max(gap, key=lambda c: mwi[c])
                rr.append(best - qrs[-1])
                qrs.append(best)
                spki = 0.25 * mwi[best] + 0.75 * spki
                last_slope = slope(best)
                continue
        pk = mwi[p]
        if pk > thr1 and (not qrs or p - qrs[-1] >= refractory):
            s = slope(p)
            if qrs and p - qrs[-1] < t_wave and last_slope is not None and s < 0.5 * last_slope:
                npki = 0.125 * pk + 0.875 * npki
            else:
                if qrs:
                    rr.append(p - qrs[-1])
                qrs.append(p)
                spki = 0.125 * pk + 0.875 * spki
                last_slope = s
        else:
            npki = 0.125 * pk + 0.875 * npki
        i += 1

    refine = int(round_half_up(REFINE_MS * fs / 1000.0))
    peaks = []
    for p in sorted(qrs):
        lo, hi = max(0, p - half_int), min(len(ecg), p + half_int + 1)
        centre = lo + int(np.argmax(np.abs(band[lo:hi])))
        lo, hi = max(0, centre - refine), min(len(ecg), centre + refine + 1)
        peaks.append(lo + int(np.argmax(ecg[lo:hi])))
    return np.unique(np.asarray(peaks, dtype=np.int64))


# ------------------------------------------------------------- AO and masks

def locate_ao(scg_z, r_peaks, fs: float, cfg: LabelingConfig | None = None) -> np.ndarray:
    """AO point per beat: argmax of ``scg_z`` over ``(r, r + round(search * fs)]``.

    Windows are clipped to the signal end; empty windows are skipped and ties
    go to the earliest index.
    """
    cfg = cfg or LabelingConfig()
    scg = np.asarray(scg_z, dtype=float)
    span = int(round_half_up(cfg.ao_search_ms * fs / 1000.0))
    out = []
    for r in np.asarray(r_peaks, dtype=np.int64):
        lo, hi = int(r) + 1, min(int(r) + span, len(scg) - 1)
        if hi < lo:
            continue
        out.append(lo + int(np.argmax(scg[lo:hi + 1])))
    return np.unique(np.asarray(out, dtype=np.int64))


def box_width(fs: float, box_ms: float) -> int:
    """Odd box width in samples, at least 3."""
    w = int(round_half_up(box_ms * fs / 1000.0))
    if w % 2 == 0:
        w += 1
    return max(w, 3)


def build_mask_width(ao_indices, trace_len: int, width: int) -> np.ndarray:
    mask = np.zeros(trace_len, dtype=np.uint8)
    h = (width - 1) // 2
    for a in np.asarray(ao_indices, dtype=np.int64):
        mask[max(0, a - h):min(trace_len, a + h + 1)] = 1
    return mask


def build_mask(ao_indices, trace_len: int, fs: float, box_ms: float = 25.0) -> np.ndarray:
    """Binary mask with an odd-width box centred on every AO index."""
    return build_mask_width(ao_indices, trace_len, box_width(fs, box_ms))


def map_indices(indices, from_hz: float, to_hz: float) -> np.ndarray:
    if from_hz <= 0 or to_hz <= 0:
        raise ValueError("sample rates must be positive")
    idx = np.asarray(indices, dtype=float)
    if from_hz == to_hz:
        return np.unique(idx.astype(np.int64))
    return np.unique(round_half_up(idx * to_hz / from_hz))


def annotate_from_ao(subject_id: str, ao_native, native_rate_hz: float, n_native: int,
                     cfg: LabelingConfig | None = None) -> Annotation:
    cfg = cfg or LabelingConfig()
    trace_len = resampled_length(n_native, native_rate_hz, cfg.labeling_rate_hz)
    mapped = map_indices(ao_native, native_rate_hz, cfg.labeling_rate_hz)
    mapped = mapped[(mapped >= 0) & (mapped < trace_len)]
    return Annotation(
        subject_id=subject_id,
        native_rate_hz=native_rate_hz,
        labeling_rate_hz=cfg.labeling_rate_hz,
        ao_indices_native=np.asarray(ao_native, dtype=np.int64),
        ao_indices=mapped,
        trace_len=trace_len,
        box_width_samples=box_width(cfg.labeling_rate_hz, cfg.box_ms),
    )


def label_record(record: Record, cfg: LabelingConfig | None = None) -> Annotation:
    """Full labeling pipeline for a record carrying an ECG and ``acc_z``."""
    cfg = cfg or LabelingConfig()
    if record.ecg is None:
        raise ValueError(f"record {record.subject_id} has no ECG to label from")
    if "acc_z" not in record.channels:
        raise ValueError(f"record {record.subject_id} has no acc_z channel")
    fs = record.sample_rate_hz
    r = detect_r_peaks(record.ecg, fs)
    ao = locate_ao(record.channels["acc_z"], r, fs, cfg)
    return annotate_from_ao(record.subject_id, ao, fs, len(record), cfg)
