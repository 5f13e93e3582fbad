"""Synthetic SCG + ECG recordings with known R and AO times.

Each subject gets a jittered heart rhythm.  The ECG is a train of Gaussian
QRS complexes (plus a broad T wave); every SCG channel carries a
Gaussian-modulated cosine (the systolic complex) centred at the beat time
plus a subject-specific electromechanical delay, a weaker diastolic
complex, white noise, baseline wander and optional motion-artifact bursts.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..signal import CANONICAL_CHANNELS, Record, save_record

QRS_SIGMA_MS = 10.0


@dataclass
class SynthConfig:
    dataset_id: str = "synth"
    n_subjects: int = 10
    duration_s: float = 60.0
    native_rate_hz: float = 500.0
    heart_rate_bpm: tuple[float, float] = (55.0, 80.0)
    rr_jitter: float = 0.03
    ao_delay_ms: tuple[float, float] = (35.0, 65.0)
    scg_center_hz: float = 10.0
    scg_sigma_ms: float = 25.0
    scg_amplitude: float = 1.0
    diastolic_amplitude: float = 0.4
    diastolic_delay_ms: float = 380.0
    noise_std: float = 0.0
    channel_noise: tuple[float, ...] | None = None
    wander_amplitude: float = 0.0
    artifact_rate: float = 0.0
    artifact_amplitude: float = 4.0
    artifact_duration_s: tuple[float, float] = (0.5, 2.0)
    channel_count: int = 1
    ecg_noise_std: float = 0.0

    def __post_init__(self):
        self.heart_rate_bpm = tuple(self.heart_rate_bpm)
        self.ao_delay_ms = tuple(self.ao_delay_ms)
        self.artifact_duration_s = tuple(self.artifact_duration_s)
        if self.channel_noise is not None:
            self.channel_noise = tuple(self.channel_noise)
            if len(self.channel_noise) != self.channel_count:
                raise ValueError("channel_noise needs one entry per channel")
        if self.n_subjects < 1 or self.duration_s <= 0 or self.native_rate_hz <= 0:
            raise ValueError("n_subjects, duration_s and native_rate_hz must be positive")
        if self.channel_count not in (1, 3, 6):
            raise ValueError(f"channel_count must be 1, 3 or 6, got {self.channel_count}")
        if self.noise_std < 0 or self.artifact_rate < 0 or self.wander_amplitude < 0:
            raise ValueError("noise_std, artifact_rate and wander_amplitude must be >= 0")
        lo, hi = self.ao_delay_ms
        if not 0 < lo <= hi:
            raise ValueError("ao_delay_ms must be a positive (lo, hi) range")

    @property
    def channel_names(self) -> tuple[str, ...]:
        return {1: ("acc_z",), 3: ("acc_x", "acc_y", "acc_z"), 6: CANONICAL_CHANNELS}[self.channel_count]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SynthSubject:
    record: Record
    r_times_s: np.ndarray
    ao_times_s: np.ndarray
    artifact_spans_s: list = field(default_factory=list)

    @property
    def ao_indices_native(self) -> np.ndarray:
        return np.floor(self.ao_times_s * self.record.sample_rate_hz + 0.5).astype(np.int64)


def _wavelet(t, sigma, freq):
    return np.exp(-0.5 * (t / sigma) ** 2) * np.cos(2 * np.pi * freq * t)


def _add_events(out, t, times, fn, half_width):
    fs = 1.0 / (t[1] - t[0])
    for c in times:
        lo = max(0, int((c - half_width) * fs))
        hi = min(len(t), int((c + half_width) * fs) + 2)
        out[lo:hi] += fn(t[lo:hi] - c)


def _smooth_noise(rng, n, fs, cutoff_hz):
    """White noise low-passed by a moving average, scaled to unit std."""
    width = max(1, int(fs / cutoff_hz))
    x = rng.standard_normal(n + width)
    x = np.convolve(x, np.ones(width) / width, mode="valid")[:n]
    return x / (x.std() + 1e-12)


def generate_subject(cfg: SynthConfig, index: int, seed: int) -> SynthSubject:
    rng = np.random.default_rng([seed, index])
    fs = cfg.native_rate_hz
    n = int(round(cfg.duration_s * fs))
    t = np.arange(n) / fs

    hr = rng.uniform(*cfg.heart_rate_bpm)
    rr_mean = 60.0 / hr
    beats = []
    tb = rng.uniform(0.2, 0.2 + rr_mean)
    while tb < cfg.duration_s - 0.05:
        beats.append(tb)
        tb += rr_mean * (1.0 + cfg.rr_jitter * rng.standard_normal())
    r_times = np.asarray(beats)
    delay = rng.uniform(*cfg.ao_delay_ms) / 1000.0
    ao_times = r_times + delay

    qrs_sigma = QRS_SIGMA_MS / 1000.0
    ecg = np.zeros(n)
    _add_events(ecg, t, r_times, lambda u: np.exp(-0.5 * (u / qrs_sigma) ** 2), 6 * qrs_sigma)
    _add_events(ecg, t, r_times + 0.25, lambda u: 0.25 * np.exp(-0.5 * (u / 0.04) ** 2), 0.24)
    if cfg.ecg_noise_std > 0:
        ecg += cfg.ecg_noise_std * rng.standard_normal(n)

    sigma = cfg.scg_sigma_ms / 1000.0
    complex_wave = np.zeros(n)
    _add_events(complex_wave, t, ao_times,
                lambda u: cfg.scg_amplitude * _wavelet(u, sigma, cfg.scg_center_hz), 5 * sigma)
    if cfg.diastolic_amplitude > 0:
        _add_events(complex_wave, t, ao_times + cfg.diastolic_delay_ms / 1000.0,
                    lambda u: cfg.diastolic_amplitude * _wavelet(u, sigma, cfg.scg_center_hz * 0.8),
                    5 * sigma)

    # motion artifacts hit every channel with channel-specific gains
    spans = []
    artifact = np.zeros(n)
    if cfg.artifact_rate > 0:
        n_art = rng.poisson(cfg.artifact_rate * cfg.duration_s / 60.0)
        for _ in range(n_art):
            dur = rng.uniform(*cfg.artifact_duration_s)
            start = rng.uniform(0, max(cfg.duration_s - dur, 1e-3))
            lo, hi = int(start * fs), min(n, int((start + dur) * fs))
            if hi - lo < 2:
                continue
            burst = _smooth_noise(rng, hi - lo, fs, 3.0) * np.hanning(hi - lo)
            artifact[lo:hi] += cfg.artifact_amplitude * burst
            spans.append((lo / fs, hi / fs))

    noise_levels = cfg.channel_noise or (cfg.noise_std,) * cfg.channel_count
    channels = {}
    for c, name in enumerate(cfg.channel_names):
        gain = 1.0 if name == "acc_z" else rng.uniform(0.6, 1.0)
        x = gain * complex_wave
        if noise_levels[c] > 0:
            x = x + noise_levels[c] * rng.standard_normal(n)
        if cfg.wander_amplitude > 0:
            f_w = rng.uniform(0.15, 0.35)
            x = x + cfg.wander_amplitude * np.sin(2 * np.pi * f_w * t + rng.uniform(0, 2 * np.pi))
        if spans:
            x = x + rng.uniform(0.5, 1.5) * artifact
        channels[name] = x
    rec = Record(f"{cfg.dataset_id}-s{index:02d}", cfg.dataset_id, fs, channels, ecg)
    return SynthSubject(rec, r_times, ao_times, spans)


def generate_synthetic(cfg: SynthConfig, seed: int = 0) -> list[SynthSubject]:
    """Deterministic synthetic dataset: the same (cfg, seed) gives identical arrays."""
    return [generate_subject(cfg, i, seed) for i in range(cfg.n_subjects)]


def write_dataset(subjects: list[SynthSubject], directory, cfg: SynthConfig | None = None,
                  seed: int | None = None, binary: bool = False) -> Path:
    """Write records, sidecars, truth files and a ``dataset.json`` index."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ids = []
    for s in subjects:
        rec = s.record
        save_record(rec, directory / rec.subject_id, binary=binary)
        truth = {"subject_id": rec.subject_id,
                 "r_times_s": [float(v) for v in s.r_times_s],
                 "ao_times_s": [float(v) for v in s.ao_times_s],
                 "artifact_spans_s": [[float(a), float(b)] for a, b in s.artifact_spans_s]}
        (directory / f"{rec.subject_id}.truth.json").write_text(json.dumps(truth, indent=2) + "\n")
        ids.append(rec.subject_id)
    first = subjects[0].record
    index = {
        "dataset_id": first.dataset_id,
        "sample_rate_hz": first.sample_rate_hz,
        "channels": first.channel_names + ["ecg"],
        "format": "f32" if binary else "csv",
        "subjects": ids,
    }
    if cfg is not None:
        index["synth_config"] = cfg.to_dict()
    if seed is not None:
        index["seed"] = seed
    (directory / "dataset.json").write_text(json.dumps(index, indent=2) + "\n")
    return directory
