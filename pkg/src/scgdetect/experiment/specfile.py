"""Experiment spec files: ``key = value`` lines grouped under ``[section]`` headers.

Sections::

    [experiment]   protocol, train_datasets, test_dataset, channel_mode, seed
    [training]     batch_size, lr, max_epochs, patience, train_stride_seconds
    [model]        depth, base_filters, kernel_size
    [preprocess]   window_seconds, stride_seconds, target_rate_hz, normalize_then_resample
    [labeling]     ao_search_ms, box_ms, source (ecg | truth)
    [detect]       min_box_len, averaging (users | pooled), tau (fixed, optional)
    [protocol]     val_fraction, split_fraction, fine_tune_fraction
    [dataset.ID]   path = DIR, or SynthConfig keys (n_subjects, duration_s, ...)
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from ..annotate import LabelingConfig
from ..errors import ConfigError
from ..signal import ChannelSelection, PreprocessConfig
from .synth import SynthConfig
from .training import TrainingConfig

PROTOCOLS = ("loso", "cross_dataset", "fine_tune", "personalize")


@dataclass
class DatasetSource:
    dataset_id: str
    path: str | None = None
    synth: SynthConfig | None = None
    seed: int | None = None


@dataclass
class ExperimentSpec:
    train_datasets: list[str]
    test_dataset: str
    protocol: str = "loso"
    channel_mode: ChannelSelection = ChannelSelection.SINGLE_Z
    seed: int = 0
    training: TrainingConfig = field(default_factory=TrainingConfig)
    model: dict = field(default_factory=lambda: {"depth": 4, "base_filters": 16, "kernel_size": 3})
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    labeling: LabelingConfig = field(default_factory=LabelingConfig)
    label_source: str = "ecg"
    min_box_len: int = 2
    averaging: str = "users"
    tau: float | None = None
    val_fraction: float = 0.2
    split_fraction: float = 0.5
    fine_tune_fraction: float = 0.5
    datasets: dict[str, DatasetSource] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        self.channel_mode = ChannelSelection(self.channel_mode)
        self.train_datasets = list(self.train_datasets)
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}; expected one of {PROTOCOLS}")
        if not self.train_datasets:
            raise ConfigError("train_datasets is empty")
        if self.protocol == "loso" and self.train_datasets != [self.test_dataset]:
            raise ConfigError("loso requires the train and test dataset to be the same single dataset")
        if self.protocol in ("cross_dataset", "fine_tune") and self.test_dataset in self.train_datasets:
            raise ConfigError(f"{self.protocol} requires a test dataset outside train_datasets")
        if self.averaging not in ("users", "pooled"):
            raise ConfigError("averaging must be 'users' or 'pooled'")
        if self.label_source not in ("ecg", "truth"):
            raise ConfigError("labeling source must be 'ecg' or 'truth'")
        for name in ("val_fraction", "split_fraction", "fine_tune_fraction"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ConfigError(f"{name} must lie in (0, 1), got {v}")

    # ------------------------------------------------------------ identity
    def to_dict(self) -> dict:
        def dc(obj):
            return {f.name: getattr(obj, f.name) for f in fields(obj)}
        return {
            "name": self.name,
            "protocol": self.protocol,
            "train_datasets": self.train_datasets,
            "test_dataset": self.test_dataset,
            "channel_mode": self.channel_mode.value,
            "seed": self.seed,
            "training": dc(self.training),
            "model": dict(self.model),
            "preprocess": dc(self.preprocess),
            "labeling": dc(self.labeling),
            "label_source": self.label_source,
            "detect": {"min_box_len": self.min_box_len, "averaging": self.averaging, "tau": self.tau},
            "protocol_params": {"val_fraction": self.val_fraction, "split_fraction": self.split_fraction,
                                "fine_tune_fraction": self.fine_tune_fraction},
            "datasets": {k: {"path": v.path, "seed": v.seed,
                             "synth": v.synth.to_dict() if v.synth else None}
                         for k, v in sorted(self.datasets.items())},
        }

    def spec_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


# ---------------------------------------------------------------- parsing

def _coerce(value: str, like):
    value = value.strip()
    if isinstance(like, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {value!r}")
    if value.lower() in ("none", ""):
        return None
    if isinstance(like, int) and not isinstance(like, bool):
        return int(value)
    if isinstance(like, float) or like is None:
        return float(value)
    if isinstance(like, tuple):
        return tuple(float(v) for v in value.replace(",", " ").split())
    return value


def fill_dataclass(cls, section: dict, skip=()):
    defaults = cls() if cls is not SynthConfig else SynthConfig()
    kw = {}
    names = {f.name for f in fields(cls)}
    for key, raw in section.items():
        if key in skip:
            continue
        if key not in names:
            raise ConfigError(f"unknown key {key!r} for {cls.__name__}")
        like = getattr(defaults, key)
        if key == "channel_noise":
            like = ()
        try:
            kw[key] = _coerce(raw, like)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {cls.__name__}: {exc}") from exc


def apply_overrides(cp: configparser.ConfigParser, overrides: list[str]) -> None:
    """Apply ``section.key=value`` overrides (flag beats file)."""
    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        lhs, value = item.split("=", 1)
        section, key = lhs.rsplit(".", 1)
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key.strip(), value.strip())


def parse_spec_text(text: str, base_dir=None, overrides: list[str] | None = None) -> ExperimentSpec:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable spec file: {exc}") from exc
    apply_overrides(cp, overrides)
    if not cp.has_section("experiment"):
        raise ConfigError("spec file needs an [experiment] section")
    ex = dict(cp["experiment"])
    try:
        train = [s.strip() for s in ex["train_datasets"].replace(",", " ").split()]
        test = ex["test_dataset"].strip()
    except KeyError as exc:
        raise ConfigError(f"[experiment] lacks {exc}") from exc

    def section(name):
        return dict(cp[name]) if cp.has_section(name) else {}

    model = {"depth": 4, "base_filters": 16, "kernel_size": 3}
    for k, v in section("model").items():
        if k not in model:
            raise ConfigError(f"unknown [model] key {k!r}")
        model[k] = int(v)
    lab = section("labeling")
    source = lab.pop("source", "ecg").strip()
    det = section("detect")
    prot = section("protocol")
    datasets = {}
    for name in cp.sections():
        if not name.startswith("dataset."):
            continue
        did = name.split(".", 1)[1]
        sec = dict(cp[name])
        seed = int(sec.pop("seed")) if "seed" in sec else None
        if "path" in sec:
            p = Path(sec["path"].strip())
            if base_dir is not None and not p.is_absolute():
                p = Path(base_dir) / p
            datasets[did] = DatasetSource(did, path=str(p), seed=seed)
        else:
            sec.setdefault("dataset_id", did)
            datasets[did] = DatasetSource(did, synth=fill_dataclass(SynthConfig, sec), seed=seed)
    try:
        return ExperimentSpec(
            train_datasets=train,
            test_dataset=test,
            protocol=ex.get("protocol", "loso").strip(),
            channel_mode=ex.get("channel_mode", "single_z").strip(),
            seed=int(ex.get("seed", 0)),
            name=ex.get("name", "").strip(),
            training=fill_dataclass(TrainingConfig, section("training")),
            model=model,
            preprocess=fill_dataclass(PreprocessConfig, section("preprocess")),
            labeling=fill_dataclass(LabelingConfig, lab),
            label_source=source,
            min_box_len=int(det.get("min_box_len", 2)),
            averaging=det.get("averaging", "users").strip(),
            tau=float(det["tau"]) if det.get("tau", "").strip() not in ("", "none") else None,
            val_fraction=float(prot.get("val_fraction", 0.2)),
            split_fraction=float(prot.get("split_fraction", 0.5)),
            fine_tune_fraction=float(prot.get("fine_tune_fraction", 0.5)),
            datasets=datasets,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_spec(path, overrides: list[str] | None = None) -> ExperimentSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read spec file {path}: {exc}") from exc
    return parse_spec_text(text, base_dir=path.parent, overrides=overrides)
