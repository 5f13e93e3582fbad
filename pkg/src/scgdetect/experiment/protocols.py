"""Experimental protocols: LOSO, cross-dataset, fine-tuning and personalization."""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..detect import MetricsReport, Scores, score_probs, select_threshold
from ..errors import ConfigError, DataError
from ..neural import UNetConfig, UNetModel, save_checkpoint
from .data import Subject, WindowBatch, label_subject, load_dataset_dir, subject_windows, windows_for
from .specfile import ExperimentSpec
from .synth import generate_synthetic
from .training import TrainHistory, fine_tune, train_model

log = logging.getLogger(__name__)

Registry = dict[str, list[Subject]]


# ------------------------------------------------------------ datasets

def build_registry(spec: ExperimentSpec) -> Registry:
    """Load or generate every dataset the spec refers to."""
    needed = list(dict.fromkeys(spec.train_datasets + [spec.test_dataset]))
    registry: Registry = {}
    for did in needed:
        src = spec.datasets.get(did)
        if src is None:
            raise ConfigError(f"dataset {did!r} is not registered (add a [dataset.{did}] section)")
        if src.path is not None:
            registry[did] = load_dataset_dir(src.path, spec.labeling, spec.label_source)
        else:
            seed = spec.seed if src.seed is None else src.seed
            registry[did] = [label_subject(s.record, spec.labeling, spec.label_source, s.ao_indices_native)
                             for s in generate_synthetic(src.synth, seed)]
    return registry


# -------------------------------------------------------------- splits

@dataclass
class Fold:
    index: int
    train: list[str]
    val: list[str]
    test: list[str]


def split_subjects(subject_ids, fraction: float, rng: np.random.Generator) -> tuple[list[str], list[str]]:
    """Shuffle and cut off ``max(1, round(fraction * n))`` subjects as the second part."""
    ids = sorted(subject_ids)
    if len(ids) < 2:
        raise DataError(f"need at least 2 subjects to split, got {len(ids)}")
    order = [ids[i] for i in rng.permutation(len(ids))]
    k = min(len(ids) - 1, max(1, int(np.floor(fraction * len(ids) + 0.5))))
    return sorted(order[:-k]), sorted(order[-k:])


def loso_folds(subject_ids, seed: int = 0, val_fraction: float = 0.2) -> list[Fold]:
    """One fold per subject; a subject-level validation split of the rest."""
    ids = sorted(subject_ids)
    if len(ids) < 3:
        raise DataError(f"LOSO needs at least 3 subjects, got {len(ids)}")
    folds = []
    for k, test in enumerate(ids):
        rest = [s for s in ids if s != test]
        train, val = split_subjects(rest, val_fraction, np.random.default_rng([seed, k]))
        folds.append(Fold(k, train, val, [test]))
    return folds


# ---------------------------------------------------------- fit / score

@dataclass
class FitResult:
    model: UNetModel
    history: TrainHistory
    tau: float


def _by_id(subjects: list[Subject]) -> dict[str, Subject]:
    return {s.subject_id: s for s in subjects}


def _unet_config(spec: ExperimentSpec) -> UNetConfig:
    return UNetConfig(in_channels=spec.channel_mode.n_channels,
                      input_length=spec.preprocess.window_samples, **spec.model)


def fit(spec: ExperimentSpec, train: list[Subject], val: list[Subject], seed,
        init: UNetModel | None = None) -> FitResult:
    mode, pre = spec.channel_mode, spec.preprocess
    tr = windows_for(train, mode, pre, stride_seconds=spec.training.train_stride_seconds)
    va = windows_for(val, mode, pre)
    if init is None:
        model, hist = train_model(tr, va, spec.training, unet=_unet_config(spec), seed=seed)
    else:
        model, hist = fine_tune(init, tr, va, spec.training, seed=seed)
    tau = spec.tau if spec.tau is not None else select_threshold(model, va.x, va.ao,
                                                                 min_len=spec.min_box_len)
    return FitResult(model, hist, tau)


def score_batch(model: UNetModel, batch: WindowBatch, tau: float, min_len: int) -> Scores:
    if len(batch) == 0:
        return Scores()
    return score_probs(model.predict(batch.x), batch.ao, tau, min_len)


def evaluate_subjects(model: UNetModel, subjects: list[Subject], tau: float,
                      spec: ExperimentSpec) -> MetricsReport:
    report = MetricsReport(averaging=spec.averaging)
    for s in subjects:
        batch = subject_windows(s, spec.channel_mode, spec.preprocess)
        report.add(s.subject_id, score_batch(model, batch, tau, spec.min_box_len))
    return report


# ------------------------------------------------------- personalization

@dataclass
class PersonalizationResult:
    model: UNetModel
    report: MetricsReport        # personalized model on the held-out part
    baseline: MetricsReport      # unadapted model on the same held-out part
    tau: float
    adapt_starts: list[int]
    test_starts: list[int]
    history: TrainHistory | None = None


def personalize(model: UNetModel, subject: Subject, spec: ExperimentSpec, base_tau: float,
                seed=0) -> PersonalizationResult:
    """Fine-tune on the first part of one user's timeline, test on the rest.

    The user's non-overlapping windows are split chronologically at
    ``spec.split_fraction``; every adaptation window (including any
    overlapping training windows) ends before the first test window starts.
    """
    mode, pre = spec.channel_mode, spec.preprocess
    grid = subject_windows(subject, mode, pre)
    n = len(grid)
    if n < 2:
        raise DataError(f"user {subject.subject_id} has {n} window(s); personalization needs >= 2")
    n_adapt = min(n - 1, max(1, int(spec.split_fraction * n)))
    adapt, test = grid.subset(range(n_adapt)), grid.subset(range(n_adapt, n))
    boundary = int(test.starts[0])
    if n_adapt >= 2:
        n_val = max(1, int(np.floor(spec.val_fraction * n_adapt + 0.5)))
        n_val = min(n_val, n_adapt - 1)
        val = adapt.subset(range(n_adapt - n_val, n_adapt))
        train_end = int(val.starts[0])
    else:
        n_val, val, train_end = 0, adapt, boundary
    train = subject_windows(subject, mode, pre, stride_seconds=spec.training.train_stride_seconds,
                            span=(0, train_end))
    if len(train) < 2:
        # batch norm needs two windows: repeat what precedes the validation part
        train = adapt.subset(np.resize(np.arange(max(1, n_adapt - n_val)), 2))
    tuned, hist = fine_tune(model, train, val, spec.training, seed=seed)
    tau = spec.tau if spec.tau is not None else select_threshold(tuned, adapt.x, adapt.ao,
                                                                 min_len=spec.min_box_len)
    sid = subject.subject_id
    report = MetricsReport(averaging=spec.averaging)
    report.add(sid, score_batch(tuned, test, tau, spec.min_box_len))
    baseline = MetricsReport(averaging=spec.averaging)
    baseline.add(sid, score_batch(model, test, base_tau, spec.min_box_len))
    return PersonalizationResult(tuned, report, baseline, tau, [int(s) for s in adapt.starts],
                                 [int(s) for s in test.starts], hist)


# -------------------------------------------------------------- running

@dataclass
class FoldOutcome:
    fold: Fold
    fits: dict[str, FitResult]
    reports: dict[str, MetricsReport]
    extra_taus: dict[str, float] = field(default_factory=dict)


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    reports: dict[str, MetricsReport]
    folds: list[FoldOutcome]
    run_dir: Path | None = None

    @property
    def report(self) -> MetricsReport:
        for key in ("test", "personalized", "fine_tuned"):
            if key in self.reports:
                return self.reports[key]
        return next(iter(self.reports.values()))

    def summary(self, checkpoints: dict[int, str] | None = None) -> dict:
        checkpoints = checkpoints or {}
        folds = []
        for fo in self.folds:
            entry = {"fold": fo.fold.index, "train": fo.fold.train, "val": fo.fold.val,
                     "test": fo.fold.test, "checkpoint": checkpoints.get(fo.fold.index)}
            for name, f in fo.fits.items():
                entry[f"{name}_tau"] = f.tau
                entry[f"{name}_best_epoch"] = f.history.best_epoch
                entry[f"{name}_epochs"] = len(f.history.val_loss)
                entry[f"{name}_stopped_early"] = f.history.stopped_early
            if fo.extra_taus:
                entry["personal_taus"] = dict(sorted(fo.extra_taus.items()))
            folds.append(entry)
        spec = self.spec
        return {
            "name": spec.name,
            "protocol": spec.protocol,
            "train_datasets": spec.train_datasets,
            "test_dataset": spec.test_dataset,
            "channel_mode": spec.channel_mode.value,
            "seed": spec.seed,
            "spec_hash": spec.spec_hash(),
            "precision": self.report.precision,
            "recall": self.report.recall,
            "f1": self.report.f1,
            "reports": {k: v.to_dict() for k, v in self.reports.items()},
            "folds": folds,
            "provenance": {"seed": spec.seed, "config_hash": spec.spec_hash(),
                           "checkpoints": [checkpoints[k] for k in sorted(checkpoints)],
                           "spec": spec.to_dict()},
        }


def _pool(registry: Registry, ids) -> list[Subject]:
    return [s for did in ids for s in registry[did]]


def _run_loso(spec, registry, fold: Fold) -> FoldOutcome:
    subj = _by_id(registry[spec.test_dataset])
    f = fit(spec, [subj[s] for s in fold.train], [subj[s] for s in fold.val], [spec.seed, fold.index])
    rep = evaluate_subjects(f.model, [subj[s] for s in fold.test], f.tau, spec)
    return FoldOutcome(fold, {"model": f}, {"test": rep})


def _pretrain(spec, registry, exclude=(), fold_index=0) -> tuple[Fold, FitResult]:
    pool = [s for s in _pool(registry, spec.train_datasets) if s.subject_id not in exclude]
    subj = _by_id(pool)
    train, val = split_subjects(subj, spec.val_fraction, np.random.default_rng([spec.seed, fold_index]))
    f = fit(spec, [subj[s] for s in train], [subj[s] for s in val], [spec.seed, fold_index])
    return Fold(fold_index, train, val, sorted(exclude)), f


def pretrain(spec: ExperimentSpec, registry: Registry | None = None) -> tuple[Fold, FitResult]:
    """Train one model on the pooled training datasets with a subject-level validation split."""
    registry = build_registry(spec) if registry is None else registry
    return _pretrain(spec, registry)


def _run_cross(spec, registry) -> FoldOutcome:
    test = registry[spec.test_dataset]
    fold, f = _pretrain(spec, registry)
    fold.test = sorted(s.subject_id for s in test)
    return FoldOutcome(fold, {"model": f}, {"test": evaluate_subjects(f.model, test, f.tau, spec)})


def _run_fine_tune(spec, registry) -> FoldOutcome:
    test = _by_id(registry[spec.test_dataset])
    fold, base = _pretrain(spec, registry)
    rng = np.random.default_rng([spec.seed, 1_000])
    tune_ids, assess_ids = split_subjects(test, 1.0 - spec.fine_tune_fraction, rng)
    tune_train, tune_val = split_subjects(tune_ids, spec.val_fraction, rng) if len(tune_ids) > 1 \
        else (tune_ids, tune_ids)
    tuned = fit(spec, [test[s] for s in tune_train], [test[s] for s in tune_val],
                [spec.seed, 1_001], init=base.model)
    assess = [test[s] for s in assess_ids]
    fold.test = assess_ids
    reports = {"initial": evaluate_subjects(base.model, assess, base.tau, spec),
               "fine_tuned": evaluate_subjects(tuned.model, assess, tuned.tau, spec)}
    return FoldOutcome(fold, {"model": base, "fine_tuned": tuned}, reports)


def _personalize_all(spec, base: FitResult, users: list[Subject], fold: Fold, seed_base) -> FoldOutcome:
    initial = MetricsReport(averaging=spec.averaging)
    personal = MetricsReport(averaging=spec.averaging)
    taus = {}
    for i, u in enumerate(users):
        res = personalize(base.model, u, spec, base.tau, seed=[*seed_base, 2_000 + i])
        initial = initial.merge(res.baseline)
        personal = personal.merge(res.report)
        taus[u.subject_id] = res.tau
    return FoldOutcome(fold, {"model": base}, {"initial": initial, "personalized": personal}, taus)


def _run_personalize_fold(spec, registry, k: int, user_id: str) -> FoldOutcome:
    user = _by_id(registry[spec.test_dataset])[user_id]
    fold, base = _pretrain(spec, registry, exclude=(user_id,), fold_index=k)
    return _personalize_all(spec, base, [user], fold, [spec.seed, k])


def _run_personalize_cross(spec, registry) -> FoldOutcome:
    users = registry[spec.test_dataset]
    fold, base = _pretrain(spec, registry)
    fold.test = sorted(u.subject_id for u in users)
    return _personalize_all(spec, base, users, fold, [spec.seed, 0])


def _fold_task(args):
    kind, spec, registry, payload = args
    if kind == "loso":
        return _run_loso(spec, registry, payload)
    return _run_personalize_fold(spec, registry, *payload)


def run_experiment(spec: ExperimentSpec, registry: Registry | None = None, runs_dir=None,
                   jobs: int = 1) -> ExperimentResult:
    """Run one experiment; with ``runs_dir`` the artifacts are written to
    ``runs_dir/<spec-hash>/``."""
    registry = build_registry(spec) if registry is None else registry
    for did in spec.train_datasets + [spec.test_dataset]:
        if did not in registry:
            raise ConfigError(f"dataset {did!r} is not registered")
    if spec.protocol == "loso":
        ids = [s.subject_id for s in registry[spec.test_dataset]]
        tasks = [("loso", spec, registry, f) for f in loso_folds(ids, spec.seed, spec.val_fraction)]
        outcomes = _map(tasks, jobs)
    elif spec.protocol == "cross_dataset":
        outcomes = [_run_cross(spec, registry)]
    elif spec.protocol == "fine_tune":
        outcomes = [_run_fine_tune(spec, registry)]
    elif spec.test_dataset in spec.train_datasets:
        ids = sorted(s.subject_id for s in registry[spec.test_dataset])
        outcomes = _map([("personalize", spec, registry, (k, sid)) for k, sid in enumerate(ids)], jobs)
    else:
        outcomes = [_run_personalize_cross(spec, registry)]

    reports: dict[str, MetricsReport] = {}
    for fo in outcomes:
        for name, rep in fo.reports.items():
            reports[name] = reports[name].merge(rep) if name in reports else rep
    result = ExperimentResult(spec, reports, outcomes)
    if runs_dir is not None:
        write_run(result, runs_dir)
    return result


def _map(tasks, jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        return [_fold_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_fold_task, tasks))


# -------------------------------------------------------------- outputs

def _write_history(hist: TrainHistory, path: Path) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss"])
        for i, a, b in hist.rows():
            w.writerow([i, repr(a), repr(b)])


def write_run(result: ExperimentResult, runs_dir) -> Path:
    """``<runs_dir>/<hash>/fold-<k>/{checkpoint.scgu, history.csv, metrics.csv}`` + ``summary.json``."""
    run_dir = Path(runs_dir) / result.spec.spec_hash()
    run_dir.mkdir(parents=True, exist_ok=True)
    checkpoints = {}
    for fo in result.folds:
        fdir = run_dir / f"fold-{fo.fold.index}"
        fdir.mkdir(exist_ok=True)
        for name, f in fo.fits.items():
            stem = "" if name == "model" else f"-{name}"
            save_checkpoint(f.model, None, fdir / f"checkpoint{stem}.scgu")
            _write_history(f.history, fdir / f"history{stem}.csv")
        checkpoints[fo.fold.index] = f"fold-{fo.fold.index}/checkpoint.scgu"
        for name, rep in fo.reports.items():
            stem = "" if name in ("test", "personalized", "fine_tuned") else f"-{name}"
            rep.write_csv(fdir / f"metrics{stem}.csv")
    summary = result.summary(checkpoints)
    (run_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    result.run_dir = run_dir
    return run_dir
