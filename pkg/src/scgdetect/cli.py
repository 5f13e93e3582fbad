"""Command-line entry point: ``scgdetect synth | label | train | eval | run | report``.

Precedence is flag over spec file: ``--set section.key=value`` replaces the
same key of the spec file, and ``--seed`` replaces ``experiment.seed``.
Outputs go under ``$SCG_RUNS_DIR`` (default ``./runs``) unless ``--out`` is
given.  Domain errors exit with status 1 and a single ``error: Class: msg``
line on stderr; usage errors exit with status 2.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import secrets
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .annotate import LabelingConfig, label_record
from .detect import MetricsReport, select_threshold
from .errors import ConfigError, ScgError
from .experiment.data import load_dataset_dir, subject_windows
from .experiment.protocols import build_registry, pretrain, run_experiment, score_batch, write_run
from .experiment.specfile import fill_dataclass, load_spec
from .experiment.synth import SynthConfig, generate_synthetic, write_dataset
from .neural import load_checkpoint, save_checkpoint
from .signal import ChannelSelection, PreprocessConfig, load_record

log = logging.getLogger("scgdetect")

DEFAULT_SEED = 0
REPORT_COLUMNS = ["run", "protocol", "train", "test", "channel_mode", "report", "n_users",
                  "precision", "recall", "f1"]


def runs_root(out=None) -> Path:
    if out:
        return Path(out)
    return Path(os.environ.get("SCG_RUNS_DIR", "runs"))


def _write_json(obj, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _seed(args) -> int:
    if not args.deterministic:
        seed = secrets.randbits(31)
        log.info("non-deterministic mode: drew seed %d", seed)
        return seed
    return DEFAULT_SEED if args.seed is None else args.seed


def _spec(args):
    overrides = list(args.set or [])
    if args.seed is not None or not args.deterministic:
        overrides.append(f"experiment.seed={_seed(args)}")
    return load_spec(args.spec, overrides)


# ------------------------------------------------------------ commands

def cmd_synth(args) -> int:
    keys = {f.name for f in fields(SynthConfig)}
    section = {}
    for item in args.set or []:
        lhs, _, value = item.partition("=")
        key = lhs.split(".", 1)[1] if lhs.startswith("synth.") else lhs
        if not _ or key not in keys:
            raise ConfigError(f"--set {item!r}: expected key=value with key in SynthConfig")
        section[key] = value
    cfg = fill_dataclass(SynthConfig, section)
    seed = _seed(args)
    out = Path(args.out)
    write_dataset(generate_synthetic(cfg, seed), out, cfg, seed=seed, binary=args.binary)
    print(out)
    return 0


def cmd_label(args) -> int:
    cfg = LabelingConfig(ao_search_ms=args.ao_search_ms, box_ms=args.box_ms)
    path = Path(args.record)
    records = sorted(p for p in path.iterdir() if p.suffix in (".csv", ".f32")) if path.is_dir() \
        else [path]
    out_dir = Path(args.out) if args.out else None
    for rec_path in records:
        ann = label_record(load_record(rec_path), cfg)
        target = (out_dir or rec_path.parent) / f"{rec_path.stem}.ann.json"
        ann.save(target)
        print(f"{target},{len(ann.ao_indices)}")
    return 0


def cmd_train(args) -> int:
    spec = _spec(args)
    fold, fit = pretrain(spec)
    out = runs_root(args.out) / spec.spec_hash() / "train"
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(fit.model, None, out / "checkpoint.scgu")
    with (out / "history.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss"])
        for i, a, b in fit.history.rows():
            w.writerow([i, repr(a), repr(b)])
    _write_json({"spec_hash": spec.spec_hash(), "seed": spec.seed, "tau": fit.tau,
                 "channel_mode": spec.channel_mode.value, "train_subjects": fold.train,
                 "val_subjects": fold.val, "best_epoch": fit.history.best_epoch,
                 "stopped_early": fit.history.stopped_early, "spec": spec.to_dict()},
                out / "train.json")
    print(out / "checkpoint.scgu")
    return 0


def _channel_mode(args, n_channels: int, meta: dict) -> ChannelSelection:
    if args.channel_mode:
        return ChannelSelection(args.channel_mode)
    if "channel_mode" in meta:
        return ChannelSelection(meta["channel_mode"])
    by_count = {1: ChannelSelection.SINGLE_Z, 6: ChannelSelection.ACC3_GYR3}
    if n_channels not in by_count:
        raise ConfigError(f"a {n_channels}-channel checkpoint needs --channel-mode (acc3 or gyr3)")
    return by_count[n_channels]


def cmd_eval(args) -> int:
    ckpt = Path(args.checkpoint)
    model, _ = load_checkpoint(ckpt)
    meta_path = ckpt.parent / "train.json"
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    mode = _channel_mode(args, model.config.in_channels, meta)
    subjects = load_dataset_dir(args.dataset, LabelingConfig(), args.label_source)
    pre = PreprocessConfig()
    batches = {s.subject_id: subject_windows(s, mode, pre) for s in subjects}
    if args.tau is not None:
        tau, source = args.tau, "flag"
    else:
        # select on the evaluated data; a tau carried from training is not reused
        x = np.concatenate([b.x for b in batches.values()]) if batches else np.zeros((0,))
        ao = [a for b in batches.values() for a in b.ao]
        tau, source = select_threshold(model, x, ao, min_len=args.min_box_len), "select_threshold"
    report = MetricsReport(averaging=args.averaging)
    for sid, b in batches.items():
        report.add(sid, score_batch(model, b, tau, args.min_box_len))
    out = Path(args.out) if args.out else runs_root() / "eval" / Path(args.dataset).name
    report.write_csv(out / "metrics.csv")
    summary = {"checkpoint": str(ckpt), "dataset": str(args.dataset), "channel_mode": mode.value,
               "tau": tau, "tau_source": source, "min_box_len": args.min_box_len,
               "precision": report.precision, "recall": report.recall, "f1": report.f1,
               "report": report.to_dict()}
    _write_json(summary, out / "summary.json")
    if args.plot and batches:
        from .plotting import plot_trace
        first = next(iter(batches.values()))
        probs = model.predict(first.x[:1])
        plot_trace(first.x[0, 0], probs[0, 0], first.y[0, 0], tau, out / "trace.png")
    print(f"precision={report.precision:.4f},recall={report.recall:.4f},f1={report.f1:.4f},tau={tau:g}")
    return 0


def cmd_run(args) -> int:
    spec = _spec(args)
    registry = build_registry(spec)
    result = run_experiment(spec, registry, jobs=args.jobs)
    run_dir = write_run(result, runs_root(args.out))
    for name, rep in result.reports.items():
        print(f"{name},{rep.precision:.4f},{rep.recall:.4f},{rep.f1:.4f}")
    print(run_dir / "summary.json")
    return 0


def report_rows(runs_dir: Path) -> list[dict]:
    rows = []
    for path in sorted(Path(runs_dir).glob("*/summary.json")):
        s = json.loads(path.read_text())
        for name in sorted(s["reports"]):
            agg = s["reports"][name]["aggregate"]
            rows.append({"run": s.get("name") or s["spec_hash"], "protocol": s["protocol"],
                         "train": "+".join(s["train_datasets"]), "test": s["test_dataset"],
                         "channel_mode": s["channel_mode"], "report": name,
                         "n_users": agg["n_users"], "precision": agg["precision"],
                         "recall": agg["recall"], "f1": agg["f1"]})
    return rows


def cmd_report(args) -> int:
    runs_dir = Path(args.runs_dir) if args.runs_dir else runs_root()
    rows = report_rows(runs_dir)
    if not rows:
        raise ConfigError(f"no summary.json found under {runs_dir}")
    out = Path(args.out) if args.out else runs_dir
    buf = io.StringIO()
    w = csv.DictWriter(buf, REPORT_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({**r, **{k: f"{r[k]:.2f}" for k in ("precision", "recall", "f1")}})
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(buf.getvalue(), encoding="utf-8")
    sys.stdout.write(buf.getvalue())
    if not args.no_plots:
        from .plotting import plot_per_user, plot_scores
        for r in rows:
            r["label"] = f"{r['run']}:{r['report']}"
        plot_scores(rows, out / "scores.png")
        for path in sorted(runs_dir.glob("*/summary.json")):
            s = json.loads(path.read_text())
            plot_per_user(s["reports"], out / f"per_user-{s['spec_hash']}.png",
                          title=s.get("name") or s["spec_hash"])
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help=f"random seed (default {DEFAULT_SEED}, or the spec file's)")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override a spec-file key (repeatable)")
    det = common.add_mutually_exclusive_group()
    det.add_argument("--deterministic", dest="deterministic", action="store_true", default=True,
                     help="use the fixed/provided seed (default)")
    det.add_argument("--nondeterministic", dest="deterministic", action="store_false",
                     help="draw a fresh seed; it is recorded in the outputs")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="scgdetect", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--binary", action="store_true", help="float32 files instead of CSV")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("label", parents=[common], help="label a record (or every record in a dir)")
    s.add_argument("record")
    s.add_argument("--out")
    s.add_argument("--ao-search-ms", type=float, default=90.0)
    s.add_argument("--box-ms", type=float, default=25.0)
    s.set_defaults(func=cmd_label)

    s = sub.add_parser("train", parents=[common], help="train one model from a spec file")
    s.add_argument("spec")
    s.add_argument("--out")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common], help="score a checkpoint on a dataset dir")
    s.add_argument("checkpoint")
    s.add_argument("dataset")
    s.add_argument("--tau", type=float)
    s.add_argument("--channel-mode", choices=[m.value for m in ChannelSelection])
    s.add_argument("--label-source", choices=["ecg", "truth"], default="ecg")
    s.add_argument("--min-box-len", type=int, default=2)
    s.add_argument("--averaging", choices=["users", "pooled"], default="users")
    s.add_argument("--plot", action="store_true", help="also render trace.png")
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("run", parents=[common], help="run a full experiment from a spec file")
    s.add_argument("spec")
    s.add_argument("--jobs", type=int, default=1, help="parallel fold workers")
    s.add_argument("--out", help="runs root (default $SCG_RUNS_DIR or ./runs)")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("report", parents=[common], help="tabulate completed runs")
    s.add_argument("runs_dir", nargs="?")
    s.add_argument("--out")
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScgError, OSError, ValueError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else ""
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
