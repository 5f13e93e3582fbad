import csv
import json

import pytest

from scgdetect.cli import main

SPEC = """
[experiment]
name = tiny
protocol = {protocol}
train_datasets = {train}
test_dataset = {test}

[training]
batch_size = 8
lr = 1e-3
max_epochs = 2

[model]
base_filters = 2

[dataset.a]
path = {a}

[dataset.b]
n_subjects = 3
duration_s = 20
native_rate_hz = 250
"""


@pytest.fixture
def dataset(tmp_path):
    out = tmp_path / "a"
    assert main(["synth", "--out", str(out), "--set", "n_subjects=3", "--set", "duration_s=20",
                 "--set", "native_rate_hz=250", "--set", "channel_count=6", "--seed", "1"]) == 0
    return out


def _spec(tmp_path, protocol="loso", train="a", test="a"):
    p = tmp_path / f"{protocol}.ini"
    p.write_text(SPEC.format(protocol=protocol, train=train, test=test, a=tmp_path / "a"))
    return p


def test_pipeline(tmp_path, dataset, capsys, monkeypatch):
    monkeypatch.setenv("SCG_RUNS_DIR", str(tmp_path / "runs"))
    assert (dataset / "dataset.json").exists()
    assert main(["label", str(dataset), "--out", str(tmp_path / "ann")]) == 0
    assert len(list((tmp_path / "ann").glob("*.ann.json"))) == 3

    assert main(["train", str(_spec(tmp_path))]) == 0
    ckpt = capsys.readouterr().out.strip().splitlines()[-1]
    assert ckpt.startswith(str(tmp_path / "runs")) and ckpt.endswith("checkpoint.scgu")

    assert main(["eval", ckpt, str(dataset), "--out", str(tmp_path / "ev"), "--plot"]) == 0
    summary = json.loads((tmp_path / "ev" / "summary.json").read_text())
    assert {"precision", "recall", "f1", "tau"} <= set(summary)
    assert summary["tau_source"] == "select_threshold"
    assert (tmp_path / "ev" / "trace.png").stat().st_size > 0

    assert main(["eval", ckpt, str(dataset), "--tau", "0.3", "--out", str(tmp_path / "ev2")]) == 0
    assert json.loads((tmp_path / "ev2" / "summary.json").read_text())["tau"] == 0.3


def test_run_and_report(tmp_path, dataset, capsys):
    runs = tmp_path / "runs"
    for mode in ("single_z", "acc3"):
        spec = _spec(tmp_path)
        assert main(["run", str(spec), "--out", str(runs),
                     "--set", f"experiment.channel_mode={mode}"]) == 0
    capsys.readouterr()
    assert main(["report", str(runs), "--out", str(tmp_path / "rep")]) == 0
    rows = list(csv.DictReader((tmp_path / "rep" / "report.csv").open()))
    assert rows and list(rows[0]) == ["run", "protocol", "train", "test", "channel_mode", "report",
                                      "n_users", "precision", "recall", "f1"]
    assert sorted(r["channel_mode"] for r in rows) == ["acc3", "single_z"]
    assert all(len(r["f1"].split(".")[1]) == 2 for r in rows)
    assert (tmp_path / "rep" / "scores.png").exists()


def test_run_is_byte_identical(tmp_path, dataset):
    spec = _spec(tmp_path, "cross_dataset", "a", "b")
    outs = []
    for k in range(2):
        assert main(["run", str(spec), "--out", str(tmp_path / f"r{k}")]) == 0
        outs.append(next((tmp_path / f"r{k}").glob("*/summary.json")).read_bytes())
    assert outs[0] == outs[1]


def test_unknown_flag_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "x.ini", "--bogus"])
    assert exc.value.code == 2


def test_domain_error_single_line(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[experiment]\nprotocol = loso\ntrain_datasets = a\ntest_dataset = b\n")
    assert main(["run", str(bad)]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("error: ConfigError:")


def test_corrupt_checkpoint(tmp_path, dataset, capsys):
    ck = tmp_path / "c.scgu"
    ck.write_bytes(b"nope")
    assert main(["eval", str(ck), str(dataset)]) == 1
    assert "CheckpointError" in capsys.readouterr().err
