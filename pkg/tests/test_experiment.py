import json

import numpy as np
import pytest

from scgdetect.errors import ConfigError, DataError, ShapeError
from scgdetect.experiment import (ExperimentSpec, SynthConfig, TrainingConfig, generate_synthetic,
                                  run_experiment)
from scgdetect.experiment.data import WindowBatch, label_subject, load_dataset_dir, windows_for
from scgdetect.experiment.protocols import build_registry, loso_folds, personalize, split_subjects
from scgdetect.experiment.specfile import DatasetSource, parse_spec_text
from scgdetect.experiment.synth import write_dataset
from scgdetect.experiment.training import fine_tune, train_model
from scgdetect.neural import UNetConfig, UNetModel
from scgdetect.signal import PreprocessConfig

FAST = TrainingConfig(batch_size=8, lr=1e-3, max_epochs=2, patience=2)
TINY = {"depth": 4, "base_filters": 2, "kernel_size": 3}


def _subjects(n=4, duration=20.0, seed=0, **kw):
    cfg = SynthConfig(n_subjects=n, duration_s=duration, native_rate_hz=250, **kw)
    return [label_subject(s.record, source="truth", truth_ao_native=s.ao_indices_native)
            for s in generate_synthetic(cfg, seed)]


def _batch(n, fill):
    x = np.random.default_rng(0).random((n, 1, 320)).astype(np.float32)
    y = np.full((n, 1, 320), fill, dtype=np.uint8)
    return WindowBatch(x, y, np.arange(n) * 320, ["s"] * n, [np.array([], int)] * n)


class TestSynth:
    def test_reproducible(self):
        a = generate_synthetic(SynthConfig(n_subjects=2, duration_s=5), seed=3)
        b = generate_synthetic(SynthConfig(n_subjects=2, duration_s=5), seed=3)
        assert all(x.record.equals(y.record) for x, y in zip(a, b))

    def test_ao_after_r(self):
        s = generate_synthetic(SynthConfig(n_subjects=1, duration_s=10), seed=0)[0]
        d = s.ao_times_s - s.r_times_s[: len(s.ao_times_s)]
        assert np.all((d > 0.03) & (d < 0.07))

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            SynthConfig(n_subjects=0)

    def test_write_and_reload(self, tmp_path):
        cfg = SynthConfig(n_subjects=2, duration_s=10, native_rate_hz=250)
        subs = generate_synthetic(cfg, seed=1)
        write_dataset(subs, tmp_path, cfg, seed=1)
        back = load_dataset_dir(tmp_path, source="truth")
        assert [s.subject_id for s in back] == [s.record.subject_id for s in subs]
        assert (tmp_path / "dataset.json").exists()


class TestSplits:
    def test_loso_every_subject_once(self):
        ids = [f"s{i}" for i in range(5)]
        folds = loso_folds(ids, seed=0)
        assert sorted(f.test[0] for f in folds) == ids
        for f in folds:
            assert len(f.val) == 1 and len(f.train) == 3
            assert not set(f.train) & set(f.val) and f.test[0] not in f.train + f.val

    def test_loso_too_few(self):
        with pytest.raises(DataError):
            loso_folds(["a", "b"])

    def test_split_disjoint(self):
        a, b = split_subjects([str(i) for i in range(10)], 0.2, np.random.default_rng(0))
        assert len(b) == 2 and not set(a) & set(b) and len(a) + len(b) == 10


class TestTraining:
    def test_zero_epochs_returns_initial(self):
        init = UNetModel.initialize(UNetConfig(base_filters=2), 0)
        model, hist = train_model(_batch(4, 0), _batch(2, 0), TrainingConfig(max_epochs=0), model=init)
        assert hist.train_loss == [] and hist.best_epoch is None
        assert all(np.array_equal(model.params[k], init.params[k]) for k in init.params)

    def test_early_stopping_restores_best(self):
        # validation labels are the opposite of training labels: val loss climbs from epoch 0
        cfg = TrainingConfig(batch_size=4, lr=1e-2, max_epochs=30, patience=3)
        model, hist = train_model(_batch(8, 0), _batch(4, 1), cfg, unet=UNetConfig(base_filters=2))
        assert hist.stopped_early
        assert hist.best_epoch == int(np.argmin(hist.val_loss))
        assert len(hist.val_loss) == hist.best_epoch + 1 + cfg.patience

    def test_fine_tune_channel_mismatch(self):
        m = UNetModel.initialize(UNetConfig(in_channels=6, base_filters=2), 0)
        with pytest.raises(ShapeError):
            fine_tune(m, _batch(4, 0), _batch(2, 0), FAST)


def _spec(protocol, train, test, **kw):
    ds = {d: DatasetSource(d, synth=SynthConfig(dataset_id=d, n_subjects=4, duration_s=20,
                                                native_rate_hz=250), seed=i)
          for i, d in enumerate(["a", "b", "c"])}
    return ExperimentSpec(train, test, protocol=protocol, training=FAST, model=TINY, datasets=ds,
                          label_source="truth", **kw)


class TestProtocols:
    def test_loso_reports(self, tmp_path):
        res = run_experiment(_spec("loso", ["a"], "a"), runs_dir=tmp_path)
        assert len(res.report.per_user) == 4
        assert res.report.f1 == pytest.approx(np.mean([s.f1 for s in res.report.per_user.values()]))
        summary = json.loads((res.run_dir / "summary.json").read_text())
        assert summary["spec_hash"] == res.spec.spec_hash()
        assert len(summary["folds"]) == 4
        assert (res.run_dir / "fold-0" / "checkpoint.scgu").exists()
        assert (res.run_dir / "fold-3" / "history.csv").exists()

    def test_multi_source_size(self):
        spec = _spec("cross_dataset", ["a", "b"], "c")
        reg = build_registry(spec)
        both = windows_for(reg["a"] + reg["b"], spec.channel_mode, spec.preprocess)
        parts = [len(windows_for(reg[d], spec.channel_mode, spec.preprocess)) for d in "ab"]
        assert len(both) == sum(parts)

    def test_cross_and_fine_tune(self):
        assert run_experiment(_spec("cross_dataset", ["a"], "b")).report.per_user
        res = run_experiment(_spec("fine_tune", ["a"], "b"))
        assert set(res.reports) == {"initial", "fine_tuned"}
        assert set(res.reports["initial"].per_user) == set(res.reports["fine_tuned"].per_user)

    def test_protocol_rules(self):
        with pytest.raises(ConfigError):
            _spec("loso", ["a"], "b")
        with pytest.raises(ConfigError):
            _spec("cross_dataset", ["a"], "a")

    def test_unregistered_dataset(self):
        spec = _spec("cross_dataset", ["a"], "z")
        with pytest.raises(ConfigError, match="z"):
            build_registry(spec)

    def test_deterministic(self):
        a = run_experiment(_spec("cross_dataset", ["a"], "b"))
        b = run_experiment(_spec("cross_dataset", ["a"], "b"))
        assert a.summary() == b.summary()


class TestPersonalize:
    def test_chronological_split(self):
        spec = _spec("personalize", ["a"], "b", split_fraction=0.5)
        user = _subjects(1, duration=60.0)[0]
        model = UNetModel.initialize(UNetConfig(base_filters=2), 0)
        res = personalize(model, user, spec, base_tau=0.5)
        n = len(res.adapt_starts) + len(res.test_starts)
        assert n == 12 and len(res.adapt_starts) == 6
        assert max(res.adapt_starts) < min(res.test_starts)
        assert sorted(res.adapt_starts + res.test_starts) == list(range(0, 12 * 320, 320))

    def test_too_little_data_names_user(self):
        spec = _spec("personalize", ["a"], "b")
        user = _subjects(1, duration=6.0)[0]
        model = UNetModel.initialize(UNetConfig(base_filters=2), 0)
        with pytest.raises(DataError, match=user.subject_id):
            personalize(model, user, spec, base_tau=0.5)

    def test_within_dataset_runs_per_user(self):
        res = run_experiment(_spec("personalize", ["a"], "a"))
        assert len(res.folds) == 4
        assert set(res.reports["personalized"].per_user) == set(res.reports["initial"].per_user)


SPEC_TEXT = """
[experiment]
protocol = cross_dataset
train_datasets = clean
test_dataset = noisy
channel_mode = acc3_gyr3
seed = 3

[training]
lr = 1e-3
max_epochs = 5

[model]
base_filters = 8

[detect]
tau = 0.4

[dataset.clean]
n_subjects = 4
duration_s = 30
channel_count = 6

[dataset.noisy]
n_subjects = 3
artifact_rate = 6
channel_count = 6
seed = 9
"""


class TestSpecFile:
    def test_parse(self):
        spec = parse_spec_text(SPEC_TEXT)
        assert spec.protocol == "cross_dataset" and spec.channel_mode.n_channels == 6
        assert spec.training.lr == 1e-3 and spec.training.batch_size == 32
        assert spec.model["base_filters"] == 8 and spec.tau == 0.4
        assert spec.datasets["noisy"].synth.artifact_rate == 6 and spec.datasets["noisy"].seed == 9

    def test_override_wins(self):
        spec = parse_spec_text(SPEC_TEXT, overrides=["training.lr=0.01", "experiment.seed=4"])
        assert spec.training.lr == 0.01 and spec.seed == 4

    def test_hash_tracks_content(self):
        a = parse_spec_text(SPEC_TEXT)
        assert a.spec_hash() == parse_spec_text(SPEC_TEXT).spec_hash()
        assert a.spec_hash() != parse_spec_text(SPEC_TEXT, overrides=["experiment.seed=5"]).spec_hash()

    @pytest.mark.parametrize("bad", ["training.nope=1", "lr=3"])
    def test_bad_override(self, bad):
        with pytest.raises(ConfigError):
            parse_spec_text(SPEC_TEXT, overrides=[bad])

    def test_preprocess_window_samples(self):
        assert PreprocessConfig().window_samples == 320
