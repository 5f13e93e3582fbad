import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import grid_sweep, max_matching, rle_boxes
from scgdetect.detect import (DEFAULT_TAU_GRID, DetectionBox, MetricsReport, Scores, compute_metrics,
                              f1_from_pr, mask_to_boxes, match_detections, score_probs,
                              select_threshold, select_threshold_from_probs, threshold_mask)
from scgdetect.errors import ContractError, DataError
from scgdetect.neural import UNetConfig, UNetModel


def spans(boxes):
    return [(b.start, b.end) for b in boxes]


class TestBoxes:
    def test_strict_threshold(self):
        assert threshold_mask([0.5, 0.51, 0.49], 0.5).tolist() == [0, 1, 0]

    def test_example_runs(self):
        m = [0, 1, 1, 1, 0, 0, 1, 1, 0]
        assert spans(mask_to_boxes(m, 1)) == [(1, 3), (6, 7)]

    def test_min_len_drops_short_runs(self):
        assert spans(mask_to_boxes([1, 0, 1, 1, 0, 1], 2)) == [(2, 3)]

    def test_peak_prob(self):
        p = np.array([0.1, 0.7, 0.9, 0.6, 0.2])
        (b,) = mask_to_boxes(threshold_mask(p, 0.5), 2, probs=p)
        assert b.peak_prob == 0.9 and len(b) == 3 and 2 in b

    @given(st.lists(st.integers(0, 1), max_size=200), st.integers(1, 5))
    def test_matches_rle(self, mask, min_len):
        assert spans(mask_to_boxes(mask, min_len)) == rle_boxes(mask, min_len)


class TestMatching:
    def test_one_to_one(self):
        boxes = [DetectionBox(0, 10), DetectionBox(20, 30)]
        assert match_detections(boxes, [5, 6, 40]) == (1, 1, 2)

    def test_empty(self):
        assert match_detections([], [1, 2]) == (0, 0, 2)
        assert match_detections([DetectionBox(0, 3)], []) == (0, 1, 0)

    def test_overlap_rejected(self):
        with pytest.raises(ContractError):
            match_detections([DetectionBox(0, 5), DetectionBox(5, 8)], [1])

    @given(st.lists(st.integers(0, 1), max_size=120), st.lists(st.integers(0, 119), max_size=15))
    def test_matches_assignment_oracle(self, mask, ao):
        ao = sorted(set(ao))
        assert match_detections(mask_to_boxes(mask, 1), ao) == max_matching(rle_boxes(mask, 1), ao)

    def test_counts_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            mask = (rng.random(200) < 0.3).astype(int)
            ao = np.unique(rng.integers(0, 200, 10))
            boxes = mask_to_boxes(mask, 2)
            tp, fp, fn = match_detections(boxes, ao)
            assert tp + fp == len(boxes) and tp + fn == len(ao)


class TestMetrics:
    def test_formula(self):
        s = compute_metrics(8, 2, 2)
        assert (s.precision, s.recall, s.f1) == (0.8, 0.8, pytest.approx(0.8))

    def test_zero_denominators(self):
        s = compute_metrics(0, 0, 0)
        assert (s.precision, s.recall, s.f1) == (0.0, 0.0, 0.0)

    def test_f1_from_pr_matches_counts(self):
        s = compute_metrics(45, 5, 15)
        assert f1_from_pr(s.precision, s.recall) == pytest.approx(s.f1, abs=1e-12)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            compute_metrics(-1, 0, 0)

    def test_user_average_vs_pooled(self, tmp_path):
        rep = MetricsReport()
        rep.add("a", Scores(9, 1, 0))
        rep.add("b", Scores(1, 1, 8))
        assert rep.f1 == pytest.approx((Scores(9, 1, 0).f1 + Scores(1, 1, 8).f1) / 2)
        pooled = MetricsReport(rep.per_user, averaging="pooled")
        assert pooled.f1 == pytest.approx(Scores(10, 2, 8).f1)
        path = rep.write_csv(tmp_path / "m.csv")
        lines = path.read_text().splitlines()
        assert lines[0].split(",")[:4] == ["subject_id", "tp", "fp", "fn"]
        assert len(lines) >= 3


class TestThreshold:
    def test_grid(self):
        assert DEFAULT_TAU_GRID[0] == 0.05 and DEFAULT_TAU_GRID[-1] == 0.95 and len(DEFAULT_TAU_GRID) == 19

    def test_tie_goes_to_lowest(self):
        probs = np.zeros((1, 20))
        probs[0, 5:8] = 0.99
        assert select_threshold_from_probs(probs, [[6]]) == 0.05

    def test_empty_validation(self):
        with pytest.raises(DataError):
            select_threshold_from_probs(np.zeros((0, 10)), [])

    def test_against_exhaustive_sweep(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            probs = rng.random((3, 40))
            ao = [np.unique(rng.integers(0, 40, 4)) for _ in range(3)]
            tau, f1 = grid_sweep(probs, ao, DEFAULT_TAU_GRID, 2)
            got = select_threshold_from_probs(probs, ao)
            assert got == tau
            assert abs(score_probs(probs, ao, got).f1 - f1) < 1e-12

    def test_model_wrapper(self):
        m = UNetModel.initialize(UNetConfig(base_filters=2), 0)
        x = np.random.default_rng(0).random((2, 1, 320))
        tau = select_threshold(m, x, [[10, 100], [50]])
        assert tau in DEFAULT_TAU_GRID
