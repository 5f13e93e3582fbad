import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import conv1d_naive
from scgdetect.errors import ShapeError
from scgdetect.neural import layers as L
from scgdetect.neural.gradcheck import check_layer, relative_error


@pytest.fixture
def rng():
    return np.random.default_rng(0)


class TestConv:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(1, 4), st.integers(1, 4),
           st.sampled_from([1, 3, 5]), st.integers(1, 12))
    def test_matches_nested_loops(self, seed, n, c, o, k, length):
        r = np.random.default_rng(seed)
        x, w, b = r.standard_normal((n, c, length)), r.standard_normal((o, c, k)), r.standard_normal(o)
        out, _ = L.conv1d_forward(x, w, b)
        assert np.max(np.abs(out - conv1d_naive(x, w, b))) < 1e-12

    def test_channel_mismatch(self, rng):
        with pytest.raises(ShapeError, match="6"):
            L.conv1d_forward(rng.standard_normal((2, 1, 8)), rng.standard_normal((4, 6, 3)), np.zeros(4))

    @pytest.mark.parametrize("k", [1, 3, 5])
    def test_gradients(self, rng, k):
        x, w, b = rng.standard_normal((2, 3, 16)), rng.standard_normal((4, 3, k)), rng.standard_normal(4)
        assert max(check_layer(L.conv1d_forward, L.conv1d_backward, [x, w, b], rng)) < 1e-5


class TestBatchNorm:
    def test_train_output_statistics(self, rng):
        x = rng.standard_normal((4, 3, 50)) * 5 + 2
        out, _ = L.batchnorm_forward(x, np.ones(3), np.zeros(3), np.zeros(3), np.ones(3), True)
        np.testing.assert_allclose(out.mean(axis=(0, 2)), 0, atol=1e-12)
        np.testing.assert_allclose(out.var(axis=(0, 2)), 1, atol=1e-4)

    def test_running_stats_update(self, rng):
        x = rng.standard_normal((2, 1, 10)) + 3
        mean, var = np.zeros(1), np.ones(1)
        L.batchnorm_forward(x, np.ones(1), np.zeros(1), mean, var, True)
        np.testing.assert_allclose(mean, 0.1 * x.mean())
        np.testing.assert_allclose(var, 0.9 + 0.1 * x.var(ddof=1))

    def test_infer_uses_running_stats(self, rng):
        x = rng.standard_normal((1, 2, 8))
        out, _ = L.batchnorm_forward(x, np.ones(2), np.zeros(2), np.full(2, 1.0), np.full(2, 4.0), False)
        np.testing.assert_allclose(out, (x - 1) / np.sqrt(4 + L.BN_EPS))

    def test_batch_of_one_rejected(self, rng):
        with pytest.raises(ShapeError):
            L.batchnorm_forward(rng.standard_normal((1, 2, 8)), np.ones(2), np.zeros(2),
                                np.zeros(2), np.ones(2), True)

    @pytest.mark.parametrize("train", [True, False])
    def test_gradients(self, rng, train):
        x = rng.standard_normal((3, 4, 12))
        g, b = rng.standard_normal(4) + 1, rng.standard_normal(4)

        def fwd(x, g, b):
            return L.batchnorm_forward(x, g, b, np.zeros(4), np.full(4, 2.0), train)

        assert max(check_layer(fwd, L.batchnorm_backward, [x, g, b], rng)) < 1e-5


class TestActivations:
    def test_relu_gradient(self, rng):
        x = rng.standard_normal((2, 3, 20))
        x[np.abs(x) < 1e-2] = 0.5  # keep away from the kink
        assert check_layer(L.relu_forward, L.relu_backward, [x], rng)[0] < 1e-5

    def test_sigmoid_gradient(self, rng):
        x = rng.standard_normal((2, 3, 20)) * 3
        assert check_layer(L.sigmoid_forward, L.sigmoid_backward, [x], rng)[0] < 1e-5

    def test_sigmoid_tails_finite(self):
        with np.errstate(over="raise", invalid="raise"):
            out = L.sigmoid(np.array([-800.0, 0.0, 800.0]))
        assert np.all(np.isfinite(out))
        assert out[0] == pytest.approx(0.0, abs=1e-300) and out[1] == 0.5 and out[2] == 1.0


class TestResampling:
    def test_maxpool_values_and_ties(self):
        x = np.array([[[1.0, 3.0, 2.0, 2.0, 5.0, 4.0]]])
        out, (arg, _, _) = L.maxpool1d_forward(x)
        assert out.ravel().tolist() == [3.0, 2.0, 5.0]
        assert L.maxpool_indices(arg).ravel().tolist() == [1, 2, 4]

    def test_maxpool_odd_length(self):
        with pytest.raises(ShapeError):
            L.maxpool1d_forward(np.zeros((1, 1, 5)))

    def test_maxpool_gradient(self, rng):
        x = rng.permutation(96).reshape(2, 3, 16).astype(float) / 7  # distinct values, no ties
        assert check_layer(L.maxpool1d_forward, L.maxpool1d_backward, [x], rng)[0] < 1e-5

    def test_upsample(self, rng):
        x = np.array([[[1.0, 2.0]]])
        assert L.upsample1d_forward(x)[0].ravel().tolist() == [1, 1, 2, 2]
        y = rng.standard_normal((2, 3, 8))
        assert check_layer(L.upsample1d_forward, L.upsample1d_backward, [y], rng)[0] < 1e-5

    def test_pool_then_upsample_shape(self, rng):
        x = rng.standard_normal((2, 3, 320))
        assert L.upsample1d_forward(L.maxpool1d_forward(x)[0])[0].shape == x.shape


def test_relative_error_ignores_shared_zeros():
    assert relative_error([0.0, 1.0], [1e-12, 1.0]) == 0.0
    assert relative_error([1.0], [1.1]) == pytest.approx(0.1 / 1.1)
