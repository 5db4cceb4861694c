import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedpake.params import (
    CV_EPS,
    LayerMatrix,
    LayerTensor,
    ModelParams,
    coefficient_of_variation,
    column_mean,
    flatten_model,
    layer_stats,
    load_checkpoint,
    normalize_cv,
    save_checkpoint,
    squared_deviation,
    unflatten_model,
)


def matrix(rows):
    rows = np.asarray(rows, dtype=np.float64)
    return LayerMatrix(list(range(rows.shape[0])), rows)


finite_floats = st.floats(
    min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False
)


@st.composite
def layer_matrices(draw, max_clients=6, max_m=8):
    k = draw(st.integers(1, max_clients))
    m = draw(st.integers(1, max_m))
    rows = draw(
        st.lists(
            st.lists(finite_floats, min_size=m, max_size=m), min_size=k, max_size=k
        )
    )
    return matrix(rows)


class TestColumnMean:
    def test_hand_computed(self):
        assert np.allclose(column_mean(matrix([[1, 2], [3, 4]])), [2, 3], atol=1e-12)

    def test_single_client_identity(self):
        assert np.array_equal(column_mean(matrix([[5, 5]])), [5, 5])

    def test_symmetric_cancellation(self):
        assert np.array_equal(column_mean(matrix([[-1, 0], [1, 0]])), [0, 0])

    def test_empty_errors(self):
        with pytest.raises(ValueError, match="empty client set"):
            column_mean(np.zeros((0, 3)))

    @given(layer_matrices())
    @settings(deadline=None)
    def test_matches_loop_oracle(self, w):
        got = column_mean(w)
        for j in range(w.num_positions):
            want = sum(w.data[i, j] for i in range(w.num_clients)) / w.num_clients
            assert abs(got[j] - want) <= 1e-12 * max(1.0, abs(want))


class TestCoefficientOfVariation:
    def test_hand_computed(self):
        got = coefficient_of_variation(matrix([[1], [2], [3]]))
        assert got[0] == pytest.approx(math.sqrt(2.0 / 3.0) / 2.0, abs=1e-12)

    def test_zero_variance(self):
        assert np.array_equal(coefficient_of_variation(matrix([[7.5], [7.5], [7.5]])), [0.0])

    def test_zero_mean_guard(self):
        a = 0.25
        got = coefficient_of_variation(matrix([[a], [-a]]))
        assert np.isfinite(got[0])
        assert got[0] == pytest.approx(a / CV_EPS, rel=1e-9)

    @given(layer_matrices())
    @settings(deadline=None)
    def test_row_permutation_invariant(self, w):
        perm = np.random.default_rng(0).permutation(w.num_clients)
        permuted = matrix(w.data[perm])
        assert np.allclose(
            coefficient_of_variation(w), coefficient_of_variation(permuted), atol=1e-12
        )

    @given(layer_matrices())
    @settings(deadline=None)
    def test_non_negative(self, w):
        assert np.all(coefficient_of_variation(w) >= 0)


class TestNormalizeCv:
    def test_already_normalized(self):
        assert np.array_equal(normalize_cv(np.array([0.0, 0.5, 1.0])), [0.0, 0.5, 1.0])

    def test_affine_rescale(self):
        assert np.array_equal(normalize_cv(np.array([2.0, 4.0])), [0.0, 1.0])

    def test_constant_maps_to_zero(self):
        assert np.array_equal(normalize_cv(np.array([3.0, 3.0, 3.0])), [0.0, 0.0, 0.0])

    @given(st.lists(finite_floats, min_size=1, max_size=10))
    @settings(deadline=None)
    def test_range_and_extrema(self, values):
        cv = np.asarray(values)
        out = normalize_cv(cv)
        assert np.all((out >= 0) & (out <= 1))
        if cv.max() > cv.min():
            # the input's extremum positions attain the output extrema
            # (rounding can create ties, so compare values, not indices)
            assert out[cv.argmax()] == out.max() == 1.0
            assert out[cv.argmin()] == out.min() == 0.0


class TestSquaredDeviation:
    def test_hand_computed(self):
        assert np.array_equal(
            squared_deviation(matrix([[1, 2], [3, 4]])), [[1, 1], [1, 1]]
        )

    def test_identical_rows_zero(self):
        w = matrix([[1.5, -2.0], [1.5, -2.0], [1.5, -2.0]])
        assert np.array_equal(squared_deviation(w), np.zeros((3, 2)))

    def test_two_rows(self):
        assert np.array_equal(squared_deviation(matrix([[0], [2]])), [[1], [1]])

    @given(layer_matrices())
    @settings(deadline=None)
    def test_zero_iff_identical_rows(self, w):
        sq = squared_deviation(w)
        assert np.all(sq >= 0)
        assert (sq == 0).all() == bool(np.all(w.data == w.data[0]))


class TestLayerStats:
    def test_fields_consistent(self):
        w = matrix([[1.0, 5.0], [3.0, 5.0]])
        stats = layer_stats(w)
        assert np.array_equal(stats.mean, column_mean(w))
        assert np.array_equal(stats.sq_dev, squared_deviation(w))
        assert np.array_equal(stats.cv, coefficient_of_variation(w))
        assert np.all((stats.cv_norm >= 0) & (stats.cv_norm <= 1))


def small_model():
    return ModelParams(
        [
            LayerTensor("fc0.weight", (2, 2), np.array([1.0, 2.0, 3.0, 4.0])),
            LayerTensor("fc0.bias", (2,), np.array([0.5, -0.5])),
        ]
    )


class TestFlattenUnflatten:
    def test_round_trip_exact(self):
        m = small_model()
        back = unflatten_model(flatten_model(m), m)
        for a, b in zip(m.layers, back.layers):
            assert a.name == b.name and a.shape == b.shape
            assert np.array_equal(a.values, b.values)

    def test_row_major(self):
        t = LayerTensor("w", (2, 2), np.array([1.0, 2.0, 3.0, 4.0]))
        assert np.array_equal(t.reshaped(), [[1.0, 2.0], [3.0, 4.0]])

    def test_length_mismatch_names_layer(self):
        m = small_model()
        vectors = flatten_model(m)
        vectors[1] = vectors[1][:1]
        with pytest.raises(ValueError, match="fc0.bias"):
            unflatten_model(vectors, m)


class TestValidation:
    def test_rejects_nan(self):
        with pytest.raises(ValueError, match="finite"):
            LayerTensor("w", (2,), np.array([1.0, np.nan]))

    def test_rejects_bad_length(self):
        with pytest.raises(ValueError, match="shape"):
            LayerTensor("w", (3,), np.array([1.0, 2.0]))

    def test_rejects_duplicate_names(self):
        t = LayerTensor("w", (1,), np.array([1.0]))
        with pytest.raises(ValueError, match="duplicate"):
            ModelParams([t, t.copy()])

    def test_rejects_duplicate_clients(self):
        with pytest.raises(ValueError, match="duplicate client"):
            LayerMatrix([1, 1], np.zeros((2, 2)))


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(7)
        m = ModelParams(
            [
                LayerTensor("fc0.weight", (3, 4), rng.normal(size=12)),
                LayerTensor("fc0.bias", (4,), rng.normal(size=4) * 1e-8),
                LayerTensor("fc1.weight", (4, 2), rng.normal(size=8) * 1e6),
            ]
        )
        path = tmp_path / "model.txt"
        save_checkpoint(m, path)
        back = load_checkpoint(path)
        assert back.layer_names() == m.layer_names()
        for a, b in zip(m.layers, back.layers):
            assert a.shape == b.shape
            assert np.array_equal(a.values, b.values)

    def test_rejects_unknown_directive(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("bogus stuff\n")
        with pytest.raises(ValueError, match="line 1"):
            load_checkpoint(path)
