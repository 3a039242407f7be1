import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from feddbn.dbn import (
    BinaryDbn,
    WeightedDbn,
    is_dag,
    lag_block,
    load_csv,
    load_json,
    save_csv,
    save_json,
    threshold,
)
from feddbn.errors import DimensionError


def test_threshold_zero_dbn_is_empty():
    g = threshold(WeightedDbn.zeros(4, 2), 0.3, 0.3)
    assert g.W_edges == frozenset() and g.A_edges == frozenset()


def test_threshold_strict():
    W = np.zeros((3, 3))
    W[1, 2] = 0.31
    W[0, 1] = 0.3  # exactly at tau: dropped
    g = threshold(WeightedDbn(W, np.zeros((3, 3))), 0.3, 0.3)
    assert g.W_edges == {(1, 2)}


def test_threshold_zero_tau_keeps_nonzeros_off_diagonal():
    rng = np.random.default_rng(0)
    W = rng.standard_normal((4, 4)) * (rng.random((4, 4)) < 0.5)
    A = rng.standard_normal((8, 4)) * (rng.random((8, 4)) < 0.5)
    g = threshold(WeightedDbn(W, A), 0.0, 0.0)
    off = W.copy()
    np.fill_diagonal(off, 0.0)
    assert len(g.W_edges) == np.count_nonzero(off)
    assert len(g.A_edges) == np.count_nonzero(A)
    np.testing.assert_array_equal(g.W_matrix(), (off != 0).astype(int))
    np.testing.assert_array_equal(g.A_matrix(), (A != 0).astype(int))


def test_threshold_drops_diagonal():
    g = threshold(WeightedDbn(np.eye(3), np.zeros((3, 3))), 0.3, 0.3)
    assert g.W_edges == frozenset()


def test_threshold_lag_indexing():
    A = np.zeros((6, 3))
    A[4, 1] = 0.9  # lag 2, source 1, target 1
    g = threshold(WeightedDbn(np.zeros((3, 3)), A), 0.3, 0.3)
    assert g.A_edges == {(2, 1, 1)}


def test_threshold_negative_tau():
    with pytest.raises(ValueError):
        threshold(WeightedDbn.zeros(2, 1), -0.1, 0.3)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (4, 4), elements=st.floats(-1, 1)),
       arrays(np.float64, (8, 4), elements=st.floats(-1, 1)),
       st.floats(0, 1), st.floats(0, 1))
def test_threshold_monotone(W, A, t1, t2):
    lo, hi = min(t1, t2), max(t1, t2)
    g_lo = threshold(WeightedDbn(W, A), lo, lo)
    g_hi = threshold(WeightedDbn(W, A), hi, hi)
    assert g_hi.W_edges <= g_lo.W_edges
    assert g_hi.A_edges <= g_lo.A_edges


def test_lag_block_p1_is_A():
    A = np.arange(9.0).reshape(3, 3)
    np.testing.assert_array_equal(lag_block(WeightedDbn(np.zeros((3, 3)), A), 1), A)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_lag_block_round_trip(p):
    rng = np.random.default_rng(p)
    lags = [rng.standard_normal((4, 4)) for _ in range(p)]
    dbn = WeightedDbn.from_lags(np.zeros((4, 4)), lags)
    assert dbn.p == p
    for i, Ai in enumerate(lags, start=1):
        np.testing.assert_array_equal(lag_block(dbn, i), Ai)


def test_lag_block_out_of_range():
    dbn = WeightedDbn.zeros(3, 3)
    with pytest.raises(ValueError):
        lag_block(dbn, 4)
    with pytest.raises(ValueError):
        lag_block(dbn, 0)


def test_weighted_dbn_shape_checks():
    with pytest.raises(DimensionError):
        WeightedDbn(np.zeros((2, 3)), np.zeros((2, 3)))
    with pytest.raises(DimensionError):
        WeightedDbn(np.zeros((3, 3)), np.zeros((4, 3)))


def test_is_dag():
    assert is_dag([(0, 1), (1, 2)], 3)
    assert not is_dag([(0, 1), (1, 2), (2, 0)], 3)
    assert is_dag([], 2)


def test_json_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    dbn = WeightedDbn(rng.standard_normal((3, 3)), rng.standard_normal((6, 3)))
    save_json(dbn, tmp_path / "m.json")
    back = load_json(tmp_path / "m.json")
    np.testing.assert_array_equal(back.W, dbn.W)
    np.testing.assert_array_equal(back.A, dbn.A)


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    dbn = WeightedDbn(rng.standard_normal((3, 3)), rng.standard_normal((9, 3)))
    w_path, _ = save_csv(dbn, tmp_path, prefix="x_")
    assert w_path.read_text().splitlines()[0] == "j0,j1,j2"
    back = load_csv(tmp_path, prefix="x_")
    np.testing.assert_array_equal(back.W, dbn.W)
    np.testing.assert_array_equal(back.A, dbn.A)
    assert back.p == 3


def test_binary_matrices():
    g = BinaryDbn(3, 1, frozenset({(0, 2)}), frozenset({(1, 2, 0)}))
    assert g.W_matrix()[0, 2] == 1 and g.W_matrix().sum() == 1
    assert g.A_matrix()[2, 0] == 1 and g.A_matrix().sum() == 1
