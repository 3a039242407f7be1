import numpy as np
import pytest

from feddbn.baselines import (
    DynotearsConfig,
    alldata_baseline,
    average_fits,
    ave_baseline,
    best_baseline,
    dynotears_fit,
    per_client_fits,
)
from feddbn.datagen import ClientDataset, GenConfig, homogeneous_clients
from feddbn.dbn import WeightedDbn, is_dag, threshold
from feddbn.metrics import shd
from feddbn.numkit import acyclicity


def w_only(W):
    return WeightedDbn(np.asarray(W, dtype=float), np.zeros((len(W), len(W))))


@pytest.fixture(scope="module")
def fig_instance():
    return homogeneous_clients(GenConfig(d=5, p=3, seed=0), 500, 1)


def test_zero_data():
    fit = dynotears_fit(np.zeros((10, 3)), np.zeros((10, 6)))
    assert np.all(fit.W == 0) and np.all(fit.A == 0)


def test_huge_lambda(fig_instance):
    _, data = fig_instance
    fit = dynotears_fit(data[0].X_t, data[0].X_lag, DynotearsConfig(lambda_w=1e6, lambda_a=1e6))
    assert np.all(fit.W == 0) and np.all(fit.A == 0)


def test_fit_acyclic_and_close_to_truth(fig_instance):
    truth, data = fig_instance
    cfg = DynotearsConfig()
    fit = dynotears_fit(data[0].X_t, data[0].X_lag, cfg)
    assert acyclicity(fit.W).value <= cfg.h_tol
    g = threshold(fit, 0.3, 0.3)
    assert is_dag(g.W_edges, 5)
    assert shd(g, threshold(truth, 0.0, 0.0))[0] <= 1


def test_row_permutation_invariance(fig_instance):
    _, data = fig_instance
    ds = data[0]
    perm = np.random.default_rng(0).permutation(ds.n_k)
    a = dynotears_fit(ds.X_t, ds.X_lag)
    b = dynotears_fit(ds.X_t[perm], ds.X_lag[perm])
    np.testing.assert_allclose(a.W, b.W, atol=1e-6)
    assert threshold(a, 0.3, 0.3) == threshold(b, 0.3, 0.3)


def test_alldata_single_client_equals_fit(fig_instance):
    _, data = fig_instance
    a = alldata_baseline(data)
    b = dynotears_fit(data[0].X_t, data[0].X_lag)
    np.testing.assert_array_equal(a.W, b.W)


def test_alldata_order_invariant():
    _, data = homogeneous_clients(GenConfig(d=4, p=1, seed=2), 120, 3)
    a = alldata_baseline(data)
    b = alldata_baseline(data[::-1])
    # Gram matrices agree to round-off only; the stopping rule absorbs the rest
    np.testing.assert_allclose(a.W, b.W, atol=1e-3)
    assert threshold(a, 0.3, 0.3) == threshold(b, 0.3, 0.3)


def test_alldata_zero_data():
    data = [ClientDataset(np.zeros((4, 2)), np.zeros((4, 2)))] * 2
    fit = alldata_baseline(data)
    assert np.all(fit.W == 0) and np.all(fit.A == 0)


def test_per_client_fits_count():
    _, data = homogeneous_clients(GenConfig(d=3, p=1, seed=1), 60, 3)
    assert len(per_client_fits(data)) == 3


def test_ave_identical():
    fit = w_only([[0, 0.4, 0], [0, 0, 0.35], [0, 0, 0]])
    g, avg = ave_baseline([fit] * 3, 0.3)
    np.testing.assert_allclose(avg.W, fit.W)
    assert g.W_edges == {(0, 1), (1, 2)}


def test_ave_cancellation():
    a = w_only([[0, 0.4], [0, 0]])
    b = w_only([[0, -0.4], [0, 0]])
    g, avg = ave_baseline([a, b], 0.3)
    assert avg.W[0, 1] == 0.0 and g.W_edges == frozenset()


def test_ave_dilution():
    one = w_only([[0, 0.9], [0, 0]])
    zero = w_only([[0, 0.0], [0, 0]])
    g, avg = ave_baseline([one, zero, zero, zero], 0.3)
    assert avg.W[0, 1] == pytest.approx(0.225)
    assert g.W_edges == frozenset()


def test_ave_keeps_cycles():
    a = w_only([[0, 0.9], [0, 0]])
    b = w_only([[0, 0], [0.9, 0]])
    g, _ = ave_baseline([a, b], 0.3)
    assert g.W_edges == {(0, 1), (1, 0)}


def test_ave_errors():
    with pytest.raises(ValueError):
        ave_baseline([])
    with pytest.raises(ValueError):
        average_fits([WeightedDbn.zeros(2, 1), WeightedDbn.zeros(3, 1)])


def test_best_picks_perfect():
    truth_w = w_only([[0, 0.5, 0], [0, 0, 0.5], [0, 0, 0]])
    truth = threshold(truth_w, 0.0, 0.0)
    rng = np.random.default_rng(0)
    noisy = [w_only(rng.uniform(-1, 1, (3, 3))) for _ in range(3)]
    g, idx = best_baseline(noisy[:2] + [truth_w] + noisy[2:], truth)
    assert idx == 2 and g == threshold(truth_w, 0.3, 0.3)


def test_best_tie_lowest_index():
    fit = w_only([[0, 0.5], [0, 0]])
    truth = threshold(w_only([[0, 0], [0.5, 0]]), 0, 0)
    _, idx = best_baseline([fit, fit, fit], truth)
    assert idx == 0


def test_best_lower_shd_wins():
    truth = threshold(w_only(np.zeros((4, 4))), 0, 0)
    three = np.zeros((4, 4))
    three[0, 1] = three[0, 2] = three[0, 3] = 0.5
    five = three.copy()
    five[1, 2] = five[1, 3] = 0.5
    g, idx = best_baseline([w_only(five), w_only(three)], truth)
    assert idx == 1 and shd(g, truth) == (3, 0)


def test_best_empty():
    with pytest.raises(ValueError):
        best_baseline([], threshold(WeightedDbn.zeros(2, 1), 0, 0))


def test_config_validation():
    with pytest.raises(ValueError):
        DynotearsConfig(rho_mult=1.0)
    with pytest.raises(ValueError):
        DynotearsConfig(progress_ratio=1.0)
