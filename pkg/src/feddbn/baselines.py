"""Centralized DYNOTEARS and the Ave / Best / Alldata comparison strategies."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from feddbn.datagen import ClientDataset
from feddbn.dbn import BinaryDbn, WeightedDbn, threshold
from feddbn.numkit import BoundMinimizeConfig, acyclicity
from feddbn.objective import least_squares, penalized_minimize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DynotearsConfig:
    lambda_w: float = 0.05
    lambda_a: float = 0.05
    h_tol: float = 1e-8
    rho_init: float = 1.0
    rho_mult: float = 10.0
    rho_max: float = 1e16
    max_outer: int = 100
    progress_ratio: float = 0.25
    solver: BoundMinimizeConfig = field(default_factory=BoundMinimizeConfig)

    def __post_init__(self):
        if not self.rho_mult > 1:
            raise ValueError("rho_mult must be > 1")
        if not 0 < self.progress_ratio < 1:
            raise ValueError("progress_ratio must lie in (0, 1)")
        if self.lambda_w < 0 or self.lambda_a < 0:
            raise ValueError("l1 weights must be nonnegative")


def dynotears_fit(X_t: np.ndarray, X_lag: np.ndarray, cfg: DynotearsConfig | None = None) -> WeightedDbn:
    """Fit ``min l(W, A) + l1`` subject to ``h(W) = 0`` by the augmented Lagrangian.

    The inner problem is re-solved with a larger ``rho`` until ``h`` drops
    below ``progress_ratio`` times its previous value; then ``alpha`` takes a
    dual ascent step.
    """
    cfg = cfg or DynotearsConfig()
    data = ClientDataset(X_t, X_lag)
    return _dynotears_gram(data.gram, data.d, data.p, cfg)


def _dynotears_gram(gram: np.ndarray, d: int, p: int, cfg: DynotearsConfig) -> WeightedDbn:
    W, A = np.zeros((d, d)), np.zeros((p * d, d))
    rho, alpha, h = cfg.rho_init, 0.0, np.inf

    for _ in range(cfg.max_outer):
        while True:
            def smooth(Wc, Ac, rho=rho, alpha=alpha):
                loss, gW, gA = least_squares(gram, Wc, Ac)
                ac = acyclicity(Wc)
                coef = alpha + rho * ac.value
                return (loss + alpha * ac.value + 0.5 * rho * ac.value**2,
                        gW + coef * ac.gradient, gA)

            W_new, A_new, _ = penalized_minimize(
                smooth, W, A, cfg.lambda_w, cfg.lambda_a, cfg.solver, label="dynotears"
            )
            h_new = acyclicity(W_new).value
            if h_new > cfg.progress_ratio * h and rho < cfg.rho_max:
                rho = min(rho * cfg.rho_mult, cfg.rho_max)
            else:
                break
        W, A, h = W_new, A_new, h_new
        alpha += rho * h
        if h <= cfg.h_tol or rho >= cfg.rho_max:
            break
    if h > cfg.h_tol:
        logger.warning("dynotears: finished with h(W) = %.3g > h_tol", h)
    return WeightedDbn(W, A).without_self_loops()


def per_client_fits(datasets: Sequence[ClientDataset], cfg: DynotearsConfig | None = None) -> list[WeightedDbn]:
    """Independent DYNOTEARS fit on every client's own data."""
    cfg = cfg or DynotearsConfig()
    return [_dynotears_gram(ds.gram, ds.d, ds.p, cfg) for ds in datasets]


def average_fits(fits: Sequence[WeightedDbn]) -> WeightedDbn:
    if not fits:
        raise ValueError("average of an empty list of fits")
    _check_same_shape(fits)
    return WeightedDbn(np.mean([f.W for f in fits], axis=0), np.mean([f.A for f in fits], axis=0))


def ave_baseline(fits: Sequence[WeightedDbn], tau_w: float = 0.3, tau_a: float | None = None) -> tuple[BinaryDbn, WeightedDbn]:
    """Average the weighted fits entrywise, then threshold. No cycle removal."""
    tau_a = tau_w if tau_a is None else tau_a
    avg = average_fits(fits)
    return threshold(avg, tau_w, tau_a), avg


def best_baseline(
    fits: Sequence[WeightedDbn], truth: BinaryDbn, tau_w: float = 0.3, tau_a: float | None = None
) -> tuple[BinaryDbn, int]:
    """Thresholded client fit with the lowest SHD(W) + SHD(A); ties go to the lowest index."""
    from feddbn.metrics import shd

    if not fits:
        raise ValueError("best baseline needs at least one fit")
    tau_a = tau_w if tau_a is None else tau_a
    best_idx, best_graph, best_score = -1, None, None
    for k, fit in enumerate(fits):
        graph = threshold(fit, tau_w, tau_a)
        s_w, s_a = shd(graph, truth)
        if best_score is None or s_w + s_a < best_score:
            best_idx, best_graph, best_score = k, graph, s_w + s_a
    return best_graph, best_idx


def alldata_baseline(datasets: Sequence[ClientDataset], cfg: DynotearsConfig | None = None) -> WeightedDbn:
    """DYNOTEARS on the concatenation of every client's rows."""
    if not datasets:
        raise ValueError("alldata baseline needs at least one client")
    X_t = np.vstack([ds.X_t for ds in datasets])
    X_lag = np.vstack([ds.X_lag for ds in datasets])
    return dynotears_fit(X_t, X_lag, cfg)


def _check_same_shape(fits: Sequence[WeightedDbn]) -> None:
    d, p = fits[0].d, fits[0].p
    for f in fits[1:]:
        if (f.d, f.p) != (d, p):
            raise ValueError(f"fits disagree on (d, p): {(f.d, f.p)} vs {(d, p)}")
