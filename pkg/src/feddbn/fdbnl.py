"""Consensus-ADMM federated structure learning for homogeneous clients (FDBNL).

Each round: clients solve their local quadratic subproblem in closed form,
the server solves the penalized, acyclicity-constrained global subproblem,
then duals and penalties are updated. Only (B_k, D_k) and (W, A) travel
between clients and server; raw data never leaves a client.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from feddbn.datagen import ClientDataset
from feddbn.dbn import WeightedDbn
from feddbn.errors import DimensionError, NumericError
from feddbn.numkit import BoundMinimizeConfig, acyclicity, spd_solve
from feddbn.objective import least_squares, penalized_minimize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FdbnlConfig:
    lambda_w: float = 0.5
    lambda_a: float = 0.5
    rho1_0: float = 1.0
    rho2_0: float = 1.0
    phi1: float = 1.6
    phi2: float = 1.1
    max_rounds: int = 200
    h_tol: float = 1e-8
    primal_tol: float = 1e-6
    rho_max: float = 1e16
    # solve the A block of the global step by soft-thresholding instead of jointly
    a_closed_form: bool = False
    workers: int = 1
    solver: BoundMinimizeConfig = field(default_factory=BoundMinimizeConfig)

    def __post_init__(self):
        if not (self.phi1 > 1 and self.phi2 > 1):
            raise ValueError("phi1 and phi2 must be > 1")
        if not (self.rho1_0 > 0 and self.rho2_0 > 0 and self.rho_max > 0):
            raise ValueError("penalties must be positive")
        if self.lambda_w < 0 or self.lambda_a < 0:
            raise ValueError("l1 weights must be nonnegative")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")


@dataclass
class FdbnlState:
    W: np.ndarray
    A: np.ndarray
    B: list[np.ndarray]
    D: list[np.ndarray]
    beta: list[np.ndarray]
    gamma: list[np.ndarray]
    alpha: float
    rho1: float
    rho2: float
    round: int = 0

    @classmethod
    def initial(cls, d: int, p: int, K: int, cfg: FdbnlConfig) -> "FdbnlState":
        zw = lambda: np.zeros((d, d))  # noqa: E731
        za = lambda: np.zeros((p * d, d))  # noqa: E731
        return cls(
            W=zw(), A=za(),
            B=[zw() for _ in range(K)], D=[za() for _ in range(K)],
            beta=[zw() for _ in range(K)], gamma=[za() for _ in range(K)],
            alpha=0.0, rho1=cfg.rho1_0, rho2=cfg.rho2_0,
        )


@dataclass(frozen=True)
class TraceRow:
    round: int
    h: float
    max_primal_W: float
    max_primal_A: float
    objective: float
    rho1: float
    rho2: float


@dataclass
class FdbnlResult:
    dbn: WeightedDbn
    trace: list[TraceRow]
    state: FdbnlState
    converged: bool

    @property
    def h(self) -> float:
        return self.trace[-1].h

    @property
    def max_primal(self) -> float:
        return max(self.trace[-1].max_primal_W, self.trace[-1].max_primal_A)


# ---------------------------------------------------------------- the updates


def local_update(
    data: ClientDataset,
    W_t: np.ndarray,
    A_t: np.ndarray,
    beta_k: np.ndarray,
    gamma_k: np.ndarray,
    rho2: float,
    client_id: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form minimizer of the client's augmented-Lagrangian term.

    With ``P = S + rho2 I``, ``Q = N + rho2 I``, ``b1 = S - beta + rho2 W`` and
    ``b2 = M^T - gamma + rho2 A`` the stationarity conditions are
    ``P B + M D = b1`` and ``M^T B + Q D = b2``; both Schur complements are SPD.
    """
    if not rho2 > 0:
        raise ValueError("rho2 must be positive")
    d = data.d
    g = data.gram
    S, M, N = g[:d, :d], g[:d, d:], g[d:, d:]
    P = S + rho2 * np.eye(d)
    Q = N + rho2 * np.eye(N.shape[0])
    b1 = S - beta_k + rho2 * W_t
    b2 = M.T - gamma_k + rho2 * A_t
    try:
        q_sol = spd_solve(Q, np.hstack([M.T, b2]))
        Qi_Mt, Qi_b2 = q_sol[:, :d], q_sol[:, d:]
        schur_p = P - M @ Qi_Mt
        B = spd_solve(0.5 * (schur_p + schur_p.T), b1 - M @ Qi_b2)

        p_sol = spd_solve(P, np.hstack([M, b1]))
        Pi_M, Pi_b1 = p_sol[:, : M.shape[1]], p_sol[:, M.shape[1]:]
        schur_q = Q - M.T @ Pi_M
        D = spd_solve(0.5 * (schur_q + schur_q.T), b2 - M.T @ Pi_b1)
    except NumericError as exc:
        who = "" if client_id is None else f"client {client_id}: "
        raise NumericError(f"{who}{exc}") from exc
    return B, D


def soft_threshold(X: np.ndarray, level: float) -> np.ndarray:
    return np.sign(X) * np.maximum(np.abs(X) - level, 0.0)


def global_update(
    B: Sequence[np.ndarray],
    D: Sequence[np.ndarray],
    beta: Sequence[np.ndarray],
    gamma: Sequence[np.ndarray],
    alpha: float,
    rho1: float,
    rho2: float,
    cfg: FdbnlConfig,
    W0: np.ndarray | None = None,
    A0: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Server step: penalized, acyclicity-augmented consensus over all clients.

    The consensus terms collapse to ``K rho2 / 2 ||W - C||^2`` with
    ``C = mean(B_k + beta_k / rho2)`` (same for A). The whole objective is
    divided by ``K rho2`` before the quasi-Newton solve, which leaves the
    minimizer unchanged and keeps the stopping tolerance in units of W.
    """
    K = len(B)
    if K == 0:
        raise ValueError("global_update needs at least one client")
    C = sum(b + bt / rho2 for b, bt in zip(B, beta)) / K
    E = sum(dk + g / rho2 for dk, g in zip(D, gamma)) / K
    scale = 1.0 / (K * rho2)
    W0 = np.zeros_like(C) if W0 is None else W0
    A0 = np.zeros_like(E) if A0 is None else A0

    if cfg.a_closed_form:
        def smooth(W, A):
            ac = acyclicity(W)
            coef = scale * (alpha + rho1 * ac.value)
            val = scale * (alpha * ac.value + 0.5 * rho1 * ac.value**2) + 0.5 * float(np.sum((W - C) ** 2))
            return val, (W - C) + coef * ac.gradient, np.zeros_like(A)

        W, _, _ = penalized_minimize(smooth, W0, np.zeros_like(E), scale * cfg.lambda_w, 0.0,
                                     cfg.solver, label="global W")
        return W, soft_threshold(E, scale * cfg.lambda_a)

    def smooth(W, A):
        ac = acyclicity(W)
        coef = scale * (alpha + rho1 * ac.value)
        val = (scale * (alpha * ac.value + 0.5 * rho1 * ac.value**2)
               + 0.5 * float(np.sum((W - C) ** 2)) + 0.5 * float(np.sum((A - E) ** 2)))
        return val, (W - C) + coef * ac.gradient, A - E

    W, A, _ = penalized_minimize(smooth, W0, A0, scale * cfg.lambda_w, scale * cfg.lambda_a,
                                 cfg.solver, label="global")
    return W, A


def dual_update(state: FdbnlState, cfg: FdbnlConfig, h: float | None = None) -> FdbnlState:
    """Dual ascent on the consensus and acyclicity multipliers, then grow the penalties."""
    h = acyclicity(state.W).value if h is None else h
    rho1, rho2 = state.rho1, state.rho2
    beta = [bt + rho2 * (b - state.W) for bt, b in zip(state.beta, state.B)]
    gamma = [g + rho2 * (dk - state.A) for g, dk in zip(state.gamma, state.D)]
    return FdbnlState(
        W=state.W, A=state.A, B=state.B, D=state.D, beta=beta, gamma=gamma,
        alpha=state.alpha + rho1 * h,
        rho1=min(cfg.phi1 * rho1, cfg.rho_max),
        rho2=min(cfg.phi2 * rho2, cfg.rho_max),
        round=state.round,
    )


# ---------------------------------------------------------------- the driver


def _check_clients(datasets: Sequence[ClientDataset]) -> tuple[int, int]:
    if not datasets:
        raise ValueError("need at least one client")
    d, p = datasets[0].d, datasets[0].p
    for k, ds in enumerate(datasets):
        if (ds.d, ds.p) != (d, p):
            raise DimensionError(f"client {k} has (d, p) = {(ds.d, ds.p)}, expected {(d, p)}")
    return d, p


def federated_objective(datasets, W, A, lambda_w, lambda_a) -> float:
    loss = sum(least_squares(ds.gram, W, A)[0] for ds in datasets)
    return loss + lambda_w * float(np.abs(W).sum()) + lambda_a * float(np.abs(A).sum())


def run_fdbnl(datasets: Sequence[ClientDataset], cfg: FdbnlConfig | None = None, seed: int = 0) -> FdbnlResult:
    """Run federated ADMM until acyclic consensus or ``cfg.max_rounds``.

    ``seed`` is accepted for interface symmetry with the personalized driver;
    every step here is deterministic.
    """
    cfg = cfg or FdbnlConfig()
    d, p = _check_clients(datasets)
    K = len(datasets)
    state = FdbnlState.initial(d, p, K, cfg)
    trace: list[TraceRow] = []
    converged = False
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for t in range(1, cfg.max_rounds + 1):
            W_t, A_t, rho2 = state.W, state.A, state.rho2

            def client_step(k):
                return local_update(datasets[k], W_t, A_t, state.beta[k], state.gamma[k], rho2, k)

            try:
                mapper = pool.map if pool is not None else map
                local = list(mapper(client_step, range(K)))
                state.B = [b for b, _ in local]
                state.D = [dk for _, dk in local]
                W, A = global_update(state.B, state.D, state.beta, state.gamma, state.alpha,
                                     state.rho1, state.rho2, cfg, W0=state.W, A0=state.A)
            except NumericError as exc:
                raise NumericError(f"round {t}: {exc}") from exc
            state.W, state.A, state.round = W, A, t
            h = acyclicity(W).value
            r_w = max(float(np.linalg.norm(b - W)) for b in state.B)
            r_a = max(float(np.linalg.norm(dk - A)) for dk in state.D)
            trace.append(TraceRow(t, h, r_w, r_a,
                                  federated_objective(datasets, W, A, cfg.lambda_w, cfg.lambda_a),
                                  state.rho1, state.rho2))
            state = dual_update(state, cfg, h)
            if h <= cfg.h_tol and r_w <= cfg.primal_tol and r_a <= cfg.primal_tol:
                converged = True
                break
    finally:
        if pool is not None:
            pool.shutdown()
    if not converged:
        logger.info("fdbnl: stopped after %d rounds (h=%.3g, primal=%.3g)",
                    state.round, trace[-1].h, max(trace[-1].max_primal_W, trace[-1].max_primal_A))
    W = state.W.copy()
    np.fill_diagonal(W, 0.0)
    return FdbnlResult(WeightedDbn(W, state.A.copy()), trace, state, converged)


# ---------------------------------------------------------------- trace export


def write_trace(trace: Sequence, path: str | Path) -> None:
    """Write per-round trace rows (dataclass instances) as CSV, one column per field."""
    rows = list(trace)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if not rows:
            writer.writerow([f.name for f in fields(TraceRow)])
            return
        names = [f.name for f in fields(rows[0])]
        writer.writerow(names)
        for row in rows:
            writer.writerow([_fmt(getattr(row, n)) for n in names])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v
