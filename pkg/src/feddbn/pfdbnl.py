"""Personalized federated structure learning (PFDBNL).

Every client keeps its own model (W_k, A_k) tied to an auxiliary copy
(W~_k, A~_k) by a proximal term; the auxiliary copies are driven to a shared
global (W, A) by ADMM. Acyclicity is enforced on each personal W_k through a
single multiplier ``alpha`` shared by all clients.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from feddbn.datagen import ClientDataset
from feddbn.dbn import WeightedDbn
from feddbn.errors import NumericError
from feddbn.fdbnl import _check_clients
from feddbn.numkit import BoundMinimizeConfig, acyclicity
from feddbn.objective import least_squares, penalized_minimize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PfdbnlConfig:
    lambda_w: float = 0.1
    lambda_a: float = 0.1
    mu: float = 0.1
    # j: clients sampled per round; None means every client
    participants_per_round: int | None = None
    rho1_0: float = 1.0
    rho2_0: float = 1.0
    phi1: float = 1.6
    phi2: float = 1.1
    max_rounds: int = 200
    h_tol: float = 1e-8
    primal_tol: float = 1e-6
    rho_max: float = 1e16
    workers: int = 1
    solver: BoundMinimizeConfig = field(default_factory=BoundMinimizeConfig)

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be > 0")
        if self.participants_per_round is not None and self.participants_per_round < 1:
            raise ValueError("participants_per_round must be >= 1")
        if not (self.phi1 > 1 and self.phi2 > 1):
            raise ValueError("phi1 and phi2 must be > 1")
        if not (self.rho1_0 > 0 and self.rho2_0 > 0 and self.rho_max > 0):
            raise ValueError("penalties must be positive")
        if self.lambda_w < 0 or self.lambda_a < 0:
            raise ValueError("l1 weights must be nonnegative")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")


def default_lambda(d: int) -> float:
    """Shared l1 weight that works well for the synthetic settings: 0.1 up to d = 10, else 0.01."""
    return 0.1 if d <= 10 else 0.01


@dataclass
class PfdbnlState:
    W: np.ndarray
    A: np.ndarray
    W_k: list[np.ndarray]
    A_k: list[np.ndarray]
    W_aux: list[np.ndarray]
    A_aux: list[np.ndarray]
    beta: list[np.ndarray]
    gamma: list[np.ndarray]
    alpha: float
    rho1: float
    rho2: float
    round: int = 0

    @classmethod
    def initial(cls, d: int, p: int, K: int, cfg: PfdbnlConfig) -> "PfdbnlState":
        zw = lambda: np.zeros((d, d))  # noqa: E731
        za = lambda: np.zeros((p * d, d))  # noqa: E731
        return cls(
            W=zw(), A=za(),
            W_k=[zw() for _ in range(K)], A_k=[za() for _ in range(K)],
            W_aux=[zw() for _ in range(K)], A_aux=[za() for _ in range(K)],
            beta=[zw() for _ in range(K)], gamma=[za() for _ in range(K)],
            alpha=0.0, rho1=cfg.rho1_0, rho2=cfg.rho2_0,
        )


@dataclass(frozen=True)
class PfdbnlTraceRow:
    round: int
    h: float
    max_primal_W: float
    max_primal_A: float
    objective: float
    rho1: float
    rho2: float
    participants: str
    mean_h_personal: float


@dataclass
class PfdbnlResult:
    personal: list[WeightedDbn]
    global_dbn: WeightedDbn
    trace: list[PfdbnlTraceRow]
    state: PfdbnlState
    converged: bool


# ---------------------------------------------------------------- the updates


def personal_update(
    data: ClientDataset,
    W_aux: np.ndarray,
    A_aux: np.ndarray,
    alpha: float,
    rho1: float,
    mu: float,
    cfg: PfdbnlConfig,
    W0: np.ndarray | None = None,
    A0: np.ndarray | None = None,
    client_id: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Proximal, acyclicity-augmented local fit of one client's personal model."""
    if not (rho1 > 0 and mu > 0):
        raise ValueError("rho1 and mu must be positive")
    gram = data.gram

    def smooth(W, A):
        loss, gW, gA = least_squares(gram, W, A)
        ac = acyclicity(W)
        dW, dA = W - W_aux, A - A_aux
        val = (loss + mu * float(np.sum(dW * dW)) + mu * float(np.sum(dA * dA))
               + alpha * ac.value + 0.5 * rho1 * ac.value**2)
        return val, gW + 2 * mu * dW + (alpha + rho1 * ac.value) * ac.gradient, gA + 2 * mu * dA

    W0 = np.zeros_like(W_aux) if W0 is None else W0
    A0 = np.zeros_like(A_aux) if A0 is None else A0
    label = "personal" if client_id is None else f"personal[{client_id}]"
    W, A, _ = penalized_minimize(smooth, W0, A0, cfg.lambda_w, cfg.lambda_a, cfg.solver, label=label)
    return W, A


def aux_update(W_k, A_k, W_t, A_t, beta_k, gamma_k, rho2: float, mu: float) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form auxiliary step ``(2 mu W_k + rho2 W - beta_k) / (2 mu + rho2)``."""
    denom = 2.0 * mu + rho2
    if not denom > 0:
        raise ValueError("2 mu + rho2 must be positive")
    return (2 * mu * W_k + rho2 * W_t - beta_k) / denom, (2 * mu * A_k + rho2 * A_t - gamma_k) / denom


def global_aggregate(W_aux: Sequence[np.ndarray], A_aux: Sequence[np.ndarray],
                     beta: Sequence[np.ndarray], gamma: Sequence[np.ndarray],
                     rho2: float) -> tuple[np.ndarray, np.ndarray]:
    """Consensus average ``mean(W~_k + beta_k / rho2)`` (same for A)."""
    K = len(W_aux)
    if K == 0:
        raise ValueError("global_aggregate needs at least one client")
    W = sum(w + b / rho2 for w, b in zip(W_aux, beta)) / K
    A = sum(a + g / rho2 for a, g in zip(A_aux, gamma)) / K
    return W, A


def dual_update_personalized(
    state: PfdbnlState, cfg: PfdbnlConfig, selected: Sequence[int] | None = None,
    h_personal: Sequence[float] | None = None,
) -> PfdbnlState:
    """Dual ascent for the selected clients, mean-h step on ``alpha``, then grow the penalties."""
    K = len(state.W_k)
    selected = range(K) if selected is None else selected
    if h_personal is None:
        h_personal = [acyclicity(w).value for w in state.W_k]
    rho1, rho2 = state.rho1, state.rho2
    beta, gamma = list(state.beta), list(state.gamma)
    for k in selected:
        beta[k] = beta[k] + rho2 * (state.W_aux[k] - state.W)
        gamma[k] = gamma[k] + rho2 * (state.A_aux[k] - state.A)
    return PfdbnlState(
        W=state.W, A=state.A, W_k=state.W_k, A_k=state.A_k,
        W_aux=state.W_aux, A_aux=state.A_aux, beta=beta, gamma=gamma,
        alpha=state.alpha + rho1 * float(np.mean(h_personal)),
        rho1=min(cfg.phi1 * rho1, cfg.rho_max),
        rho2=min(cfg.phi2 * rho2, cfg.rho_max),
        round=state.round,
    )


# ---------------------------------------------------------------- the driver


def personalized_objective(datasets, state: PfdbnlState, cfg: PfdbnlConfig) -> float:
    total = 0.0
    for ds, W, A in zip(datasets, state.W_k, state.A_k):
        total += least_squares(ds.gram, W, A)[0]
        total += cfg.mu * (float(np.sum((W - state.W) ** 2)) + float(np.sum((A - state.A) ** 2)))
        total += cfg.lambda_w * float(np.abs(W).sum()) + cfg.lambda_a * float(np.abs(A).sum())
    return total


def sample_participants(rng: np.random.Generator, K: int, j: int) -> list[int]:
    """``j`` distinct client ids in increasing order; all clients (no draw) when ``j == K``."""
    if j == K:
        return list(range(K))
    return sorted(int(k) for k in rng.choice(K, size=j, replace=False))


def run_pfdbnl(datasets: Sequence[ClientDataset], cfg: PfdbnlConfig | None = None, seed: int = 0) -> PfdbnlResult:
    """Run personalized ADMM; ``seed`` drives only the participant sampler."""
    cfg = cfg or PfdbnlConfig()
    d, p = _check_clients(datasets)
    K = len(datasets)
    j = K if cfg.participants_per_round is None else cfg.participants_per_round
    if j > K:
        raise ValueError(f"participants_per_round = {j} exceeds the number of clients K = {K}")
    rng = np.random.default_rng(seed)
    state = PfdbnlState.initial(d, p, K, cfg)
    h_personal = [0.0] * K
    trace: list[PfdbnlTraceRow] = []
    converged = False
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for t in range(1, cfg.max_rounds + 1):
            chosen = sample_participants(rng, K, j)
            W_t, A_t = state.W, state.A
            alpha, rho1, rho2 = state.alpha, state.rho1, state.rho2

            def client_step(k):
                Wk, Ak = personal_update(datasets[k], state.W_aux[k], state.A_aux[k], alpha, rho1, cfg.mu,
                                         cfg, W0=state.W_k[k], A0=state.A_k[k], client_id=k)
                Wa, Aa = aux_update(Wk, Ak, W_t, A_t, state.beta[k], state.gamma[k], rho2, cfg.mu)
                return Wk, Ak, Wa, Aa

            try:
                mapper = pool.map if pool is not None else map
                results = list(mapper(client_step, chosen))
            except NumericError as exc:
                raise NumericError(f"round {t}: {exc}") from exc
            for k, (Wk, Ak, Wa, Aa) in zip(chosen, results):
                state.W_k[k], state.A_k[k], state.W_aux[k], state.A_aux[k] = Wk, Ak, Wa, Aa
                h_personal[k] = acyclicity(Wk).value
            state.W, state.A = global_aggregate(state.W_aux, state.A_aux, state.beta, state.gamma, rho2)
            state.round = t

            mean_h = float(np.mean(h_personal))
            r_w = max(float(np.linalg.norm(w - state.W)) for w in state.W_aux)
            r_a = max(float(np.linalg.norm(a - state.A)) for a in state.A_aux)
            trace.append(PfdbnlTraceRow(
                t, acyclicity(state.W).value, r_w, r_a, personalized_objective(datasets, state, cfg),
                rho1, rho2, ";".join(map(str, chosen)), mean_h,
            ))
            state = dual_update_personalized(state, cfg, chosen, h_personal)
            if mean_h <= cfg.h_tol and r_w <= cfg.primal_tol and r_a <= cfg.primal_tol:
                converged = True
                break
    finally:
        if pool is not None:
            pool.shutdown()
    if not converged:
        logger.info("pfdbnl: stopped after %d rounds (mean h=%.3g)", state.round, trace[-1].mean_h_personal)
    personal = [WeightedDbn(W.copy(), A.copy()).without_self_loops() for W, A in zip(state.W_k, state.A_k)]
    return PfdbnlResult(personal, WeightedDbn(state.W.copy(), state.A.copy()).without_self_loops(),
                        trace, state, converged)
