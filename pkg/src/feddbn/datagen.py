"""Synthetic SVAR ground truth, simulation, lagged designs and client splits."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from feddbn.dbn import WeightedDbn
from feddbn.errors import DimensionError, IngestionError, NumericError

WEIGHT_LOW = 0.3
WEIGHT_HIGH = 0.5


@dataclass(frozen=True)
class GenConfig:
    """Ground-truth and simulation settings.

    ``lag_decay`` selects how the inter-slice weights shrink with the lag:
    ``"per_lag"`` scales lag ``i`` by ``1/eta**(i-1)``; ``"uniform"`` scales
    every lag by ``1/eta**(p-1)``.
    """

    d: int
    p: int = 1
    intra_mean_degree: float = 4.0
    inter_mean_out_degree: float = 1.0
    eta: float = 1.5
    noise_std: float = 1.0
    seed: int = 0
    lag_decay: str = "per_lag"
    burn_in: int = 0

    def __post_init__(self):
        if self.d < 2:
            raise ValueError(f"d must be >= 2, got {self.d}")
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if self.eta < 1:
            raise ValueError(f"eta must be >= 1, got {self.eta}")
        if not self.noise_std > 0:
            raise ValueError(f"noise_std must be > 0, got {self.noise_std}")
        if self.intra_mean_degree < 0 or self.inter_mean_out_degree < 0:
            raise ValueError("mean degrees must be nonnegative")
        if self.lag_decay not in ("per_lag", "uniform"):
            raise ValueError(f"unknown lag_decay {self.lag_decay!r}")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")


def connectivity_degree(d: int, level: str) -> float:
    """Expected node degree for the heterogeneous low/high connectivity presets."""
    if level == "low":
        return d // 2 - d / 5
    if level == "high":
        return d - d / 5
    raise ValueError(f"connectivity level must be 'low' or 'high', got {level!r}")


def _two_sided_uniform(rng: np.random.Generator, shape, scale: float = 1.0) -> np.ndarray:
    mag = rng.uniform(WEIGHT_LOW * scale, WEIGHT_HIGH * scale, size=shape)
    sign = np.where(rng.random(size=shape) < 0.5, -1.0, 1.0)
    return sign * mag


def _rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def gen_intra_dag(cfg: GenConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """Weighted ER DAG: Bernoulli(pr/d) on lower-triangular pairs, then node-permuted."""
    rng = _rng(cfg.seed if rng is None else rng)
    d = cfg.d
    prob = min(cfg.intra_mean_degree / d, 1.0)
    mask = np.tril(rng.random((d, d)) < prob, k=-1)
    perm = rng.permutation(d)
    mask = mask[np.ix_(perm, perm)]
    W = np.zeros((d, d))
    W[mask] = _two_sided_uniform(rng, int(mask.sum()))
    return W


def gen_inter_graphs(cfg: GenConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """Stacked ``(p*d, d)`` lag matrices, each an ER bipartite graph with decayed weights."""
    rng = _rng(cfg.seed if rng is None else rng)
    d, p = cfg.d, cfg.p
    prob = min(cfg.inter_mean_out_degree / d, 1.0)
    blocks = []
    for lag in range(1, p + 1):
        exponent = lag - 1 if cfg.lag_decay == "per_lag" else p - 1
        scale = 1.0 / cfg.eta**exponent
        mask = rng.random((d, d)) < prob
        block = np.zeros((d, d))
        block[mask] = _two_sided_uniform(rng, int(mask.sum()), scale)
        blocks.append(block)
    return np.vstack(blocks)


def gen_truth(cfg: GenConfig, rng: np.random.Generator | None = None) -> WeightedDbn:
    rng = _rng(cfg.seed if rng is None else rng)
    W = gen_intra_dag(cfg, rng)
    A = gen_inter_graphs(cfg, rng)
    return WeightedDbn(W, A)


def simulate_svar(
    truth: WeightedDbn,
    T: int,
    M: int = 1,
    noise_std: float = 1.0,
    seed: int | np.random.Generator = 0,
    burn_in: int = 0,
    return_noise: bool = False,
):
    """Simulate ``M`` realizations ``x_0..x_T`` of the SVAR defined by ``truth``.

    The first ``p`` steps are pure noise; afterwards
    ``x_t = (I - W)^{-T} (sum_i A_i^T x_{t-i} + u_t)``. With ``burn_in > 0``
    that many extra steps are simulated and discarded first.

    Returns an array of shape ``(M, T+1, d)`` (and the noise array of the same
    shape when ``return_noise`` is set; entries for the first ``p`` steps hold
    the initial draws).
    """
    rng = _rng(seed)
    d, p = truth.d, truth.p
    if T < 0 or M < 1:
        raise ValueError("need T >= 0 and M >= 1")
    I_minus_W = np.eye(d) - truth.W
    try:
        if np.linalg.cond(I_minus_W) > 1e12:
            raise np.linalg.LinAlgError
        inv = np.linalg.inv(I_minus_W)
    except np.linalg.LinAlgError as exc:
        raise NumericError("simulate_svar: I - W is singular") from exc
    lags = [truth.A[i * d : (i + 1) * d] for i in range(p)]

    steps = T + 1 + burn_in
    U = noise_std * rng.standard_normal((M, steps, d))
    X = np.zeros((M, steps, d))
    head = min(p, steps)
    X[:, :head] = U[:, :head]
    for t in range(p, steps):
        drive = U[:, t].copy()
        for i, Ai in enumerate(lags, start=1):
            drive += X[:, t - i] @ Ai
        # row form: x_t^T = drive^T (I - W)^{-1}
        X[:, t] = drive @ inv
    if return_noise:
        return X[:, burn_in:], U[:, burn_in:]
    return X[:, burn_in:]


def build_designs(series: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Stack lagged design matrices from series shaped ``(T+1, d)`` or ``(M, T+1, d)``.

    Row ``r`` of ``X_t`` is ``x_{p+r}`` and row ``r`` of ``X_lag`` is
    ``[x_{p+r-1}, ..., x_{p+r-p}]``; realizations are stacked in order.
    """
    series = np.asarray(series, dtype=float)
    if series.ndim == 2:
        series = series[None]
    if series.ndim != 3:
        raise DimensionError(f"series must be 2-D or 3-D, got shape {series.shape}")
    if p < 1:
        raise ValueError("p must be >= 1")
    M, L, d = series.shape
    if L < p + 1:
        raise ValueError(f"series of length {L} is too short for order p={p}")
    X_t = series[:, p:].reshape(-1, d)
    X_lag = np.concatenate([series[:, p - i : L - i] for i in range(1, p + 1)], axis=2)
    return X_t, X_lag.reshape(-1, p * d)


@dataclass(frozen=True)
class ClientDataset:
    X_t: np.ndarray
    X_lag: np.ndarray

    def __post_init__(self):
        X_t = np.asarray(self.X_t, dtype=float)
        X_lag = np.asarray(self.X_lag, dtype=float)
        if X_t.ndim != 2 or X_lag.ndim != 2 or X_t.shape[0] != X_lag.shape[0]:
            raise DimensionError(f"incompatible design shapes {X_t.shape}, {X_lag.shape}")
        if X_t.shape[1] == 0 or X_lag.shape[1] % X_t.shape[1] != 0 or X_lag.shape[1] == 0:
            raise DimensionError(f"X_lag width {X_lag.shape[1]} is not a multiple of d")
        if X_t.shape[0] == 0:
            raise DimensionError("client dataset has no rows")
        object.__setattr__(self, "X_t", X_t)
        object.__setattr__(self, "X_lag", X_lag)

    @property
    def n_k(self) -> int:
        return self.X_t.shape[0]

    @property
    def d(self) -> int:
        return self.X_t.shape[1]

    @property
    def p(self) -> int:
        return self.X_lag.shape[1] // self.d

    @cached_property
    def gram(self) -> np.ndarray:
        """``[X_t, X_lag]^T [X_t, X_lag] / n_k``; blocks are S, M, M^T, N."""
        Z = np.hstack([self.X_t, self.X_lag])
        return Z.T @ Z / self.n_k


def partition(X_t: np.ndarray, X_lag: np.ndarray, K: int) -> list[ClientDataset]:
    """Split rows into ``K`` contiguous blocks; the first ``n % K`` get one extra row."""
    if K <= 0:
        raise ValueError(f"K must be positive, got {K}")
    n = X_t.shape[0]
    if n < K:
        raise ValueError(f"cannot split {n} rows among {K} clients")
    base, extra = divmod(n, K)
    out, start = [], 0
    for k in range(K):
        size = base + (1 if k < extra else 0)
        out.append(ClientDataset(X_t[start : start + size], X_lag[start : start + size]))
        start += size
    return out


# ------------------------------------------------------------------ experiments


def homogeneous_clients(
    cfg: GenConfig, n: int, K: int, realization_length: int | None = None
) -> tuple[WeightedDbn, list[ClientDataset]]:
    """One shared truth, ``n`` design rows split evenly among ``K`` clients.

    By default every design row comes from its own realization of length
    ``p+1`` (``T = p``). Passing ``realization_length = L`` simulates
    ``ceil(n / (L - p))`` realizations of length ``L`` and keeps the first
    ``n`` rows.
    """
    rng = np.random.default_rng(cfg.seed)
    truth = gen_truth(cfg, rng)
    X_t, X_lag = _simulate_rows(truth, n, cfg, rng, realization_length)
    return truth, partition(X_t, X_lag, K)


def heterogeneous_clients(
    cfg: GenConfig, n_k: int | Sequence[int], K: int, realization_length: int | None = None
) -> tuple[list[WeightedDbn], list[ClientDataset]]:
    """Independent truth and data per client, each from a derived sub-seed."""
    sizes = [n_k] * K if np.isscalar(n_k) else list(n_k)
    if len(sizes) != K:
        raise ValueError("need one sample size per client")
    children = np.random.SeedSequence(cfg.seed).spawn(K)
    truths, data = [], []
    for k in range(K):
        rng = np.random.default_rng(children[k])
        truth = gen_truth(cfg, rng)
        X_t, X_lag = _simulate_rows(truth, int(sizes[k]), cfg, rng, realization_length)
        truths.append(truth)
        data.append(ClientDataset(X_t, X_lag))
    return truths, data


def _simulate_rows(truth, n, cfg, rng, realization_length):
    p = cfg.p
    L = p + 1 if realization_length is None else int(realization_length)
    if L < p + 1:
        raise ValueError(f"realization_length must be >= p+1 = {p + 1}")
    rows_per = L - p
    M = -(-n // rows_per)
    series = simulate_svar(truth, L - 1, M, cfg.noise_std, rng, burn_in=cfg.burn_in)
    X_t, X_lag = build_designs(series, p)
    return X_t[:n], X_lag[:n]


# ------------------------------------------------------------------ series CSV


def export_series(series: np.ndarray, path: str | Path) -> None:
    """Write ``(M, T+1, d)`` series as CSV with columns realization, t, v0..v{d-1}."""
    series = np.asarray(series, dtype=float)
    if series.ndim == 2:
        series = series[None]
    M, L, d = series.shape
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["realization", "t"] + [f"v{j}" for j in range(d)])
        for m in range(M):
            for t in range(L):
                writer.writerow([m, t] + [repr(float(v)) for v in series[m, t]])


def import_series(path: str | Path) -> list[np.ndarray]:
    """Read the CSV written by :func:`export_series`; one ``(T+1, d)`` array per realization.

    Realizations keep their order of first appearance. Rows within a
    realization must have consecutive ``t`` starting from 0.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError("empty file", line=1) from None
        header = [h.strip() for h in header]
        if header[:2] != ["realization", "t"] or len(header) < 3:
            raise IngestionError("expected header 'realization,t,v0,...'", line=1)
        d = len(header) - 2
        expected = [f"v{j}" for j in range(d)]
        if header[2:] != expected:
            raise IngestionError(f"value columns must be {expected}", line=1)
        groups: dict[str, list[list[float]]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != d + 2:
                raise IngestionError(f"expected {d + 2} fields, got {len(row)}", line=lineno)
            key = row[0].strip()
            try:
                t = int(row[1])
                values = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise IngestionError(f"unparseable field ({exc})", line=lineno) from None
            rows = groups.setdefault(key, [])
            if t != len(rows):
                raise IngestionError(
                    f"realization {key}: expected t={len(rows)}, got t={t}", line=lineno
                )
            rows.append(values)
    if not groups:
        raise IngestionError("no data rows", line=2)
    return [np.array(v, dtype=float).reshape(-1, d) for v in groups.values()]


def with_seed(cfg: GenConfig, seed: int) -> GenConfig:
    return replace(cfg, seed=seed)
