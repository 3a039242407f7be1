"""Dense numerical kernels shared by every solver in the package."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import lapack
from scipy.optimize import minimize

from feddbn.errors import DimensionError, NumericError

logger = logging.getLogger(__name__)

# Taylor degree used after scaling ||M||_1 below _SCALE_TARGET; the truncation
# error is below 0.5**17 / 17! ~ 2e-20 relative.
_TAYLOR_DEGREE = 16
_SCALE_TARGET = 0.5
_TAYLOR_COEFFS = [1.0 / math.factorial(k) for k in range(_TAYLOR_DEGREE + 1)]


def matrix_exponential(M: np.ndarray) -> np.ndarray:
    """Return ``e^M`` by scaling and squaring around a truncated Taylor core."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"matrix_exponential needs a square matrix, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NumericError("matrix_exponential: input has non-finite entries")
    n = M.shape[0]
    norm = np.abs(M).sum(axis=0).max() if n else 0.0
    squarings = 0
    if norm > _SCALE_TARGET:
        squarings = int(math.ceil(math.log2(norm / _SCALE_TARGET)))
    X = M / (2.0**squarings) if squarings else M

    # Paterson-Stockmeyer: sum_{k<=16} X^k / k! as a polynomial in X^4 whose
    # coefficients are cubic polynomials in X
    eye = np.eye(n)
    X2 = X @ X
    X3 = X2 @ X
    X4 = X2 @ X2
    c = _TAYLOR_COEFFS
    E = c[12] * eye + c[13] * X + c[14] * X2 + c[15] * X3 + c[16] * X4
    for j in (8, 4, 0):
        E = X4 @ E
        E += c[j] * eye + c[j + 1] * X + c[j + 2] * X2 + c[j + 3] * X3
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(squarings):
            E = E @ E
    if not np.all(np.isfinite(E)):
        raise NumericError(f"matrix_exponential overflowed (1-norm of input {norm:.3g})")
    return E


@dataclass(frozen=True)
class AcyclicityEval:
    value: float
    gradient: np.ndarray


def acyclicity(W: np.ndarray) -> AcyclicityEval:
    """Evaluate ``h(W) = tr(exp(W * W)) - d`` and its gradient ``exp(W*W)^T * 2W``."""
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise DimensionError(f"acyclicity needs a square matrix, got {W.shape}")
    E = matrix_exponential(W * W)
    value = float(np.trace(E) - W.shape[0])
    return AcyclicityEval(value=value, gradient=E.T * W * 2.0)


def spd_solve(P: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve ``P X = B`` for symmetric positive-definite ``P`` via Cholesky.

    Raises:
        NumericError: if the factorization meets a non-positive pivot. The
            1-based index of the failing leading minor is in the message.
    """
    P = np.asarray(P, dtype=float)
    B = np.asarray(B, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise DimensionError(f"spd_solve needs a square P, got {P.shape}")
    vector = B.ndim == 1
    B2 = B[:, None] if vector else B
    if B2.shape[0] != P.shape[0]:
        raise DimensionError(f"spd_solve: P is {P.shape}, B has {B2.shape[0]} rows")
    if P.shape[0] == 0:
        return B.copy()
    c, info = lapack.dpotrf(P, lower=0, clean=1, overwrite_a=0)
    if info > 0:
        raise NumericError(f"spd_solve: matrix not positive definite (pivot {info})")
    if info < 0:
        raise NumericError(f"spd_solve: invalid argument {-info} to dpotrf")
    X, info = lapack.dpotrs(c, B2, lower=0, overwrite_b=0)
    if info != 0:
        raise NumericError(f"spd_solve: dpotrs failed with info={info}")
    return X[:, 0] if vector else X


@dataclass(frozen=True)
class BoundMinimizeConfig:
    memory: int = 10
    max_iter: int = 500
    grad_tol: float = 1e-6
    # relative objective decrease that also stops the run
    ftol: float = 2.2e-9


@dataclass
class BoundMinimizeResult:
    x: np.ndarray
    objective: float
    projected_gradient_norm: float
    iterations: int
    converged: bool
    aborted: bool = False
    message: str = ""


class _NonFinite(Exception):
    pass


def projected_gradient_norm(x: np.ndarray, g: np.ndarray, lower: np.ndarray) -> float:
    """Infinity norm of the gradient projected onto the feasible box ``x >= lower``."""
    pg = np.where(x > lower, g, np.minimum(g, 0.0))
    return float(np.abs(pg).max()) if pg.size else 0.0


def bound_minimize(
    objective_with_gradient: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    lower_bounds: np.ndarray | float | None = None,
    config: BoundMinimizeConfig | None = None,
) -> BoundMinimizeResult:
    """Minimize a smooth function subject to ``x >= lower_bounds`` with L-BFGS-B.

    ``lower_bounds`` may contain ``-inf`` for free coordinates (or be None for a
    fully unconstrained problem). If the callback ever returns a non-finite
    value or gradient the run stops and the last finite iterate is returned
    with ``aborted=True``.
    """
    cfg = config or BoundMinimizeConfig()
    x0 = np.asarray(x0, dtype=float).copy()
    if lower_bounds is None:
        lower = np.full_like(x0, -np.inf)
    else:
        lower = np.broadcast_to(np.asarray(lower_bounds, dtype=float), x0.shape).copy()
    if np.any(x0 < lower):
        raise ValueError("bound_minimize: x0 violates the lower bounds")

    best = {"x": x0.copy(), "f": np.inf, "g": None}

    def wrapped(x):
        f, g = objective_with_gradient(x)
        f = float(f)
        if not (math.isfinite(f) and np.all(np.isfinite(g))):
            raise _NonFinite
        if f <= best["f"]:
            best["x"] = x.copy()
            best["f"] = f
            best["g"] = np.array(g, dtype=float)
        return f, g

    bounds = [(lo if math.isfinite(lo) else None, None) for lo in lower]
    try:
        res = minimize(
            wrapped,
            x0,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={
                "maxcor": cfg.memory,
                "maxiter": cfg.max_iter,
                "gtol": cfg.grad_tol,
                "ftol": cfg.ftol,
                # generous evaluation cap; line searches rarely need more
                "maxfun": 20 * cfg.max_iter + 100,
            },
        )
    except _NonFinite:
        x = np.maximum(best["x"], lower)
        if best["g"] is None:
            return BoundMinimizeResult(x, float("nan"), float("nan"), 0, False, True,
                                       "objective non-finite at x0")
        pgn = projected_gradient_norm(x, best["g"], lower)
        return BoundMinimizeResult(x, best["f"], pgn, 0, False, True,
                                   "objective became non-finite; returning last good iterate")

    x = np.maximum(np.asarray(res.x, dtype=float), lower)
    f, g = objective_with_gradient(x)
    f = float(f)
    if best["f"] < f:  # L-BFGS-B reports its final iterate; keep the best one seen
        x, f, g = best["x"], best["f"], best["g"]
    pgn = projected_gradient_norm(x, np.asarray(g, dtype=float), lower)
    converged = pgn <= cfg.grad_tol
    return BoundMinimizeResult(
        x=x,
        objective=f,
        projected_gradient_norm=pgn,
        iterations=int(res.nit),
        converged=converged,
        message=str(res.message),
    )
