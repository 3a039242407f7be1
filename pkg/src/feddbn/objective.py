"""Pieces shared by every (W, A) subproblem: the least-squares score and the
l1-penalized minimization over the split ``W = W+ - W-``, ``A = A+ - A-``.

The diagonal of ``W`` is not a free variable: a self-loop is a cycle, so it is
pinned at zero instead of being driven there by the acyclicity penalty.
"""

from __future__ import annotations

import logging
from typing import Callable

import numpy as np

from feddbn.numkit import BoundMinimizeConfig, BoundMinimizeResult, bound_minimize

logger = logging.getLogger(__name__)

# smooth(W, A) -> (value, grad_W, grad_A)
SmoothFn = Callable[[np.ndarray, np.ndarray], tuple[float, np.ndarray, np.ndarray]]


def least_squares(gram: np.ndarray, W: np.ndarray, A: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """``1/(2n) ||X_t - X_t W - X_lag A||_F^2`` from the scaled Gram matrix of ``[X_t, X_lag]``."""
    d = W.shape[0]
    theta = np.vstack([np.eye(d) - W, -A])
    g_theta = gram @ theta
    value = 0.5 * float(np.sum(theta * g_theta))
    return value, -g_theta[:d], -g_theta[d:]


class SplitLayout:
    """Packs off-diagonal ``W`` and all of ``A`` into one nonnegative vector."""

    def __init__(self, d: int, p: int):
        self.d, self.p = d, p
        self.off = ~np.eye(d, dtype=bool)
        self.nw = d * d - d
        self.na = p * d * d

    @property
    def size(self) -> int:
        return 2 * (self.nw + self.na)

    def pack(self, W: np.ndarray, A: np.ndarray) -> np.ndarray:
        w = W[self.off]
        a = A.ravel()
        return np.concatenate([np.maximum(w, 0), np.maximum(-w, 0), np.maximum(a, 0), np.maximum(-a, 0)])

    def unpack(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        nw, na = self.nw, self.na
        W = np.zeros((self.d, self.d))
        W[self.off] = x[:nw] - x[nw : 2 * nw]
        A = (x[2 * nw : 2 * nw + na] - x[2 * nw + na :]).reshape(self.p * self.d, self.d)
        return W, A


def penalized_minimize(
    smooth: SmoothFn,
    W0: np.ndarray,
    A0: np.ndarray,
    lambda_w: float,
    lambda_a: float,
    config: BoundMinimizeConfig | None = None,
    label: str = "subproblem",
) -> tuple[np.ndarray, np.ndarray, BoundMinimizeResult]:
    """Minimize ``smooth(W, A) + lambda_w |W|_1 + lambda_a |A|_1``, warm-started at (W0, A0)."""
    d = W0.shape[0]
    layout = SplitLayout(d, A0.shape[0] // d)
    nw, na = layout.nw, layout.na
    penalty = np.concatenate([np.full(2 * nw, float(lambda_w)), np.full(2 * na, float(lambda_a))])
    off = layout.off

    def fun(x):
        W, A = layout.unpack(x)
        f, gW, gA = smooth(W, A)
        gw = gW[off]
        ga = gA.ravel()
        grad = np.concatenate([gw, -gw, ga, -ga]) + penalty
        return f + float(penalty @ x), grad

    res = bound_minimize(fun, layout.pack(W0, A0), 0.0, config)
    if not res.converged and res.iterations >= (config or BoundMinimizeConfig()).max_iter:
        logger.info(
            "%s: no convergence within %d iterations (projected gradient %.3g)",
            label, res.iterations, res.projected_gradient_norm,
        )
    elif not res.converged:
        logger.debug(
            "%s: stopped with projected gradient %.3g after %d iterations (%s)",
            label, res.projected_gradient_norm, res.iterations, res.message,
        )
    if res.aborted:
        logger.warning("%s: %s", label, res.message)
    W, A = layout.unpack(res.x)
    return W, A, res
