"""Weighted and binary DBN containers, thresholding and serialization.

Layout conventions used throughout the package:

* ``W[i, j]`` is the contemporaneous effect of variable ``i`` on variable ``j``.
* ``A`` stacks the lag matrices vertically, ``A = [A_1; A_2; ...; A_p]``, so
  that rows ``(i-1)*d .. i*d-1`` hold lag ``i`` and ``A_i[a, b]`` is the effect
  of variable ``a`` at ``t-i`` on variable ``b`` at ``t``. With the lagged
  design ``X_lag = [X_{t-1}, ..., X_{t-p}]`` the model reads
  ``X_t = X_t W + X_lag A + noise``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from feddbn.errors import DimensionError


@dataclass(frozen=True)
class WeightedDbn:
    W: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        A = np.asarray(self.A, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise DimensionError(f"W must be square, got {W.shape}")
        d = W.shape[0]
        if A.ndim != 2 or A.shape[1] != d or A.shape[0] % d != 0 or A.shape[0] == 0:
            raise DimensionError(f"A must be (p*d, d) with d={d}, got {A.shape}")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "A", A)

    @property
    def d(self) -> int:
        return self.W.shape[0]

    @property
    def p(self) -> int:
        return self.A.shape[0] // self.d

    @classmethod
    def zeros(cls, d: int, p: int) -> "WeightedDbn":
        return cls(np.zeros((d, d)), np.zeros((p * d, d)))

    @classmethod
    def from_lags(cls, W: np.ndarray, lags: Sequence[np.ndarray]) -> "WeightedDbn":
        """Build from ``W`` and the per-lag matrices ``[A_1, ..., A_p]``."""
        if len(lags) == 0:
            raise ValueError("need at least one lag matrix")
        return cls(W, np.vstack([np.asarray(a, dtype=float) for a in lags]))

    def without_self_loops(self) -> "WeightedDbn":
        W = self.W.copy()
        np.fill_diagonal(W, 0.0)
        return WeightedDbn(W, self.A.copy())

    def to_dict(self) -> dict:
        return {"d": self.d, "p": self.p, "W": self.W.tolist(), "A": self.A.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "WeightedDbn":
        dbn = cls(np.array(doc["W"], dtype=float).reshape(doc["d"], doc["d"]),
                  np.array(doc["A"], dtype=float).reshape(doc["p"] * doc["d"], doc["d"]))
        return dbn


def lag_block(dbn: WeightedDbn, i: int) -> np.ndarray:
    """Return the ``d x d`` lag-``i`` matrix (1-based lag index)."""
    if not 1 <= i <= dbn.p:
        raise ValueError(f"lag index {i} out of range 1..{dbn.p}")
    d = dbn.d
    return dbn.A[(i - 1) * d : i * d].copy()


@dataclass(frozen=True)
class BinaryDbn:
    d: int
    p: int
    W_edges: frozenset = field(default_factory=frozenset)  # {(i, j)}
    A_edges: frozenset = field(default_factory=frozenset)  # {(lag, i, j)}

    def W_matrix(self) -> np.ndarray:
        M = np.zeros((self.d, self.d), dtype=int)
        for i, j in self.W_edges:
            M[i, j] = 1
        return M

    def A_matrix(self) -> np.ndarray:
        M = np.zeros((self.p * self.d, self.d), dtype=int)
        for lag, i, j in self.A_edges:
            M[(lag - 1) * self.d + i, j] = 1
        return M


def threshold(dbn: WeightedDbn, tau_w: float, tau_a: float) -> BinaryDbn:
    """Keep edges with ``|weight| > tau``; the diagonal of ``W`` is always dropped."""
    if tau_w < 0 or tau_a < 0:
        raise ValueError(f"thresholds must be nonnegative, got {tau_w}, {tau_a}")
    d, p = dbn.d, dbn.p
    keep_w = np.abs(dbn.W) > tau_w
    np.fill_diagonal(keep_w, False)
    w_edges = frozenset((int(i), int(j)) for i, j in zip(*np.nonzero(keep_w)))
    keep_a = np.abs(dbn.A) > tau_a
    a_edges = frozenset(
        (int(r) // d + 1, int(r) % d, int(c)) for r, c in zip(*np.nonzero(keep_a))
    )
    return BinaryDbn(d, p, w_edges, a_edges)


def is_dag(edges: Iterable[tuple[int, int]], d: int) -> bool:
    """Kahn topological sort over ``d`` nodes."""
    children: list[list[int]] = [[] for _ in range(d)]
    indeg = [0] * d
    for i, j in edges:
        children[i].append(j)
        indeg[j] += 1
    stack = [v for v in range(d) if indeg[v] == 0]
    seen = 0
    while stack:
        v = stack.pop()
        seen += 1
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                stack.append(c)
    return seen == d


# ---------------------------------------------------------------- serialization


def _write_matrix_csv(M: np.ndarray, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"j{j}" for j in range(M.shape[1])])
        for row in M:
            writer.writerow([repr(float(v)) for v in row])


def _read_matrix_csv(path: Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty matrix file")
    return np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(
        -1, len(rows[0])
    )


def save_csv(dbn: WeightedDbn, directory: str | Path, prefix: str = "") -> tuple[Path, Path]:
    """Write ``W.csv`` and ``A.csv`` (header ``j0..j{d-1}``) into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    w_path = directory / f"{prefix}W.csv"
    a_path = directory / f"{prefix}A.csv"
    _write_matrix_csv(dbn.W, w_path)
    _write_matrix_csv(dbn.A, a_path)
    return w_path, a_path


def load_csv(directory: str | Path, prefix: str = "") -> WeightedDbn:
    directory = Path(directory)
    return WeightedDbn(_read_matrix_csv(directory / f"{prefix}W.csv"),
                       _read_matrix_csv(directory / f"{prefix}A.csv"))


def save_json(dbn: WeightedDbn, path: str | Path) -> None:
    Path(path).write_text(json.dumps(dbn.to_dict()))


def load_json(path: str | Path) -> WeightedDbn:
    return WeightedDbn.from_dict(json.loads(Path(path).read_text()))
