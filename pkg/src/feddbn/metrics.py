"""Structure-recovery metrics (SHD, TPR, FDR and client means) and ranking metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from feddbn.dbn import BinaryDbn, WeightedDbn
from feddbn.errors import DimensionError, IngestionError, MetricError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    reversed: int = 0


@dataclass
class MetricsReport:
    shd: dict[str, float]
    tpr: dict[str, float]
    fdr: dict[str, float]
    auroc: float | None = None
    aupr: float | None = None
    per_client: list["MetricsReport"] = field(default_factory=list)


def _check(pred: BinaryDbn, truth: BinaryDbn) -> None:
    if (pred.d, pred.p) != (truth.d, truth.p):
        raise DimensionError(f"graph shapes differ: (d, p) = {(pred.d, pred.p)} vs {(truth.d, truth.p)}")


def confusion_w(pred: BinaryDbn, truth: BinaryDbn) -> ConfusionCounts:
    """Counts for the intra-slice graph; a flipped true edge is one reversal."""
    _check(pred, truth)
    P = {e for e in pred.W_edges if e[0] != e[1]}
    T = {e for e in truth.W_edges if e[0] != e[1]}
    tp = len(P & T)
    rev = sum(1 for (i, j) in P - T if (j, i) in T - P)
    fp = len(P - T) - rev
    fn = len(T - P) - rev
    return ConfusionCounts(tp, fp, fn, rev)


def confusion_a(pred: BinaryDbn, truth: BinaryDbn) -> ConfusionCounts:
    _check(pred, truth)
    P, T = set(pred.A_edges), set(truth.A_edges)
    return ConfusionCounts(len(P & T), len(P - T), len(T - P))


def shd(pred: BinaryDbn, truth: BinaryDbn) -> tuple[int, int]:
    """Structural Hamming distance for W (missing + extra + reversed) and A (missing + extra)."""
    cw, ca = confusion_w(pred, truth), confusion_a(pred, truth)
    return cw.fp + cw.fn + cw.reversed, ca.fp + ca.fn


def _rates(c: ConfusionCounts) -> tuple[float, float]:
    # a reversed edge is a predicted edge that is wrong and a true edge that is missed
    fp = c.fp + c.reversed
    fn = c.fn + c.reversed
    tpr = 1.0 if c.tp + fn == 0 else c.tp / (c.tp + fn)
    fdr = 0.0 if c.tp + fp == 0 else fp / (c.tp + fp)
    return tpr, fdr


def tpr_fdr(pred: BinaryDbn, truth: BinaryDbn) -> dict[str, tuple[float, float]]:
    """``{"W": (tpr, fdr), "A": (tpr, fdr)}`` with exact-direction true positives."""
    return {"W": _rates(confusion_w(pred, truth)), "A": _rates(confusion_a(pred, truth))}


def evaluate(pred: BinaryDbn, truth: BinaryDbn) -> MetricsReport:
    s_w, s_a = shd(pred, truth)
    rates = tpr_fdr(pred, truth)
    return MetricsReport(
        shd={"W": float(s_w), "A": float(s_a)},
        tpr={m: rates[m][0] for m in ("W", "A")},
        fdr={m: rates[m][1] for m in ("W", "A")},
    )


def mean_metrics(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Arithmetic means (mSHD, mTPR, mFDR) over per-client reports."""
    if not reports:
        raise MetricError("mean of an empty list of reports")

    def avg(attr):
        return {m: float(np.mean([getattr(r, attr)[m] for r in reports])) for m in ("W", "A")}

    return MetricsReport(shd=avg("shd"), tpr=avg("tpr"), fdr=avg("fdr"), per_client=list(reports))


def combined_scores(dbn: WeightedDbn) -> np.ndarray:
    """Edge score ``|W_ij| + sum_lag |A_lag,ij|``."""
    d = dbn.d
    return np.abs(dbn.W) + np.abs(dbn.A).reshape(dbn.p, d, d).sum(axis=0)


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x))
    i = 0
    while i < len(xs):
        j = i
        while j + 1 < len(xs) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc_aupr(scores: np.ndarray, gold: np.ndarray, mask_diagonal: bool = True) -> tuple[float, float]:
    """Area under the ROC curve (tie-aware) and under the precision-recall step curve.

    AUROC equals the Mann-Whitney statistic with average ranks for ties, which
    is the trapezoidal area under the ROC curve. AUPR sums
    ``precision * recall increment`` over distinct score thresholds.
    """
    scores = np.asarray(scores, dtype=float)
    gold = np.asarray(gold)
    if scores.shape != gold.shape:
        raise DimensionError(f"scores {scores.shape} and gold {gold.shape} differ")
    keep = np.ones(scores.shape, dtype=bool)
    if mask_diagonal and scores.ndim == 2 and scores.shape[0] == scores.shape[1]:
        np.fill_diagonal(keep, False)
    s = scores[keep]
    y = gold[keep] != 0
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise MetricError("gold standard needs at least one positive and one negative cell")

    ranks = _average_ranks(s)
    auroc = (ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)

    order = np.argsort(-s, kind="mergesort")
    s_sorted, y_sorted = s[order], y[order]
    # last index of every block of tied scores
    ends = np.r_[np.nonzero(np.diff(s_sorted))[0], len(s_sorted) - 1]
    tp = np.cumsum(y_sorted)[ends]
    predicted = ends + 1
    precision = tp / predicted
    recall = tp / n_pos
    aupr = float(np.sum(np.diff(np.r_[0.0, recall]) * precision))
    return float(auroc), aupr


# ----------------------------------------------------------------- gold files


def read_gold(path: str | Path, d: int | None = None) -> np.ndarray:
    """Load a gold standard as a binary ``d x d`` matrix.

    Accepts the DREAM-style edge list (``G3 G7 1`` per line, 1-based gene
    numbers; any prefix letters are stripped) or a CSV binary matrix
    (optionally with a ``j0,j1,...`` header row).
    """
    text = Path(path).read_text()
    lines = [(i, ln.strip()) for i, ln in enumerate(text.splitlines(), start=1) if ln.strip()]
    if not lines:
        raise IngestionError("empty gold-standard file", line=1)
    if "," in lines[0][1]:
        return _read_gold_matrix(lines, d)
    edges = []
    n_max = 0
    for lineno, ln in lines:
        parts = ln.split()
        if len(parts) != 3:
            raise IngestionError("expected 'Gi Gj 0|1'", line=lineno)
        try:
            i = int(parts[0].lstrip("GgVvXx")) - 1
            j = int(parts[1].lstrip("GgVvXx")) - 1
            flag = int(parts[2])
        except ValueError:
            raise IngestionError(f"cannot parse {ln!r}", line=lineno) from None
        if flag not in (0, 1) or i < 0 or j < 0:
            raise IngestionError(f"bad entry {ln!r}", line=lineno)
        n_max = max(n_max, i + 1, j + 1)
        edges.append((i, j, flag))
    size = d if d is not None else n_max
    if n_max > size:
        raise IngestionError(f"gold standard names node {n_max} but d = {size}")
    G = np.zeros((size, size), dtype=int)
    for i, j, flag in edges:
        G[i, j] = flag
    return G


def _read_gold_matrix(lines, d):
    rows = []
    for lineno, ln in lines:
        cells = [c.strip() for c in ln.split(",")]
        if lineno == lines[0][0] and all(c.startswith("j") for c in cells):
            continue
        try:
            rows.append([int(float(c)) for c in cells])
        except ValueError:
            raise IngestionError(f"non-numeric cell in {ln!r}", line=lineno) from None
    G = np.array(rows, dtype=int)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise IngestionError(f"gold matrix must be square, got {G.shape}")
    if d is not None and G.shape[0] != d:
        raise IngestionError(f"gold matrix is {G.shape[0]}x{G.shape[0]}, expected d={d}")
    return (G != 0).astype(int)


def write_gold(G: np.ndarray, path: str | Path) -> None:
    """Write a binary matrix as a DREAM-style edge list (off-diagonal cells only)."""
    d = G.shape[0]
    with open(path, "w") as fh:
        for i in range(d):
            for j in range(d):
                if i != j:
                    fh.write(f"G{i + 1}\tG{j + 1}\t{int(G[i, j] != 0)}\n")
