"""Experiment grids, dataset ingestion and result emission for the command line."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from feddbn.baselines import (
    DynotearsConfig,
    alldata_baseline,
    ave_baseline,
    best_baseline,
    per_client_fits,
)
from feddbn.datagen import (
    ClientDataset,
    GenConfig,
    build_designs,
    connectivity_degree,
    heterogeneous_clients,
    homogeneous_clients,
    import_series,
    partition,
)
from feddbn.dbn import BinaryDbn, WeightedDbn, threshold
from feddbn.errors import IngestionError
from feddbn.fdbnl import FdbnlConfig, run_fdbnl, write_trace
from feddbn.metrics import MetricsReport, evaluate, mean_metrics
from feddbn.numkit import BoundMinimizeConfig
from feddbn.pfdbnl import PfdbnlConfig, default_lambda, run_pfdbnl

logger = logging.getLogger(__name__)

SCENARIOS = ("vary_d", "vary_k", "hetero_vary_d", "hetero_vary_k", "partial_participation", "single_run")
METHODS = ("fdbnl", "pfdbnl", "ave", "best", "alldata")
HETERO = ("hetero_vary_d", "hetero_vary_k", "partial_participation")
RESULT_COLUMNS = ("scenario", "seed", "d", "p", "K", "j", "method", "matrix", "shd", "tpr", "fdr", "runtime_ms")
LAMBDA_GRID = tuple(round(0.05 * i, 2) for i in range(1, 11))

_DEFAULT_METHODS = {
    "vary_d": ("fdbnl", "ave", "best", "alldata"),
    "vary_k": ("fdbnl", "ave", "best", "alldata"),
    "hetero_vary_d": ("pfdbnl", "fdbnl"),
    "hetero_vary_k": ("pfdbnl", "fdbnl"),
    "partial_participation": ("pfdbnl",),
    "single_run": ("fdbnl",),
}


@dataclass(frozen=True)
class ExperimentSpec:
    """One scenario grid. ``None`` fields take the scenario's default."""

    scenario: str
    methods: tuple[str, ...] | None = None
    seeds: tuple[int, ...] = tuple(range(10))
    d: tuple[int, ...] | None = None
    K: tuple[int, ...] | None = None
    j: tuple[int, ...] | None = None
    p: int = 1
    n: int | None = None
    n_k: int | None = None
    # generator
    connectivity: str | None = None
    intra_mean_degree: float | None = None
    inter_mean_out_degree: float = 1.0
    eta: float = 1.5
    noise_std: float = 1.0
    realization_length: int | None = None
    # evaluation
    tau_w: float = 0.3
    tau_a: float = 0.3
    truth_tau: float = 0.0
    # federated solvers
    lambda_w: float | None = None
    lambda_a: float | None = None
    lambda_sweep: str = "none"
    mu: float = 0.1
    phi1: float = 1.6
    phi2: float = 1.1
    max_rounds: int = 200
    # centralized baselines
    baseline_lambda: float = 0.05
    baseline_max_iter: int = 50
    # output
    timing: bool = False
    traces: bool = False

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        if not self.seeds:
            raise ValueError("need at least one seed")
        for m in self.method_list:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
        if self.lambda_sweep not in ("none", "diag", "grid"):
            raise ValueError("lambda_sweep must be one of none, diag, grid")
        if self.scenario == "single_run" and not (self.d and self.K):
            raise ValueError("single_run needs d and K")
        if self.connectivity not in (None, "low", "high"):
            raise ValueError("connectivity must be low or high")

    @property
    def method_list(self) -> tuple[str, ...]:
        return self.methods if self.methods else _DEFAULT_METHODS[self.scenario]

    @property
    def heterogeneous(self) -> bool:
        return self.scenario in HETERO


@dataclass(frozen=True)
class ResultRow:
    scenario: str
    seed: int
    d: int
    p: int
    K: int
    j: int
    method: str
    matrix: str
    shd: float
    tpr: float
    fdr: float
    runtime_ms: float | None = None


@dataclass(frozen=True)
class GridPoint:
    d: int
    K: int
    j: int
    n: int | None  # total rows (homogeneous)
    n_k: int | None  # rows per client (heterogeneous)


def grid_points(spec: ExperimentSpec) -> list[GridPoint]:
    """Expand a scenario into its (d, K, j, sample size) points."""
    s = spec.scenario
    if s == "vary_d":
        K = (spec.K or (10,))[0]
        return [GridPoint(d, K, K, spec.n or vary_d_samples(d, K), None) for d in (spec.d or (5, 10, 15, 20))]
    if s == "vary_k":
        d = (spec.d or (20,))[0]
        return [GridPoint(d, K, K, spec.n or 512, None) for K in (spec.K or (2, 4, 8, 16, 32, 64))]
    if s == "hetero_vary_d":
        K = (spec.K or (6,))[0]
        return [GridPoint(d, K, K, None, spec.n_k or K * d) for d in (spec.d or (5, 10, 15, 20))]
    if s == "hetero_vary_k":
        d = (spec.d or (10,))[0]
        total = spec.n or 512
        return [GridPoint(d, K, K, None, spec.n_k or total // K) for K in (spec.K or (2, 4, 8, 16, 32))]
    if s == "partial_participation":
        d, K = (spec.d or (10,))[0], (spec.K or (6,))[0]
        return [GridPoint(d, K, j, None, spec.n_k or K * d) for j in (spec.j or range(1, K))]
    d, K = spec.d[0], spec.K[0]
    j = (spec.j or (K,))[0]
    if spec.n_k is not None:
        return [GridPoint(d, K, j, None, spec.n_k)]
    return [GridPoint(d, K, j, spec.n or vary_d_samples(d, K), None)]


def vary_d_samples(d: int, K: int) -> int:
    """``5d`` rows when they split evenly among ``K`` clients, otherwise ``6d``."""
    return 5 * d if (5 * d) % K == 0 else 6 * d


# ---------------------------------------------------------------- one run


def _gen_config(spec: ExperimentSpec, d: int, seed: int) -> GenConfig:
    if spec.intra_mean_degree is not None:
        degree = spec.intra_mean_degree
    elif spec.connectivity is not None:
        degree = connectivity_degree(d, spec.connectivity)
    elif spec.heterogeneous:
        degree = connectivity_degree(d, "high")
    else:
        degree = 4.0
    return GenConfig(d=d, p=spec.p, intra_mean_degree=degree, inter_mean_out_degree=spec.inter_mean_out_degree,
                     eta=spec.eta, noise_std=spec.noise_std, seed=seed)


def _lambdas(spec: ExperimentSpec, d: int, method: str) -> tuple[float, float]:
    """Explicit values win; otherwise 0.5 for homogeneous FDBNL and the d-based default elsewhere."""
    base = default_lambda(d) if spec.heterogeneous or method == "pfdbnl" else 0.5
    lw = base if spec.lambda_w is None else spec.lambda_w
    la = lw if spec.lambda_a is None else spec.lambda_a
    return lw, la


def _fdbnl_config(spec: ExperimentSpec, lw: float, la: float) -> FdbnlConfig:
    return FdbnlConfig(lambda_w=lw, lambda_a=la, phi1=spec.phi1, phi2=spec.phi2, max_rounds=spec.max_rounds)


def _score(graphs: Sequence[BinaryDbn], truths: Sequence[BinaryDbn]) -> MetricsReport:
    return mean_metrics([evaluate(g, t) for g, t in zip(graphs, truths)])


def _run_method(method, spec, point, seed, datasets, truths_w, truths_b, trace_dir, cache=None):
    """Fit one method and score it against every client's truth; returns a report.

    ``cache`` (a dict) lets Ave and Best share one set of per-client fits.
    """
    tau_w, tau_a = spec.tau_w, spec.tau_a
    K = len(datasets)
    per_client_truth = truths_b if len(truths_b) == K else truths_b * K
    lw, la = _lambdas(spec, point.d, method)
    base = DynotearsConfig(lambda_w=spec.baseline_lambda, lambda_a=spec.baseline_lambda)

    if method == "fdbnl":
        if spec.lambda_sweep != "none" and not spec.heterogeneous:
            lw, la = _sweep_lambda(spec, datasets, per_client_truth)
        res = run_fdbnl(datasets, _fdbnl_config(spec, lw, la))
        _maybe_trace(res.trace, trace_dir, spec, seed, point, method)
        g = threshold(res.dbn, tau_w, tau_a)
        return _score([g] * K, per_client_truth)
    if method == "pfdbnl":
        cfg = PfdbnlConfig(lambda_w=lw, lambda_a=la, mu=spec.mu, participants_per_round=point.j,
                           phi1=spec.phi1, phi2=spec.phi2, max_rounds=spec.max_rounds)
        res = run_pfdbnl(datasets, cfg, seed=seed)
        _maybe_trace(res.trace, trace_dir, spec, seed, point, method)
        return _score([threshold(w, tau_w, tau_a) for w in res.personal], per_client_truth)
    if method in ("ave", "best"):
        cache = {} if cache is None else cache
        if "fits" not in cache:
            solver = BoundMinimizeConfig(max_iter=spec.baseline_max_iter)
            cache["fits"] = per_client_fits(datasets, replace(base, solver=solver))
        fits = cache["fits"]
        if method == "ave":
            return _score([ave_baseline(fits, tau_w, tau_a)[0]] * K, per_client_truth)
        return _score([best_baseline(fits, t, tau_w, tau_a)[0] for t in per_client_truth], per_client_truth)
    if method == "alldata":
        g = threshold(alldata_baseline(datasets, base), tau_w, tau_a)
        return _score([g] * K, per_client_truth)
    raise ValueError(f"unknown method {method!r}")


def _sweep_lambda(spec, datasets, truths) -> tuple[float, float]:
    """Pick (lambda_w, lambda_a) on the grid by lowest mean SHD(W) + SHD(A) against the truth."""
    if spec.lambda_sweep == "diag":
        pairs = [(lam, lam) for lam in LAMBDA_GRID]
    else:
        pairs = [(lw, la) for lw in LAMBDA_GRID for la in LAMBDA_GRID]
    best, best_score = pairs[0], math.inf
    for lw, la in pairs:
        res = run_fdbnl(datasets, _fdbnl_config(spec, lw, la))
        rep = _score([threshold(res.dbn, spec.tau_w, spec.tau_a)] * len(truths), truths)
        score = rep.shd["W"] + rep.shd["A"]
        if score < best_score:
            best, best_score = (lw, la), score
    return best


def _maybe_trace(trace, trace_dir, spec, seed, point, method):
    if trace_dir is None:
        return
    name = f"{spec.scenario}_seed{seed}_d{point.d}_K{point.K}_j{point.j}_{method}.csv"
    write_trace(trace, Path(trace_dir) / name)


def run_point(spec: ExperimentSpec, point: GridPoint, seed: int, trace_dir: str | None = None) -> list[ResultRow]:
    """Generate one dataset and run every requested method on it."""
    gen = _gen_config(spec, point.d, seed)
    if spec.heterogeneous or point.n_k is not None:
        truths_w, datasets = heterogeneous_clients(gen, point.n_k, point.K, spec.realization_length)
    else:
        truth, datasets = homogeneous_clients(gen, point.n, point.K, spec.realization_length)
        truths_w = [truth]
    truths_b = [threshold(t, spec.truth_tau, spec.truth_tau) for t in truths_w]

    rows = []
    cache: dict = {}
    for method in spec.method_list:
        t0 = time.perf_counter()
        try:
            report = _run_method(method, spec, point, seed, datasets, truths_w, truths_b, trace_dir, cache)
        except Exception as exc:  # one failing method must not sink the grid
            logger.error("%s seed=%d d=%d K=%d j=%d %s failed: %s",
                         spec.scenario, seed, point.d, point.K, point.j, method, exc)
            report = None
        ms = round(1000 * (time.perf_counter() - t0), 3) if spec.timing else None
        j = point.j if method in ("fdbnl", "pfdbnl") else point.K
        for m in ("W", "A"):
            if report is None:
                vals = (math.nan, math.nan, math.nan)
            else:
                vals = (report.shd[m], report.tpr[m], report.fdr[m])
            rows.append(ResultRow(spec.scenario, seed, point.d, spec.p, point.K, j, method, m, *vals, ms))
    return rows


def _run_task(args):
    spec, point, seed, trace_dir = args
    return run_point(spec, point, seed, trace_dir)


def run_experiment(spec: ExperimentSpec, workers: int = 1, trace_dir: str | Path | None = None) -> list[ResultRow]:
    """Run every seed at every grid point; row order is independent of ``workers``."""
    trace_dir = None if trace_dir is None else str(trace_dir)
    if trace_dir is not None:
        Path(trace_dir).mkdir(parents=True, exist_ok=True)
    tasks = [(spec, pt, seed, trace_dir) for pt in grid_points(spec) for seed in spec.seeds]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(workers) as pool:
            chunks = list(pool.map(_run_task, tasks))
    else:
        chunks = [_run_task(t) for t in tasks]
    return [row for chunk in chunks for row in chunk]


# ---------------------------------------------------------------- ingestion


def ingest_timeseries(path: str | Path, p: int, clients_spec: str = "1 per client") -> list[ClientDataset]:
    """Lagged designs from an exported series CSV, grouped into clients.

    ``clients_spec`` forms:
      ``"N per client"``        consecutive groups of N realizations
      ``"round-robin:K"``       realization m goes to client m mod K
      ``"explicit:0,1;2,3"``    semicolon-separated realization index lists
      ``"rows:K"``              pool every design row, split into K contiguous blocks
    """
    series = import_series(path)
    lengths = {s.shape[0] for s in series}
    if min(lengths) < p + 1:
        raise IngestionError(f"order p={p} needs series of length >= {p + 1}, shortest is {min(lengths)}")
    designs = [build_designs(s, p) for s in series]
    M = len(designs)
    spec = clients_spec.strip()

    if spec.startswith("rows:"):
        K = _parse_int(spec[5:], clients_spec)
        X_t = np.vstack([x for x, _ in designs])
        X_lag = np.vstack([z for _, z in designs])
        try:
            return partition(X_t, X_lag, K)
        except ValueError as exc:
            raise IngestionError(str(exc)) from None
    if spec.startswith("round-robin:"):
        K = _parse_int(spec[len("round-robin:"):], clients_spec)
        if not 1 <= K <= M:
            raise IngestionError(f"round-robin over {K} clients needs 1..{M} clients")
        groups = [list(range(k, M, K)) for k in range(K)]
    elif spec.startswith("explicit:"):
        try:
            groups = [[int(x) for x in part.split(",") if x.strip()] for part in spec[9:].split(";")]
        except ValueError:
            raise IngestionError(f"cannot parse clients spec {clients_spec!r}") from None
        used = [m for g in groups for m in g]
        if any(not g for g in groups) or any(m < 0 or m >= M for m in used) or len(set(used)) != len(used):
            raise IngestionError(f"explicit assignment must use distinct realization ids in 0..{M - 1}")
    elif spec.endswith("per client"):
        N = _parse_int(spec[: -len("per client")], clients_spec)
        if N < 1 or M % N:
            raise IngestionError(f"{M} realizations cannot be split {N} per client")
        groups = [list(range(s, s + N)) for s in range(0, M, N)]
    else:
        raise IngestionError(f"unknown clients spec {clients_spec!r}")
    return [ClientDataset(np.vstack([designs[m][0] for m in g]), np.vstack([designs[m][1] for m in g]))
            for g in groups]


def _parse_int(text: str, whole: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise IngestionError(f"cannot parse clients spec {whole!r}") from None


# ---------------------------------------------------------------- emission


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return v


def emit_results(rows: Sequence[ResultRow], path: str | Path) -> tuple[Path, Path]:
    """Write ``rows`` as CSV (fixed column order) and a JSON list mirror next to it."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for row in rows:
            writer.writerow([_cell(getattr(row, c)) for c in RESULT_COLUMNS])
    json_path = path.with_suffix(".json")
    docs = []
    for row in rows:
        doc = {c: getattr(row, c) for c in RESULT_COLUMNS}
        for key in ("shd", "tpr", "fdr"):
            if isinstance(doc[key], float) and math.isnan(doc[key]):
                doc[key] = None
        docs.append(doc)
    json_path.write_text(json.dumps(docs, indent=1) + "\n")
    return path, json_path


def emit_trace(trace, path: str | Path) -> None:
    write_trace(trace, path)


def read_results(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summarize(rows: Sequence[ResultRow]) -> list[dict]:
    """Mean SHD / TPR / FDR over seeds for each (grid point, method, matrix)."""
    groups: dict[tuple, list[ResultRow]] = {}
    for r in rows:
        groups.setdefault((r.d, r.K, r.j, r.method, r.matrix), []).append(r)
    out = []
    for (d, K, j, method, matrix), rs in groups.items():
        ok = [r for r in rs if not math.isnan(r.shd)]
        mean = (lambda a: float(np.mean([getattr(r, a) for r in ok])) if ok else math.nan)  # noqa: E731
        out.append({"d": d, "K": K, "j": j, "method": method, "matrix": matrix, "runs": len(ok),
                    "shd": mean("shd"), "tpr": mean("tpr"), "fdr": mean("fdr")})
    return out


# ---------------------------------------------------------------- config files

_TUPLE_INT = {"seeds", "d", "K", "j"}
_INT = {"p", "n", "n_k", "max_rounds", "baseline_max_iter", "realization_length"}
_FLOAT = {"intra_mean_degree", "inter_mean_out_degree", "eta", "noise_std", "tau_w", "tau_a", "truth_tau",
          "lambda_w", "lambda_a", "mu", "phi1", "phi2", "baseline_lambda"}
_BOOL = {"timing", "traces"}
_STR = {"scenario", "connectivity", "lambda_sweep"}


def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise IngestionError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in spec_keys():
            raise IngestionError(f"unknown config key {key!r}", line=lineno)
        out[key] = value
    return out


def spec_keys() -> set[str]:
    return {f.name for f in fields(ExperimentSpec)} | {"n_seeds", "seed"}


def spec_from_mapping(values: dict[str, str]) -> ExperimentSpec:
    """Build a spec from string values (config file merged with command-line overrides)."""
    kw: dict = {}
    for key, raw in values.items():
        if raw is None or key in ("n_seeds", "seed"):
            continue
        raw = str(raw).strip()
        if key == "methods":
            kw[key] = tuple(m.strip() for m in raw.split(",") if m.strip())
        elif key in _TUPLE_INT:
            kw[key] = _int_list(raw, key)
        elif key in _INT:
            kw[key] = None if raw.lower() == "none" else int(raw)
        elif key in _FLOAT:
            kw[key] = float(raw)
        elif key in _BOOL:
            kw[key] = raw.lower() in ("1", "true", "yes", "on")
        elif key in _STR:
            kw[key] = raw
        else:
            raise ValueError(f"unknown config key {key!r}")
    if "seeds" not in kw and ("seed" in values or "n_seeds" in values):
        start = int(values.get("seed") or 0)
        count = int(values.get("n_seeds") or 10)
        kw["seeds"] = tuple(range(start, start + count))
    return ExperimentSpec(**kw)


def _int_list(raw: str, key: str) -> tuple[int, ...]:
    """``"1,2,3"`` or an inclusive range ``"1..5"``."""
    try:
        if ".." in raw:
            lo, hi = raw.split("..", 1)
            return tuple(range(int(lo), int(hi) + 1))
        return tuple(int(x) for x in raw.split(",") if x.strip())
    except ValueError:
        raise ValueError(f"{key}: expected integers, got {raw!r}") from None


def spec_to_dict(spec: ExperimentSpec) -> dict:
    return asdict(spec)
