"""Command-line entry point: ``feddbn generate | fit | experiment | evaluate``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from feddbn.baselines import DynotearsConfig, ave_baseline, dynotears_fit, per_client_fits
from feddbn.datagen import GenConfig, export_series, gen_truth, simulate_svar
from feddbn.dbn import WeightedDbn, load_csv, load_json, save_csv, save_json, threshold
from feddbn.errors import DimensionError, IngestionError, MetricError, NumericError
from feddbn.experiments import (
    emit_results,
    emit_trace,
    ingest_timeseries,
    parse_config_text,
    run_experiment,
    spec_from_mapping,
    spec_keys,
    summarize,
)
from feddbn.fdbnl import FdbnlConfig, run_fdbnl
from feddbn.metrics import auroc_aupr, combined_scores, evaluate, read_gold
from feddbn.pfdbnl import PfdbnlConfig, default_lambda, run_pfdbnl

logger = logging.getLogger("feddbn")


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="base random seed")
    parser.add_argument("--out-dir", default=".", help="directory for output files (created if missing)")
    parser.add_argument("--threads", type=int, default=1, help="worker processes / threads")
    parser.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="feddbn", description="Federated dynamic Bayesian network structure learning.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate a ground-truth DBN and time series")
    _common(g)
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--p", type=int, default=1)
    g.add_argument("--realizations", type=int, default=100, help="number of independent series")
    g.add_argument("--length", type=int, default=None, help="steps per series (default p+1)")
    g.add_argument("--intra-degree", type=float, default=4.0)
    g.add_argument("--inter-degree", type=float, default=1.0)
    g.add_argument("--eta", type=float, default=1.5)
    g.add_argument("--noise-std", type=float, default=1.0)
    g.add_argument("--clients", type=int, default=1,
                   help="with --heterogeneous, number of clients each with its own truth")
    g.add_argument("--heterogeneous", action="store_true")

    f = sub.add_parser("fit", help="learn a DBN from a series CSV")
    _common(f)
    f.add_argument("--series", required=True, help="CSV with columns realization,t,v0,...")
    f.add_argument("--method", choices=("fdbnl", "pfdbnl", "dynotears", "ave"), default="fdbnl")
    f.add_argument("--p", type=int, default=1)
    f.add_argument("--clients", default="1 per client",
                   help="'N per client', 'round-robin:K', 'explicit:0,1;2,3' or 'rows:K'")
    f.add_argument("--lambda-w", type=float, default=None)
    f.add_argument("--lambda-a", type=float, default=None)
    f.add_argument("--mu", type=float, default=0.1)
    f.add_argument("--participants", type=int, default=None, help="clients per round (pfdbnl)")
    f.add_argument("--phi1", type=float, default=1.6)
    f.add_argument("--phi2", type=float, default=1.1)
    f.add_argument("--max-rounds", type=int, default=200)
    f.add_argument("--tau", type=float, default=0.3, help="edge threshold for the reported graph")
    f.add_argument("--truth", default=None, help="truth JSON; when given, SHD/TPR/FDR are reported")

    e = sub.add_parser("experiment", help="run a scenario grid and write results.csv / results.json")
    _common(e)
    e.add_argument("--config", default=None, help="flat 'key = value' file")
    e.add_argument("--scenario", default=None)
    e.add_argument("--methods", default=None)
    e.add_argument("--n-seeds", type=int, default=None)
    e.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable)")
    e.add_argument("--timing", action="store_true", help="fill runtime_ms (makes output run-dependent)")
    e.add_argument("--traces", action="store_true", help="write per-run solver traces under traces/")

    v = sub.add_parser("evaluate", help="AUROC / AUPR of a learned model against a gold standard")
    _common(v)
    v.add_argument("--model", required=True, help="model JSON, or a directory holding W.csv and A.csv")
    v.add_argument("--gold", required=True, help="edge list 'G1 G2 1' or CSV matrix")
    v.add_argument("--keep-diagonal", action="store_true", help="score self-loops as well")
    return ap


# ---------------------------------------------------------------- subcommands


def cmd_generate(args) -> dict:
    out = Path(args.out_dir)
    seed = 0 if args.seed is None else args.seed
    cfg = GenConfig(d=args.d, p=args.p, intra_mean_degree=args.intra_degree,
                    inter_mean_out_degree=args.inter_degree, eta=args.eta,
                    noise_std=args.noise_std, seed=seed)
    length = args.p + 1 if args.length is None else args.length
    written = []
    if args.heterogeneous:
        children = np.random.SeedSequence(seed).spawn(args.clients)
        for k, child in enumerate(children):
            rng = np.random.default_rng(child)
            truth = gen_truth(cfg, rng)
            series = simulate_svar(truth, length - 1, args.realizations, cfg.noise_std, rng)
            written += _write_generated(out, truth, series, f"client{k}_")
    else:
        rng = np.random.default_rng(seed)
        truth = gen_truth(cfg, rng)
        series = simulate_svar(truth, length - 1, args.realizations, cfg.noise_std, rng)
        written += _write_generated(out, truth, series, "")
    return {"written": written}


def _write_generated(out: Path, truth: WeightedDbn, series, prefix: str) -> list[str]:
    export_series(series, out / f"{prefix}series.csv")
    save_json(truth, out / f"{prefix}truth.json")
    save_csv(truth, out, prefix=f"{prefix}truth_")
    return [str(out / f"{prefix}{name}") for name in ("series.csv", "truth.json", "truth_W.csv", "truth_A.csv")]


def cmd_fit(args) -> dict:
    out = Path(args.out_dir)
    data = ingest_timeseries(args.series, args.p, args.clients)
    d = data[0].d
    summary: dict = {"method": args.method, "clients": len(data), "d": d, "p": args.p}
    if args.method == "fdbnl":
        lw = 0.5 if args.lambda_w is None else args.lambda_w
        la = lw if args.lambda_a is None else args.lambda_a
        cfg = FdbnlConfig(lambda_w=lw, lambda_a=la, phi1=args.phi1, phi2=args.phi2,
                          max_rounds=args.max_rounds, workers=args.threads)
        res = run_fdbnl(data, cfg)
        emit_trace(res.trace, out / "trace.csv")
        models = [res.dbn]
        summary.update(converged=res.converged, rounds=len(res.trace), h=res.h)
    elif args.method == "pfdbnl":
        lw = default_lambda(d) if args.lambda_w is None else args.lambda_w
        la = lw if args.lambda_a is None else args.lambda_a
        cfg = PfdbnlConfig(lambda_w=lw, lambda_a=la, mu=args.mu, participants_per_round=args.participants,
                           phi1=args.phi1, phi2=args.phi2, max_rounds=args.max_rounds, workers=args.threads)
        res = run_pfdbnl(data, cfg, seed=0 if args.seed is None else args.seed)
        emit_trace(res.trace, out / "trace.csv")
        save_json(res.global_dbn, out / "global.json")
        models = res.personal
        summary.update(converged=res.converged, rounds=len(res.trace))
    else:
        lw = 0.05 if args.lambda_w is None else args.lambda_w
        la = lw if args.lambda_a is None else args.lambda_a
        dcfg = DynotearsConfig(lambda_w=lw, lambda_a=la)
        if args.method == "dynotears":
            X_t = np.vstack([ds.X_t for ds in data])
            X_lag = np.vstack([ds.X_lag for ds in data])
            models = [dynotears_fit(X_t, X_lag, dcfg)]
        else:
            models = [ave_baseline(per_client_fits(data, dcfg), args.tau)[1]]

    if len(models) == 1:
        save_json(models[0], out / "model.json")
        save_csv(models[0], out)
    else:
        for k, m in enumerate(models):
            save_json(m, out / f"client{k}_model.json")
            save_csv(m, out, prefix=f"client{k}_")
    if args.truth:
        truth = threshold(load_json(args.truth), 0.0, 0.0)
        reports = [evaluate(threshold(m, args.tau, args.tau), truth) for m in models]
        summary["metrics"] = [{"shd": r.shd, "tpr": r.tpr, "fdr": r.fdr} for r in reports]
    return summary


def cmd_experiment(args) -> dict:
    values: dict[str, str] = {}
    if args.config:
        values.update(parse_config_text(Path(args.config).read_text()))
    for item in args.set:
        if "=" not in item:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        if key not in spec_keys():
            raise ValueError(f"unknown key {key!r}")
        values[key] = value
    if args.scenario:
        values["scenario"] = args.scenario
    if args.methods:
        values["methods"] = args.methods
    if args.seed is not None:
        values["seed"] = str(args.seed)
        values.pop("seeds", None)
    if args.n_seeds is not None:
        values["n_seeds"] = str(args.n_seeds)
        values.pop("seeds", None)
    if args.timing:
        values["timing"] = "true"
    if args.traces:
        values["traces"] = "true"
    if "scenario" not in values:
        raise ValueError("no scenario given (use --scenario or a config file)")
    spec = spec_from_mapping(values)
    out = Path(args.out_dir)
    trace_dir = out / "traces" if spec.traces else None
    rows = run_experiment(spec, workers=args.threads, trace_dir=trace_dir)
    csv_path, json_path = emit_results(rows, out / "results.csv")
    failed = sum(1 for r in rows if r.shd != r.shd) // 2
    return {"results": str(csv_path), "json": str(json_path), "rows": len(rows),
            "failed_runs": failed, "summary": summarize(rows)}


def cmd_evaluate(args) -> dict:
    path = Path(args.model)
    model = load_csv(path) if path.is_dir() else load_json(path)
    gold = read_gold(args.gold, d=model.d)
    auroc, aupr = auroc_aupr(combined_scores(model), gold, mask_diagonal=not args.keep_diagonal)
    result = {"auroc": auroc, "aupr": aupr, "d": model.d}
    (Path(args.out_dir) / "evaluation.json").write_text(json.dumps(result, indent=1) + "\n")
    return result


COMMANDS = {"generate": cmd_generate, "fit": cmd_fit, "experiment": cmd_experiment, "evaluate": cmd_evaluate}

# exit codes by failure class
_EXIT = {IngestionError: 3, DimensionError: 4, NumericError: 5, MetricError: 6, FileNotFoundError: 7}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        result = COMMANDS[args.command](args)
    except Exception as exc:
        code = next((c for t, c in _EXIT.items() if isinstance(exc, t)), 2 if isinstance(exc, ValueError) else 1)
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}), file=sys.stderr)
        if args.verbose:
            logger.exception("command failed")
        return code
    print(json.dumps(result, indent=1, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
