"""Command-line entry point.

Subcommands: gen, fit, bench, ortho-check, rate, nu.  Each reads a YAML (or
JSON) config plus a handful of overriding flags, derives a 12-hex config hash
from the scientific part of the configuration (command, dataset, methods,
seed — not output paths or worker counts), and writes artifacts whose
filenames and contents embed that hash.  Writes are atomic
(temp-file-then-rename).

Exit codes: 0 success, 1 runtime failure, 2 invalid configuration.  Failures
print a machine-readable JSON report to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Optional

from .config import ConfigError, atomic_write_json, config_hash, jsonify, load_config, require

_COMMANDS = ("gen", "fit", "bench", "ortho-check", "rate", "nu")


def _parse(argv):
    parser = argparse.ArgumentParser(
        prog="orthocmr",
        description="Orthogonal conditional-moment estimation: data generation, fitting, benchmarking, diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "gen": "generate a synthetic dataset (CSV + meta JSON)",
        "fit": "fit one estimator on a dataset and serialise the result",
        "bench": "run a (method x n x seed) benchmark grid",
        "ortho-check": "numerical orthogonality certificate on the analytic toys",
        "rate": "convergence-rate study (estimator or nuisance)",
        "nu": "ill-posedness estimate of a linear function family",
    }
    for name in _COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", type=str, default=None, help="YAML/JSON config file")
        p.add_argument("--out", type=str, default=None, help="output directory (default: artifacts)")
        p.add_argument("--seed", type=int, default=None, help="global seed; overrides the config value")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for grid commands")
        p.add_argument(
            "--dry-run",
            action="store_true",
            help="validate the configuration and print the config hash without side effects",
        )
    return parser.parse_args(argv)


def _hash_payload(command: str, cfg: dict) -> dict:
    payload = {k: v for k, v in cfg.items() if k not in ("out", "jobs")}
    payload["command"] = command
    return payload


def _emit(payload: dict, stream=None) -> None:
    print(json.dumps(jsonify(payload), sort_keys=True), file=stream or sys.stdout)


def _dataset_section(cfg: dict, need_n: bool = True) -> dict:
    ds = cfg.get("dataset")
    require(isinstance(ds, dict), "dataset", "required mapping")
    if "csv" in ds:
        require(Path(ds["csv"]).exists(), "dataset.csv", f"file not found: {ds['csv']}")
        return ds
    require(isinstance(ds.get("generator"), str), "dataset.generator", "required")
    from .benchmark import _GENERATORS

    require(
        ds["generator"] in _GENERATORS,
        "dataset.generator",
        f"unknown generator {ds['generator']!r}; expected one of {sorted(_GENERATORS)}",
    )
    if need_n:
        require(int(ds.get("n", 0)) >= 1, "dataset.n", "required positive sample size")
    params = ds.get("params", {})
    require(isinstance(params, dict), "dataset.params", "must be a mapping")
    return ds


def _load_dataset(ds: dict, seed: int):
    if "csv" in ds:
        from .datasets import ingest_csv

        return ingest_csv(ds["csv"])
    from .benchmark import make_dataset

    return make_dataset(ds["generator"], ds.get("params", {}), int(ds["n"]), seed)


# ---------------------------------------------------------------- handlers


def _validate_gen(cfg):
    _dataset_section(cfg)


def _run_gen(cfg, out_dir: Path, jobs: int, run_hash: str, seed: int) -> dict:
    from .datasets import write_csv

    data = _load_dataset(cfg["dataset"], seed)
    csv_path = out_dir / f"dataset-{run_hash}.csv"
    out_dir.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=f".{csv_path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        write_csv(data, tmp)
        os.replace(tmp, csv_path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    meta_path = out_dir / f"dataset-{run_hash}.meta.json"
    atomic_write_json(
        meta_path,
        {
            "config_hash": run_hash,
            "n": data.n,
            "x_names": data.x_names,
            "c_names": data.c_names,
            "shared": data.shared,
            "meta": data.meta,
            "truth_params": (data.truth or {}).get("params"),
        },
    )
    return {"csv": str(csv_path), "meta": str(meta_path)}


def _validate_fit(cfg):
    _dataset_section(cfg)
    from .benchmark import validate_method

    method = dict(cfg.get("method") or {})
    require(bool(method), "method", "required mapping")
    method.setdefault("name", "model")
    validate_method(method, "method")
    from .fit import FitConfig

    try:
        FitConfig(**{**cfg.get("fit", {}), **method.get("fit", {}), "seed": 0})
    except (TypeError, ValueError) as exc:
        raise ConfigError("fit", str(exc)) from exc


def _run_fit(cfg, out_dir: Path, jobs: int, run_hash: str, seed: int) -> dict:
    from .benchmark import _fit_config
    from .crossfit import crossfit_nuisances
    from .fit import build_structural, fit_ce_dml_cmr, fit_dml_cmr, fit_naive_two_stage

    data = _load_dataset(cfg["dataset"], seed)
    method = dict(cfg["method"])
    method.setdefault("name", "model")
    fit_cfg = _fit_config(cfg.get("fit"), method.get("fit", {}), seed, "method")
    init = build_structural(method["structural"], seed=seed)
    if method["kind"] == "dml-cmr":
        state = crossfit_nuisances(data, fit_cfg, method["s"], method["density"])
        fitted = fit_dml_cmr(data, state, fit_cfg, init)
    elif method["kind"] == "ce-dml-cmr":
        fitted = fit_ce_dml_cmr(data, fit_cfg, init, method["s"], method["density"])
    else:
        fitted = fit_naive_two_stage(data, fit_cfg, init, method["density"])
    path = out_dir / f"fit-{run_hash}.json"
    atomic_write_json(
        path,
        {
            "config_hash": run_hash,
            "method": method["name"],
            "kind": method["kind"],
            "objective": fitted.trajectory[-1],
            "audit": fitted.audit,
            "fit": fitted.to_dict(),
        },
    )
    return {"fit": str(path)}


def _validate_bench(cfg):
    _dataset_section(cfg, need_n=False)
    require("csv" not in cfg.get("dataset", {}), "dataset", "bench requires a generator, not a csv")
    bench = cfg.get("bench")
    require(isinstance(bench, dict), "bench", "required mapping")
    from .benchmark import validate_method

    methods = bench.get("methods")
    require(isinstance(methods, list) and methods, "bench.methods", "required non-empty list")
    for i, m in enumerate(methods):
        validate_method(m, f"bench.methods[{i}]")
    n_grid = bench.get("n_grid")
    require(isinstance(n_grid, list) and n_grid, "bench.n_grid", "required non-empty list")
    seeds = bench.get("seeds", 20)
    require(
        isinstance(seeds, int) or (isinstance(seeds, list) and seeds),
        "bench.seeds",
        "must be a count or a non-empty list",
    )


def _run_bench(cfg, out_dir: Path, jobs: int, run_hash: str, seed: int) -> dict:
    from .benchmark import benchmark, write_benchmark_artifacts

    bench = cfg["bench"]
    reports = benchmark(
        methods=bench["methods"],
        dataset=cfg["dataset"],
        n_grid=bench["n_grid"],
        seeds=bench.get("seeds", 20),
        cfg=cfg.get("fit"),
        seed=seed,
        jobs=jobs,
        run_hash=run_hash,
    )
    paths = write_benchmark_artifacts(reports, out_dir, plot=bool(bench.get("plot", False)))
    failures = [
        {"method": r.method, "n": r.n, **f} for r in reports for f in r.failures
    ]
    if failures:
        raise _BenchCellFailure(failures, paths)
    return paths


class _BenchCellFailure(RuntimeError):
    def __init__(self, failures, paths):
        self.failures = failures
        self.paths = paths
        super().__init__(f"{len(failures)} benchmark cell(s) failed")


def _validate_ortho(cfg):
    ortho = cfg.get("ortho", {})
    require(isinstance(ortho, dict), "ortho", "must be a mapping")
    require(int(ortho.get("mc_n", 1_000_000)) >= 1000, "ortho.mc_n", "must be >= 1000")


def _run_ortho(cfg, out_dir: Path, jobs: int, run_hash: str, seed: int) -> dict:
    from .problems import confounded_linear_gaussian_toy, linear_gaussian_toy
    from .score import ScoreKind, gateaux_derivative, standard_directions

    ortho = cfg.get("ortho", {})
    mc_n = int(ortho.get("mc_n", 1_000_000))
    n_boot = int(ortho.get("n_boot", 200))
    valid, confounded = linear_gaussian_toy(), confounded_linear_gaussian_toy()
    ortho_checks = [
        gateaux_derivative(ScoreKind("orthogonal"), valid, d, mc_n=mc_n, seed=seed, n_boot=n_boot)
        for d in standard_directions()
    ]
    linear_dir = standard_directions()[1]  # dg(c) = c, the confounded direction
    naive_checks = [
        gateaux_derivative(ScoreKind("naive"), confounded, linear_dir, mc_n=mc_n, seed=seed, n_boot=n_boot)
    ]
    verdicts = {
        "orthogonal": "pass" if all(e.verdict == "orthogonal" for e in ortho_checks) else "fail",
        "naive": "fail" if all(e.verdict == "not-orthogonal" for e in naive_checks) else "pass",
    }
    path = out_dir / f"ortho-{run_hash}.json"
    atomic_write_json(
        path,
        {
            "config_hash": run_hash,
            "mc_n": mc_n,
            "verdicts": verdicts,
            "checks": {
                "orthogonal": [e.to_report() for e in ortho_checks],
                "naive": [e.to_report() for e in naive_checks],
            },
        },
    )
    return {"ortho": str(path)}


def _validate_rate(cfg):
    rate = cfg.get("rate", {})
    require(isinstance(rate, dict), "rate", "must be a mapping")
    target = rate.get("target", "estimator")
    require(target in ("estimator", "nuisance"), "rate.target", f"expected estimator|nuisance, got {target!r}")
    if target == "nuisance":
        require(isinstance(rate.get("s"), dict), "rate.s", "required estimator spec for nuisance studies")
    n_grid = rate.get("n_grid", [500, 1000, 2000, 4000, 8000])
    require(isinstance(n_grid, list) and len(n_grid) >= 3, "rate.n_grid", "need at least 3 sample sizes")


def _run_rate(cfg, out_dir: Path, jobs: int, run_hash: str, seed: int) -> dict:
    from .rates import nuisance_rate_study, rate_study

    rate = cfg.get("rate", {})
    n_grid = rate.get("n_grid", [500, 1000, 2000, 4000, 8000])
    n_seeds = int(rate.get("n_seeds", 20))
    if rate.get("target", "estimator") == "nuisance":
        result = nuisance_rate_study(rate["s"], n_grid=n_grid, n_seeds=n_seeds, seed=seed)
    else:
        result = rate_study(
            n_grid=n_grid,
            n_seeds=n_seeds,
            seed=seed,
            k_folds=int(rate.get("k_folds", 2)),
            exact_nuisances=bool(rate.get("exact_nuisances", False)),
        )
    path = out_dir / f"rate-{run_hash}.json"
    atomic_write_json(path, {"config_hash": run_hash, **result.to_report()})
    return {"rate": str(path)}


def _validate_nu(cfg):
    nu = cfg.get("nu", {})
    require(isinstance(nu, dict), "nu", "must be a mapping")
    problem = nu.get("problem", "linear-toy")
    require(problem in ("linear-toy", "demand"), "nu.problem", f"expected linear-toy|demand, got {problem!r}")
    require(int(nu.get("theta_samples", 200)) >= 100, "nu.theta_samples", "need at least 100")


def _run_nu(cfg, out_dir: Path, jobs: int, run_hash: str, seed: int) -> dict:
    from .illposedness import (
        demand_identification_problem,
        ill_posedness_estimate,
        toy_identification_problem,
    )

    nu = cfg.get("nu", {})
    iv = float(nu.get("iv_strength", 1.0))
    if nu.get("problem", "linear-toy") == "demand":
        problem = demand_identification_problem(iv_strength=iv)
    else:
        problem = toy_identification_problem(iv_strength=iv)
    est = ill_posedness_estimate(
        problem,
        theta_samples=int(nu.get("theta_samples", 200)),
        mc_n=int(nu.get("mc_n", 100_000)),
        seed=seed,
        inner_draws=int(nu.get("inner_draws", 8)),
    )
    path = out_dir / f"nu-{run_hash}.json"
    atomic_write_json(path, {"config_hash": run_hash, **est.to_report()})
    return {"nu": str(path)}


_HANDLERS = {
    "gen": (_validate_gen, _run_gen),
    "fit": (_validate_fit, _run_fit),
    "bench": (_validate_bench, _run_bench),
    "ortho-check": (_validate_ortho, _run_ortho),
    "rate": (_validate_rate, _run_rate),
    "nu": (_validate_nu, _run_nu),
}


def main(argv=None) -> int:
    args = _parse(argv)
    try:
        cfg = load_config(args.config) if args.config else {}
        if args.seed is not None:
            cfg["seed"] = int(args.seed)
        require(
            "seed" in cfg,
            "seed",
            "required: pass --seed or set it in the config (randomness is never implicit)",
        )
        seed = int(cfg["seed"])
        out_dir = Path(args.out or cfg.get("out", "artifacts"))
        jobs = int(args.jobs if args.jobs is not None else cfg.get("jobs", 1))
        require(jobs >= 1, "jobs", f"must be >= 1, got {jobs}")
        validate, run = _HANDLERS[args.command]
        validate(cfg)
        run_hash = config_hash(_hash_payload(args.command, cfg))
        if args.dry_run:
            _emit({"status": "ok", "command": args.command, "config_hash": run_hash, "dry_run": True})
            return 0
        artifacts = run(cfg, out_dir, jobs, run_hash, seed)
    except ConfigError as exc:
        _emit({"error": "config", "field": exc.field, "message": str(exc)}, stream=sys.stderr)
        return 2
    except _BenchCellFailure as exc:
        _emit(
            {"error": "runtime", "message": str(exc), "failures": exc.failures, "artifacts": exc.paths},
            stream=sys.stderr,
        )
        return 1
    except Exception as exc:
        _emit({"error": "runtime", "type": type(exc).__name__, "message": str(exc)}, stream=sys.stderr)
        return 1
    _emit({"status": "ok", "command": args.command, "config_hash": run_hash, "artifacts": artifacts})
    return 0


if __name__ == "__main__":
    sys.exit(main())
