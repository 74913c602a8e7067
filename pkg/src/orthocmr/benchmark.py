"""Method-comparison grids: full factorial (method x n x seed) MSE runs.

Each cell generates a dataset, fits one estimator, and scores it against the
generator's ground truth — pointwise structural truth where the generator
records one, and the interventional curve (averaged bridge vs do-oracle) for
the proxy-variable generator.  Cells are independent; a failed cell is
recorded in the report rather than killing the grid.

All per-cell randomness derives from the run seed and the cell coordinates,
so execution order (or a worker pool) cannot change any number.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .config import ConfigError, atomic_write_json, config_hash, jsonify, require
from .crossfit import crossfit_nuisances
from .datasets import (
    Dataset,
    DemandIVParams,
    LinearToyParams,
    PCLDemandParams,
    SemiSyntheticParams,
    gen_demand_iv,
    gen_linear_toy,
    gen_pcl_demand,
    gen_semi_synthetic,
)
from .fit import FitConfig, build_structural, fit_ce_dml_cmr, fit_dml_cmr, fit_naive_two_stage
from .oracles import (
    TruthOracle,
    demand_truth_oracle,
    mse_vs_truth_both_units,
    pcl_a_grid,
    pcl_average_bridge,
    pcl_do_oracle,
    semi_synthetic_oracle,
    toy_truth_oracle,
)
from .rng import derive_seed, make_rng

METHOD_KINDS = ("dml-cmr", "naive", "ce-dml-cmr")

_GENERATORS = {
    "linear-toy": (LinearToyParams, gen_linear_toy),
    "demand-iv": (DemandIVParams, gen_demand_iv),
    "pcl-demand": (PCLDemandParams, gen_pcl_demand),
    "semi-synthetic": (SemiSyntheticParams, gen_semi_synthetic),
}

N_EVAL = 10_000


def make_dataset(generator: str, params: dict, n: int, seed: int) -> Dataset:
    if generator not in _GENERATORS:
        raise ConfigError(
            "dataset.generator",
            f"unknown generator {generator!r}; expected one of {sorted(_GENERATORS)}",
        )
    params_cls, gen = _GENERATORS[generator]
    try:
        p = params_cls(n=int(n), seed=int(seed), **dict(params))
    except TypeError as exc:
        raise ConfigError("dataset.params", str(exc)) from exc
    return gen(p)


def validate_method(spec: dict, where: str = "method") -> dict:
    spec = dict(spec)
    require(isinstance(spec.get("name"), str) and spec["name"], f"{where}.name", "required non-empty string")
    kind = spec.get("kind")
    require(kind in METHOD_KINDS, f"{where}.kind", f"unknown method kind {kind!r}; expected one of {METHOD_KINDS}")
    require(isinstance(spec.get("density"), dict), f"{where}.density", "required mapping")
    require(isinstance(spec.get("structural"), dict), f"{where}.structural", "required mapping")
    if kind != "naive":
        require(isinstance(spec.get("s"), dict), f"{where}.s", "required mapping for cross-fitted methods")
    fit_overrides = spec.get("fit", {})
    require(isinstance(fit_overrides, dict), f"{where}.fit", "must be a mapping of FitConfig overrides")
    return spec


def _fit_config(base: Optional[dict], overrides: dict, seed: int, where: str) -> FitConfig:
    merged = dict(base or {})
    merged.update(overrides)
    merged["seed"] = seed
    try:
        return FitConfig(**merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.fit", str(exc)) from exc


@dataclass
class BenchmarkReport:
    method: str
    generator: str
    params: dict
    n: int
    seeds: list
    mse: list
    median: float
    q25: float
    q75: float
    runtime_s: float
    config_hash: str
    mse_standardised: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mse:
            if any(v < 0 for v in self.mse):
                raise ValueError("mse: must be nonnegative")
            if not (self.q25 <= self.median <= self.q75):
                raise ValueError(
                    f"percentiles out of order: q25={self.q25}, median={self.median}, q75={self.q75}"
                )

    def to_report(self) -> dict:
        return jsonify(
            {
                "method": self.method,
                "generator": self.generator,
                "params": self.params,
                "n": self.n,
                "seeds": self.seeds,
                "mse": self.mse,
                "median": self.median,
                "q25": self.q25,
                "q75": self.q75,
                "runtime_s": self.runtime_s,
                "config_hash": self.config_hash,
                "mse_standardised": self.mse_standardised,
                "units_note": "mse is in original outcome units; mse_standardised divides by the fitted y-scale squared",
                "failures": self.failures,
                "meta": self.meta,
            }
        )


class _Evaluator:
    """Shared ground-truth machinery for one benchmark run (built once)."""

    def __init__(self, generator: str, params: dict, seed: int):
        self.generator = generator
        self.kind = "pcl" if generator == "pcl-demand" else "pointwise"
        eval_seed = derive_seed(seed, "bench-eval")
        if self.kind == "pcl":
            self.a_grid = pcl_a_grid(n_points=50, mc_n=100_000, seed=eval_seed)
            self.do_values, self.do_stderr = pcl_do_oracle(self.a_grid, mc_n=200_000, seed=eval_seed)
            self.w_seed = derive_seed(seed, "bench-eval-w")
        else:
            oracle_builders = {
                "linear-toy": lambda: toy_truth_oracle(float(params.get("theta0", 2.0))),
                "demand-iv": demand_truth_oracle,
                "semi-synthetic": semi_synthetic_oracle,
            }
            self.oracle: TruthOracle = oracle_builders[generator]()
            eval_data = make_dataset(generator, params, N_EVAL, eval_seed)
            x_eval = np.array(eval_data.x)
            # Counterfactual test measure: the endogenous column is redrawn
            # independently of the contexts, uniform across its central 95%
            # range.  A structural fit is scored on interventional queries,
            # not on the factual joint — on the joint, plain regression of y
            # on x would look unbeatable.
            dcol = eval_data.density_cols[0]
            lo, hi = np.percentile(x_eval[:, dcol], [2.5, 97.5])
            cf_rng = make_rng(derive_seed(eval_seed, "counterfactual-action"))
            x_eval[:, dcol] = cf_rng.uniform(lo, hi, size=x_eval.shape[0])
            self._x_eval = x_eval

    def _sampler(self, n_test: int) -> np.ndarray:
        return self._x_eval[:n_test]

    def score(self, fit) -> dict:
        if self.kind == "pcl":
            avg = pcl_average_bridge(fit.predict, self.a_grid, mc_n=20_000, seed=self.w_seed)
            original = float(np.mean((avg - self.do_values) ** 2))
            y_std = getattr(getattr(fit, "scaling", None), "y_std", 1.0)
            return {"original": original, "standardised": original / (y_std**2)}
        return mse_vs_truth_both_units(fit, self.oracle, self._sampler, N_EVAL)


def run_cell(
    method: dict,
    generator: str,
    params: dict,
    n: int,
    cell_seed: int,
    base_fit: Optional[dict],
    run_seed: int,
    evaluator: Optional[_Evaluator] = None,
) -> dict:
    """Fit one (method, n, seed) cell and score it. Returns a plain dict.

    ``evaluator`` is an optimisation for serial runs; worker processes pass
    None and rebuild it (it holds unpicklable oracle closures).
    """
    started = time.perf_counter()
    if evaluator is None:
        evaluator = _Evaluator(generator, params, run_seed)
    data_seed = derive_seed(run_seed, "bench-data", generator, int(n), int(cell_seed))
    fit_seed = derive_seed(run_seed, "bench-fit", method["name"], int(n), int(cell_seed))
    try:
        data = make_dataset(generator, params, n, data_seed)
        cfg = _fit_config(base_fit, method.get("fit", {}), fit_seed, f"methods[{method['name']}]")
        init = build_structural(method["structural"], seed=fit_seed)
        if method["kind"] == "dml-cmr":
            state = crossfit_nuisances(data, cfg, method["s"], method["density"])
            fitted = fit_dml_cmr(data, state, cfg, init)
        elif method["kind"] == "ce-dml-cmr":
            fitted = fit_ce_dml_cmr(data, cfg, init, method["s"], method["density"])
        else:
            fitted = fit_naive_two_stage(data, cfg, init, method["density"])
        if not fitted.audit.get("passed"):
            raise RuntimeError(f"fold/nuisance audit failed: {fitted.audit}")
        scores = evaluator.score(fitted)
        return {
            "seed": int(cell_seed),
            "mse": scores["original"],
            "mse_standardised": scores["standardised"],
            "runtime_s": time.perf_counter() - started,
        }
    except Exception as exc:  # cell failure is data, not a crash
        return {
            "seed": int(cell_seed),
            "error": f"{type(exc).__name__}: {exc}",
            "runtime_s": time.perf_counter() - started,
        }


def benchmark(
    methods: Sequence[dict],
    dataset: dict,
    n_grid: Sequence[int],
    seeds: Union[int, Sequence[int]] = 20,
    cfg: Optional[dict] = None,
    seed: int = 0,
    jobs: int = 1,
    run_hash: Optional[str] = None,
) -> list:
    """Run the full (method x n x seed) grid and aggregate per (method, n).

    ``seeds`` is either a replication count (expanded to range(count)) or an
    explicit list; repeated entries deterministically repeat their MSE.
    ``run_hash`` overrides the hash embedded in reports (the CLI passes its
    canonical config hash); by default it is derived from the arguments.
    """
    require(len(list(methods)) >= 1, "methods", "need at least one method")
    methods = [validate_method(m, f"methods[{i}]") for i, m in enumerate(methods)]
    names = [m["name"] for m in methods]
    require(len(set(names)) == len(names), "methods", f"duplicate method names: {names}")
    require(isinstance(dataset, dict) and "generator" in dataset, "dataset.generator", "required")
    generator = dataset["generator"]
    params = dict(dataset.get("params", {}))
    n_grid = [int(n) for n in n_grid]
    require(len(n_grid) >= 1, "n_grid", "need at least one sample size")
    seed_list = list(range(int(seeds))) if isinstance(seeds, int) else [int(s) for s in seeds]
    require(len(seed_list) >= 1, "seeds", "need at least one seed")

    hash_payload = {
        "methods": methods,
        "dataset": {"generator": generator, "params": params},
        "n_grid": n_grid,
        "seeds": seed_list,
        "cfg": dict(cfg or {}),
        "seed": int(seed),
    }
    run_hash = run_hash or config_hash(hash_payload)
    evaluator = _Evaluator(generator, params, seed)

    cells = [
        (method, n, s)
        for method in methods
        for n in n_grid
        for s in seed_list
    ]
    results = {}
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        import multiprocessing as mp

        with ProcessPoolExecutor(max_workers=jobs, mp_context=mp.get_context("spawn")) as pool:
            futures = {
                pool.submit(run_cell, m, generator, params, n, s, cfg, seed, None): (m["name"], n, s)
                for m, n, s in cells
            }
            for fut, key in futures.items():
                results[key] = fut.result()
    else:
        for m, n, s in cells:
            results[(m["name"], n, s)] = run_cell(m, generator, params, n, s, cfg, seed, evaluator)

    reports = []
    for method in methods:
        for n in n_grid:
            cell_results = [results[(method["name"], n, s)] for s in seed_list]
            ok = [r for r in cell_results if "mse" in r]
            mse = [r["mse"] for r in ok]
            q25, med, q75 = (
                np.percentile(mse, [25.0, 50.0, 75.0]) if mse else (float("nan"),) * 3
            )
            reports.append(
                BenchmarkReport(
                    method=method["name"],
                    generator=generator,
                    params=params,
                    n=n,
                    seeds=[r["seed"] for r in ok],
                    mse=mse,
                    median=float(med),
                    q25=float(q25),
                    q75=float(q75),
                    runtime_s=float(sum(r["runtime_s"] for r in cell_results)),
                    config_hash=run_hash,
                    mse_standardised=[r["mse_standardised"] for r in ok],
                    failures=[
                        {"seed": r["seed"], "error": r["error"]} for r in cell_results if "error" in r
                    ],
                    meta={"kind": method["kind"], "n_seeds": len(seed_list)},
                )
            )
    return reports


def reports_to_csv(reports: Sequence[BenchmarkReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", "n", "seed", "mse"])
    for report in reports:
        for s, v in zip(report.seeds, report.mse):
            writer.writerow([report.method, report.n, s, repr(float(v))])
    return buf.getvalue()


def write_benchmark_artifacts(
    reports: Sequence[BenchmarkReport],
    out_dir: Union[str, Path],
    plot: bool = False,
) -> dict:
    """Emit JSON + CSV (and optionally an SVG) named by the config hash."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run_hash = reports[0].config_hash if reports else "empty"
    paths = {
        "json": out_dir / f"benchmark-{run_hash}.json",
        "csv": out_dir / f"benchmark-{run_hash}.csv",
    }
    atomic_write_json(paths["json"], [r.to_report() for r in reports])
    from .config import atomic_write_text

    atomic_write_text(paths["csv"], reports_to_csv(reports))
    if plot:
        paths["plot"] = out_dir / f"benchmark-{run_hash}.svg"
        plot_benchmark(reports, paths["plot"])
    return {k: str(v) for k, v in paths.items()}


def plot_benchmark(reports: Sequence[BenchmarkReport], path: Union[str, Path]) -> None:
    """Median-with-interquartile-band curves, one line per method, vs n."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    by_method = {}
    for r in reports:
        by_method.setdefault(r.method, []).append(r)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for name, rs in sorted(by_method.items()):
        rs = sorted(rs, key=lambda r: r.n)
        ns = [r.n for r in rs]
        ax.plot(ns, [r.median for r in rs], marker="o", label=name)
        ax.fill_between(ns, [r.q25 for r in rs], [r.q75 for r in rs], alpha=0.25)
    ax.set_xlabel("n")
    ax.set_ylabel("MSE")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.legend()
    ax.set_title(f"config {reports[0].config_hash}" if reports else "benchmark")
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        fig.savefig(tmp, format="svg")
        os.replace(tmp, path)
    finally:
        plt.close(fig)
        if os.path.exists(tmp):
            os.unlink(tmp)
