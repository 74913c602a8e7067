"""Convergence-rate diagnostics on the linear-Gaussian toy.

Three studies:

* ``rate_study`` — how fast theta_hat approaches theta0 as n grows; the
  log-log slope should sit near -1/2.
* ``nuisance_rate_study`` — how fast a first-stage regressor approaches the
  true outcome regression; flags PASS when the slope beats -1/4, the
  threshold under which nuisance error stops contaminating the second stage.
* ``debias_study`` — injects a noise-correlated corruption of magnitude b
  into otherwise-exact nuisances and fits both the orthogonal and the naive
  objective.  First-order insensitivity shows up as error ~ b^2 for the
  orthogonal fit versus ~ b for the naive one.

The injected corruption is deliberately of the overfitting kind — each
training row's nuisance value is pulled toward that row's own realised noise
(s towards y_i, the conditional mean towards a_i).  A deterministic shift
would be a mean-zero direction for *both* losses and separate nothing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .crossfit import CrossFitState, build_regressor
from .datasets import LinearToyParams, gen_linear_toy
from .fit import FitConfig, LinearInBasis, fit_dml_cmr, fit_with_state
from .folds import make_fold_plan
from .problems import toy_exact_nuisances
from .rng import derive_seed, make_rng
from .score import NuisancePair


@dataclass
class RateStudyResult:
    n_grid: list
    per_n_errors: dict  # n -> list of per-seed errors
    rms: list
    slope: float
    slope_ci: tuple
    intercept: float
    flag: Optional[str] = None  # PASS/FAIL for nuisance studies
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ns = list(self.n_grid)
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("n_grid: must be strictly increasing")
        if not math.isfinite(self.slope):
            raise ValueError("slope: non-finite")

    def to_report(self) -> dict:
        return {
            "n_grid": [int(n) for n in self.n_grid],
            "rms": [float(v) for v in self.rms],
            "per_n_errors": {str(n): [float(e) for e in errs] for n, errs in self.per_n_errors.items()},
            "slope": float(self.slope),
            "slope_ci": [float(self.slope_ci[0]), float(self.slope_ci[1])],
            "intercept": float(self.intercept),
            "flag": self.flag,
            "meta": dict(self.meta),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_report(), indent=2, sort_keys=True)


def _check_grid(n_grid: Sequence[int], min_octaves: Optional[float] = None):
    ns = [int(n) for n in n_grid]
    if len(ns) < 3:
        raise ValueError(f"n_grid: need at least 3 points, got {len(ns)}")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("n_grid: must be strictly increasing")
    if min_octaves is not None and math.log2(ns[-1] / ns[0]) < min_octaves - 1e-9:
        raise ValueError(
            f"n_grid: must span at least {min_octaves} octaves, got {math.log2(ns[-1] / ns[0]):.2f}"
        )
    return ns


def _loglog_fit(ns, rms):
    slope, intercept = np.polyfit(np.log(np.asarray(ns, dtype=float)), np.log(np.asarray(rms)), 1)
    return float(slope), float(intercept)


def _bootstrap_slope_ci(ns, per_n_errors, seed, n_boot: int = 500):
    rng = make_rng(seed, "rate-bootstrap")
    slopes = np.empty(n_boot)
    for b in range(n_boot):
        rms = []
        for n in ns:
            errs = np.asarray(per_n_errors[n])
            pick = rng.integers(0, len(errs), size=len(errs))
            rms.append(math.sqrt(float(np.mean(errs[pick] ** 2))))
        slopes[b] = _loglog_fit(ns, rms)[0]
    lo, hi = np.percentile(slopes, [2.5, 97.5])
    return (float(lo), float(hi))


def _toy_linear_init() -> LinearInBasis:
    from .basis import build_basis

    return LinearInBasis(basis=build_basis({"kind": "polynomial", "degree": 1, "include_bias": False}))


def exact_toy_state(data, k_folds: int, seed: int) -> CrossFitState:
    """A cross-fit state whose nuisances are the toy's closed forms."""
    plan = make_fold_plan(data.n, k_folds, seed)
    s0, density = toy_exact_nuisances()
    pairs = [NuisancePair(s=s0, density=density, shared=(), d_x=1) for _ in range(plan.k)]
    return CrossFitState(
        fold_plan=plan,
        nuisances=pairs,
        train_indices=[plan.complement(k) for k in range(plan.k)],
        n_fits=0,
        meta={"exact": True},
    )


TOY_S_SPEC = {"kind": "ridge-on-basis", "basis": {"kind": "polynomial", "degree": 1}}
TOY_DENSITY_SPEC = {
    "kind": "gaussian-ridge",
    "basis": {"kind": "polynomial", "degree": 1},
    "antithetic": True,
}


def rate_study(
    n_grid: Sequence[int] = (500, 1000, 2000, 4000, 8000),
    n_seeds: int = 20,
    seed: int = 0,
    k_folds: int = 2,
    exact_nuisances: bool = False,
    theta0: float = 2.0,
) -> RateStudyResult:
    """RMS of |theta_hat - theta0| per n, with the fitted log-log slope.

    Fitted-nuisance arm: parametric first stage (ridge mean, antithetic
    Gaussian draws), so the measured rate is the nuisance-driven one.  The
    exact-nuisance arm replaces both nuisances by their closed forms; its only
    error is Monte Carlo attenuation from the inner draws, so the draw count
    is scheduled as ~ 8 sqrt(n) to keep that error on the same N^{-1/2}
    envelope instead of flooring the curve.
    """
    from .crossfit import crossfit_nuisances

    ns = _check_grid(n_grid, min_octaves=4.0)
    per_n_errors = {n: [] for n in ns}
    for n in ns:
        for rep in range(n_seeds):
            cell_seed = derive_seed(seed, "rate-cell", n, rep)
            data = gen_linear_toy(LinearToyParams(n=n, seed=cell_seed, theta0=theta0))
            if exact_nuisances:
                mc = max(16, int(math.ceil(8.0 * math.sqrt(n))))
                cfg = FitConfig(
                    k_folds=k_folds, mc_draws=mc, solver="closed-form",
                    standardise=False, seed=cell_seed,
                )
                state = exact_toy_state(data, k_folds, cell_seed)
            else:
                cfg = FitConfig(
                    k_folds=k_folds, mc_draws=16, solver="closed-form",
                    standardise=False, seed=cell_seed,
                )
                state = crossfit_nuisances(data, cfg, TOY_S_SPEC, TOY_DENSITY_SPEC)
            fit = fit_dml_cmr(data, state, cfg, _toy_linear_init())
            err = float(np.linalg.norm(fit.theta() - np.array([theta0])))
            per_n_errors[n].append(err)
    rms = [math.sqrt(float(np.mean(np.asarray(per_n_errors[n]) ** 2))) for n in ns]
    slope, intercept = _loglog_fit(ns, rms)
    ci = _bootstrap_slope_ci(ns, per_n_errors, seed)
    return RateStudyResult(
        n_grid=ns,
        per_n_errors=per_n_errors,
        rms=rms,
        slope=slope,
        slope_ci=ci,
        intercept=intercept,
        meta={"exact_nuisances": exact_nuisances, "n_seeds": n_seeds, "k_folds": k_folds, "seed": seed},
    )


def nuisance_rate_study(
    s_spec: dict,
    n_grid: Sequence[int] = (500, 1000, 2000, 4000, 8000),
    n_seeds: int = 10,
    seed: int = 0,
    n_eval: int = 4000,
    theta0: float = 2.0,
) -> RateStudyResult:
    """L2 error of a fitted outcome regression against the toy's exact s0.

    Flagged PASS when the log-log slope beats -0.25 (the o(N^{-1/4})
    requirement on nuisance rates), FAIL otherwise.
    """
    ns = _check_grid(n_grid)
    per_n_errors = {n: [] for n in ns}
    for n in ns:
        for rep in range(n_seeds):
            cell_seed = derive_seed(seed, "nuisance-rate", n, rep)
            data = gen_linear_toy(LinearToyParams(n=n, seed=cell_seed, theta0=theta0))
            reg = build_regressor(s_spec, seed=cell_seed)
            reg.fit(data.c, data.y)
            z_eval = make_rng(cell_seed, "nuisance-eval").standard_normal(n_eval)
            err2 = np.mean((reg.predict(z_eval.reshape(-1, 1)) - theta0 * z_eval) ** 2)
            per_n_errors[n].append(math.sqrt(float(err2)))
    rms = [math.sqrt(float(np.mean(np.asarray(per_n_errors[n]) ** 2))) for n in ns]
    slope, intercept = _loglog_fit(ns, rms)
    ci = _bootstrap_slope_ci(ns, per_n_errors, seed)
    return RateStudyResult(
        n_grid=ns,
        per_n_errors=per_n_errors,
        rms=rms,
        slope=slope,
        slope_ci=ci,
        intercept=intercept,
        flag="PASS" if slope < -0.25 else "FAIL",
        meta={"s_spec": dict(s_spec), "n_seeds": n_seeds, "seed": seed},
    )


class RowLookupRegressor:
    """Nuisance stub returning a precomputed value per known conditioning row."""

    kind = "row-lookup"

    def __init__(self, c: np.ndarray, values: np.ndarray):
        c = np.ascontiguousarray(np.atleast_2d(np.asarray(c, dtype=float)))
        values = np.asarray(values, dtype=float).reshape(-1)
        self._map = {c[i].tobytes(): values[i] for i in range(c.shape[0])}

    def lookup(self, c) -> np.ndarray:
        c = np.ascontiguousarray(np.atleast_2d(np.asarray(c, dtype=float)))
        try:
            return np.array([self._map[c[i].tobytes()] for i in range(c.shape[0])])
        except KeyError:
            raise ValueError("row-lookup nuisance queried at an unknown row") from None

    def predict(self, c) -> np.ndarray:
        return self.lookup(c)


class RowLookupPointDensity(RowLookupRegressor):
    """Degenerate conditional density: point mass at a stored per-row mean.

    Keeps the injected bias in the conditional mean while removing inner-MC
    noise, so the injection study measures exactly the bias response.
    """

    def conditional_mean(self, c) -> np.ndarray:
        return self.lookup(c)

    def sample(self, c, n_draws: int, seed: int) -> np.ndarray:
        return np.tile(self.lookup(c)[:, None], (1, n_draws))


@dataclass
class DebiasStudyResult:
    b_grid: list
    rms: dict  # method -> per-b RMS error
    slopes: dict  # method -> fitted log-log slope of error vs b
    per_cell: dict
    meta: dict = field(default_factory=dict)

    def to_report(self) -> dict:
        return {
            "b_grid": [float(b) for b in self.b_grid],
            "rms": {m: [float(v) for v in vs] for m, vs in self.rms.items()},
            "slopes": {m: float(v) for m, v in self.slopes.items()},
            "meta": dict(self.meta),
        }


def _injected_state(data, b: float, k_folds: int, seed: int, naive: bool) -> CrossFitState:
    """Exact nuisances corrupted toward each row's own noise, magnitude b."""
    z = data.c[:, 0]
    a = data.x[:, 0]
    theta0 = data.truth["params"]["theta0"]
    s_inj = theta0 * z + b * (data.y - theta0 * z)
    mu_inj = z + b * (a - z)
    density = RowLookupPointDensity(data.c, mu_inj)
    s = None if naive else RowLookupRegressor(data.c, s_inj)
    if naive:
        all_rows = np.arange(data.n)
        from .folds import FoldPlan

        plan = FoldPlan(n=data.n, k=1, seed=seed, folds=(all_rows,))
        return CrossFitState(
            fold_plan=plan,
            nuisances=[NuisancePair(s=None, density=density, shared=(), d_x=1)],
            train_indices=[all_rows],
            n_fits=0,
            meta={"full_sample": True, "injected_b": b},
        )
    plan = make_fold_plan(data.n, k_folds, seed)
    pairs = [NuisancePair(s=s, density=density, shared=(), d_x=1) for _ in range(plan.k)]
    return CrossFitState(
        fold_plan=plan,
        nuisances=pairs,
        train_indices=[plan.complement(k) for k in range(plan.k)],
        n_fits=0,
        meta={"injected_b": b},
    )


def debias_study(
    b_grid: Sequence[float] = (0.1, 0.2, 0.4),
    n_seeds: int = 20,
    n: int = 50_000,
    seed: int = 0,
    k_folds: int = 2,
    theta0: float = 2.0,
) -> DebiasStudyResult:
    """Error growth of orthogonal vs naive fits under injected nuisance bias.

    The corruption pulls each row's nuisance toward the row's realised noise:
    s_b(z_i) = s0(z_i) + b (y_i - s0(z_i)) and mean_b(z_i) = z_i + b (a_i -
    z_i).  The orthogonal objective's response is second order in b while the
    naive one's is first order, so the fitted log-log slopes separate.
    """
    bs = [float(b) for b in b_grid]
    if any(b <= 0 for b in bs) or any(y <= x for x, y in zip(bs, bs[1:])):
        raise ValueError("b_grid: must be positive and strictly increasing")
    per_cell = {"dml": {b: [] for b in bs}, "naive": {b: [] for b in bs}}
    for rep in range(n_seeds):
        data_seed = derive_seed(seed, "debias-data", rep)
        data = gen_linear_toy(LinearToyParams(n=n, seed=data_seed, theta0=theta0))
        for b in bs:
            cfg = FitConfig(
                k_folds=k_folds, mc_draws=1, solver="closed-form",
                standardise=False, seed=derive_seed(seed, "debias-fit", rep),
            )
            dml_state = _injected_state(data, b, k_folds, cfg.seed, naive=False)
            fit_o = fit_with_state(data, dml_state, cfg, _toy_linear_init())
            per_cell["dml"][b].append(abs(float(fit_o.theta()[0]) - theta0))
            naive_state = _injected_state(data, b, k_folds, cfg.seed, naive=True)
            fit_n = fit_with_state(data, naive_state, _with_naive(cfg), _toy_linear_init())
            per_cell["naive"][b].append(abs(float(fit_n.theta()[0]) - theta0))
    rms = {
        m: [math.sqrt(float(np.mean(np.asarray(per_cell[m][b]) ** 2))) for b in bs]
        for m in ("dml", "naive")
    }
    slopes = {m: float(np.polyfit(np.log(bs), np.log(rms[m]), 1)[0]) for m in ("dml", "naive")}
    return DebiasStudyResult(
        b_grid=bs,
        rms=rms,
        slopes=slopes,
        per_cell={m: {str(b): v for b, v in d.items()} for m, d in per_cell.items()},
        meta={"n": n, "n_seeds": n_seeds, "k_folds": k_folds, "seed": seed},
    )


def _with_naive(cfg: FitConfig) -> FitConfig:
    payload = cfg.to_dict()
    payload["score"] = "naive"
    return FitConfig(**payload)
