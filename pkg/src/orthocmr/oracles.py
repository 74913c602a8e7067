"""Ground-truth oracles and error measurement against them.

Analytic oracles evaluate the generator's structural function in closed form;
the proxy-variable problem additionally gets a Monte Carlo interventional
oracle (E[Y | do(A=a)]) and the exact bridge function the moment restriction
identifies, so fitted bridges can be scored at both levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .datasets import (
    demand_structural_truth,
    semi_synthetic_truth,
    time_effect_curve,
)
from .rng import make_rng


@dataclass
class TruthOracle:
    """A deterministic evaluator of the true structural function."""

    kind: str  # "analytic-f0" | "mc-do-intervention"
    fn: Callable[[np.ndarray], np.ndarray]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("analytic-f0", "mc-do-intervention"):
            raise ValueError(f"kind: unknown oracle kind {self.kind!r}")

    def eval(self, x) -> np.ndarray:
        out = np.asarray(self.fn(np.atleast_2d(np.asarray(x, dtype=float))), dtype=float).reshape(-1)
        if not np.all(np.isfinite(out)):
            raise ValueError("oracle produced non-finite values")
        return out


def toy_truth_oracle(theta0: float = 2.0) -> TruthOracle:
    return TruthOracle("analytic-f0", lambda x: theta0 * x[:, 0], {"theta0": theta0})


def demand_truth_oracle() -> TruthOracle:
    """f0 over x = (t, s, p)."""
    return TruthOracle("analytic-f0", lambda x: demand_structural_truth(x[:, 0], x[:, 1], x[:, 2]))


def semi_synthetic_oracle() -> TruthOracle:
    """f0 over x = (a, x1..xd)."""
    return TruthOracle("analytic-f0", lambda x: semi_synthetic_truth(x[:, 0], x[:, 1:]))


def pcl_bridge_truth(a, w) -> np.ndarray:
    """The exact bridge function: h0(a, w) = a min(exp((w-a)/10), 5) - (5/7)(w-45).

    Substituting W = 7 g(U) + 45 + e3 shows E[h0(A, W) | A, V] = E[Y | A, V]:
    the (5/7)(W-45) term has conditional mean 5 g(U) plus mean-zero noise, so
    it reproduces the hidden -5 g(U) outcome term.
    """
    a = np.asarray(a, dtype=float)
    w = np.asarray(w, dtype=float)
    return a * np.minimum(np.exp((w - a) / 10.0), 5.0) - (5.0 / 7.0) * (w - 45.0)


def pcl_bridge_oracle() -> TruthOracle:
    """h0 over x = (a, w)."""
    return TruthOracle("analytic-f0", lambda x: pcl_bridge_truth(x[:, 0], x[:, 1]))


def pcl_do_oracle(a_grid, mc_n: int, seed: int):
    """Monte Carlo E[Y | do(A=a)] on a grid, with per-point standard errors.

    Under intervention the proxies are cut off, so only (U, e3) matter:
    Y(a) = a min(exp((W-a)/10), 5) - 5 g(U) with W = 7 g(U) + 45 + e3.
    Returns (values, stderrs).
    """
    a_grid = np.asarray(a_grid, dtype=float).reshape(-1)
    if a_grid.size == 0:
        raise ValueError("a_grid: empty grid")
    if mc_n < 10_000:
        raise ValueError(f"mc_n: need at least 10000 draws, got {mc_n}")
    rng = make_rng(seed, "pcl-do-oracle")
    u = rng.uniform(0.0, 10.0, size=mc_n)
    e3 = rng.standard_normal(mc_n)
    g_u = time_effect_curve(u)
    w = 7.0 * g_u + 45.0 + e3
    values = np.empty(a_grid.size)
    stderrs = np.empty(a_grid.size)
    for i, a in enumerate(a_grid):
        y = a * np.minimum(np.exp((w - a) / 10.0), 5.0) - 5.0 * g_u
        values[i] = y.mean()
        stderrs[i] = y.std(ddof=1) / math.sqrt(mc_n)
    return values, stderrs


def pcl_a_grid(n_points: int = 50, mc_n: int = 100_000, seed: int = 0) -> np.ndarray:
    """Evaluation grid: equally spaced between the 5th/95th percentiles of A."""
    rng = make_rng(seed, "pcl-a-grid")
    u = rng.uniform(0.0, 10.0, size=mc_n)
    e = rng.standard_normal((3, mc_n))
    g_u = time_effect_curve(u)
    v1 = 2.0 * np.sin(2.0 * np.pi * u / 10.0) + e[0]
    v2 = 2.0 * np.cos(2.0 * np.pi * u / 10.0) + e[1]
    a = 35.0 + (v1 + 3.0) * g_u + v2 + e[2]
    lo, hi = np.percentile(a, [5.0, 95.0])
    return np.linspace(lo, hi, n_points)


def pcl_average_bridge(predict_fn, a_grid, mc_n: int = 20_000, seed: int = 0) -> np.ndarray:
    """E_W[h(a, W)] per grid point, averaging h over the marginal of W.

    ``predict_fn`` maps an (n, 2) matrix of (a, w) rows to bridge values —
    pass a fitted model's ``predict`` or the exact bridge for reference.
    """
    a_grid = np.asarray(a_grid, dtype=float).reshape(-1)
    rng = make_rng(seed, "pcl-w-marginal")
    u = rng.uniform(0.0, 10.0, size=mc_n)
    e3 = rng.standard_normal(mc_n)
    w = 7.0 * time_effect_curve(u) + 45.0 + e3
    out = np.empty(a_grid.size)
    for i, a in enumerate(a_grid):
        x = np.column_stack([np.full(mc_n, a), w])
        out[i] = float(np.mean(predict_fn(x)))
    return out


def mse_vs_truth(fit, oracle: TruthOracle, test_sampler, n_test: int) -> float:
    """Mean squared error of fit.predict against the oracle, original units."""
    x = np.atleast_2d(np.asarray(test_sampler(n_test), dtype=float))
    if x.shape[0] != n_test:
        raise ValueError(f"test_sampler returned {x.shape[0]} rows, expected {n_test}")
    pred = np.asarray(fit.predict(x), dtype=float).reshape(-1)
    truth = oracle.eval(x)
    if pred.shape != truth.shape:
        raise ValueError(f"signature mismatch: {pred.shape} predictions vs {truth.shape} truths")
    return float(np.mean((pred - truth) ** 2))


def mse_vs_truth_both_units(fit, oracle: TruthOracle, test_sampler, n_test: int) -> dict:
    """Original-units MSE plus the standardised-units value (divided by y_std^2).

    The demand experiments standardise the outcome before fitting, so error
    tables can be read in either convention — both are reported side by side.
    """
    original = mse_vs_truth(fit, oracle, test_sampler, n_test)
    y_std = getattr(getattr(fit, "scaling", None), "y_std", 1.0)
    return {"original": original, "standardised": original / (y_std**2)}
