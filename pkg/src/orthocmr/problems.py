"""Analytic test problems with closed-form nuisances.

The derivative checker in :mod:`orthocmr.score` needs problems where the
structural truth and both nuisance functions are known exactly, so that any
nonzero derivative is attributable to the score itself rather than to
estimation error.  Two variants of one linear-Gaussian design cover the two
cases of interest:

* the *valid* toy conditions on the instrument ``z``, so the conditional
  moment restriction holds and both nuisances are linear in ``z``;
* the *confounded* toy conditions on the endogenous action ``a`` itself, so
  the outcome residual stays correlated with the conditioning variable —
  exactly the situation in which a non-orthogonal score shows a first-order
  sensitivity to nuisance error.

Model:  z, u, d ~ N(0,1) independent;  a = z + u + d;  y = theta0 * a + u.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from .rng import make_rng

THETA0 = 2.0


@dataclass(frozen=True)
class AnalyticCMRProblem:
    """A sampling routine plus exact nuisances evaluated at the truth.

    ``draw(n, seed)`` returns ``(y, c)`` with ``c`` one-dimensional; ``s0``
    is the exact outcome regression E[Y|c] and ``g0`` the exact conditional
    mean of the true structural function, both as vectorised closures.
    ``residual_cov_c`` is the analytic Cov(y - g0(c), c), handy for oracles.
    """

    name: str
    draw: Callable[[int, int], Tuple[np.ndarray, np.ndarray]]
    s0: Callable[[np.ndarray], np.ndarray]
    g0: Callable[[np.ndarray], np.ndarray]
    residual_cov_c: float


def _simulate(n: int, seed: int, label: str):
    rng = make_rng(seed, "lin-gauss-toy", label)
    z = rng.standard_normal(n)
    u = rng.standard_normal(n)
    d = rng.standard_normal(n)
    a = z + u + d
    y = THETA0 * a + u
    return y, z, a


def linear_gaussian_toy() -> AnalyticCMRProblem:
    """Valid instance: c = z, so s0(z) = theta0*z and g0(z) = theta0*z."""

    def draw(n: int, seed: int):
        y, z, _ = _simulate(n, seed, "valid")
        return y, z

    return AnalyticCMRProblem(
        name="linear-gaussian",
        draw=draw,
        s0=lambda c: THETA0 * np.asarray(c, dtype=float),
        g0=lambda c: THETA0 * np.asarray(c, dtype=float),
        # y - g0 = theta0*(u+d) + u, independent of z
        residual_cov_c=0.0,
    )


class ClosureRegressor:
    """Adapter exposing an analytic function of c through the fitted-model API."""

    kind = "closure"

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray]):
        self._fn = fn

    def predict(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        flat = c[:, 0] if c.ndim == 2 and c.shape[1] == 1 else c
        return np.asarray(self._fn(flat), dtype=float).reshape(-1)


class GaussianConditional:
    """Exact conditional density x | c ~ N(mean_fn(c), std^2) for toy problems."""

    kind = "analytic-gaussian"

    def __init__(self, mean_fn: Callable[[np.ndarray], np.ndarray], std: float):
        self._mean_fn = mean_fn
        self.std = float(std)

    def conditional_mean(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        flat = c[:, 0] if c.ndim == 2 and c.shape[1] == 1 else c
        return np.asarray(self._mean_fn(flat), dtype=float).reshape(-1)

    def sample(self, c, n_draws: int, seed: int) -> np.ndarray:
        mu = self.conditional_mean(c)
        rng = make_rng(seed, "analytic-gaussian-sample")
        return mu[:, None] + self.std * rng.standard_normal((len(mu), n_draws))


def toy_exact_nuisances():
    """The toy's exact (s0, density of a|z) as fitted-model lookalikes.

    a = z + u + d means a | z ~ N(z, 2); s0(z) = theta0 * z.
    """
    s0 = ClosureRegressor(lambda z: THETA0 * z)
    density = GaussianConditional(lambda z: z, std=np.sqrt(2.0))
    return s0, density


def confounded_linear_gaussian_toy() -> AnalyticCMRProblem:
    """Confounded instance: c = a.

    Conditioning on the action makes g0 the structural function itself,
    g0(a) = theta0*a, so the outcome residual y - g0(a) = u — and
    Cov(u, a) = 1 because u feeds a.  E[Y|a] picks up the confounding term:
    E[u|a] = a/3 since Var(a) = 3.
    """

    def draw(n: int, seed: int):
        y, _, a = _simulate(n, seed, "confounded")
        return y, a

    return AnalyticCMRProblem(
        name="linear-gaussian-confounded",
        draw=draw,
        s0=lambda c: (THETA0 + 1.0 / 3.0) * np.asarray(c, dtype=float),
        g0=lambda c: THETA0 * np.asarray(c, dtype=float),
        residual_cov_c=1.0,
    )
