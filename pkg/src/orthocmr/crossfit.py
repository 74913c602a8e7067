"""K-fold cross-fitting of nuisance estimators, with an audit trail.

``crossfit_nuisances`` trains one (outcome-regression, conditional-density)
pair per fold, each on the fold's complement, and records exactly which rows
every pair saw.  ``CrossFitState.audit()`` re-checks the no-leakage property
from those records rather than trusting construction, so a regression in the
fold plan would surface here.

Estimators are built from plain spec dicts ({"kind": ..., **params}) so the
same description can come from a config file, a benchmark grid, or a test.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .basis import build_basis
from .datasets import Dataset
from .densities import (
    BinnedCategoricalDensity,
    GaussianMixtureDensity,
    HomoscedasticGaussianDensity,
)
from .folds import FoldPlan, make_fold_plan
from .regressors import BoostedTrees, ConstantPredictor, FeedforwardNet, RidgeOnBasis
from .rng import derive_seed
from .score import NuisancePair

MIN_ROWS_PER_FIT = 2


def build_regressor(spec: dict, seed: int = 0):
    """Instantiate a fresh (unfitted) regressor from a spec dict."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "ridge-on-basis":
        return RidgeOnBasis(basis=build_basis(spec.pop("basis", None)), **spec)
    if kind == "gradient-boosted-trees":
        spec.setdefault("seed", seed)
        return BoostedTrees(**spec)
    if kind == "feedforward-net":
        spec.setdefault("seed", seed)
        if "hidden" in spec:
            spec["hidden"] = tuple(spec["hidden"])
        return FeedforwardNet(**spec)
    if kind == "constant":
        return ConstantPredictor()
    raise ValueError(f"s.kind: unknown regressor kind {kind!r}")


def build_density(spec: dict, seed: int = 0):
    """Instantiate a fresh (unfitted) conditional density from a spec dict."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "gaussian-mixture-net":
        spec.setdefault("seed", seed)
        if "hidden" in spec:
            spec["hidden"] = tuple(spec["hidden"])
        return GaussianMixtureDensity(**spec)
    if kind == "gaussian-ridge":
        return HomoscedasticGaussianDensity(
            basis_spec=spec.pop("basis", None),
            mean_spec=spec.pop("mean", None),
            seed=spec.pop("seed", seed),
            **spec,
        )
    if kind == "binned-categorical":
        return BinnedCategoricalDensity(**spec)
    raise ValueError(f"density.kind: unknown density kind {kind!r}")


@dataclass
class CrossFitState:
    """Fold plan plus the per-fold nuisance pairs and their training records."""

    fold_plan: FoldPlan
    nuisances: List[NuisancePair]
    train_indices: List[np.ndarray]
    n_fits: int
    meta: dict = field(default_factory=dict)

    def audit(self) -> dict:
        """Re-verify no-leakage from the recorded training indices.

        Full-sample states (CE variant, naive baseline) have no held-out
        structure by design; for those the audit only confirms the training
        record covers every row exactly once.
        """
        if self.meta.get("full_sample"):
            train = np.sort(self.train_indices[0])
            passed = np.array_equal(train, np.arange(self.fold_plan.n))
            return {
                "passed": bool(passed),
                "k_folds": 1,
                "n_fits": self.n_fits,
                "full_sample": True,
                "folds": [{"fold": 0, "train_size": int(len(train))}],
            }
        details = []
        for k, fold in enumerate(self.fold_plan.folds):
            train = self.train_indices[k]
            overlap = np.intersect1d(train, fold)
            complement_ok = np.array_equal(np.sort(train), self.fold_plan.complement(k))
            details.append(
                {
                    "fold": k,
                    "fold_size": int(len(fold)),
                    "train_size": int(len(train)),
                    "overlap": int(overlap.size),
                    "train_is_complement": bool(complement_ok),
                }
            )
        passed = all(d["overlap"] == 0 and d["train_is_complement"] for d in details)
        return {
            "passed": passed,
            "k_folds": self.fold_plan.k,
            "n_fits": self.n_fits,
            "full_sample": False,
            "folds": details,
        }


def _density_column(data: Dataset) -> int:
    cols = data.density_cols
    if len(cols) != 1:
        raise ValueError(
            f"expected exactly one density-modelled x column, got {len(cols)} "
            f"(shared={data.shared}, d_x={data.x.shape[1]})"
        )
    return cols[0]


def crossfit_nuisances(data: Dataset, cfg, s_spec: dict, density_spec: dict) -> CrossFitState:
    """Fit one nuisance pair per fold, each on the fold's complement.

    ``cfg`` needs ``k_folds`` and ``seed``; per-fold estimator seeds are
    derived from the global one so fold order cannot matter.
    """
    dcol = _density_column(data)
    plan = make_fold_plan(data.n, cfg.k_folds, cfg.seed)
    nuisances: List[NuisancePair] = []
    train_indices: List[np.ndarray] = []
    for k in range(plan.k):
        idx = plan.complement(k)
        if len(idx) < MIN_ROWS_PER_FIT:
            raise ValueError(
                f"fold {k}: complement has {len(idx)} rows; need at least {MIN_ROWS_PER_FIT}"
            )
        s = build_regressor(s_spec, seed=derive_seed(cfg.seed, "nuisance-s", k))
        s.fit(data.c[idx], data.y[idx])
        dens = build_density(density_spec, seed=derive_seed(cfg.seed, "nuisance-g", k))
        dens.fit(data.c[idx], data.x[idx, dcol])
        nuisances.append(NuisancePair(s=s, density=dens, shared=data.shared, d_x=data.x.shape[1]))
        train_indices.append(idx)
    return CrossFitState(
        fold_plan=plan,
        nuisances=nuisances,
        train_indices=train_indices,
        n_fits=plan.k,
        meta={"s_spec": dict(s_spec), "density_spec": dict(density_spec)},
    )


def full_sample_nuisances(
    data: Dataset, cfg, s_spec: Optional[dict], density_spec: dict
) -> CrossFitState:
    """Single nuisance pair trained once on all rows (CE variant / naive baseline).

    Represented as a one-fold state whose 'fold' is the whole sample, so the
    downstream solver code is identical; the audit records that no held-out
    structure exists.  ``s_spec=None`` skips the outcome regression (the naive
    baseline only needs the density).
    """
    dcol = _density_column(data)
    all_rows = np.arange(data.n)
    plan = FoldPlan(n=data.n, k=1, seed=cfg.seed, folds=(all_rows,))
    s = None
    if s_spec is not None:
        s = build_regressor(s_spec, seed=derive_seed(cfg.seed, "nuisance-s", "full"))
        s.fit(data.c, data.y)
    dens = build_density(density_spec, seed=derive_seed(cfg.seed, "nuisance-g", "full"))
    dens.fit(data.c, data.x[:, dcol])
    pair = NuisancePair(s=s, density=dens, shared=data.shared, d_x=data.x.shape[1])
    return CrossFitState(
        fold_plan=plan,
        nuisances=[pair],
        train_indices=[all_rows],
        n_fits=1,
        meta={"full_sample": True, "s_spec": None if s_spec is None else dict(s_spec),
              "density_spec": dict(density_spec)},
    )
