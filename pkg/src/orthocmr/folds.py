"""Seeded fold plans for cross-fitting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import make_rng


@dataclass(frozen=True)
class FoldPlan:
    """A partition of {0..n-1} into k disjoint folds of near-equal size."""

    n: int
    k: int
    seed: int
    folds: tuple  # tuple of np.ndarray index vectors

    def complement(self, fold_idx: int) -> np.ndarray:
        """Indices outside fold ``fold_idx`` (the nuisance training set)."""
        mask = np.ones(self.n, dtype=bool)
        mask[self.folds[fold_idx]] = False
        return np.nonzero(mask)[0]

    def validate(self) -> None:
        sizes = [len(f) for f in self.folds]
        if len(self.folds) != self.k:
            raise AssertionError("fold count mismatch")
        if sum(sizes) != self.n:
            raise AssertionError("folds do not cover the sample")
        if max(sizes) - min(sizes) > 1:
            raise AssertionError(f"fold sizes differ by more than one: {sizes}")
        seen = np.concatenate(self.folds)
        if len(np.unique(seen)) != self.n:
            raise AssertionError("folds overlap")


def make_fold_plan(n: int, k: int, seed: int) -> FoldPlan:
    """Shuffle 0..n-1 and cut into k folds.

    The first (n mod k) folds take the ceil(n/k)-sized share, the rest get
    floor(n/k).  Requires 2 <= k <= n.
    """
    n = int(n)
    k = int(k)
    if k < 2:
        raise ValueError(f"k_folds: must be >= 2, got {k}")
    if k > n:
        raise ValueError(f"k_folds: must be <= n ({n}), got {k}")
    perm = make_rng(seed, "fold-plan", n, k).permutation(n)
    big = int(np.ceil(n / k))
    n_big = n % k
    folds = []
    start = 0
    for i in range(k):
        size = big if (n_big and i < n_big) else n // k
        folds.append(np.sort(perm[start : start + size]))
        start += size
    plan = FoldPlan(n=n, k=k, seed=seed, folds=tuple(folds))
    plan.validate()
    return plan
