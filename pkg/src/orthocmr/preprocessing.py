"""Column-wise standardisation with exact inversion."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass
class Standardiser:
    """Affine per-column map (x - mean) / std, fit on training data only.

    Uses the population standard deviation (divide by n).  Columns are
    addressed by optional names for error reporting.
    """

    mean: Optional[np.ndarray] = None
    std: Optional[np.ndarray] = None
    names: Optional[tuple] = None

    def fit(self, data: np.ndarray, names=None) -> "Standardiser":
        data = np.atleast_2d(np.asarray(data, dtype=float))
        if data.ndim != 2:
            raise ValueError("expected a 2-d array")
        self.mean = data.mean(axis=0)
        self.std = data.std(axis=0)  # population (ddof=0)
        self.names = tuple(names) if names is not None else tuple(str(i) for i in range(data.shape[1]))
        bad = np.nonzero(self.std <= 0.0)[0]
        if bad.size:
            raise ValueError(f"column {self.names[bad[0]]!r} has zero variance; cannot standardise")
        return self

    def _check(self):
        if self.mean is None or self.std is None:
            raise RuntimeError("Standardiser used before fit()")

    def transform(self, data: np.ndarray) -> np.ndarray:
        self._check()
        data = np.asarray(data, dtype=float)
        return (data - self.mean) / self.std

    def inverse(self, data: np.ndarray) -> np.ndarray:
        self._check()
        data = np.asarray(data, dtype=float)
        return data * self.std + self.mean

    def to_dict(self) -> dict:
        self._check()
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "names": list(self.names)}

    @classmethod
    def from_dict(cls, payload: dict) -> "Standardiser":
        out = cls()
        out.mean = np.asarray(payload["mean"], dtype=float)
        out.std = np.asarray(payload["std"], dtype=float)
        out.names = tuple(payload["names"])
        return out
