"""Feature maps for linear-in-basis structural models.

Two families:

* ``PolynomialBasis`` — multivariate monomials up to a total degree.
* ``TensorRadialBasis`` — per-column blocks (Gaussian bumps on a quantile
  grid, or low-degree polynomial factors) combined by tensor product.  This is
  the workhorse for structural functions that are smooth but sharply featured
  in one coordinate while near-linear in others.

Both are deterministic given the training data and serialise to plain dicts.
"""

from __future__ import annotations

import itertools
from typing import Optional

import numpy as np

_MAX_FEATURES = 4000


class PolynomialBasis:
    """All monomials of total degree <= degree over the input columns."""

    kind = "polynomial"

    def __init__(self, degree: int = 2, include_bias: bool = True):
        if degree < 0:
            raise ValueError(f"degree: must be >= 0, got {degree}")
        self.degree = int(degree)
        self.include_bias = bool(include_bias)
        self._exponents = None

    def fit(self, x: np.ndarray) -> "PolynomialBasis":
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = x.shape[1]
        exps = []
        for total in range(0 if self.include_bias else 1, self.degree + 1):
            for combo in itertools.combinations_with_replacement(range(d), total):
                e = [0] * d
                for c in combo:
                    e[c] += 1
                exps.append(tuple(e))
        if not exps:
            raise ValueError("basis has no features (degree 0 without bias)")
        if len(exps) > _MAX_FEATURES:
            raise ValueError(f"basis too large: {len(exps)} features")
        self._exponents = tuple(exps)
        return self

    @property
    def n_features(self) -> int:
        if self._exponents is None:
            raise RuntimeError("basis used before fit()")
        return len(self._exponents)

    def transform(self, x: np.ndarray) -> np.ndarray:
        if self._exponents is None:
            raise RuntimeError("basis used before fit()")
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = len(self._exponents[0])
        if x.shape[1] != d:
            raise ValueError(f"expected {d} columns, got {x.shape[1]}")
        out = np.empty((x.shape[0], len(self._exponents)))
        for j, e in enumerate(self._exponents):
            col = np.ones(x.shape[0])
            for dim, p in enumerate(e):
                if p:
                    col = col * x[:, dim] ** p
            out[:, j] = col
        return out

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "degree": self.degree,
            "include_bias": self.include_bias,
            "exponents": [list(e) for e in (self._exponents or ())],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "PolynomialBasis":
        out = cls(degree=payload["degree"], include_bias=payload["include_bias"])
        out._exponents = tuple(tuple(e) for e in payload["exponents"]) or None
        return out


class TensorRadialBasis:
    """Tensor product of per-column feature blocks.

    Each column gets either a radial block — a leading constant plus
    ``n_centers`` Gaussian bumps centred on the column's training quantiles —
    or a polynomial block [1, x, ..., x^deg].  The full feature map is the
    product over columns of one entry per block, so cross terms like
    bump_j(t) * s * p come for free.

    rbf_cols: columns that get the radial treatment (default: all).
    poly_degree: dict col -> degree for the remaining columns (default 1).
    """

    kind = "radial"

    def __init__(
        self,
        n_centers: int = 10,
        bandwidth_scale: float = 1.0,
        rbf_cols: Optional[tuple] = None,
        poly_degree: Optional[dict] = None,
    ):
        if n_centers < 2:
            raise ValueError(f"n_centers: must be >= 2, got {n_centers}")
        if bandwidth_scale <= 0:
            raise ValueError(f"bandwidth_scale: must be > 0, got {bandwidth_scale}")
        self.n_centers = int(n_centers)
        self.bandwidth_scale = float(bandwidth_scale)
        self.rbf_cols = tuple(rbf_cols) if rbf_cols is not None else None
        self.poly_degree = dict(poly_degree or {})
        self._centers = None  # dict col -> (centers, bandwidth)
        self._n_cols = None

    def fit(self, x: np.ndarray) -> "TensorRadialBasis":
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = x.shape[1]
        rbf_cols = self.rbf_cols if self.rbf_cols is not None else tuple(range(d))
        centers = {}
        for col in rbf_cols:
            if not (0 <= col < d):
                raise ValueError(f"rbf_cols: column {col} out of range for {d}-column input")
            q = np.linspace(0.0, 1.0, self.n_centers)
            cs = np.quantile(x[:, col], q)
            spacing = np.diff(cs)
            spacing = spacing[spacing > 0]
            if spacing.size == 0:
                raise ValueError(f"rbf_cols: column {col} is constant; cannot place centers")
            bw = self.bandwidth_scale * float(np.median(spacing))
            centers[col] = (cs, bw)
        self._centers = centers
        self._n_cols = d
        n_feat = 1
        for col in range(d):
            n_feat *= self._block_size(col)
        if n_feat > _MAX_FEATURES:
            raise ValueError(f"basis too large: {n_feat} features")
        return self

    def _block_size(self, col: int) -> int:
        if col in self._centers:
            return 1 + self.n_centers
        return 1 + int(self.poly_degree.get(col, 1))

    def _block(self, col: int, v: np.ndarray) -> np.ndarray:
        if col in self._centers:
            cs, bw = self._centers[col]
            block = np.empty((v.shape[0], 1 + len(cs)))
            block[:, 0] = 1.0
            block[:, 1:] = np.exp(-((v[:, None] - cs[None, :]) ** 2) / (2.0 * bw * bw))
            return block
        deg = int(self.poly_degree.get(col, 1))
        return np.vander(v, N=deg + 1, increasing=True)

    @property
    def n_features(self) -> int:
        if self._centers is None:
            raise RuntimeError("basis used before fit()")
        out = 1
        for col in range(self._n_cols):
            out *= self._block_size(col)
        return out

    def transform(self, x: np.ndarray) -> np.ndarray:
        if self._centers is None:
            raise RuntimeError("basis used before fit()")
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self._n_cols:
            raise ValueError(f"expected {self._n_cols} columns, got {x.shape[1]}")
        feat = self._block(0, x[:, 0])
        for col in range(1, self._n_cols):
            block = self._block(col, x[:, col])
            feat = (feat[:, :, None] * block[:, None, :]).reshape(x.shape[0], -1)
        return feat

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n_centers": self.n_centers,
            "bandwidth_scale": self.bandwidth_scale,
            "rbf_cols": list(self.rbf_cols) if self.rbf_cols is not None else None,
            "poly_degree": {str(k): v for k, v in self.poly_degree.items()},
            "centers": {
                str(col): {"centers": cs.tolist(), "bandwidth": bw}
                for col, (cs, bw) in (self._centers or {}).items()
            },
            "n_cols": self._n_cols,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "TensorRadialBasis":
        out = cls(
            n_centers=payload["n_centers"],
            bandwidth_scale=payload["bandwidth_scale"],
            rbf_cols=tuple(payload["rbf_cols"]) if payload["rbf_cols"] is not None else None,
            poly_degree={int(k): v for k, v in payload["poly_degree"].items()},
        )
        out._centers = {
            int(col): (np.asarray(info["centers"], dtype=float), float(info["bandwidth"]))
            for col, info in payload["centers"].items()
        }
        out._n_cols = payload["n_cols"]
        return out


def basis_from_dict(payload: dict):
    kind = payload.get("kind")
    if kind == "polynomial":
        return PolynomialBasis.from_dict(payload)
    if kind == "radial":
        return TensorRadialBasis.from_dict(payload)
    raise ValueError(f"kind: unknown basis kind {kind!r}")


def build_basis(spec: Optional[dict]):
    """Instantiate a fresh (unfitted) basis from a config-style spec dict."""
    spec = dict(spec or {"kind": "polynomial", "degree": 1})
    kind = spec.pop("kind", "polynomial")
    if kind == "polynomial":
        return PolynomialBasis(**spec)
    if kind == "radial":
        if spec.get("rbf_cols") is not None:
            spec["rbf_cols"] = tuple(int(c) for c in spec["rbf_cols"])
        if spec.get("poly_degree") is not None:
            spec["poly_degree"] = {int(k): int(v) for k, v in spec["poly_degree"].items()}
        return TensorRadialBasis(**spec)
    raise ValueError(f"basis.kind: unknown basis kind {kind!r}")
