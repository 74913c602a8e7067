"""Synthetic data generators and the Dataset container.

Three generator families are provided:

* ``gen_demand_iv`` — the airline-ticket demand simulation: price is the
  endogenous action, (time, customer type) are observed covariates, and the
  fuel-cost instrument shifts price.  Demand noise is correlated with price
  noise, which is what makes plain regression biased.
* ``gen_pcl_demand`` — a proximal-causal-learning variant where the hidden
  demand level U is never observed but leaves two proxies: V (treatment-side)
  and W (outcome-side).  The structural target is the bridge function h(A,W).
* ``gen_semi_synthetic`` — synthetic action/outcome on top of a user-supplied
  covariate matrix, with a categorical instrument.

Every generator consumes an explicit seed and derives all of its streams from
it, so regeneration with equal parameters is bit-identical.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .rng import make_rng


def time_effect_curve(t):
    """Seasonal demand curve: a quartic trough with a sharp bump at t=5.

    Used both as the demand time-effect and as the latent-confounder response
    curve of the proxy generator (the two simulations share this shape).
    """
    t = np.asarray(t, dtype=float)
    return 2.0 * ((t - 5.0) ** 4 / 600.0 + np.exp(-4.0 * (t - 5.0) ** 2) + t / 10.0 - 2.0)


def demand_structural_truth(t, s, p):
    """Ground-truth demand f0((t, s), p) = 100 + (10 + p) * s * curve(t) - 2p."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    p = np.asarray(p, dtype=float)
    return 100.0 + (10.0 + p) * s * time_effect_curve(t) - 2.0 * p


class CsvSchemaError(ValueError):
    """CSV header does not match the expected column layout."""


class CsvParseError(ValueError):
    """A CSV cell failed to parse; carries 1-based row and the column name."""

    def __init__(self, row: int, column: str, value: str):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"row {row}, column {column!r}: cannot parse {value!r} as a finite float")


class EmptyCsvError(ValueError):
    """The CSV file is empty (no header row)."""


@dataclass
class Dataset:
    """Observations for a conditional-moment-restriction problem.

    ``x`` holds the structural-function inputs, ``c`` the conditioning
    variables.  ``shared`` lists (x_col, c_col) pairs that are the same
    observed variable in both blocks (e.g. demand's time/customer-type, or the
    action in the proximal setting); the conditional density of x given c only
    needs to model the remaining x-columns.

    ``truth`` optionally carries oracle material written by the generator
    (structural values at the sample points, generator parameters, noise
    realisations for diagnostics).
    """

    y: np.ndarray
    x: np.ndarray
    c: np.ndarray
    x_names: tuple
    c_names: tuple
    shared: tuple = ()
    truth: Optional[dict] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.c = np.atleast_2d(np.asarray(self.c, dtype=float))
        if self.x.shape[0] != self.y.shape[0] or self.c.shape[0] != self.y.shape[0]:
            raise ValueError(
                f"inconsistent row counts: y={self.y.shape[0]}, x={self.x.shape[0]}, c={self.c.shape[0]}"
            )
        self.x_names = tuple(self.x_names)
        self.c_names = tuple(self.c_names)
        if len(self.x_names) != self.x.shape[1]:
            raise ValueError("x_names length does not match x columns")
        if len(self.c_names) != self.c.shape[1]:
            raise ValueError("c_names length does not match c columns")
        self.shared = tuple((int(i), int(j)) for i, j in self.shared)
        for i, j in self.shared:
            if not (0 <= i < self.x.shape[1]) or not (0 <= j < self.c.shape[1]):
                raise ValueError(f"shared pair ({i},{j}) out of range")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def density_cols(self) -> tuple:
        """x-columns that are genuinely random given c (not pass-through)."""
        passthrough = {i for i, _ in self.shared}
        return tuple(i for i in range(self.x.shape[1]) if i not in passthrough)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        truth = None
        if self.truth is not None:
            truth = {
                k: (v[idx] if isinstance(v, np.ndarray) and v.shape[:1] == (self.n,) else v)
                for k, v in self.truth.items()
            }
        return Dataset(
            y=self.y[idx],
            x=self.x[idx],
            c=self.c[idx],
            x_names=self.x_names,
            c_names=self.c_names,
            shared=self.shared,
            truth=truth,
            meta=dict(self.meta),
        )


@dataclass
class Standardiser:
    """Affine per-column maps fitted on named Dataset columns.

    ``columns`` are role names: "y" for the outcome, anything else is looked
    up in ``x_names``/``c_names``.  A shared x/c column is transformed in both
    blocks, so the pass-through structure stays intact.  Uses the population
    standard deviation (divide by n).  ``truth`` material is left untouched —
    oracles stay in original units.
    """

    columns: tuple
    mean: dict
    std: dict

    def _transform(self, data: Dataset, forward: bool) -> Dataset:
        y = data.y.copy()
        x = data.x.copy()
        c = data.c.copy()
        for name in self.columns:
            m, s = self.mean[name], self.std[name]
            f = (lambda v, m=m, s=s: (v - m) / s) if forward else (lambda v, m=m, s=s: v * s + m)
            if name == "y":
                y = f(y)
            for j, nm in enumerate(data.x_names):
                if nm == name:
                    x[:, j] = f(x[:, j])
            for j, nm in enumerate(data.c_names):
                if nm == name:
                    c[:, j] = f(c[:, j])
        return Dataset(
            y=y, x=x, c=c, x_names=data.x_names, c_names=data.c_names,
            shared=data.shared, truth=data.truth, meta=dict(data.meta),
        )

    def apply(self, data: Dataset) -> Dataset:
        return self._transform(data, forward=True)

    def invert(self, data: Dataset) -> Dataset:
        return self._transform(data, forward=False)


def fit_standardiser(data: Dataset, columns: Optional[Sequence[str]] = None) -> Standardiser:
    """Fit per-column standardisation for the outcome and action columns.

    The default column set is the outcome plus the density-modelled x columns
    (action and outcome get scaled; conditioning-only variables do not).
    Raises ValueError naming the offender for unknown names and for
    zero-variance columns.
    """
    if columns is None:
        columns = ("y",) + tuple(data.x_names[j] for j in data.density_cols)
    cols = tuple(dict.fromkeys(columns))
    mean, std = {}, {}
    for name in cols:
        if name == "y":
            v = data.y
        elif name in data.x_names:
            v = data.x[:, data.x_names.index(name)]
        elif name in data.c_names:
            v = data.c[:, data.c_names.index(name)]
        else:
            raise ValueError(
                f"column {name!r}: not a dataset column (y, x: {data.x_names}, c: {data.c_names})"
            )
        s = float(np.std(v))
        if s == 0.0:
            raise ValueError(f"column {name!r}: zero variance, cannot standardise")
        mean[name] = float(np.mean(v))
        std[name] = s
    return Standardiser(columns=cols, mean=mean, std=std)


def _require(cond: bool, field_name: str, message: str):
    if not cond:
        raise ValueError(f"{field_name}: {message}")


@dataclass(frozen=True)
class DemandIVParams:
    """Knobs for the demand simulation.

    rho is the correlation between demand noise and price noise (the
    confounding strength); iv_strength scales the instrument coefficient in
    the price equation (1.0 = fully informative, 0 = useless instrument).
    ood_time shifts the time variable to Unif(1, 11) to probe extrapolation.
    """

    n: int
    seed: int
    rho: float = 0.9
    iv_strength: float = 1.0
    ood_time: bool = False

    def __post_init__(self):
        _require(int(self.n) >= 1, "n", f"must be >= 1, got {self.n}")
        _require(0.0 <= self.rho <= 1.0, "rho", f"must be in [0, 1], got {self.rho}")
        _require(self.iv_strength >= 0.0, "iv_strength", f"must be >= 0, got {self.iv_strength}")


def gen_demand_iv(params: DemandIVParams) -> Dataset:
    """Draw a demand-IV dataset.

    Sampling model (all streams independent given the seed):
        t ~ Unif(0, 10)   (Unif(1, 11) when ood_time)
        s ~ Unif{1..7}
        z, omega ~ N(0, 1)
        eps = rho * omega + sqrt(1 - rho^2) * xi,  xi ~ N(0,1)
        p = 25 + (iv_strength * z + 3) * curve(t) + omega
        y = f0((t, s), p) + eps

    eps is marginally N(0,1) with corr(eps, omega) = rho.
    """
    rng = make_rng(params.seed, "demand-iv")
    n = int(params.n)
    lo = 1.0 if params.ood_time else 0.0
    t = rng.uniform(lo, lo + 10.0, size=n)
    s = rng.integers(1, 8, size=n).astype(float)
    z = rng.standard_normal(n)
    omega = rng.standard_normal(n)
    xi = rng.standard_normal(n)
    eps = params.rho * omega + math.sqrt(1.0 - params.rho**2) * xi
    p = 25.0 + (params.iv_strength * z + 3.0) * time_effect_curve(t) + omega
    f0 = demand_structural_truth(t, s, p)
    y = f0 + eps
    return Dataset(
        y=y,
        x=np.column_stack([t, s, p]),
        c=np.column_stack([t, s, z]),
        x_names=("t", "s", "p"),
        c_names=("t", "s", "z"),
        shared=((0, 0), (1, 1)),
        truth={
            "f0_x": f0,
            "eps": eps,
            "omega": omega,
            "params": {
                "n": n,
                "seed": params.seed,
                "rho": params.rho,
                "iv_strength": params.iv_strength,
                "ood_time": params.ood_time,
            },
        },
        meta={"generator": "demand-iv", "seed": params.seed},
    )


@dataclass(frozen=True)
class PCLDemandParams:
    n: int
    seed: int

    def __post_init__(self):
        _require(int(self.n) >= 1, "n", f"must be >= 1, got {self.n}")


def pcl_outcome(a, w, g_u, e5=0.0):
    """Sale revenue: y = a * min(exp((w - a)/10), 5) - 5 g(u) + e5."""
    a = np.asarray(a, dtype=float)
    w = np.asarray(w, dtype=float)
    return a * np.minimum(np.exp((w - a) / 10.0), 5.0) - 5.0 * np.asarray(g_u, dtype=float) + e5


def gen_pcl_demand(params: PCLDemandParams) -> Dataset:
    """Draw a proxy-variable demand dataset.

    The hidden demand level U drives everything; V1, V2 (treatment proxies)
    and W (outcome proxy) are noisy views of it:

        U ~ Unif(0, 10),  e1..e5 ~ N(0, 1) independent
        V1 = 2 sin(2 pi U / 10) + e1
        V2 = 2 cos(2 pi U / 10) + e2
        W  = 7 g(U) + 45 + e3
        A  = 35 + (V1 + 3) g(U) + V2 + e4
        Y  = A min(exp((W - A)/10), 5) - 5 g(U) + e5

    Structural inputs are x = (A, W); conditioning variables c = (A, V1, V2)
    with A passed through (the density only models W | A, V).
    """
    rng = make_rng(params.seed, "pcl-demand")
    n = int(params.n)
    u = rng.uniform(0.0, 10.0, size=n)
    e = rng.standard_normal((5, n))
    g_u = time_effect_curve(u)
    v1 = 2.0 * np.sin(2.0 * np.pi * u / 10.0) + e[0]
    v2 = 2.0 * np.cos(2.0 * np.pi * u / 10.0) + e[1]
    w = 7.0 * g_u + 45.0 + e[2]
    a = 35.0 + (v1 + 3.0) * g_u + v2 + e[3]
    y = pcl_outcome(a, w, g_u, e[4])
    return Dataset(
        y=y,
        x=np.column_stack([a, w]),
        c=np.column_stack([a, v1, v2]),
        x_names=("a", "w"),
        c_names=("a", "v1", "v2"),
        shared=((0, 0),),
        truth={"u": u, "params": {"n": n, "seed": params.seed}},
        meta={"generator": "pcl-demand", "seed": params.seed},
    )


@dataclass(frozen=True)
class SemiSyntheticParams:
    """Synthetic action/outcome over real covariates with a categorical instrument."""

    covariates: np.ndarray
    seed: int
    k_instruments: int = 3
    fz_table: Optional[Sequence[float]] = None

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.covariates, dtype=float))
        object.__setattr__(self, "covariates", cov)
        _require(cov.shape[0] >= 1, "covariates", "need at least one row")
        _require(cov.shape[1] >= 3, "covariates", f"need >= 3 columns, got {cov.shape[1]}")
        _require(int(self.k_instruments) >= 2, "k_instruments", f"must be >= 2, got {self.k_instruments}")
        if self.fz_table is not None:
            _require(
                len(self.fz_table) == int(self.k_instruments),
                "fz_table",
                f"length {len(self.fz_table)} != k_instruments {self.k_instruments}",
            )

    def fz(self) -> np.ndarray:
        if self.fz_table is None:
            return np.arange(int(self.k_instruments), dtype=float)
        return np.asarray(self.fz_table, dtype=float)


def semi_synthetic_truth(a, x):
    """f0(a, x) = 9 a^2 - 1.5 a + mean(x) + |x1 x2| - sin(10 + x2 x3)."""
    a = np.asarray(a, dtype=float)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return (
        9.0 * a**2
        - 1.5 * a
        + x.mean(axis=1)
        + np.abs(x[:, 0] * x[:, 1])
        - np.sin(10.0 + x[:, 1] * x[:, 2])
    )


def gen_semi_synthetic(params: SemiSyntheticParams) -> Dataset:
    """Synthetic endogenous action over a fixed covariate matrix.

    For each row, with instrument Z uniform over {0..K-1} and per-(covariate,
    instrument) weights w_iz ~ Unif(-1, 1):

        A = sum_i w_{i,Z} (X_i + 0.2 eps + f_Z) + delta_A
        Y = f0(A, X) + 2 eps + delta_Y

    where eps ~ N(0, 0.1) (variance 0.1) is the hidden confounder shared by
    both equations and delta_A, delta_Y ~ N(0, 1).
    """
    rng = make_rng(params.seed, "semi-synthetic")
    cov = params.covariates
    n, d = cov.shape
    k = int(params.k_instruments)
    fz = params.fz()
    z = rng.integers(0, k, size=n)
    weights = rng.uniform(-1.0, 1.0, size=(d, k))
    eps = rng.normal(0.0, math.sqrt(0.1), size=n)
    delta_a = rng.standard_normal(n)
    delta_y = rng.standard_normal(n)
    w_rows = weights[:, z].T  # (n, d): each row's weight column
    a = (w_rows * (cov + (0.2 * eps + fz[z])[:, None])).sum(axis=1) + delta_a
    f0 = semi_synthetic_truth(a, cov)
    y = f0 + 2.0 * eps + delta_y
    x_names = ("a",) + tuple(f"x{i+1}" for i in range(d))
    c_names = ("z",) + tuple(f"x{i+1}" for i in range(d))
    return Dataset(
        y=y,
        x=np.column_stack([a, cov]),
        c=np.column_stack([z.astype(float), cov]),
        x_names=x_names,
        c_names=c_names,
        shared=tuple((i, i) for i in range(1, d + 1)),
        truth={"f0_x": f0, "params": {"seed": params.seed, "k_instruments": k, "fz_table": fz.tolist()}},
        meta={"generator": "semi-synthetic", "seed": params.seed},
    )


@dataclass(frozen=True)
class LinearToyParams:
    """Knobs for the linear-Gaussian toy (exact nuisances known in closed form)."""

    n: int
    seed: int
    theta0: float = 2.0

    def __post_init__(self):
        _require(int(self.n) >= 1, "n", f"must be >= 1, got {self.n}")


def gen_linear_toy(params: LinearToyParams) -> Dataset:
    """Draw the linear-Gaussian toy: z, u, d ~ N(0,1); a = z+u+d; y = theta0*a + u.

    The confounder u appears in both equations, so regressing y on a is biased
    while the instrument z identifies theta0 exactly.  Closed forms:
    s0(z) = theta0*z, E[a|z] = z, a|z ~ N(z, 2).
    """
    rng = make_rng(params.seed, "linear-toy")
    n = int(params.n)
    z = rng.standard_normal(n)
    u = rng.standard_normal(n)
    d = rng.standard_normal(n)
    a = z + u + d
    y = params.theta0 * a + u
    return Dataset(
        y=y,
        x=a.reshape(-1, 1),
        c=z.reshape(-1, 1),
        x_names=("a",),
        c_names=("z",),
        shared=(),
        truth={"f0_x": params.theta0 * a, "u": u, "params": {"n": n, "seed": params.seed, "theta0": params.theta0}},
        meta={"generator": "linear-toy", "seed": params.seed},
    )


def write_csv(data: Dataset, path) -> None:
    """Serialise a Dataset to CSV with role-prefixed headers (y, x:name, c:name).

    Shared x/c columns are written once under both prefixes so the file
    round-trips through ``ingest_csv``.  Floats use shortest round-trip repr,
    which makes regeneration byte-stable.
    """
    header = ["y"] + [f"x:{nm}" for nm in data.x_names] + [f"c:{nm}" for nm in data.c_names]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(data.n):
            row = [repr(float(data.y[i]))]
            row += [repr(float(v)) for v in data.x[i]]
            row += [repr(float(v)) for v in data.c[i]]
            writer.writerow(row)


def ingest_csv(path) -> Dataset:
    """Load a Dataset from CSV.

    The header must contain a ``y`` column, at least one ``x:``-prefixed and
    one ``c:``-prefixed column.  x/c columns with the same name are treated as
    the same shared variable.  Raises:

    * EmptyCsvError — file has no header row
    * CsvSchemaError — missing/duplicate columns (names the offender)
    * CsvParseError — non-numeric cell (names 1-based data row and column)
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyCsvError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            dup = sorted({h for h in header if header.count(h) > 1})[0]
            raise CsvSchemaError(f"duplicate column {dup!r}")
        if "y" not in header:
            raise CsvSchemaError("missing required column 'y'")
        x_cols = [(i, h[2:]) for i, h in enumerate(header) if h.startswith("x:")]
        c_cols = [(i, h[2:]) for i, h in enumerate(header) if h.startswith("c:")]
        known = {"y"} | {h for h in header if h.startswith(("x:", "c:"))}
        unknown = [h for h in header if h not in known]
        if unknown:
            raise CsvSchemaError(f"unrecognised column {unknown[0]!r} (expected y, x:<name> or c:<name>)")
        if not x_cols:
            raise CsvSchemaError("no structural columns: need at least one 'x:<name>'")
        if not c_cols:
            raise CsvSchemaError("no conditioning columns: need at least one 'c:<name>'")
        y_idx = header.index("y")
        rows = []
        for r, raw in enumerate(reader, start=1):
            if not raw:
                continue
            if len(raw) != len(header):
                raise CsvParseError(r, "<row>", f"{len(raw)} fields, expected {len(header)}")
            vals = []
            for i, cell in enumerate(raw):
                try:
                    v = float(cell)
                except ValueError:
                    raise CsvParseError(r, header[i], cell) from None
                if not math.isfinite(v):
                    raise CsvParseError(r, header[i], cell)
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise EmptyCsvError(f"{path}: header only, no data rows")
    arr = np.asarray(rows, dtype=float)
    x_names = tuple(nm for _, nm in x_cols)
    c_names = tuple(nm for _, nm in c_cols)
    shared = tuple(
        (xi, ci)
        for xi, (_, xn) in enumerate(x_cols)
        for ci, (_, cn) in enumerate(c_cols)
        if xn == cn
    )
    return Dataset(
        y=arr[:, y_idx],
        x=arr[:, [i for i, _ in x_cols]],
        c=arr[:, [i for i, _ in c_cols]],
        x_names=x_names,
        c_names=c_names,
        shared=shared,
        truth=None,
        meta={"source": str(path)},
    )
