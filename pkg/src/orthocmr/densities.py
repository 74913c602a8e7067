"""Conditional density estimators for the first stage.

``GaussianMixtureDensity`` is a mixture density network: a (possibly empty)
stack of hidden layers feeding three heads — component logits, means and
std-deviations — trained by AdamW on the negative log-likelihood.  Epochs are
only accepted if they do not worsen the full-sample training NLL; a worsening
epoch is rolled back and the learning rate halved, so the recorded NLL path is
non-increasing by construction (backtracking restart).

``BinnedCategoricalDensity`` is a closed-form counting estimator for discrete
conditioning variables: the response is cut into equal-frequency bins and each
unique conditioning row keeps its own empirical bin distribution.  It exists
so that cross-fitting and scoring logic can be exercised with an exactly
reproducible, optimiser-free first stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch

from .basis import build_basis
from .rng import make_rng
from .regressors import RidgeOnBasis, _Affine, _as_2d, regressor_from_dict

SIGMA_MIN = 1e-3


@dataclass
class GaussianMixtureParams:
    """Parameters of a one-dimensional Gaussian mixture, sorted by mean."""

    weights: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    std_floor: float = 0.0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        self.means = np.asarray(self.means, dtype=float).reshape(-1)
        self.stds = np.asarray(self.stds, dtype=float).reshape(-1)
        if not (self.weights.shape == self.means.shape == self.stds.shape):
            raise ValueError("weights/means/stds must have equal length")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-8:
            raise ValueError(f"weights must form a simplex (sum={self.weights.sum()!r})")
        if np.any(self.stds < max(self.std_floor, 0.0)):
            raise ValueError("component std below the configured floor")
        order = np.argsort(self.means, kind="stable")
        self.weights = self.weights[order]
        self.means = self.means[order]
        self.stds = self.stds[order]

    @property
    def m(self) -> int:
        return len(self.weights)

    def mean(self) -> float:
        return float(self.weights @ self.means)

    def logpdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        z = (x[:, None] - self.means[None, :]) / self.stds[None, :]
        comp = -0.5 * z**2 - np.log(self.stds[None, :]) - 0.5 * math.log(2 * math.pi)
        comp = comp + np.log(self.weights[None, :])
        hi = comp.max(axis=1, keepdims=True)
        return (hi[:, 0] + np.log(np.exp(comp - hi).sum(axis=1)))


def mixture_expectation(params: GaussianMixtureParams, f, n_draws: int, seed: int) -> float:
    """Monte Carlo estimate of E[f(X)] under a Gaussian mixture."""
    if n_draws < 1:
        raise ValueError(f"n_draws: must be >= 1, got {n_draws}")
    rng = make_rng(seed, "mixture-expectation")
    comp = rng.choice(params.m, size=n_draws, p=params.weights)
    x = params.means[comp] + params.stds[comp] * rng.standard_normal(n_draws)
    return float(np.mean(f(x)))


class _MixtureNet(torch.nn.Module):
    def __init__(self, d_in: int, hidden: tuple, m: int):
        super().__init__()
        dims = [d_in] + list(hidden)
        self.hidden = torch.nn.ModuleList(
            [torch.nn.Linear(dims[i], dims[i + 1]) for i in range(len(hidden))]
        )
        self.logits = torch.nn.Linear(dims[-1], m)
        self.means = torch.nn.Linear(dims[-1], m)
        self.raw_stds = torch.nn.Linear(dims[-1], m)

    def forward(self, z):
        for layer in self.hidden:
            z = torch.relu(layer(z))
        stds = SIGMA_MIN + torch.nn.functional.softplus(self.raw_stds(z))
        return self.logits(z), self.means(z), stds


class GaussianMixtureDensity:
    """Mixture density network for a scalar response given conditioning c."""

    kind = "gaussian-mixture-net"

    def __init__(
        self,
        m: int = 10,
        hidden: tuple = (64, 32),
        epochs: int = 60,
        batch_size: int = 128,
        lr: float = 1e-3,
        weight_decay: float = 0.0,
        seed: int = 0,
        patience: int = 10,
        early_stop_rtol: float = 1e-5,
    ):
        if m < 1:
            raise ValueError(f"m: must be >= 1, got {m}")
        self.m = int(m)
        self.hidden = tuple(int(h) for h in hidden)
        self.epochs = int(epochs)
        self.batch_size = int(batch_size)
        self.lr = float(lr)
        self.weight_decay = float(weight_decay)
        self.seed = int(seed)
        self.patience = int(patience)
        self.early_stop_rtol = float(early_stop_rtol)
        self.net: Optional[_MixtureNet] = None
        self._c_aff = None
        self._x_aff = None
        self.train_nll_path_ = None

    def _nll(self, logits, means, stds, x):
        logw = torch.log_softmax(logits, dim=1)
        z = (x[:, None] - means) / stds
        comp = -0.5 * z**2 - torch.log(stds) - 0.5 * math.log(2 * math.pi)
        return -torch.logsumexp(logw + comp, dim=1).mean()

    def fit(self, c, x) -> "GaussianMixtureDensity":
        c = _as_2d(c)
        x = np.asarray(x, dtype=float).reshape(-1, 1)
        self._c_aff = _Affine(c)
        self._x_aff = _Affine(x)
        cs = torch.from_numpy(self._c_aff.fwd(c))
        xs = torch.from_numpy(self._x_aff.fwd(x)).reshape(-1)
        rng = make_rng(self.seed, "mdn")
        self.net = _MixtureNet(c.shape[1], self.hidden, self.m).double()
        self._init(rng, xs)
        lr = self.lr
        opt = torch.optim.AdamW(self.net.parameters(), lr=lr, betas=(0.9, 0.999), eps=1e-8,
                                weight_decay=self.weight_decay)
        n = cs.shape[0]
        bs = min(self.batch_size, n)

        def full_nll() -> float:
            with torch.no_grad():
                return float(self._nll(*self.net(cs), xs))

        path = [full_nll()]
        best_overall = path[0]
        stale = 0
        halvings = 0
        for _ in range(self.epochs):
            snapshot = {k: v.detach().clone() for k, v in self.net.state_dict().items()}
            order = rng.permutation(n)
            for start in range(0, n, bs):
                idx = torch.from_numpy(order[start : start + bs])
                loss = self._nll(*self.net(cs[idx]), xs[idx])
                opt.zero_grad()
                loss.backward()
                opt.step()
            nll = full_nll()
            if not math.isfinite(nll) or nll > path[-1]:
                # roll the epoch back and retry more cautiously
                self.net.load_state_dict(snapshot)
                halvings += 1
                if halvings > 10:
                    break
                lr *= 0.5
                opt = torch.optim.AdamW(self.net.parameters(), lr=lr, betas=(0.9, 0.999),
                                        eps=1e-8, weight_decay=self.weight_decay)
                continue
            path.append(nll)
            if nll < best_overall * (1.0 - self.early_stop_rtol) or (
                best_overall < 0 and nll < best_overall - self.early_stop_rtol * abs(best_overall)
            ):
                best_overall = nll
                stale = 0
            else:
                stale += 1
                if stale >= self.patience:
                    break
        self.train_nll_path_ = np.asarray(path)
        return self

    def _init(self, rng: np.random.Generator, xs: torch.Tensor) -> None:
        with torch.no_grad():
            for lin in list(self.net.hidden) + [self.net.logits, self.net.means, self.net.raw_stds]:
                fan_in = lin.weight.shape[1]
                w = rng.standard_normal(tuple(lin.weight.shape)) * math.sqrt(1.0 / fan_in)
                lin.weight.copy_(torch.from_numpy(w))
                lin.bias.zero_()
            # spread the component means over the response range so the
            # mixture does not start collapsed
            qs = np.quantile(xs.numpy(), np.linspace(0.1, 0.9, self.m))
            self.net.means.bias.copy_(torch.from_numpy(qs))

    def _params_std_space(self, c: np.ndarray):
        cs = torch.from_numpy(self._c_aff.fwd(_as_2d(c)))
        with torch.no_grad():
            logits, means, stds = self.net(cs)
            w = torch.softmax(logits, dim=1)
        return w.numpy(), means.numpy(), stds.numpy()

    def params(self, c) -> list:
        """Per-query mixture parameters in original response units."""
        if self.net is None:
            raise RuntimeError("params() before fit()")
        w, mu, sd = self._params_std_space(c)
        scale = float(self._x_aff.std[0])
        shift = float(self._x_aff.mean[0])
        floor = SIGMA_MIN * scale
        return [
            GaussianMixtureParams(
                weights=w[i], means=mu[i] * scale + shift, stds=sd[i] * scale, std_floor=floor * 0.999
            )
            for i in range(w.shape[0])
        ]

    def conditional_mean(self, c) -> np.ndarray:
        w, mu, _ = self._params_std_space(c)
        scale = float(self._x_aff.std[0])
        shift = float(self._x_aff.mean[0])
        return (w * mu).sum(axis=1) * scale + shift

    def sample(self, c, n_draws: int, seed: int) -> np.ndarray:
        """(n, n_draws) draws, row i conditioned on c[i]."""
        if self.net is None:
            raise RuntimeError("sample() before fit()")
        w, mu, sd = self._params_std_space(c)
        n = w.shape[0]
        rng = make_rng(seed, "mdn-sample")
        u = rng.random((n, n_draws))
        cum = np.cumsum(w, axis=1)
        comp = (u[:, :, None] > cum[:, None, :]).sum(axis=2)
        comp = np.minimum(comp, self.m - 1)
        rows = np.arange(n)[:, None]
        draws = mu[rows, comp] + sd[rows, comp] * rng.standard_normal((n, n_draws))
        return draws * float(self._x_aff.std[0]) + float(self._x_aff.mean[0])

    def logpdf(self, c, x) -> np.ndarray:
        w, mu, sd = self._params_std_space(c)
        scale = float(self._x_aff.std[0])
        shift = float(self._x_aff.mean[0])
        xv = np.asarray(x, dtype=float).reshape(-1)
        mu_o = mu * scale + shift
        sd_o = sd * scale
        z = (xv[:, None] - mu_o) / sd_o
        comp = -0.5 * z**2 - np.log(sd_o) - 0.5 * math.log(2 * math.pi) + np.log(w)
        hi = comp.max(axis=1, keepdims=True)
        return hi[:, 0] + np.log(np.exp(comp - hi).sum(axis=1))

    def to_dict(self) -> dict:
        if self.net is None:
            raise RuntimeError("serialise after fit()")
        return {
            "format": "orthocmr-density",
            "version": 1,
            "kind": self.kind,
            "config": {
                "m": self.m,
                "hidden": list(self.hidden),
                "epochs": self.epochs,
                "batch_size": self.batch_size,
                "lr": self.lr,
                "weight_decay": self.weight_decay,
                "seed": self.seed,
                "patience": self.patience,
                "early_stop_rtol": self.early_stop_rtol,
            },
            "c_affine": self._c_aff.to_dict(),
            "x_affine": self._x_aff.to_dict(),
            "weights": [p.detach().numpy().tolist() for p in self.net.parameters()],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "GaussianMixtureDensity":
        cfg = dict(payload["config"])
        cfg["hidden"] = tuple(cfg["hidden"])
        out = cls(**cfg)
        out._c_aff = _Affine.from_dict(payload["c_affine"])
        out._x_aff = _Affine.from_dict(payload["x_affine"])
        out.net = _MixtureNet(len(payload["c_affine"]["mean"]), out.hidden, out.m).double()
        with torch.no_grad():
            for param, saved in zip(out.net.parameters(), payload["weights"]):
                param.copy_(torch.tensor(saved, dtype=torch.float64))
        return out


class HomoscedasticGaussianDensity:
    """x | c ~ N(mean(c), std^2): constant-variance density, pluggable mean.

    The default mean is a closed-form ridge fit over a basis of c; pass
    ``mean_spec`` (a regressor spec dict, e.g. boosted trees) to model a
    nonlinear conditional mean instead.  The std is the training residual's
    population standard deviation (floored at SIGMA_MIN).

    ``antithetic=True`` samples draws in +/- pairs around the mean, which
    cancels the Monte Carlo error of conditional means of *linear* functions
    exactly and halves it elsewhere — used by the rate diagnostics, where MC
    attenuation would otherwise floor the measured convergence curve.
    """

    kind = "gaussian-ridge"

    def __init__(
        self,
        basis_spec: Optional[dict] = None,
        l2: float = 0.0,
        antithetic: bool = False,
        mean_spec: Optional[dict] = None,
        seed: int = 0,
    ):
        if basis_spec is not None and mean_spec is not None:
            raise ValueError("density: give either basis (ridge mean) or mean (regressor spec), not both")
        self.basis_spec = dict(basis_spec) if basis_spec is not None else None
        self.mean_spec = dict(mean_spec) if mean_spec is not None else None
        self.l2 = float(l2)
        self.antithetic = bool(antithetic)
        self.seed = int(seed)
        if self.mean_spec is not None:
            from .crossfit import build_regressor  # deferred: crossfit imports this module

            self._mean = build_regressor(self.mean_spec, seed=self.seed)
        else:
            self._mean = RidgeOnBasis(basis=build_basis(self.basis_spec), l2=self.l2)
        self.std_: Optional[float] = None

    def fit(self, c, x) -> "HomoscedasticGaussianDensity":
        c = _as_2d(c)
        x = np.asarray(x, dtype=float).reshape(-1)
        self._mean.fit(c, x)
        resid = x - self._mean.predict(c)
        self.std_ = max(float(resid.std()), SIGMA_MIN)
        return self

    def conditional_mean(self, c) -> np.ndarray:
        if self.std_ is None:
            raise RuntimeError("conditional_mean() before fit()")
        return self._mean.predict(_as_2d(c))

    def sample(self, c, n_draws: int, seed: int) -> np.ndarray:
        if self.std_ is None:
            raise RuntimeError("sample() before fit()")
        mu = self.conditional_mean(c)
        rng = make_rng(seed, "gaussian-ridge-sample")
        n = len(mu)
        if self.antithetic:
            half = (n_draws + 1) // 2
            z = rng.standard_normal((n, half))
            z = np.concatenate([z, -z], axis=1)[:, :n_draws]
        else:
            z = rng.standard_normal((n, n_draws))
        return mu[:, None] + self.std_ * z

    def logpdf(self, c, x) -> np.ndarray:
        mu = self.conditional_mean(c)
        xv = np.asarray(x, dtype=float).reshape(-1)
        z = (xv - mu) / self.std_
        return -0.5 * z**2 - math.log(self.std_) - 0.5 * math.log(2 * math.pi)

    def params(self, c) -> list:
        mu = self.conditional_mean(c)
        return [
            GaussianMixtureParams(weights=[1.0], means=[m], stds=[self.std_], std_floor=SIGMA_MIN * 0.999)
            for m in mu
        ]

    def to_dict(self) -> dict:
        if self.std_ is None:
            raise RuntimeError("serialise after fit()")
        return {
            "format": "orthocmr-density",
            "version": 1,
            "kind": self.kind,
            "basis_spec": self.basis_spec,
            "mean_spec": self.mean_spec,
            "seed": self.seed,
            "l2": self.l2,
            "antithetic": self.antithetic,
            "mean_model": self._mean.to_dict(),
            "std": self.std_,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "HomoscedasticGaussianDensity":
        out = cls(
            basis_spec=payload["basis_spec"],
            l2=payload["l2"],
            antithetic=payload["antithetic"],
            mean_spec=payload.get("mean_spec"),
            seed=payload.get("seed", 0),
        )
        out._mean = regressor_from_dict(payload["mean_model"])
        out.std_ = float(payload["std"])
        return out


class BinnedCategoricalDensity:
    """Counting density over response bins, per unique conditioning row.

    Bin probabilities equal the empirical conditional frequencies exactly;
    expectations are computed from the stored per-group response values, so
    ``expectation`` is deterministic (no sampling noise).  Querying a
    conditioning row never seen in training is an error — this estimator is
    meant for discrete c.
    """

    kind = "binned-categorical"

    def __init__(self, n_bins: int = 32):
        if n_bins < 1:
            raise ValueError(f"n_bins: must be >= 1, got {n_bins}")
        self.n_bins = int(n_bins)
        self._edges = None
        self._groups = None  # (G, d_c) unique rows
        self._probs = None  # (G, B)
        self._values = None  # list of lists of np arrays

    def fit(self, c, x) -> "BinnedCategoricalDensity":
        c = _as_2d(c)
        x = np.asarray(x, dtype=float).reshape(-1)
        uniq = np.unique(x)
        if len(uniq) <= self.n_bins:
            edges = (uniq[:-1] + uniq[1:]) / 2.0
        else:
            qs = np.quantile(x, np.linspace(0, 1, self.n_bins + 1)[1:-1])
            edges = np.unique(qs)
        bin_idx = np.searchsorted(edges, x, side="right")
        n_bins = len(edges) + 1
        groups, inverse = np.unique(c, axis=0, return_inverse=True)
        probs = np.zeros((len(groups), n_bins))
        values = [[np.empty(0)] * n_bins for _ in range(len(groups))]
        for g in range(len(groups)):
            sel = inverse == g
            xs_g = x[sel]
            bins_g = bin_idx[sel]
            counts = np.bincount(bins_g, minlength=n_bins).astype(float)
            probs[g] = counts / counts.sum()
            for b in np.unique(bins_g):
                values[g][int(b)] = np.sort(xs_g[bins_g == b])
        self._edges = edges
        self._groups = groups
        self._probs = probs
        self._values = values
        return self

    def _group_of(self, c: np.ndarray) -> np.ndarray:
        c = _as_2d(c)
        out = np.empty(c.shape[0], dtype=int)
        for i, row in enumerate(c):
            match = np.nonzero((self._groups == row).all(axis=1))[0]
            if match.size == 0:
                raise ValueError(f"conditioning row {row.tolist()} was not seen in training")
            out[i] = match[0]
        return out

    def prob_table(self, c) -> np.ndarray:
        if self._probs is None:
            raise RuntimeError("prob_table() before fit()")
        return self._probs[self._group_of(c)]

    def expectation(self, f, c) -> np.ndarray:
        """Exact empirical E[f(X) | c] per query row."""
        if self._probs is None:
            raise RuntimeError("expectation() before fit()")
        gi = self._group_of(c)
        out = np.empty(len(gi))
        for i, g in enumerate(gi):
            acc = 0.0
            for b, p in enumerate(self._probs[g]):
                if p > 0:
                    acc += p * float(np.mean(f(self._values[g][b])))
            out[i] = acc
        return out

    def conditional_mean(self, c) -> np.ndarray:
        return self.expectation(lambda v: v, c)

    def sample(self, c, n_draws: int, seed: int) -> np.ndarray:
        if self._probs is None:
            raise RuntimeError("sample() before fit()")
        gi = self._group_of(c)
        rng = make_rng(seed, "binned-sample")
        out = np.empty((len(gi), n_draws))
        for i, g in enumerate(gi):
            bins = rng.choice(len(self._probs[g]), size=n_draws, p=self._probs[g])
            for j, b in enumerate(bins):
                vals = self._values[g][b]
                out[i, j] = vals[rng.integers(0, len(vals))]
        return out

    def to_dict(self) -> dict:
        if self._probs is None:
            raise RuntimeError("serialise after fit()")
        return {
            "format": "orthocmr-density",
            "version": 1,
            "kind": self.kind,
            "n_bins": self.n_bins,
            "edges": self._edges.tolist(),
            "groups": self._groups.tolist(),
            "probs": self._probs.tolist(),
            "values": [[v.tolist() for v in row] for row in self._values],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "BinnedCategoricalDensity":
        out = cls(n_bins=payload["n_bins"])
        out._edges = np.asarray(payload["edges"], dtype=float)
        out._groups = np.asarray(payload["groups"], dtype=float)
        out._probs = np.asarray(payload["probs"], dtype=float)
        out._values = [[np.asarray(v, dtype=float) for v in row] for row in payload["values"]]
        return out


_DENSITY_KINDS = {
    "gaussian-mixture-net": GaussianMixtureDensity,
    "gaussian-ridge": HomoscedasticGaussianDensity,
    "binned-categorical": BinnedCategoricalDensity,
}


def density_from_dict(payload: dict):
    kind = payload.get("kind")
    if kind not in _DENSITY_KINDS:
        raise ValueError(f"kind: unknown density kind {kind!r}")
    return _DENSITY_KINDS[kind].from_dict(payload)
