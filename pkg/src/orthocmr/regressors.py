"""Regression estimators behind a single small contract.

Every regressor exposes ``fit(X, y) -> self``, ``predict(X) -> (n,)`` and a
versioned ``to_dict``/``from_dict`` pair whose round-trip reproduces
predictions bit-exactly.  Three kinds are provided:

* ``ridge-on-basis`` — exact closed-form ridge over an explicit feature map.
* ``gradient-boosted-trees`` — scikit-learn gradient boosting; serialisation
  exports the raw node arrays and reloading uses our own traversal so no
  pickle is involved.
* ``feedforward-net`` — small fully connected torch network, float64, AdamW.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
import torch
from sklearn.ensemble import GradientBoostingRegressor

from .basis import PolynomialBasis, basis_from_dict
from .rng import derive_seed, make_rng


def _as_2d(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return x


class RidgeOnBasis:
    """Least squares / ridge over an explicit basis, solved in closed form.

    With l2 = 0 the solution is the exact least-squares fit (lstsq); with
    l2 > 0 we solve (Phi'Phi + l2 P) theta = Phi'y where P is the identity
    with constant basis columns zeroed out — the intercept is never
    penalised, so l2 -> inf shrinks toward the intercept-only predictor.  No
    scaling tricks, no iterative solver, so the optimality conditions hold to
    float precision.
    """

    kind = "ridge-on-basis"

    def __init__(self, basis=None, l2: float = 0.0):
        if l2 < 0:
            raise ValueError(f"l2: must be >= 0, got {l2}")
        self.basis = basis if basis is not None else PolynomialBasis(degree=1, include_bias=True)
        self.l2 = float(l2)
        self.coef_ = None
        self._pen_mask = None

    def fit(self, x, y) -> "RidgeOnBasis":
        x = _as_2d(x)
        y = np.asarray(y, dtype=float).reshape(-1)
        self.basis.fit(x)
        phi = self.basis.transform(x)
        self._pen_mask = (phi.std(axis=0) > 0).astype(float)
        if self.l2 == 0.0:
            self.coef_, *_ = np.linalg.lstsq(phi, y, rcond=None)
        else:
            gram = phi.T @ phi + self.l2 * np.diag(self._pen_mask)
            self.coef_ = np.linalg.solve(gram, phi.T @ y)
        return self

    def predict(self, x) -> np.ndarray:
        if self.coef_ is None:
            raise RuntimeError("predict() before fit()")
        return self.basis.transform(_as_2d(x)) @ self.coef_

    def training_objective(self, x, y, coef=None) -> float:
        """Penalised SSE at ``coef`` (defaults to the fitted coefficients)."""
        coef = self.coef_ if coef is None else np.asarray(coef, dtype=float)
        phi = self.basis.transform(_as_2d(x))
        resid = np.asarray(y, dtype=float).reshape(-1) - phi @ coef
        mask = self._pen_mask if self._pen_mask is not None else np.ones_like(coef)
        return float(resid @ resid + self.l2 * (mask * coef) @ coef)

    def to_dict(self) -> dict:
        return {
            "format": "orthocmr-regressor",
            "version": 1,
            "kind": self.kind,
            "l2": self.l2,
            "basis": self.basis.to_dict(),
            "coef": None if self.coef_ is None else self.coef_.tolist(),
            "pen_mask": None if self._pen_mask is None else self._pen_mask.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RidgeOnBasis":
        out = cls(basis=basis_from_dict(payload["basis"]), l2=payload["l2"])
        if payload["coef"] is not None:
            out.coef_ = np.asarray(payload["coef"], dtype=float)
        if payload.get("pen_mask") is not None:
            out._pen_mask = np.asarray(payload["pen_mask"], dtype=float)
        return out


class BoostedTrees:
    """Gradient-boosted regression trees (squared error, shrinkage 0.1).

    Thin wrapper over scikit-learn's estimator.  ``staged_train_mse`` exposes
    the per-stage training error so the stagewise-descent property can be
    checked.  Serialisation walks the fitted trees into plain arrays; the
    reloaded predictor replays the same traversal (inputs cast to float32
    exactly as the library does) and is bit-identical.
    """

    kind = "gradient-boosted-trees"

    def __init__(
        self,
        n_trees: int = 500,
        min_samples_leaf: int = 100,
        learning_rate: float = 0.1,
        max_depth: int = 3,
        seed: int = 0,
    ):
        if n_trees < 1:
            raise ValueError(f"n_trees: must be >= 1, got {n_trees}")
        if min_samples_leaf < 1:
            raise ValueError(f"min_samples_leaf: must be >= 1, got {min_samples_leaf}")
        self.n_trees = int(n_trees)
        self.min_samples_leaf = int(min_samples_leaf)
        self.learning_rate = float(learning_rate)
        self.max_depth = int(max_depth)
        self.seed = int(seed)
        self._model: Optional[GradientBoostingRegressor] = None
        self._export = None  # set after fit or load; used for serialisation + loaded predict

    def fit(self, x, y) -> "BoostedTrees":
        x = _as_2d(x)
        y = np.asarray(y, dtype=float).reshape(-1)
        self._model = GradientBoostingRegressor(
            n_estimators=self.n_trees,
            min_samples_leaf=min(self.min_samples_leaf, max(1, len(y) // 2)),
            learning_rate=self.learning_rate,
            max_depth=self.max_depth,
            random_state=derive_seed(self.seed, "gbt") % (2**32),
        )
        self._model.fit(x, y)
        self._export = self._export_trees()
        return self

    def _export_trees(self) -> dict:
        gbr = self._model
        init_value = float(np.mean(gbr.init_.constant_))
        trees = []
        for est in gbr.estimators_[:, 0]:
            t = est.tree_
            trees.append(
                {
                    "children_left": t.children_left.tolist(),
                    "children_right": t.children_right.tolist(),
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "value": t.value[:, 0, 0].tolist(),
                }
            )
        return {"init": init_value, "learning_rate": gbr.learning_rate, "trees": trees}

    def predict(self, x) -> np.ndarray:
        x = _as_2d(x)
        if x.shape[0] == 0:
            return np.empty(0)
        if self._model is not None:
            return self._model.predict(x)
        if self._export is None:
            raise RuntimeError("predict() before fit()")
        return _predict_exported(self._export, x)

    def staged_train_mse(self, x, y) -> np.ndarray:
        if self._model is None:
            raise RuntimeError("staged_train_mse needs the in-memory fitted model")
        y = np.asarray(y, dtype=float).reshape(-1)
        return np.array([float(np.mean((y - p) ** 2)) for p in self._model.staged_predict(_as_2d(x))])

    def to_dict(self) -> dict:
        if self._export is None:
            raise RuntimeError("serialise after fit()")
        return {
            "format": "orthocmr-regressor",
            "version": 1,
            "kind": self.kind,
            "config": {
                "n_trees": self.n_trees,
                "min_samples_leaf": self.min_samples_leaf,
                "learning_rate": self.learning_rate,
                "max_depth": self.max_depth,
                "seed": self.seed,
            },
            "ensemble": self._export,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "BoostedTrees":
        out = cls(**payload["config"])
        out._export = payload["ensemble"]
        out._model = None
        return out


def _predict_exported(export: dict, x: np.ndarray) -> np.ndarray:
    # scikit-learn casts inputs to float32 before routing them down the
    # trees; reproducing that cast is what makes the reload bit-exact.
    x32 = x.astype(np.float32)
    out = np.full(x.shape[0], export["init"], dtype=float)
    lr = export["learning_rate"]
    for tree in export["trees"]:
        left = np.asarray(tree["children_left"])
        right = np.asarray(tree["children_right"])
        feat = np.asarray(tree["feature"])
        thr = np.asarray(tree["threshold"])
        val = np.asarray(tree["value"])
        node = np.zeros(x.shape[0], dtype=np.int64)
        active = left[node] != -1
        while np.any(active):
            idx = np.nonzero(active)[0]
            nd = node[idx]
            go_left = x32[idx, feat[nd]] <= thr[nd]
            node[idx] = np.where(go_left, left[nd], right[nd])
            active[idx] = left[node[idx]] != -1
        out += lr * val[node]
    return out


class _MLP(torch.nn.Module):
    def __init__(self, d_in: int, hidden: tuple, d_out: int):
        super().__init__()
        dims = [d_in] + list(hidden)
        self.hidden = torch.nn.ModuleList(
            [torch.nn.Linear(dims[i], dims[i + 1]) for i in range(len(hidden))]
        )
        self.head = torch.nn.Linear(dims[-1], d_out)

    def forward(self, z, dropout_p: float = 0.0, gen: Optional[torch.Generator] = None):
        for layer in self.hidden:
            z = torch.relu(layer(z))
            if dropout_p > 0.0 and gen is not None:
                keep = (
                    torch.rand(z.shape, generator=gen, dtype=z.dtype) >= dropout_p
                ).to(z.dtype) / (1.0 - dropout_p)
                z = z * keep
        return self.head(z)


def _init_mlp(net: _MLP, rng: np.random.Generator) -> None:
    """He-style init drawn from our own stream so results do not depend on
    torch's global seed state."""
    with torch.no_grad():
        for lin in list(net.hidden) + [net.head]:
            fan_in = lin.weight.shape[1]
            w = rng.standard_normal(tuple(lin.weight.shape)) * math.sqrt(2.0 / fan_in)
            lin.weight.copy_(torch.from_numpy(w))
            lin.bias.zero_()


class _Affine:
    """Per-column standardisation frozen at fit time (constant cols pass through)."""

    def __init__(self, data: np.ndarray):
        self.mean = data.mean(axis=0)
        std = data.std(axis=0)
        self.std = np.where(std > 0, std, 1.0)

    def fwd(self, data):
        return (data - self.mean) / self.std

    def inv(self, data):
        return data * self.std + self.mean

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, payload):
        out = cls.__new__(cls)
        out.mean = np.asarray(payload["mean"], dtype=float)
        out.std = np.asarray(payload["std"], dtype=float)
        return out


class FeedforwardNet:
    """Fully connected regressor trained with AdamW on mini-batches.

    Inputs and targets are standardised internally (the affine maps are part
    of the model).  Regularisation is weight decay by default; dropout mode
    uses the sample-size heuristic rate 1000/(5000+N) when ``dropout="auto"``.
    Training stops early once the relative improvement of the epoch loss
    stays below ``early_stop_rtol`` for ``patience`` epochs.
    """

    kind = "feedforward-net"

    def __init__(
        self,
        hidden: tuple = (128, 64, 32),
        epochs: int = 200,
        batch_size: int = 128,
        lr: float = 1e-3,
        weight_decay: float = 1e-3,
        dropout=None,
        seed: int = 0,
        patience: int = 10,
        early_stop_rtol: float = 1e-5,
    ):
        self.hidden = tuple(int(h) for h in hidden)
        self.epochs = int(epochs)
        self.batch_size = int(batch_size)
        self.lr = float(lr)
        self.weight_decay = float(weight_decay)
        self.dropout = dropout
        self.seed = int(seed)
        self.patience = int(patience)
        self.early_stop_rtol = float(early_stop_rtol)
        self.net: Optional[_MLP] = None
        self._x_aff = None
        self._y_aff = None
        self.train_loss_path_ = None

    def _dropout_rate(self, n: int) -> float:
        if self.dropout is None:
            return 0.0
        if self.dropout == "auto":
            return 1000.0 / (5000.0 + n)
        return float(self.dropout)

    def fit(self, x, y) -> "FeedforwardNet":
        x = _as_2d(x)
        y = np.asarray(y, dtype=float).reshape(-1, 1)
        self._x_aff = _Affine(x)
        self._y_aff = _Affine(y)
        xs = torch.from_numpy(self._x_aff.fwd(x))
        ys = torch.from_numpy(self._y_aff.fwd(y))
        rng = make_rng(self.seed, "ffnet")
        self.net = _MLP(x.shape[1], self.hidden, 1).double()
        _init_mlp(self.net, rng)
        gen = torch.Generator().manual_seed(derive_seed(self.seed, "ffnet-dropout") % (2**63))
        p_drop = self._dropout_rate(len(y))
        opt = torch.optim.AdamW(
            self.net.parameters(), lr=self.lr, betas=(0.9, 0.999), eps=1e-8,
            weight_decay=self.weight_decay,
        )
        n = xs.shape[0]
        bs = min(self.batch_size, n)
        losses = []
        best = math.inf
        stale = 0
        for _ in range(self.epochs):
            order = rng.permutation(n)
            epoch_loss = 0.0
            for start in range(0, n, bs):
                idx = torch.from_numpy(order[start : start + bs])
                pred = self.net(xs[idx], dropout_p=p_drop, gen=gen)
                loss = torch.mean((pred - ys[idx]) ** 2)
                opt.zero_grad()
                loss.backward()
                opt.step()
                epoch_loss += float(loss.detach()) * len(idx)
            epoch_loss /= n
            losses.append(epoch_loss)
            if epoch_loss < best * (1.0 - self.early_stop_rtol):
                best = epoch_loss
                stale = 0
            else:
                stale += 1
                if stale >= self.patience:
                    break
        self.train_loss_path_ = np.asarray(losses)
        return self

    def predict(self, x) -> np.ndarray:
        if self.net is None:
            raise RuntimeError("predict() before fit()")
        xs = torch.from_numpy(self._x_aff.fwd(_as_2d(x)))
        with torch.no_grad():
            out = self.net(xs).numpy()
        return self._y_aff.inv(out).reshape(-1)

    def torch_loss(self, x, y) -> torch.Tensor:
        """Mean squared error on standardised data as a differentiable tensor
        (used by the finite-difference gradient check)."""
        xs = torch.from_numpy(self._x_aff.fwd(_as_2d(x)))
        ys = torch.from_numpy(self._y_aff.fwd(np.asarray(y, dtype=float).reshape(-1, 1)))
        return torch.mean((self.net(xs) - ys) ** 2)

    def to_dict(self) -> dict:
        if self.net is None:
            raise RuntimeError("serialise after fit()")
        return {
            "format": "orthocmr-regressor",
            "version": 1,
            "kind": self.kind,
            "config": {
                "hidden": list(self.hidden),
                "epochs": self.epochs,
                "batch_size": self.batch_size,
                "lr": self.lr,
                "weight_decay": self.weight_decay,
                "dropout": self.dropout,
                "seed": self.seed,
                "patience": self.patience,
                "early_stop_rtol": self.early_stop_rtol,
            },
            "x_affine": self._x_aff.to_dict(),
            "y_affine": self._y_aff.to_dict(),
            "weights": [p.detach().numpy().tolist() for p in self.net.parameters()],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "FeedforwardNet":
        cfg = dict(payload["config"])
        cfg["hidden"] = tuple(cfg["hidden"])
        out = cls(**cfg)
        out._x_aff = _Affine.from_dict(payload["x_affine"])
        out._y_aff = _Affine.from_dict(payload["y_affine"])
        d_in = len(payload["x_affine"]["mean"])
        out.net = _MLP(d_in, out.hidden, 1).double()
        with torch.no_grad():
            for param, saved in zip(out.net.parameters(), payload["weights"]):
                param.copy_(torch.tensor(saved, dtype=torch.float64))
        return out


class ConstantPredictor:
    """Predicts the training mean everywhere — the inconsistent-estimator
    baseline for the nuisance-rate diagnostic."""

    kind = "constant"

    def __init__(self):
        self.value_ = None

    def fit(self, x, y) -> "ConstantPredictor":
        self.value_ = float(np.mean(np.asarray(y, dtype=float)))
        return self

    def predict(self, x) -> np.ndarray:
        if self.value_ is None:
            raise RuntimeError("predict() before fit()")
        return np.full(_as_2d(x).shape[0], self.value_)

    def to_dict(self) -> dict:
        return {"format": "orthocmr-regressor", "version": 1, "kind": self.kind, "value": self.value_}

    @classmethod
    def from_dict(cls, payload: dict) -> "ConstantPredictor":
        out = cls()
        out.value_ = payload["value"]
        return out


_REGRESSOR_KINDS = {
    "ridge-on-basis": RidgeOnBasis,
    "gradient-boosted-trees": BoostedTrees,
    "feedforward-net": FeedforwardNet,
    "constant": ConstantPredictor,
}


def regressor_from_dict(payload: dict):
    kind = payload.get("kind")
    if kind not in _REGRESSOR_KINDS:
        raise ValueError(f"kind: unknown regressor kind {kind!r}")
    return _REGRESSOR_KINDS[kind].from_dict(payload)
