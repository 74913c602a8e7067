"""Second-stage fitting: the cross-fitted orthogonal objective and baselines.

The empirical objective is

    L(theta) = (1/K) sum_k mean_{i in fold k} (t_i - ghat_k(f_theta, c_i))^2

where t_i is the fold-k outcome regression evaluated at c_i (or y_i for the
naive baseline) and ghat_k(f, c_i) is a Monte Carlo average of f over cached
draws from the fold-k conditional density.  The draws are sampled once per
fit and reused by every objective evaluation, which makes the objective a
deterministic function of theta — the closed-form solution, the gradient
path and any reported objective value are all consistent with each other.

Three solvers:

* ``closed-form`` (linear-in-basis only): the MC average commutes with the
  basis, so the per-row pseudo-feature m_i = mean_j phi(x_ij) turns the
  objective into weighted least squares, solved exactly.
* ``gradient``: mini-batch AdamW over folds in round-robin order, cycling
  each fold once per epoch without replacement; early stop when the relative
  improvement of the full objective stays below 1e-5 for 10 epochs; the
  best-seen parameters are restored at the end.
* ``tree-stack`` (boosted-trees only): the plug-in reduction — draws become
  training rows labelled with their row's target and a boosted regressor is
  fit on the stack.

When ``standardise`` is on, the structural model is trained in standardised
x/y units (scaling recorded on the fit); nuisances stay in original units and
are converted on the fly when the caches are built.
"""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np
import torch

from .basis import basis_from_dict
from .crossfit import CrossFitState, build_basis, full_sample_nuisances
from .datasets import Dataset
from .regressors import BoostedTrees, _Affine, _MLP, _init_mlp, regressor_from_dict
from .rng import derive_seed, make_rng


class FitError(RuntimeError):
    """Second-stage optimisation failed (divergence, bad inputs)."""


@dataclass
class FitConfig:
    k_folds: int = 10
    mc_draws: int = 100
    batch_size: int = 128
    epochs: int = 200
    lr: float = 1e-3
    weight_decay: float = 0.0
    l2: float = 0.0  # ridge penalty of the closed-form solver
    score: str = "orthogonal"
    solver: str = "closed-form"
    standardise: bool = True
    patience: int = 10
    early_stop_rtol: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.k_folds < 2:
            raise ValueError(f"k_folds: must be >= 2, got {self.k_folds}")
        if self.mc_draws < 1:
            raise ValueError(f"mc_draws: must be >= 1, got {self.mc_draws}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size: must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs: must be >= 0, got {self.epochs}")
        if self.score not in ("orthogonal", "naive"):
            raise ValueError(f"score: expected 'orthogonal' or 'naive', got {self.score!r}")
        if self.solver not in ("closed-form", "gradient", "tree-stack"):
            raise ValueError(
                f"solver: expected 'closed-form', 'gradient' or 'tree-stack', got {self.solver!r}"
            )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ScalingInfo:
    """Affine x/y maps the structural model was trained under."""

    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float

    @classmethod
    def from_data(cls, x: np.ndarray, y: np.ndarray) -> "ScalingInfo":
        xs = x.std(axis=0)
        return cls(
            x_mean=x.mean(axis=0),
            x_std=np.where(xs > 0, xs, 1.0),
            y_mean=float(y.mean()),
            y_std=float(y.std()) or 1.0,
        )

    @classmethod
    def identity(cls, d_x: int) -> "ScalingInfo":
        return cls(x_mean=np.zeros(d_x), x_std=np.ones(d_x), y_mean=0.0, y_std=1.0)

    def x_fwd(self, x):
        return (np.asarray(x, dtype=float) - self.x_mean) / self.x_std

    def y_fwd(self, y):
        return (np.asarray(y, dtype=float) - self.y_mean) / self.y_std

    def y_inv(self, y):
        return np.asarray(y, dtype=float) * self.y_std + self.y_mean

    def to_dict(self) -> dict:
        return {
            "x_mean": self.x_mean.tolist(),
            "x_std": self.x_std.tolist(),
            "y_mean": self.y_mean,
            "y_std": self.y_std,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ScalingInfo":
        return cls(
            x_mean=np.asarray(payload["x_mean"], dtype=float),
            x_std=np.asarray(payload["x_std"], dtype=float),
            y_mean=float(payload["y_mean"]),
            y_std=float(payload["y_std"]),
        )


class LinearInBasis:
    """f_theta(x) = theta . phi(x) for an explicit basis phi."""

    arch = "linear-in-basis"

    def __init__(self, basis=None):
        self.basis = basis if basis is not None else build_basis({"kind": "polynomial", "degree": 1})
        self.theta: Optional[np.ndarray] = None
        self._d_x: Optional[int] = None

    def prepare(self, x_sample: np.ndarray) -> "LinearInBasis":
        x_sample = np.atleast_2d(np.asarray(x_sample, dtype=float))
        if self._d_x is None:
            self.basis.fit(x_sample)
            self._d_x = x_sample.shape[1]
            self.theta = np.zeros(self.basis.n_features)
        elif self._d_x != x_sample.shape[1]:
            raise ValueError(f"model prepared for d_x={self._d_x}, data has {x_sample.shape[1]}")
        return self

    def features(self, x) -> np.ndarray:
        return self.basis.transform(np.atleast_2d(np.asarray(x, dtype=float)))

    def predict(self, x) -> np.ndarray:
        if self.theta is None:
            raise RuntimeError("predict() before prepare()/fit")
        return self.features(x) @ self.theta

    def theta_vector(self) -> np.ndarray:
        return np.asarray(self.theta, dtype=float).copy()

    def to_dict(self) -> dict:
        return {
            "arch": self.arch,
            "basis": self.basis.to_dict(),
            "theta": None if self.theta is None else self.theta.tolist(),
            "d_x": self._d_x,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "LinearInBasis":
        out = cls(basis=basis_from_dict(payload["basis"]))
        out.theta = None if payload["theta"] is None else np.asarray(payload["theta"], dtype=float)
        out._d_x = payload["d_x"]
        return out


class FeedforwardStructural:
    """Fully connected f_theta with an input affine frozen at prepare time."""

    arch = "feedforward-net"

    def __init__(self, hidden=(128, 64, 32), seed: int = 0):
        self.hidden = tuple(int(h) for h in hidden)
        self.seed = int(seed)
        self.net: Optional[_MLP] = None
        self._aff: Optional[_Affine] = None

    def prepare(self, x_sample: np.ndarray) -> "FeedforwardStructural":
        x_sample = np.atleast_2d(np.asarray(x_sample, dtype=float))
        if self.net is None:
            self._aff = _Affine(x_sample)
            self.net = _MLP(x_sample.shape[1], self.hidden, 1).double()
            _init_mlp(self.net, make_rng(self.seed, "structural-init"))
        elif len(self._aff.mean) != x_sample.shape[1]:
            raise ValueError(
                f"model prepared for d_x={len(self._aff.mean)}, data has {x_sample.shape[1]}"
            )
        return self

    def torch_forward(self, x_t: torch.Tensor) -> torch.Tensor:
        mean = torch.from_numpy(np.asarray(self._aff.mean, dtype=float))
        std = torch.from_numpy(np.asarray(self._aff.std, dtype=float))
        return self.net((x_t - mean) / std).reshape(-1)

    def predict(self, x) -> np.ndarray:
        if self.net is None:
            raise RuntimeError("predict() before prepare()/fit")
        x = np.atleast_2d(np.asarray(x, dtype=float))
        with torch.no_grad():
            return self.torch_forward(torch.from_numpy(x)).numpy()

    def theta_vector(self) -> np.ndarray:
        return np.concatenate([p.detach().numpy().ravel() for p in self.net.parameters()])

    def to_dict(self) -> dict:
        return {
            "arch": self.arch,
            "hidden": list(self.hidden),
            "seed": self.seed,
            "affine": None if self._aff is None else self._aff.to_dict(),
            "weights": None
            if self.net is None
            else [p.detach().numpy().tolist() for p in self.net.parameters()],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "FeedforwardStructural":
        out = cls(hidden=tuple(payload["hidden"]), seed=payload["seed"])
        if payload["affine"] is not None:
            out._aff = _Affine.from_dict(payload["affine"])
            out.net = _MLP(len(out._aff.mean), out.hidden, 1).double()
            with torch.no_grad():
                for param, saved in zip(out.net.parameters(), payload["weights"]):
                    param.copy_(torch.tensor(saved, dtype=torch.float64))
        return out


class BoostedTreeStructural:
    """Boosted-tree f fitted by regressing fold targets on density draws.

    Tree ensembles cannot follow the objective's gradient directly, so this
    arch uses the usual plug-in reduction: every Monte Carlo draw x_ij becomes
    a training row labelled with its row's target t_i, and one boosted
    regressor is fit on the stack.  The population argmin is E[t | x-draw],
    which coincides with the objective's minimiser only in the limit of an
    exhaustive hypothesis class; the point of carrying it is that the same
    reduction serves the orthogonal and the naive score, so their comparison
    isolates the score and the cross-fitting, not the solver.
    """

    arch = "boosted-trees"

    def __init__(
        self,
        n_trees: int = 500,
        min_samples_leaf: int = 10,
        learning_rate: float = 0.1,
        max_depth: int = 3,
        seed: int = 0,
    ):
        self.trees = BoostedTrees(
            n_trees=n_trees,
            min_samples_leaf=min_samples_leaf,
            learning_rate=learning_rate,
            max_depth=max_depth,
            seed=seed,
        )
        self._d_x: Optional[int] = None

    def prepare(self, x_sample: np.ndarray) -> "BoostedTreeStructural":
        x_sample = np.atleast_2d(np.asarray(x_sample, dtype=float))
        if self._d_x is None:
            self._d_x = x_sample.shape[1]
        elif self._d_x != x_sample.shape[1]:
            raise ValueError(f"model prepared for d_x={self._d_x}, data has {x_sample.shape[1]}")
        return self

    def predict(self, x) -> np.ndarray:
        return self.trees.predict(np.atleast_2d(np.asarray(x, dtype=float)))

    def theta_vector(self) -> np.ndarray:
        return np.empty(0)  # no finite-dimensional parameter to report

    def to_dict(self) -> dict:
        return {"arch": self.arch, "trees": self.trees.to_dict(), "d_x": self._d_x}

    @classmethod
    def from_dict(cls, payload: dict) -> "BoostedTreeStructural":
        out = cls()
        out.trees = regressor_from_dict(payload["trees"])
        out._d_x = payload["d_x"]
        return out


def build_structural(spec: dict, seed: int = 0):
    spec = dict(spec)
    arch = spec.pop("arch", None)
    if arch == "linear-in-basis":
        return LinearInBasis(basis=build_basis(spec.pop("basis", None)))
    if arch == "feedforward-net":
        spec.setdefault("seed", seed)
        if "hidden" in spec:
            spec["hidden"] = tuple(spec["hidden"])
        return FeedforwardStructural(**spec)
    if arch == "boosted-trees":
        spec.setdefault("seed", seed)
        return BoostedTreeStructural(**spec)
    raise ValueError(f"model.arch: unknown structural arch {arch!r}")


def structural_from_dict(payload: dict):
    arch = payload.get("arch")
    if arch == "linear-in-basis":
        return LinearInBasis.from_dict(payload)
    if arch == "feedforward-net":
        return FeedforwardStructural.from_dict(payload)
    if arch == "boosted-trees":
        return BoostedTreeStructural.from_dict(payload)
    raise ValueError(f"arch: unknown structural arch {arch!r}")


@dataclass
class _FoldCache:
    rows: np.ndarray  # dataset row indices of this fold
    targets: np.ndarray  # t_i in model (standardised) units
    draws: Optional[np.ndarray]  # (n_k, mc_draws, d_x) in model units; dropped on the linear path
    pseudo: Optional[np.ndarray] = None  # (n_k, p) mean basis features (linear only)


class _Workspace:
    """Cached per-fold material the objective is a pure function of."""

    def __init__(self, caches: List[_FoldCache], model):
        self.caches = caches
        self.model = model

    def objective(self, theta: Optional[np.ndarray] = None) -> float:
        total = 0.0
        k_folds = len(self.caches)
        for cache in self.caches:
            g = self._ghat(cache, theta)
            total += float(np.mean((cache.targets - g) ** 2)) / k_folds
        return total

    def _ghat(self, cache: _FoldCache, theta: Optional[np.ndarray] = None) -> np.ndarray:
        if isinstance(self.model, LinearInBasis):
            th = self.model.theta if theta is None else np.asarray(theta, dtype=float)
            return cache.pseudo @ th
        if theta is not None:
            raise ValueError("explicit theta only supported for linear-in-basis models")
        n_k, m, d = cache.draws.shape
        preds = self.model.predict(cache.draws.reshape(n_k * m, d))
        return preds.reshape(n_k, m).mean(axis=1)


def _build_workspace(
    data: Dataset, state: CrossFitState, cfg: FitConfig, model, scaling: ScalingInfo
) -> _Workspace:
    """Sample density draws once per fold and cache everything the solver needs."""
    caches: List[_FoldCache] = []
    dcol = data.density_cols[0]
    for k, fold_rows in enumerate(state.fold_plan.folds):
        pair = state.nuisances[k]
        c_fold = data.c[fold_rows]
        if cfg.score == "naive" or pair.s is None:
            targets_raw = data.y[fold_rows]
        else:
            targets_raw = np.asarray(pair.s.predict(c_fold), dtype=float).reshape(-1)
        draws_raw = pair.density.sample(c_fold, cfg.mc_draws, seed=derive_seed(cfg.seed, "mc-draws", k))
        n_k = len(fold_rows)
        x_tilde = np.empty((n_k, cfg.mc_draws, data.x.shape[1]))
        for xi, _ in data.shared:
            x_tilde[:, :, xi] = data.x[fold_rows, xi][:, None]
        x_tilde[:, :, dcol] = draws_raw
        x_std = (x_tilde - scaling.x_mean) / scaling.x_std
        cache = _FoldCache(
            rows=np.asarray(fold_rows),
            targets=scaling.y_fwd(targets_raw),
            draws=x_std,
        )
        if isinstance(model, LinearInBasis):
            flat = x_std.reshape(n_k * cfg.mc_draws, data.x.shape[1])
            feats = model.features(flat)
            cache.pseudo = feats.reshape(n_k, cfg.mc_draws, -1).mean(axis=1)
            cache.draws = None
        caches.append(cache)
    return _Workspace(caches, model)


def _solve_tree_stack(ws: _Workspace, cfg: FitConfig) -> None:
    model = ws.model
    if not isinstance(model, BoostedTreeStructural):
        raise FitError("tree-stack solver requires a boosted-trees structural model")
    rows, labels = [], []
    for cache in ws.caches:
        n_k, m, d = cache.draws.shape
        rows.append(cache.draws.reshape(n_k * m, d))
        labels.append(np.repeat(cache.targets, m))
    model.trees.fit(np.vstack(rows), np.concatenate(labels))


def _solve_closed_form(ws: _Workspace, cfg: FitConfig) -> None:
    model = ws.model
    if not isinstance(model, LinearInBasis):
        raise FitError("closed-form solver requires a linear-in-basis structural model")
    k_folds = len(ws.caches)
    blocks, targets = [], []
    for cache in ws.caches:
        w = 1.0 / (k_folds * len(cache.rows))
        blocks.append(math.sqrt(w) * cache.pseudo)
        targets.append(math.sqrt(w) * cache.targets)
    a = np.vstack(blocks)
    b = np.concatenate(targets)
    if cfg.l2 > 0:
        p = a.shape[1]
        a = np.vstack([a, math.sqrt(cfg.l2) * np.eye(p)])
        b = np.concatenate([b, np.zeros(p)])
    theta, *_ = np.linalg.lstsq(a, b, rcond=None)
    if not np.all(np.isfinite(theta)):
        raise FitError("closed-form solution is non-finite")
    model.theta = theta


def _torch_ghat(model, cache: _FoldCache, idx: np.ndarray, tensors: dict) -> torch.Tensor:
    if isinstance(model, LinearInBasis):
        return tensors["pseudo"][idx] @ tensors["theta"]
    sel = tensors["draws"][idx]
    b, m, d = sel.shape
    return model.torch_forward(sel.reshape(b * m, d)).reshape(b, m).mean(dim=1)


def _solve_gradient(ws: _Workspace, cfg: FitConfig) -> List[float]:
    """Algorithm-style mini-batch descent; returns the per-epoch objective path."""
    model = ws.model
    linear = isinstance(model, LinearInBasis)
    fold_tensors = []
    for cache in ws.caches:
        t = {"targets": torch.from_numpy(cache.targets)}
        if linear:
            t["pseudo"] = torch.from_numpy(cache.pseudo)
        else:
            t["draws"] = torch.from_numpy(cache.draws)
        fold_tensors.append(t)
    if linear:
        theta_t = torch.from_numpy(model.theta.copy()).requires_grad_(True)
        params = [theta_t]
        for t in fold_tensors:
            t["theta"] = theta_t
    else:
        params = list(model.net.parameters())
        theta_t = None
    opt = torch.optim.AdamW(params, lr=cfg.lr, betas=(0.9, 0.999), eps=1e-8,
                            weight_decay=cfg.weight_decay)
    rng = make_rng(cfg.seed, "second-stage-batches")

    def sync_and_objective() -> float:
        if linear:
            model.theta = theta_t.detach().numpy().copy()
        return ws.objective()

    def snapshot():
        if linear:
            return theta_t.detach().clone()
        return {k: v.detach().clone() for k, v in model.net.state_dict().items()}

    def restore(snap):
        if linear:
            with torch.no_grad():
                theta_t.copy_(snap)
            model.theta = theta_t.detach().numpy().copy()
        else:
            model.net.load_state_dict(snap)

    trajectory = [sync_and_objective()]
    best_obj, best_snap = trajectory[0], snapshot()
    stale = 0
    for epoch in range(cfg.epochs):
        queues = []
        for cache in ws.caches:
            order = rng.permutation(len(cache.rows))
            queues.append([order[s : s + cfg.batch_size] for s in range(0, len(order), cfg.batch_size)])
        for b in range(max(len(q) for q in queues)):
            for k, cache in enumerate(ws.caches):
                if b >= len(queues[k]):
                    continue
                idx = queues[k][b]
                g = _torch_ghat(model, cache, idx, fold_tensors[k])
                loss = torch.mean((fold_tensors[k]["targets"][idx] - g) ** 2)
                opt.zero_grad()
                loss.backward()
                opt.step()
        obj = sync_and_objective()
        if not math.isfinite(obj):
            raise FitError(f"non-finite objective at epoch {epoch}")
        trajectory.append(obj)
        if obj < best_obj * (1.0 - cfg.early_stop_rtol):
            best_obj, best_snap = obj, snapshot()
            stale = 0
        else:
            if obj < best_obj:
                best_obj, best_snap = obj, snapshot()
            stale += 1
            if stale >= cfg.patience:
                break
    restore(best_snap)
    if cfg.epochs > 0:
        trajectory.append(ws.objective())
    return trajectory


@dataclass
class FittedCMR:
    """A fitted structural model plus everything needed to audit or reuse it."""

    model: object
    scaling: ScalingInfo
    trajectory: np.ndarray
    config: dict
    seeds: dict
    audit: dict
    score: str
    _workspace: Optional[_Workspace] = field(default=None, repr=False, compare=False)

    @property
    def arch(self) -> str:
        return self.model.arch

    def theta(self) -> np.ndarray:
        return self.model.theta_vector()

    def predict(self, x) -> np.ndarray:
        """Structural predictions in original (de-standardised) units."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[0] == 0:
            return np.empty(0)
        if x.shape[1] != len(self.scaling.x_mean):
            raise ValueError(f"expected {len(self.scaling.x_mean)} columns, got {x.shape[1]}")
        return self.scaling.y_inv(self.model.predict(self.scaling.x_fwd(x)))

    def empirical_objective(self, theta=None) -> float:
        """Pooled cross-fitted objective on the cached fit material (in-memory only)."""
        if self._workspace is None:
            raise RuntimeError("objective cache not available on a deserialised fit")
        return self._workspace.objective(theta)

    def to_dict(self) -> dict:
        return {
            "format": "orthocmr-fit",
            "version": 1,
            "arch": self.arch,
            "score": self.score,
            "model": self.model.to_dict(),
            "scaling": self.scaling.to_dict(),
            "trajectory": [float(v) for v in self.trajectory],
            "config": dict(self.config),
            "seeds": dict(self.seeds),
            "audit": dict(self.audit),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "FittedCMR":
        return cls(
            model=structural_from_dict(payload["model"]),
            scaling=ScalingInfo.from_dict(payload["scaling"]),
            trajectory=np.asarray(payload["trajectory"], dtype=float),
            config=dict(payload["config"]),
            seeds=dict(payload["seeds"]),
            audit=dict(payload["audit"]),
            score=payload["score"],
        )


def _run_fit(data: Dataset, state: CrossFitState, cfg: FitConfig, init) -> FittedCMR:
    if state.fold_plan.n != data.n:
        raise ValueError(f"fold plan built for n={state.fold_plan.n}, data has n={data.n}")
    model = copy.deepcopy(init)
    scaling = (
        ScalingInfo.from_data(data.x, data.y) if cfg.standardise else ScalingInfo.identity(data.x.shape[1])
    )
    model.prepare(scaling.x_fwd(data.x))
    ws = _build_workspace(data, state, cfg, model, scaling)
    if cfg.solver == "closed-form":
        _solve_closed_form(ws, cfg)
        trajectory = [ws.objective()]
    elif cfg.solver == "tree-stack":
        _solve_tree_stack(ws, cfg)
        trajectory = [ws.objective()]
    else:
        if isinstance(model, BoostedTreeStructural):
            raise FitError("boosted-trees structural models need the tree-stack solver")
        trajectory = _solve_gradient(ws, cfg)
    if not np.all(np.isfinite(trajectory)):
        raise FitError("non-finite value in objective trajectory")
    seeds = {
        "config_seed": cfg.seed,
        "mc_draws": {str(k): derive_seed(cfg.seed, "mc-draws", k) for k in range(state.fold_plan.k)},
    }
    return FittedCMR(
        model=model,
        scaling=scaling,
        trajectory=np.asarray(trajectory),
        config=cfg.to_dict(),
        seeds=seeds,
        audit=state.audit(),
        score=cfg.score,
        _workspace=ws,
    )


def _with(cfg: FitConfig, **changes) -> FitConfig:
    payload = cfg.to_dict()
    payload.update(changes)
    return FitConfig(**payload)


def fit_dml_cmr(data: Dataset, state: CrossFitState, cfg: FitConfig, init) -> FittedCMR:
    """Minimise the cross-fitted orthogonal objective from a prepared state."""
    return _run_fit(data, state, _with(cfg, score="orthogonal"), init)


def fit_with_state(data: Dataset, state: CrossFitState, cfg: FitConfig, init) -> FittedCMR:
    """Fit against an externally built nuisance state, honouring cfg.score.

    Escape hatch for diagnostics that substitute hand-crafted (exact or
    deliberately corrupted) nuisances for the fitted ones.
    """
    return _run_fit(data, state, cfg, init)


def fit_ce_dml_cmr(data: Dataset, cfg: FitConfig, init, s_spec: dict, density_spec: dict) -> FittedCMR:
    """Computationally efficient variant: one nuisance pair on the full sample."""
    state = full_sample_nuisances(data, cfg, s_spec, density_spec)
    return _run_fit(data, state, _with(cfg, score="orthogonal"), init)


def fit_naive_two_stage(data: Dataset, cfg: FitConfig, init, density_spec: dict) -> FittedCMR:
    """Two-stage baseline: density fit once on all rows, then regress y on ghat.

    No cross-fitting and no outcome regression — the plug-in estimator the
    orthogonal objective is benchmarked against.
    """
    state = full_sample_nuisances(data, cfg, None, density_spec)
    return _run_fit(data, state, _with(cfg, score="naive"), init)


def predict_structural(fit: FittedCMR, x_grid) -> np.ndarray:
    """Evaluate a fitted structural model on a grid (original units)."""
    x_grid = np.asarray(x_grid, dtype=float)
    if x_grid.size == 0:
        return np.empty(0)
    return fit.predict(np.atleast_2d(x_grid))
