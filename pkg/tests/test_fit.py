"""Objective solvers and the fitted-estimator container.

The linear-Gaussian toy keeps everything checkable: with exact nuisances the
pooled objective is a quadratic in theta whose argmin is the true slope, and
point-mass densities remove Monte Carlo noise entirely so objective values
can be recomputed by hand.
"""

import json

import numpy as np
import pytest

from orthocmr.crossfit import CrossFitState, crossfit_nuisances
from orthocmr.datasets import LinearToyParams, gen_linear_toy
from orthocmr.fit import (
    BoostedTreeStructural,
    FeedforwardStructural,
    FitConfig,
    FitError,
    FittedCMR,
    LinearInBasis,
    ScalingInfo,
    build_structural,
    fit_ce_dml_cmr,
    fit_dml_cmr,
    fit_naive_two_stage,
    fit_with_state,
    predict_structural,
)
from orthocmr.folds import make_fold_plan
from orthocmr.problems import ClosureRegressor, GaussianConditional
from orthocmr.rates import TOY_DENSITY_SPEC, TOY_S_SPEC
from orthocmr.rng import derive_seed
from orthocmr.score import NuisancePair

LINEAR_NO_BIAS = {"kind": "polynomial", "degree": 1, "include_bias": False}


def exact_state(data, k_folds=2, seed=0, std=0.0, mean_shift=0.0):
    """Hand-built cross-fit state with closed-form nuisances (optionally corrupted)."""
    s = ClosureRegressor(lambda z: 2.0 * z)
    dens = GaussianConditional(lambda z: z + mean_shift, std=std)
    plan = make_fold_plan(data.n, k_folds, seed)
    pairs = [NuisancePair(s=s, density=dens, shared=(), d_x=1) for _ in range(k_folds)]
    return CrossFitState(
        fold_plan=plan,
        nuisances=pairs,
        train_indices=[plan.complement(i) for i in range(k_folds)],
        n_fits=k_folds,
    )


def slope_of(fit) -> float:
    preds = fit.predict(np.array([[1.0], [0.0]]))
    return float(preds[0] - preds[1])


# ---------------------------------------------------------------------------
# config validation


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(k_folds=1),
        dict(mc_draws=0),
        dict(batch_size=0),
        dict(epochs=-1),
        dict(score="plugin"),
        dict(solver="newton"),
    ],
)
def test_fit_config_validation(kwargs):
    with pytest.raises(ValueError):
        FitConfig(**kwargs)


# ---------------------------------------------------------------------------
# closed-form solver on the toy


def test_closed_form_recovers_toy_slope_with_fitted_nuisances():
    data = gen_linear_toy(LinearToyParams(n=100_000, seed=0))
    cfg = FitConfig(k_folds=2, mc_draws=16, solver="closed-form", seed=0)
    state = crossfit_nuisances(data, cfg, TOY_S_SPEC, TOY_DENSITY_SPEC)
    fit = fit_dml_cmr(data, state, cfg, LinearInBasis())
    assert 1.95 <= slope_of(fit) <= 2.05
    assert fit.audit["passed"] is True
    assert fit.score == "orthogonal"


def test_closed_form_is_exact_with_point_mass_nuisances():
    data = gen_linear_toy(LinearToyParams(n=200, seed=1))
    cfg = FitConfig(k_folds=2, mc_draws=2, solver="closed-form", standardise=False, seed=0)
    fit = fit_with_state(data, exact_state(data), cfg, LinearInBasis())
    # targets 2z regressed on pseudo-features (1, z): slope 2, objective 0
    assert slope_of(fit) == pytest.approx(2.0, abs=1e-9)
    assert fit.empirical_objective() == pytest.approx(0.0, abs=1e-18)


def test_closed_form_objective_beats_random_parameters():
    data = gen_linear_toy(LinearToyParams(n=500, seed=2))
    cfg = FitConfig(k_folds=2, mc_draws=8, solver="closed-form", seed=3)
    fit = fit_with_state(data, exact_state(data, std=1.0), cfg, LinearInBasis())
    best = fit.empirical_objective()
    rng = np.random.default_rng(4)
    theta_hat = fit.theta()
    for _ in range(100):
        assert fit.empirical_objective(theta_hat + 0.1 * rng.standard_normal(2)) >= best - 1e-12


def test_objective_matches_manual_recomputation():
    data = gen_linear_toy(LinearToyParams(n=80, seed=5))
    cfg = FitConfig(k_folds=2, mc_draws=8, solver="closed-form", standardise=False, seed=7)
    state = exact_state(data, std=1.0)
    fit = fit_with_state(data, state, cfg, LinearInBasis())
    # replay the fold evaluation by hand: same draws, same targets
    total = 0.0
    for k, rows in enumerate(state.fold_plan.folds):
        pair = state.nuisances[k]
        targets = pair.s.predict(data.c[rows])
        draws = pair.density.sample(data.c[rows], cfg.mc_draws, seed=derive_seed(cfg.seed, "mc-draws", k))
        preds = fit.predict(draws.reshape(-1, 1)).reshape(len(rows), cfg.mc_draws)
        total += float(np.mean((targets - preds.mean(axis=1)) ** 2)) / state.fold_plan.k
    assert fit.empirical_objective() == pytest.approx(total, abs=1e-8)


def test_naive_and_orthogonal_argmins_agree_with_exact_nuisances():
    data = gen_linear_toy(LinearToyParams(n=20_000, seed=6))
    base = dict(k_folds=2, mc_draws=16, solver="closed-form", seed=0)
    ortho = fit_with_state(data, exact_state(data), FitConfig(score="orthogonal", **base), LinearInBasis())
    naive = fit_with_state(data, exact_state(data), FitConfig(score="naive", **base), LinearInBasis())
    assert abs(slope_of(ortho) - slope_of(naive)) <= 0.05


def test_orthogonal_score_shrugs_off_joint_nuisance_bias():
    # corrupt s-hat and the density mean together along the realised-error
    # direction; the orthogonal argmin moves O(b^2), the naive one O(b)
    from orthocmr.rates import _injected_state

    data = gen_linear_toy(LinearToyParams(n=20_000, seed=8))
    b = 0.4
    cfg = FitConfig(k_folds=2, mc_draws=16, solver="closed-form", seed=1)
    dml = fit_with_state(
        data, _injected_state(data, b, k_folds=2, seed=1, naive=False), cfg, LinearInBasis(),
    )
    naive_cfg = FitConfig(k_folds=2, mc_draws=16, solver="closed-form", score="naive", seed=1)
    naive = fit_with_state(
        data, _injected_state(data, b, k_folds=2, seed=1, naive=True), naive_cfg, LinearInBasis()
    )
    assert abs(slope_of(naive) - 2.0) > abs(slope_of(dml) - 2.0)


def test_standardisation_does_not_move_the_linear_argmin():
    data = gen_linear_toy(LinearToyParams(n=4000, seed=9))
    state = exact_state(data, std=1.0)
    base = dict(k_folds=2, mc_draws=16, solver="closed-form", seed=2)
    on = fit_with_state(data, state, FitConfig(standardise=True, **base), LinearInBasis())
    off = fit_with_state(data, state, FitConfig(standardise=False, **base), LinearInBasis())
    grid = np.linspace(-3, 3, 7).reshape(-1, 1)
    np.testing.assert_allclose(on.predict(grid), off.predict(grid), atol=1e-8)


# ---------------------------------------------------------------------------
# gradient solver


def grad_cfg(**over):
    base = dict(k_folds=2, mc_draws=4, solver="gradient", epochs=6, lr=5e-3, batch_size=64, seed=0)
    base.update(over)
    return FitConfig(**base)


def test_gradient_trajectory_starts_high_ends_at_best():
    data = gen_linear_toy(LinearToyParams(n=500, seed=10))
    fit = fit_with_state(data, exact_state(data, std=1.0), grad_cfg(), FeedforwardStructural(hidden=(8, 4), seed=0))
    traj = fit.trajectory
    assert len(traj) >= 2
    assert traj[-1] <= traj[0]
    assert traj[-1] == pytest.approx(min(traj), abs=1e-12)


def test_gradient_zero_epochs_returns_initialisation():
    data = gen_linear_toy(LinearToyParams(n=300, seed=11))
    cfg = grad_cfg(epochs=0, standardise=False)
    fit = fit_with_state(data, exact_state(data, std=1.0), cfg, FeedforwardStructural(hidden=(8, 4), seed=5))
    assert len(fit.trajectory) == 1
    fresh = FeedforwardStructural(hidden=(8, 4), seed=5).prepare(data.x)
    np.testing.assert_array_equal(fit.theta(), fresh.theta_vector())


def test_gradient_supports_linear_models_too():
    data = gen_linear_toy(LinearToyParams(n=2000, seed=12))
    cfg = grad_cfg(epochs=120, lr=5e-2, batch_size=512, standardise=False)
    fit = fit_with_state(data, exact_state(data), cfg, LinearInBasis())
    assert slope_of(fit) == pytest.approx(2.0, abs=0.05)


# ---------------------------------------------------------------------------
# solver/arch dispatch


def test_solver_architecture_mismatches_are_fit_errors():
    data = gen_linear_toy(LinearToyParams(n=100, seed=13))
    state = exact_state(data)
    with pytest.raises(FitError, match="closed-form"):
        fit_with_state(data, state, FitConfig(k_folds=2, solver="closed-form", seed=0),
                       FeedforwardStructural(hidden=(4,)))
    with pytest.raises(FitError, match="tree-stack"):
        fit_with_state(data, state, FitConfig(k_folds=2, solver="tree-stack", seed=0), LinearInBasis())
    with pytest.raises(FitError, match="tree-stack"):
        fit_with_state(data, state, FitConfig(k_folds=2, solver="gradient", epochs=1, seed=0),
                       BoostedTreeStructural(n_trees=5))


def test_tree_stack_solver_fits_the_reduction():
    data = gen_linear_toy(LinearToyParams(n=3000, seed=14))
    cfg = FitConfig(k_folds=2, mc_draws=8, solver="tree-stack", seed=0)
    fit = fit_with_state(data, exact_state(data, std=1.0), cfg,
                         BoostedTreeStructural(n_trees=100, min_samples_leaf=50))
    # monotone response in the bulk: f(1) - f(-1) should approximate 2 * 2
    lo, hi = fit.predict(np.array([[-1.0], [1.0]]))
    assert 2.0 < hi - lo < 6.0


def test_build_structural_dispatch():
    lin = build_structural({"arch": "linear-in-basis", "basis": LINEAR_NO_BIAS})
    assert lin.arch == "linear-in-basis"
    net = build_structural({"arch": "feedforward-net", "hidden": [4, 2]}, seed=3)
    assert net.hidden == (4, 2) and net.seed == 3
    trees = build_structural({"arch": "boosted-trees", "n_trees": 9})
    assert trees.trees.n_trees == 9
    with pytest.raises(ValueError, match="arch"):
        build_structural({"arch": "transformer"})


# ---------------------------------------------------------------------------
# variants


def test_ce_variant_runs_full_sample():
    data = gen_linear_toy(LinearToyParams(n=5000, seed=15))
    cfg = FitConfig(k_folds=2, mc_draws=16, solver="closed-form", seed=0)
    fit = fit_ce_dml_cmr(data, cfg, LinearInBasis(), TOY_S_SPEC, TOY_DENSITY_SPEC)
    assert fit.audit["full_sample"] is True
    assert fit.audit["passed"] is True
    assert 1.9 <= slope_of(fit) <= 2.1


def test_naive_two_stage_targets_the_outcome():
    data = gen_linear_toy(LinearToyParams(n=50_000, seed=16))
    cfg = FitConfig(k_folds=2, mc_draws=16, solver="closed-form", seed=0)
    fit = fit_naive_two_stage(data, cfg, LinearInBasis(), TOY_DENSITY_SPEC)
    assert fit.score == "naive"
    assert fit.audit["full_sample"] is True
    # with an instrument-only conditioning set the naive argmin is still theta0
    assert 1.9 <= slope_of(fit) <= 2.1


# ---------------------------------------------------------------------------
# fitted container


@pytest.fixture(scope="module")
def three_fits():
    data = gen_linear_toy(LinearToyParams(n=800, seed=17))
    state = exact_state(data, std=1.0)
    closed = FitConfig(k_folds=2, mc_draws=4, solver="closed-form", seed=0)
    fits = [
        fit_with_state(data, state, closed, LinearInBasis()),
        fit_with_state(data, state, grad_cfg(epochs=2), FeedforwardStructural(hidden=(6,), seed=1)),
        fit_with_state(
            data,
            state,
            FitConfig(k_folds=2, mc_draws=4, solver="tree-stack", seed=0),
            BoostedTreeStructural(n_trees=10, min_samples_leaf=20),
        ),
    ]
    return data, fits


def test_fitted_round_trip_bit_exact_for_every_arch(three_fits):
    data, fits = three_fits
    grid = np.linspace(-2, 2, 31).reshape(-1, 1)
    for fit in fits:
        payload = json.loads(json.dumps(fit.to_dict()))
        back = FittedCMR.from_dict(payload)
        np.testing.assert_array_equal(fit.predict(grid), back.predict(grid))
        assert back.arch == fit.arch
        assert back.audit == fit.audit


def test_deserialised_fit_has_no_objective_cache(three_fits):
    _, fits = three_fits
    back = FittedCMR.from_dict(json.loads(json.dumps(fits[0].to_dict())))
    with pytest.raises(RuntimeError, match="deserialised"):
        back.empirical_objective()


def test_predict_validates_width_and_handles_empty(three_fits):
    _, fits = three_fits
    for fit in fits:
        assert fit.predict(np.zeros((0, 1))).shape == (0,)
        with pytest.raises(ValueError, match="columns"):
            fit.predict(np.zeros((3, 2)))


def test_predict_structural_helper(three_fits):
    _, fits = three_fits
    grid = np.array([[0.5], [1.5]])
    np.testing.assert_array_equal(predict_structural(fits[0], grid), fits[0].predict(grid))
    assert predict_structural(fits[0], np.empty((0, 1))).shape == (0,)


def test_fold_plan_size_mismatch_rejected():
    data = gen_linear_toy(LinearToyParams(n=100, seed=18))
    other = gen_linear_toy(LinearToyParams(n=90, seed=18))
    state = exact_state(other)
    with pytest.raises(ValueError, match="fold plan"):
        fit_with_state(data, state, FitConfig(k_folds=2, solver="closed-form", seed=0), LinearInBasis())


def test_scaling_info_round_trip_and_identity():
    rng = np.random.default_rng(19)
    x = rng.standard_normal((50, 2)) * 3.0 + 1.0
    y = rng.standard_normal(50) * 7.0
    sc = ScalingInfo.from_data(x, y)
    np.testing.assert_allclose(sc.y_inv(sc.y_fwd(y)), y, atol=1e-12)
    back = ScalingInfo.from_dict(json.loads(json.dumps(sc.to_dict())))
    np.testing.assert_array_equal(back.x_std, sc.x_std)
    ident = ScalingInfo.identity(2)
    np.testing.assert_array_equal(ident.x_fwd(x), x)
