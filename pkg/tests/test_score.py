"""Pointwise losses and the finite-difference orthogonality check.

The toy problems make every expected value here computable by hand: with the
true nuisances plugged in, the robust loss is (s0 - g0)^2 = 0 on the valid
toy, and the naive loss keeps its outcome residual.  Directional derivatives
of quadratic losses are linear in the perturbation, so the secants the
derivative estimator reports are exactly r-independent — tested to 1e-10.
"""

import numpy as np
import pytest

from orthocmr.problems import (
    ClosureRegressor,
    GaussianConditional,
    confounded_linear_gaussian_toy,
    linear_gaussian_toy,
    toy_exact_nuisances,
)
from orthocmr.score import (
    DEFAULT_R_GRID,
    MCConfig,
    NuisancePair,
    PerturbationDirection,
    ScoreKind,
    gateaux_derivative,
    ghat_values,
    pointwise_loss_batch,
    score_value,
    standard_directions,
)

ORTHOGONAL = ScoreKind("orthogonal")
NAIVE = ScoreKind("naive")


def exact_pair(std: float = 0.0) -> NuisancePair:
    s, _ = toy_exact_nuisances()
    return NuisancePair(s=s, density=GaussianConditional(lambda z: z, std=std))


def f_linear(slope: float):
    return ClosureRegressor(lambda a: slope * a)


# ---------------------------------------------------------------------------
# plumbing


def test_score_kind_validation():
    with pytest.raises(ValueError):
        ScoreKind("robust")


def test_mc_config_validation():
    with pytest.raises(ValueError):
        MCConfig(n_draws=0)


def test_nuisance_pair_defaults_and_validation():
    pair = exact_pair()
    assert pair.d_x == 1
    with pytest.raises(ValueError):
        NuisancePair(s=None, density=None, shared=((0, 0), (0, 1)), d_x=2)


def test_ghat_with_point_mass_density_is_exact():
    pair = exact_pair(std=0.0)
    c = np.array([[1.0], [-2.0], [0.5]])
    g = ghat_values(f_linear(2.0), pair, c, MCConfig(n_draws=3, seed=0))
    np.testing.assert_allclose(g, [2.0, -4.0, 1.0], atol=1e-12)


# ---------------------------------------------------------------------------
# trivial score values (point-mass density kills the MC noise)


def test_orthogonal_score_zero_at_true_model():
    # s0(c) = 2c and g(f0, c) = 2c agree, whatever the sample says
    val = score_value(ORTHOGONAL, (5.0, 1.0), f_linear(2.0), exact_pair(), MCConfig(n_draws=2, seed=0))
    assert val == pytest.approx(0.0, abs=1e-24)


def test_orthogonal_score_quadratic_in_model_error():
    # f = 0 leaves (2c - 0)^2 = 4 at c = 1
    val = score_value(ORTHOGONAL, (5.0, 1.0), f_linear(0.0), exact_pair(), MCConfig(n_draws=2, seed=0))
    assert val == pytest.approx(4.0, abs=1e-12)


def test_naive_score_keeps_outcome_residual():
    # (y - g)^2 = (5 - 2)^2 = 9 at y=5, c=1, f = f0
    val = score_value(NAIVE, (5.0, 1.0), f_linear(2.0), exact_pair(), MCConfig(n_draws=2, seed=0))
    assert val == pytest.approx(9.0, abs=1e-12)


def test_scores_are_nonnegative_under_noise():
    pair = exact_pair(std=1.0)
    rng = np.random.default_rng(0)
    y = rng.standard_normal(50)
    c = rng.standard_normal((50, 1))
    for kind in (ORTHOGONAL, NAIVE):
        values, mean = pointwise_loss_batch(kind, (y, c), f_linear(1.3), pair, MCConfig(n_draws=8, seed=1))
        assert np.all(values >= 0.0)
        assert mean == pytest.approx(values.mean())


def test_score_scale_equivariance():
    # doubling (y, s, f) together multiplies both losses by 4
    base_pair = exact_pair()
    scaled_pair = NuisancePair(s=ClosureRegressor(lambda z: 4.0 * z), density=base_pair.density)
    mc = MCConfig(n_draws=2, seed=0)
    for kind in (ORTHOGONAL, NAIVE):
        v1 = score_value(kind, (5.0, 1.0), f_linear(3.0), base_pair, mc)
        v4 = score_value(kind, (10.0, 1.0), f_linear(6.0), scaled_pair, mc)
        assert v4 == pytest.approx(4.0 * v1, rel=1e-12)


def test_batch_loss_respects_duplicates_and_rejects_empty():
    pair = exact_pair()
    y = np.array([1.0, 1.0, 3.0])
    c = np.array([[2.0], [2.0], [0.0]])
    values, _ = pointwise_loss_batch(NAIVE, (y, c), f_linear(0.5), pair, MCConfig(n_draws=2, seed=0))
    assert values[0] == values[1]
    with pytest.raises(ValueError, match="empty"):
        pointwise_loss_batch(NAIVE, (np.empty(0), np.empty((0, 1))), f_linear(0.5), pair, MCConfig())


def test_batch_loss_dimension_mismatch():
    pair = exact_pair()
    with pytest.raises(ValueError, match="mismatch"):
        pointwise_loss_batch(
            NAIVE, (np.zeros(3), np.zeros((2, 1))), f_linear(1.0), pair, MCConfig(n_draws=2, seed=0)
        )


# ---------------------------------------------------------------------------
# directional derivatives


def test_standard_directions_shapes():
    dirs = standard_directions()
    assert [d.name for d in dirs] == ["shift-s-constant", "shift-g-linear", "fitted-delta"]
    assert dirs[0].dg is None and dirs[1].ds is None
    assert dirs[2].ds is not None and dirs[2].dg is not None


def test_orthogonal_score_has_vanishing_derivatives():
    problem = linear_gaussian_toy()
    for direction in standard_directions():
        est = gateaux_derivative(ORTHOGONAL, problem, direction, mc_n=20_000, seed=0)
        # s0 = g0 on the valid toy, so the +/- r losses cancel sample by
        # sample: the derivative and its bootstrap spread are exactly zero
        assert est.derivative == pytest.approx(0.0, abs=1e-18)
        assert est.stderr == pytest.approx(0.0, abs=1e-18)
        assert est.verdict == "orthogonal"


def test_orthogonal_curvature_matches_analytic_value():
    problem = linear_gaussian_toy()
    dirs = standard_directions()
    # curvature = 2 E[(ds - dg)^2]: 2, 2 E[c^2] = 2, 2 E[(1.5c - 1)^2] = 6.5
    est0 = gateaux_derivative(ORTHOGONAL, problem, dirs[0], mc_n=20_000, seed=0)
    assert est0.curvature == pytest.approx(2.0, abs=1e-10)  # constant direction: no MC noise
    est1 = gateaux_derivative(ORTHOGONAL, problem, dirs[1], mc_n=50_000, seed=0)
    assert est1.curvature == pytest.approx(2.0, abs=0.1)
    est2 = gateaux_derivative(ORTHOGONAL, problem, dirs[2], mc_n=50_000, seed=0)
    assert est2.curvature == pytest.approx(6.5, abs=0.2)


def test_naive_score_flagged_on_confounded_problem():
    problem = confounded_linear_gaussian_toy()
    est = gateaux_derivative(NAIVE, problem, standard_directions()[1], mc_n=50_000, seed=0)
    # analytic derivative: -2 E[(y - g0(c)) c] = -2 * residual_cov_c = -2
    assert est.derivative == pytest.approx(-2.0, abs=0.1)
    assert abs(est.derivative) > 5 * est.stderr
    assert est.verdict == "not-orthogonal"


def test_secants_of_a_quadratic_loss_are_r_independent():
    problem = confounded_linear_gaussian_toy()
    est = gateaux_derivative(NAIVE, problem, standard_directions()[1], mc_n=5_000, seed=3)
    secants = [row[1] for row in est.per_r]
    assert len(secants) == len(DEFAULT_R_GRID)
    assert max(secants) - min(secants) <= 1e-10


def test_derivative_estimate_report_payload():
    problem = linear_gaussian_toy()
    est = gateaux_derivative(ORTHOGONAL, problem, standard_directions()[0], mc_n=2_000, seed=0)
    payload = est.to_report()
    for key in ("kind", "problem", "direction", "derivative", "stderr", "curvature", "verdict"):
        assert key in payload
    assert payload["verdict"] == "orthogonal"


def test_gateaux_rejects_degenerate_grid():
    with pytest.raises(ValueError):
        gateaux_derivative(
            ORTHOGONAL,
            linear_gaussian_toy(),
            standard_directions()[0],
            r_grid=(0.1, 0.0),
            mc_n=2_000,
            seed=0,
        )
