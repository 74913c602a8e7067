import json

import numpy as np
import pytest
import torch

from orthocmr.basis import PolynomialBasis
from orthocmr.datasets import DemandIVParams, gen_demand_iv
from orthocmr.regressors import (
    BoostedTrees,
    ConstantPredictor,
    FeedforwardNet,
    RidgeOnBasis,
    regressor_from_dict,
)

# ---------------------------------------------------------------------------
# ridge on a basis


def test_ridge_recovers_exact_line():
    x = np.arange(10.0).reshape(-1, 1)
    y = 2.0 * x[:, 0] + 5.0
    model = RidgeOnBasis(basis=PolynomialBasis(degree=1), l2=0.0).fit(x, y)
    np.testing.assert_allclose(model.predict(x), y, atol=1e-9)


def test_ridge_huge_penalty_shrinks_to_intercept_only():
    # the intercept is excluded from the penalty, so l2 -> inf leaves the mean
    x = np.arange(10.0).reshape(-1, 1)
    y = 2.0 * x[:, 0] + 5.0
    model = RidgeOnBasis(basis=PolynomialBasis(degree=1), l2=1e12).fit(x, y)
    np.testing.assert_allclose(model.predict(x), np.full(10, y.mean()), atol=1e-6)


def test_ridge_solution_beats_random_perturbations():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((200, 2))
    y = x[:, 0] - 0.5 * x[:, 1] ** 2 + 0.1 * rng.standard_normal(200)
    model = RidgeOnBasis(basis=PolynomialBasis(degree=2), l2=0.3).fit(x, y)
    base = model.training_objective(x, y)
    coef = model.coef_
    for _ in range(100):
        perturbed = coef + 0.05 * rng.standard_normal(coef.shape)
        assert model.training_objective(x, y, coef=perturbed) >= base - 1e-10


def test_ridge_width_mismatch_is_an_error():
    model = RidgeOnBasis(basis=PolynomialBasis(degree=1)).fit(np.zeros((5, 2)), np.zeros(5))
    with pytest.raises(ValueError, match="columns"):
        model.predict(np.zeros((5, 3)))


def test_ridge_serialisation_round_trip_bit_exact():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((50, 2))
    y = rng.standard_normal(50)
    model = RidgeOnBasis(basis=PolynomialBasis(degree=2), l2=0.7).fit(x, y)
    payload = json.loads(json.dumps(model.to_dict()))
    model2 = regressor_from_dict(payload)
    np.testing.assert_array_equal(model.predict(x), model2.predict(x))


# ---------------------------------------------------------------------------
# boosted trees


def test_trees_stagewise_training_error_never_increases():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((400, 2))
    y = np.sin(x[:, 0]) + 0.3 * rng.standard_normal(400)
    model = BoostedTrees(n_trees=60, min_samples_leaf=20).fit(x, y)
    path = model.staged_train_mse(x, y)
    assert path.shape == (60,)
    assert np.all(np.diff(path) <= 1e-12)


def test_trees_min_leaf_clamped_for_tiny_samples():
    x = np.arange(8.0).reshape(-1, 1)
    y = x[:, 0]
    model = BoostedTrees(n_trees=5, min_samples_leaf=100).fit(x, y)
    # with the default leaf size left unclamped the model could not split at all
    assert np.std(model.predict(x)) > 0.0


def test_trees_explain_demand_outcome():
    d = gen_demand_iv(DemandIVParams(n=5000, seed=13))
    model = BoostedTrees().fit(d.c, d.y)
    mse = float(np.mean((model.predict(d.c) - d.y) ** 2))
    assert mse < float(d.y.var())


def test_trees_serialisation_round_trip_bit_exact():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((300, 3))
    y = x[:, 0] * x[:, 1] + rng.standard_normal(300)
    model = BoostedTrees(n_trees=40, min_samples_leaf=10).fit(x, y)
    payload = json.loads(json.dumps(model.to_dict()))
    model2 = regressor_from_dict(payload)
    x_new = rng.standard_normal((500, 3))
    np.testing.assert_array_equal(model.predict(x_new), model2.predict(x_new))


def test_trees_rejects_bad_knobs():
    with pytest.raises(ValueError, match="n_trees"):
        BoostedTrees(n_trees=0)
    with pytest.raises(ValueError, match="min_samples_leaf"):
        BoostedTrees(min_samples_leaf=0)


# ---------------------------------------------------------------------------
# feedforward net


def test_feedforward_learns_a_smooth_surface():
    rng = np.random.default_rng(4)
    x = rng.uniform(-2, 2, size=(2000, 2))
    y = np.sin(x[:, 0]) + x[:, 1] ** 2
    model = FeedforwardNet(hidden=(32, 16), epochs=80, lr=1e-2, weight_decay=0.0, seed=0).fit(x, y)
    mse = float(np.mean((model.predict(x) - y) ** 2))
    assert mse < 0.05


def test_feedforward_gradient_matches_finite_differences():
    """Central-difference check of the training-loss gradient at 20 random
    parameter coordinates (float64 throughout, relative tolerance 1e-4)."""
    rng = np.random.default_rng(0)
    x = rng.standard_normal((16, 2))
    y = rng.standard_normal(16)
    model = FeedforwardNet(hidden=(8, 6), epochs=0, seed=1).fit(x, y)
    loss = model.torch_loss(x, y)
    model.net.zero_grad()
    loss.backward()
    params = list(model.net.parameters())
    picker = np.random.default_rng(42)
    for _ in range(20):
        p = params[int(picker.integers(len(params)))]
        flat = p.data.reshape(-1)
        i = int(picker.integers(flat.numel()))
        orig = float(flat[i])
        h = 1e-6 * max(1.0, abs(orig))
        with torch.no_grad():
            flat[i] = orig + h
            up = float(model.torch_loss(x, y))
            flat[i] = orig - h
            dn = float(model.torch_loss(x, y))
            flat[i] = orig
        fd = (up - dn) / (2.0 * h)
        an = float(p.grad.reshape(-1)[i])
        assert abs(fd - an) <= 1e-4 * max(1.0, abs(an))


def test_feedforward_training_is_deterministic():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((300, 2))
    y = x[:, 0] + rng.standard_normal(300)
    a = FeedforwardNet(hidden=(8,), epochs=5, seed=3).fit(x, y).predict(x)
    b = FeedforwardNet(hidden=(8,), epochs=5, seed=3).fit(x, y).predict(x)
    np.testing.assert_array_equal(a, b)


def test_feedforward_auto_dropout_rate():
    model = FeedforwardNet(dropout="auto")
    assert model._dropout_rate(5000) == pytest.approx(0.1)
    assert FeedforwardNet()._dropout_rate(5000) == 0.0


def test_feedforward_serialisation_round_trip_bit_exact():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((200, 2))
    y = x[:, 0] ** 2
    model = FeedforwardNet(hidden=(8, 4), epochs=5, seed=7).fit(x, y)
    payload = json.loads(json.dumps(model.to_dict()))
    model2 = regressor_from_dict(payload)
    np.testing.assert_array_equal(model.predict(x), model2.predict(x))


# ---------------------------------------------------------------------------
# shared regressor contract


@pytest.fixture(scope="module")
def fitted_family():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((120, 2))
    y = x[:, 0] + rng.standard_normal(120)
    return [
        RidgeOnBasis(basis=PolynomialBasis(degree=1)).fit(x, y),
        BoostedTrees(n_trees=10, min_samples_leaf=10).fit(x, y),
        FeedforwardNet(hidden=(4,), epochs=2).fit(x, y),
        ConstantPredictor().fit(x, y),
    ]


def test_predict_on_empty_matrix_returns_empty_vector(fitted_family):
    for model in fitted_family:
        out = model.predict(np.zeros((0, 2)))
        assert out.shape == (0,)


def test_predict_is_pure(fitted_family):
    x_new = np.random.default_rng(8).standard_normal((40, 2))
    for model in fitted_family:
        np.testing.assert_array_equal(model.predict(x_new), model.predict(x_new))


def test_constant_predictor_is_the_mean():
    model = ConstantPredictor().fit(np.zeros((4, 1)), np.array([1.0, 2.0, 3.0, 6.0]))
    np.testing.assert_allclose(model.predict(np.zeros((2, 1))), [3.0, 3.0])


def test_regressor_from_dict_unknown_kind():
    with pytest.raises(ValueError, match="kind"):
        regressor_from_dict({"kind": "kernel-machine"})
