import math

import numpy as np
import pytest

from orthocmr.basis import PolynomialBasis, TensorRadialBasis, basis_from_dict, build_basis


def test_polynomial_feature_count_matches_stars_and_bars():
    x = np.random.default_rng(0).standard_normal((10, 3))
    b = PolynomialBasis(degree=2).fit(x)
    assert b.n_features == math.comb(3 + 2, 2)


def test_polynomial_known_values():
    b = PolynomialBasis(degree=2, include_bias=True).fit(np.array([[1.0, 2.0]]))
    row = b.transform(np.array([[2.0, 3.0]]))[0]
    assert sorted(row) == sorted([1.0, 2.0, 3.0, 4.0, 6.0, 9.0])


def test_polynomial_degree_zero_without_bias_rejected():
    with pytest.raises(ValueError, match="no features"):
        PolynomialBasis(degree=0, include_bias=False).fit(np.zeros((2, 1)))


def test_polynomial_negative_degree_rejected():
    with pytest.raises(ValueError, match="degree"):
        PolynomialBasis(degree=-1)


def test_polynomial_transform_before_fit_rejected():
    with pytest.raises(RuntimeError, match="fit"):
        PolynomialBasis(degree=1).transform(np.zeros((2, 1)))


def test_polynomial_width_mismatch_rejected():
    b = PolynomialBasis(degree=1).fit(np.zeros((3, 2)))
    with pytest.raises(ValueError, match="columns"):
        b.transform(np.zeros((3, 4)))


def test_polynomial_serialisation_round_trip():
    x = np.random.default_rng(1).standard_normal((6, 2))
    b = PolynomialBasis(degree=3).fit(x)
    b2 = basis_from_dict(b.to_dict())
    np.testing.assert_array_equal(b.transform(x), b2.transform(x))


def test_polynomial_feature_cap():
    with pytest.raises(ValueError, match="too large"):
        PolynomialBasis(degree=12).fit(np.zeros((4, 8)))


def test_radial_shape_finiteness_and_round_trip():
    x = np.random.default_rng(2).standard_normal((50, 2))
    b = TensorRadialBasis(n_centers=4).fit(x)
    phi = b.transform(x)
    assert phi.shape == (50, b.n_features)
    assert b.n_features == 25  # (1 + 4 centers)^2
    assert np.all(np.isfinite(phi))
    b2 = basis_from_dict(b.to_dict())
    np.testing.assert_array_equal(phi, b2.transform(x))


def test_radial_mixed_blocks_feature_count():
    x = np.random.default_rng(3).standard_normal((40, 3))
    b = TensorRadialBasis(n_centers=3, rbf_cols=(0,), poly_degree={1: 2}).fit(x)
    # (1+3) * (1+2) * (1+1)
    assert b.n_features == 24


def test_radial_rejects_constant_rbf_column():
    x = np.column_stack([np.ones(10), np.arange(10.0)])
    with pytest.raises(ValueError, match="constant"):
        TensorRadialBasis(n_centers=3, rbf_cols=(0,)).fit(x)


def test_radial_width_mismatch_rejected():
    x = np.random.default_rng(4).standard_normal((30, 2))
    b = TensorRadialBasis(n_centers=3).fit(x)
    with pytest.raises(ValueError, match="columns"):
        b.transform(np.zeros((5, 3)))


@pytest.mark.parametrize("kwargs", [dict(n_centers=1), dict(bandwidth_scale=0.0)])
def test_radial_rejects_bad_knobs(kwargs):
    with pytest.raises(ValueError):
        TensorRadialBasis(**kwargs)


def test_build_basis_defaults_to_linear_polynomial():
    b = build_basis(None).fit(np.zeros((3, 1)) + np.arange(3).reshape(-1, 1))
    assert isinstance(b, PolynomialBasis)
    assert b.degree == 1


def test_build_basis_unknown_kind_rejected():
    with pytest.raises(ValueError, match="fourier"):
        build_basis({"kind": "fourier"})


def test_basis_from_dict_unknown_kind_rejected():
    with pytest.raises(ValueError, match="kind"):
        basis_from_dict({"kind": "wavelet"})
