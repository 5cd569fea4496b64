import numpy as np
import pytest
from hypothesis import given, strategies as st

from sqglab.lattice import (SQRT2, TWO_PI, Wavevector, as_wavevector, basis_eval, derivative_coefficient,
                            global_mode_index, in_upper_half, lattice_points, sigma_eval, tensor_identity_sum)
from sqglab.noise import NoiseCoefficients, make_cutoff, make_power, make_shell

nonzero_k = st.tuples(st.integers(-6, 6), st.integers(-6, 6)).filter(lambda k: k != (0, 0))


def grid(m):
    g = np.arange(m) / m
    return np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)


def test_zero_wavevector_rejected():
    with pytest.raises(ValueError):
        as_wavevector((0, 0))
    with pytest.raises(ValueError):
        basis_eval((0, 0), [0.1, 0.2])
    with pytest.raises(ValueError):
        sigma_eval((0, 0), [0.1, 0.2])


def test_basis_values_at_origin():
    assert basis_eval((1, 0), [0.0, 0.0]) == pytest.approx(SQRT2)
    assert basis_eval((-1, 0), [0.0, 0.0]) == pytest.approx(0.0, abs=1e-15)


def test_sigma_value_at_origin():
    np.testing.assert_allclose(sigma_eval((1, 0), [0.0, 0.0]), [0.0, -SQRT2], atol=1e-15)


@given(nonzero_k)
def test_exactly_one_of_k_and_minus_k_in_upper_half(k):
    assert in_upper_half(k) != in_upper_half((-k[0], -k[1]))


@given(nonzero_k)
def test_perp_is_orthogonal(k):
    w = as_wavevector(k)
    assert w.perp.k1 * w.k1 + w.perp.k2 * w.k2 == 0


def test_orthonormality_by_quadrature():
    x = grid(64)
    e10, e01 = basis_eval((1, 0), x), basis_eval((0, 1), x)
    assert np.mean(e10 * e01) == pytest.approx(0.0, abs=1e-14)
    assert np.mean(e10 * e10) == pytest.approx(1.0, abs=1e-14)
    s10, s01 = sigma_eval((1, 0), x), sigma_eval((0, 1), x)
    assert np.mean(np.sum(s10 * s01, axis=-1)) == pytest.approx(0.0, abs=1e-14)


@given(nonzero_k)
def test_pair_k_minus_k_orthonormal(k):
    x = grid(2 * 6 + 2 + 2)
    a, b = basis_eval(k, x), basis_eval((-k[0], -k[1]), x)
    assert np.mean(a * b) == pytest.approx(0.0, abs=1e-13)
    assert np.mean(a * a) == pytest.approx(1.0, abs=1e-13)
    assert np.mean(b * b) == pytest.approx(1.0, abs=1e-13)
    assert np.mean(a) == pytest.approx(0.0, abs=1e-13)


def test_laplacian_eigenvalues():
    assert derivative_coefficient((1, 0)).laplacian_eigenvalue == pytest.approx(-4 * np.pi**2)
    assert derivative_coefficient((1, 1)).laplacian_eigenvalue == pytest.approx(-8 * np.pi**2)


# sixth-order central difference weights for offsets 1, 2, 3
FD6 = ((1, 3 / 4), (2, -3 / 20), (3, 1 / 60))


def fd_gradient(f, x, h):
    out = []
    for axis in (np.array([h, 0.0]), np.array([0.0, h])):
        out.append(sum(w * (f(x + j * axis) - f(x - j * axis)) for j, w in FD6) / h)
    return np.stack(out, axis=-1)


@pytest.mark.parametrize("k", [tuple(k) for k in lattice_points(4)])
def test_gradient_matches_finite_differences(k):
    h = 1.0 / 256
    x = grid(256)
    dc = derivative_coefficient(k)
    spectral = dc.gradient_factor * basis_eval(dc.paired_mode, x)[..., None]
    fd = fd_gradient(lambda y: basis_eval(k, y), x, h)
    assert np.max(np.abs(fd - spectral)) / np.max(np.abs(spectral)) < 1e-6


def test_sigma_is_divergence_free_spectrally():
    for k in lattice_points(5):
        w = as_wavevector(k)
        # div(k_perp/|k| e_k) = (k_perp . 2 pi k)/|k| e_{-k}
        assert np.dot(np.array(w.perp), derivative_coefficient(w).gradient_factor) == 0


def test_tensor_identity_unit_shell():
    t = tensor_identity_sum(make_shell(1), np.array([0.37, 0.11]))
    np.testing.assert_allclose(t, 2 * np.eye(2), atol=1e-14)


def test_tensor_identity_zero_theta():
    t = tensor_identity_sum(make_shell(1, 0.0), np.array([0.37, 0.11]))
    np.testing.assert_array_equal(t, np.zeros((2, 2)))


def test_tensor_identity_radius_three():
    count = sum(1 for a in range(-3, 4) for b in range(-3, 4) if 0 < a * a + b * b <= 9)
    assert count == 28
    t = tensor_identity_sum(make_cutoff(3), np.array([0.3, 0.7]))
    np.testing.assert_allclose(t, 0.5 * count * np.eye(2), atol=1e-12)


def test_tensor_identity_refuses_asymmetric_theta():
    theta = make_cutoff(2).with_override((1, 0), 2.0)
    with pytest.raises(ValueError):
        tensor_identity_sum(theta, np.array([0.1, 0.2]))


@given(st.floats(1.0, 9.0), st.floats(0.0, 2.0))
def test_tensor_identity_on_grid(radius, alpha):
    theta = make_power(radius, alpha)
    x = grid(16).reshape(-1, 2)
    t = tensor_identity_sum(theta, x)
    dev = np.linalg.norm(t - 0.5 * theta.l2_norm**2 * np.eye(2), ord=2, axis=(-2, -1))
    assert np.max(dev) <= 1e-10


def test_lattice_enumeration_order_and_index():
    pts = lattice_points(3)
    assert len(pts) == 28
    assert [k.norm2 for k in pts] == sorted(k.norm2 for k in pts)
    for i, k in enumerate(pts):
        assert global_mode_index(k) == i
    # the index does not depend on how far the enumeration was carried
    assert global_mode_index((20, 3)) == lattice_points(25).index(Wavevector(20, 3))
