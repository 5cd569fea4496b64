import numpy as np
import pytest
from hypothesis import given, strategies as st

from sqglab.fields import (SpectralScalarField as F, advect, box, commutator_apply, from_grid, galerkin_project,
                           grid_size, lambda_power, sobolev_norm, to_grid, transport_mode, velocity_from_scalar,
                           weak_nonlinear_pairing)
from sqglab.lattice import SQRT2, basis_eval, lattice_points, sigma_eval
from sqglab.noise import make_cutoff
from sqglab.oracle import (advect_bruteforce, commutator_bruteforce, transport_mode_bruteforce,
                           weak_pairing_bruteforce)

seeds = st.integers(0, 2**32 - 1)


def rand(n, seed, **kw):
    return F.random(n, np.random.default_rng(seed), **kw)


# ---------------------------------------------------------------- representation

@given(st.integers(1, 12), seeds)
def test_grid_round_trip(n, seed):
    f = rand(n, seed)
    m = grid_size(2 * n + 2)
    back = from_grid(to_grid(f.coeffs, m), n)
    assert np.max(np.abs(back - f.coeffs)) <= 1e-12 * max(1.0, np.max(np.abs(f.coeffs)))


def test_grid_values_match_pointwise_evaluation():
    f = rand(4, 3)
    m = 16
    g = np.arange(m) / m
    x = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)
    np.testing.assert_allclose(f.to_grid(m), f(x), atol=1e-12)


def test_zero_mode_never_stored():
    f = F(3, np.ones(box(3).shape))
    assert f.coeffs[3, 3] == 0.0
    assert f.coeffs[0, 0] == 0.0  # |(-3,-3)| > 3


# ---------------------------------------------------------------- Lambda and Sobolev norms

def test_lambda_examples(rng):
    f = F.random(6, rng)
    assert lambda_power(f, 0).allclose(f, 1e-15)
    assert lambda_power(F.basis((1, 0), 2), 1).allclose(2 * np.pi * F.basis((1, 0), 2), 1e-14)
    assert lambda_power(lambda_power(f, 0.5), 0.5).allclose(lambda_power(f, 1.0), 1e-12 * f.norm() * 50)


def test_sobolev_examples(rng):
    for s in (-2.0, -0.5, 0.0, 1.0, 3.0):
        assert sobolev_norm(F.basis((1, 0), 3), s) == pytest.approx(1.0)
    assert sobolev_norm(F.basis((2, 0), 3), -1) == pytest.approx(0.5)
    f = F.random(8, rng)
    assert sobolev_norm(f, 0) == pytest.approx(f.norm())


@given(st.integers(1, 10), seeds, st.floats(0.01, 1.0))
def test_negative_sobolev_below_l2(n, seed, delta):
    f = rand(n, seed)
    assert sobolev_norm(f, -delta) <= f.norm() * (1 + 1e-14)


# ---------------------------------------------------------------- velocity

def test_velocity_single_mode():
    u = velocity_from_scalar(F.basis((1, 0), 2))
    assert {k for k, v in {**u.c1.modes(), **u.c2.modes()}.items() if abs(v) > 1e-14} == {(-1, 0)}
    np.testing.assert_allclose(u.coefficient((-1, 0)), [0.0, 1.0], atol=1e-15)


def test_velocity_of_zero():
    u = velocity_from_scalar(F.zeros(4))
    assert u.norm() == 0.0


@given(st.integers(1, 12), seeds)
def test_velocity_isometry_and_divergence_free(n, seed):
    w = rand(n, seed)
    u = velocity_from_scalar(w)
    assert u.norm() == pytest.approx(w.norm(), rel=1e-12)
    assert u.divergence().norm() <= 1e-12 * max(1.0, w.grad_norm())


def test_velocity_matches_grid_evaluation():
    # u = grad_perp(-Lambda^-1 omega) evaluated pointwise from the basis definition
    w = F.from_modes({(1, 2): 0.7, (-2, 1): -0.4}, 3)
    x = np.array([[0.13, 0.71], [0.5, 0.25]])
    expect = np.zeros((2, 2))
    for k, v in w.modes().items():
        nk = np.hypot(*k)
        expect += -v * np.array([k[1], -k[0]])[None, :] / nk * basis_eval((-k[0], -k[1]), x)[:, None]
    u = velocity_from_scalar(w)
    np.testing.assert_allclose(np.stack([u.c1(x), u.c2(x)], axis=-1), expect, atol=1e-13)


# ---------------------------------------------------------------- projection

def test_projection_examples(rng):
    f = F.random(5, rng)
    assert galerkin_project(f, 5).allclose(f, 0)
    assert galerkin_project(f, 9).allclose(f, 0)
    assert galerkin_project(F.basis((3, 0), 4), 2).norm() == 0.0
    with pytest.raises(ValueError):
        galerkin_project(f, 0)


@given(seeds)
def test_projection_self_adjoint_and_idempotent(seed):
    rng = np.random.default_rng(seed)
    f, g = F.random(8, rng), F.random(8, rng)
    # oracle: the coefficient-level sum restricted to |k| <= 2
    direct = sum(f.coefficient(k) * g.coefficient(k) for k in lattice_points(2))
    assert galerkin_project(f, 2).inner(g) == pytest.approx(direct, abs=1e-12)
    assert f.inner(galerkin_project(g, 2)) == pytest.approx(direct, abs=1e-12)
    p = galerkin_project(f, 3)
    assert galerkin_project(p, 3).allclose(p, 0)


# ---------------------------------------------------------------- advection

def test_advect_trivial_cases(rng):
    for k in [(1, 0), (2, -3), (0, 4)]:
        e = F.basis(k, 5)
        assert advect(e, e).norm() < 1e-12
    assert advect(F.zeros(4), F.random(4, rng)).norm() == 0.0


def test_advect_truncation_mismatch():
    with pytest.raises(ValueError):
        advect(F.zeros(3), F.zeros(4))


@pytest.mark.parametrize("n", [2, 4, 6, 8])
def test_advect_matches_bruteforce(n, rng):
    for _ in range(3):
        w, f = F.random(n, rng), F.random(n, rng)
        slow = advect_bruteforce(w, f)
        assert (advect(w, f) - slow).norm() <= 1e-10 * slow.norm()


@given(st.integers(2, 10), seeds)
def test_advect_energy_neutral(n, seed):
    rng = np.random.default_rng(seed)
    w, f = F.random(n, rng), F.random(n, rng)
    scale = w.norm() * f.norm() * f.grad_norm()
    assert abs(advect(w, f).inner(f)) <= 1e-11 * scale


def test_self_advection_neutral_at_n6_against_oracle(rng):
    w = F.random(6, rng)
    fast, slow = advect(w, w).inner(w), advect_bruteforce(w, w).inner(w)
    scale = w.norm() ** 2 * w.grad_norm()
    assert abs(fast) <= 1e-11 * scale and abs(slow) <= 1e-11 * scale


# ---------------------------------------------------------------- transport modes

def test_transport_mode_two_mode_output():
    out = transport_mode((0, 1), F.basis((1, 0), 2))
    expect = {(-1, -1): SQRT2 * np.pi, (-1, 1): SQRT2 * np.pi}
    assert {k for k, v in out.modes().items() if abs(v) > 1e-12} == set(expect)
    for k, v in expect.items():
        assert out.coefficient(k) == pytest.approx(v, rel=1e-13)


def test_transport_mode_against_fine_grid_quadrature():
    f = F.basis((1, 0), 2)
    m = 128
    g = np.arange(m) / m
    x = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)
    h = 1e-5
    grad = np.stack([(f(x + [h, 0]) - f(x - [h, 0])) / (2 * h), (f(x + [0, h]) - f(x - [0, h])) / (2 * h)], -1)
    prod = np.sum(sigma_eval((0, 1), x) * grad, axis=-1)
    out = transport_mode((0, 1), f)
    for k in lattice_points(2):
        assert np.mean(prod * basis_eval(k, x)) == pytest.approx(out.coefficient(k), abs=1e-6)


def test_transport_mode_trivial_cases():
    assert transport_mode((2, 0), F.basis((1, 0), 3)).norm() < 1e-13  # k parallel to j
    assert transport_mode((7, 0), F.basis((1, 1), 3)).norm() == 0.0  # |k| > 2N
    with pytest.raises(ValueError):
        transport_mode((0, 0), F.basis((1, 1), 3))


@pytest.mark.parametrize("k", [(1, 0), (1, 2), (-3, 2), (0, 5), (4, 4)])
def test_transport_mode_matches_bruteforce(k, rng):
    f = F.random(4, rng)
    slow = transport_mode_bruteforce(k, f)
    assert (transport_mode(k, f) - slow).norm() <= 1e-10 * max(slow.norm(), 1e-300)


@given(st.integers(2, 10), seeds, st.tuples(st.integers(-12, 12), st.integers(-12, 12)))
def test_transport_mode_energy_neutral(n, seed, k):
    if k == (0, 0):
        return
    f = rand(n, seed)
    assert abs(transport_mode(k, f).inner(f)) <= 1e-11 * f.norm() ** 2 * f.grad_norm()


def test_transport_energy_identity():
    n, nu = 16, 0.3
    theta = make_cutoff(12)  # |k + j| <= 12 + 4 = n: the projection discards nothing
    f = F.random(n, np.random.default_rng(4), band=4)
    lhs = 4 * nu / theta.l2_norm**2 * sum(t * t * transport_mode(k, f).norm() ** 2 for k, t in theta.items())
    assert lhs == pytest.approx(2 * nu * f.grad_norm() ** 2, rel=1e-10)
    # with a wider support some of the product is projected away
    theta = make_cutoff(20)
    f = F.random(n, np.random.default_rng(5))
    lhs = 4 * nu / theta.l2_norm**2 * sum(t * t * transport_mode(k, f).norm() ** 2 for k, t in theta.items())
    assert lhs <= 2 * nu * f.grad_norm() ** 2 * (1 + 1e-12)


# ---------------------------------------------------------------- commutator and weak pairing

def test_commutator_zero_psi():
    c = commutator_apply(F.basis((1, 2), 3), F.zeros(3))
    assert c.norm() == 0.0


def test_commutator_single_mode_pair():
    e = F.basis((1, 0), 1)
    c = commutator_apply(e, e)
    # Lambda(psi grad phi) - (Lambda psi) grad phi = -4 pi^2 sin(4 pi x1) (1, 0)
    assert c.c2.norm() < 1e-13
    assert {k for k, v in c.c1.modes().items() if abs(v) > 1e-12} == {(-2, 0)}
    assert c.c1.coefficient((-2, 0)) == pytest.approx(2 * SQRT2 * np.pi**2, rel=1e-13)
    slow = commutator_bruteforce(e, e)
    assert (c.c1 - slow.c1).norm() < 1e-12


def test_commutator_matches_bruteforce(rng):
    for _ in range(3):
        phi, psi = F.random(4, rng), F.random(4, rng)
        fast, slow = commutator_apply(phi, psi), commutator_bruteforce(phi, psi)
        assert (fast - slow).norm() <= 1e-10 * slow.norm()


def test_commutator_bound_fitted_out_of_sample():
    rng = np.random.default_rng(77)

    def ratios(count):
        out = []
        for _ in range(count):
            phi, psi = F.random(8, rng), F.random(8, rng)
            out.append(commutator_apply(phi, psi).norm() / (sobolev_norm(phi, 3.5) * psi.norm()))
        return np.array(out)

    c = 1.25 * ratios(100).max()
    assert np.all(ratios(100) <= c)


def test_weak_pairing_trivial():
    for w in (F.basis((2, 1), 3), F.zeros(3)):
        a, b = weak_nonlinear_pairing(w, F.random(3, np.random.default_rng(1)))
        assert abs(a) < 1e-12 and abs(b) < 1e-12


def test_weak_pairing_two_sides_agree(rng):
    for _ in range(5):
        w, phi = F.random(6, rng), F.random(6, rng)
        a, b = weak_nonlinear_pairing(w, phi)
        sa, sb = weak_pairing_bruteforce(w, phi)
        assert a == pytest.approx(b, rel=1e-9)
        assert a == pytest.approx(sa, rel=1e-9)
        assert b == pytest.approx(sb, rel=1e-9)
