import numpy as np
import pytest

from quasinehari.domain import build_domain, grad_norm_sq, laplacian_apply
from quasinehari.functional import (
    ExponentParams, Functional, energy, energy_positive_part, gradient, gradient_positive_part,
    hessian_apply, nehari_residual, nonlinearity, pohozaev_residual, pohozaev_terms,
)
from quasinehari.kernel import transform
from quasinehari.nehari import ground_state, project


@pytest.fixture(scope="module")
def rect():
    return build_domain({"shape": "rectangle"}, 9)


@pytest.fixture(scope="module")
def ball():
    return build_domain({"shape": "ball", "radius": 0.5, "center": 0.5}, 12)


def test_exponent_params():
    pr = ExponentParams(6.0)
    assert pr.two_star == 6.0 and pr.crit == 12.0
    assert ExponentParams.from_fraction(0.5).p == 6.0
    assert ExponentParams(12.0).is_critical
    with pytest.raises(ValueError):
        ExponentParams(4.0)
    with pytest.raises(ValueError):
        ExponentParams(12.5)
    with pytest.raises(ValueError):
        ExponentParams(6.0, dim=2)
    two = ExponentParams(8.0, dim=2, cap=10.0)
    assert two.outside_hypotheses and two.crit == 10.0


def test_energy_of_zero(rect):
    assert energy(rect, np.zeros(rect.n), ExponentParams(6.0)) == 0.0


@pytest.mark.parametrize("c", [0.3, 2.0, 50.0])
def test_single_node_energy(rect, c):
    p = 7.0
    h, N = rect.spacing, 3
    v = np.zeros(rect.n)
    v[rect.n // 2] = c
    f = transform(c)[0]
    expected = 0.5 * (2 * N * c**2 / h**2) * h**N - h**N * abs(f) ** p / p
    assert energy(rect, v, ExponentParams(p)) == pytest.approx(expected, rel=1e-13)
    # the same scalar problem through a 1 x 1 stiffness/mass pair
    fn = Functional(np.array([[2 * N * h ** (N - 2)]]), np.array([h**N]), ExponentParams(p))
    assert fn.energy(np.array([c])) == pytest.approx(expected, rel=1e-13)


def _random_field(grid, rng, amp=2.0):
    return amp * rng.uniform(-1.0, 1.0, grid.n)


@pytest.mark.parametrize("p", [6.0, 10.0])
@pytest.mark.parametrize("positive", [False, True])
def test_gradient_finite_difference(rect, p, positive):
    rng = np.random.default_rng(10)
    fn = Functional.on_grid(rect, ExponentParams(p), positive=positive)
    for _ in range(5):
        v, w = _random_field(rect, rng), rng.standard_normal(rect.n)
        eps = 1e-5
        fd = (fn.energy(v + eps * w) - fn.energy(v - eps * w)) / (2 * eps)
        exact = fn.residual(v) @ w
        assert abs(fd - exact) <= 1e-6 * max(abs(exact), 1.0)


def test_nodal_gradient_is_laplacian_minus_nonlinearity(rect):
    rng = np.random.default_rng(11)
    v = _random_field(rect, rng)
    pr = ExponentParams(6.0)
    _, g, _ = nonlinearity(v, pr.p)
    np.testing.assert_allclose(gradient(rect, v, pr), laplacian_apply(rect, v) - g, rtol=1e-12, atol=1e-9)


@pytest.mark.parametrize("p", [6.0, 10.0])
def test_hessian_finite_difference(ball, p):
    rng = np.random.default_rng(12)
    pr = ExponentParams(p)
    for _ in range(5):
        v, w = _random_field(ball, rng), rng.standard_normal(ball.n)
        eps = 1e-6
        fd = (gradient(ball, v + eps * w, pr) - gradient(ball, v - eps * w, pr)) / (2 * eps)
        hw = hessian_apply(ball, v, w, pr)
        assert np.linalg.norm(fd - hw) <= 1e-6 * np.linalg.norm(hw)


def test_hessian_symmetric_and_at_zero(ball):
    rng = np.random.default_rng(13)
    pr = ExponentParams(8.0)
    v, w, u = _random_field(ball, rng), rng.standard_normal(ball.n), rng.standard_normal(ball.n)
    assert hessian_apply(ball, v, w, pr) @ u == pytest.approx(hessian_apply(ball, v, u, pr) @ w, rel=1e-11)
    np.testing.assert_allclose(hessian_apply(ball, np.zeros(ball.n), w, pr), laplacian_apply(ball, w))


def test_compact_part_psd(ball):
    rng = np.random.default_rng(14)
    fn = Functional.on_grid(ball, ExponentParams(11.0))
    assert np.all(fn.potential_curvature(_random_field(ball, rng, 100.0)) >= 0)


def test_positive_part_variants(rect):
    rng = np.random.default_rng(15)
    pr = ExponentParams(6.0)
    neg = -np.abs(_random_field(rect, rng))
    assert energy_positive_part(rect, neg, pr) == pytest.approx(0.5 * grad_norm_sq(rect, neg), rel=1e-13)
    np.testing.assert_allclose(gradient_positive_part(rect, neg, pr), laplacian_apply(rect, neg))
    pos = np.abs(_random_field(rect, rng))
    assert energy_positive_part(rect, pos, pr) == pytest.approx(energy(rect, pos, pr), rel=1e-14)
    np.testing.assert_allclose(gradient_positive_part(rect, pos, pr), gradient(rect, pos, pr))


def test_nehari_sign_for_small_multiples(ball):
    rng = np.random.default_rng(16)
    pr = ExponentParams(10.0)
    for _ in range(5):
        v = _random_field(ball, rng)
        assert nehari_residual(ball, 1e-3 * v, pr) > 0
        assert nehari_residual(ball, 1e3 * v, pr) < 0


def test_ffpt_bounds_nodewise():
    t = np.linspace(-50, 50, 2001)
    f, fp, _ = transform(t)
    assert np.all(0.5 * f**2 <= f * fp * t + 1e-15)
    assert np.all(f * fp * t <= f**2 + 1e-15)


def test_energy_lower_bound_on_nehari_set(ball):
    rng = np.random.default_rng(17)
    for p in (5.0, 8.0, 11.5):
        fn = Functional.on_grid(ball, ExponentParams(p))
        v = np.abs(_random_field(ball, rng))
        u = project(fn, v).t * v
        assert fn.energy(u) >= (p - 4) / (4 * p) * fn.potential(u) - 1e-10 * fn.energy(u)


def test_pohozaev_zero_and_unsupported():
    ann = build_domain({"shape": "annulus", "r_inner": 0.2, "r_outer": 0.5}, 12)
    with pytest.raises(ValueError):
        pohozaev_residual(ann, np.ones(ann.n), ExponentParams(6.0))
    ball = build_domain({"shape": "ball", "radius": 0.5}, 12)
    assert pohozaev_residual(ball, np.zeros(ball.n), ExponentParams(6.0)) == 0.0


def test_pohozaev_homogeneity(ball):
    # boundary and gradient terms scale like lambda^2
    rng = np.random.default_rng(18)
    v = np.abs(_random_field(ball, rng))
    pr = ExponentParams(6.0)
    a, b = pohozaev_terms(ball, v, pr), pohozaev_terms(ball, 3.0 * v, pr)
    assert b.boundary_flux == pytest.approx(9 * a.boundary_flux, rel=1e-12)
    assert b.gradient_term == pytest.approx(9 * a.gradient_term, rel=1e-12)


def test_pohozaev_on_subcritical_ground_states():
    # frozen from measured runs: cube -0.058, -0.023, -0.012 at 12, 20, 28 (second order);
    # ball about -0.03 at every resolution (staircase floor)
    pr = ExponentParams(6.0)
    rels = []
    for res in (12, 20, 28):
        g = build_domain({"shape": "rectangle"}, res)
        rels.append(abs(pohozaev_terms(g, ground_state(g, pr).values, pr).relative))
    assert rels[0] > rels[1] > rels[2]
    assert rels[2] <= 0.015
    ball = build_domain({"shape": "ball", "radius": 0.5, "center": 0.5}, 16)
    assert abs(pohozaev_terms(ball, ground_state(ball, pr).values, pr).relative) <= 0.05
