import numpy as np
import pytest

from quasinehari.domain import barycenter, build_domain, grad_norm_sq
from quasinehari.functional import ExponentParams, Functional
from quasinehari.kernel import transform
from quasinehari.nehari import (
    ProjectionError, SolverOptions, cluster, ground_state, make_bump_seed, minimize_nehari,
    multistart_deflate, principal_direction, project, reduced_energy, relative_distance,
)
from quasinehari.spectra import morse_index


@pytest.fixture(scope="module")
def ball():
    return build_domain({"shape": "ball", "radius": 0.5, "center": 0.5}, 12)


@pytest.fixture(scope="module")
def annulus():
    return build_domain({"shape": "annulus", "r_inner": 0.2, "r_outer": 0.5, "center": 0.5}, 16)


def _scan_root(A, c, p):
    # dense scan of phi(t) = A c^2 t - c g(tc) for its sign change, then bisection
    def phi(t):
        f, fp, _ = transform(t * c)
        return A * c * c * t - c * abs(f) ** (p - 2) * f * fp

    ts = np.logspace(-4, 6, 200001)
    vals = np.array([phi(t) for t in ts[::100]])
    k = int(np.argmax(vals < 0))
    lo, hi = ts[::100][k - 1], ts[::100][k]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if phi(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@pytest.mark.parametrize("A,c,p", [(1.0, 1.0, 6.0), (3.0, 0.2, 8.0), (50.0, 2.0, 11.0), (0.1, 5.0, 4.5)])
def test_single_node_projection_oracle(A, c, p):
    fn = Functional(np.array([[A]]), np.array([1.0]), ExponentParams(p))
    t = project(fn, np.array([c])).t
    assert t == pytest.approx(_scan_root(A, c, p), rel=1e-8)


def test_projection_fixed_point_and_residual(ball):
    rng = np.random.default_rng(0)
    for p in (5.0, 6.0, 10.0, 11.9):
        fn = Functional.on_grid(ball, ExponentParams(p))
        v = np.abs(rng.standard_normal(ball.n))
        u = project(fn, v).t * v
        again = project(fn, u)
        assert abs(again.t - 1.0) <= 1e-10
        assert abs(again.residual) <= 1e-8 * fn.norm_sq(u)
        lo, hi = again.bracket
        assert lo <= again.t <= hi


def test_projection_bracket_samples_increasing(ball):
    rng = np.random.default_rng(1)
    fn = Functional.on_grid(ball, ExponentParams(9.0))
    for scale in (1e-3, 1.0, 1e3):
        s = project(fn, scale * np.abs(rng.standard_normal(ball.n))).samples
        rhs = [b for _, b in s]
        assert all(y > x for x, y in zip(rhs, rhs[1:]))


def test_projection_errors(ball):
    fn = Functional.on_grid(ball, ExponentParams(6.0), positive=True)
    with pytest.raises(ProjectionError):
        project(fn, np.zeros(ball.n))
    # positive-part functional has no Nehari point along a negative ray
    with pytest.raises(ProjectionError):
        project(fn, -np.ones(ball.n))


def test_reduced_energy_scale_invariant(ball):
    rng = np.random.default_rng(2)
    fn = Functional.on_grid(ball, ExponentParams(7.0))
    v = np.abs(rng.standard_normal(ball.n))
    e = reduced_energy(fn, v)
    for lam in (0.1, 0.5, 2.0, 10.0, *rng.uniform(0.1, 10.0, 5)):
        assert reduced_energy(fn, lam * v) == pytest.approx(e, rel=1e-10)


def test_projection_limit_at_critical(ball):
    v = principal_direction(ball)
    t_star = project(Functional.on_grid(ball, ExponentParams(12.0)), v).t
    gaps = [abs(project(Functional.on_grid(ball, ExponentParams(12.0 - d)), v).t - t_star) for d in (1e-1, 1e-2, 1e-3)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] <= 1e-2 * t_star


def test_ground_state_p6(ball):
    rep = ground_state(ball, ExponentParams(6.0))
    v = rep.values
    assert rep.converged and rep.positive
    assert rep.grad_norm <= 1e-8 * rep.grad_norm0
    assert abs(rep.nehari_residual) <= 1e-8 * grad_norm_sq(ball, v)
    for ax in range(3):
        assert np.max(np.abs(ball.reflect(v, ax) - v)) <= 1e-6 * np.max(v)
    assert np.linalg.norm(rep.barycenter - ball.center) <= ball.spacing
    assert rep.energy > 0
    # regression pin for the 12^3 ball (first verified run)
    assert rep.energy == pytest.approx(959.227, rel=1e-5)


def test_ground_state_energy_independent_of_start(ball):
    pr = ExponentParams(6.0)
    a = ground_state(ball, pr).energy
    rng = np.random.default_rng(3)
    b = ground_state(ball, pr, principal_direction(ball) * (1 + 0.3 * rng.uniform(size=ball.n))).energy
    assert b == pytest.approx(a, rel=1e-8)


def test_levels_bounded_away_from_zero(ball):
    for p in (4.5, 6.0, 9.0, 11.5):
        rep = ground_state(ball, ExponentParams(p))
        assert rep.energy > 0
        assert grad_norm_sq(ball, rep.values) > 1.0


def test_domain_monotonicity():
    # a smaller ball on the same lattice embeds by zero extension
    big = build_domain({"shape": "ball", "radius": 0.5, "center": 0.5}, 13)
    small = build_domain({"shape": "ball", "radius": 0.3, "center": 0.5}, 13)
    pr = ExponentParams(6.0)
    assert ground_state(big, pr).energy < ground_state(small, pr).energy


def test_zero_init_rejected(ball):
    with pytest.raises(ValueError):
        ground_state(ball, ExponentParams(6.0), np.zeros(ball.n))
    with pytest.raises(ValueError):
        ground_state(ball, ExponentParams(6.0), "bogus")


def test_nonconvergence_reported(ball):
    rep = ground_state(ball, ExponentParams(6.0), None, SolverOptions(max_iter=1, newton=False))
    assert not rep.converged


def test_critical_exponent_flagged(ball):
    rep = ground_state(ball, ExponentParams(12.0), None, SolverOptions(max_iter=30, escape_saddles=False))
    assert any("critical-exponent" in f for f in rep.flags)


def test_bump_seed(annulus):
    pr = ExponentParams(10.0)
    r = 0.12
    y = annulus.center + np.array([0.35, 0.0, 0.0])
    s = make_bump_seed(annulus, pr, y, r)
    d = np.linalg.norm(annulus.coords - y, axis=1)
    assert np.all(s[d >= r] == 0) and np.max(s) > 0
    assert np.linalg.norm(barycenter(annulus, s) - y) <= annulus.spacing
    anti = make_bump_seed(annulus, pr, annulus.center - np.array([0.35, 0.0, 0.0]), r)
    assert not np.any((s > 0) & (anti > 0))
    assert s @ anti == 0.0
    with pytest.raises(ValueError):
        make_bump_seed(annulus, pr, annulus.center, r)  # center sits in the hole


def test_bump_seed_symmetric_on_ball(ball):
    s = make_bump_seed(ball, ExponentParams(8.0), ball.center, 0.3)
    for ax in range(3):
        np.testing.assert_allclose(ball.reflect(s, ax), s, atol=1e-14)


def test_multistart_dedupe(ball):
    pr = ExponentParams(6.0)
    v = principal_direction(ball)
    reps = multistart_deflate(ball, pr, [v, v.copy()])
    assert len(reps) == 1
    with pytest.raises(ValueError):
        multistart_deflate(ball, pr, [])
    with pytest.raises(ValueError):
        multistart_deflate(ball, pr, [v], dedupe_radius=0.0)


def test_cluster_and_distance(ball):
    pr = ExponentParams(6.0)
    rep = ground_state(ball, pr)
    assert relative_distance(ball, rep.values, rep.values) == 0.0
    assert relative_distance(ball, rep.values, 2 * rep.values) == pytest.approx(0.5)
    assert cluster(ball, [rep, rep], 0.05) == [[0, 1]]


def test_saddle_escape_reaches_index_one():
    # the symmetric state is a saddle near the critical exponent; escape lands on an index-1 minimizer
    g = build_domain({"shape": "ball", "radius": 0.5, "center": 0.5}, 12)
    pr = ExponentParams.from_fraction(0.98)
    plain = ground_state(g, pr, None, SolverOptions(escape_saddles=False))
    esc = ground_state(g, pr)
    assert esc.converged and esc.energy <= plain.energy
    assert morse_index(g, esc.values, pr).index == 1


def test_minimize_history_monotone(ball):
    fn = Functional.on_grid(ball, ExponentParams(8.0))
    res = minimize_nehari(fn, principal_direction(ball), SolverOptions(newton=False, max_iter=50))
    h = np.array(res.history)
    assert np.all(np.diff(h) <= 1e-10 * abs(h[0]))
