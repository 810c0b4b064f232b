import math

import numpy as np
import pytest

from quasinehari.domain import build_domain, lattice_symmetries
from quasinehari.experiments import (
    barycenter_census, concentration_probe, default_bump_radius, discrete_sobolev_constant, level_sweep,
    multiplicity_census, orbit_count, ps_threshold, seed_centers, strictly_decreasing, strictly_increasing,
    sweep_trends,
)
from quasinehari.functional import ExponentParams, Functional
from quasinehari.nehari import ground_state, project

# continuum best constant in ||grad u||^2 >= S ||u||_6^2, N = 3
S_CONTINUUM = 3.0 * (math.pi / 2.0) ** (4.0 / 3.0)


@pytest.fixture(scope="module")
def ball():
    return build_domain({"shape": "ball", "radius": 0.5, "center": 0.5}, 12)


@pytest.fixture(scope="module")
def annulus2d():
    return build_domain({"shape": "annulus", "dim": 2, "r_inner": 0.2, "r_outer": 0.5, "center": 0.5}, 25)


def test_monotone_helpers():
    assert strictly_increasing([1, 2, 3]) and not strictly_increasing([1, 1, 2])
    assert strictly_decreasing([3, 2, 1]) and not strictly_decreasing([3, 3])


def test_single_p_sweep(ball):
    res = level_sweep(ball, [6.0])
    assert len(res.records) == 1
    rec = res.records[0]
    fn = Functional.on_grid(ball, ExponentParams(12.0))
    v = res.reports[0].values
    t = project(fn, v).t
    assert rec.t_star == pytest.approx(t, rel=1e-12)
    assert res.m_star_projected == pytest.approx(fn.energy(t * v), rel=1e-12)
    assert res.m_star_extrapolated is None
    assert rec.m_p > 0 and rec.width > 0
    assert res.m_star_disc <= res.m_star_projected


def test_sweep_validation(ball):
    with pytest.raises(ValueError):
        level_sweep(ball, [])
    with pytest.raises(ValueError):
        level_sweep(ball, [8.0, 6.0])


def test_sweep_records_and_bookkeeping(ball):
    res = level_sweep(ball, [6.0, 8.0, 10.0])
    assert [r.p for r in res.records] == [6.0, 8.0, 10.0]
    assert res.m_star_disc == min(r.star_level for r in res.records)
    assert res.m_star_extrapolated is not None
    for rep in res.reports:
        assert rep.converged and rep.grad_norm <= 1e-8 * rep.grad_norm0
    rows = res.rows()
    assert len(rows) == 3 and "m_p" in rows[0]


def test_sweep_trends_on_synthetic_records():
    from quasinehari.experiments import SweepRecord

    def rec(p, m, t, star):
        return SweepRecord(p, m, t, star, [0.0, 0.0, 0.0], 0.1, 1.0, 1.0, 1.0, True, 1)

    tr = sweep_trends([rec(10, 1.0, 0.8, 1.5), rec(11, 1.1, 0.9, 1.4), rec(11.5, 1.2, 0.97, 1.3)])
    assert tr["m_p_increasing"] and tr["t_star_gap_decreasing"] and tr["t_star_final_ok"]
    assert tr["level_gap_decreasing"] and tr["norm_bounded"]


def test_discrete_sobolev_constant(ball):
    s = discrete_sobolev_constant(ball)
    assert s >= S_CONTINUUM  # a discrete subspace can only raise the infimum
    assert discrete_sobolev_constant(ball) == s  # cached
    assert ps_threshold(s, 3) == pytest.approx((s / 2) ** 1.5 / 3)
    assert discrete_sobolev_constant(build_domain({"shape": "ball", "dim": 2, "radius": 0.5}, 17)) is None
    assert ps_threshold(None, 2) is None


def test_concentration_requires_star_shaped():
    ann = build_domain({"shape": "annulus", "r_inner": 0.2, "r_outer": 0.5}, 12)
    with pytest.raises(ValueError):
        concentration_probe(ann, [6.0])


def test_concentration_probe_fields(ball):
    rep = concentration_probe(ball, [6.0, 7.0])
    assert len(rep.records) == 2
    assert rep.s_disc is not None and rep.ps_threshold > 0
    for r in rep.records:
        assert r.barycenter_offset <= ball.spacing
        assert np.isfinite(r.pohozaev_relative)
    assert "width_decreasing" in rep.trends and "sup_increasing" in rep.trends


def test_seed_centers():
    ann = build_domain({"shape": "annulus", "r_inner": 0.2, "r_outer": 0.5, "center": 0.5}, 16)
    cs = seed_centers(ann, "ring", 8, default_bump_radius(ann))
    radii = [np.linalg.norm(c - ann.center) for c in cs]
    np.testing.assert_allclose(radii, 0.35)
    ball = build_domain({"shape": "ball", "radius": 0.5, "center": 0.5}, 12)
    cs = seed_centers(ball, "center_offsets", 7, 0.15)
    assert len(cs) == 7
    np.testing.assert_allclose(cs[0], ball.center)
    with pytest.raises(ValueError):
        seed_centers(ball, "spiral", 3, 0.1)


def test_orbit_count_of_symmetry_images(ball):
    rng = np.random.default_rng(0)
    v = rng.uniform(size=ball.n)
    syms = lattice_symmetries(ball)
    images = [v[s] for s in syms[:5]]
    assert len(orbit_count(ball, images, 1e-9)) == 1
    assert len(orbit_count(ball, [v, 2.0 * v + 1.0], 1e-3)) == 2


def test_ball_census_single_cluster_at_p6(ball):
    cen = multiplicity_census(ball, ExponentParams(6.0))
    assert cen.n_distinct == 1 and cen.n_orbits == 1
    assert cen.meets_cat and cen.expected_cat == 1 and cen.expected_morse == 1
    assert cen.solutions[0]["morse_index"] == 1


def test_barycenter_census_2d(annulus2d):
    pr = ExponentParams(0.98 * 12.0, dim=2, cap=12.0)
    bc = barycenter_census(annulus2d, pr, n_starts=8)
    assert bc.n_passed > 0 and bc.fraction_inside == 1.0
    assert any("outside-hypotheses" in f for f in bc.flags)
    # a tiny window admits nothing and the report says so
    gs = ground_state(annulus2d, pr)
    tight = barycenter_census(annulus2d, pr, n_starts=4, epsilon=1e-300, noise=0.3, ground=gs)
    assert tight.n_passed <= 1
    off = barycenter_census(annulus2d, pr, n_starts=4, energy_filter=False, ground=gs)
    assert off.n_passed == 4
    with pytest.raises(ValueError):
        barycenter_census(annulus2d, pr, n_starts=0, ground=gs)


def test_barycenter_census_deterministic(annulus2d):
    pr = ExponentParams(0.98 * 12.0, dim=2, cap=12.0)
    gs = ground_state(annulus2d, pr)
    a = barycenter_census(annulus2d, pr, n_starts=6, seed=7, ground=gs).to_dict()
    b = barycenter_census(annulus2d, pr, n_starts=6, seed=7, ground=gs).to_dict()
    assert a == b
