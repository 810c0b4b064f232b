import numpy as np
import pytest

from quasinehari.domain import (
    DomainGrid, Field, GridMismatchError, ball_fits, barycenter, build_domain, distance_to_domain,
    energy_density, euler_characteristic_2d, grad_norm_sq, inner, integrate, laplacian_apply,
    lattice_symmetries, mask_to_rle, rle_to_mask, width,
)


@pytest.fixture(scope="module")
def ball():
    return build_domain({"shape": "ball", "radius": 0.5, "center": 0.5}, 12)


def test_rectangle_counts_and_stencil():
    g = build_domain({"shape": "rectangle", "dim": 2}, 9)
    assert g.n == 49
    assert g.spacing == pytest.approx(1 / 8)
    v = np.zeros(g.n)
    v[24] = 1.0  # middle node
    lap = laplacian_apply(g, v)
    assert lap[24] == pytest.approx(4 / g.spacing**2)
    assert lap[23] == pytest.approx(-1 / g.spacing**2)


def test_ball_mask_reflection_symmetric(ball):
    for ax in range(3):
        assert np.array_equal(ball.mask, np.flip(ball.mask, axis=ax))
    assert np.array_equal(ball.mask, ball.mask.transpose(1, 0, 2))


def test_laplacian_commutes_with_reflections(ball):
    rng = np.random.default_rng(0)
    v = rng.standard_normal(ball.n)
    for ax in range(3):
        np.testing.assert_allclose(laplacian_apply(ball, ball.reflect(v, ax)),
                                   ball.reflect(laplacian_apply(ball, v), ax), rtol=1e-13, atol=1e-9)


def test_summation_by_parts(ball):
    rng = np.random.default_rng(1)
    v, w = rng.standard_normal((2, ball.n))
    lhs = ball.weight * inner(laplacian_apply(ball, v), w)
    rhs = float(v @ (ball.stiffness @ w))
    assert lhs == pytest.approx(rhs, rel=1e-12)
    assert grad_norm_sq(ball, v) == pytest.approx(ball.weight * inner(laplacian_apply(ball, v), v), rel=1e-12)


def test_laplacian_spd_and_mmatrix(ball):
    L = ball.laplacian.toarray()
    np.testing.assert_allclose(L, L.T)
    assert np.all(np.linalg.eigvalsh(L) > 0)
    off = L - np.diag(np.diag(L))
    assert np.all(off <= 0)


def test_second_difference_of_quadratic():
    g = build_domain({"shape": "rectangle"}, 11)
    x = g.coords
    v = x[:, 0] * (1 - x[:, 0])  # vanishes on x = 0, 1 but not on the other faces
    lap = laplacian_apply(g, v)
    interior = np.all((x > 1.5 * g.spacing) & (x < 1 - 1.5 * g.spacing), axis=1)
    np.testing.assert_allclose(lap[interior], 2.0, rtol=1e-10)


def test_integrate_constant():
    g = build_domain({"shape": "rectangle"}, 21)
    assert integrate(g, np.ones(g.n)) == pytest.approx(g.n * g.spacing**3)


def test_barycenter_and_width_of_symmetric_bump(ball):
    d = np.linalg.norm(ball.coords - ball.center, axis=1)
    v = np.maximum(0.5 - d, 0.0) ** 2
    np.testing.assert_allclose(barycenter(ball, v), ball.center, atol=1e-12)
    assert 0 < width(ball, v) < 0.5
    assert energy_density(ball, v).shape == ball.shape


def test_annulus_connected_and_euler_characteristic():
    g = build_domain({"shape": "annulus", "dim": 2, "r_inner": 0.25, "r_outer": 0.5, "center": 0.5}, 33)
    assert euler_characteristic_2d(g.mask) == 0
    assert g.topology == {"cat": 2, "P1": 2}
    disk = build_domain({"shape": "ball", "dim": 2, "radius": 0.5}, 33)
    assert euler_characteristic_2d(disk.mask) == 1


def test_rectangle_with_hole():
    g = build_domain({"shape": "rectangle_with_hole", "dim": 2, "hole_radius": 0.2}, 33)
    assert euler_characteristic_2d(g.mask) == 0
    assert not g.star_shaped


def test_build_errors():
    with pytest.raises(ValueError):
        build_domain({"shape": "ball", "radius": 1.0}, 5)
    with pytest.raises(ValueError):
        build_domain({"shape": "torus"}, 10)
    with pytest.raises(ValueError):
        build_domain({"shape": "annulus", "r_inner": 0.5, "r_outer": 0.4}, 10)
    with pytest.raises(ValueError):
        build_domain({"shape": "ball", "radius": -1.0}, 10)
    with pytest.raises(ValueError):  # shell thinner than the spacing disconnects
        build_domain({"shape": "annulus", "dim": 2, "r_inner": 0.45, "r_outer": 0.5}, 9)


def test_grid_mismatch(ball):
    with pytest.raises(GridMismatchError):
        laplacian_apply(ball, np.zeros(ball.n + 1))


def test_rle_roundtrip(ball):
    runs = mask_to_rle(ball.mask)
    assert np.array_equal(rle_to_mask(runs, ball.shape), ball.mask)


def test_field_dump_roundtrip(tmp_path, ball):
    rng = np.random.default_rng(2)
    f = Field(ball, rng.standard_normal(ball.n))
    path = tmp_path / "v.field"
    f.dump(path, {"p": 6.0})
    g = Field.load(path)
    np.testing.assert_array_equal(g.values, f.values)
    assert np.array_equal(g.grid.mask, ball.mask)
    assert g.grid.spacing == ball.spacing


def test_header_roundtrip(ball):
    g = DomainGrid.from_header(ball.to_header())
    assert g.shape == ball.shape and g.n == ball.n
    np.testing.assert_array_equal(g.center, ball.center)


def test_ball_fits_and_distance(ball):
    assert ball_fits(ball, ball.center, 0.3)
    assert not ball_fits(ball, ball.center, 0.6)
    assert distance_to_domain(ball, ball.center) <= ball.spacing
    assert distance_to_domain(ball, ball.center + 2.0) > 1.0


def test_lattice_symmetries(ball):
    syms = lattice_symmetries(ball)
    assert len(syms) == 48  # full octahedral group of the cube
    rng = np.random.default_rng(3)
    v = rng.standard_normal(ball.n)
    for s in syms[:6]:
        assert grad_norm_sq(ball, v[s]) == pytest.approx(grad_norm_sq(ball, v), rel=1e-12)
    rect = build_domain({"shape": "rectangle", "dim": 2, "upper": [2.0, 1.0]}, 9)
    assert len(lattice_symmetries(rect)) == 4
