import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coulomb_lab.errors import DomainError, NoSupportError, PotentialError
from coulomb_lab.potential import (EquilibriumMeasure, Potential, evaluate_potential, lens_area,
                                   log_potential_U, read_grid_binary, solve_equilibrium_radial,
                                   write_grid_binary, zeta)

# closed forms for V = r^4: R^4 = 1/2, c = 1/4 + log(2)/4, int V dmu = 1/4
QUARTIC_R = 0.5**0.25
QUARTIC_C = 0.25 + math.log(2) / 4
QUARTIC_I0 = QUARTIC_C + 0.125
QUARTIC_L0 = QUARTIC_I0 - 0.25


def test_evaluate_quadratic(quad):
    V, g, lap = evaluate_potential(quad, [1.0, 0.0])
    assert V == 1.0 and np.allclose(g, [2.0, 0.0]) and lap == 4.0
    V, g, lap = evaluate_potential(quad, [0.0, 0.0])
    assert V == 0.0 and np.allclose(g, [0.0, 0.0]) and lap == 4.0


def test_evaluate_quartic(quartic):
    V, g, lap = evaluate_potential(quartic, [1.0, 0.0])
    assert V == pytest.approx(1.0) and np.allclose(g, [4.0, 0.0]) and lap == pytest.approx(16.0)


def test_radial_gradient_is_radial(quartic, rng):
    x = rng.normal(size=(20, 2))
    g = quartic.grad(x)
    assert np.allclose(g[:, 0] * x[:, 1] - g[:, 1] * x[:, 0], 0.0, atol=1e-12)


def test_grid_out_of_domain():
    xs = np.linspace(-1, 1, 17)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    p = Potential.grid(X**2 + Y**2, 1.0)
    assert float(p.V([0.5, 0.25])) == pytest.approx(0.3125, abs=1e-2)
    with pytest.raises(DomainError):
        evaluate_potential(p, [1.5, 0.0])


def test_growth_validation():
    with pytest.raises(PotentialError):
        Potential.radial([1.0, 0.0, 0.0])
    with pytest.raises(PotentialError):
        Potential.radial([0.0, -1.0, 1.0])


def test_quadratic_equilibrium(em_quad):
    assert em_quad.R_star == 1.0
    assert em_quad.c == pytest.approx(0.5, abs=1e-14)
    assert em_quad.I0 == pytest.approx(0.75, abs=1e-12)
    assert em_quad.L0 == pytest.approx(0.25, abs=1e-12)
    assert em_quad.total_mass() == pytest.approx(1.0, abs=1e-10)
    assert float(em_quad.density([0.3, 0.1])) == pytest.approx(1 / math.pi)


def test_quartic_equilibrium(em_quartic):
    assert em_quartic.R_star == pytest.approx(QUARTIC_R, abs=1e-12)
    assert em_quartic.c == pytest.approx(QUARTIC_C, abs=1e-12)
    assert em_quartic.I0 == pytest.approx(QUARTIC_I0, abs=1e-10)
    assert em_quartic.L0 == pytest.approx(QUARTIC_L0, abs=1e-10)
    assert em_quartic.total_mass() == pytest.approx(1.0, abs=1e-10)
    r = 0.5
    assert float(em_quartic.radial_density(r)) == pytest.approx(4 * r * r / math.pi)
    assert em_quartic.I0 - em_quartic.L0 == pytest.approx(0.25, abs=1e-10)


def test_no_support():
    # V = a r^2 has R = 1/sqrt(a), below the bracket for huge a
    with pytest.raises(NoSupportError):
        solve_equilibrium_radial(Potential.radial([0.0, 1e14]))


def test_U_quadratic_values(em_quad):
    assert float(log_potential_U(em_quad, [0.0, 0.0])) == pytest.approx(0.5)
    assert float(log_potential_U(em_quad, [1.0, 0.0])) == pytest.approx(0.0, abs=1e-15)
    assert float(log_potential_U(em_quad, [2.0, 0.0])) == pytest.approx(-math.log(2))


def test_U_shell_formula_matches_closed_form(quad):
    # a radial potential numerically equal to |x|^2 takes the quadrature path
    em = solve_equilibrium_radial(Potential.radial([0.0, 1.0]))
    for r in (0.0, 0.3, 0.9, 1.0, 1.7):
        assert float(em.U([r, 0.0])) == pytest.approx((1 - r * r) / 2 if r <= 1 else -math.log(r), abs=1e-12)


def test_zeta_values(em_quad):
    assert float(zeta(em_quad, [0.5, 0.0])) == 0.0
    assert float(zeta(em_quad, [2.0, 0.0])) == pytest.approx(2 - math.log(2) - 0.5, abs=1e-12)
    z = float(zeta(em_quad, [1.001, 0.0]))
    assert z == pytest.approx(1e-6, rel=2e-3)


@pytest.mark.parametrize("coeffs", [(0.0, 1.0), (0.0, 0.0, 1.0), (0.0, 0.5, 0.3), (0.0, 0.2, 0.0, 0.4)])
def test_euler_lagrange(coeffs, rng):
    p = Potential.radial(list(coeffs))
    em = solve_equilibrium_radial(p)
    assert em.total_mass() == pytest.approx(1.0, abs=1e-10)
    assert em.I0 == pytest.approx(2 * em.c - em.L0, abs=1e-10)
    inside = rng.uniform(0, em.R_star, size=15)
    pts = np.column_stack([inside, np.zeros_like(inside)])
    assert np.all(np.abs(em.zeta_unclamped(pts)) <= 1e-10)
    outside = np.linspace(0, 4 * em.R_star, 40)
    pts = np.column_stack([outside, np.zeros_like(outside)])
    assert np.all(em.zeta_unclamped(pts) >= -1e-10)
    lo, hi = em.density_bounds()
    assert 0 <= lo <= hi < math.inf
    if coeffs[1] > 0:
        assert lo > 0


def test_zeta_quadratic_growth(em_quartic):
    d = np.linspace(0.01, 0.5, 30)
    pts = np.column_stack([em_quartic.R_star + d, np.zeros_like(d)])
    kappa = float(np.min(em_quartic.zeta(pts) / d**2))
    assert kappa > 0


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(0.0, 2 * math.pi))
def test_zeta_nonnegative(r, th):
    em = solve_equilibrium_radial(Potential.quadratic())
    assert float(em.zeta([r * math.cos(th), r * math.sin(th)])) >= 0.0


def test_lens_area_limits():
    assert lens_area(1.0, 0.5, 0.0) == pytest.approx(math.pi / 4)
    assert lens_area(1.0, 1.0, 3.0) == 0.0
    assert lens_area(1.0, 3.0, 0.5) == pytest.approx(math.pi)
    # two unit disks at distance 1
    assert lens_area(1.0, 1.0, 1.0) == pytest.approx(2 * math.pi / 3 - math.sqrt(3) / 2)


@pytest.mark.parametrize("center,radius", [((0.3, 0.2), 0.5), ((0.9, 0.0), 0.4), ((0.0, 0.0), 0.6),
                                           ((1.2, 0.0), 0.5)])
def test_mass_in_disk_general_radial(em_quartic, center, radius, rng):
    # Monte Carlo against the exact radial quadrature
    m = float(em_quartic.mass_in_disk(center, radius))
    pts = em_quartic.sample(200_000, rng)
    frac = np.mean(np.hypot(pts[:, 0] - center[0], pts[:, 1] - center[1]) <= radius)
    assert m == pytest.approx(frac, abs=5 * math.sqrt(frac * (1 - frac) / 200_000) + 1e-4)


def test_sample_law(em_quartic, rng):
    pts = em_quartic.sample(100_000, rng)
    r = np.hypot(pts[:, 0], pts[:, 1])
    assert r.max() <= em_quartic.R_star
    # mu(B_r) = 2 r^4
    rr = 0.6
    assert np.mean(r <= rr) == pytest.approx(2 * rr**4, abs=0.01)


def test_json_roundtrip(tmp_path, em_quartic, quartic):
    em_quartic.to_json(tmp_path / "em.json")
    back = EquilibriumMeasure.from_json(tmp_path / "em.json", quartic)
    assert (back.R_star, back.c, back.I0, back.L0) == (em_quartic.R_star, em_quartic.c, em_quartic.I0,
                                                       em_quartic.L0)


def test_grid_binary_roundtrip(tmp_path, rng):
    a = rng.normal(size=(5, 7))
    write_grid_binary(tmp_path / "a.bin", a)
    raw = (tmp_path / "a.bin").read_bytes()
    assert np.frombuffer(raw[:8], dtype="<i4").tolist() == [5, 7]
    assert np.array_equal(read_grid_binary(tmp_path / "a.bin"), a)
