"""Exit criteria, one test each, at their stated tolerances and time budgets.

Each test records a single "ACCEPTANCE k: PASS/FAIL ..." line; the lines
are printed again in the terminal summary.
"""

import math
import time

import numpy as np
import pytest
from scipy.stats import ks_2samp

from conftest import ACCEPTANCE_LINES, uniform_disk
from coulomb_lab.analysis import discrepancy, electric_field, flux_through_circle, potential_H, psi6
from coulomb_lab.energy import (Configuration, FeketeOptions, grad_hamiltonian, hamiltonian, minimize_fekete,
                                splitting_report)
from coulomb_lab.periodic import Torus, lattice_scan, tau_grid, w_periodic, w_scaled
from coulomb_lab.potential import Potential, solve_equilibrium_radial
from coulomb_lab.sampler import McmcParams, chain_diagnostics, ginibre_exact, mcmc_chain
from coulomb_lab.zfunc import fit_order_n_coefficient, logZ_ginibre_asymptotic, logZ_ginibre_exact

pytestmark = pytest.mark.acceptance


def record(k, ok, detail):
    line = f"ACCEPTANCE {k}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def test_criterion_1_splitting_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    cases = []
    for p in (Potential.quadratic(), Potential.quartic()):
        em = solve_equilibrium_radial(p)
        for _ in range(500):
            n = int(rng.integers(1, 51))
            cfg = Configuration(uniform_disk(rng, n, 1.6 * em.R_star))
            rep = splitting_report(cfg, em, p)
            # both paths compared in units of w_n
            cases.append(n * rep.residual / max(1.0, abs(rep.w_n)))
    wall = time.perf_counter() - t0
    worst = max(cases)
    ok = len(cases) == 1000 and worst <= 1e-8 and wall < 10
    assert record(1, ok, f"configs={len(cases)} worst_rel={worst:.2e} wall={wall:.1f}s")


def test_criterion_2_ginibre_partition_function():
    t0 = time.perf_counter()
    ns = [10, 20, 50, 100, 200, 500, 1000, 2000]
    ratios = [abs(logZ_ginibre_exact(n) - logZ_ginibre_asymptotic(n)) / math.log(n) for n in ns]
    target = -1 + 0.5 * math.log(2) + 1.5 * math.log(math.pi)
    fit = fit_order_n_coefficient(ns)
    wall = time.perf_counter() - t0
    ok = max(ratios) <= 5 and abs(fit - target) <= 1e-2 and wall < 1
    assert record(2, ok, f"max|res|/log n={max(ratios):.3f} fit={fit:.7f} target={target:.7f} wall={wall:.2f}s")


def test_criterion_3_triangular_minimality():
    t0 = time.perf_counter()
    scan = lattice_scan(tol=1e-8, nx=41, ny=41)
    wall = time.perf_counter() - t0
    dx = 1.0 / 40
    dy = (2.0 - math.sqrt(3) / 2) / 40
    tri = complex(0.5, math.sqrt(3) / 2)
    near = abs(scan.argmin.real - tri.real) <= dx and abs(scan.argmin.imag - tri.imag) <= dy
    sq = w_periodic(Torus.square(), 1e-8, record=True)
    tr = w_periodic(Torus.triangular(), 1e-8, record=True)
    margin = sq.W - tr.W
    err = sq.err + tr.err
    ok = near and margin > 100 * err and wall < 120 and len(scan.tau) == len(tau_grid(41, 41))
    assert record(3, ok, f"argmin={scan.argmin:.6f} margin={margin:.6f} err={err:.1e} wall={wall:.1f}s")


def test_criterion_4_scaling_law():
    worst = 0.0
    for T in (Torus.triangular(), Torus.square()):
        w = w_periodic(T, 1e-10)
        for m in (0.5, 1.0, 2.0, math.pi):
            worst = max(worst, abs(w_scaled(T, m, 1e-10) - m * (w - math.pi / 2 * math.log(m))))
    assert record(4, worst <= 1e-6, f"max deviation={worst:.2e}")


def test_criterion_5_fekete_small_n(quad, em_quad):
    t0 = time.perf_counter()
    opts = FeketeOptions(multistarts=20, seed=11, grad_tol=1e-10)
    out = {}
    for n in (1, 2, 3):
        res = minimize_fekete(uniform_disk(np.random.default_rng(n), n), quad, opts, em=em_quad)
        out[n] = (res, float(np.linalg.norm(grad_hamiltonian(res.configuration, quad))))
    wall = time.perf_counter() - t0
    r1, g1 = out[1]
    r2, g2 = out[2]
    r3, g3 = out[3]
    d2 = math.dist(*r2.points)
    d3 = [math.dist(r3.points[i], r3.points[(i + 1) % 3]) for i in range(3)]
    checks = [
        abs(r1.w_n) <= 1e-12 and np.abs(r1.points).max() <= 1e-8,
        abs(r2.w_n - 1) <= 1e-12 and abs(d2 - 1) <= 1e-8,
        abs(r3.w_n - 3) <= 1e-12 and max(abs(d - 1) for d in d3) <= 1e-8,
        max(g1, g2, g3) < 1e-8,
        wall < 5,
    ]
    ok = all(checks)
    assert record(5, ok, f"w=({r1.w_n:.1e},{r2.w_n:.12f},{r3.w_n:.12f}) |grad|max={max(g1, g2, g3):.1e} "
                         f"wall={wall:.1f}s")


@pytest.mark.slow
def test_criterion_6_sampler_vs_ginibre(quad, em_quad):
    t0 = time.perf_counter()
    n, kept, thin, burn = 100, 10_000, 10, 2_000
    params = McmcParams(beta=2.0, n_particles=n, n_sweeps=burn + kept * thin, burn_in_sweeps=burn, seed=2024,
                        thinning=thin)
    samples, stats = mcmc_chain(quad, em_quad, params)
    mc = np.concatenate([np.hypot(s.points[:, 0], s.points[:, 1]) for s in samples])
    act, _, _ = chain_diagnostics(np.array(stats.w_n_series))
    gin = np.concatenate([np.hypot(*ginibre_exact(n, 10_000 + k).points.T) for k in range(2000)])
    ks = ks_2samp(mc, gin).statistic
    wall = time.perf_counter() - t0
    acc = stats.acceptance_rate
    ok = len(samples) == kept and ks <= 0.05 and 0.2 <= acc <= 0.6 and wall < 600
    assert record(6, ok, f"KS={ks:.4f} acceptance={acc:.3f} act(w)={act:.2f} kept={len(samples)} "
                         f"wall={wall:.0f}s")


@pytest.mark.slow
def test_criterion_7_crystallization(fekete400, quad, em_quad):
    res, wall = fekete400
    n = 400
    rep = splitting_report(res.configuration, em_quad, quad)
    _, bulk = psi6(res.configuration, em=em_quad)
    w_tri = w_periodic(Torus.triangular(), 1e-10)
    alpha = w_tri / math.pi + math.log(math.pi) / 2
    gap = n * rep.F_n_splitting - n * alpha
    ok = bulk >= 0.8 and abs(gap) <= 0.3 and rep.zeta_sum <= 1e-8 and wall < 600
    # soft criterion: a failure here calls for investigation rather than a looser window
    assert record(7, ok, f"psi6_bulk={bulk:.3f} nF_n-n*alpha={gap:.3f} (window 0.3) "
                         f"sum_zeta={rep.zeta_sum:.1e} wall={wall:.0f}s")


def test_criterion_8_field_sanity(quad, em_quad):
    one = np.zeros((1, 2))
    rng = np.random.default_rng(8)
    r = rng.uniform(1.1, 5.0, 2000)
    th = rng.uniform(0, 2 * math.pi, 2000)
    newton = float(np.abs(electric_field(one, em_quad, np.column_stack([r * np.cos(th), r * np.sin(th)]))).max())

    pts = uniform_disk(rng, 6, 0.8)
    flux = flux_through_circle(pts, em_quad, pts[0], 1e-4)
    gauss = abs(flux - 2 * math.pi)

    x = np.array([[0.21, -0.33], [0.95, 0.4], [-1.7, 0.2]])
    h = 1e-6
    E = electric_field(pts, em_quad, x)
    fd = np.column_stack([-(potential_H(pts, em_quad, x + e) - potential_H(pts, em_quad, x - e)) / (2 * h)
                          for e in (np.array([h, 0.0]), np.array([0.0, h]))])
    field_fd = float(np.max(np.abs(fd - E) / np.maximum(np.abs(E), 1.0)))

    y = uniform_disk(rng, 7)
    g = grad_hamiltonian(y, quad)
    gfd = np.zeros_like(y)
    for i in range(7):
        for k in range(2):
            e = np.zeros_like(y)
            e[i, k] = h
            gfd[i, k] = (hamiltonian(y + e, quad) - hamiltonian(y - e, quad)) / (2 * h)
    grad_fd = float(np.max(np.abs(gfd - g)) / np.abs(g).max())

    ok = newton <= 1e-10 and gauss <= 1e-4 and field_fd <= 1e-5 and grad_fd <= 1e-5
    assert record(8, ok, f"newton={newton:.1e} gauss={gauss:.1e} field_fd={field_fd:.1e} grad_fd={grad_fd:.1e}")


def test_criterion_9_discrepancy(em_quad):
    origin = np.zeros((1, 2))
    ex1 = discrepancy(origin, em_quad, [0.0, 0.0], 1.0) == 0.0
    ex2 = discrepancy(origin, em_quad, [0.0, 0.0], 0.5) == 0.75
    rng = np.random.default_rng(9)
    D = np.array([discrepancy(em_quad.sample(100, rng), em_quad, [0.0, 0.0], 5.0) for _ in range(1000)])
    ex3 = abs(D.mean()) <= 3 * D.std(ddof=1) / math.sqrt(D.size)

    Rs = (2.0, 4.0, 8.0)
    samples = [ginibre_exact(100, 500 + k) for k in range(400)]
    means = [float(np.mean([discrepancy(s, em_quad, [0.0, 0.0], R) ** 2 for s in samples])) / R**4 for R in Rs]
    trend = means[0] > means[1] > means[2]
    ok = ex1 and ex2 and ex3 and trend
    assert record(9, ok, f"examples={ex1},{ex2},{ex3} mean D^2/R^4={['%.4f' % m for m in means]} samples=400")
