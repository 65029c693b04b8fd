"""Equilibrium measure of a general potential from the discrete obstacle problem.

U is the smallest superharmonic function above c - V/2 with U = -log|x| on
the boundary of the box [-L, L]^2.  For fixed c it is computed by projected
SOR on the 5-point Laplacian; c is then adjusted until the discrete measure
-Delta_h U / 2 pi carried by the coincidence set has unit mass.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from numba import njit

from .errors import ConvergenceError, DomainTooSmallError
from .potential import EquilibriumMeasure, Potential, bilinear, five_point_laplacian

logger = logging.getLogger(__name__)

MIN_COARSE_CELLS = 32


@njit(cache=True)
def _psor(u, psi, omega, tol, max_iter):
    n = u.shape[0]
    delta = 0.0
    for it in range(max_iter):
        delta = 0.0
        for i in range(1, n - 1):
            for j in range(1, n - 1):
                old = u[i, j]
                new = old + omega * (0.25 * (u[i + 1, j] + u[i - 1, j] + u[i, j + 1] + u[i, j - 1]) - old)
                if new < psi[i, j]:
                    new = psi[i, j]
                d = abs(new - old)
                if d > delta:
                    delta = d
                u[i, j] = new
        if delta < tol:
            return it + 1, delta
    return max_iter, delta


def optimal_omega(cells: int) -> float:
    """SOR parameter minimizing the spectral radius for the Dirichlet Laplacian."""
    return 2.0 / (1.0 + math.sin(math.pi / cells))


class _Problem:
    def __init__(self, p: Potential, half_width: float, cells: int, omega, tol, max_iter):
        self.L = half_width
        self.N = cells
        self.h = 2.0 * half_width / cells
        xs = -half_width + self.h * np.arange(cells + 1)
        self.X, self.Y = np.meshgrid(xs, xs, indexing="ij")
        pts = np.stack([self.X, self.Y], axis=-1)
        self.V = p.V(pts)
        self.lapV = five_point_laplacian(self.V, self.h) if p.kind == "grid" else p.laplacian(pts)
        r = np.hypot(self.X, self.Y)
        self.g = -np.log(np.maximum(r, self.h))
        self.omega = optimal_omega(cells) if omega is None else float(omega)
        self.tol = tol
        self.max_iter = max_iter
        self.u = None
        self.iterations = 0

    def solve(self, c: float):
        psi = c - self.V / 2.0
        if self.u is None:
            u = self.g.copy()
        else:
            u = self.u.copy()
        u[1:-1, 1:-1] = np.maximum(u[1:-1, 1:-1], psi[1:-1, 1:-1])
        u[0, :], u[-1, :], u[:, 0], u[:, -1] = self.g[0, :], self.g[-1, :], self.g[:, 0], self.g[:, -1]
        it, delta = _psor(u, psi, self.omega, self.tol, self.max_iter)
        self.iterations += it
        if it >= self.max_iter:
            raise ConvergenceError(f"projected SOR did not converge in {self.max_iter} sweeps "
                                   f"(last update {delta:.3e})")
        self.u = u
        contact = np.zeros(u.shape, dtype=bool)
        contact[1:-1, 1:-1] = u[1:-1, 1:-1] <= psi[1:-1, 1:-1]
        return u, contact

    def density(self, u, contact):
        # discrete measure -Delta_h u / 2 pi carried by the coincidence set
        lap = np.zeros_like(u)
        lap[1:-1, 1:-1] = (u[2:, 1:-1] + u[:-2, 1:-1] + u[1:-1, 2:] + u[1:-1, :-2]
                           - 4.0 * u[1:-1, 1:-1]) / self.h**2
        return np.where(contact, np.maximum(-lap, 0.0) / (2 * np.pi), 0.0)

    def mass(self, c: float) -> tuple[float, bool]:
        u, contact = self.solve(c)
        touches = bool(contact[1, :].any() or contact[-2, :].any() or contact[:, 1].any() or contact[:, -2].any())
        return float(self.density(u, contact).sum() * self.h**2), touches


def _find_c(prob: _Problem, c0: float, step: float, mass_tol: float) -> float:
    def f(c):
        m, touches = prob.mass(c)
        return (math.inf if touches else m) - 1.0

    lo, hi = c0, c0
    flo = fhi = f(c0)
    while flo >= 0:
        hi, fhi = lo, flo
        lo -= step
        step *= 2
        flo = f(lo)
    while fhi < 0:
        lo, flo = hi, fhi
        hi += step
        step *= 2
        fhi = f(hi)
    # Illinois false position on the (continuous, nondecreasing) mass curve
    side = 0
    c, fc = hi, fhi
    for _ in range(200):
        if math.isinf(fhi):
            c = 0.5 * (lo + hi)
        else:
            c = hi - fhi * (hi - lo) / (fhi - flo)
            if not (lo < c < hi):
                c = 0.5 * (lo + hi)
        fc = f(c)
        if abs(fc) <= mass_tol or hi - lo < 1e-14:
            break
        if fc < 0:
            lo, flo = c, fc
            if side == -1 and not math.isinf(fhi):
                fhi /= 2
            side = -1
        else:
            hi, fhi = c, fc
            if side == 1:
                flo /= 2
            side = 1
    if abs(fc) > max(mass_tol, 1e-6):
        if math.isinf(fhi) or math.isinf(fc):
            raise DomainTooSmallError("unit mass is not reached before the coincidence set "
                                      "meets the boundary of the box")
        raise ConvergenceError(f"normalization of c stalled with mass error {fc:.3e}")
    prob.solve(c)
    return c


def obstacle_solve_grid(p: Potential, half_width: float = 2.0, h: float = 1.0 / 128,
                        omega: float | None = None, tol: float = 1e-10,
                        max_iter: int = 200_000, mass_tol: float = 1e-9,
                        multilevel: bool = True) -> EquilibriumMeasure:
    """Equilibrium measure on the grid of step ``h`` over [-L, L]^2.

    ``omega=None`` selects the optimal SOR parameter of the grid.  With
    ``multilevel`` the problem is first solved on a coarser grid to seed both
    the initial iterate and the search for c.
    """
    cells = int(round(2 * half_width / h))
    if cells < 8 or abs(cells * h - 2 * half_width) > 1e-9 * half_width:
        raise ValueError("2 * half_width must be a multiple of h with at least 8 cells")
    prob = _Problem(p, half_width, cells, omega, tol, max_iter)
    if multilevel and cells % 2 == 0 and cells // 2 >= MIN_COARSE_CELLS:
        coarse = obstacle_solve_grid(p, half_width, 2 * h, omega if omega is None else omega,
                                     tol, max_iter, mass_tol, multilevel)
        pts = np.stack([prob.X, prob.Y], axis=-1)
        prob.u = bilinear(coarse.U_grid, half_width, pts)
        c = _find_c(prob, coarse.c, h * h, mass_tol)
    else:
        c = _find_c(prob, float(np.median(prob.V)) / 4.0, 0.25, mass_tol)
    u = prob.u
    psi = c - prob.V / 2.0
    contact = np.zeros(u.shape, dtype=bool)
    contact[1:-1, 1:-1] = u[1:-1, 1:-1] <= psi[1:-1, 1:-1]
    if contact[1, :].any() or contact[-2, :].any() or contact[:, 1].any() or contact[:, -2].any():
        raise DomainTooSmallError(f"coincidence set reaches the boundary of [-{half_width}, {half_width}]^2")
    m0 = prob.density(u, contact)
    w = m0 * prob.h**2
    L0 = float(np.sum(u * w))
    vint = float(np.sum(prob.V * w))
    R_star = float(np.hypot(prob.X, prob.Y)[contact].max())
    logger.debug("obstacle h=%g c=%.12f sweeps=%d", prob.h, c, prob.iterations)
    u.setflags(write=False)
    return EquilibriumMeasure(p, "grid", R_star, float(c), L0 + vint, L0, half_width=half_width,
                              h=prob.h, mask=contact, m0_grid=m0, U_grid=u)
