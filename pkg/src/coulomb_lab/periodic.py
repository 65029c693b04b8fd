"""Renormalized energy of periodic configurations by Ewald summation.

The torus Green function solves -Delta G = 2 pi (delta_0 - 1/|T|) with zero
mean.  With the screening parameter alpha it splits as

    G(x) = sum_lam E1(alpha |x + lam|^2) / 2
           + (2 pi / |T|) sum_{k != 0} cos(k.x) exp(-|k|^2 / 4 alpha) / |k|^2
           - pi / (2 alpha |T|),

a real-space sum over the lattice and a reciprocal sum over the dual
lattice, both with Gaussian tails.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import exp1

from .errors import SingularConfigurationError

EULER_GAMMA = 0.5772156649015329


@dataclass(frozen=True, eq=False)
class Torus:
    """R^2 / (Z u + Z v) carrying points reduced to the fundamental cell."""

    u: tuple
    v: tuple
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        u = tuple(float(c) for c in self.u)
        v = tuple(float(c) for c in self.v)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        if not abs(u[0] * v[1] - u[1] * v[0]) > 0:
            raise ValueError("degenerate lattice basis")
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        pts = self.reduce(pts, centered=False)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def basis(self) -> np.ndarray:
        return np.array([self.u, self.v])

    @property
    def volume(self) -> float:
        return abs(self.u[0] * self.v[1] - self.u[1] * self.v[0])

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def dual_basis(self) -> np.ndarray:
        """Rows b_i with b_i . a_j = 2 pi delta_ij."""
        return 2.0 * np.pi * np.linalg.inv(self.basis).T

    def reduce(self, x: np.ndarray, centered: bool = True) -> np.ndarray:
        """Representatives of x modulo the lattice (fractional coords in [-1/2,1/2) or [0,1))."""
        x = np.asarray(x, dtype=float)
        frac = x @ np.linalg.inv(self.basis)
        frac = frac - (np.floor(frac + 0.5) if centered else np.floor(frac))
        return frac @ self.basis

    def scaled(self, s: float) -> Torus:
        return Torus(tuple(s * c for c in self.u), tuple(s * c for c in self.v), s * self.points)

    def with_points(self, points) -> Torus:
        return Torus(self.u, self.v, points)

    @classmethod
    def from_tau(cls, tau: complex, volume: float = 1.0, points=None) -> Torus:
        """Lattice with basis proportional to (1, 0), (Re tau, Im tau)."""
        s = math.sqrt(volume / tau.imag)
        return cls((s, 0.0), (s * tau.real, s * tau.imag), np.zeros((1, 2)) if points is None else points)

    @classmethod
    def triangular(cls, volume: float = 1.0, points=None) -> Torus:
        return cls.from_tau(complex(0.5, math.sqrt(3) / 2), volume, points)

    @classmethod
    def square(cls, volume: float = 1.0, points=None) -> Torus:
        return cls.from_tau(1j, volume, points)


def default_alpha(T: Torus) -> float:
    """Splitting parameter balancing the real and reciprocal Gaussian decay."""
    return math.pi / T.volume


def _vectors_within(basis: np.ndarray, radius: float) -> np.ndarray:
    """All lattice vectors of norm <= radius."""
    inv = np.linalg.inv(basis)
    # |coefficient_i| <= radius * |column i of inv|
    mi = int(math.ceil(radius * np.linalg.norm(inv[:, 0]))) + 1
    mj = int(math.ceil(radius * np.linalg.norm(inv[:, 1]))) + 1
    i, j = np.meshgrid(np.arange(-mi, mi + 1), np.arange(-mj, mj + 1), indexing="ij")
    vec = np.stack([i.ravel(), j.ravel()], axis=1) @ basis
    return vec[np.einsum("ij,ij->i", vec, vec) <= radius * radius]


def _radii(T: Torus, alpha: float, tol: float) -> tuple[float, float, float, float]:
    """Cutoffs (r_c, k_c) with their tail bounds, each below tol/10.

    The real tail is bounded by the continuum integral outside r_c - d, d the
    cell diameter, which is (pi / (2 alpha |T|)) exp(-alpha (r_c - d)^2); the
    reciprocal tail likewise by E1((k_c - d*)^2 / 4 alpha) / 2.
    """
    B = T.basis
    d = max(np.linalg.norm(B[0] + B[1]), np.linalg.norm(B[0] - B[1]))
    Bd = T.dual_basis()
    dd = max(np.linalg.norm(Bd[0] + Bd[1]), np.linalg.norm(Bd[0] - Bd[1]))
    target = tol / 10.0
    pref = math.pi / (2 * alpha * T.volume)
    s = math.sqrt(max(math.log(pref / target), 0.0) / alpha)
    rc = s + d
    real_tail = pref * math.exp(-alpha * s * s)
    # E1(z) <= exp(-z)/z: solve for the reciprocal radius by doubling then bisection
    z = 1.0
    while 0.5 * exp1(z) > target:
        z *= 2.0
    lo, hi = z / 2, z
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if 0.5 * exp1(mid) > target else (lo, mid)
    kc = math.sqrt(4 * alpha * hi) + dd
    recip_tail = 0.5 * float(exp1(hi))
    return rc, kc, real_tail, recip_tail


@dataclass(frozen=True)
class EwaldSetup:
    alpha: float
    r_cut: float
    k_cut: float
    err: float
    lattice: np.ndarray
    dual: np.ndarray


def ewald_setup(T: Torus, tol: float, alpha: float | None = None, reach: float = 0.0) -> EwaldSetup:
    """Lattice and dual-lattice vectors needed for evaluation points within ``reach`` of 0."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    alpha = default_alpha(T) if alpha is None else float(alpha)
    rc, kc, et, ek = _radii(T, alpha, tol)
    lat = _vectors_within(T.basis, rc + reach)
    dual = _vectors_within(T.dual_basis(), kc)
    dual = dual[np.einsum("ij,ij->i", dual, dual) > 0]
    # keep one of each +-k pair; cos makes them equal
    keep = (dual[:, 0] > 0) | ((dual[:, 0] == 0) & (dual[:, 1] > 0))
    return EwaldSetup(alpha, rc, kc, et + ek, lat, dual[keep])


def _green_reduced(T: Torus, x: np.ndarray, S: EwaldSetup) -> np.ndarray:
    a = S.alpha
    y = x[:, None, :] + S.lattice[None, :, :]
    r2 = np.einsum("mlk,mlk->ml", y, y)
    if np.any(r2 == 0.0):
        raise SingularConfigurationError("Green function evaluated on a lattice point")
    real = 0.5 * exp1(a * r2).sum(axis=1)
    k2 = np.einsum("ij,ij->i", S.dual, S.dual)
    w = np.exp(-k2 / (4 * a)) / k2
    recip = (4.0 * np.pi / T.volume) * (np.cos(x @ S.dual.T) @ w)
    return real + recip - np.pi / (2 * a * T.volume)


def torus_green(T: Torus, x, tol: float = 1e-10, alpha: float | None = None) -> tuple[np.ndarray, float]:
    """G(x) on the torus and a bound on the truncation error.

    Accepts one point or an (m, 2) array.  Raises on x congruent to 0.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xr = T.reduce(x.reshape(-1, 2))
    scale = math.sqrt(T.volume)
    if np.any(np.hypot(xr[:, 0], xr[:, 1]) <= 1e-14 * scale):
        raise SingularConfigurationError("Green function is singular at lattice points")
    reach = float(np.hypot(xr[:, 0], xr[:, 1]).max())
    S = ewald_setup(T, tol, alpha, reach)
    g = _green_reduced(T, xr, S)
    return (float(g[0]) if single else g), S.err


def green_regularized_constant(T: Torus, tol: float = 1e-10, alpha: float | None = None) -> tuple[float, float]:
    """lim_{x -> 0} G(x) + log|x| and its error bound.

    Near 0, E1(alpha r^2)/2 = -(gamma + log alpha)/2 - log r + O(r^2), so the
    singular part cancels against log r and the self image leaves
    -(gamma + log alpha)/2.
    """
    S = ewald_setup(T, tol, alpha)
    a = S.alpha
    lat = S.lattice[np.einsum("ij,ij->i", S.lattice, S.lattice) > 0]
    r2 = np.einsum("ij,ij->i", lat, lat)
    real = 0.5 * math.fsum(exp1(a * r2))
    k2 = np.einsum("ij,ij->i", S.dual, S.dual)
    recip = (4.0 * np.pi / T.volume) * math.fsum(np.exp(-k2 / (4 * a)) / k2)
    const = real - 0.5 * (EULER_GAMMA + math.log(a)) + recip - np.pi / (2 * a * T.volume)
    return const, S.err


def regularized_constant_richardson(T: Torus, direction=(1.0, 0.0), r0: float | None = None,
                                    levels: int = 4, tol: float = 1e-12) -> float:
    """Independent estimate of lim G(x) + log|x| by Richardson extrapolation.

    G(x) + log|x| is even in x and smooth, so along a ray it is a series in
    r^2; successive halving eliminates the r^2, r^4, ... terms.
    """
    e = np.asarray(direction, dtype=float)
    e = e / np.linalg.norm(e)
    r0 = 0.05 * math.sqrt(T.volume) if r0 is None else r0
    rs = r0 / 2.0 ** np.arange(levels)
    g, _ = torus_green(T, rs[:, None] * e[None, :], tol)
    table = list(g + np.log(rs))
    for k in range(1, levels):
        f = 4.0**k
        table = [(f * table[i + 1] - table[i]) / (f - 1) for i in range(len(table) - 1)]
    return float(table[0])


@dataclass(frozen=True)
class PeriodicW:
    basis: list
    n: int
    W: float
    err: float
    alpha: float
    radii: list

    def to_json(self) -> str:
        return json.dumps({"basis": self.basis, "n": self.n, "W": self.W, "err": self.err,
                           "alpha": self.alpha, "radii": self.radii}, sort_keys=True)


def _w_torus(T: Torus, density: float, tol: float, alpha: float | None) -> PeriodicW:
    """W of the periodic configuration with background density ``density`` = n/|T|.

    W = (pi m / n) sum_{i != j} G(a_i - a_j) + pi m lim (G + log|x|).
    """
    n = T.n
    if n < 1:
        raise ValueError("torus carries no points")
    const, err_c = green_regularized_constant(T, tol, alpha)
    pair = 0.0
    err_p = 0.0
    if n > 1:
        i, j = np.triu_indices(n, 1)
        diffs = T.points[i] - T.points[j]
        red = T.reduce(diffs)
        if np.any(np.hypot(red[:, 0], red[:, 1]) <= 1e-14 * math.sqrt(T.volume)):
            raise SingularConfigurationError("two points coincide modulo the lattice")
        g, err_p = torus_green(T, diffs, tol, alpha)
        pair = 2.0 * math.fsum(g)
    S = ewald_setup(T, tol, alpha)
    W = math.pi * density / n * pair + math.pi * density * const
    err = math.pi * density * (n - 1) * err_p + math.pi * density * err_c
    return PeriodicW(T.basis.tolist(), n, float(W), float(err), float(S.alpha), [float(S.r_cut), float(S.k_cut)])


def w_periodic(T: Torus, tol: float = 1e-10, alpha: float | None = None, record: bool = False):
    """W of the periodic field of the torus points, background density 1.

    Requires |T| = n.  Returns W, or the full record with ``record=True``.
    """
    if abs(T.volume - T.n) > 1e-9 * max(1.0, T.n):
        raise ValueError(f"torus volume {T.volume!r} must equal the number of points {T.n}")
    res = _w_torus(T, 1.0, tol, alpha)
    return res if record else res.W


def w_scaled(T: Torus, m: float, tol: float = 1e-10, alpha: float | None = None) -> float:
    """W at background density m of the configuration of ``T`` contracted by 1/sqrt(m).

    Evaluated directly by Ewald summation on the contracted torus, so it
    gives an independent check of m (W(T) - (pi/2) log m).
    """
    if not m > 0:
        raise ValueError("density must be positive")
    Tm = T.scaled(1.0 / math.sqrt(m))
    return _w_torus(Tm, T.n / Tm.volume, tol, alpha).W


def tau_grid(nx: int = 41, ny: int = 41, y_min: float = math.sqrt(3) / 2, y_max: float = 2.0) -> np.ndarray:
    """Sample points of the fundamental domain |Re tau| <= 1/2, |tau| >= 1.

    The lower y limit is the height of the corners e^{i pi/3}, e^{2 i pi/3}.
    """
    xs = np.linspace(-0.5, 0.5, nx)
    ys = np.linspace(y_min, y_max, ny)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    tau = (X + 1j * Y).ravel()
    return tau[np.abs(tau) >= 1.0 - 1e-12]


@dataclass
class LatticeScan:
    tau: np.ndarray
    W: np.ndarray
    err: np.ndarray
    argmin: complex

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tau_re", "tau_im", "W", "err"])
            for t, W, e in zip(self.tau, self.W, self.err):
                w.writerow([f"{t.real:.17g}", f"{t.imag:.17g}", f"{W:.17g}", f"{e:.17g}"])


def lattice_scan(tol: float = 1e-8, nx: int = 41, ny: int = 41, taus=None, workers: int = 1) -> LatticeScan:
    """W of the unit-volume one-point lattice over a grid of shapes tau.

    Ties between tau and tau - 1 on the edge Re tau = +-1/2 (the same
    lattice) are resolved toward Re tau >= 0 when reporting the argmin.
    """
    taus = tau_grid(nx, ny) if taus is None else np.asarray(taus, dtype=complex)

    def one(t):
        r = w_periodic(Torus.from_tau(complex(t)), tol, record=True)
        return r.W, r.err

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            out = list(pool.map(one, taus))
    else:
        out = [one(t) for t in taus]
    W = np.array([o[0] for o in out])
    err = np.array([o[1] for o in out])
    k = int(np.argmin(W))
    near = np.flatnonzero(W <= W[k] + 2 * (err[k] + err))
    best = near[np.argmax(taus[near].real)] if near.size else k
    return LatticeScan(taus, W, err, complex(taus[best]))
