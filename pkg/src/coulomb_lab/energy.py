"""Hamiltonian, splitting identity and weighted Fekete minimization.

All configurations are in the original (unscaled) coordinates.  The blown-up
coordinates x' = sqrt(n) x are used only where noted.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate
from scipy.optimize import line_search
from scipy.optimize._linesearch import LineSearchWarning

from .errors import SingularConfigurationError, StagnationError
from .potential import QUAD_EPSABS, QUAD_EPSREL, EquilibriumMeasure, Potential

logger = logging.getLogger(__name__)

ROW_BLOCK = 512


@dataclass(frozen=True, eq=False)
class Configuration:
    """n labelled points in the plane, original scale."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(pts)):
            raise ValueError("configuration contains non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def blown_up(self) -> np.ndarray:
        return math.sqrt(self.n) * self.points

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y"])
            for x, y in self.points:
                w.writerow([f"{x:.17g}", f"{y:.17g}"])

    @classmethod
    def from_csv(cls, path) -> Configuration:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        return cls(np.array([[float(r["x"]), float(r["y"])] for r in rows]).reshape(-1, 2))

    def to_json(self) -> str:
        return json.dumps(self.points.tolist())

    @classmethod
    def from_json(cls, text: str) -> Configuration:
        return cls(np.array(json.loads(text), dtype=float).reshape(-1, 2))


def _points(cfg) -> np.ndarray:
    return cfg.points if isinstance(cfg, Configuration) else np.asarray(cfg, dtype=float).reshape(-1, 2)


def pair_log_sum(points: np.ndarray) -> float:
    """sum_{i != j} -log|x_i - x_j| over ordered pairs.

    Row sums are formed blockwise and combined with math.fsum, so the only
    rounding is inside each row.
    """
    n = points.shape[0]
    rows = []
    for start in range(0, n, ROW_BLOCK):
        blk = points[start:start + ROW_BLOCK]
        d = blk[:, None, :] - points[None, :, :]
        r2 = d[..., 0] ** 2 + d[..., 1] ** 2
        upper = np.arange(n)[None, :] > (start + np.arange(blk.shape[0]))[:, None]
        if np.any(r2[upper] == 0.0):
            i, j = np.argwhere(upper & (r2 == 0.0))[0]
            raise SingularConfigurationError(f"points {start + i} and {j} coincide")
        rows.extend(-0.5 * np.sum(np.log(np.where(upper, r2, 1.0)), axis=1))
    return 2.0 * math.fsum(rows)


def hamiltonian(cfg, p: Potential) -> float:
    """w_n = -sum_{i != j} log|x_i - x_j| + n sum_i V(x_i)."""
    pts = _points(cfg)
    n = pts.shape[0]
    return pair_log_sum(pts) + n * math.fsum(p.V(pts))


def grad_hamiltonian(cfg, p: Potential) -> np.ndarray:
    """d w_n / d x_i = -2 sum_{j != i} (x_i - x_j)/|x_i - x_j|^2 + n grad V(x_i)."""
    pts = _points(cfg)
    n = pts.shape[0]
    g = n * p.grad(pts)
    for start in range(0, n, ROW_BLOCK):
        blk = pts[start:start + ROW_BLOCK]
        d = blk[:, None, :] - pts[None, :, :]
        r2 = d[..., 0] ** 2 + d[..., 1] ** 2
        idx = np.arange(blk.shape[0])
        r2[idx, start + idx] = np.inf
        if np.any(r2 == 0.0):
            raise SingularConfigurationError("two points coincide")
        g[start:start + ROW_BLOCK] -= 2.0 * np.sum(d / r2[..., None], axis=1)
    return g


def energy_difference(x, y, p: Potential) -> float:
    """w_n(y) - w_n(x), accurate even when the difference is far below ulp(w_n).

    Each pair contributes -log1p((|y_ij|^2 - |x_ij|^2) / |x_ij|^2), the
    numerator formed from the displacement so that no large terms cancel.
    """
    x = _points(x)
    y = _points(y)
    n = x.shape[0]
    dx = y - x
    rows = []
    for start in range(0, n, ROW_BLOCK):
        sl = slice(start, start + ROW_BLOCK)
        a = x[sl, None, :] - x[None, :, :]
        b = dx[sl, None, :] - dx[None, :, :]
        r2 = a[..., 0] ** 2 + a[..., 1] ** 2
        upper = np.arange(n)[None, :] > (start + np.arange(a.shape[0]))[:, None]
        if np.any(r2[upper] == 0.0):
            raise SingularConfigurationError("two points coincide")
        change = 2.0 * (a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1]) + b[..., 0] ** 2 + b[..., 1] ** 2
        ratio = np.where(upper, change / np.where(upper, r2, 1.0), 0.0)
        if np.any(ratio <= -1.0):
            raise SingularConfigurationError("two points coincide")
        rows.extend(-np.sum(np.log1p(ratio), axis=1))
    return math.fsum(rows) + n * math.fsum(_potential_difference(x, y, p))


def _potential_difference(x, y, p: Potential) -> np.ndarray:
    if p.kind == "grid":
        return p.V(y) - p.V(x)
    r2x = x[:, 0] ** 2 + x[:, 1] ** 2
    r2y = y[:, 0] ** 2 + y[:, 1] ** 2
    d = y - x
    dr2 = 2.0 * (x[:, 0] * d[:, 0] + x[:, 1] * d[:, 1]) + d[:, 0] ** 2 + d[:, 1] ** 2
    coeffs = (0.0, 1.0) if p.kind == "quadratic" else p.coeffs
    # r2y^k - r2x^k = dr2 * sum_{m<k} r2y^m r2x^(k-1-m)
    out = np.zeros_like(dr2)
    for k, ak in enumerate(coeffs):
        if k == 0 or ak == 0:
            continue
        out += ak * sum(r2y**m * r2x ** (k - 1 - m) for m in range(k))
    return dr2 * out


def energy_functional_I(em: EquilibriumMeasure, p: Potential) -> float:
    """I(mu_0) = L_0 + int V dmu_0, recomputed by quadrature."""
    if em.kind == "grid":
        w = em.m0_grid * em.h**2
        xs = -em.half_width + em.h * np.arange(w.shape[0])
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        vint = float(np.sum(p.V(np.stack([X, Y], axis=-1)) * w))
        return float(np.sum(em.U_grid * w)) + vint
    dmu = lambda r: float(p.radial_lap(r)) * r / 2.0
    L0, _ = integrate.quad(lambda r: float(em.U(np.array([r, 0.0]))) * dmu(r), 0.0, em.R_star,
                           epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200)
    vint, _ = integrate.quad(lambda r: float(p._radial_V(r)) * dmu(r), 0.0, em.R_star,
                             epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200)
    return L0 + vint


@dataclass(frozen=True)
class EnergyReport:
    w_n: float
    F_n_splitting: float
    F_n_direct: float
    F_hat_n: float
    zeta_sum: float
    residual: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def renormalized_energy_blown(cfg, em: EquilibriumMeasure) -> float:
    """W(grad H'_n, 1) of the blown-up configuration.

    Expands the off-diagonal Coulomb energy of nu_n - n mu_0 into its pair,
    cross and self parts, then converts to the blown-up scale.
    """
    pts = _points(cfg)
    n = pts.shape[0]
    cross = math.fsum(np.atleast_1d(em.U(pts)))
    original = math.pi * (pair_log_sum(pts) - 2.0 * n * cross + n * n * em.L0)
    return original + 0.5 * math.pi * n * math.log(n)


def splitting_report(cfg, em: EquilibriumMeasure, p: Potential) -> EnergyReport:
    """Evaluate F_n along two independent paths.

    Path A: F_n = (w_n - n^2 I_0 + (n/2) log n) / n.
    Path B: F_n = W(grad H'_n, 1) / (n pi) + 2 sum_i zeta(x_i).
    """
    pts = _points(cfg)
    n = pts.shape[0]
    w = hamiltonian(pts, p)
    f_split = (w - n * n * em.I0 + 0.5 * n * math.log(n)) / n
    f_hat = renormalized_energy_blown(pts, em) / (n * math.pi)
    zsum = math.fsum(np.atleast_1d(em.zeta(pts)))
    f_direct = f_hat + 2.0 * zsum
    return EnergyReport(w, f_split, f_direct, f_hat, zsum, abs(f_split - f_direct))


# ---------------------------------------------------------------------------
# weighted Fekete points
# ---------------------------------------------------------------------------

@dataclass
class FeketeOptions:
    max_iters: int = 20_000
    grad_tol: float | None = None  # default 1e-8 * n
    multistarts: int = 1
    seed: int = 0
    armijo: float = 1e-4
    workers: int = 1


@dataclass
class FeketeResult:
    configuration: Configuration
    w_n: float
    grad_inf: float
    iterations: int
    history: list

    @property
    def points(self) -> np.ndarray:
        return self.configuration.points


def _descend(x0: np.ndarray, p: Potential, grad_tol: float, max_iters: int, armijo: float) -> FeketeResult:
    """Polak-Ribiere+ conjugate gradients, restarted on loss of descent.

    Each step comes from a Wolfe line search (sufficient-decrease constant
    ``armijo``) applied to the energy change relative to the current iterate,
    computed by ``energy_difference`` so that decreases far below the
    rounding error of w_n itself are still resolved.  If it fails, plain
    Armijo backtracking takes over.  Every accepted step has a negative
    energy change.
    """
    shape = x0.shape
    x = x0.ravel().copy()
    f = hamiltonian(x.reshape(shape), p)
    g = grad_hamiltonian(x.reshape(shape), p).ravel()
    d = -g
    last_drop = None
    history = [f]
    it = 0
    for it in range(1, max_iters + 1):
        if np.abs(g).max() < grad_tol:
            it -= 1
            break
        slope = float(g @ d)
        if slope >= 0 or it % (2 * x.size + 1) == 0:
            d, slope = -g, -float(g @ g)
        base = x.reshape(shape)
        fun = lambda v: _safe_difference(base, v.reshape(shape), p)
        jac = lambda v: grad_hamiltonian(v.reshape(shape), p).ravel()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LineSearchWarning)
            step, _, _, df, _, _ = line_search(fun, jac, x, d, gfk=g, old_fval=0.0, old_old_fval=last_drop,
                                               c1=armijo, c2=0.1, amax=1e3)
        if step is not None and df < 0:
            gn = jac(x + step * d)
        else:
            step, df = _backtrack(fun, x, d, slope, armijo)
            if step is None:
                raise StagnationError("line search failed (step < 1e-16)", Configuration(base), f)
            gn = jac(x + step * d)
        beta = max(0.0, float(gn @ (gn - g)) / float(g @ g))
        x = x + step * d
        f += df
        last_drop = -df
        g = gn
        d = -g + beta * d
        history.append(f)
    x = x.reshape(shape)
    return FeketeResult(Configuration(x), hamiltonian(x, p), float(np.abs(g).max()), it, history)


def _backtrack(fun, x, d, slope, armijo):
    step = 1.0
    while step >= 1e-16:
        df = fun(x + step * d)
        if df <= armijo * step * slope and df < 0:
            return step, df
        step *= 0.5
    return None, None


def _safe_difference(x, y, p):
    try:
        return energy_difference(x, y, p)
    except SingularConfigurationError:
        return math.inf


def minimize_fekete(cfg0, p: Potential, opts: FeketeOptions | None = None,
                    em: EquilibriumMeasure | None = None, **kwargs) -> FeketeResult:
    """Minimize w_n starting from ``cfg0`` (plus random restarts).

    With ``multistarts > 1`` the extra starts are i.i.d. samples of mu_0
    drawn with per-start Philox streams spawned from ``seed``.  The result
    never has a larger w_n than ``cfg0``.
    """
    opts = opts or FeketeOptions()
    for k, v in kwargs.items():
        setattr(opts, k, v)
    x0 = _points(cfg0).copy()
    n = x0.shape[0]
    w0 = hamiltonian(x0, p)
    grad_tol = 1e-8 * n if opts.grad_tol is None else opts.grad_tol
    starts = [x0]
    if opts.multistarts > 1:
        if em is None:
            from .potential import solve_equilibrium_radial

            em = solve_equilibrium_radial(p)
        seeds = np.random.SeedSequence(opts.seed).spawn(opts.multistarts - 1)
        starts += [em.sample(n, np.random.Generator(np.random.Philox(s))) for s in seeds]

    def run(x):
        try:
            return _descend(x, p, grad_tol, opts.max_iters, opts.armijo)
        except StagnationError as exc:
            logger.warning("start stagnated at w_n=%.17g", exc.best_value)
            return FeketeResult(exc.best, exc.best_value, float(np.abs(grad_hamiltonian(exc.best, p)).max()),
                                -1, [exc.best_value])

    if opts.workers > 1:
        with ThreadPoolExecutor(opts.workers) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(x) for x in starts]
    best = min(results, key=lambda r: r.w_n)
    if best.w_n > w0:
        return FeketeResult(Configuration(x0), w0, float(np.abs(grad_hamiltonian(x0, p)).max()), 0, [w0])
    return best
