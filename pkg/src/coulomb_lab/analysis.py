"""Statistics of configurations: discrepancy, electric field norms, psi_6.

Discrepancy takes blown-up centers and radii (x' = sqrt(n) x); field
quantities work in the original scale.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.spatial import ConvexHull, cKDTree
from scipy.special import roots_jacobi

from .energy import Configuration, _points
from .errors import SingularConfigurationError
from .potential import EquilibriumMeasure

def discrepancy(cfg, em: EquilibriumMeasure, x0_blown, R: float) -> float:
    """D(x', R): points in the blown-up ball B(x', R) minus n mu_0 of that ball."""
    if not R > 0:
        raise ValueError("R must be positive")
    pts = _points(cfg)
    n = pts.shape[0]
    s = math.sqrt(n)
    x0 = np.asarray(x0_blown, dtype=float) / s
    r = R / s
    count = int(np.count_nonzero(np.hypot(pts[:, 0] - x0[0], pts[:, 1] - x0[1]) <= r))
    return count - n * float(em.mass_in_disk(x0, r))


@dataclass
class DiscrepancyField:
    """D(x', R) on a grid of blown-up centers."""

    centers: np.ndarray
    R: float
    values: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "D"])
            for (x, y), d in zip(self.centers, self.values):
                w.writerow([f"{x:.17g}", f"{y:.17g}", f"{d:.17g}"])


def _midpoints(window, step: float) -> tuple[np.ndarray, float]:
    x0, x1, y0, y1 = (float(v) for v in window)
    nx = max(1, int(round((x1 - x0) / step)))
    ny = max(1, int(round((y1 - y0) / step)))
    hx, hy = (x1 - x0) / nx, (y1 - y0) / ny
    xs = x0 + hx * (np.arange(nx) + 0.5)
    ys = y0 + hy * (np.arange(ny) + 0.5)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], axis=1), hx * hy


def discrepancy_field(cfg, em: EquilibriumMeasure, window_blown, R: float, grid_step: float) -> DiscrepancyField:
    """D(x', R) at the cell midpoints of ``window_blown`` = (x0, x1, y0, y1)."""
    if not R > 0:
        raise ValueError("R must be positive")
    pts = _points(cfg)
    n = pts.shape[0]
    s = math.sqrt(n)
    centers, _ = _midpoints(window_blown, grid_step)
    tree = cKDTree(s * pts)
    counts = tree.query_ball_point(centers, R, return_length=True)
    expected = n * np.asarray(em.mass_in_disk(centers / s, R / s), dtype=float)
    return DiscrepancyField(centers, R, counts - expected)


def discrepancy_moment(cfg, em: EquilibriumMeasure, window_blown, R: float, grid_step: float) -> float:
    """Midpoint quadrature of D^2/R^2 min(1, |D|/R^2) over a blown-up window."""
    field = discrepancy_field(cfg, em, window_blown, R, grid_step)
    _, area = _midpoints(window_blown, grid_step)
    D = field.values
    integrand = D**2 / R**2 * np.minimum(1.0, np.abs(D) / R**2)
    return float(integrand.sum() * area)


def electric_field(cfg, em: EquilibriumMeasure, x) -> np.ndarray:
    """E = -grad H_n with H_n = sum_i -log|x - x_i| - n U(x), original scale.

    E(x) = sum_i (x - x_i)/|x - x_i|^2 + n grad U(x).  Accepts one point or
    an (m, 2) array.
    """
    pts = _points(cfg)
    n = pts.shape[0]
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xs = x.reshape(-1, 2)
    out = n * np.asarray(em.grad_U(xs), dtype=float).reshape(-1, 2)
    if _add_coulomb_field(np.ascontiguousarray(xs), np.ascontiguousarray(pts), out):
        raise SingularConfigurationError("field evaluated at a particle")
    return out[0] if single else out


@njit(cache=True)
def _add_coulomb_field(xs, pts, out):
    """out[m] += sum_i (x_m - x_i)/|x_m - x_i|^2; returns True on a hit particle."""
    hit = False
    for m in range(xs.shape[0]):
        ex = 0.0
        ey = 0.0
        for i in range(pts.shape[0]):
            dx = xs[m, 0] - pts[i, 0]
            dy = xs[m, 1] - pts[i, 1]
            r2 = dx * dx + dy * dy
            if r2 == 0.0:
                hit = True
                continue
            ex += dx / r2
            ey += dy / r2
        out[m, 0] += ex
        out[m, 1] += ey
    return hit


def potential_H(cfg, em: EquilibriumMeasure, x) -> np.ndarray:
    """H_n(x) = sum_i -log|x - x_i| - n U(x)."""
    pts = _points(cfg)
    n = pts.shape[0]
    xs = np.asarray(x, dtype=float).reshape(-1, 2)
    d = xs[:, None, :] - pts[None, :, :]
    h = -0.5 * np.log(d[..., 0] ** 2 + d[..., 1] ** 2).sum(axis=1) - n * np.asarray(em.U(xs)).reshape(-1)
    return h[0] if np.ndim(x) == 1 else h


def flux_through_circle(cfg, em: EquilibriumMeasure, center, radius: float, m: int = 512) -> float:
    """Outward flux of E through a circle (trapezoid rule, spectrally accurate)."""
    th = 2 * np.pi * np.arange(m) / m
    nrm = np.stack([np.cos(th), np.sin(th)], axis=1)
    E = electric_field(cfg, em, np.asarray(center, dtype=float) + radius * nrm)
    return float(np.sum(E * nrm) * radius * 2 * np.pi / m)


def circulation_around_circle(cfg, em: EquilibriumMeasure, center, radius: float, m: int = 512) -> float:
    """Line integral of E along a circle; zero for a gradient field."""
    th = 2 * np.pi * np.arange(m) / m
    nrm = np.stack([np.cos(th), np.sin(th)], axis=1)
    tan = np.stack([-np.sin(th), np.cos(th)], axis=1)
    E = electric_field(cfg, em, np.asarray(center, dtype=float) + radius * nrm)
    return float(np.sum(E * tan) * radius * 2 * np.pi / m)


def _bump(t: np.ndarray) -> np.ndarray:
    """C-infinity cutoff: 1 for t <= 1/2, 0 for t >= 1."""
    s = np.clip(2.0 * t - 1.0, 0.0, 1.0)
    with np.errstate(divide="ignore"):
        a = np.where(s < 1, np.exp(-1.0 / np.maximum(1.0 - s, 1e-300)), 0.0)
        b = np.where(s > 0, np.exp(-1.0 / np.maximum(s, 1e-300)), 0.0)
    return a / (a + b)


def field_Lq_norm(cfg, em: EquilibriumMeasure, window, q: float, grid_step: float,
                  exclusion: float = 0.0, radial_nodes: int = 24, angular_nodes: int = 32) -> float:
    """(int |E|^q)^(1/q) over ``window`` = (x0, x1, y0, y1) minus disks around particles.

    With ``exclusion`` > 0 this is the midpoint rule on the nodes farther
    than ``exclusion`` from every particle.  With ``exclusion`` = 0 the
    r^-q singularities are split off by a smooth cutoff of radius delta_i
    (at most half the nearest-neighbour distance): the remainder goes to the
    midpoint rule and each cut-off piece to a polar rule, Gauss-Jacobi in r
    with weight r^(1-q) times the trapezoid rule in angle.
    """
    if not 1.0 < q < 2.0:
        raise ValueError("q must lie in (1, 2)")
    pts = _points(cfg)
    nodes, area = _midpoints(window, grid_step)
    tree = cKDTree(pts)
    if exclusion > 0 or pts.shape[0] == 0:
        dist, _ = tree.query(nodes)
        keep = dist > max(exclusion, 0.0)
        E = electric_field(pts, em, nodes[keep])
        return float((np.sum(np.hypot(E[:, 0], E[:, 1]) ** q) * area) ** (1.0 / q))

    x0, x1, y0, y1 = (float(v) for v in window)
    if pts.shape[0] > 1:
        nn = tree.query(pts, k=2)[0][:, 1]
    else:
        nn = np.array([np.inf])
    delta = np.minimum(0.5 * nn, 4.0 * grid_step)

    # smooth part on the grid
    dist, idx = tree.query(nodes)
    chi = _bump(dist / delta[idx])
    keep = chi < 1.0
    E = electric_field(pts, em, nodes[keep])
    total = float(np.sum(np.hypot(E[:, 0], E[:, 1]) ** q * (1.0 - chi[keep])) * area)

    # singular parts in polar coordinates
    near = ((pts[:, 0] > x0 - delta) & (pts[:, 0] < x1 + delta)
            & (pts[:, 1] > y0 - delta) & (pts[:, 1] < y1 + delta))
    xr, wr = roots_jacobi(radial_nodes, 0.0, 1.0 - q)
    th = 2 * np.pi * np.arange(angular_nodes) / angular_nodes
    dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    sel = np.flatnonzero(near)
    if sel.size:
        m = radial_nodes * angular_nodes
        r = 0.5 * delta[sel, None] * (1.0 + xr[None, :])
        rr = np.repeat(r, angular_nodes, axis=1).reshape(-1)
        y = (pts[sel, None, None, :] + r[:, :, None, None] * dirs[None, None, :, :]).reshape(-1, 2)
        inside = (y[:, 0] >= x0) & (y[:, 0] <= x1) & (y[:, 1] >= y0) & (y[:, 1] <= y1)
        g = np.zeros(y.shape[0])
        Ey = electric_field(pts, em, y[inside])
        g[inside] = (np.hypot(Ey[:, 0], Ey[:, 1]) * rr[inside]) ** q * _bump(rr[inside] / np.repeat(delta[sel], m)[inside])
        # int_0^delta r^(1-q) g dr = (delta/2)^(2-q) int (1+x)^(1-q) g dx
        g = g.reshape(sel.size, radial_nodes, angular_nodes).sum(axis=2) @ wr
        total += float(np.sum((0.5 * delta[sel]) ** (2.0 - q) * g) * 2 * np.pi / angular_nodes)
    return float(total ** (1.0 / q))


def _bulk_mask(pts: np.ndarray, em: EquilibriumMeasure | None, spacings: float) -> np.ndarray:
    n = pts.shape[0]
    if em is not None and em.kind == "radial":
        area = math.pi * em.R_star**2
        depth = em.R_star - np.hypot(pts[:, 0], pts[:, 1])
    elif em is not None:
        area = float(em.mask.sum()) * em.h**2
        depth = _depth_in_mask(em, pts)
    else:
        hull = ConvexHull(pts)
        area = hull.volume
        # distance to each facet line, positive inside
        eq = hull.equations
        depth = -(pts @ eq[:, :2].T + eq[:, 2]).max(axis=1)
    spacing = math.sqrt(area / n)
    return depth > spacings * spacing


def _depth_in_mask(em: EquilibriumMeasure, pts: np.ndarray) -> np.ndarray:
    from scipy.ndimage import distance_transform_edt

    from .potential import bilinear

    d = distance_transform_edt(em.mask) * em.h
    return bilinear(d, em.half_width, pts)


def psi6(cfg, k_neighbors: int = 6, em: EquilibriumMeasure | None = None,
         bulk_spacings: float = 3.0) -> tuple[np.ndarray, float]:
    """Bond-orientational order |mean_k exp(6 i theta_k)| over the k nearest neighbours.

    The bulk mean averages points deeper than ``bulk_spacings`` mean spacings
    inside the support of ``em``, or inside the convex hull of the points
    when no measure is given.
    """
    pts = _points(cfg)
    n = pts.shape[0]
    if n < 8:
        raise ValueError("psi6 needs at least 8 points")
    _, idx = cKDTree(pts).query(pts, k=k_neighbors + 1)
    d = pts[idx[:, 1:]] - pts[:, None, :]
    theta = np.arctan2(d[..., 1], d[..., 0])
    per_point = np.abs(np.exp(6j * theta).mean(axis=1))
    bulk = _bulk_mask(pts, em, bulk_spacings)
    bulk_mean = float(per_point[bulk].mean()) if bulk.any() else float("nan")
    return per_point, bulk_mean


def record_json(value: float, **params) -> str:
    """JSON record of a scalar result with its parameters echoed."""
    return json.dumps({"value": value, "params": params}, sort_keys=True, default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, Configuration):
        return o.points.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")
