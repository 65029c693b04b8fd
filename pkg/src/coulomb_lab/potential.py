"""Confining potentials and their equilibrium measures.

Three kinds of potential are supported:

* ``quadratic``: V(x) = |x|^2 (circular law; closed forms everywhere),
* ``radial``: V(x) = sum_k a_k |x|^(2k) with a_k >= 0,
* ``grid``: V sampled on the nodes of a square [-L, L]^2, evaluated off-node
  by bilinear interpolation.

Points are arrays whose last axis has length 2; every evaluator is vectorized
over the leading axes.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, optimize

from .errors import DomainError, NoSupportError, PotentialError

ZETA_CLAMP = 1e-10
ROOT_BRACKET = (1e-6, 1e6)
QUAD_EPSABS = 1e-12
QUAD_EPSREL = 1e-13


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise ValueError(f"points must have a trailing axis of length 2, got shape {x.shape}")
    return x


# ---------------------------------------------------------------------------
# grid helpers (shared with the obstacle solver and the sampler)
# ---------------------------------------------------------------------------

def bilinear(values: np.ndarray, half_width: float, x: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of node ``values[i, j]`` at (-L + i h, -L + j h)."""
    x = _as_points(x)
    n = values.shape[0] - 1
    h = 2.0 * half_width / n
    if np.any(np.abs(x) > half_width * (1 + 1e-12)):
        raise DomainError(f"point outside the sampled domain [-{half_width}, {half_width}]^2")
    s = (x[..., 0] + half_width) / h
    t = (x[..., 1] + half_width) / h
    i = np.clip(np.floor(s).astype(int), 0, n - 1)
    j = np.clip(np.floor(t).astype(int), 0, n - 1)
    fs = s - i
    ft = t - j
    return ((1 - fs) * (1 - ft) * values[i, j] + fs * (1 - ft) * values[i + 1, j]
            + (1 - fs) * ft * values[i, j + 1] + fs * ft * values[i + 1, j + 1])


def five_point_laplacian(values: np.ndarray, h: float) -> np.ndarray:
    """Discrete Laplacian; edge nodes copy their nearest interior neighbour."""
    lap = np.empty_like(values)
    lap[1:-1, 1:-1] = (values[2:, 1:-1] + values[:-2, 1:-1] + values[1:-1, 2:]
                       + values[1:-1, :-2] - 4.0 * values[1:-1, 1:-1]) / h**2
    lap[0, :] = lap[1, :]
    lap[-1, :] = lap[-2, :]
    lap[:, 0] = lap[:, 1]
    lap[:, -1] = lap[:, -2]
    return lap


def write_grid_binary(path, array: np.ndarray) -> None:
    """Little-endian sidecar: two int32 dims, then row-major float64 data."""
    array = np.ascontiguousarray(array, dtype="<f8")
    if array.ndim != 2:
        raise ValueError("only 2-D grids can be written")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<ii", *array.shape))
        fh.write(array.tobytes(order="C"))


def read_grid_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        rows, cols = struct.unpack("<ii", fh.read(8))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != rows * cols:
        raise ValueError(f"{path}: header says {rows}x{cols}, found {data.size} values")
    return data.reshape(rows, cols).astype(float)


# ---------------------------------------------------------------------------
# Potential
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Potential:
    """Descriptor of the confining potential V.

    For ``radial`` and ``quadratic`` kinds ``coeffs[k]`` multiplies |x|^(2k).
    For the ``grid`` kind, ``values[i, j]`` is V at (-L + i h, -L + j h).
    """

    kind: str
    coeffs: tuple = ()
    half_width: float = 0.0
    values: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("quadratic", "radial", "grid"):
            raise PotentialError(f"unknown potential kind {self.kind!r}")
        if self.kind == "grid":
            v = np.asarray(self.values, dtype=float)
            if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape[0] < 3:
                raise PotentialError("grid potential needs a square array of at least 3x3 nodes")
            if not np.all(np.isfinite(v)) or self.half_width <= 0:
                raise PotentialError("grid potential needs finite values and half_width > 0")
            v.setflags(write=False)
            object.__setattr__(self, "values", v)
            return
        a = tuple(float(c) for c in self.coeffs)
        object.__setattr__(self, "coeffs", a)
        if any(c < 0 for c in a) or not any(c > 0 for c in a[1:]):
            raise PotentialError("radial coefficients must be >= 0 with some a_k > 0 for k >= 1")
        # testable proxy for V/2 - log|x| -> +infinity
        g = [self._radial_V(r) / 2 - math.log(r) for r in (10.0, 100.0, 1000.0)]
        if not (g[0] < g[1] < g[2]):
            raise PotentialError("growth condition V/2 - log|x| -> +inf fails")

    # constructors -----------------------------------------------------------

    @classmethod
    def quadratic(cls) -> Potential:
        return cls("quadratic", (0.0, 1.0))

    @classmethod
    def radial(cls, coeffs) -> Potential:
        return cls("radial", tuple(coeffs))

    @classmethod
    def quartic(cls) -> Potential:
        return cls("radial", (0.0, 0.0, 1.0))

    @classmethod
    def grid(cls, values, half_width: float) -> Potential:
        return cls("grid", (), float(half_width), np.array(values, dtype=float))

    @classmethod
    def from_dict(cls, desc: dict, base_dir=None) -> Potential:
        kind = desc.get("kind")
        if kind == "quadratic":
            return cls.quadratic()
        if kind == "quartic":
            return cls.quartic()
        if kind == "radial":
            return cls.radial(desc["coeffs"])
        if kind == "grid":
            path = Path(desc["file"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            return cls.grid(read_grid_binary(path), desc["half_width"])
        raise PotentialError(f"unknown potential kind {kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "grid":
            return {"kind": "grid", "half_width": self.half_width, "nodes": int(self.values.shape[0])}
        return {"kind": self.kind, "coeffs": list(self.coeffs)}

    # evaluation -------------------------------------------------------------

    @property
    def is_radial(self) -> bool:
        return self.kind in ("quadratic", "radial")

    @property
    def grid_step(self) -> float:
        return 2.0 * self.half_width / (self.values.shape[0] - 1)

    def _radial_V(self, r):
        r2 = np.asarray(r, dtype=float) ** 2
        return sum(a * r2**k for k, a in enumerate(self.coeffs))

    def radial_dV(self, r):
        """V'(r) for radial kinds."""
        r = np.asarray(r, dtype=float)
        return sum(2 * k * a * r ** (2 * k - 1) for k, a in enumerate(self.coeffs) if k >= 1)

    def radial_lap(self, r):
        r = np.asarray(r, dtype=float)
        return sum(4 * k * k * a * r ** (2 * k - 2) for k, a in enumerate(self.coeffs) if k >= 1)

    def V(self, x) -> np.ndarray:
        x = _as_points(x)
        if self.kind == "quadratic":
            return x[..., 0] ** 2 + x[..., 1] ** 2
        if self.kind == "radial":
            r2 = x[..., 0] ** 2 + x[..., 1] ** 2
            return sum(a * r2**k for k, a in enumerate(self.coeffs))
        return bilinear(self.values, self.half_width, x)

    def grad(self, x) -> np.ndarray:
        x = _as_points(x)
        if self.kind == "quadratic":
            return 2.0 * x
        if self.kind == "radial":
            r2 = x[..., 0] ** 2 + x[..., 1] ** 2
            # V'(r)/r = sum 2k a_k r^(2k-2), regular at the origin
            f = sum(2 * k * a * r2 ** (k - 1) for k, a in enumerate(self.coeffs) if k >= 1)
            return f[..., None] * x
        gx, gy = np.gradient(self.values, self.grid_step, edge_order=2)
        return np.stack([bilinear(gx, self.half_width, x), bilinear(gy, self.half_width, x)], axis=-1)

    def laplacian(self, x) -> np.ndarray:
        x = _as_points(x)
        if self.kind == "quadratic":
            return np.full(x.shape[:-1], 4.0)
        if self.kind == "radial":
            r2 = x[..., 0] ** 2 + x[..., 1] ** 2
            return sum(4 * k * k * a * r2 ** (k - 1) for k, a in enumerate(self.coeffs) if k >= 1)
        lap = five_point_laplacian(self.values, self.grid_step)
        return bilinear(lap, self.half_width, x)


def evaluate_potential(p: Potential, x):
    """Return ``(V(x), grad V(x), lap V(x))`` at a single point."""
    x = _as_points(x)
    if not np.all(np.isfinite(x)):
        raise DomainError("point must be finite")
    return float(p.V(x)), p.grad(x), float(p.laplacian(x))


# ---------------------------------------------------------------------------
# Equilibrium measure
# ---------------------------------------------------------------------------

def lens_area(r1, r2, d):
    """Area of the intersection of two disks of radii r1, r2 at distance d."""
    r1, r2, d = np.broadcast_arrays(np.asarray(r1, float), np.asarray(r2, float), np.asarray(d, float))
    out = np.zeros(d.shape)
    inside = d <= np.abs(r1 - r2)
    out[inside] = np.pi * np.minimum(r1, r2)[inside] ** 2
    part = ~inside & (d < r1 + r2)
    if np.any(part):
        a, b, dd = r1[part], r2[part], d[part]
        c1 = np.clip((dd**2 + a**2 - b**2) / (2 * dd * a), -1.0, 1.0)
        c2 = np.clip((dd**2 + b**2 - a**2) / (2 * dd * b), -1.0, 1.0)
        k = (-dd + a + b) * (dd + a - b) * (dd - a + b) * (dd + a + b)
        out[part] = a**2 * np.arccos(c1) + b**2 * np.arccos(c2) - 0.5 * np.sqrt(np.maximum(k, 0.0))
    return out


@dataclass(frozen=True, eq=False)
class EquilibriumMeasure:
    """Equilibrium measure mu_0 with its potential U, constant c and energies.

    ``kind`` is ``"radial"`` (support is the disk of radius ``R_star``) or
    ``"grid"`` (support is the boolean ``mask`` on the solver grid).  For the
    grid kind ``R_star`` is the largest distance from the origin of a
    coincidence node.
    """

    potential: Potential
    kind: str
    R_star: float
    c: float
    I0: float
    L0: float
    half_width: float = 0.0
    h: float = 0.0
    mask: np.ndarray | None = field(default=None, repr=False)
    m0_grid: np.ndarray | None = field(default=None, repr=False)
    U_grid: np.ndarray | None = field(default=None, repr=False)

    # --- radial pieces ---

    def _coeffs(self):
        return self.potential.coeffs

    def radial_mass(self, r):
        """mu_0(B_r) for the radial kind."""
        r = np.minimum(np.asarray(r, dtype=float), self.R_star)
        return sum(k * a * r ** (2 * k) for k, a in enumerate(self._coeffs()) if k >= 1)

    def radial_density(self, r):
        r = np.asarray(r, dtype=float)
        m = sum(k * k * a * r ** (2 * k - 2) for k, a in enumerate(self._coeffs()) if k >= 1) / np.pi
        return np.where(r <= self.R_star, m, 0.0)

    def _outer_log_moment(self, r: float) -> float:
        # int_{r < s < R} log(s) dmu_0(s)
        if r >= self.R_star:
            return 0.0
        dM = lambda s: math.log(s) * float(self.potential.radial_lap(s)) * s / 2.0
        val, _ = integrate.quad(dM, r, self.R_star, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200)
        return val

    def _radial_U(self, r: float) -> float:
        if r >= self.R_star:
            return -math.log(r)
        inner = 0.0 if r == 0.0 else -math.log(r) * float(self.radial_mass(r))
        return inner - self._outer_log_moment(r)

    # --- public evaluators ---

    def density(self, x) -> np.ndarray:
        x = _as_points(x)
        if self.kind == "radial":
            return self.radial_density(np.hypot(x[..., 0], x[..., 1]))
        inside = np.all(np.abs(x) <= self.half_width, axis=-1)
        out = np.zeros(x.shape[:-1])
        if np.any(inside):
            out[inside] = _nearest(self.m0_grid * self.mask, self.half_width, x[inside])
        return out

    def U(self, x) -> np.ndarray:
        """Logarithmic potential U(x) = -int log|x - y| dmu_0(y)."""
        x = _as_points(x)
        if self.kind == "grid":
            return bilinear(self.U_grid, self.half_width, x)
        r = np.hypot(x[..., 0], x[..., 1])
        if self.potential.kind == "quadratic":
            with np.errstate(divide="ignore"):
                return np.where(r <= 1.0, (1.0 - r**2) / 2.0, -np.log(np.maximum(r, 1.0)))
        flat = np.array([self._radial_U(float(v)) for v in r.ravel()])
        return flat.reshape(r.shape)

    def grad_U(self, x) -> np.ndarray:
        x = _as_points(x)
        if self.kind == "grid":
            gx, gy = np.gradient(self.U_grid, self.h, edge_order=2)
            return np.stack([bilinear(gx, self.half_width, x), bilinear(gy, self.half_width, x)], axis=-1)
        r2 = x[..., 0] ** 2 + x[..., 1] ** 2
        inside = r2 <= self.R_star**2
        # inside: -mu(B_r)/r^2 = -sum k a_k r^(2k-2); outside: -1/r^2
        f_in = sum(k * a * r2 ** (k - 1) for k, a in enumerate(self._coeffs()) if k >= 1)
        with np.errstate(divide="ignore"):
            f = np.where(inside, f_in, 1.0 / np.where(inside, 1.0, r2))
        return -f[..., None] * x

    def zeta(self, x) -> np.ndarray:
        """Effective potential U + V/2 - c, clamped at zero against round-off."""
        x = _as_points(x)
        if self.kind == "radial":
            r = np.hypot(x[..., 0], x[..., 1])
            z = np.where(r <= self.R_star, 0.0, self.U(x) + self.potential.V(x) / 2 - self.c)
        else:
            z = self.U(x) + self.potential.V(x) / 2 - self.c
        return np.where((z < 0) & (z > -ZETA_CLAMP), 0.0, z)

    def zeta_unclamped(self, x) -> np.ndarray:
        x = _as_points(x)
        return self.U(x) + self.potential.V(x) / 2 - self.c

    def in_support(self, x) -> np.ndarray:
        x = _as_points(x)
        if self.kind == "radial":
            return np.hypot(x[..., 0], x[..., 1]) <= self.R_star
        inside = np.all(np.abs(x) <= self.half_width, axis=-1)
        out = np.zeros(x.shape[:-1], dtype=bool)
        if np.any(inside):
            out[inside] = _nearest(self.mask.astype(float), self.half_width, x[inside]) > 0.5
        return out

    def dist_to_support(self, x) -> np.ndarray:
        x = _as_points(x)
        if self.kind == "radial":
            return np.maximum(np.hypot(x[..., 0], x[..., 1]) - self.R_star, 0.0)
        from scipy.ndimage import distance_transform_edt

        d = distance_transform_edt(~self.mask) * self.h
        return bilinear(d, self.half_width, x)

    def mass_in_disk(self, center, radius) -> np.ndarray:
        """mu_0(B(center, radius)), vectorized over centers."""
        center = _as_points(center)
        radius = float(radius)
        d = np.hypot(center[..., 0], center[..., 1])
        if self.kind == "grid":
            xs = -self.half_width + self.h * np.arange(self.mask.shape[0])
            X, Y = np.meshgrid(xs, xs, indexing="ij")
            w = (self.m0_grid * self.mask * self.h**2)[self.mask]
            px, py = X[self.mask], Y[self.mask]
            flat = center.reshape(-1, 2)
            out = np.array([w[(px - cx) ** 2 + (py - cy) ** 2 <= radius**2].sum() for cx, cy in flat])
            return out.reshape(center.shape[:-1])
        if self.potential.kind == "quadratic":
            return lens_area(self.R_star, radius, d) / np.pi
        flat = np.array([self._radial_disk_mass(float(v), radius) for v in d.ravel()])
        return flat.reshape(d.shape)

    def _radial_disk_mass(self, d: float, rho: float) -> float:
        R = self.R_star
        if d <= 1e-15:
            return float(self.radial_mass(min(rho, R)))
        if d >= R + rho:
            return 0.0
        if rho >= d + R:
            return 1.0

        def arc_fraction(s):
            if s <= rho - d:
                return 1.0
            if s >= d + rho or s <= d - rho:
                return 0.0
            cosang = (s * s + d * d - rho * rho) / (2 * s * d)
            return math.acos(max(-1.0, min(1.0, cosang))) / math.pi

        lo = max(0.0, d - rho)
        hi = min(R, d + rho)
        full = float(self.radial_mass(min(max(rho - d, 0.0), R)))
        a = max(lo, rho - d, 0.0)
        if hi <= a:
            return full
        f = lambda s: float(self.potential.radial_lap(s)) * s / 2.0 * arc_fraction(s)
        val, _ = integrate.quad(f, a, hi, epsabs=1e-13, epsrel=1e-12, limit=200)
        return full + val

    def entropy_integral(self) -> float:
        """int_Sigma m_0 log m_0."""
        if self.kind == "grid":
            m = self.m0_grid[self.mask]
            m = m[m > 0]
            return float(np.sum(m * np.log(m)) * self.h**2)
        if self.potential.kind == "quadratic":
            return -math.log(math.pi)

        def f(r):
            m = float(self.radial_density(r))
            return 0.0 if m <= 0 else m * math.log(m) * 2 * math.pi * r

        val, _ = integrate.quad(f, 0.0, self.R_star, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200)
        return val

    def density_bounds(self) -> tuple[float, float]:
        """(min, max) of m_0 over the support."""
        if self.kind == "grid":
            m = self.m0_grid[self.mask]
            return float(m.min()), float(m.max())
        r = np.linspace(0.0, self.R_star, 2001)
        m = self.radial_density(r)
        return float(m.min()), float(m.max())

    def total_mass(self) -> float:
        if self.kind == "grid":
            return float(np.sum(self.m0_grid[self.mask]) * self.h**2)
        return float(self.radial_mass(self.R_star))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """n i.i.d. points from mu_0 (rejection against the maximal density)."""
        if self.kind == "grid":
            xs = -self.half_width + self.h * np.arange(self.mask.shape[0])
            X, Y = np.meshgrid(xs, xs, indexing="ij")
            w = (self.m0_grid * self.mask)[self.mask]
            idx = rng.choice(w.size, size=n, p=w / w.sum())
            jitter = rng.uniform(-0.5, 0.5, size=(n, 2)) * self.h
            return np.stack([X[self.mask][idx], Y[self.mask][idx]], axis=-1) + jitter
        R = self.R_star
        mmax = float(self.radial_density(R))
        out = np.empty((0, 2))
        while out.shape[0] < n:
            m = 2 * (n - out.shape[0]) + 16
            r = R * np.sqrt(rng.uniform(size=m))
            th = rng.uniform(0.0, 2 * np.pi, size=m)
            keep = rng.uniform(size=m) * mmax <= self.radial_density(r)
            pts = np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)[keep]
            out = np.concatenate([out, pts])
        return out[:n]

    # --- serialization ---

    def to_json(self, path) -> dict:
        """Write the JSON record (grid arrays go to ``<stem>.<name>.bin`` sidecars)."""
        path = Path(path)
        doc = {"kind": self.kind, "c": self.c, "I0": self.I0, "L0": self.L0,
               "R_star": self.R_star, "potential": self.potential.to_dict()}
        if self.kind == "grid":
            files = {}
            for name, arr in (("U", self.U_grid), ("m0", self.m0_grid), ("mask", self.mask.astype(float))):
                fname = f"{path.stem}.{name}.bin"
                write_grid_binary(path.parent / fname, arr)
                files[name] = fname
            doc["grid"] = {"half_width": self.half_width, "h": self.h, "files": files}
        path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        return doc

    @classmethod
    def from_json(cls, path, potential: Potential) -> EquilibriumMeasure:
        path = Path(path)
        doc = json.loads(path.read_text(encoding="utf-8"))
        kw = dict(potential=potential, kind=doc["kind"], R_star=doc["R_star"], c=doc["c"],
                  I0=doc["I0"], L0=doc["L0"])
        if doc["kind"] == "grid":
            g = doc["grid"]
            arrays = {k: read_grid_binary(path.parent / f) for k, f in g["files"].items()}
            kw.update(half_width=g["half_width"], h=g["h"], U_grid=arrays["U"],
                      m0_grid=arrays["m0"], mask=arrays["mask"] > 0.5)
        return cls(**kw)


def _nearest(values: np.ndarray, half_width: float, x: np.ndarray) -> np.ndarray:
    n = values.shape[0] - 1
    h = 2.0 * half_width / n
    i = np.clip(np.rint((x[..., 0] + half_width) / h).astype(int), 0, n)
    j = np.clip(np.rint((x[..., 1] + half_width) / h).astype(int), 0, n)
    return values[i, j]


def support_radius(p: Potential) -> float:
    """Root of R V'(R) = 2 by bisection on [1e-6, 1e6]."""
    if not p.is_radial:
        raise PotentialError("support radius by R V'(R) = 2 needs a radial potential")
    g = lambda R: float(R * p.radial_dV(R)) - 2.0
    lo, hi = ROOT_BRACKET
    if g(lo) > 0 or g(hi) < 0:
        raise NoSupportError(f"R V'(R) = 2 has no root in [{lo}, {hi}]")
    R = optimize.bisect(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=400)
    return float(R)


def solve_equilibrium_radial(p: Potential) -> EquilibriumMeasure:
    """Equilibrium measure of a radial potential.

    The support is the disk of radius R with R V'(R) = 2, the density is
    Delta V / 4 pi there, and c is fixed by continuity of U + V/2 at R,
    where U = -log R.
    """
    if not p.is_radial:
        raise PotentialError("solve_equilibrium_radial needs a radial potential")
    if np.any(p.radial_lap(np.linspace(1e-3, 10.0, 64)) <= 0):
        raise PotentialError("Delta V must be positive on (0, inf)")
    R = support_radius(p)
    if p.kind == "quadratic":
        R = 1.0 if abs(R - 1.0) < 1e-12 else R
    c = float(p._radial_V(R)) / 2.0 - math.log(R)
    em = EquilibriumMeasure(p, "radial", R, c, float("nan"), float("nan"))
    dmu = lambda r: float(p.radial_lap(r)) * r / 2.0  # m_0(r) 2 pi r
    U = (lambda r: (1.0 - r * r) / 2.0) if p.kind == "quadratic" else em._radial_U
    L0, _ = integrate.quad(lambda r: U(r) * dmu(r), 0.0, R,
                           epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200)
    vint, _ = integrate.quad(lambda r: float(p._radial_V(r)) * dmu(r), 0.0, R,
                             epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200)
    return EquilibriumMeasure(p, "radial", R, c, L0 + vint, L0)


def log_potential_U(em: EquilibriumMeasure, x):
    """U^{mu_0}(x) at a point (scalar) or an array of points."""
    out = em.U(x)
    return float(out) if np.ndim(out) == 0 else out


def zeta(em: EquilibriumMeasure, x):
    out = em.zeta(x)
    return float(out) if np.ndim(out) == 0 else out
