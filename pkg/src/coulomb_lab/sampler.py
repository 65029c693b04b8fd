"""Gibbs-measure sampling: Metropolis MCMC at any beta, exact Ginibre at beta=2.

The target law is proportional to exp(-(beta/2) w_n).  Random numbers come
from numpy's counter-based Philox generator seeded with the user seed, and
are drawn in fixed-size blocks of sweeps, so a run is reproducible bit for
bit on any platform with the same numpy.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .energy import Configuration, hamiltonian
from .errors import NumericalError
from .potential import EquilibriumMeasure, Potential

RESYNC_EVERY = 1000
DEFAULT_SIGMA = 1.0  # acceptance about 0.5 at beta = 2
NOISE_BLOCK = 1_000_000  # random numbers per block, in units of proposals


@dataclass
class McmcParams:
    beta: float
    n_particles: int
    n_sweeps: int
    burn_in_sweeps: int = 0
    proposal_sigma: float | None = None  # default DEFAULT_SIGMA / sqrt(n)
    seed: int = 0
    thinning: int = 1

    def __post_init__(self):
        if self.proposal_sigma is None:
            self.proposal_sigma = DEFAULT_SIGMA / math.sqrt(self.n_particles)
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.n_particles < 1:
            raise ValueError("n_particles must be positive")
        if not self.proposal_sigma > 0:
            raise ValueError("proposal_sigma must be positive")
        if self.thinning < 1:
            raise ValueError("thinning must be at least 1")
        if not 0 <= self.burn_in_sweeps < self.n_sweeps:
            raise ValueError("need 0 <= burn_in_sweeps < n_sweeps")


@dataclass
class ChainStats:
    acceptance_rate: float
    autocorrelation_time: float
    w_n_series: list = field(repr=False)
    proposals: int = 0
    resyncs: int = 0
    max_drift: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _kernel_potential(p: Potential):
    """(code, coefficients, grid values, half width) for the compiled kernel."""
    if p.kind == "grid":
        return 1, np.zeros(1), np.ascontiguousarray(p.values, dtype=float), float(p.half_width)
    coeffs = np.asarray((0.0, 1.0) if p.kind == "quadratic" else p.coeffs, dtype=float)
    return 0, coeffs, np.zeros((2, 2)), 1.0


@njit(cache=True)
def _V(code, coeffs, values, L, x, y):
    if code == 0:
        r2 = x * x + y * y
        acc = 0.0
        for k in range(coeffs.shape[0] - 1, -1, -1):
            acc = acc * r2 + coeffs[k]
        return acc
    # bilinear on the sampled square; outside it the move is rejected
    if abs(x) > L or abs(y) > L:
        return np.inf
    m = values.shape[0] - 1
    h = 2.0 * L / m
    s = (x + L) / h
    t = (y + L) / h
    i = min(int(s), m - 1)
    j = min(int(t), m - 1)
    fs = s - i
    ft = t - j
    return ((1 - fs) * (1 - ft) * values[i, j] + fs * (1 - ft) * values[i + 1, j]
            + (1 - fs) * ft * values[i, j + 1] + fs * ft * values[i + 1, j + 1])


@njit(cache=True)
def _full_energy(x, code, coeffs, values, L):
    n = x.shape[0]
    pair = 0.0
    pot = 0.0
    for i in range(n):
        row = 0.0
        for j in range(i + 1, n):
            dx = x[i, 0] - x[j, 0]
            dy = x[i, 1] - x[j, 1]
            row -= 0.5 * math.log(dx * dx + dy * dy)
        pair += row
        pot += _V(code, coeffs, values, L, x[i, 0], x[i, 1])
    return 2.0 * pair + n * pot


@njit(cache=True)
def _delta_w(x, i, px, py, code, coeffs, values, L):
    n = x.shape[0]
    dv = _V(code, coeffs, values, L, px, py) - _V(code, coeffs, values, L, x[i, 0], x[i, 1])
    if not math.isfinite(dv):
        return np.inf
    s = 0.0
    for j in range(n):
        if j == i:
            continue
        ax = x[j, 0] - px
        ay = x[j, 1] - py
        bx = x[j, 0] - x[i, 0]
        by = x[j, 1] - x[i, 1]
        r2new = ax * ax + ay * ay
        if r2new == 0.0:
            return np.inf
        s += 0.5 * math.log((bx * bx + by * by) / r2new)
    return 2.0 * s + n * dv


@njit(cache=True)
def _run_sweeps(x, w, steps, log_u, half_beta, code, coeffs, values, L, since_resync, resync, out_w, stats):
    """Systematic-scan sweeps over the pre-drawn proposals ``steps`` (S, n, 2).

    ``stats`` accumulates [accepted, resyncs, max relative drift].
    """
    n = x.shape[0]
    for s in range(steps.shape[0]):
        for i in range(n):
            px = x[i, 0] + steps[s, i, 0]
            py = x[i, 1] + steps[s, i, 1]
            dw = _delta_w(x, i, px, py, code, coeffs, values, L)
            if log_u[s, i] < -half_beta * dw:
                x[i, 0] = px
                x[i, 1] = py
                w += dw
                stats[0] += 1
                since_resync += 1
                if since_resync >= resync:
                    exact = _full_energy(x, code, coeffs, values, L)
                    drift = abs(w - exact) / max(1.0, abs(exact))
                    if drift > stats[2]:
                        stats[2] = drift
                    stats[1] += 1
                    w = exact
                    since_resync = 0
        out_w[s] = w
    return w, since_resync


def metropolis_step(points: np.ndarray, i: int, proposal, log_u: float, p: Potential,
                    beta: float) -> tuple[bool, float]:
    """One Metropolis decision for moving particle ``i`` to ``proposal``.

    Updates ``points`` in place on acceptance and returns (accepted, dw).
    Only particle i's old and new positions and the others' current positions
    enter dw.
    """
    code, coeffs, values, L = _kernel_potential(p)
    dw = _delta_w(points, i, float(proposal[0]), float(proposal[1]), code, coeffs, values, L)
    accepted = bool(log_u < -0.5 * beta * dw)
    if accepted:
        points[i] = proposal
    return accepted, float(dw)


def mcmc_chain(p: Potential, em: EquilibriumMeasure, params: McmcParams,
               init=None) -> tuple[list[Configuration], ChainStats]:
    """Single-particle Metropolis chain for exp(-(beta/2) w_n).

    Starts from ``init`` or from an i.i.d. sample of mu_0, runs
    ``n_sweeps`` sweeps (each n proposals in index order) and keeps every
    ``thinning``-th configuration after burn-in.  The w_n series in the
    stats is recorded at the kept sweeps.
    """
    n = params.n_particles
    rng = np.random.Generator(np.random.Philox(params.seed))
    if init is None:
        x = em.sample(n, rng).astype(float)
    else:
        x = np.array(init.points if isinstance(init, Configuration) else init, dtype=float).reshape(n, 2)
    x = np.ascontiguousarray(x)
    code, coeffs, values, L = _kernel_potential(p)
    w = hamiltonian(x, p)
    block = max(1, NOISE_BLOCK // n)
    stats = np.zeros(3)
    since = 0
    kept, kept_w = [], []
    half_beta = 0.5 * params.beta
    done = 0
    while done < params.n_sweeps:
        S = min(block, params.n_sweeps - done)
        steps = params.proposal_sigma * rng.standard_normal((S, n, 2))
        log_u = np.log(rng.random((S, n)))
        out_w = np.empty(S)
        # sweeps are run one at a time only where a sample must be copied out
        s = 0
        while s < S:
            sweep = done + s
            nxt = _next_kept(sweep, params)
            stop = min(S, nxt - done + 1) if nxt is not None else S
            w, since = _run_sweeps(x, w, steps[s:stop], log_u[s:stop], half_beta,
                                   code, coeffs, values, L, since, RESYNC_EVERY, out_w[s:stop], stats)
            s = stop
            if nxt is not None and nxt < done + S:
                kept.append(Configuration(x.copy()))
                kept_w.append(float(out_w[nxt - done]))
        done += S
    proposals = params.n_sweeps * n
    act = chain_diagnostics(kept_w)[0] if len(kept_w) >= 100 else float("nan")
    return kept, ChainStats(float(stats[0]) / proposals, act, kept_w, proposals, int(stats[1]), float(stats[2]))


def _next_kept(sweep: int, params: McmcParams):
    """Index of the first kept sweep >= ``sweep`` (sweep k is kept after it runs)."""
    b = params.burn_in_sweeps
    if sweep < b:
        k = b
    else:
        k = b + -(-(sweep - b) // params.thinning) * params.thinning
    return k if k < params.n_sweeps else None


def ginibre_exact(n: int, seed: int = 0) -> Configuration:
    """Eigenvalues of an n x n complex Ginibre matrix with entry variance 1/n."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.Generator(np.random.Philox(seed))
    a = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2 * n)
    try:
        ev = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed for n={n}: {exc}") from exc
    return Configuration(np.column_stack([ev.real, ev.imag]))


def ginibre_trace_check(n: int, seed: int = 0) -> tuple[complex, complex]:
    """(matrix trace, eigenvalue sum) for the matrix ``ginibre_exact`` builds."""
    rng = np.random.Generator(np.random.Philox(seed))
    a = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2 * n)
    pts = ginibre_exact(n, seed).points
    return complex(np.trace(a)), complex(pts[:, 0].sum() + 1j * pts[:, 1].sum())


def chain_diagnostics(series) -> tuple[float, float, bool]:
    """Integrated autocorrelation time and standard error of the mean.

    Uses Geyer's initial positive sequence: sums of adjacent autocovariance
    pairs are accumulated while they stay positive.  A constant series is
    degenerate; its act is reported as the series length.
    Returns (act, stderr, degenerate).
    """
    y = np.asarray(series, dtype=float)
    N = y.size
    if N < 100:
        raise ValueError("series too short (need at least 100 values)")
    d = y - y.mean()
    var = float(d @ d) / N
    if var == 0.0 or var <= 1e-30 * max(1.0, float(np.mean(y * y))):
        return float(N), 0.0, True
    m = 1 << (2 * N - 1).bit_length()
    f = np.fft.rfft(d, m)
    acov = np.fft.irfft(f * np.conj(f), m)[:N] / N
    pairs = acov[: N - 1 : 2] + acov[1:N:2]
    k = 0
    total = 0.0
    while k < pairs.size and pairs[k] > 0:
        total += pairs[k]
        k += 1
    act = max((-acov[0] + 2.0 * total) / acov[0], 1.0 / N)
    return float(act), math.sqrt(var * act / N), False


def write_samples_csv(samples, path) -> None:
    """One row per point: sample, index, x, y."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", "index", "x", "y"])
        for s, cfg in enumerate(samples):
            for i, (x, y) in enumerate(cfg.points):
                w.writerow([s, i, f"{x:.17g}", f"{y:.17g}"])


def write_run(samples, stats: ChainStats, params: McmcParams, out_dir, potential: Potential,
              shard_size: int = 1000) -> list[Path]:
    """Write CSV shards, stats JSON and a manifest echoing every parameter.

    Returns the paths written, shards first.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for k in range(0, max(len(samples), 1), shard_size):
        path = out / f"samples_{k // shard_size:05d}.csv"
        write_samples_csv(samples[k:k + shard_size], path)
        files.append(path)
    (out / "chain_stats.json").write_text(stats.to_json(), encoding="utf-8")
    manifest = {"params": asdict(params), "potential": potential.to_dict(),
                "rng": "numpy Philox", "shards": [f.name for f in files]}
    (out / "run_manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1), encoding="utf-8")
    return files + [out / "chain_stats.json", out / "run_manifest.json"]
