"""Partition-function bookkeeping for the Ginibre ensemble (beta = 2, V = |x|^2).

Z_n = n^{-n(n+1)/2} pi^n prod_{k=1}^n k! exactly; the expansion
log Z_n = -3n^2/4 + (n/2) log n + n (-1 + log(2)/2 + (3/2) log pi) + O(log n)
is compared against it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .potential import EquilibriumMeasure

ORDER_N_COEFF = -1.0 + 0.5 * math.log(2.0) + 1.5 * math.log(math.pi)


def log_factorial(k) -> np.ndarray:
    """log k! via the log-gamma function."""
    return gammaln(np.asarray(k, dtype=float) + 1.0)


def logZ_ginibre_exact(n: int) -> float:
    """log Z_n = -(n(n+1)/2) log n + n log pi + sum_{k<=n} log k!."""
    if n < 1:
        raise ValueError("n must be positive")
    terms = log_factorial(np.arange(1, n + 1))
    return math.fsum([-0.5 * n * (n + 1) * math.log(n), n * math.log(math.pi), *terms])


def logZ_ginibre_asymptotic(n: int) -> float:
    """-3n^2/4 + (n/2) log n + n (-1 + log(2)/2 + (3/2) log pi)."""
    if n < 1:
        raise ValueError("n must be positive")
    return -0.75 * n * n + 0.5 * n * math.log(n) + n * ORDER_N_COEFF


def order_n_coefficient(n: int) -> float:
    """(log Z_n + 3n^2/4 - (n/2) log n) / n, which tends to ORDER_N_COEFF."""
    return (logZ_ginibre_exact(n) + 0.75 * n * n - 0.5 * n * math.log(n)) / n


def fit_order_n_coefficient(ns) -> float:
    """Least-squares fit of c1 in (log Z + 3n^2/4 - (n/2) log n) = c1 n + c2 log n + c3."""
    ns = np.asarray(ns, dtype=float)
    y = np.array([logZ_ginibre_exact(int(n)) + 0.75 * n * n - 0.5 * n * math.log(n) for n in ns])
    A = np.column_stack([ns, np.log(ns), np.ones_like(ns)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(coef[0])


def alpha_conjectural(em: EquilibriumMeasure, W_tri: float) -> float:
    """alpha = W_tri / pi - (1/2) int m_0 log m_0.

    Conjectural: it presumes the triangular lattice minimizes W.
    """
    return W_tri / math.pi - 0.5 * em.entropy_integral()


def free_energy_middle(n: int, I0: float = 0.75, beta: float = 2.0) -> float:
    """(log Z - (-beta n^2 I0 / 2 + beta n log n / 4)) / (n beta) for Ginibre."""
    return (logZ_ginibre_exact(n) - (-beta * n * n * I0 / 2 + beta * n * math.log(n) / 4)) / (n * beta)


@dataclass(frozen=True)
class PartitionReport:
    n: int
    logZ_exact: float
    logZ_asymptotic: float
    residual: float
    alpha_conjectural: float

    @property
    def residual_over_logn(self) -> float:
        return self.residual / math.log(self.n) if self.n > 1 else float("nan")


def partition_report(n: int, alpha: float = float("nan")) -> PartitionReport:
    ex = logZ_ginibre_exact(n)
    asy = logZ_ginibre_asymptotic(n)
    return PartitionReport(n, ex, asy, ex - asy, alpha)


def sweep(ns, alpha: float = float("nan")) -> list[PartitionReport]:
    return [partition_report(int(n), alpha) for n in ns]


def write_sweep_csv(reports, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "logZ_exact", "logZ_asymptotic", "residual", "residual_over_logn"])
        for r in reports:
            w.writerow([r.n, f"{r.logZ_exact:.17g}", f"{r.logZ_asymptotic:.17g}",
                        f"{r.residual:.17g}", f"{r.residual_over_logn:.17g}"])
