"""Chi-squared discrepancy, the mean-shift bound, and second-level size limits.

Given the category distribution {q_i} of a test's approximated p-values and
a null {p_i}, the discrepancy delta = sum (q_i - p_i)^2 / p_i shifts the
expected second-level chi-squared statistic to nu + N*delta (within nu*u,
u = max |1 - q_i/p_i|).  Inverting that shift at the 0.25 / 0.0001 upper
percentiles gives the safe and risky second sample sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .accumulate import KahanSum
from .errors import DomainError, ValidationError
from .exactdist import CategoryDistribution
from .numerics import ChiSquaredQuantiles, chi2_isf, noncentral_chi2_sf

DEFAULT_ALPHA_SAFE = 0.25
DEFAULT_ALPHA_RISKY = 0.0001


@dataclass
class DiscrepancyReport:
    """delta, u and the derived safe/risky second sample sizes."""

    delta: float
    u: float
    nu: int
    n_safe: int | None          # None when the safe-size numerator is <= 0
    n_risky: int
    q_source: str               # provenance of the q estimate
    quantile_safe: ChiSquaredQuantiles
    quantile_risky: ChiSquaredQuantiles

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "u": self.u,
            "nu": self.nu,
            "n_safe": self.n_safe,
            "n_risky": self.n_risky,
            "q_source": self.q_source,
            "quantiles": {
                "alpha_safe": self.quantile_safe.alpha,
                "x_safe": self.quantile_safe.x_alpha,
                "alpha_risky": self.quantile_risky.alpha,
                "x_risky": self.quantile_risky.x_alpha,
            },
        }


def _check_pair(q, p) -> tuple[np.ndarray, np.ndarray]:
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if q.shape != p.shape or q.ndim != 1:
        raise ValidationError("q and p must be 1-d vectors of equal length")
    if (p <= 0).any():
        raise ValidationError("null probabilities must be positive")
    # q tolerance admits 7-digit published vectors (off by up to ~5e-7)
    if abs(float(q.sum()) - 1.0) > 1e-6:
        raise ValidationError("q must sum to 1 within 1e-6")
    if abs(float(p.sum()) - 1.0) > 1e-9:
        raise ValidationError("p must sum to 1 within 1e-9")
    return q, p


def chi2_discrepancy(q, p) -> float:
    """delta = sum (q_i - p_i)^2 / p_i (compensated summation)."""
    q, p = _check_pair(q, p)
    acc = KahanSum()
    for qi, pi in zip(q, p):
        acc.add((qi - pi) ** 2 / pi)
    return acc.value


def max_ratio_dev(q, p) -> float:
    """u = max_i |1 - q_i/p_i|."""
    q, p = _check_pair(q, p)
    return float(np.abs(1.0 - q / p).max())


def risky_safe_sizes(
    delta: float,
    u: float,
    nu: int = 9,
    alpha_risky: float = DEFAULT_ALPHA_RISKY,
    alpha_safe: float = DEFAULT_ALPHA_SAFE,
) -> tuple[int | None, int]:
    """(N_safe, N_risky) = (floor((x_safe - nu - u*nu)/delta),
    ceil((x_risky - nu + u*nu)/delta)); N_safe is None when its numerator
    is not positive (no safe size exists)."""
    if not delta > 0:
        raise DomainError("sizes are defined only for delta > 0")
    if u < 0:
        raise DomainError("u must be nonnegative")
    x_safe = chi2_isf(nu, alpha_safe)
    x_risky = chi2_isf(nu, alpha_risky)
    num_safe = x_safe - nu - u * nu
    n_risky = math.ceil((x_risky - nu + u * nu) / delta)
    if num_safe <= 0:
        return None, n_risky
    return math.floor(num_safe / delta), n_risky


def expected_chi2_window(N: int, delta: float, u: float, nu: int) -> tuple[float, float]:
    """Bounds on E[chi^2]: nu + N*delta -/+ nu*u."""
    center = nu + N * delta
    return center - nu * u, center + nu * u


def rejection_probability(nu: int, lam: float, significance: float) -> float:
    """P(noncentral chi^2(nu, lam) exceeds the central upper critical value)."""
    if not 0 < significance < 1:
        raise DomainError("significance must be in (0,1)")
    return noncentral_chi2_sf(nu, lam, chi2_isf(nu, significance))


def safe_size_rejection_probability(
    nu: int = 9,
    alpha_safe: float = DEFAULT_ALPHA_SAFE,
    alpha_risky: float = DEFAULT_ALPHA_RISKY,
) -> float:
    """Rejection probability at the safe size: the mean shift there puts the
    noncentrality at chi2_isf(nu, alpha_safe) - nu (~0.0012 for the defaults,
    versus the nominal 0.0001)."""
    lam = chi2_isf(nu, alpha_safe) - nu
    return rejection_probability(nu, lam, alpha_risky)


def report_from_distribution(
    dist: CategoryDistribution,
    null: np.ndarray | None = None,
    alpha_risky: float = DEFAULT_ALPHA_RISKY,
    alpha_safe: float = DEFAULT_ALPHA_SAFE,
) -> DiscrepancyReport:
    """DiscrepancyReport of a category distribution against a null
    (uniform over the nu+1 intervals unless given)."""
    nu = dist.nu
    p = np.full(nu + 1, 1.0 / (nu + 1)) if null is None else np.asarray(null, float)
    delta = chi2_discrepancy(dist.q, p)
    u = max_ratio_dev(dist.q, p)
    n_safe, n_risky = risky_safe_sizes(delta, u, nu, alpha_risky, alpha_safe)
    return DiscrepancyReport(
        delta=delta,
        u=u,
        nu=nu,
        n_safe=n_safe,
        n_risky=n_risky,
        q_source=dist.provenance,
        quantile_safe=ChiSquaredQuantiles.compute(nu, alpha_safe),
        quantile_risky=ChiSquaredQuantiles.compute(nu, alpha_risky),
    )
