"""Special functions behind every p-value and sample-size computation.

The regularized upper incomplete gamma function is implemented with the
classic series / continued-fraction split at x = a+1.  A vectorized variant
(`igamc_vec`) runs the same recurrences in per-lane lockstep (lanes freeze
individually at their own convergence step), so it is bit-identical to the
scalar function — the exhaustive enumerator relies on that to assign
p-values to category bins exactly as the one-level tests would.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .accumulate import KahanSum
from .errors import DomainError, ValidationError

Probability = float

_MACHEP = 1.11022302462515654042e-16
_MAXLOG = 709.782712893383996843
_BIG = 4.503599627370496e15
_BIGINV = 2.22044604925031308085e-16
_POISSON_TAIL = 1e-14


def log_gamma(x: float) -> float:
    """ln Γ(x) for x > 0."""
    if not x > 0:
        raise DomainError(f"log_gamma requires x > 0, got {x}")
    return math.lgamma(x)


def erfc(x: float) -> float:
    """Complementary error function."""
    return math.erfc(x)


_erfc_ufunc = np.frompyfunc(math.erfc, 1, 1)


def erfc_vec(x: np.ndarray) -> np.ndarray:
    """Elementwise erfc (same libm call as the scalar path)."""
    return _erfc_ufunc(np.asarray(x, dtype=float)).astype(float)


# numpy's log/exp (SIMD) and libm's math.log/math.exp may differ in the last
# ulp; the scalar igamc goes through numpy's so that igamc_vec is bit-identical.
def _nplog(x: float) -> float:
    return float(np.log(np.float64(x)))


def _npexp(x: float) -> float:
    return float(np.exp(np.float64(x)))


def _igam_series(a: float, x: float) -> float:
    # Regularized lower incomplete gamma P(a, x); valid for 0 < x < a + 1.
    ax = a * _nplog(x) - x - math.lgamma(a)
    if ax < -_MAXLOG:
        return 0.0
    ax = _npexp(ax)
    r = a
    c = 1.0
    ans = 1.0
    while True:
        r = r + 1.0
        c = c * (x / r)
        ans = ans + c
        if not c > ans * _MACHEP:
            break
    return ans * ax / a


def _igamc_cf(a: float, x: float) -> float:
    # Continued fraction for Q(a, x); valid for x >= a + 1.
    ax = a * _nplog(x) - x - math.lgamma(a)
    if ax < -_MAXLOG:
        return 0.0
    ax = _npexp(ax)
    y = 1.0 - a
    z = x + y + 1.0
    c = 0.0
    pkm2 = 1.0
    qkm2 = x
    pkm1 = x + 1.0
    qkm1 = z * x
    ans = pkm1 / qkm1
    while True:
        c = c + 1.0
        y = y + 1.0
        z = z + 2.0
        yc = y * c
        pk = pkm1 * z - pkm2 * yc
        qk = qkm1 * z - qkm2 * yc
        if qk != 0.0:
            r = pk / qk
            t = abs((ans - r) / r)
            ans = r
        else:
            t = 1.0
        pkm2 = pkm1
        pkm1 = pk
        qkm2 = qkm1
        qkm1 = qk
        if abs(pk) > _BIG:
            pkm2 = pkm2 * _BIGINV
            pkm1 = pkm1 * _BIGINV
            qkm2 = qkm2 * _BIGINV
            qkm1 = qkm1 * _BIGINV
        if not t > _MACHEP:
            break
    return ans * ax


def igamc(a: float, x: float) -> Probability:
    """Regularized upper incomplete gamma Q(a, x)."""
    if not a > 0:
        raise DomainError(f"igamc requires a > 0, got {a}")
    if not x >= 0:
        raise DomainError(f"igamc requires x >= 0, got {x}")
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _igam_series(a, x)
    return _igamc_cf(a, x)


def _igam_series_vec(a: float, x: np.ndarray) -> np.ndarray:
    lg = math.lgamma(a)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        ax = a * np.log(x) - x - lg
        tiny = ax < -_MAXLOG
        ax = np.exp(np.where(tiny, -_MAXLOG, ax))
        r = np.full_like(x, a)
        c = np.ones_like(x)
        ans = np.ones_like(x)
        active = np.ones(x.shape, dtype=bool)
        while True:
            r2 = r + 1.0
            c2 = c * (x / r2)
            ans2 = ans + c2
            r = np.where(active, r2, r)
            c = np.where(active, c2, c)
            ans = np.where(active, ans2, ans)
            active = active & (c2 > ans2 * _MACHEP)
            if not active.any():
                break
        out = ans * ax / a
    return np.where(tiny, 0.0, out)


def _igamc_cf_vec(a: float, x: np.ndarray) -> np.ndarray:
    lg = math.lgamma(a)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        ax = a * np.log(x) - x - lg
        tiny = ax < -_MAXLOG
        ax = np.exp(np.where(tiny, -_MAXLOG, ax))
        y = np.full_like(x, 1.0 - a)
        z = x + y + 1.0
        c = np.zeros_like(x)
        pkm2 = np.ones_like(x)
        qkm2 = x.copy()
        pkm1 = x + 1.0
        qkm1 = z * x
        ans = pkm1 / qkm1
        active = np.ones(x.shape, dtype=bool)
        while True:
            c2 = c + 1.0
            y2 = y + 1.0
            z2 = z + 2.0
            yc = y2 * c2
            pk = pkm1 * z2 - pkm2 * yc
            qk = qkm1 * z2 - qkm2 * yc
            ok = qk != 0.0
            r = np.where(ok, pk / np.where(ok, qk, 1.0), 0.0)
            t = np.where(ok, np.abs((ans - r) / r), 1.0)
            upd = active & ok
            ans = np.where(upd, r, ans)
            c = np.where(active, c2, c)
            y = np.where(active, y2, y)
            z = np.where(active, z2, z)
            pkm2 = np.where(active, pkm1, pkm2)
            qkm2 = np.where(active, qkm1, qkm2)
            pkm1 = np.where(active, pk, pkm1)
            qkm1 = np.where(active, qk, qkm1)
            scale = active & (np.abs(pkm1) > _BIG)
            if scale.any():
                pkm2 = np.where(scale, pkm2 * _BIGINV, pkm2)
                pkm1 = np.where(scale, pkm1 * _BIGINV, pkm1)
                qkm2 = np.where(scale, qkm2 * _BIGINV, qkm2)
                qkm1 = np.where(scale, qkm1 * _BIGINV, qkm1)
            active = active & (t > _MACHEP)
            if not active.any():
                break
        out = ans * ax
    return np.where(tiny, 0.0, out)


def igamc_vec(a: float, x: np.ndarray) -> np.ndarray:
    """Vectorized Q(a, x) over an array of x; bit-identical to `igamc`."""
    if not a > 0:
        raise DomainError(f"igamc requires a > 0, got {a}")
    x = np.asarray(x, dtype=float)
    if x.size and not (x >= 0).all():
        raise DomainError("igamc requires x >= 0")
    out = np.empty_like(x)
    zero = x == 0.0
    series = (x < a + 1.0) & ~zero
    cf = ~series & ~zero
    out[zero] = 1.0
    if series.any():
        out[series] = 1.0 - _igam_series_vec(a, x[series])
    if cf.any():
        out[cf] = _igamc_cf_vec(a, x[cf])
    return out


def chi2_sf(nu: int, x: float) -> Probability:
    """Survival function of the chi-squared distribution with nu df."""
    if nu < 1:
        raise DomainError(f"chi2_sf requires nu >= 1, got {nu}")
    return igamc(nu / 2.0, x / 2.0)


def chi2_sf_vec(nu: int, x: np.ndarray) -> np.ndarray:
    if nu < 1:
        raise DomainError(f"chi2_sf requires nu >= 1, got {nu}")
    return igamc_vec(nu / 2.0, np.asarray(x, dtype=float) / 2.0)


def _chi2_pdf(nu: int, x: float) -> float:
    if x <= 0:
        return 0.0
    h = nu / 2.0
    return math.exp((h - 1.0) * math.log(x) - x / 2.0 - h * math.log(2.0) - math.lgamma(h))


def chi2_isf(nu: int, alpha: Probability) -> float:
    """x with chi2_sf(nu, x) = alpha: bracketed bisection, Newton-refined."""
    if nu < 1:
        raise DomainError(f"chi2_isf requires nu >= 1, got {nu}")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"chi2_isf requires 0 < alpha < 1, got {alpha}")
    lo, hi = 0.0, float(max(nu, 1))
    while chi2_sf(nu, hi) > alpha:
        lo = hi
        hi *= 2.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if chi2_sf(nu, mid) > alpha:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-9 * max(hi, 1.0):
            break
    x = 0.5 * (lo + hi)
    best_x, best_err = x, abs(chi2_sf(nu, x) - alpha)
    for _ in range(60):
        f = chi2_sf(nu, x) - alpha
        err = abs(f)
        if err < best_err:
            best_x, best_err = x, err
        if err <= 1e-14 * alpha:
            break
        d = _chi2_pdf(nu, x)
        if d <= 0.0:
            break
        step = f / d
        x_new = x + step
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if chi2_sf(nu, x_new) > alpha:
            lo = x_new
        else:
            hi = x_new
        if x_new == x:
            break
        x = x_new
    return best_x


def noncentral_chi2_sf(nu: int, lam: float, x: float) -> Probability:
    """Noncentral chi-squared survival via the Poisson mixture
    sum_j w_j * chi2_sf(nu + 2j, x), truncated when the Poisson tail < 1e-14."""
    if nu < 1:
        raise DomainError(f"noncentral_chi2_sf requires nu >= 1, got {nu}")
    if not lam >= 0:
        raise DomainError(f"noncentral_chi2_sf requires lambda >= 0, got {lam}")
    if not x >= 0:
        raise DomainError(f"noncentral_chi2_sf requires x >= 0, got {x}")
    if lam == 0.0:
        return chi2_sf(nu, x)
    h = lam / 2.0
    j0 = int(h)  # mixture weights peak at the Poisson mode
    lw0 = -h + (j0 * math.log(h) if j0 else 0.0) - math.lgamma(j0 + 1)
    # Expand outward from the mode; a per-term cutoff of 1e-22 leaves a
    # neglected tail orders below the required 1e-14.
    cutoff = 1e-22
    acc = KahanSum()
    cum = KahanSum()
    w = math.exp(lw0)
    j = j0
    while True:
        cum.add(w)
        acc.add(w * chi2_sf(nu + 2 * j, x))
        if cum.value >= 1.0 - _POISSON_TAIL:
            break
        j += 1
        w *= h / j
        if w < cutoff:
            break
    if cum.value < 1.0 - _POISSON_TAIL and j0 > 0:
        w = math.exp(lw0)
        for j in range(j0 - 1, -1, -1):
            w *= (j + 1) / h
            if w < cutoff:
                break
            cum.add(w)
            acc.add(w * chi2_sf(nu + 2 * j, x))
            if cum.value >= 1.0 - _POISSON_TAIL:
                break
    return min(max(acc.value, 0.0), 1.0)


def log_multinomial_pmf(n: int, counts, probs) -> float:
    """log of the Multi(n; probs) mass at `counts`."""
    counts = np.asarray(counts)
    probs = np.asarray(probs, dtype=float)
    if counts.shape != probs.shape:
        raise ValidationError("counts and probs must have matching length")
    if (counts < 0).any():
        raise ValidationError("counts must be nonnegative")
    if int(counts.sum()) != n:
        raise ValidationError(f"counts sum to {int(counts.sum())}, expected {n}")
    if abs(float(probs.sum()) - 1.0) > 1e-12:
        raise ValidationError("probs must sum to 1 within 1e-12")
    pos = counts > 0
    if (probs[pos] <= 0.0).any():
        raise ValidationError("probs must be positive wherever counts are")
    res = math.lgamma(n + 1)
    for c in counts:
        res -= math.lgamma(int(c) + 1)
    for c, p in zip(counts[pos], probs[pos]):
        res += int(c) * math.log(p)
    return res


@dataclass(frozen=True)
class ChiSquaredQuantiles:
    """Upper percentiles of the chi-squared distribution used in size formulas."""

    nu: int
    alpha: float
    x_alpha: float

    @classmethod
    def compute(cls, nu: int, alpha: float) -> "ChiSquaredQuantiles":
        return cls(nu=nu, alpha=alpha, x_alpha=chi2_isf(nu, alpha))
