"""The one-level tests under study, exactly as the NIST suite computes them.

Each test maps an n-bit block to one approximated p-value (eight for the
Random Excursions test, or none when it has too few cycles).  The
chi-squared-class tests (Longest-Run, Overlapping Template, Linear
Complexity, Random Excursions) share the Multi(n_b; pi) structure captured
by `TestSpec`, which is also what the exact/Monte-Carlo distribution
modules consume.

Class probabilities: the Longest-Run classes use exact probabilities from
an integer counting recurrence (improving on the rounded asymptotic
constants); Overlapping-Template and Linear-Complexity use the suite's
published constants (renormalized to unit sum so the multinomial model is
well-formed; the relative change is ~1e-6).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import numerics
from .bitgen import BitBlock
from .errors import (
    BlockTooShortError,
    DomainError,
    UnsupportedParameterError,
    ValidationError,
)

EXCURSION_STATES = (-4, -3, -2, -1, 1, 2, 3, 4)

DFT_VARIANTS = ("sigma0", "sigma1", "sigma2")
_DFT_THRESHOLD_CONST = 2.995732274  # suite constant, = ln 20 to 10 digits
_DFT_VAR_DIVISOR = {"sigma0": 2.0, "sigma1": 4.0, "sigma2": 3.8}


@dataclass(frozen=True)
class TestSpec:
    """A multinomial one-level test: n_b blocks classified into k+1 classes."""

    name: str
    block_size: int                # m (0 where blocks are not bit-blocks)
    class_probs: tuple[float, ...]  # pi_0..pi_k
    blocks: int                    # n_b
    df: int                        # k

    def __post_init__(self):
        if self.blocks < 1:
            raise ValidationError("TestSpec needs at least one block")
        if self.df != len(self.class_probs) - 1:
            raise ValidationError("df must equal k = (number of classes) - 1")
        if abs(sum(self.class_probs) - 1.0) > 1e-12:
            raise ValidationError("class probabilities must sum to 1 within 1e-12")
        if any(p <= 0 for p in self.class_probs):
            raise ValidationError("class probabilities must be positive")

    @property
    def k(self) -> int:
        return self.df


def chi2_class_statistic(counts, spec: TestSpec) -> float:
    """T = sum_i (X_i - n_b pi_i)^2 / (n_b pi_i)."""
    counts = np.asarray(counts)
    if counts.shape != (spec.df + 1,):
        raise ValidationError("counts length must be k+1")
    if (counts < 0).any() or int(counts.sum()) != spec.blocks:
        raise ValidationError("counts must be nonnegative and sum to n_b")
    exp = spec.blocks * np.asarray(spec.class_probs)
    return float((((counts - exp) ** 2) / exp).sum())


def class_counts_pvalue(counts, spec: TestSpec) -> float:
    """p-value of the class-count vector under the chi-squared approximation."""
    return numerics.chi2_sf(spec.df, chi2_class_statistic(counts, spec))


# ----------------------------------------------------------------------
# Frequency
# ----------------------------------------------------------------------

def frequency_test(block: BitBlock) -> float:
    """Monobit test: p = erfc(|S|/sqrt(2n)), S = sum(2 b_i - 1)."""
    n = block.nbits
    if n < 100:
        raise BlockTooShortError(f"frequency test needs n >= 100, got {n}")
    s = 2 * block.ones() - n
    return numerics.erfc(abs(s) / math.sqrt(2.0 * n))


# ----------------------------------------------------------------------
# Block Frequency
# ----------------------------------------------------------------------

def block_frequency_test(block: BitBlock, m: int = 128) -> float:
    """T = 4m sum (X_i/m - 1/2)^2 over n_b = floor(n/m) blocks; p = igamc(n_b/2, T/2)."""
    if m < 1:
        raise DomainError("block size m must be positive")
    nb = block.nbits // m
    if nb < 1:
        raise BlockTooShortError("block shorter than one sub-block")
    bits = block.bits()[: nb * m].reshape(nb, m)
    x = bits.sum(axis=1, dtype=np.int64)
    t = float(((x - m / 2.0) ** 2).sum() * (4.0 / m))
    return numerics.igamc(nb / 2.0, t / 2.0)


# ----------------------------------------------------------------------
# Longest Run of Ones
# ----------------------------------------------------------------------

# SP800-22 class layouts: block size -> (class boundaries b_0..b_last);
# classes are {run <= b_0}, {b_0 < run <= b_1}, ..., {run > b_last}.
_LONGEST_LAYOUTS = {
    8: (1, 2, 3),
    128: (4, 5, 6, 7, 8),
    10000: (10, 11, 12, 13, 14, 15),
}


@lru_cache(maxsize=None)
def _count_max_run_le(m: int, t: int) -> int:
    """Number of m-bit strings whose longest run of ones is <= t (exact)."""
    if t >= m:
        return 1 << m
    dp = [0] * (t + 1)  # dp[j]: strings ending in exactly j trailing ones
    dp[0] = 1
    for _ in range(m):
        total = sum(dp)
        new = [total] + dp[:t]
        dp = new
    return sum(dp)


def longest_run_class_probs(m: int, boundaries: tuple[int, ...]) -> tuple[float, ...]:
    """Exact probabilities of the longest-run classes for m fair bits."""
    if list(boundaries) != sorted(set(boundaries)):
        raise ValidationError("boundaries must be strictly increasing")
    denom = 1 << m
    cum = [Fraction(_count_max_run_le(m, t), denom) for t in boundaries]
    probs = [cum[0]]
    probs += [cum[i] - cum[i - 1] for i in range(1, len(cum))]
    probs.append(1 - cum[-1])
    return tuple(float(p) for p in probs)


@lru_cache(maxsize=None)
def longest_run_spec(n: int, m: int = 10000) -> TestSpec:
    if m not in _LONGEST_LAYOUTS:
        raise UnsupportedParameterError(
            f"no longest-run class layout for m={m}; supported: {sorted(_LONGEST_LAYOUTS)}"
        )
    bounds = _LONGEST_LAYOUTS[m]
    probs = longest_run_class_probs(m, bounds)
    nb = n // m
    if nb < 1:
        raise BlockTooShortError(f"n={n} gives no m={m} blocks")
    return TestSpec("longest_run", m, probs, nb, len(bounds))


def _longest_run_per_row(bits2d: np.ndarray) -> np.ndarray:
    """Longest run of ones in each row of a 0/1 uint8 matrix."""
    rows, m = bits2d.shape
    padded = np.zeros((rows, m + 2), dtype=np.int8)
    padded[:, 1:-1] = bits2d
    d = np.diff(padded.reshape(-1))
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1)
    out = np.zeros(rows, dtype=np.int64)
    if len(starts):
        lengths = ends - starts
        row_idx = starts // (m + 2)
        np.maximum.at(out, row_idx, lengths)
    return out


def _classify(values: np.ndarray, boundaries) -> np.ndarray:
    # class i: values in (b_{i-1}, b_i]; above b_last -> last class
    return np.searchsorted(np.asarray(boundaries), values, side="left")


def longest_run_test(block: BitBlock, m: int = 10000) -> float:
    spec = longest_run_spec(block.nbits, m)
    bits = block.bits()[: spec.blocks * m].reshape(spec.blocks, m)
    runs = _longest_run_per_row(bits)
    classes = _classify(runs, _LONGEST_LAYOUTS[m])
    counts = np.bincount(classes, minlength=spec.df + 1)
    return class_counts_pvalue(counts, spec)


# ----------------------------------------------------------------------
# Overlapping Template Matching (template: nine ones, K = 5)
# ----------------------------------------------------------------------

_OVERLAP_M = 1032
_OVERLAP_TEMPLATE_LEN = 9
# Suite constants for m=1032, K=5; they sum to 0.999999, normalized below.
_OVERLAP_PI_RAW = (0.364091, 0.185659, 0.139381, 0.100571, 0.070432, 0.139865)
_OVERLAP_PI = tuple(p / math.fsum(_OVERLAP_PI_RAW) for p in _OVERLAP_PI_RAW)


@lru_cache(maxsize=None)
def overlapping_template_spec(n: int) -> TestSpec:
    nb = n // _OVERLAP_M
    if nb < 1:
        raise BlockTooShortError(f"n={n} gives no {_OVERLAP_M}-bit blocks")
    return TestSpec("overlapping_template", _OVERLAP_M, _OVERLAP_PI, nb, 5)


def _overlap_matches_per_row(bits2d: np.ndarray) -> np.ndarray:
    """Overlapping counts of the all-ones template in each row."""
    t = _OVERLAP_TEMPLATE_LEN
    cs = np.cumsum(bits2d, axis=1, dtype=np.int32)
    wsum = cs[:, t - 1 :].copy()
    wsum[:, 1:] -= cs[:, : -t]
    return (wsum == t).sum(axis=1)


def overlapping_template_test(block: BitBlock) -> float:
    spec = overlapping_template_spec(block.nbits)
    bits = block.bits()[: spec.blocks * _OVERLAP_M].reshape(spec.blocks, _OVERLAP_M)
    matches = np.minimum(_overlap_matches_per_row(bits), 5)
    counts = np.bincount(matches, minlength=6)
    return class_counts_pvalue(counts, spec)


# ----------------------------------------------------------------------
# Linear Complexity
# ----------------------------------------------------------------------

_LINEAR_PI_RAW = (0.010417, 0.03125, 0.125, 0.5, 0.25, 0.0625, 0.020833)
_LINEAR_PI = tuple(p / math.fsum(_LINEAR_PI_RAW) for p in _LINEAR_PI_RAW)
_LINEAR_SUPPORTED_M = (500, 5000)


def berlekamp_massey(bits) -> int:
    """Length of the shortest LFSR over GF(2) generating the bit sequence.

    Polynomials are carried as Python ints (bit j = coefficient of D^j); the
    discrepancy is one AND plus a popcount against an incrementally built
    reversed window, so each step costs O(i/wordsize).
    """
    if isinstance(bits, BitBlock):
        bits = bits.bits()
    c = 1  # connection polynomial C(D)
    b = 1  # previous C(D) before the last length change
    l = 0
    gap = 1  # i - (index of last length change)
    r = 0  # bit j = s_{i-j}
    for i, bit in enumerate(bits):
        r = (r << 1) | int(bit)
        d = (c & r).bit_count() & 1
        if d == 0:
            gap += 1
        elif 2 * l <= i:
            tmp = c
            c ^= b << gap
            b = tmp
            l = i + 1 - l
            gap = 1
        else:
            c ^= b << gap
            gap += 1
    return l


def linear_complexity_mean(m: int) -> float:
    """Expected linear complexity of an m-bit random sequence (suite formula)."""
    sign = -1.0 if m % 2 == 0 else 1.0  # (-1)^(m+1)
    return m / 2.0 + (9.0 + sign) / 36.0 - (m / 3.0 + 2.0 / 9.0) / 2.0 ** m


@lru_cache(maxsize=None)
def linear_complexity_spec(n: int, m: int) -> TestSpec:
    if m not in _LINEAR_SUPPORTED_M:
        raise UnsupportedParameterError(
            f"linear complexity supports m in {_LINEAR_SUPPORTED_M}, got {m}"
        )
    nb = n // m
    if nb < 1:
        raise BlockTooShortError(f"n={n} gives no m={m} blocks")
    return TestSpec("linear_complexity", m, _LINEAR_PI, nb, 6)


_LINEAR_CLASS_EDGES = (-2.5, -1.5, -0.5, 0.5, 1.5, 2.5)


def _linear_classify(lvals: np.ndarray, m: int) -> np.ndarray:
    mu = linear_complexity_mean(m)
    sign = 1.0 if m % 2 == 0 else -1.0  # (-1)^m
    t = sign * (lvals - mu) + 2.0 / 9.0
    # class i: edges[i-1] < T <= edges[i]; T > 2.5 -> class 6
    return np.searchsorted(np.asarray(_LINEAR_CLASS_EDGES), t, side="left")


def linear_complexity_test(block: BitBlock, m: int = 5000) -> float:
    spec = linear_complexity_spec(block.nbits, m)
    bits = block.bits()[: spec.blocks * m].reshape(spec.blocks, m)
    lvals = np.array([berlekamp_massey(row) for row in bits], dtype=np.float64)
    classes = _linear_classify(lvals, m)
    counts = np.bincount(classes, minlength=7)
    return class_counts_pvalue(counts, spec)


# ----------------------------------------------------------------------
# Random Excursions (altered: exactly `cycles` cycles, surplus discarded)
# ----------------------------------------------------------------------

def random_excursions_probs(x: int) -> tuple[float, ...]:
    """Visit-count class probabilities pi_0..pi_5 for walk state x."""
    ax = abs(x)
    if not 1 <= ax <= 4:
        raise DomainError(f"state x must have 1 <= |x| <= 4, got {x}")
    base = 1.0 - 1.0 / (2.0 * ax)
    probs = [base]
    probs += [(1.0 / (4.0 * x * x)) * base ** (j - 1) for j in range(1, 5)]
    probs.append((1.0 / (2.0 * ax)) * base ** 4)
    return tuple(probs)


@lru_cache(maxsize=None)
def random_excursions_spec(x: int, cycles: int = 500) -> TestSpec:
    return TestSpec(f"random_excursions[x={x}]", 0, random_excursions_probs(x), cycles, 5)


def random_excursions_test(block: BitBlock, cycles: int = 500):
    """Eight p-values (x = -4..-1, 1..4) from the first `cycles` zero-to-zero
    excursions, or None when the walk completes fewer cycles in the block."""
    steps = block.bits().astype(np.int32) * 2 - 1
    walk = np.cumsum(steps)
    zeros = np.flatnonzero(walk == 0)
    if len(zeros) < cycles:
        return None
    end = zeros[cycles - 1]  # bit index completing the last counted cycle
    bounds = zeros[:cycles]
    pvals = []
    for x in EXCURSION_STATES:
        pos = np.flatnonzero(walk[: end + 1] == x)
        visits = np.bincount(np.searchsorted(bounds, pos, side="left"), minlength=cycles)
        cats = np.bincount(np.minimum(visits, 5), minlength=6)
        spec = random_excursions_spec(x, cycles)
        pvals.append(class_counts_pvalue(cats, spec))
    return dict(zip(EXCURSION_STATES, pvals))


# ----------------------------------------------------------------------
# Discrete Fourier Transform (spectral)
# ----------------------------------------------------------------------

def dft_variance(n: int, variant: str = "sigma0") -> float:
    if variant not in _DFT_VAR_DIVISOR:
        raise UnsupportedParameterError(f"unknown DFT variance variant {variant!r}")
    return 0.05 * 0.95 * n / _DFT_VAR_DIVISOR[variant]


def dft_threshold(n: int) -> float:
    return math.sqrt(_DFT_THRESHOLD_CONST * n)


def dft_pvalue_from_count(o_h: float, n: int, variant: str = "sigma0") -> float:
    mu = 0.95 * n / 2.0
    sigma = math.sqrt(dft_variance(n, variant))
    return numerics.erfc(abs(o_h - mu) / (sigma * math.sqrt(2.0)))


def dft_test(block: BitBlock, variant: str = "sigma0") -> float:
    """Count |F_i| < sqrt(2.995732274 n) over i = 0..n/2-1 (i = 0 included,
    matching the suite), then the two-sided normal p-value."""
    n = block.nbits
    if n % 2:
        raise DomainError("DFT test needs even n")
    x = block.bits().astype(np.float64) * 2.0 - 1.0
    mags = np.abs(np.fft.rfft(x)[: n // 2])
    o_h = int((mags < dft_threshold(n)).sum())
    return dft_pvalue_from_count(o_h, n, variant)


# ----------------------------------------------------------------------
# Registry and batch kernels
# ----------------------------------------------------------------------

def class_spec(test: str, n: int, **params) -> TestSpec:
    """TestSpec for a multinomial-class test at first sample size n."""
    if test == "longest_run":
        return longest_run_spec(n, params.get("m", 10000))
    if test == "overlapping_template":
        return overlapping_template_spec(n)
    if test == "linear_complexity":
        return linear_complexity_spec(n, params.get("m", 5000))
    if test == "random_excursions":
        return random_excursions_spec(params["x"], params.get("cycles", 500))
    raise UnsupportedParameterError(f"no multinomial class spec for test {test!r}")


def _unpack_rows(packed: np.ndarray, count: int, n: int) -> np.ndarray:
    nbytes = n // 8
    rows = packed.reshape(count, nbytes)
    return np.unpackbits(rows, axis=1)


def batch_pvalues(test: str, packed: np.ndarray, count: int, n: int, params: dict) -> np.ndarray:
    """p-values for `count` consecutive n-bit segments, packed byte-aligned.

    Returns shape (count,) — or (count, 8) with NaN rows for no-result runs
    of the Random Excursions test.  Matches the scalar tests bit-for-bit.
    """
    if n % 8:
        raise ValidationError("batch kernels need n to be a multiple of 8")
    if test == "frequency":
        if n < 100:
            raise BlockTooShortError("frequency test needs n >= 100")
        ones = np.bitwise_count(packed.reshape(count, n // 8)).sum(axis=1, dtype=np.int64)
        s = np.abs(2 * ones - n)
        return numerics.erfc_vec(s / math.sqrt(2.0 * n))
    if test == "block_frequency":
        m = params.get("m", 128)
        nb = n // m
        if m % 8 == 0:
            rows = packed.reshape(count, n // 8)[:, : nb * (m // 8)]
            x = (
                np.bitwise_count(rows)
                .reshape(count, nb, m // 8)
                .sum(axis=2, dtype=np.int64)
            )
        else:
            bits = _unpack_rows(packed, count, n)[:, : nb * m]
            x = bits.reshape(count, nb, m).sum(axis=2, dtype=np.int64)
        t = ((x - m / 2.0) ** 2).sum(axis=1) * (4.0 / m)
        return numerics.igamc_vec(nb / 2.0, t / 2.0)
    if test == "longest_run":
        m = params.get("m", 10000)
        spec = longest_run_spec(n, m)
        bits = _unpack_rows(packed, count, n)[:, : spec.blocks * m]
        runs = _longest_run_per_row(bits.reshape(count * spec.blocks, m))
        classes = _classify(runs, _LONGEST_LAYOUTS[m]).reshape(count, spec.blocks)
        return _class_rows_pvalues(classes, spec, count)
    if test == "overlapping_template":
        spec = overlapping_template_spec(n)
        bits = _unpack_rows(packed, count, n)[:, : spec.blocks * _OVERLAP_M]
        matches = _overlap_matches_per_row(bits.reshape(count * spec.blocks, _OVERLAP_M))
        classes = np.minimum(matches, 5).reshape(count, spec.blocks)
        return _class_rows_pvalues(classes, spec, count)
    if test == "linear_complexity":
        m = params.get("m", 5000)
        spec = linear_complexity_spec(n, m)
        bits = _unpack_rows(packed, count, n)[:, : spec.blocks * m]
        blocks = bits.reshape(count * spec.blocks, m)
        lvals = np.array([berlekamp_massey(row) for row in blocks], dtype=np.float64)
        classes = _linear_classify(lvals, m).reshape(count, spec.blocks)
        return _class_rows_pvalues(classes, spec, count)
    if test == "dft":
        variant = params.get("variant", "sigma0")
        if n % 2:
            raise DomainError("DFT test needs even n")
        out = np.empty(count)
        # rfft rows in sub-chunks to bound the complex workspace
        step = max(1, (1 << 26) // (8 * n))
        bits = _unpack_rows(packed, count, n)
        h = dft_threshold(n)
        for lo in range(0, count, step):
            x = bits[lo : lo + step].astype(np.float64) * 2.0 - 1.0
            mags = np.abs(np.fft.rfft(x, axis=1)[:, : n // 2])
            counts_below = (mags < h).sum(axis=1)
            for i, o_h in enumerate(counts_below):
                out[lo + i] = dft_pvalue_from_count(float(o_h), n, variant)
        return out
    if test == "random_excursions":
        cycles = params.get("cycles", 500)
        out = np.full((count, 8), np.nan)
        nbytes = n // 8
        for i in range(count):
            blk = BitBlock(packed[i * nbytes : (i + 1) * nbytes], n)
            res = random_excursions_test(blk, cycles)
            if res is not None:
                out[i] = [res[x] for x in EXCURSION_STATES]
        return out
    raise UnsupportedParameterError(f"unknown test {test!r}")


def _class_rows_pvalues(classes: np.ndarray, spec: TestSpec, count: int) -> np.ndarray:
    k1 = spec.df + 1
    flat = classes + np.arange(count)[:, None] * k1
    counts = np.bincount(flat.reshape(-1), minlength=count * k1).reshape(count, k1)
    exp = spec.blocks * np.asarray(spec.class_probs)
    t = (((counts - exp) ** 2) / exp).sum(axis=1)
    return numerics.chi2_sf_vec(spec.df, t)
