"""The second-level test: N one-level p-values, binned and GOF-tested.

The null is selectable: the uniform assumption, the exact category
distribution (H-prime), or a Monte-Carlo estimate (H-double-prime) loaded
from an estimation artifact.  The Random Excursions test contributes eight
parallel histograms per run; runs that complete fewer than the required
cycles are discarded (their bits are consumed) and do not count toward N.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .bitgen import BitBlock, BitSource
from .errors import DomainError, ValidationError
from .exactdist import CategoryDistribution, interval_index_vec
from .onelevel import EXCURSION_STATES, batch_pvalues, random_excursions_test

UNIFORM = "uniform"
EXACT = "exact"
MC = "mc"


@dataclass
class SecondLevelNull:
    """Null category probabilities for the second-level GOF test."""

    kind: str
    probs: np.ndarray | None = None
    per_component: dict | None = None   # e.g. per-x nulls for Random Excursions

    def __post_init__(self):
        if self.kind not in (UNIFORM, EXACT, MC):
            raise ValidationError(f"unknown null kind {self.kind!r}")
        if self.probs is not None:
            self.probs = self._check(np.asarray(self.probs, dtype=float))
        if self.per_component is not None:
            self.per_component = {
                k: self._check(np.asarray(v, dtype=float))
                for k, v in self.per_component.items()
            }
        if self.probs is None and self.per_component is None:
            raise ValidationError("null needs probabilities")

    @staticmethod
    def _check(p: np.ndarray) -> np.ndarray:
        if (p <= 0).any():
            raise ValidationError("null probabilities must all be positive")
        if abs(float(p.sum()) - 1.0) > 1e-9:
            raise ValidationError("null probabilities must sum to 1 within 1e-9")
        return p

    @classmethod
    def uniform(cls, nu: int = 9) -> "SecondLevelNull":
        return cls(UNIFORM, np.full(nu + 1, 1.0 / (nu + 1)))

    @classmethod
    def from_distribution(cls, dist: CategoryDistribution) -> "SecondLevelNull":
        kind = EXACT if dist.provenance == "exact" else MC
        return cls(kind, dist.q / dist.q.sum())

    @classmethod
    def from_file(cls, path) -> "SecondLevelNull":
        return cls.from_distribution(CategoryDistribution.load(path))

    def probs_for(self, label) -> np.ndarray:
        if self.per_component is not None and label in self.per_component:
            return self.per_component[label]
        if self.probs is None:
            raise ValidationError(f"no null probabilities for component {label!r}")
        return self.probs


@dataclass
class ComponentResult:
    label: str
    histogram: np.ndarray
    chi2: float
    p_second: float

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "histogram": [int(v) for v in self.histogram],
            "chi2": self.chi2,
            "p_second": self.p_second,
        }


@dataclass
class TwoLevelResult:
    """Histogram(s) over the nu+1 intervals plus the second-level GOF."""

    test: str
    n: int
    N: int
    nu: int
    null_kind: str
    components: list[ComponentResult]
    discarded: int
    source: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    @property
    def histogram(self) -> np.ndarray:
        self._single()
        return self.components[0].histogram

    @property
    def chi2(self) -> float:
        self._single()
        return self.components[0].chi2

    @property
    def p_second(self) -> float:
        self._single()
        return self.components[0].p_second

    def _single(self):
        if len(self.components) != 1:
            raise ValidationError("result has multiple components; access them directly")

    def to_dict(self) -> dict:
        return {
            "test": self.test,
            "n": self.n,
            "N": self.N,
            "nu": self.nu,
            "null": self.null_kind,
            "components": [c.to_dict() for c in self.components],
            "discarded": self.discarded,
            "source": self.source,
            "params": self.params,
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def bin_pvalues(pvals, nu: int = 9) -> np.ndarray:
    """Counts of p-values per interval I_0..I_nu."""
    pvals = np.asarray(pvals, dtype=float)
    if pvals.size == 0:
        return np.zeros(nu + 1, dtype=np.int64)
    if (pvals < 0).any() or (pvals > 1).any():
        raise DomainError("p-values must lie in [0,1]")
    return np.bincount(interval_index_vec(pvals, nu), minlength=nu + 1)


def gof_chi2(hist, null: SecondLevelNull, label=None) -> tuple[float, float]:
    """(chi-squared statistic, second-level p-value) for a histogram."""
    hist = np.asarray(hist)
    n = int(hist.sum())
    if n < 1:
        raise ValidationError("histogram is empty")
    p = null.probs_for(label) if label is not None else null.probs_for("")
    if len(p) != len(hist):
        raise ValidationError("null length does not match histogram")
    exp = n * p
    chi2 = math.fsum((hist - exp) ** 2 / exp)
    nu = len(hist) - 1
    return chi2, numerics.chi2_sf(nu, chi2)


def run_two_level(
    source: BitSource,
    test: str,
    n: int,
    N: int,
    null: SecondLevelNull,
    nu: int = 9,
    params: dict | None = None,
    chunk_bits: int = 1 << 28,
    progress=None,
) -> TwoLevelResult:
    """Apply `test` to N disjoint n-bit segments of `source`, bin the
    p-values, and GOF-test the histogram(s) under `null`.

    Random Excursions: segments completing fewer than the required cycles
    are consumed and counted in `discarded`, not toward N.
    """
    params = dict(params or {})
    if N < 1:
        raise ValidationError("N must be >= 1")
    if test == "random_excursions":
        hists = {x: np.zeros(nu + 1, dtype=np.int64) for x in EXCURSION_STATES}
        discarded = 0
        collected = 0
        chunk_runs = max(1, chunk_bits // n)
        use_batch = n % 8 == 0
        while collected < N:
            take = min(chunk_runs, N - collected) if use_batch else 1
            if use_batch:
                packed = source.next_packed(take * n)
                pv = batch_pvalues(test, packed, take, n, params)
            else:
                res = random_excursions_test(source.next_block(n), params.get("cycles", 500))
                pv = np.full((1, 8), np.nan) if res is None else np.array(
                    [[res[x] for x in EXCURSION_STATES]]
                )
            need = N - collected
            valid_idx = np.flatnonzero(~np.isnan(pv[:, 0]))
            if len(valid_idx) > need:
                # count discards only up to the run that completes N
                cutoff = valid_idx[need - 1]
                usable = pv[valid_idx[:need]]
                discarded += int(cutoff + 1 - need)
            else:
                usable = pv[valid_idx]
                discarded += int(len(pv) - len(valid_idx))
            if len(usable):
                for j, x in enumerate(EXCURSION_STATES):
                    hists[x] += bin_pvalues(usable[:, j], nu)
            collected += len(usable)
            if progress:
                progress(collected, discarded)
        components = []
        for x in EXCURSION_STATES:
            chi2, p2 = gof_chi2(hists[x], null, label=x)
            components.append(ComponentResult(f"x={x}", hists[x], chi2, p2))
        return TwoLevelResult(
            test=test, n=n, N=N, nu=nu, null_kind=null.kind,
            components=components, discarded=discarded,
            source=source.describe(), params=params,
        )

    hist = np.zeros(nu + 1, dtype=np.int64)
    remaining = N
    words_path = (
        test == "block_frequency"
        and callable(getattr(source, "next_words", None))
        and n % 32 == 0
        and params.get("m", 128) % 32 == 0
    )
    chunk_runs = max(1, chunk_bits // n)
    while remaining > 0:
        take = min(chunk_runs, remaining)
        if words_path:
            words = source.next_words(take * (n // 32))
            pv = _block_frequency_pvalues_from_words(
                words, take, n, params.get("m", 128)
            )
        elif n % 8 == 0:
            packed = source.next_packed(take * n)
            pv = batch_pvalues(test, packed, take, n, params)
        else:
            pv = np.array([_scalar_pvalue(test, source.next_block(n), params)])
            take = 1
        hist += bin_pvalues(pv, nu)
        remaining -= take
        if progress:
            progress(N - remaining, 0)
    chi2, p2 = gof_chi2(hist, null, label="")
    return TwoLevelResult(
        test=test, n=n, N=N, nu=nu, null_kind=null.kind,
        components=[ComponentResult("", hist, chi2, p2)],
        discarded=0, source=source.describe(), params=params,
    )


def _scalar_pvalue(test: str, block: BitBlock, params: dict) -> float:
    from . import onelevel as ol

    if test == "frequency":
        return ol.frequency_test(block)
    if test == "block_frequency":
        return ol.block_frequency_test(block, params.get("m", 128))
    if test == "longest_run":
        return ol.longest_run_test(block, params.get("m", 10000))
    if test == "overlapping_template":
        return ol.overlapping_template_test(block)
    if test == "linear_complexity":
        return ol.linear_complexity_test(block, params.get("m", 5000))
    if test == "dft":
        return ol.dft_test(block, params.get("variant", "sigma0"))
    raise ValidationError(f"unknown test {test!r}")


def _block_frequency_pvalues_from_words(
    words: np.ndarray, count: int, n: int, m: int
) -> np.ndarray:
    """Block Frequency p-values straight from 32-bit stream words: block
    one-counts are byte-order invariant, so the byteswap into the canonical
    byte stream can be skipped.  Bit-identical to the byte-path kernel."""
    wpr = n // 32
    wpb = m // 32
    nb = n // m
    rows = np.ascontiguousarray(words.reshape(count, wpr)[:, : nb * wpb])
    x = (
        np.bitwise_count(rows)
        .reshape(count, nb, wpb)
        .sum(axis=2, dtype=np.int64)
    )
    lut = (np.arange(m + 1) - m / 2.0) ** 2 * (4.0 / m)
    t = lut[x].sum(axis=1)
    return numerics.igamc_vec(nb / 2.0, t / 2.0)
