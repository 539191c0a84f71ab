"""Exact category distributions of approximated p-values.

`enumerate_q` walks the whole realization space S = {x : sum x_i = n_b} of a
multinomial-class test in colexicographic order (the last coordinate is the
most significant), computing each realization's p-value with the very same
igamc the one-level tests use, and accumulating multinomial mass per p-value
interval.  The walk is organized as atomic slices (one per value of the
leading coordinate), which makes the result independent of how slices are
grouped into parallel tasks and lets interrupted runs resume from per-slice
checkpoints.

`binomial_scan_q` handles the Frequency and DFT tests, whose p-value is a
function of a single binomially distributed count.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import struct
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import numerics
from .accumulate import KahanSum, KahanVector, bin_sums
from .errors import CheckpointError, DomainError, ValidationError, WorkBudgetError
from .onelevel import TestSpec, dft_variance

DEFAULT_BUDGET = 10 ** 10
EXACT = "exact"
MONTE_CARLO = "monte-carlo"


@dataclass
class CategoryDistribution:
    """Probabilities q_0..q_nu of approximated p-values per interval I_i."""

    q: np.ndarray
    nu: int
    provenance: str
    mass_accounted: float
    stderr: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        if self.q.shape != (self.nu + 1,):
            raise ValidationError("q must have length nu+1")
        if (self.q < 0).any():
            raise ValidationError("q entries must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "q": [float(v) for v in self.q],
            "nu": self.nu,
            "provenance": self.provenance,
            "mass_accounted": float(self.mass_accounted),
            "stderr": None if self.stderr is None else [float(v) for v in self.stderr],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CategoryDistribution":
        return cls(
            q=np.array(d["q"], dtype=float),
            nu=int(d["nu"]),
            provenance=d["provenance"],
            mass_accounted=float(d["mass_accounted"]),
            stderr=None if d.get("stderr") is None else np.array(d["stderr"], dtype=float),
            meta=d.get("meta", {}),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path) -> "CategoryDistribution":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# ----------------------------------------------------------------------
# Interval binning (half-open I_i, closed right end of I_nu)
# ----------------------------------------------------------------------

def interval_index(p: float, nu: int = 9) -> int:
    """Index of the interval I_i = [i/(nu+1), (i+1)/(nu+1)) containing p
    (I_nu is closed on the right; boundary values go to the upper interval)."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must be in [0,1], got {p}")
    k = nu + 1
    f = p * k
    i = int(f)
    # A product that rounded up to an exact integer would misplace p one bin
    # high (double(0.7)*10 == 7.0 although double(0.7) < 7/10): resolve those
    # lanes exactly against the real boundary i/(nu+1).
    if f == i and i > 0 and Fraction(p) * k < i:
        i -= 1
    return min(i, nu)


def interval_index_vec(p: np.ndarray, nu: int = 9) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    k = nu + 1
    f = p * k
    idx = f.astype(np.int64)
    hits = np.flatnonzero((f == idx) & (idx > 0))
    for j in hits:
        if Fraction(float(p[j])) * k < int(idx[j]):
            idx[j] -= 1
    return np.minimum(idx, nu)


# ----------------------------------------------------------------------
# Composition enumeration (colex order, last coordinate most significant)
# ----------------------------------------------------------------------

class CompositionCursor:
    """One-at-a-time colexicographic iterator over S (the reference path;
    the enumeration engine itself walks S in vectorized blocks)."""

    def __init__(self, k: int, n_b: int):
        if k < 0 or n_b < 0:
            raise ValidationError("k and n_b must be nonnegative")
        self.k = k
        self.n_b = n_b
        self.current = np.zeros(k + 1, dtype=np.int64)
        self.current[0] = n_b
        self.exhausted = False

    def advance(self) -> bool:
        if self.k == 0:
            self.exhausted = True
            return False
        x = self.current
        if x[0] > 0:
            x[0] -= 1
            x[1] += 1
            return True
        j = 1
        while j <= self.k and x[j] == 0:
            j += 1
        if j >= self.k:
            self.exhausted = True
            return False
        x[j + 1] += 1
        x[0] = x[j] - 1
        x[j] = 0
        return True

    def __iter__(self):
        while not self.exhausted:
            yield self.current.copy()
            self.advance()


_COMP_CACHE: dict[tuple[int, int], np.ndarray] = {}
_COMP_CACHE_MAX_BYTES = 1 << 22  # cache only small building blocks


def _comp_build(t: int, c: int) -> np.ndarray:
    """All compositions of t into c coordinates, colex order, as int32 rows."""
    key = (t, c)
    cached = _COMP_CACHE.get(key)
    if cached is not None:
        return cached
    if c == 1:
        out = np.array([[t]], dtype=np.int32)
    elif c == 2:
        v = np.arange(t + 1, dtype=np.int32)
        out = np.stack([t - v, v], axis=1)
    elif c == 3:
        lengths = np.arange(t + 1, 0, -1)
        v2 = np.repeat(np.arange(t + 1, dtype=np.int32), lengths)
        starts = np.repeat(np.cumsum(lengths) - lengths, lengths)
        v1 = (np.arange(len(v2)) - starts).astype(np.int32)
        out = np.stack([t - v2 - v1, v1, v2], axis=1)
    else:
        parts = []
        for v in range(t + 1):
            sub = _comp_build(t - v, c - 1)
            parts.append(np.hstack([sub, np.full((len(sub), 1), v, dtype=np.int32)]))
        out = np.vstack(parts)
    if c <= 4 and out.nbytes <= _COMP_CACHE_MAX_BYTES:
        out.setflags(write=False)
        _COMP_CACHE[key] = out
    return out


def _comp_blocks(t: int, c: int, max_rows: int):
    """Yield the compositions of t into c coordinates as colex-ordered blocks
    of at most ~max_rows rows (block boundaries depend only on t, c, max_rows)."""
    if c <= 3 or math.comb(t + c - 1, c - 1) <= max_rows:
        yield _comp_build(t, c)
        return
    for v in range(t + 1):
        for sub in _comp_blocks(t - v, c - 1, max_rows):
            yield np.hstack([sub, np.full((len(sub), 1), v, dtype=np.int32)])


class _BinAssigner:
    """Maps chi-squared statistics straight to p-value interval indices.

    For each interval boundary i/(nu+1) it bisects (over doubles) the largest
    statistic tau_i whose p-value still lands at or above the boundary, using
    interval_index(chi2_sf(df, .)) itself as the predicate.  Away from the
    thresholds, counting thresholds >= T is then exactly equivalent to binning
    the igamc p-value; lanes within a safety margin of a threshold fall back
    to the igamc path, so the assignment is identical to it everywhere.
    """

    _cache: dict[tuple[int, int], "_BinAssigner"] = {}
    MARGIN = 1e-6

    def __init__(self, df: int, nu: int):
        self.df = df
        self.nu = nu
        taus = []
        for i in range(1, nu + 1):
            taus.append(self._threshold(i))
        self.taus_asc = np.array(sorted(taus))

    @classmethod
    def get(cls, df: int, nu: int) -> "_BinAssigner":
        key = (df, nu)
        inst = cls._cache.get(key)
        if inst is None:
            inst = cls._cache[key] = cls(df, nu)
        return inst

    def _pred(self, t: float, i: int) -> bool:
        return interval_index(numerics.chi2_sf(self.df, t), self.nu) >= i

    def _threshold(self, i: int) -> float:
        lo = 0.0  # p(0)=1: predicate holds
        hi = float(2 * self.df + 2)
        while self._pred(hi, i):
            lo = hi
            hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid == lo or mid == hi:
                break
            if self._pred(mid, i):
                lo = mid
            else:
                hi = mid
        return lo

    def __call__(self, t: np.ndarray) -> np.ndarray:
        pos = np.searchsorted(self.taus_asc, t, side="left")
        idx = self.nu - pos
        lower = self.taus_asc[np.maximum(pos - 1, 0)]
        upper = self.taus_asc[np.minimum(pos, self.nu - 1)]
        near = np.flatnonzero(
            ((pos > 0) & (t - lower <= self.MARGIN))
            | ((pos < self.nu) & (upper - t <= self.MARGIN))
        )
        for j in near:
            idx[j] = interval_index(numerics.chi2_sf(self.df, float(t[j])), self.nu)
        return idx


_LOGFACT_CACHE: dict[int, np.ndarray] = {}


def _logfact_table(n: int) -> np.ndarray:
    """lgamma(i+1) for i = 0..n (per-entry libm calls; no error accumulation)."""
    tab = _LOGFACT_CACHE.get(n)
    if tab is None:
        tab = np.array([math.lgamma(i + 1.0) for i in range(n + 1)])
        tab.setflags(write=False)
        _LOGFACT_CACHE[n] = tab
    return tab


def estimate_workload(spec: TestSpec) -> int:
    """|S| = C(n_b + k, k), exact."""
    return math.comb(spec.blocks + spec.df, spec.df)


def _slice_sizes(n_b: int, k: int) -> list[int]:
    return [math.comb(n_b - s + k - 1, k - 1) for s in range(n_b + 1)]


def _enumerate_slice(spec: TestSpec, s: int, nu: int, chunk_rows: int):
    """Accumulate one atomic slice (leading coordinate = s)."""
    k = spec.df
    n_b = spec.blocks
    probs = np.asarray(spec.class_probs)
    nbpi = n_b * probs
    logpi = np.log(probs)
    lf = _logfact_table(n_b)
    t_const = (s - nbpi[k]) ** 2 / nbpi[k]
    logw_const = lf[n_b] - lf[s] + s * logpi[k]
    assigner = _BinAssigner.get(k, nu)
    acc = KahanVector(nu + 1)
    ncomp = 0
    for blk in _comp_blocks(n_b - s, k, chunk_rows):
        xf = blk.astype(np.float64)
        dev = xf - nbpi[:k]
        t = (dev * dev / nbpi[:k]).sum(axis=1) + t_const
        logw = logw_const - lf[blk].sum(axis=1) + xf @ logpi[:k]
        idx = assigner(t)
        acc.add(bin_sums(idx, np.exp(logw), nu + 1))
        ncomp += len(blk)
    return s, ncomp, acc.total.copy(), acc.comp.copy()


def _slice_group_worker(args):
    spec, slist, nu, chunk_rows = args
    return [_enumerate_slice(spec, s, nu, chunk_rows) for s in slist]


# ----------------------------------------------------------------------
# Checkpoint file: versioned binary, one record per completed atomic slice
# ----------------------------------------------------------------------

_CKPT_MAGIC = b"TLQ1"


def _spec_hash(spec: TestSpec, nu: int) -> bytes:
    payload = json.dumps(
        {
            "name": spec.name,
            "m": spec.block_size,
            "blocks": spec.blocks,
            "df": spec.df,
            "probs": [float(p).hex() for p in spec.class_probs],
            "nu": nu,
        },
        sort_keys=True,
    ).encode()
    return hashlib.sha256(payload).digest()


def _ckpt_read(path, spec: TestSpec, nu: int) -> dict[int, tuple[int, np.ndarray, np.ndarray]]:
    done: dict[int, tuple[int, np.ndarray, np.ndarray]] = {}
    if not os.path.exists(path):
        return done
    rec_size = 8 + 8 + 16 * (nu + 1) + 4
    with open(path, "rb") as fh:
        head = fh.read(4 + 2 + 32 + 4 + 8 + 4)
        if len(head) < 54 or head[:4] != _CKPT_MAGIC:
            raise CheckpointError(f"{path} is not a checkpoint file")
        version, = struct.unpack("<H", head[4:6])
        if version != 1:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        if head[6:38] != _spec_hash(spec, nu):
            raise CheckpointError(f"{path} belongs to a different computation")
        while True:
            rec = fh.read(rec_size)
            if len(rec) < rec_size:
                break  # trailing partial record from an interrupted write
            payload, (crc,) = rec[:-4], struct.unpack("<I", rec[-4:])
            if zlib.crc32(payload) != crc:
                break
            s, ncomp = struct.unpack("<QQ", payload[:16])
            vals = np.frombuffer(payload[16:], dtype="<f8")
            done[int(s)] = (int(ncomp), vals[0::2].copy(), vals[1::2].copy())
    return done


def _ckpt_open(path, spec: TestSpec, nu: int, fresh: bool):
    mode = "wb" if fresh else "ab"
    fh = open(path, mode)
    if fresh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<H", 1))
        fh.write(_spec_hash(spec, nu))
        fh.write(struct.pack("<IQI", spec.df, spec.blocks, nu))
        fh.flush()
    return fh


def _ckpt_append(fh, s: int, ncomp: int, total: np.ndarray, comp: np.ndarray) -> None:
    vals = np.empty(2 * len(total))
    vals[0::2] = total
    vals[1::2] = comp
    payload = struct.pack("<QQ", s, ncomp) + vals.astype("<f8").tobytes()
    fh.write(payload + struct.pack("<I", zlib.crc32(payload)))
    fh.flush()


# ----------------------------------------------------------------------
# Public entry points
# ----------------------------------------------------------------------

def enumerate_q(
    spec: TestSpec,
    nu: int = 9,
    partitions: int | None = None,
    *,
    workers: int | None = None,
    budget: int = DEFAULT_BUDGET,
    checkpoint_path=None,
    chunk_rows: int = 1 << 18,
    progress=None,
) -> CategoryDistribution:
    """Exact q by exhaustive enumeration of the realization space.

    Results are bit-identical for any `partitions`/`workers` combination:
    atomic slices are always accumulated separately and merged in fixed
    order.  `budget` guards against accidentally huge spaces unless a
    checkpoint path is given.
    """
    k = spec.df
    if k == 0:
        raise ValidationError("enumeration needs at least two classes")
    workload = estimate_workload(spec)
    if workload > budget and checkpoint_path is None:
        raise WorkBudgetError(workload, budget)

    done = _ckpt_read(checkpoint_path, spec, nu) if checkpoint_path else {}
    slice_ids = [s for s in range(spec.blocks + 1) if s not in done]
    ckpt = None
    if checkpoint_path:
        ckpt = _ckpt_open(checkpoint_path, spec, nu, fresh=not done)

    try:
        if slice_ids:
            nworkers = workers if workers is not None else (os.cpu_count() or 1)
            nworkers = max(1, min(nworkers, len(slice_ids)))
            nparts = partitions if partitions is not None else nworkers
            nparts = max(1, min(nparts, len(slice_ids)))
            groups = _balanced_groups(slice_ids, _slice_sizes(spec.blocks, k), nparts)
            if nworkers == 1 or nparts == 1:
                for group in groups:
                    for s in group:
                        res = _enumerate_slice(spec, s, nu, chunk_rows)
                        done[res[0]] = res[1:]
                        if ckpt:
                            _ckpt_append(ckpt, res[0], res[1], res[2], res[3])
                        if progress:
                            progress(res[0], res[1])
            else:
                with ProcessPoolExecutor(max_workers=nworkers) as pool:
                    futures = [
                        pool.submit(_slice_group_worker, (spec, g, nu, chunk_rows))
                        for g in groups
                    ]
                    for fut in futures:
                        for res in fut.result():
                            done[res[0]] = res[1:]
                            if ckpt:
                                _ckpt_append(ckpt, res[0], res[1], res[2], res[3])
                            if progress:
                                progress(res[0], res[1])
    finally:
        if ckpt:
            ckpt.close()

    final = KahanVector(nu + 1)
    ncomp_total = 0
    part = KahanVector(nu + 1)
    for s in range(spec.blocks + 1):
        ncomp, total, comp = done[s]
        part.total = total
        part.comp = comp
        final.merge(part)
        ncomp_total += ncomp
    if ncomp_total != workload:
        raise ValidationError(
            f"enumerated {ncomp_total} compositions, expected {workload}"
        )
    q = final.value
    mass = KahanSum()
    for v in q:
        mass.add(float(v))
    return CategoryDistribution(
        q=q,
        nu=nu,
        provenance=EXACT,
        mass_accounted=mass.value,
        meta={
            "engine": "enumeration",
            "test": spec.name,
            "m": spec.block_size,
            "blocks": spec.blocks,
            "df": spec.df,
            "workload": float(workload),
            "chunk_rows": chunk_rows,
        },
    )


def _balanced_groups(slice_ids: list[int], sizes: list[int], nparts: int) -> list[list[int]]:
    """Contiguous groups of slice ids with approximately equal total work."""
    total = sum(sizes[s] for s in slice_ids)
    target = total / nparts
    groups: list[list[int]] = []
    cur: list[int] = []
    acc = 0
    remaining = nparts
    for s in slice_ids:
        cur.append(s)
        acc += sizes[s]
        if acc >= target and len(groups) < nparts - 1:
            groups.append(cur)
            cur = []
            acc = 0
            remaining -= 1
    if cur:
        groups.append(cur)
    return groups


def _binomial_logpmf_mode_anchored(trials: int, p: float) -> np.ndarray:
    """log Binom(trials, p) pmf over 0..trials, anchored at the mode.

    The mode value comes from an fsum of log ratios (random-signed rounding,
    ~1e-13 relative); the rest is mode-outward cumulative sums of successor
    log-ratios, whose partial sums stay O(10) wherever the pmf carries mass,
    so the evaluated masses are ~1e-13-relative accurate near the mode and
    the total accounted mass is 1 within ~1e-12.
    """
    k0 = min(int((trials + 1) * p), trials)
    lp, lq = math.log(p), math.log1p(-p)
    lw0 = (
        math.fsum(math.log((trials - k0 + i) / i) for i in range(1, k0 + 1))
        + k0 * lp
        + (trials - k0) * lq
    )
    out = np.empty(trials + 1)
    out[k0] = lw0
    j = np.arange(trials + 1, dtype=np.float64)
    # pmf(i) = pmf(i-1) * (trials-i+1)/i * p/q
    lr = np.log((trials - j[1:] + 1.0) / j[1:]) + (lp - lq)
    if k0 < trials:
        out[k0 + 1 :] = lw0 + np.cumsum(lr[k0:])
    if k0 > 0:
        out[k0 - 1 :: -1] = lw0 - np.cumsum(lr[k0 - 1 :: -1])
    return out


def binomial_scan_q(
    model: str,
    n: int,
    variance_variant: str = "sigma0",
    nu: int = 9,
    chunk: int = 1 << 20,
) -> CategoryDistribution:
    """Exact q for tests whose p-value depends on one binomial count.

    FREQUENCY: j ~ Binom(n, 1/2) ones, p(j) = erfc(|2j-n|/sqrt(2n)).
    DFT: j ~ Binom(n/2, 0.95) coefficients under the threshold,
    p(j) = erfc(|j-mu|/(sigma*sqrt(2))) with the requested sigma variant.
    """
    model = model.upper()
    if model == "FREQUENCY":
        trials, psucc = n, 0.5
    elif model == "DFT":
        if n % 2:
            raise DomainError("DFT scan needs even n")
        trials, psucc = n // 2, 0.95
    else:
        raise ValidationError(f"unknown scan model {model!r}")

    acc = KahanVector(nu + 1)
    exact_pmf = model == "FREQUENCY" and n <= 64
    if exact_pmf:
        logw = None
        w_exact = np.array([math.comb(n, v) for v in range(n + 1)]) * 0.5 ** n
    else:
        logw = _binomial_logpmf_mode_anchored(trials, psucc)
    if model == "DFT":
        mu = 0.95 * n / 2.0
        sigma = math.sqrt(dft_variance(n, variance_variant))

    for lo in range(0, trials + 1, chunk):
        hi_ = min(lo + chunk, trials + 1)
        j = np.arange(lo, hi_, dtype=np.float64)
        w = w_exact[lo:hi_] if exact_pmf else np.exp(logw[lo:hi_])
        if model == "FREQUENCY":
            p = numerics.erfc_vec(np.abs(2.0 * j - n) / math.sqrt(2.0 * n))
        else:
            p = numerics.erfc_vec(np.abs(j - mu) / (sigma * math.sqrt(2.0)))
        idx = interval_index_vec(p, nu)
        acc.add(bin_sums(idx, w, nu + 1))

    q = acc.value
    mass = KahanSum()
    for v in q:
        mass.add(float(v))
    return CategoryDistribution(
        q=q,
        nu=nu,
        provenance=EXACT,
        mass_accounted=mass.value,
        meta={
            "engine": "binomial-scan",
            "model": model,
            "n": n,
            "variance_variant": variance_variant if model == "DFT" else None,
        },
    )
