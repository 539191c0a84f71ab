"""Compensated accumulation helpers.

Every probability mass accumulated in this package goes through Neumaier's
variant of Kahan summation (robust when a term exceeds the running total),
so that per-bin totals built from up to ~1e12 terms keep absolute error far
below the 1e-10 the category-distribution invariants require.
"""

from __future__ import annotations

import numpy as np


class KahanSum:
    """Neumaier-compensated running sum of floats."""

    __slots__ = ("total", "comp")

    def __init__(self, total: float = 0.0, comp: float = 0.0):
        self.total = total
        self.comp = comp

    def add(self, value: float) -> None:
        t = self.total + value
        if abs(self.total) >= abs(value):
            self.comp += (self.total - t) + value
        else:
            self.comp += (value - t) + self.total
        self.total = t

    def merge(self, other: "KahanSum") -> None:
        # Order matters for bit-reproducibility; callers merge in fixed order.
        self.add(other.total)
        self.add(other.comp)

    @property
    def value(self) -> float:
        return self.total + self.comp

    def state(self) -> tuple[float, float]:
        return (self.total, self.comp)


class KahanVector:
    """A fixed-length vector of compensated sums (one per category bin)."""

    __slots__ = ("total", "comp")

    def __init__(self, nbins: int):
        self.total = np.zeros(nbins)
        self.comp = np.zeros(nbins)

    def add(self, values: np.ndarray) -> None:
        t = self.total + values
        big = np.abs(self.total) >= np.abs(values)
        self.comp += np.where(big, (self.total - t) + values, (values - t) + self.total)
        self.total = t

    def merge(self, other: "KahanVector") -> None:
        self.add(other.total)
        self.add(other.comp)

    @property
    def value(self) -> np.ndarray:
        return self.total + self.comp


def bin_sums(idx: np.ndarray, weights: np.ndarray, nbins: int) -> np.ndarray:
    """Per-bin sums of `weights` grouped by `idx`, using numpy's pairwise
    summation per bin (error O(log n)·eps rather than bincount's O(n)·eps)."""
    out = np.empty(nbins)
    for b in range(nbins):
        out[b] = weights[idx == b].sum()
    return out
