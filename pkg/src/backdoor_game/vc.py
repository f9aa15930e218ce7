"""Brute-force shattering, VC dimension and growth counts."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import BudgetExceeded, RepresentationClass, check_point

MAX_POINTS = 25
MAX_MEMBERS = 1 << 20
MAX_SUBSETS = 2_000_000


@dataclass(frozen=True)
class ShatterWitness:
    """For each labeling of ``points`` (a bit tuple aligned with ``points``),
    the lowest-index class member realizing it."""

    points: tuple[int, ...]
    assignments: dict

    def labelings(self):
        return sorted(self.assignments)

    def realizer(self, labeling) -> int:
        return self.assignments[tuple(labeling)]


def _check_budget(cls: RepresentationClass, points) -> None:
    if len(points) > MAX_POINTS:
        raise BudgetExceeded(f"{len(points)} points exceeds the {MAX_POINTS}-point cap")
    if len(cls) > MAX_MEMBERS:
        raise BudgetExceeded(f"{len(cls)} members exceeds the 2^20 cap")


def labeling_codes(cls: RepresentationClass, points) -> np.ndarray:
    """Per member, its labeling of ``points`` packed as an int (bit j = point j)."""
    points = [check_point(x, cls.n) for x in points]
    _check_budget(cls, points)
    if not points:
        return np.zeros(len(cls), dtype=np.int64)
    weights = np.left_shift(np.int64(1), np.arange(len(points), dtype=np.int64))
    return cls.restrict(points).astype(np.int64) @ weights


def growth_count(cls: RepresentationClass, points) -> int:
    """Number of distinct labelings of ``points`` realized by the class."""
    return int(np.unique(labeling_codes(cls, points)).size)


def shatter_witness(cls: RepresentationClass, points) -> ShatterWitness | None:
    points = tuple(points)
    if len(set(points)) != len(points):
        return None
    codes = labeling_codes(cls, points)
    uniq, first = np.unique(codes, return_index=True)
    if uniq.size != 1 << len(points):
        return None
    k = len(points)
    assignments = {
        tuple((int(c) >> j) & 1 for j in range(k)): int(i) for c, i in zip(uniq, first)
    }
    return ShatterWitness(points, assignments)


def is_shattered(cls: RepresentationClass, points) -> bool:
    return shatter_witness(cls, points) is not None


def vc_dimension(cls: RepresentationClass, *, with_witness: bool = False):
    """Largest d such that some d-subset of {0,1}^n is shattered.

    Shattering is downward closed, so the search stops after the first size
    at which no subset is shattered.
    """
    if len(cls) > MAX_MEMBERS:
        raise BudgetExceeded(f"{len(cls)} members exceeds the 2^20 cap")
    universe = range(1 << cls.n)
    best = ShatterWitness((), {(): 0}) if len(cls) else None
    d = 0 if len(cls) else -1
    # 2^d realizable labelings need at least 2^d members
    max_k = min(len(universe), int(math.log2(len(cls))) if len(cls) else 0, MAX_POINTS)
    examined = 0
    for k in range(1, max_k + 1):
        examined += math.comb(len(universe), k)
        if examined > MAX_SUBSETS:
            raise BudgetExceeded(f"VC search would examine more than {MAX_SUBSETS} subsets")
        found = None
        for subset in itertools.combinations(universe, k):
            found = shatter_witness(cls, subset)
            if found is not None:
                break
        if found is None:
            break
        d, best = k, found
    if with_witness:
        return d, best
    return d


def sauer_shelah_bound(m: int, d: int) -> int:
    return sum(math.comb(m, i) for i in range(d + 1))
