"""Prediction strategies: the 1-inclusion graph predictor and ERM.

Both predict f(x) from m-1 examples of f. The 1-inclusion predictor works on
the labelings the class realizes on the distinct sample points plus x, so
its orientation depends only on that unordered point set; this is what makes
the leave-one-out bound (error <= max out-degree / m <= d/m) apply.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    BooleanFunction,
    ContractViolation,
    ExampleOracle,
    InputDistribution,
    LabeledExample,
    RandomSource,
    RepresentationClass,
    check_point,
)
from .stats import BinomialEstimate
from .vc import labeling_codes


class InconsistentSample(ContractViolation):
    """No class member agrees with the sample."""


@dataclass(frozen=True)
class Sample:
    examples: tuple[LabeledExample, ...]

    def __iter__(self):
        return iter(self.examples)

    def __len__(self) -> int:
        return len(self.examples)


def _as_label_map(sample: Sequence[LabeledExample]) -> dict[int, int]:
    labels: dict[int, int] = {}
    for x, y in sample:
        if labels.setdefault(int(x), int(y)) != int(y):
            raise InconsistentSample(f"point {x} carries both labels")
    return labels


@dataclass(frozen=True)
class Orientation:
    """Orientation of the 1-inclusion graph on one point set."""

    points: tuple[int, ...]
    vertices: frozenset
    heads: dict  # (lower code, upper code) -> code the edge points to
    max_outdegree: int

    def outdegrees(self) -> dict[int, int]:
        deg = {v: 0 for v in self.vertices}
        for (a, b), head in self.heads.items():
            deg[a if head == b else b] += 1
        return deg


def orient_min_outdegree(codes: Sequence[int], k: int) -> tuple[dict, int]:
    """Orient the unit-distance graph on ``codes`` (k-bit labelings) so the
    largest out-degree is minimal.

    Starts from a greedy orientation and reverses paths from overloaded
    vertices to underloaded ones. If an overloaded vertex reaches no
    underloaded one, its reachable set has more edges than ``bound`` times its
    size, so ``bound`` is infeasible and is raised by one.
    """
    order = sorted(set(int(c) for c in codes))
    vset = set(order)
    edges = []
    for v in order:
        for j in range(k):
            w = v | (1 << j)
            if w != v and w in vset:
                edges.append((v, w))
    out: dict[int, set] = {v: set() for v in order}
    for a, b in edges:
        if len(out[a]) <= len(out[b]):
            out[a].add(b)
        else:
            out[b].add(a)
    bound = math.ceil(len(edges) / len(order)) if order else 0
    while True:
        over = next((v for v in order if len(out[v]) > bound), None)
        if over is None:
            break
        parent = {over: None}
        queue = deque([over])
        target = None
        while queue and target is None:
            u = queue.popleft()
            for w in sorted(out[u]):
                if w in parent:
                    continue
                parent[w] = u
                if len(out[w]) < bound:
                    target = w
                    break
                queue.append(w)
        if target is None:
            bound += 1
            continue
        w = target
        while parent[w] is not None:
            u = parent[w]
            out[u].remove(w)
            out[w].add(u)
            w = u
    heads = {(a, b): (b if b in out[a] else a) for a, b in edges}
    return heads, max((len(s) for s in out.values()), default=0)


class OneInclusionPredictor:
    """Haussler-Littlestone-Warmuth predictor with per-point-set caching."""

    kind = "one-inclusion"

    def __init__(self, cls: RepresentationClass):
        self.cls = cls
        self._cache: dict[tuple[int, ...], Orientation] = {}

    def orientation(self, points: Sequence[int]) -> Orientation:
        key = tuple(sorted(set(int(p) for p in points)))
        found = self._cache.get(key)
        if found is None:
            codes = np.unique(labeling_codes(self.cls, key))
            heads, deg = orient_min_outdegree(codes.tolist(), len(key))
            found = Orientation(key, frozenset(codes.tolist()), heads, deg)
            self._cache[key] = found
        return found

    def predict_labels(self, labels: dict[int, int], x: int) -> int:
        orient = self.orientation(list(labels) + [x])
        pts = orient.points
        j = pts.index(x)
        base = 0
        for i, p in enumerate(pts):
            if p != x:
                base |= labels[p] << i
        c0, c1 = base, base | (1 << j)
        in0, in1 = c0 in orient.vertices, c1 in orient.vertices
        if x in labels:
            if not (in1 if labels[x] else in0):
                raise InconsistentSample("no class member agrees with the sample")
            return labels[x]
        if in0 and in1:
            return 1 if orient.heads[(c0, c1)] == c1 else 0
        if in0 or in1:
            return int(in1)
        raise InconsistentSample("no class member agrees with the sample")

    def predict(self, sample: Sequence[LabeledExample], x: int, rng: RandomSource | None = None) -> int:
        return self.predict_labels(_as_label_map(sample), check_point(x, self.cls.n))

    def vote_ones(self, fprime: BooleanFunction, x: int, point_sets, counts, rng) -> int:
        """Number of 1-predictions over samples labeled by ``fprime``, where
        ``point_sets[i]`` occurs ``counts[i]`` times."""
        t = fprime.table()
        ones = 0
        for pts, c in zip(point_sets, counts):
            if self.predict_labels({p: int(t[p]) for p in pts}, x):
                ones += int(c)
        return ones


class ErmPredictor:
    """Returns h(x) for the first sample-consistent member in a random order."""

    kind = "erm"

    def __init__(self, cls: RepresentationClass):
        self.cls = cls

    def _consistent(self, labels: dict[int, int]) -> np.ndarray:
        tables = self.cls.tables()
        if labels:
            pts = np.fromiter(labels, dtype=np.int64)
            ys = np.fromiter(labels.values(), dtype=np.uint8)
            ok = np.all(tables[:, pts] == ys, axis=1)
        else:
            ok = np.ones(len(self.cls), dtype=bool)
        idx = np.flatnonzero(ok)
        if idx.size == 0:
            raise InconsistentSample("no class member agrees with the sample")
        return idx

    def predict(self, sample: Sequence[LabeledExample], x: int, rng: RandomSource) -> int:
        x = check_point(x, self.cls.n)
        idx = self._consistent(_as_label_map(sample))
        rank = rng.permutation(len(self.cls))
        chosen = idx[np.argmin(rank[idx])]
        return int(self.cls.tables()[chosen, x])

    def vote_ones(self, fprime: BooleanFunction, x: int, point_sets, counts, rng: RandomSource) -> int:
        # the first consistent member of a uniform shuffle is a uniform
        # consistent member, so each vote is a coin with that member frequency
        t = fprime.table()
        col = self.cls.tables()[:, x]
        ones = 0
        for pts, c in zip(point_sets, counts):
            idx = self._consistent({p: int(t[p]) for p in pts})
            ones += int(rng.gen.binomial(int(c), float(col[idx].mean())))
        return ones


@dataclass(frozen=True)
class PredictorKind:
    kind: str
    cls: RepresentationClass

    def __post_init__(self):
        if self.kind not in ("one-inclusion", "erm"):
            raise ContractViolation(f"unknown predictor kind {self.kind!r}")

    def build(self):
        return _predictor_for(self.kind, self.cls)


_PREDICTORS: dict[tuple[str, int], object] = {}


def _predictor_for(kind: str, cls: RepresentationClass):
    key = (kind, id(cls))
    pred = _PREDICTORS.get(key)
    if pred is None or pred.cls is not cls:
        pred = OneInclusionPredictor(cls) if kind == "one-inclusion" else ErmPredictor(cls)
        _PREDICTORS[key] = pred
    return pred


def one_inclusion_predict(cls: RepresentationClass, sample, x: int, rng: RandomSource | None = None) -> int:
    return _predictor_for("one-inclusion", cls).predict(sample, x, rng)


def erm_predict(cls: RepresentationClass, sample, x: int, rng: RandomSource) -> int:
    return _predictor_for("erm", cls).predict(sample, x, rng)


def measure_error_rate(
    predictor: PredictorKind,
    f: BooleanFunction,
    D: InputDistribution,
    m: int,
    trials: int,
    rng: RandomSource,
) -> BinomialEstimate:
    """Fraction of trials whose prediction at a fresh x ~ D is wrong, each
    trial using a fresh sample of m-1 examples."""
    if m < 1 or trials < 1:
        raise ContractViolation("need m >= 1 and trials >= 1")
    pred = predictor.build()
    oracle = ExampleOracle(f, D, rng)
    errors = 0
    for _ in range(trials):
        sample = oracle.draw(m - 1)
        x = D.sample(rng)
        errors += pred.predict(sample, x, rng) != f(x)
    return BinomialEstimate(errors, trials)
