"""Attack strategies.

An attacker first commits to ``(D, f)`` via ``setup`` and, once the trigger
x* ~ D is drawn, proposes f* via ``backdoor``. Attackers whose randomness is
finite also expose ``outcomes(eps)``, an exact enumeration of
``(probability, D, f, x*, f*)`` used by the exact game oracles.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import (
    BooleanFunction,
    ContractViolation,
    InputDistribution,
    RandomSource,
    RepresentationClass,
    SpecialCased,
    indicator_class,
    is_epsilon_valid,
    pairwise_distances,
    special_cased_class,
)
from .trees import DecisionTree, random_tree, tree_family
from .vc import ShatterWitness, vc_dimension


PAIRWISE_LIMIT = 4096


class AttackUnavailable(ContractViolation):
    """The attack cannot be mounted with these parameters."""


@dataclass(frozen=True, eq=False)
class AttackSetup:
    attacker: "Attacker"
    D: InputDistribution
    f: BooleanFunction | None
    eps: float | Fraction
    private: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class BackdoorProposal:
    fstar: BooleanFunction
    claimed_valid: bool
    # set only by attackers that pick f after seeing the trigger
    f: BooleanFunction | None = None


def _as_fraction(eps) -> Fraction | None:
    if isinstance(eps, (int, Fraction)):
        return Fraction(eps)
    return None


class Attacker:
    name = "attacker"
    cls: RepresentationClass
    rule_violation = False

    def setup(self, eps, rng: RandomSource, f: BooleanFunction | None = None) -> AttackSetup:
        raise NotImplementedError

    def backdoor(self, setup: AttackSetup, xstar: int, rng: RandomSource) -> BackdoorProposal:
        raise NotImplementedError

    def outcomes(self, eps):
        raise AttackUnavailable(f"{self.name} has no exact enumeration")

    def _propose(self, base, fstar, D, eps, xstar, **kw) -> BackdoorProposal:
        valid = fstar in self.cls and is_epsilon_valid(base, fstar, D, eps, xstar)
        return BackdoorProposal(fstar, valid, **kw)


class ShatteredAttacker(Attacker):
    """Puts min(1/(d-1), eps) on each point of a shattered set S except its
    lowest point s, and the rest on s; f is a uniform witness with f(s) = 0
    and f* flips it at the trigger."""

    name = "shattered"

    def __init__(self, cls: RepresentationClass, witness: ShatterWitness | None = None):
        if witness is None:
            d, witness = vc_dimension(cls, with_witness=True)
        d = len(witness.points)
        if d < 2:
            raise AttackUnavailable(f"needs a shattered set of size >= 2, class has VC dimension {d}")
        self.cls = cls
        self.d = d
        self.points = tuple(sorted(witness.points))
        self.witness = witness
        self.s = self.points[0]
        self._D: dict = {}

    def distribution(self, eps) -> InputDistribution:
        key = (type(eps).__name__, eps)
        D = self._D.get(key)
        if D is None:
            exact = _as_fraction(eps)
            share = min(Fraction(1, self.d - 1), exact) if exact is not None else min(1 / (self.d - 1), float(eps))
            weights = {p: share for p in self.points[1:]}
            rest = 1 - share * (self.d - 1)
            if rest > 0:
                weights[self.s] = rest
            D = InputDistribution.from_support(self.cls.n, weights)
            self._D[key] = D
        return D

    def member(self, labels: dict[int, int]) -> BooleanFunction:
        """Witness realizing ``labels`` (point -> bit) on S."""
        return self.cls[self.witness.realizer(tuple(labels[p] for p in self.witness.points))]

    def setup(self, eps, rng: RandomSource, f: BooleanFunction | None = None) -> AttackSetup:
        if f is not None:
            raise ContractViolation("shattered attacker chooses its own f")
        labels = {p: (0 if p == self.s else int(rng.integers(0, 2))) for p in self.points}
        return AttackSetup(self, self.distribution(eps), self.member(labels), eps, {"labels": labels})

    def _fstar(self, labels: dict[int, int], xstar: int) -> BooleanFunction:
        if xstar == self.s:
            return self.member(labels)
        flipped = dict(labels)
        flipped[xstar] ^= 1
        return self.member(flipped)

    def backdoor(self, setup: AttackSetup, xstar: int, rng: RandomSource | None = None) -> BackdoorProposal:
        return self._propose(setup.f, self._fstar(setup.private["labels"], xstar), setup.D, setup.eps, xstar)

    def outcomes(self, eps):
        D = self.distribution(eps)
        ex = D.exact()
        others = self.points[1:]
        pf = Fraction(1, 1 << len(others))
        for bits in range(1 << len(others)):
            labels = {self.s: 0} | {p: (bits >> i) & 1 for i, p in enumerate(others)}
            f = self.member(labels)
            for xstar in D.support:
                yield pf * ex[xstar], D, f, int(xstar), self._fstar(labels, int(xstar))


class RemovalAttacker(Attacker):
    """Indicator family; f = 1_{x*} is chosen after the trigger, which the
    game forbids, and f* = 1_{x'} for a fresh x' ~ D."""

    name = "removal"
    rule_violation = True

    def __init__(self, n: int):
        self.n = n
        self.cls = indicator_class(n)
        self.D = InputDistribution.uniform(n)

    def setup(self, eps, rng: RandomSource, f: BooleanFunction | None = None) -> AttackSetup:
        return AttackSetup(self, self.D, None, eps)

    def _pair(self, xstar: int, xprime: int, other: int):
        if xprime != xstar:
            return self.cls[xstar], self.cls[xprime]
        return self.cls[other], self.cls[xstar]

    def backdoor(self, setup: AttackSetup, xstar: int, rng: RandomSource) -> BackdoorProposal:
        xprime = setup.D.sample(rng)
        rest = [x for x in range(1 << self.n) if x != xstar]
        f, fstar = self._pair(xstar, xprime, rng.choice(rest))
        return self._propose(f, fstar, setup.D, setup.eps, xstar, f=f)

    def outcomes(self, eps):
        ex = self.D.exact()
        size = 1 << self.n
        for xstar in range(size):
            for xprime in range(size):
                w = ex[xstar] * ex[xprime]
                if xprime != xstar:
                    f, fstar = self._pair(xstar, xprime, 0)
                    yield w, self.D, f, xstar, fstar
                    continue
                for other in range(size):
                    if other != xstar:
                        f, fstar = self._pair(xstar, xprime, other)
                        yield w / (size - 1), self.D, f, xstar, fstar


class SpecialCaseAttacker(Attacker):
    """Special-cased family over ``base``: f is a base member recorded with a
    no-op override, f* overrides the trigger with the flipped bit."""

    name = "special-case"

    def __init__(self, base: RepresentationClass):
        self.base = base
        self.cls = special_cased_class(base)
        self.D = InputDistribution.uniform(base.n)

    def setup(self, eps, rng: RandomSource, f: BooleanFunction | None = None) -> AttackSetup:
        fb = self.base[int(rng.integers(0, len(self.base)))]
        x0 = int(rng.integers(0, 1 << self.base.n))
        return AttackSetup(self, self.D, SpecialCased(fb, x0, fb(x0)), eps)

    def backdoor(self, setup: AttackSetup, xstar: int, rng: RandomSource | None = None) -> BackdoorProposal:
        fb = setup.f.base
        return self._propose(setup.f, SpecialCased(fb, xstar, 1 - fb(xstar)), setup.D, setup.eps, xstar)

    def outcomes(self, eps):
        size = 1 << self.base.n
        w = Fraction(1, len(self.base) * size * size)
        for fb in self.base:
            for x0 in range(size):
                f = SpecialCased(fb, x0, fb(x0))
                for xstar in range(size):
                    yield w, self.D, f, xstar, SpecialCased(fb, xstar, 1 - fb(xstar))


def graft_depth(eps) -> int:
    """Least k with 2^-k <= eps."""
    k = max(0, math.ceil(-math.log2(eps)))
    while k > 0 and 2.0 ** -(k - 1) <= eps:
        k -= 1
    while 2.0**-k > eps:
        k += 1
    return k


class TreeGraftAttacker(Attacker):
    """Uniform D and a random tree f of size <= s/2. f* replaces the leaf of
    x* with a chain of tests on the lowest-index variables missing from the
    path, until the leaf of x* has mass <= eps; only that leaf is flipped."""

    name = "tree-graft"

    def __init__(self, n: int, s: int):
        self.n = n
        self.s = s
        self.cls = tree_family(n, s)
        self.D = InputDistribution.uniform(n)

    def setup(self, eps, rng: RandomSource, f: BooleanFunction | None = None) -> AttackSetup:
        if graft_depth(eps) > self.n:
            raise AttackUnavailable(f"eps={eps} needs a leaf deeper than n={self.n}")
        if f is None:
            f = random_tree(self.n, max(1, self.s // 2), rng)
        return AttackSetup(self, self.D, f, eps)

    def graft(self, f: DecisionTree, xstar: int, eps) -> DecisionTree:
        target = graft_depth(eps)

        def walk(node, used):
            if isinstance(node, tuple):
                var, lo, hi = node
                if (xstar >> var) & 1:
                    return (var, lo, walk(hi, used | 1 << var))
                return (var, walk(lo, used | 1 << var), hi)
            free = [v for v in range(self.n) if not (used >> v) & 1]
            chain = free[: max(0, target - used.bit_count())]
            cur = 1 - node
            for v in reversed(chain):
                cur = (v, node, cur) if (xstar >> v) & 1 else (v, cur, node)
            return cur

        return DecisionTree(self.n, walk(f.root, 0))

    def backdoor(self, setup: AttackSetup, xstar: int, rng: RandomSource | None = None) -> BackdoorProposal:
        fstar = self.graft(setup.f, xstar, setup.eps)
        if fstar.size > self.s:
            raise AttackUnavailable(f"graft needs {fstar.size} leaves, more than s={self.s}")
        return self._propose(setup.f, fstar, setup.D, setup.eps, xstar)


class NearestFlipAttacker(Attacker):
    """For an enumerable class: f* is the member closest to f among those
    that disagree with f at x* (lowest index on ties). The attacker does not
    check the budget, so f* may be invalid."""

    def __init__(self, cls: RepresentationClass, D: InputDistribution | None = None, name: str = "nearest-flip"):
        self.cls = cls
        self.D = D if D is not None else InputDistribution.uniform(cls.n)
        self.name = name
        self._rows: dict = {}

    def _row(self, i: int) -> np.ndarray:
        if len(self.cls) <= PAIRWISE_LIMIT:
            if "all" not in self._rows:
                self._rows["all"] = pairwise_distances(self.cls, self.D)
            return self._rows["all"][i]
        row = self._rows.get(i)
        if row is None:
            s = self.D.support
            tables = self.cls.tables()
            row = (tables[:, s] != tables[i, s]).astype(np.float64) @ self.D.mass[s]
            self._rows[i] = row
        return row

    def setup(self, eps, rng: RandomSource, f: BooleanFunction | None = None) -> AttackSetup:
        i = int(rng.integers(0, len(self.cls))) if f is None else self.cls.index(f)
        return AttackSetup(self, self.D, self.cls[i], eps, {"index": i})

    def _fstar(self, i: int, xstar: int) -> BooleanFunction:
        col = self.cls.tables()[:, xstar]
        flip = np.flatnonzero(col != col[i])
        if flip.size == 0:
            return self.cls[i]
        return self.cls[int(flip[np.argmin(self._row(i)[flip])])]

    def backdoor(self, setup: AttackSetup, xstar: int, rng: RandomSource | None = None) -> BackdoorProposal:
        return self._propose(setup.f, self._fstar(setup.private["index"], xstar), setup.D, setup.eps, xstar)

    def outcomes(self, eps, f_weights=None):
        """``f_weights`` (one per member) replaces the uniform choice of f."""
        ex = self.D.exact()
        size = len(self.cls)
        for i in range(size):
            w = Fraction(1, size) if f_weights is None else f_weights[i]
            if w == 0:
                continue
            for xstar in self.D.support:
                yield w * ex[xstar], self.D, self.cls[i], int(xstar), self._fstar(i, int(xstar))

    def __getstate__(self):
        state = dict(self.__dict__)
        state["_rows"] = {}
        return state


def shattered_attack(cls: RepresentationClass, eps, rng: RandomSource) -> AttackSetup:
    return ShatteredAttacker(cls).setup(eps, rng)


def removal_attack(n: int, eps, rng: RandomSource) -> AttackSetup:
    return RemovalAttacker(n).setup(eps, rng)


def specialcase_attack(base: RepresentationClass, eps, rng: RandomSource) -> AttackSetup:
    return SpecialCaseAttacker(base).setup(eps, rng)


def tree_graft_attack(n: int, s: int, eps, rng: RandomSource) -> AttackSetup:
    return TreeGraftAttacker(n, s).setup(eps, rng)


def random_class_attack(cls: RepresentationClass, eps, rng: RandomSource) -> AttackSetup:
    return NearestFlipAttacker(cls, name="random-class").setup(eps, rng)


def backdoor(setup: AttackSetup, xstar: int, rng: RandomSource | None = None) -> BackdoorProposal:
    return setup.attacker.backdoor(setup, xstar, rng)
