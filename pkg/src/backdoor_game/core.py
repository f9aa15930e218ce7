"""Functions on {0,1}^n, input distributions, the example oracle and
representation classes.

Input points are plain ints in ``[0, 2**n)``. Bit ``i`` of the int is the
variable ``x_{i+1}``, so the string ``"0110"`` (x1 x2 x3 x4) is the point
``0b0110`` read right to left, i.e. ``6``.
"""
from __future__ import annotations

import enum
import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Callable, Iterable, Iterator, NamedTuple, Protocol, Sequence

import numpy as np

MAX_DIM = 20
# members * 2**n cells allowed in a dense class table
TABLE_BUDGET = 1 << 28
# absolute slack when comparing a float distance against eps
VALIDITY_SLACK = 1e-12


class ContractViolation(ValueError):
    pass


class DimensionMismatch(ContractViolation):
    pass


class BudgetExceeded(RuntimeError):
    """An enumeration would exceed a hard brute-force cap."""


class Verdict(enum.Enum):
    ACC = "Acc"
    REJ = "Rej"

    def __str__(self) -> str:
        return self.value


def point_from_bits(bits: str) -> int:
    """``"x1 x2 ... xn"`` as a bit string -> point index."""
    x = 0
    for i, ch in enumerate(bits):
        if ch not in "01":
            raise ValueError(f"not a bit string: {bits!r}")
        x |= (ch == "1") << i
    return x


def point_to_bits(x: int, n: int) -> str:
    return "".join("1" if (x >> i) & 1 else "0" for i in range(n))


def check_point(x: int, n: int) -> int:
    x = int(x)
    if not 0 <= x < (1 << n):
        raise DimensionMismatch(f"point {x} is not in {{0,1}}^{n}")
    return x


def _check_dim(n: int) -> None:
    if not 0 <= n <= MAX_DIM:
        raise ContractViolation(f"dimension {n} outside [0, {MAX_DIM}]")


class RandomSource:
    """Counter-based (Philox) generator keyed by ``(seed, stream)``.

    Identical ``(seed, stream)`` pairs replay identical draws. Instances are
    single-owner: give each trial its own stream id.
    """

    def __init__(self, seed: int, stream: int = 0, tag: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self.tag = int(tag)
        mask = 2**64 - 1
        ss = np.random.SeedSequence([self.seed & mask, self.stream & mask, self.tag & mask])
        self.gen = np.random.Generator(np.random.Philox(ss))

    def __repr__(self) -> str:
        return f"RandomSource(seed={self.seed}, stream={self.stream}, tag={self.tag})"

    def random(self, size=None):
        return self.gen.random(size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size=size)

    def bit(self) -> int:
        return int(self.gen.integers(0, 2))

    def choice(self, seq: Sequence):
        return seq[int(self.gen.integers(0, len(seq)))]

    def permutation(self, k: int) -> np.ndarray:
        return self.gen.permutation(k)

    def child(self, tag: int) -> "RandomSource":
        """Independent sub-stream, e.g. for the defender inside a round."""
        return RandomSource(self.seed, self.stream, self.tag * 1000003 + tag + 1)


class BooleanFunction(Protocol):
    n: int

    def __call__(self, x: int) -> int: ...

    def table(self) -> np.ndarray: ...


@dataclass(frozen=True)
class TruthTable:
    """A total function {0,1}^n -> {0,1} stored as 2^n bytes of 0/1."""

    n: int
    bits: bytes

    def __post_init__(self):
        _check_dim(self.n)
        if len(self.bits) != 1 << self.n:
            raise ContractViolation(f"table length {len(self.bits)} != 2^{self.n}")

    @classmethod
    def from_array(cls, n: int, values) -> "TruthTable":
        arr = np.asarray(values, dtype=np.uint8)
        if arr.size and arr.max() > 1:
            raise ContractViolation("truth table entries must be bits")
        return cls(n, arr.tobytes())

    @classmethod
    def constant(cls, n: int, value: int) -> "TruthTable":
        return cls(n, bytes([value & 1]) * (1 << n))

    @classmethod
    def from_hex(cls, n: int, text: str) -> "TruthTable":
        packed = np.frombuffer(bytes.fromhex(text), dtype=np.uint8)
        arr = np.unpackbits(packed, bitorder="little")[: 1 << n]
        if arr.size != 1 << n:
            raise ContractViolation("hex string too short for dimension")
        return cls.from_array(n, arr)

    def to_hex(self) -> str:
        return np.packbits(self.table(), bitorder="little").tobytes().hex()

    def table(self) -> np.ndarray:
        return np.frombuffer(self.bits, dtype=np.uint8)

    def __call__(self, x: int) -> int:
        return self.bits[x]

    def __repr__(self) -> str:
        return f"TruthTable(n={self.n}, hex={self.to_hex()})"


def indicator(n: int, point: int) -> TruthTable:
    arr = np.zeros(1 << n, dtype=np.uint8)
    arr[check_point(point, n)] = 1
    return TruthTable.from_array(n, arr)


@dataclass(frozen=True)
class SpecialCased:
    """``x -> value if x == point else base(x)``; the representation is the
    triple ``(base, point, value)``."""

    base: BooleanFunction
    point: int
    value: int

    @property
    def n(self) -> int:
        return self.base.n

    def __call__(self, x: int) -> int:
        return self.value if x == self.point else self.base(x)

    @cached_property
    def _table(self) -> np.ndarray:
        t = np.array(self.base.table(), dtype=np.uint8)
        t[self.point] = self.value
        t.setflags(write=False)
        return t

    def table(self) -> np.ndarray:
        return self._table

    @property
    def is_modified(self) -> bool:
        return self.base(self.point) != self.value


class InputDistribution:
    """Dense probability vector over {0,1}^n.

    ``exact`` optionally carries the same masses as Fractions, for the exact
    oracles.
    """

    def __init__(self, n: int, mass, exact: Sequence[Fraction] | None = None):
        _check_dim(n)
        mass = np.array(mass, dtype=np.float64)
        if mass.shape != (1 << n,):
            raise ContractViolation(f"mass vector must have length 2^{n}")
        if (mass < 0).any():
            raise ContractViolation("negative probability mass")
        if abs(mass.sum() - 1.0) > 1e-12:
            raise ContractViolation(f"masses sum to {mass.sum()!r}, not 1")
        if exact is not None:
            exact = tuple(Fraction(e) for e in exact)
            if len(exact) != 1 << n or sum(exact) != 1 or min(exact) < 0:
                raise ContractViolation("exact masses must be a distribution")
        mass.setflags(write=False)
        self.n = n
        self.mass = mass
        self._exact = exact
        self.support = np.flatnonzero(mass > 0)
        self.support_mass = mass[self.support] / mass[self.support].sum()

    @classmethod
    def uniform(cls, n: int) -> "InputDistribution":
        size = 1 << n
        # 2^-n is exact in binary, so large n can skip the Fraction vector
        exact = [Fraction(1, size)] * size if n <= 12 else None
        return cls(n, np.full(size, 1.0 / size), exact)

    @classmethod
    def point_mass(cls, n: int, x: int) -> "InputDistribution":
        check_point(x, n)
        exact = [Fraction(0)] * (1 << n)
        exact[x] = Fraction(1)
        return cls.from_fractions(n, exact)

    @classmethod
    def from_fractions(cls, n: int, masses: Sequence[Fraction]) -> "InputDistribution":
        return cls(n, [float(m) for m in masses], masses)

    @classmethod
    def from_support(cls, n: int, weights: dict[int, float | Fraction]) -> "InputDistribution":
        """Normalizes ``weights``; stays exact if every weight is rational."""
        if all(isinstance(w, (int, Fraction)) for w in weights.values()):
            total = sum(Fraction(w) for w in weights.values())
            exact = [Fraction(0)] * (1 << n)
            for x, w in weights.items():
                exact[check_point(x, n)] += Fraction(w) / total
            return cls.from_fractions(n, exact)
        mass = np.zeros(1 << n)
        for x, w in weights.items():
            mass[check_point(x, n)] += float(w)
        return cls(n, mass / mass.sum())

    @classmethod
    def from_json(cls, n: int, text: str) -> "InputDistribution":
        return cls(n, json.loads(text))

    def to_json(self) -> str:
        return json.dumps([float(m) for m in self.mass])

    @property
    def is_exact(self) -> bool:
        return self._exact is not None

    def exact(self) -> tuple[Fraction, ...]:
        if self._exact is None:
            # binary floats convert to Fractions exactly
            return tuple(Fraction(float(m)) for m in self.mass)
        return self._exact

    @cached_property
    def is_uniform(self) -> bool:
        return bool(np.all(self.mass == self.mass[0]))

    def sample(self, rng: RandomSource, size: int | None = None):
        if self.is_uniform:
            idx = rng.gen.integers(0, len(self.support), size=size)
        else:
            idx = rng.gen.choice(len(self.support), size=size, p=self.support_mass)
        if size is None:
            return int(self.support[idx])
        return self.support[idx]

    def __repr__(self) -> str:
        return f"InputDistribution(n={self.n}, support={len(self.support)})"


class LabeledExample(NamedTuple):
    point: int
    label: int


def evaluate(f: BooleanFunction, x: int) -> int:
    return int(f(check_point(x, f.n)))


def _check_same_dim(*objs) -> int:
    dims = {o.n for o in objs}
    if len(dims) != 1:
        raise DimensionMismatch(f"dimension mismatch: {sorted(dims)}")
    return dims.pop()


def _structural_distance(f, g, D: InputDistribution) -> Fraction | None:
    # representations that know their uniform distance skip the 2^n tables
    if type(f) is type(g) and hasattr(f, "uniform_distance") and D.is_uniform:
        return f.uniform_distance(g)
    return None


def distance(f: BooleanFunction, g: BooleanFunction, D: InputDistribution) -> float:
    """Exact D-mass of the disagreement set of f and g."""
    _check_same_dim(f, g, D)
    quick = _structural_distance(f, g, D)
    if quick is not None:
        return float(quick)
    s = D.support
    diff = f.table()[s] != g.table()[s]
    return float(D.mass[s][diff].sum())


def exact_distance(f: BooleanFunction, g: BooleanFunction, D: InputDistribution) -> Fraction:
    _check_same_dim(f, g, D)
    quick = _structural_distance(f, g, D)
    if quick is not None:
        return quick
    ex = D.exact()
    diff = np.flatnonzero(f.table() != g.table())
    return sum((ex[i] for i in diff), Fraction(0))


def sample_example(f: BooleanFunction, D: InputDistribution, rng: RandomSource) -> LabeledExample:
    _check_same_dim(f, D)
    x = D.sample(rng)
    return LabeledExample(x, int(f(x)))


def is_epsilon_valid(f, fstar, D: InputDistribution, eps, xstar: int) -> bool:
    """True iff fstar is within eps of f under D but disagrees at the trigger."""
    if eps <= 0:
        raise ContractViolation("eps must be positive")
    check_point(xstar, f.n)
    if f(xstar) == fstar(xstar):
        return False
    if isinstance(eps, Fraction):
        return exact_distance(f, fstar, D) <= eps
    return distance(f, fstar, D) <= eps + VALIDITY_SLACK


class ExampleOracle:
    """Ex(f, D): each call draws x ~ D independently and returns (x, f(x))."""

    def __init__(self, f: BooleanFunction, D: InputDistribution, rng: RandomSource):
        _check_same_dim(f, D)
        self.f = f
        self.D = D
        self.rng = rng
        self.calls = 0

    def __call__(self) -> LabeledExample:
        self.calls += 1
        return sample_example(self.f, self.D, self.rng)

    def draw(self, k: int) -> list[LabeledExample]:
        pts = self.sample_points(k)
        t = self.f.table()
        return [LabeledExample(int(x), int(t[x])) for x in pts]

    def sample_support_indices(self, shape) -> np.ndarray:
        """Batched draws, returned as indices into ``D.support``."""
        k = int(np.prod(shape))
        self.calls += k
        if self.D.is_uniform:
            return self.rng.gen.integers(0, len(self.D.support), size=shape)
        return self.rng.gen.choice(len(self.D.support), size=shape, p=self.D.support_mass)

    def sample_points(self, k: int) -> np.ndarray:
        return self.D.support[self.sample_support_indices(k)]


class RepresentationClass:
    """Indexed family of Boolean functions on {0,1}^n.

    ``members`` is the enumeration order (duplicate-free at the
    representation level). Non-enumerable classes pass ``members=None`` and a
    membership predicate instead.
    """

    def __init__(
        self,
        n: int,
        kind: str,
        members: Iterable[BooleanFunction] | None = None,
        *,
        contains: Callable[[object], bool] | None = None,
        name: str | None = None,
    ):
        _check_dim(n)
        self.n = n
        self.kind = kind
        self.name = name or kind
        self._contains = contains
        if members is not None:
            members = tuple(members)
            if any(m.n != n for m in members):
                raise DimensionMismatch("class member of wrong dimension")
            self._index = {m: i for i, m in enumerate(members)}
            if len(self._index) != len(members):
                raise ContractViolation("duplicate representation in class")
        self.members = members
        self._tables = None

    @property
    def enumerable(self) -> bool:
        return self.members is not None

    def _require_members(self) -> tuple:
        if self.members is None:
            raise BudgetExceeded(f"class {self.name!r} is not enumerable")
        return self.members

    def __len__(self) -> int:
        return len(self._require_members())

    def __iter__(self) -> Iterator[BooleanFunction]:
        return iter(self._require_members())

    def __getitem__(self, i: int) -> BooleanFunction:
        return self._require_members()[i]

    def __contains__(self, rep) -> bool:
        if self.members is not None:
            try:
                return rep in self._index
            except TypeError:
                return False
        return bool(self._contains and self._contains(rep))

    def index(self, rep) -> int:
        self._require_members()
        return self._index[rep]

    def tables(self) -> np.ndarray:
        """(members, 2^n) uint8 matrix of truth tables, cached."""
        if self._tables is None:
            members = self._require_members()
            if len(members) * (1 << self.n) > TABLE_BUDGET:
                raise BudgetExceeded(
                    f"class table {len(members)} x 2^{self.n} exceeds budget {TABLE_BUDGET}"
                )
            t = np.stack([np.asarray(m.table(), dtype=np.uint8) for m in members])
            t.setflags(write=False)
            self._tables = t
        return self._tables

    def restrict(self, points) -> np.ndarray:
        return self.tables()[:, np.asarray(points, dtype=np.int64)]

    def __repr__(self) -> str:
        size = len(self.members) if self.members is not None else "?"
        return f"RepresentationClass({self.name!r}, n={self.n}, size={size})"


def explicit_class(n: int, functions: Iterable[BooleanFunction], name: str = "explicit") -> RepresentationClass:
    return RepresentationClass(n, "explicit", functions, name=name)


def indicator_class(n: int) -> RepresentationClass:
    """{1_x : x in {0,1}^n}; VC dimension 1."""
    return RepresentationClass(n, "indicator", (indicator(n, x) for x in range(1 << n)), name=f"indicator-n{n}")


def sparse_class(n: int, k: int) -> RepresentationClass:
    """All functions with at most k ones; VC dimension min(k, 2^n)."""
    size = 1 << n
    members = []
    for j in range(min(k, size) + 1):
        for ones in itertools.combinations(range(size), j):
            arr = np.zeros(size, dtype=np.uint8)
            arr[list(ones)] = 1
            members.append(TruthTable.from_array(n, arr))
    return RepresentationClass(n, "explicit", members, name=f"sparse-n{n}-k{k}")


def all_functions_class(n: int) -> RepresentationClass:
    size = 1 << n
    if size > 16:
        raise BudgetExceeded("all-functions class only enumerated for n <= 4")
    members = [
        TruthTable.from_array(n, [(code >> i) & 1 for i in range(size)]) for code in range(1 << size)
    ]
    return RepresentationClass(n, "explicit", members, name=f"all-n{n}")


def special_cased_class(base: RepresentationClass) -> RepresentationClass:
    """Every base member with one point overridden to either bit."""
    members = [
        SpecialCased(f, x, y) for f in base for x in range(1 << base.n) for y in (0, 1)
    ]
    return RepresentationClass(base.n, "special-cased", members, name=f"special-cased({base.name})")


def pairwise_distances(cls: RepresentationClass, D: InputDistribution) -> np.ndarray:
    """(members, members) matrix of D-distances, via a signed Gram product."""
    _check_same_dim(cls, D)
    s = D.support
    signs = 1.0 - 2.0 * cls.tables()[:, s].astype(np.float64)
    gram = (signs * D.mass[s]) @ signs.T
    out = 0.5 * (1.0 - gram)
    np.clip(out, 0.0, 1.0, out=out)
    np.fill_diagonal(out, 0.0)
    return out
