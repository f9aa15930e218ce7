"""Decision trees over {0,1}^n and the depth-threshold detector.

A tree node is either a leaf bit (``0``/``1``) or a tuple
``(var, left, right)``; evaluation goes left when ``x_var`` is 0. Text form
is ``(var left right)`` with 0-based variable indices.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache

import numpy as np

from .core import (
    BudgetExceeded,
    ContractViolation,
    RandomSource,
    RepresentationClass,
    Verdict,
    _check_dim,
    check_point,
)


@dataclass(frozen=True)
class DecisionTree:
    n: int
    root: object

    def __post_init__(self):
        _check_dim(self.n)
        _validate(self.root, self.n)

    @cached_property
    def size(self) -> int:
        return _count_leaves(self.root)

    def __call__(self, x: int) -> int:
        return tree_evaluate(self, x)

    @cached_property
    def _table(self) -> np.ndarray:
        out = np.empty(1 << self.n, dtype=np.uint8)
        _fill(self.root, np.arange(1 << self.n, dtype=np.int64), out)
        out.setflags(write=False)
        return out

    def table(self) -> np.ndarray:
        return self._table

    def to_text(self) -> str:
        return _to_text(self.root)

    def uniform_distance(self, other: "DecisionTree") -> Fraction:
        """Uniform mass of the disagreement set, from pairs of leaves."""
        total = Fraction(0)
        theirs = [(_constraint_masks(c), y) for c, y in leaves(other)]
        for cons, y in leaves(self):
            fixed, ones = _constraint_masks(cons)
            if fixed < 0:
                continue
            for (gfixed, gones), gy in theirs:
                if gy == y or gfixed < 0:
                    continue
                common = fixed & gfixed
                if (ones ^ gones) & common:
                    continue
                total += Fraction(1, 1 << (fixed | gfixed).bit_count())
        return total

    @classmethod
    def from_text(cls, n: int, text: str) -> "DecisionTree":
        tokens = text.replace("(", " ( ").replace(")", " ) ").split()
        root, pos = _parse(tokens, 0)
        if pos != len(tokens):
            raise ContractViolation(f"trailing tokens in tree text {text!r}")
        return cls(n, root)

    def __repr__(self) -> str:
        return f"DecisionTree(n={self.n}, {self.to_text()})"


def _validate(node, n: int) -> None:
    stack = [node]
    while stack:
        node = stack.pop()
        if isinstance(node, tuple):
            if len(node) != 3 or not 0 <= node[0] < n:
                raise ContractViolation(f"malformed tree node {node!r}")
            stack.extend(node[1:])
        elif node not in (0, 1):
            raise ContractViolation(f"leaf label must be a bit, got {node!r}")


def _constraint_masks(constraints) -> tuple[int, int]:
    """(mask of fixed variables, their required bits); (-1, 0) if the path
    contradicts itself and the leaf is unreachable."""
    fixed = ones = 0
    for var, bit in constraints:
        if (fixed >> var) & 1:
            if ((ones >> var) & 1) != bit:
                return -1, 0
        else:
            fixed |= 1 << var
            ones |= bit << var
    return fixed, ones


def _count_leaves(node) -> int:
    if isinstance(node, tuple):
        return _count_leaves(node[1]) + _count_leaves(node[2])
    return 1


def _fill(node, idx: np.ndarray, out: np.ndarray) -> None:
    if not isinstance(node, tuple):
        out[idx] = node
        return
    var, lo, hi = node
    bit = (idx >> var) & 1
    _fill(lo, idx[bit == 0], out)
    _fill(hi, idx[bit == 1], out)


def _to_text(node) -> str:
    if isinstance(node, tuple):
        return f"({node[0]} {_to_text(node[1])} {_to_text(node[2])})"
    return str(node)


def _parse(tokens, pos):
    tok = tokens[pos]
    if tok == "(":
        var = int(tokens[pos + 1])
        left, pos = _parse(tokens, pos + 2)
        right, pos = _parse(tokens, pos)
        if tokens[pos] != ")":
            raise ContractViolation("expected ')' in tree text")
        return (var, left, right), pos + 1
    if tok in ("0", "1"):
        return int(tok), pos + 1
    raise ContractViolation(f"unexpected token {tok!r} in tree text")


class NodeCounter:
    """Counts visited nodes when passed to the walkers below."""

    def __init__(self):
        self.visits = 0


def tree_evaluate(t: DecisionTree, x: int, counter: NodeCounter | None = None) -> int:
    node = t.root
    if counter is None:
        while type(node) is tuple:
            node = node[2] if (x >> node[0]) & 1 else node[1]
        return node
    while type(node) is tuple:
        counter.visits += 1
        node = node[2] if (x >> node[0]) & 1 else node[1]
    counter.visits += 1
    return node


def tree_depth(t: DecisionTree, x: int, counter: NodeCounter | None = None) -> int:
    """Number of distinct variables tested on the evaluation path of x."""
    node = t.root
    seen = 0
    if counter is None:
        while type(node) is tuple:
            seen |= 1 << node[0]
            node = node[2] if (x >> node[0]) & 1 else node[1]
        return seen.bit_count()
    while type(node) is tuple:
        counter.visits += 1
        seen |= 1 << node[0]
        node = node[2] if (x >> node[0]) & 1 else node[1]
    counter.visits += 1
    return seen.bit_count()


def path_variables(t: DecisionTree, x: int) -> int:
    """Bitmask of the variables tested on the path of x."""
    node, seen = t.root, 0
    while type(node) is tuple:
        seen |= 1 << node[0]
        node = node[2] if (x >> node[0]) & 1 else node[1]
    return seen


def leaf_path(t: DecisionTree, x: int) -> tuple[int, ...]:
    """Sequence of left/right turns identifying the leaf reached by x."""
    node, turns = t.root, []
    while type(node) is tuple:
        b = (x >> node[0]) & 1
        turns.append(b)
        node = node[1 + b]
    return tuple(turns)


def leaf_probability(t: DecisionTree, x: int) -> float:
    """Uniform mass of Leaf(t, x), i.e. 2^-Depth(t, x)."""
    return 2.0 ** -tree_depth(t, check_point(x, t.n))


def leaf_probability_exact(t: DecisionTree, x: int) -> Fraction:
    return Fraction(1, 1 << tree_depth(t, check_point(x, t.n)))


def leaves(t: DecisionTree):
    """Yield ``(constraints, label)`` per leaf; constraints is a list of
    ``(var, bit)`` along the path (repeats kept)."""
    stack = [(t.root, [])]
    while stack:
        node, path = stack.pop()
        if isinstance(node, tuple):
            var, lo, hi = node
            stack.append((hi, path + [(var, 1)]))
            stack.append((lo, path + [(var, 0)]))
        else:
            yield path, node


def leaf_overlap_probability(f: DecisionTree, g: DecisionTree, x: int) -> Fraction:
    """Uniform mass of Leaf(f, x) ∩ Leaf(g, x).

    Both leaves are subcubes containing x, so the intersection fixes the union
    of their path variables to x's values.
    """
    union = path_variables(f, x) | path_variables(g, x)
    return Fraction(1, 1 << union.bit_count())


def key_claim_terms(f: DecisionTree, fstar: DecisionTree, xstar: int) -> tuple[Fraction, Fraction]:
    """``(2^-(Depth(f,x*) + Depth(f*,x*)), P(Leaf(f,x*) ∩ Leaf(f*,x*)))``."""
    lower = Fraction(1, 1 << (tree_depth(f, xstar) + tree_depth(fstar, xstar)))
    return lower, leaf_overlap_probability(f, fstar, xstar)


@dataclass(frozen=True)
class DepthDefenderParams:
    s: int
    delta: float

    def __post_init__(self):
        if self.s < 1:
            raise ContractViolation("size bound s must be >= 1")
        if not 0 < self.delta < 1:
            raise ContractViolation("delta must lie in (0, 1)")

    @property
    def threshold(self) -> float:
        return self.delta / self.s

    @property
    def max_eps(self) -> float:
        """The detector is only guaranteed for eps < delta^2 / s^2."""
        return (self.delta / self.s) ** 2


def tree_depth_defend(
    params: DepthDefenderParams, fprime: DecisionTree, xprime: int, counter: NodeCounter | None = None
) -> Verdict:
    """Reject iff the leaf reached by x' has uniform mass <= delta / s."""
    if 2.0 ** -tree_depth(fprime, xprime, counter) <= params.threshold:
        return Verdict.REJ
    return Verdict.ACC


@lru_cache(maxsize=None)
def _trees_with_leaves(n: int, k: int) -> tuple:
    if k == 1:
        return (0, 1)
    out = []
    for var in range(n):
        for a in range(1, k):
            for left in _trees_with_leaves(n, a):
                for right in _trees_with_leaves(n, k - a):
                    out.append((var, left, right))
    return tuple(out)


def count_trees(n: int, s: int) -> int:
    from math import comb

    total = 0
    for k in range(1, s + 1):
        catalan = comb(2 * (k - 1), k - 1) // k
        total += catalan * n ** (k - 1) * 2**k
    return total


MAX_TREE_MEMBERS = 1 << 20


def tree_class(n: int, s: int) -> RepresentationClass:
    """All decision trees over n variables with at most s leaves.

    Variables may repeat along a path, so distinct representations can compute
    the same function.
    """
    if count_trees(n, s) > MAX_TREE_MEMBERS:
        raise BudgetExceeded(f"{count_trees(n, s)} trees of size <= {s} over n={n}")
    members = [DecisionTree(n, root) for k in range(1, s + 1) for root in _trees_with_leaves(n, k)]
    return RepresentationClass(n, "trees", members, name=f"trees-n{n}-s{s}")


def tree_family(n: int, s: int) -> RepresentationClass:
    """Non-enumerated class of trees with at most s leaves (membership only)."""

    def contains(rep) -> bool:
        return isinstance(rep, DecisionTree) and rep.n == n and rep.size <= s

    return RepresentationClass(n, "trees", None, contains=contains, name=f"trees-n{n}-s{s}")


def random_tree(n: int, s: int, rng: RandomSource) -> DecisionTree:
    """Random tree with size drawn uniformly from [1, s] (mean about s/2).

    Grows by repeatedly splitting a uniformly chosen leaf on a variable not yet
    tested on its path; leaf labels are fair bits.
    """
    target = int(rng.integers(1, s + 1))
    root = [None]
    slots = [(root, 0, 0)]  # (container, index, variables used on the path)
    size = 1
    while size < target:
        open_slots = [k for k, slot in enumerate(slots) if slot[2].bit_count() < n]
        if not open_slots:
            break
        container, j, used = slots.pop(open_slots[int(rng.integers(0, len(open_slots)))])
        free = [v for v in range(n) if not (used >> v) & 1]
        var = free[int(rng.integers(0, len(free)))]
        node = [var, None, None]
        container[j] = node
        slots.append((node, 1, used | (1 << var)))
        slots.append((node, 2, used | (1 << var)))
        size += 1
    for container, j, _ in slots:
        container[j] = int(rng.integers(0, 2))

    def freeze(node):
        if isinstance(node, list):
            return (node[0], freeze(node[1]), freeze(node[2]))
        return node

    return DecisionTree(n, freeze(root[0]))


FIGURE3_TEXT = "(3 (0 (1 0 1) 1) (1 1 0))"


def figure3_tree() -> DecisionTree:
    """Root tests x4; its 0-branch tests x1 then x2, its 1-branch tests x2."""
    return DecisionTree.from_text(4, FIGURE3_TEXT)
