"""GGM puncturable PRF with one output bit.

The length-doubling generator is SHA-256 of a 16-byte node value: bytes
0..15 are the left child, 16..31 the right child. Evaluation descends on
x_1, x_2, ..., x_n (bit 0 first) and returns the low bit of the leaf value.
This is a desk-scale stand-in for a random function family, not a security
claim.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import (
    BudgetExceeded,
    ContractViolation,
    RandomSource,
    RepresentationClass,
    _check_dim,
    check_point,
)

SEED_BYTES = 16
PRF_CLASS_MAX_N = 14


def _expand(node: bytes) -> tuple[bytes, bytes]:
    h = hashlib.sha256(node).digest()
    return h[:SEED_BYTES], h[SEED_BYTES:]


class PuncturedPointError(ContractViolation):
    """A punctured key cannot evaluate the punctured point."""


@dataclass(frozen=True)
class GgmKey:
    seed: bytes
    n: int

    def __post_init__(self):
        _check_dim(self.n)
        if len(self.seed) != SEED_BYTES:
            raise ContractViolation(f"GGM seed must be {SEED_BYTES} bytes")

    @classmethod
    def random(cls, n: int, rng: RandomSource) -> "GgmKey":
        return cls(rng.gen.bytes(SEED_BYTES), n)

    @classmethod
    def from_index(cls, n: int, index: int) -> "GgmKey":
        """Key for the n-bit key string ``index`` of ``prf_class(n)``."""
        check_point(index, n)
        material = b"ggm-class" + n.to_bytes(1, "little") + index.to_bytes(4, "little")
        return cls(hashlib.sha256(material).digest()[:SEED_BYTES], n)

    def to_hex(self) -> str:
        return self.seed.hex()

    @classmethod
    def from_hex(cls, n: int, text: str) -> "GgmKey":
        return cls(bytes.fromhex(text), n)

    def __call__(self, x: int) -> int:
        return ggm_eval(self, x)

    @cached_property
    def _table(self) -> np.ndarray:
        level = [self.seed]
        for k in range(self.n):
            pairs = [_expand(v) for v in level]
            # prefix p (bits x_1..x_k) extends to p and p | 1 << k
            level = [p[0] for p in pairs] + [p[1] for p in pairs]
        out = np.fromiter((v[-1] & 1 for v in level), dtype=np.uint8, count=1 << self.n)
        out.setflags(write=False)
        return out

    def table(self) -> np.ndarray:
        return self._table

    def __repr__(self) -> str:
        return f"GgmKey(n={self.n}, seed={self.seed.hex()})"


def ggm_eval(key: GgmKey, x: int) -> int:
    x = check_point(x, key.n)
    node = key.seed
    for i in range(key.n):
        node = _expand(node)[(x >> i) & 1]
    return node[-1] & 1


@dataclass(frozen=True)
class PuncturedKey:
    n: int
    punctured_point: int
    copath: tuple[bytes, ...]

    def __call__(self, x: int) -> int:
        return punctured_eval(self, x)


def ggm_puncture(key: GgmKey, xstar: int) -> PuncturedKey:
    """Co-path node values: entry i is the sibling of x*'s path at depth i+1."""
    xstar = check_point(xstar, key.n)
    node = key.seed
    copath = []
    for i in range(key.n):
        children = _expand(node)
        b = (xstar >> i) & 1
        copath.append(children[1 - b])
        node = children[b]
    return PuncturedKey(key.n, xstar, tuple(copath))


def punctured_eval(pk: PuncturedKey, x: int) -> int:
    x = check_point(x, pk.n)
    diff = x ^ pk.punctured_point
    if diff == 0:
        raise PuncturedPointError(f"key is punctured at {x}")
    i = (diff & -diff).bit_length() - 1
    node = pk.copath[i]
    for j in range(i + 1, pk.n):
        node = _expand(node)[(x >> j) & 1]
    return node[-1] & 1


def punctured_table(pk: PuncturedKey) -> np.ndarray:
    """Values at every x != x* from the punctured key alone; the entry at x*
    is left as 2."""
    out = np.full(1 << pk.n, 2, dtype=np.uint8)
    for i, node in enumerate(pk.copath):
        # inputs agreeing with x* on bits < i and differing at bit i
        prefix = (pk.punctured_point & ((1 << i) - 1)) | ((1 - ((pk.punctured_point >> i) & 1)) << i)
        level = [node]
        for _ in range(i + 1, pk.n):
            pairs = [_expand(v) for v in level]
            level = [q[0] for q in pairs] + [q[1] for q in pairs]
        suffix = np.arange(len(level), dtype=np.int64) << (i + 1)
        out[prefix | suffix] = [v[-1] & 1 for v in level]
    return out


def prf_class(n: int) -> RepresentationClass:
    """2^n GGM functions keyed by the n-bit strings."""
    if n > PRF_CLASS_MAX_N:
        raise BudgetExceeded(f"prf_class limited to n <= {PRF_CLASS_MAX_N}")
    return RepresentationClass(n, "prf", (GgmKey.from_index(n, k) for k in range(1 << n)), name=f"prf-n{n}")
