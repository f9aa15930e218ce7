"""Detection strategies.

Each defender class is called with a ``DefenderView``: the function and point
it must judge, the game parameters, an example oracle for the function, the
class description and (for the posterior-based defender) the exact input
distribution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    BooleanFunction,
    BudgetExceeded,
    ContractViolation,
    ExampleOracle,
    InputDistribution,
    RandomSource,
    RepresentationClass,
    SpecialCased,
    Verdict,
)
from .predictors import PredictorKind
from .trees import DepthDefenderParams, NodeCounter, tree_depth_defend

__all__ = [
    "Verdict",
    "VoteParams",
    "choose_vote_params",
    "majority_verdict",
    "majority_vote_defend",
    "Prior",
    "build_prior",
    "canonical_prior_exact",
    "subset_distribution",
    "labeling_entropy",
    "labeling_log_loss",
    "BoltzmannPosterior",
    "boltzmann_posterior",
    "boltzmann_defend",
    "trivial_accept_defend",
    "random_guess_defend",
    "DefenderView",
    "TrivialAccept",
    "RandomGuess",
    "MajorityVote",
    "Boltzmann",
    "TreeDepth",
    "SpecialCaseCheck",
]

MAX_ENTROPY_MEMBERS = 1 << 16
MAX_SUPPORT_SUBSETS = 1 << 16


@dataclass(frozen=True)
class VoteParams:
    m: int
    r: int

    def __post_init__(self):
        if self.m < 1 or self.r < 1 or self.r % 2 == 0:
            raise ContractViolation(f"need m >= 1 and odd r >= 1, got m={self.m}, r={self.r}")


def choose_vote_params(eps: float, delta: float) -> VoteParams:
    """m is the integer in (1/(5 eps), 1/(5 eps) + 1]; r is the least odd
    integer above 200 ln(1/delta)."""
    if not eps > 0:
        raise ContractViolation("eps must be positive")
    if not 0 < delta < 1:
        raise ContractViolation("delta must lie in (0, 1)")
    m = math.floor(1 / (5 * eps)) + 1
    r = math.floor(200 * math.log(1 / delta)) + 1
    if r % 2 == 0:
        r += 1
    return VoteParams(m, r)


def majority_verdict(predictions: Sequence[int], label: int) -> Verdict:
    """Rej iff strictly more than half of the votes disagree with ``label``."""
    predictions = np.asarray(predictions)
    wrong = int(np.count_nonzero(predictions != label))
    return Verdict.REJ if 2 * wrong > predictions.size else Verdict.ACC


def _vote_point_sets(oracle: ExampleOracle, r: int, k: int):
    """Draw r samples of k points; return distinct point sets and their counts."""
    D = oracle.D
    if k == 0:
        return [()], np.array([r])
    idx = oracle.sample_support_indices((r, k))
    if len(D.support) <= 63:
        masks = np.bitwise_or.reduce(np.left_shift(np.int64(1), idx.astype(np.int64)), axis=1)
        uniq, counts = np.unique(masks, return_counts=True)
        sets = [tuple(int(p) for p in D.support[[j for j in range(len(D.support)) if (int(u) >> j) & 1]]) for u in uniq]
        return sets, counts
    rows = {}
    for row in idx:
        key = tuple(sorted(set(int(p) for p in D.support[row])))
        rows[key] = rows.get(key, 0) + 1
    keys = sorted(rows)
    return keys, np.array([rows[k] for k in keys])


def majority_vote_defend(
    predictor: PredictorKind,
    params: VoteParams,
    fprime: BooleanFunction,
    xprime: int,
    oracle: ExampleOracle,
    rng: RandomSource,
) -> Verdict:
    """Runs the predictor on r independent samples of m-1 examples of f' and
    rejects iff a strict majority disagrees with f'(x').

    The predictors depend on a sample only through its set of distinct
    points (labels come from f'), so votes are grouped by that set.
    """
    pred = predictor.build()
    label = int(fprime(xprime))
    sets, counts = _vote_point_sets(oracle, params.r, params.m - 1)
    ones = pred.vote_ones(fprime, int(xprime), sets, counts, rng)
    wrong = ones if label == 0 else params.r - ones
    return Verdict.REJ if 2 * wrong > params.r else Verdict.ACC


# ---------------------------------------------------------------- priors


@dataclass(frozen=True, eq=False)
class Prior:
    kind: str
    cls: RepresentationClass
    weights: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        w = self.weights
        if w.shape != (len(self.cls),) or (w < 0).any() or abs(w.sum() - 1.0) > 1e-12:
            raise ContractViolation("prior weights must be a distribution over the class")


def subset_distribution(D: InputDistribution, m: int) -> dict[int, float]:
    """Law of the set of distinct points among m i.i.d. draws from D.

    Keys are bitmasks over ``D.support`` (bit j = support point j).
    """
    k = len(D.support)
    if 1 << k > MAX_SUPPORT_SUBSETS:
        raise BudgetExceeded(f"support of size {k} has too many subsets")
    p = D.support_mass
    dist = {0: 1.0}
    for _ in range(m):
        nxt: dict[int, float] = {}
        for mask, q in dist.items():
            for j in range(k):
                key = mask | (1 << j)
                nxt[key] = nxt.get(key, 0.0) + q * p[j]
        dist = nxt
    return dist


def _labeling_groups(cls: RepresentationClass, D: InputDistribution, m: int):
    """Per reachable point set U: its weight and each member's labeling id."""
    tables = cls.tables()[:, D.support]
    groups = []
    for mask, w in sorted(subset_distribution(D, m).items()):
        cols = [j for j in range(len(D.support)) if (mask >> j) & 1]
        if cols:
            _, ids = np.unique(tables[:, cols], axis=0, return_inverse=True)
            ids = ids.reshape(-1)
        else:
            ids = np.zeros(len(cls), dtype=np.int64)
        groups.append((mask, w, ids))
    return groups


def labeling_log_loss(weights: np.ndarray, groups) -> np.ndarray:
    """Per member f: E_U log 1/P(labeling of U agrees with f's)."""
    out = np.zeros(len(weights))
    for _, w, ids in groups:
        mass = np.bincount(ids, weights=weights)
        with np.errstate(divide="ignore"):
            out += w * -np.log(mass[ids])
    return out


def labeling_entropy(weights: np.ndarray, groups) -> float:
    """Expected entropy of the labeling a prior draw induces on the sample."""
    total = 0.0
    for _, w, ids in groups:
        mass = np.bincount(ids, weights=weights)
        mass = mass[mass > 0]
        total += w * float(-(mass * np.log(mass)).sum())
    return total


def _max_entropy_weights(groups, size: int, tol: float, max_steps: int):
    # Blahut-Arimoto: the labeling entropy is the information between a
    # member and (U, its labeling of U), a channel capacity problem
    w = np.full(size, 1.0 / size)
    prev = -np.inf
    steps = 0
    for steps in range(1, max_steps + 1):
        g = labeling_log_loss(w, groups)
        h = float(w @ g)
        if g.max() - h < tol or h - prev < 1e-9:
            break
        prev = h
        w = w * np.exp(g - g.max())
        w /= w.sum()
    return w, {"steps": steps, "entropy": labeling_entropy(w, groups)}


def canonical_prior_exact(cls: RepresentationClass, D: InputDistribution, m: int) -> np.ndarray:
    """Exact law of the canonical process: m points from D, a uniform
    realized labeling of them, then the lowest-index consistent member."""
    out = np.zeros(len(cls))
    for _, w, ids in _labeling_groups(cls, D, m):
        _, first = np.unique(ids, return_index=True)
        out[first] += w / first.size
    return out


def _canonical_prior_sampled(cls, D: InputDistribution, m: int, draws: int, rng: RandomSource) -> np.ndarray:
    tables = cls.tables()
    counts = np.zeros(len(cls))
    cache: dict[tuple, np.ndarray] = {}
    for _ in range(draws):
        pts = tuple(sorted(set(int(x) for x in D.sample(rng, m))))
        first = cache.get(pts)
        if first is None:
            _, first = np.unique(tables[:, list(pts)], axis=0, return_index=True)
            cache[pts] = first
        counts[first[int(rng.integers(0, first.size))]] += 1
    return counts / draws


def build_prior(
    kind: str,
    cls: RepresentationClass,
    D: InputDistribution,
    m: int,
    rng: RandomSource | None = None,
    *,
    draws: int = 10_000,
    tol: float = 1e-9,
    max_steps: int = 100_000,
) -> Prior:
    """``uniform``, ``canonical`` (empirical over ``draws`` process runs) or
    ``max-entropy`` (ascent until the duality gap is below ``tol`` or a step
    gains less than 1e-9 nats)."""
    size = len(cls)
    if kind == "uniform":
        return Prior(kind, cls, np.full(size, 1.0 / size))
    if kind == "canonical":
        if rng is None:
            raise ContractViolation("canonical prior needs a random source")
        w = _canonical_prior_sampled(cls, D, m, draws, rng)
        return Prior(kind, cls, w, {"draws": draws})
    if kind == "max-entropy":
        if size > MAX_ENTROPY_MEMBERS:
            raise BudgetExceeded(f"max-entropy prior limited to {MAX_ENTROPY_MEMBERS} members")
        w, info = _max_entropy_weights(_labeling_groups(cls, D, m), size, tol, max_steps)
        return Prior(kind, cls, w, info)
    raise ContractViolation(f"unknown prior kind {kind!r}")


# ---------------------------------------------------------------- posterior


@dataclass(frozen=True, eq=False)
class BoltzmannPosterior:
    base: Prior
    m: float
    center: BooleanFunction
    D: InputDistribution
    weights: np.ndarray
    log_normalizer: float
    distances: np.ndarray

    def expected_error(self) -> float:
        """E_{h ~ Q} |h - center|."""
        return float(self.weights @ self.distances)

    def disagreement(self, g: BooleanFunction) -> np.ndarray:
        """Per point x: Pr_{h ~ Q}[h(x) != g(x)]."""
        tables = self.base.cls.tables()
        return self.weights @ (tables != np.asarray(g.table())).astype(np.float64)


def member_distances(cls: RepresentationClass, g: BooleanFunction, D: InputDistribution) -> np.ndarray:
    s = D.support
    diff = cls.tables()[:, s] != np.asarray(g.table())[s]
    return diff.astype(np.float64) @ D.mass[s]


def boltzmann_posterior(prior: Prior, m: float, fprime: BooleanFunction, D: InputDistribution) -> BoltzmannPosterior:
    """Q(h) proportional to P(h) exp(-m |h - f'|), normalized in log space."""
    dist = member_distances(prior.cls, fprime, D)
    with np.errstate(divide="ignore"):
        logw = np.log(prior.weights) - m * dist
    top = logw.max()
    w = np.exp(logw - top)
    z = w.sum()
    return BoltzmannPosterior(prior, m, fprime, D, w / z, float(top + np.log(z)), dist)


def boltzmann_defend(posterior: BoltzmannPosterior, xprime: int, rng: RandomSource) -> Verdict:
    cdf = np.cumsum(posterior.weights)
    i = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), cdf.size - 1)
    h = posterior.base.cls[i]
    return Verdict.ACC if h(xprime) == posterior.center(xprime) else Verdict.REJ


def trivial_accept_defend() -> Verdict:
    return Verdict.ACC


def random_guess_defend(rng: RandomSource) -> Verdict:
    return Verdict.ACC if rng.bit() == 0 else Verdict.REJ


# ---------------------------------------------------------------- game-facing


@dataclass
class DefenderView:
    fprime: BooleanFunction
    xprime: int
    label: int
    eps: float
    delta: float
    oracle: ExampleOracle
    cls: RepresentationClass
    D: InputDistribution
    rng: RandomSource


class TrivialAccept:
    name = "trivial-accept"

    def __call__(self, view: DefenderView) -> Verdict:
        return trivial_accept_defend()


class RandomGuess:
    name = "random-guess"

    def __call__(self, view: DefenderView) -> Verdict:
        return random_guess_defend(view.rng)


class MajorityVote:
    """Majority vote over a predictor; parameters default to
    ``choose_vote_params(eps, delta)``."""

    def __init__(self, kind: str = "one-inclusion", params: VoteParams | None = None):
        self.kind = kind
        self.params = params
        self.name = f"majority-vote[{kind}]"

    def __call__(self, view: DefenderView) -> Verdict:
        params = self.params or choose_vote_params(view.eps, view.delta)
        return majority_vote_defend(PredictorKind(self.kind, view.cls), params, view.fprime, view.xprime, view.oracle, view.rng)


class Boltzmann:
    """Posterior sampling defender with exact knowledge of D.

    ``m`` defaults to ceil(1/eps). Priors and posteriors are cached per
    (class, D) and per received function.
    """

    def __init__(self, prior_kind: str = "uniform", m: float | None = None, *, prior_draws: int = 10_000):
        self.prior_kind = prior_kind
        self.m = m
        self.prior_draws = prior_draws
        self.name = f"boltzmann[{prior_kind}]"
        self._priors: dict = {}
        self._posteriors: dict = {}

    def inverse_temperature(self, eps: float) -> float:
        return self.m if self.m is not None else math.ceil(1 / eps)

    def prior(self, cls: RepresentationClass, D: InputDistribution, m: int) -> Prior:
        key = (id(cls), D.mass.tobytes(), m)
        found = self._priors.get(key)
        if found is None or found.cls is not cls:
            # the canonical prior's draws get a fixed stream so the prior is
            # the same whichever round builds it first
            found = build_prior(self.prior_kind, cls, D, int(m), RandomSource(0, 0, 7), draws=self.prior_draws)
            self._priors[key] = found
        return found

    def posterior(self, view: DefenderView) -> BoltzmannPosterior:
        m = self.inverse_temperature(view.eps)
        prior = self.prior(view.cls, view.D, m)
        key = (id(prior), view.fprime)
        found = self._posteriors.get(key)
        if found is None:
            found = boltzmann_posterior(prior, m, view.fprime, view.D)
            self._posteriors[key] = found
        return found

    def __call__(self, view: DefenderView) -> Verdict:
        return boltzmann_defend(self.posterior(view), view.xprime, view.rng)

    def __getstate__(self):
        state = dict(self.__dict__)
        state["_priors"], state["_posteriors"] = {}, {}
        return state


class TreeDepth:
    """Rejects iff the leaf reached by x' has uniform mass <= delta / s.

    Never queries the oracle. ``counter`` accumulates node visits.
    """

    def __init__(self, s: int, delta: float | None = None):
        self.s = s
        self.delta = delta
        self.name = "tree-depth"
        self.counter = NodeCounter()

    def __call__(self, view: DefenderView) -> Verdict:
        params = DepthDefenderParams(self.s, self.delta if self.delta is not None else view.delta)
        return tree_depth_defend(params, view.fprime, view.xprime, self.counter)


class SpecialCaseCheck:
    """For special-cased representations: rejects iff x' is the overridden
    point and the override changes the base value. With ``point_only`` it
    rejects whenever x' is the recorded point."""

    def __init__(self, point_only: bool = False):
        self.point_only = point_only
        self.name = "special-case-point" if point_only else "special-case-check"

    def __call__(self, view: DefenderView) -> Verdict:
        f = view.fprime
        if not isinstance(f, SpecialCased):
            return Verdict.ACC
        if view.xprime == f.point and (self.point_only or f.is_modified):
            return Verdict.REJ
        return Verdict.ACC
