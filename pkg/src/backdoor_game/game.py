"""The defendability game: rounds, Monte Carlo estimates and exact oracles.

A round: the attacker commits to (D, f); x* ~ D; the attacker proposes f*; a
fair coin picks the honest pair (f, x ~ D) or the backdoor pair (f*, x*);
the defender sees the pair, eps, delta and Ex(f', D). It wins the honest
branch by accepting, and the backdoor branch by rejecting or whenever f* is
not an eps-valid backdoor.
"""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .attackers import Attacker, AttackUnavailable, NearestFlipAttacker
from .core import (
    BudgetExceeded,
    ContractViolation,
    ExampleOracle,
    InputDistribution,
    RandomSource,
    SpecialCased,
    TruthTable,
    Verdict,
    is_epsilon_valid,
)
from .defenders import BoltzmannPosterior, DefenderView, Prior, boltzmann_posterior
from .prf import GgmKey
from .stats import wilson_interval
from .trees import DecisionTree

MODES = ("standard", "rule-violation", "average-case")
EXACT_MAX_DIM = 4
CSV_COLUMNS = (
    "experiment-id", "attacker", "defender", "n", "d", "eps", "delta",
    "trials", "wins", "point", "ci_lo", "ci_hi",
)


@dataclass(frozen=True, eq=False)
class GameConfig:
    eps: float | Fraction
    delta: float = 0.1
    trials: int = 1000
    seed: int = 0
    mode: str = "standard"
    prior: Prior | None = None

    def __post_init__(self):
        if not self.eps > 0:
            raise ContractViolation("eps must be positive")
        if self.trials < 1:
            raise ContractViolation("trials must be >= 1")
        if self.mode not in MODES:
            raise ContractViolation(f"mode must be one of {MODES}")
        if self.mode == "average-case" and self.prior is None:
            raise ContractViolation("average-case mode needs a prior over f")


def describe(f) -> object:
    """JSON-friendly description of a representation."""
    if f is None:
        return None
    if isinstance(f, TruthTable):
        return {"table": f.to_hex()}
    if isinstance(f, DecisionTree):
        return {"tree": f.to_text()}
    if isinstance(f, GgmKey):
        return {"ggm": f.to_hex()}
    if isinstance(f, SpecialCased):
        return {"base": describe(f.base), "point": f.point, "value": f.value}
    return {"repr": repr(f)}


@dataclass(frozen=True, eq=False)
class RoundTranscript:
    trial: int
    seed: int
    D: InputDistribution | None
    f: object
    xstar: int | None
    fstar: object
    valid: bool
    branch: str | None
    xprime: int | None
    verdict: Verdict | None
    win: bool
    oracle_calls: int = 0
    skipped: str | None = None

    def to_dict(self) -> dict:
        D = None
        if self.D is not None:
            D = {"support": self.D.support.tolist(), "mass": self.D.mass[self.D.support].tolist()}
        return {
            "trial": self.trial,
            "seed": self.seed,
            "D": D,
            "f": describe(self.f),
            "xstar": self.xstar,
            "fstar": describe(self.fstar),
            "valid": self.valid,
            "branch": self.branch,
            "xprime": self.xprime,
            "verdict": None if self.verdict is None else self.verdict.value,
            "win": self.win,
            "oracle_calls": self.oracle_calls,
            "skipped": self.skipped,
        }


def write_transcripts(path, transcripts) -> None:
    with open(path, "w") as fh:
        for t in transcripts:
            fh.write(json.dumps(t.to_dict(), sort_keys=True) + "\n")


def play_round(attacker: Attacker, defender, config: GameConfig, rng: RandomSource, trial: int = 0) -> RoundTranscript:
    if attacker.rule_violation and config.mode != "rule-violation":
        raise ContractViolation(f"{attacker.name} picks f after the trigger; only allowed in rule-violation mode")
    f = None
    if config.mode == "average-case":
        w = config.prior.weights
        f = config.prior.cls[int(rng.gen.choice(w.size, p=w))]
    try:
        setup = attacker.setup(config.eps, rng.child(1), f=f)
        D = setup.D
        xstar = D.sample(rng)
        proposal = attacker.backdoor(setup, xstar, rng.child(2))
    except AttackUnavailable as exc:
        return RoundTranscript(trial, config.seed, None, None, None, None, False, None, None, None, False, skipped=str(exc))
    f = setup.f if setup.f is not None else proposal.f
    fstar = proposal.fstar
    valid = fstar in attacker.cls and is_epsilon_valid(f, fstar, D, config.eps, xstar)
    if proposal.claimed_valid and not valid:
        raise ContractViolation(f"{attacker.name} claimed an invalid backdoor as valid")
    if rng.bit() == 0:
        branch, fprime, xprime = "honest", f, D.sample(rng)
    else:
        branch, fprime, xprime = "backdoor", fstar, xstar
    oracle = ExampleOracle(fprime, D, rng.child(3))
    view = DefenderView(fprime, xprime, int(fprime(xprime)), config.eps, config.delta, oracle, attacker.cls, D, rng.child(4))
    verdict = defender(view)
    if branch == "honest":
        win = verdict is Verdict.ACC
    else:
        win = (not valid) or verdict is Verdict.REJ
    return RoundTranscript(trial, config.seed, D, f, xstar, fstar, valid, branch, xprime, verdict, win, oracle.calls)


@dataclass(frozen=True)
class ConfidenceEstimate:
    wins: int
    trials: int
    skipped: int = 0
    honest_rounds: int = 0
    honest_wins: int = 0
    valid_backdoors: int = 0
    oracle_calls: int = 0

    @property
    def point(self) -> float:
        return self.wins / self.trials

    @property
    def wilson95(self) -> tuple[float, float]:
        return wilson_interval(self.wins, self.trials)

    def __add__(self, other: "ConfidenceEstimate") -> "ConfidenceEstimate":
        return ConfidenceEstimate(*(a + b for a, b in zip(self._fields(), other._fields())))

    def _fields(self):
        return (self.wins, self.trials, self.skipped, self.honest_rounds, self.honest_wins, self.valid_backdoors, self.oracle_calls)


def _tally(transcripts) -> ConfidenceEstimate:
    counts = [0] * 7
    for t in transcripts:
        if t.skipped is not None:
            counts[2] += 1
            continue
        counts[0] += t.win
        counts[1] += 1
        if t.branch == "honest":
            counts[3] += 1
            counts[4] += t.win
        counts[5] += t.valid
        counts[6] += t.oracle_calls
    return ConfidenceEstimate(*counts)


def _run_trials(attacker, defender, config: GameConfig, lo: int, hi: int, keep: bool):
    out = []
    for t in range(lo, hi):
        out.append(play_round(attacker, defender, config, RandomSource(config.seed, t), t))
    return _tally(out), (out if keep else None)


def estimate_confidence(attacker: Attacker, defender, config: GameConfig, *, workers: int = 1, transcripts: list | None = None) -> ConfidenceEstimate:
    """Plays ``config.trials`` rounds, round t on stream t of ``config.seed``.

    Results do not depend on ``workers``. Skipped rounds (attack unavailable)
    are counted separately and excluded from ``trials``.
    """
    keep = transcripts is not None
    if workers <= 1 or config.trials < 2 * workers:
        total, rounds = _run_trials(attacker, defender, config, 0, config.trials, keep)
        chunks = [rounds]
    else:
        bounds = np.linspace(0, config.trials, 4 * workers + 1).astype(int)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_run_trials, attacker, defender, config, int(a), int(b), keep)
                for a, b in zip(bounds[:-1], bounds[1:])
                if b > a
            ]
            results = [fut.result() for fut in futures]
        total = ConfidenceEstimate(0, 0)
        for part, _ in results:
            total = total + part
        chunks = [r for _, r in results]
    if keep:
        for rounds in chunks:
            transcripts.extend(rounds)
    if total.trials == 0:
        raise AttackUnavailable(f"every round skipped for {attacker.name}")
    return total


def average_case_confidence(prior: Prior, defender, config: GameConfig, attacker: Attacker | None = None, *, workers: int = 1) -> ConfidenceEstimate:
    """f ~ prior each round; the attacker (default: nearest flip under the
    uniform distribution) only picks f*."""
    if attacker is None:
        attacker = NearestFlipAttacker(prior.cls)
    cfg = GameConfig(config.eps, config.delta, config.trials, config.seed, "average-case", prior)
    return estimate_confidence(attacker, defender, cfg, workers=workers)


# ---------------------------------------------------------------- exact oracles


def _exact_outcomes(attacker: Attacker, eps, outcomes):
    if attacker.cls.n > EXACT_MAX_DIM:
        raise BudgetExceeded(f"exact oracles are limited to n <= {EXACT_MAX_DIM}")
    return list(attacker.outcomes(eps) if outcomes is None else outcomes)


def _validity(attacker, eps):
    cache = {}

    def valid(f, fstar, D, xstar):
        key = (f, fstar, id(D), xstar)
        if key not in cache:
            cache[key] = fstar in attacker.cls and is_epsilon_valid(f, fstar, D, eps, xstar)
        return cache[key]

    return valid


def bayes_optimal_win_probability(attacker: Attacker, eps, outcomes=None) -> Fraction:
    """Win probability of the best defender, by enumeration: the honest and
    valid-backdoor joint laws of (f', x') are compared pointwise, and invalid
    backdoors are free wins.

    Pass ``eps`` as a Fraction for fully exact arithmetic.
    """
    valid = _validity(attacker, eps)
    honest: dict = {}
    backdoor: dict = {}
    invalid = Fraction(0)
    for w, D, f, xstar, fstar in _exact_outcomes(attacker, eps, outcomes):
        ex = D.exact()
        for x in D.support:
            key = (f, int(x))
            honest[key] = honest.get(key, 0) + w * ex[x]
        if valid(f, fstar, D, xstar):
            key = (fstar, xstar)
            backdoor[key] = backdoor.get(key, 0) + w
        else:
            invalid += w
    best = sum((max(p, backdoor.get(k, 0)) for k, p in honest.items()), Fraction(0))
    best += sum((p for k, p in backdoor.items() if k not in honest), Fraction(0))
    return (best + invalid) / 2


def exact_win_probability(attacker: Attacker, eps, acceptance, outcomes=None):
    """Win probability of a defender whose verdict depends only on (f', x'):
    ``acceptance(g, x, D)`` is its probability of answering Acc."""
    valid = _validity(attacker, eps)
    total = Fraction(0)
    for w, D, f, xstar, fstar in _exact_outcomes(attacker, eps, outcomes):
        ex = D.exact()
        honest = sum((ex[x] * acceptance(f, int(x), D) for x in D.support), Fraction(0))
        back = 1 if not valid(f, fstar, D, xstar) else 1 - acceptance(fstar, xstar, D)
        total += w * (honest + back) / 2
    return total


def boltzmann_acceptance(prior: Prior, m: float):
    """Acceptance function of the Boltzmann defender for ``exact_win_probability``."""
    cache: dict = {}

    def acceptance(g, x, D):
        key = (g, D.mass.tobytes())
        post: BoltzmannPosterior | None = cache.get(key)
        if post is None:
            post = cache[key] = boltzmann_posterior(prior, m, g, D)
        return 1.0 - float(post.disagreement(g)[x])

    return acceptance


def boltzmann_failure_exact(prior: Prior, m: float, attacker: Attacker, eps, outcomes=None) -> float:
    """1 - exact win probability of the Boltzmann defender (float weights)."""
    return 1.0 - float(exact_win_probability(attacker, eps, boltzmann_acceptance(prior, m), outcomes))


# ---------------------------------------------------------------- reporting


def estimate_row(experiment_id: str, attacker: str, defender: str, n: int, d, eps, delta, est: ConfidenceEstimate, **extra) -> dict:
    lo, hi = est.wilson95
    row = {
        "experiment-id": experiment_id,
        "attacker": attacker,
        "defender": defender,
        "n": n,
        "d": "" if d is None else d,
        "eps": eps,
        "delta": delta,
        "trials": est.trials,
        "wins": est.wins,
        "point": round(est.point, 12),
        "ci_lo": round(lo, 12),
        "ci_hi": round(hi, 12),
    }
    row.update(extra)
    return row


def rows_to_csv(rows: list[dict]) -> str:
    extras = []
    for row in rows:
        for k in row:
            if k not in CSV_COLUMNS and k not in extras:
                extras.append(k)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(CSV_COLUMNS) + extras, lineterminator="\n", restval="")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()
