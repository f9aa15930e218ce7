import csv
import io
import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from backdoor_game.attackers import NearestFlipAttacker, RemovalAttacker, ShatteredAttacker, TreeGraftAttacker
from backdoor_game.core import ContractViolation, InputDistribution, RandomSource, Verdict, sparse_class
from backdoor_game.defenders import (
    Boltzmann,
    MajorityVote,
    Prior,
    RandomGuess,
    TreeDepth,
    TrivialAccept,
    boltzmann_posterior,
    build_prior,
    labeling_log_loss,
    _labeling_groups,
)
from backdoor_game.game import (
    CSV_COLUMNS,
    ConfidenceEstimate,
    GameConfig,
    average_case_confidence,
    bayes_optimal_win_probability,
    boltzmann_acceptance,
    boltzmann_failure_exact,
    estimate_confidence,
    estimate_row,
    exact_win_probability,
    play_round,
    rows_to_csv,
    write_transcripts,
)
from backdoor_game.stats import binomial_p_value, wilson_interval


def test_config_validation():
    with pytest.raises(ContractViolation):
        GameConfig(0)
    with pytest.raises(ContractViolation):
        GameConfig(0.1, trials=0)
    with pytest.raises(ContractViolation):
        GameConfig(0.1, mode="casual")
    with pytest.raises(ContractViolation):
        GameConfig(0.1, mode="average-case")


def test_win_rules():
    att = ShatteredAttacker(sparse_class(3, 2))
    transcripts = []
    estimate_confidence(att, RandomGuess(), GameConfig(Fraction(1, 8), trials=400, seed=2), transcripts=transcripts)
    for t in transcripts:
        if t.branch == "honest":
            assert t.win == (t.verdict is Verdict.ACC)
        else:
            assert t.xprime == t.xstar
            assert t.win == ((not t.valid) or t.verdict is Verdict.REJ)


def test_rounds_replay():
    att = ShatteredAttacker(sparse_class(3, 3))
    cfg = GameConfig(0.05, trials=50, seed=9)
    a, b = [], []
    estimate_confidence(att, MajorityVote(), cfg, transcripts=a)
    estimate_confidence(att, MajorityVote(), cfg, transcripts=b)
    assert [t.to_dict() for t in a] == [t.to_dict() for t in b]
    one = play_round(att, MajorityVote(), cfg, RandomSource(9, 7), 7)
    assert one.to_dict() == a[7].to_dict()


def test_workers_do_not_change_results():
    att = ShatteredAttacker(sparse_class(3, 2))
    cfg = GameConfig(0.05, trials=200, seed=4)
    assert estimate_confidence(att, Boltzmann(), cfg, workers=1) == estimate_confidence(att, Boltzmann(), cfg, workers=2)


def test_coin_is_fair_and_random_guess_is_half():
    att = ShatteredAttacker(sparse_class(3, 2))
    n = 4000
    est = estimate_confidence(att, RandomGuess(), GameConfig(0.01, trials=n, seed=1))
    assert abs(est.honest_rounds - n / 2) < 4 * math.sqrt(n / 4)
    assert est.oracle_calls == 0
    # random guessing wins 1/2 against valid backdoors and always against invalid ones
    valid = (att.d - 1) * 0.01
    p = 0.5 * 0.5 + 0.5 * (valid * 0.5 + (1 - valid))
    assert binomial_p_value(est.wins, n, p) > 1e-3


def test_monte_carlo_respects_bayes_ceiling():
    att = ShatteredAttacker(sparse_class(3, 3))
    eps = Fraction(1, 16)
    ceiling = float(bayes_optimal_win_probability(att, eps))
    for defender in (MajorityVote(), Boltzmann(), TrivialAccept()):
        est = estimate_confidence(att, defender, GameConfig(eps, trials=1500, seed=3))
        assert est.wilson95[0] <= ceiling


def test_never_valid_attacker_gives_ceiling_one():
    assert bayes_optimal_win_probability(RemovalAttacker(2), Fraction(1, 8)) == 1


def test_bayes_exceeds_any_fixed_acceptance():
    att = ShatteredAttacker(sparse_class(3, 2))
    eps = Fraction(1, 8)
    ceiling = bayes_optimal_win_probability(att, eps)
    rng = np.random.default_rng(0)
    for _ in range(20):
        table = {}

        def acc(g, x, D):
            return table.setdefault((g, x), Fraction(int(rng.integers(0, 3)), 2))

        assert exact_win_probability(att, eps, acc) <= ceiling


def test_average_case_with_point_prior():
    cls = sparse_class(3, 1)
    w = np.zeros(len(cls))
    w[4] = 1
    prior = Prior("point", cls, w)
    transcripts = []
    est = estimate_confidence(NearestFlipAttacker(cls), TrivialAccept(),
                              GameConfig(0.2, trials=100, seed=0, mode="average-case", prior=prior), transcripts=transcripts)
    assert all(t.f == cls[4] for t in transcripts)
    assert est == average_case_confidence(prior, TrivialAccept(), GameConfig(0.2, trials=100, seed=0))


def uniform(cls):
    return Prior("uniform", cls, np.full(len(cls), 1 / len(cls)))


@pytest.mark.parametrize("m", [2, 5, 9])
def test_average_case_boltzmann_bound(m):
    cls = sparse_class(3, 1)
    D = InputDistribution.uniform(3)
    eps = Fraction(1, 8)
    prior = uniform(cls)
    pprime = np.linspace(1, 2, len(cls))
    pprime /= pprime.sum()
    att = NearestFlipAttacker(cls, D)
    failure = 1 - float(exact_win_probability(att, eps, boltzmann_acceptance(prior, m), list(att.outcomes(eps, pprime))))
    avg_err = sum(p * boltzmann_posterior(prior, m, f, D).expected_error() for p, f in zip(pprime, cls))
    assert failure <= math.exp(m * float(eps)) * avg_err + 1e-12


def test_exact_boltzmann_matches_simulation():
    cls = sparse_class(3, 2)
    att = ShatteredAttacker(cls)
    eps = Fraction(1, 32)
    m = 32
    defender = Boltzmann("uniform", m)
    prior = defender.prior(cls, att.distribution(eps), m)
    exact = boltzmann_failure_exact(prior, m, att, eps)
    est = estimate_confidence(att, defender, GameConfig(eps, trials=3000, seed=12))
    assert binomial_p_value(est.wins, est.trials, 1 - exact) > 1e-3


@given(st.integers(0, 36), st.lists(st.floats(0.05, 1.0), min_size=37, max_size=37))
def test_posterior_error_shrinks_with_temperature_and_obeys_log_loss(i, raw):
    cls = sparse_class(3, 2)
    D = InputDistribution.from_support(3, {0: 2, 3: 1, 5: 1, 6: 3})
    prior = Prior("p", cls, np.array(raw) / sum(raw))
    errs = []
    for m in range(1, 9):
        err = boltzmann_posterior(prior, m, cls[i], D).expected_error()
        bound = labeling_log_loss(prior.weights, _labeling_groups(cls, D, m))[i] / m
        assert err <= bound + 1e-12
        errs.append(err)
    assert all(a >= b - 1e-15 for a, b in zip(errs, errs[1:]))


def test_tree_rounds_are_cheap_and_silent():
    att = TreeGraftAttacker(20, 64)
    defender = TreeDepth(64, 0.1)
    est = estimate_confidence(att, defender, GameConfig(1e-6, trials=300, seed=1))
    assert est.oracle_calls == 0 and est.wins >= 280


def test_transcripts_and_csv(tmp_path):
    att = ShatteredAttacker(sparse_class(3, 2))
    transcripts = []
    est = estimate_confidence(att, TrivialAccept(), GameConfig(Fraction(1, 8), trials=20, seed=1), transcripts=transcripts)
    path = tmp_path / "rounds.jsonl"
    write_transcripts(path, transcripts)
    lines = path.read_text().splitlines()
    assert len(lines) == 20
    first = json.loads(lines[0])
    assert set(first) >= {"trial", "seed", "D", "f", "xstar", "fstar", "valid", "branch", "xprime", "verdict", "win"}
    row = estimate_row("x", att.name, "trivial-accept", 3, 2, Fraction(1, 8), 0.1, est, note="hi")
    text = rows_to_csv([row])
    parsed = list(csv.DictReader(io.StringIO(text)))
    assert list(parsed[0])[: len(CSV_COLUMNS)] == list(CSV_COLUMNS)
    assert parsed[0]["eps"] == "1/8" and parsed[0]["note"] == "hi"
    assert float(parsed[0]["ci_lo"]) == pytest.approx(wilson_interval(est.wins, est.trials)[0])


def test_estimates_add():
    a, b = ConfidenceEstimate(3, 4, 1, 2, 2, 1, 5), ConfidenceEstimate(1, 2)
    assert a + b == ConfidenceEstimate(4, 6, 1, 2, 2, 1, 5)
    assert a.point == 0.75
