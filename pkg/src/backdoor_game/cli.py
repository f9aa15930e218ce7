"""Command line runner: ``backdoor-game run CONFIG`` and ``backdoor-game list-fixtures``.

Configs are JSON objects with ``"version": 1`` and an ``"experiment"`` key.
Each run writes ``results.csv`` and ``summary.json`` to the output directory
and prints one PASS/FAIL line per check it covers.

Exit codes: 0 all checks pass, 1 some check failed, 2 config error,
3 budget error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .attackers import (
    NearestFlipAttacker,
    RemovalAttacker,
    ShatteredAttacker,
    SpecialCaseAttacker,
    TreeGraftAttacker,
)
from .core import (
    BudgetExceeded,
    ContractViolation,
    InputDistribution,
    indicator_class,
    pairwise_distances,
    point_from_bits,
    sparse_class,
)
from .defenders import Boltzmann, MajorityVote, RandomGuess, TreeDepth, TrivialAccept
from .game import (
    GameConfig,
    bayes_optimal_win_probability,
    boltzmann_failure_exact,
    estimate_confidence,
    estimate_row,
    rows_to_csv,
)
from .prf import PRF_CLASS_MAX_N, prf_class
from .stats import binomial_p_value, r_squared
from .trees import FIGURE3_TEXT, NodeCounter, figure3_tree, key_claim_terms, tree_evaluate
from .vc import vc_dimension

EXPERIMENTS = ("theorem1-sweep", "boltzmann-sweep", "tree-defense", "separation", "oracle-check")
WORKERS_ENV = "BACKDOOR_GAME_WORKERS"
SPARSE_MEMBER_LIMIT = 1 << 20


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- validation


def _get(cfg: dict, key: str, kind, default=None, required=False):
    if key not in cfg:
        if required:
            raise ConfigError(f"missing required field {key!r}")
        return default
    value = cfg[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is int and isinstance(value, bool) or not isinstance(value, kind):
        raise ConfigError(f"field {key!r} must be {kind.__name__}")
    return value


def _eps_value(raw):
    if isinstance(raw, str):
        try:
            return Fraction(raw)
        except ValueError:
            raise ConfigError(f"eps {raw!r} is not a number") from None
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return raw
    raise ConfigError("eps must be a number or a fraction string")


def _eps_list(cfg: dict) -> list:
    raw = cfg.get("eps")
    if raw is None:
        raise ConfigError("missing required field 'eps'")
    values = [_eps_value(e) for e in (raw if isinstance(raw, list) else [raw])]
    if not values:
        raise ConfigError("eps list is empty")
    for e in values:
        if not e > 0:
            raise ConfigError(f"eps must be > 0, got {e}")
    return values


def _delta(cfg: dict) -> float:
    delta = _get(cfg, "delta", float, 0.1)
    if not 0 < delta < 1:
        raise ConfigError(f"delta must satisfy 0 < delta < 1, got {delta}")
    return delta


def _trials(cfg: dict, default: int) -> int:
    trials = _get(cfg, "trials", int, default)
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    return trials


def _sparse_size(n: int, d: int) -> int:
    return sum(math.comb(1 << n, j) for j in range(d + 1))


def validate(cfg) -> dict:
    """Checks a parsed config and returns it with defaults filled in."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if cfg.get("version") != 1:
        raise ConfigError("config 'version' must be 1")
    exp = cfg.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"'experiment' must be one of {', '.join(EXPERIMENTS)}")
    out = {"version": 1, "experiment": exp, "seed": _get(cfg, "seed", int, 0)}
    if not 0 <= out["seed"] < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    out["id"] = _get(cfg, "id", str, exp)
    if exp == "theorem1-sweep":
        n = _get(cfg, "n", int, 3)
        ds = cfg.get("d", [2, 4, 8])
        ds = ds if isinstance(ds, list) else [ds]
        for d in ds:
            if not isinstance(d, int) or d < 2:
                raise ConfigError(f"d must be an integer >= 2 (the attack needs d >= 2), got {d!r}")
            if d > 1 << n:
                raise ConfigError(f"d={d} exceeds 2^n={1 << n} points")
        defenders = cfg.get("defenders", ["majority-vote", "boltzmann", "random-guess", "trivial-accept"])
        for name in defenders:
            if name not in DEFENDER_FACTORIES:
                raise ConfigError(f"unknown defender {name!r}")
        out.update(n=n, d=ds, eps=_eps_list(cfg), delta=_delta(cfg), trials=_trials(cfg, 10_000), defenders=defenders)
    elif exp == "boltzmann-sweep":
        n = _get(cfg, "n", int, 3)
        d = _get(cfg, "d", int, 2)
        if d < 2 or d > 1 << n:
            raise ConfigError(f"d must satisfy 2 <= d <= 2^n, got {d}")
        eps = _eps_list(cfg)
        for e in eps:
            if e > Fraction(1, 2 * d):
                raise ConfigError(f"eps={e} violates eps <= 1/(2d) = {1 / (2 * d):.4g}")
        prior = _get(cfg, "prior", str, "uniform")
        if prior not in ("uniform", "max-entropy", "canonical"):
            raise ConfigError("prior must be uniform, max-entropy or canonical")
        out.update(n=n, d=d, eps=eps, delta=_delta(cfg), trials=_trials(cfg, 2000), prior=prior)
    elif exp == "tree-defense":
        n = _get(cfg, "n", int, 20)
        s = _get(cfg, "s", int, 64)
        delta = _delta(cfg)
        eps = _eps_list(cfg)
        if not 1 <= n <= 20:
            raise ConfigError("n must satisfy 1 <= n <= 20")
        if s < 2:
            raise ConfigError("size bound s must be >= 2")
        bound = (delta / s) ** 2
        for e in eps:
            if not e < bound:
                raise ConfigError(f"eps={e} violates eps < delta^2/s^2 = {bound:.4g}")
        out.update(n=n, s=s, eps=eps, delta=delta, trials=_trials(cfg, 10_000))
    elif exp == "separation":
        n = _get(cfg, "n", int, 10)
        if n < 1:
            raise ConfigError("n must be >= 1")
        out.update(n=n, eps=_eps_list(cfg), delta=_delta(cfg), trials=_trials(cfg, 10_000))
    else:
        n = _get(cfg, "n", int, 3)
        if not 2 <= n <= 4:
            raise ConfigError("oracle-check needs 2 <= n <= 4")
        out.update(n=n, eps=_eps_list(cfg))
    return out


# ---------------------------------------------------------------- experiments

DEFENDER_FACTORIES = {
    "majority-vote": lambda: MajorityVote("one-inclusion"),
    "majority-vote-erm": lambda: MajorityVote("erm"),
    "boltzmann": lambda: Boltzmann("uniform"),
    "random-guess": RandomGuess,
    "trivial-accept": TrivialAccept,
}


class Check:
    def __init__(self, name: str, passed: bool, detail: str):
        self.name, self.passed, self.detail = name, bool(passed), detail

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


def _fmt(x) -> str:
    return str(x) if isinstance(x, Fraction) else f"{x:.6g}"


def run_vc_sweep(cfg, workers):
    rows, checks = [], []
    for d in cfg["d"]:
        if _sparse_size(cfg["n"], d) > SPARSE_MEMBER_LIMIT:
            raise BudgetExceeded(f"class with at most {d} ones on n={cfg['n']} is too large")
        attacker = ShatteredAttacker(sparse_class(cfg["n"], d))
        for eps in cfg["eps"]:
            lower = max(0.5, 1 - 15 * d * float(eps))
            upper = max(0.5, 1 - (d - 1) * float(eps) / 2)
            for name in cfg["defenders"]:
                est = estimate_confidence(
                    attacker, DEFENDER_FACTORIES[name](), GameConfig(eps, cfg["delta"], cfg["trials"], cfg["seed"]), workers=workers
                )
                lo, hi = est.wilson95
                in_regime = d * float(eps) <= 1 / 30
                row = estimate_row(cfg["id"], attacker.name, name, cfg["n"], d, eps, cfg["delta"], est,
                                   lower_bound=round(lower, 12), upper_bound=round(upper, 12),
                                   lower_check="" if not (in_regime and name.startswith("majority")) else ("pass" if hi >= lower else "fail"),
                                   upper_check="pass" if lo <= upper else "fail")
                rows.append(row)
                tag = f"d={d} eps={_fmt(eps)} {name}"
                if row["lower_check"]:
                    checks.append(Check(f"defense-lower {tag}", hi >= lower, f"ci_hi={hi:.5f} >= {lower:.5f}"))
                checks.append(Check(f"attack-upper {tag}", lo <= upper, f"ci_lo={lo:.5f} <= {upper:.5f}"))
    return rows, checks, {}


def run_boltzmann(cfg, workers):
    cls = sparse_class(cfg["n"], cfg["d"])
    attacker = ShatteredAttacker(cls)
    d = attacker.d
    rows, checks, xs, ys = [], [], [], []
    for eps in cfg["eps"]:
        m = math.ceil(1 / float(eps))
        D = attacker.distribution(eps)
        defender = Boltzmann(cfg["prior"], m)
        prior = defender.prior(cls, D, m)
        exact = boltzmann_failure_exact(prior, m, attacker, eps)
        est = estimate_confidence(attacker, defender, GameConfig(eps, cfg["delta"], cfg["trials"], cfg["seed"]), workers=workers)
        lo, hi = est.wilson95
        rows.append(estimate_row(cfg["id"], attacker.name, defender.name, cfg["n"], d, eps, cfg["delta"], est,
                                 m=m, exact_failure=round(exact, 12)))
        pval = binomial_p_value(est.wins, est.trials, 1 - exact)
        checks.append(Check(f"boltzmann-exact eps={_fmt(eps)}", pval >= 1e-3,
                            f"{est.wins}/{est.trials} wins vs exact {1 - exact:.5f}, p={pval:.3g}"))
        xs.append(d * float(eps) * math.log(1 / (d * float(eps))))
        ys.append(exact)
    extra = {}
    if len(xs) >= 2:
        c = float(np.dot(xs, ys) / np.dot(xs, xs))
        r2 = r_squared(ys, [c * x for x in xs])
        extra = {"shape_constant": c, "shape_r2": r2}
        checks.append(Check("boltzmann-shape", r2 >= 0.9, f"failure ~ c*d*eps*log(1/(d*eps)), c={c:.4g}, R^2={r2:.4f}"))
    return rows, checks, extra


def run_tree(cfg, workers):
    attacker = TreeGraftAttacker(cfg["n"], cfg["s"])
    rows, checks = [], []
    for eps in cfg["eps"]:
        defender = TreeDepth(cfg["s"], cfg["delta"])
        transcripts: list = []
        est = estimate_confidence(attacker, defender, GameConfig(eps, cfg["delta"], cfg["trials"], cfg["seed"]), workers=workers, transcripts=transcripts)
        violations = 0
        eval_counter = NodeCounter()
        for t in transcripts:
            if t.skipped is None:
                tree_evaluate(t.fstar if t.branch == "backdoor" else t.f, t.xprime, eval_counter)
            if t.valid:
                low, overlap = key_claim_terms(t.f, t.fstar, t.xstar)
                violations += not (low <= overlap <= eps)
        ratio = defender.counter.visits / max(eval_counter.visits, 1)
        lo, hi = est.wilson95
        rows.append(estimate_row(cfg["id"], attacker.name, defender.name, cfg["n"], None, eps, cfg["delta"], est,
                                 s=cfg["s"], oracle_calls=est.oracle_calls, key_claim_violations=violations,
                                 cost_ratio=round(ratio, 6), skipped=est.skipped))
        tag = f"eps={_fmt(eps)}"
        checks.append(Check(f"tree-confidence {tag}", hi >= 1 - cfg["delta"], f"ci_hi={hi:.5f} >= {1 - cfg['delta']:.3f}"))
        checks.append(Check(f"tree-oracle-calls {tag}", est.oracle_calls == 0, f"{est.oracle_calls} oracle calls"))
        checks.append(Check(f"tree-cost {tag}", ratio <= 3, f"defender/evaluation node visits = {ratio:.3f}"))
        checks.append(Check(f"tree-key-claim {tag}", violations == 0, f"{violations} violations"))
    return rows, checks, {}


def run_separation(cfg, workers):
    if cfg["n"] > PRF_CLASS_MAX_N:
        raise BudgetExceeded(f"separation enumerates 2^n keys; n <= {PRF_CLASS_MAX_N}")
    cls = prf_class(cfg["n"])
    D = InputDistribution.uniform(cfg["n"])
    dist = pairwise_distances(cls, D)
    off = dist[~np.eye(len(cls), dtype=bool)]
    min_d = float(off.min())
    attacker = NearestFlipAttacker(cls, D, name="random-class")
    rows, checks = [], []
    for eps in cfg["eps"]:
        est = estimate_confidence(attacker, TrivialAccept(), GameConfig(eps, cfg["delta"], cfg["trials"], cfg["seed"]), workers=workers)
        rows.append(estimate_row(cfg["id"], attacker.name, "trivial-accept", cfg["n"], None, eps, cfg["delta"], est,
                                 min_distance=round(min_d, 12), valid_backdoors=est.valid_backdoors))
        tag = f"n={cfg['n']} eps={_fmt(eps)}"
        checks.append(Check(f"separation-scan {tag}", min_d > eps, f"min pairwise distance {min_d:.5f} > {_fmt(eps)}"))
        checks.append(Check(f"separation-trivial {tag}", est.wins == est.trials, f"{est.wins}/{est.trials} wins"))
    return rows, checks, {"min_distance": min_d, "max_distance": float(off.max())}


def run_oracle(cfg, workers):
    n = cfg["n"]
    rows, checks = [], []
    attackers = [RemovalAttacker(n), ShatteredAttacker(sparse_class(n, 3))]
    attackers.append(SpecialCaseAttacker(prf_class(n)))
    for eps in cfg["eps"]:
        exact_eps = Fraction(eps)
        for attacker in attackers:
            value = bayes_optimal_win_probability(attacker, exact_eps)
            rows.append({"experiment-id": cfg["id"], "attacker": attacker.name, "defender": "bayes-optimal",
                         "n": n, "d": getattr(attacker, "d", ""), "eps": eps, "delta": "", "trials": 0, "wins": "",
                         "point": round(float(value), 12), "ci_lo": round(float(value), 12),
                         "ci_hi": round(float(value), 12), "exact": str(value)})
            if attacker.name == "removal" and exact_eps >= Fraction(2, 1 << n):
                checks.append(Check(f"removal-bayes eps={_fmt(eps)}", value == Fraction(1, 2), f"exact value {value}"))
            if attacker.name == "shattered":
                bound = max(Fraction(1, 2), 1 - (attacker.d - 1) * exact_eps / 2)
                checks.append(Check(f"shattered-bayes eps={_fmt(eps)}", value <= bound, f"exact value {value} <= {bound}"))
    return rows, checks, {}


RUNNERS = {
    "theorem1-sweep": run_vc_sweep,
    "boltzmann-sweep": run_boltzmann,
    "tree-defense": run_tree,
    "separation": run_separation,
    "oracle-check": run_oracle,
}


def _jsonable(value):
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_jsonable(v) for v in value]
    return value


def run(config_path, output: str | None = None, out=sys.stdout) -> int:
    try:
        with open(config_path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        print(f"config error: cannot read {config_path}: {exc.strerror}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"config error: invalid JSON: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = validate(raw)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    outdir = Path(output or raw.get("output") or Path(config_path).with_suffix("").name + "-results")
    workers = max(1, int(os.environ.get(WORKERS_ENV, "1") or 1))
    try:
        rows, checks, extra = RUNNERS[cfg["experiment"]](cfg, workers)
    except BudgetExceeded as exc:
        print(f"budget error: {exc}", file=sys.stderr)
        return 3
    except ContractViolation as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "results.csv").write_text(rows_to_csv(rows))
    summary = {
        "experiment": cfg["experiment"],
        "config": _jsonable(cfg),
        "rows": len(rows),
        "checks": [c.to_dict() for c in checks],
        **_jsonable(extra),
    }
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for c in checks:
        print(c.line(), file=out)
    return 0 if all(c.passed for c in checks) else 1


# ---------------------------------------------------------------- fixtures


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def fixtures() -> list[dict]:
    items = []
    tree = figure3_tree()
    items.append({
        "name": "figure3-tree",
        "content": FIGURE3_TEXT,
        "note": f"n=4, f(0110)={tree(point_from_bits('0110'))}, size={tree.size}",
    })
    ind = indicator_class(3)
    items.append({
        "name": "indicator-class-n3",
        "content": " ".join(f.to_hex() for f in ind),
        "note": f"{len(ind)} members, vc={vc_dimension(ind)}",
    })
    for k in (2, 3, 4):
        cls = sparse_class(3, k)
        d, w = vc_dimension(cls, with_witness=True)
        body = ";".join(
            f"{''.join(map(str, lab))}:{cls[w.realizer(lab)].to_hex()}" for lab in w.labelings()
        )
        items.append({
            "name": f"shattering-witness-sparse-n3-k{k}",
            "content": f"points={list(w.points)} {body}",
            "note": f"{len(cls)} members, vc={d}",
        })
    for item in items:
        item["sha256"] = _digest(item["content"])
    return items


def list_fixtures(out=sys.stdout, as_json: bool = False) -> int:
    items = fixtures()
    if as_json:
        print(json.dumps(items, indent=2, sort_keys=True), file=out)
        return 0
    for item in items:
        print(f"{item['name']:<36} {item['sha256'][:16]}  {item['note']}", file=out)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="backdoor-game", description="Backdoor defendability game experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("-o", "--output", help="output directory (overrides the config's 'output')")
    p_fix = sub.add_parser("list-fixtures", help="print the named fixtures and their hashes")
    p_fix.add_argument("--json", action="store_true")
    args = parser.parse_args(argv)
    if args.command == "run":
        return run(args.config, args.output)
    return list_fixtures(as_json=args.json)


if __name__ == "__main__":
    sys.exit(main())
