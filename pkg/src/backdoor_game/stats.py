"""Binomial interval helpers shared by the predictors and the game engine."""
from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.stats import binomtest


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    ci = binomtest(int(successes), int(trials)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class BinomialEstimate:
    count: int
    trials: int

    @property
    def point(self) -> float:
        return self.count / self.trials

    @property
    def wilson95(self) -> tuple[float, float]:
        return wilson_interval(self.count, self.trials)

    def sigma(self, p: float | None = None) -> float:
        """Standard error of the mean at ``p`` (default: the estimate)."""
        p = self.point if p is None else p
        return math.sqrt(max(p * (1 - p), 0.0) / self.trials)


def binomial_p_value(successes: int, trials: int, p: float) -> float:
    """Two-sided exact test of ``successes ~ Binomial(trials, p)``."""
    return float(binomtest(int(successes), int(trials), min(max(p, 0.0), 1.0)).pvalue)


def r_squared(y, y_hat) -> float:
    mean = sum(y) / len(y)
    ss_tot = sum((v - mean) ** 2 for v in y)
    ss_res = sum((v - w) ** 2 for v, w in zip(y, y_hat))
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
