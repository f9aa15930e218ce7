"""Simulator for the backdoor defendability game between an attacker who
plants a trigger in a function and a defender who must spot it."""
from .core import (
    BudgetExceeded,
    ContractViolation,
    InputDistribution,
    RandomSource,
    RepresentationClass,
    TruthTable,
    Verdict,
)

__version__ = "0.1.0"

__all__ = [
    "BudgetExceeded",
    "ContractViolation",
    "InputDistribution",
    "RandomSource",
    "RepresentationClass",
    "TruthTable",
    "Verdict",
]
