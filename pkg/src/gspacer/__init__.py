"""Safety model checker for linear-integer transition systems with
globally-guided lemma generalization (subsume / concretize / conjecture)."""

from .engine import (
    Engine,
    EngineConfig,
    Safe,
    SolveResult,
    TransitionSystem,
    Unknown,
    Unsafe,
    check_invariant,
)
from .frontend import Problem, load_problem, parse_problem

__all__ = [
    "Engine",
    "EngineConfig",
    "Problem",
    "Safe",
    "SolveResult",
    "TransitionSystem",
    "Unknown",
    "Unsafe",
    "check_invariant",
    "load_problem",
    "parse_problem",
]

__version__ = "0.1.0"
