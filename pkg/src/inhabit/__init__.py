"""Exhaustive type-inhabitation search for a small dependent type theory."""

from .core import Environment, LetBinding, Term, Typ, arity_of, proof_length
from .frontend import build_problem, parse_term
from .oracle import enumerate_bnel, oracle_check
from .search import SearchConfig, solve
from .wellformed import check_wellformed

__version__ = "0.1.0"

__all__ = [
    "Environment", "LetBinding", "Term", "Typ", "arity_of", "proof_length",
    "build_problem", "parse_term", "enumerate_bnel", "oracle_check",
    "SearchConfig", "solve", "check_wellformed", "__version__",
]
