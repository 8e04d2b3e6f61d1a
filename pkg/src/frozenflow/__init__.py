"""Frozen-flow integrators for SDEs on manifolds and the exotic-forest calculus behind their order conditions."""

from .forests import Forest, enumerate_forests, enumerate_trees, parse
from .geometry import Problem, frozen_flow
from .integrators import SchemeSpec, get_scheme, simulate, step_generic
from .kernels import BACKEND
from .order_theory import Tableau, exact_coeff, numerical_coeff, order_conditions, weak_order

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Forest",
    "Problem",
    "SchemeSpec",
    "Tableau",
    "enumerate_forests",
    "enumerate_trees",
    "exact_coeff",
    "frozen_flow",
    "get_scheme",
    "numerical_coeff",
    "order_conditions",
    "parse",
    "simulate",
    "step_generic",
    "weak_order",
]
