"""Certified bounds on equilibrium probabilities of Markov population models."""

from .model import Model, TransitionClass, Invariant, parse_model, load_model, bundled_model_path, eval_poly, successors
from .polynomial import Polynomial

__version__ = "0.1.0"

__all__ = [
    "Model",
    "TransitionClass",
    "Invariant",
    "Polynomial",
    "parse_model",
    "load_model",
    "bundled_model_path",
    "eval_poly",
    "successors",
]
