"""Exact and Monte Carlo conditional probabilities of the fuzzy Potts model
on trees and on the complete graph."""

from .model import FuzzyMap, ModelError, ModelParams, fuzzy_project, validate

__version__ = "0.1.0"

__all__ = ["FuzzyMap", "ModelError", "ModelParams", "fuzzy_project", "validate", "__version__"]
