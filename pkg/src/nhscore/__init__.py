"""Non-Hermiticity measures and right/left ensemble scores for small quantum models."""

from .operator_core import Operator, adjoint, frobenius_norm, operator_norm
from .spectral import BiorthogonalSystem, DefectiveMatrixError, diagonalize, propagator
from .measures import aggregate, hamiltonian_nonhermiticity, score, score_spectrum

__version__ = "0.1.0"

__all__ = [
    "Operator",
    "adjoint",
    "frobenius_norm",
    "operator_norm",
    "BiorthogonalSystem",
    "DefectiveMatrixError",
    "diagonalize",
    "propagator",
    "aggregate",
    "hamiltonian_nonhermiticity",
    "score",
    "score_spectrum",
]
