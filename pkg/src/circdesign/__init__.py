"""Universally optimal measures and efficient exact circular block designs
for neighbor-effect (interference) and crossover models."""
from .errors import CapExceeded, CircDesignError, NonConvergence, SingularInformation, ZeroInformation
from .evaluate import EfficiencyReport, efficiencies, information_matrix
from .exact import ExactDesign, ExactOptions, single_class_design, solve_exact, symmetrize
from .moments import CovarianceSpec, ModelKind, moment_table, sequence_moments
from .solver import (Certificate, Measure, SolverOptions, maximize_symmetric, minimax_envelope,
                     solve, symmetric_weights, verify_universal_optimality)

__all__ = [
    "CapExceeded", "CircDesignError", "NonConvergence", "SingularInformation", "ZeroInformation",
    "EfficiencyReport", "efficiencies", "information_matrix",
    "ExactDesign", "ExactOptions", "single_class_design", "solve_exact", "symmetrize",
    "CovarianceSpec", "ModelKind", "moment_table", "sequence_moments",
    "Certificate", "Measure", "SolverOptions", "maximize_symmetric", "minimax_envelope",
    "solve", "symmetric_weights", "verify_universal_optimality",
]
