"""Bundle-level methods for convex optimization over boxes and simplices."""

from .core import (Box, Cut, CountingOracle, EntropyProx, EuclideanProx, FunctionOracle,
                   OracleEval, PieceBlock, RunTrace, Simplex, SmoothnessClass, StepPolicy,
                   default_prox, eval_bundle, prox_size_omega, step_alpha)

__version__ = "0.1.0"
