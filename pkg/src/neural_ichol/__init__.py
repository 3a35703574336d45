"""Incomplete-Cholesky and trained sparse-factor preconditioners for CG."""

from .bench import MethodSpec, generate_laplacian, load_matrix, run_method, run_suite
from .factor import BreakdownError, ichol0
from .krylov import Preconditioner, SolveConfig, SolveReport, cg_solve
from .mmio import parse_matrix_market, write_matrix_market
from .neural import TrainConfig, TrainingError, train
from .sparse import CsrMatrix, LowerFactor, Permutation, rcm_order

__version__ = "0.1.0"

__all__ = [
    "BreakdownError",
    "CsrMatrix",
    "LowerFactor",
    "MethodSpec",
    "Permutation",
    "Preconditioner",
    "SolveConfig",
    "SolveReport",
    "TrainConfig",
    "TrainingError",
    "cg_solve",
    "generate_laplacian",
    "ichol0",
    "load_matrix",
    "parse_matrix_market",
    "rcm_order",
    "run_method",
    "run_suite",
    "train",
    "write_matrix_market",
]
