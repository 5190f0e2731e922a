"""Adaptive lowest-order edge elements for the Maxwell cavity eigenproblem."""
from .adapt import AdaptRecord, LoopConfig, dorfler_mark, prolong, rate_fit, run_adaptive
from .eigensolve import EigenConfig, EigenPair, solve_smallest_positive
from .estimator import indicator_mixed, indicator_standard
from .fem import EdgeSpace, NodalSpace, assemble, discrete_gradient
from .mesh import Mesh, generate_cube, generate_fichera, refine
from .mixed import MixedSolution, to_mixed

__version__ = "0.1.0"
