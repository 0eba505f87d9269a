"""Reduced radial basis function method for parametric elliptic PDEs.

An RBF-FD collocation solver on scattered nodes serves as the truth
discretization; a greedy least-squares reduced basis with residual-based
native-space error bounds gives fast, certified parameter sweeps.
"""
from .kernels import Kernel
from .geometry import get_domain
from .nodes import NodeSet, build_stencils, select_nodes
from .rbffd import Discretization, local_weights, truth_solve
from .problems import get_case, get_problem
from .reduced import ReducedModel, TrainingSet, greedy_offline
from .harness import ExperimentConfig

__all__ = [
    "Kernel", "get_domain", "NodeSet", "build_stencils", "select_nodes", "Discretization",
    "local_weights", "truth_solve", "get_case", "get_problem", "ReducedModel", "TrainingSet",
    "greedy_offline", "ExperimentConfig",
]
__version__ = "0.1.0"
