"""Adaptive sparse Gaussian RBF network solver for nonlinear PDEs."""

from .collocation import CollocationSet, WeightMatrix, make_grid, make_random
from .kernel import FeatureJet, FeatureParams, eval_feature, feature_jet, sigma_reparam
from .network import KernelNode, RbfNetwork, SolutionJet, eval_jet
from .optimizer import (
    IterTrace,
    SolveReport,
    SolverConfig,
    SolverFault,
    continuation_solve,
    solve,
    time_march,
)
from .problems import PdeProblem, make_problem

__all__ = [
    "CollocationSet",
    "WeightMatrix",
    "make_grid",
    "make_random",
    "FeatureJet",
    "FeatureParams",
    "eval_feature",
    "feature_jet",
    "sigma_reparam",
    "KernelNode",
    "RbfNetwork",
    "SolutionJet",
    "eval_jet",
    "IterTrace",
    "SolveReport",
    "SolverConfig",
    "SolverFault",
    "continuation_solve",
    "solve",
    "time_march",
    "PdeProblem",
    "make_problem",
]

__version__ = "0.1.0"
