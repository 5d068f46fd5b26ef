"""Local polynomial regression with context-aware compound kernels."""
from ._backend import BACKEND
from .basis import MultiIndexSet, basis_size, design_matrix, eval_row
from .density import RobustnessSpec, conditional_density_weights
from .errors import *  # noqa: F401,F403
from .estimator import (
    Dataset,
    FittedModel,
    Hyperparameters,
    Prediction,
    QueryFit,
    adaptive_bandwidth,
    fit,
    fit_at,
    knn_predict,
    predict,
)
from .evaluation import SplitPlan, expand_grid, grid_search, make_splits, metrics, run_experiment
from .graphs import Graph, betweenness, bfs_hops, degree, diffuse, pagerank
from .kernels import CompoundKernelSpec, ContextFactorSpec, DistanceMetric, compound_weight, context_factor, distance
from .linalg import solve_spd

__version__ = "0.1.0"
