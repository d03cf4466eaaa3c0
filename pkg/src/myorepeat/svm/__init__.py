"""RBF support vector machines: SMO solver, one-vs-one reduction, grid search."""

from .grid import GridResult, GridSpec, grid_search, grid_search_many
from .kernel import RbfParams, rbf, rbf_matrix, squared_distances
from .ovo import OvoSvmModel, predict_ovo, train_ovo
from .smo import BinarySvmModel, SmoSolution, solve_dual, train_binary_smo

__all__ = [
    "BinarySvmModel", "GridResult", "GridSpec", "OvoSvmModel", "RbfParams", "SmoSolution",
    "grid_search", "grid_search_many", "predict_ovo", "rbf", "rbf_matrix", "solve_dual",
    "squared_distances", "train_binary_smo", "train_ovo",
]
