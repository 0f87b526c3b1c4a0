"""Deep Galerkin solver for the general Stokes equations on the unit square and cube."""

from .autodiff import ExtendedBlock, backward_params, forward_extended
from .errors import ConfigurationError, DomainError, NumericError
from .metrics import EvalGrid, cavity_metrics, err_l1, err_l2, eval_grid
from .network import Architecture, NetworkParams, forward, init_params, predict
from .objective import LossBreakdown, batch_objective, objective_gradient, point_loss
from .problem import StokesProblem, make_problem
from .sampler import Dataset, sample_dataset
from .trainer import TrainConfig, TrainHistory, train

__version__ = "0.1.0"

__all__ = [
    "Architecture", "ConfigurationError", "Dataset", "DomainError", "EvalGrid", "ExtendedBlock",
    "LossBreakdown", "NetworkParams", "NumericError", "StokesProblem", "TrainConfig",
    "TrainHistory", "backward_params", "batch_objective", "cavity_metrics", "err_l1", "err_l2",
    "eval_grid", "forward", "forward_extended", "init_params", "make_problem",
    "objective_gradient", "point_loss", "predict", "sample_dataset", "train",
]
