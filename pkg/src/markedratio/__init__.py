"""Two-step marked ratio models for multivariate point processes with a common baseline."""
from .estimation import FitReport, QbeConfig, fit_qbe, fit_qmle
from .likelihood import EventDesign
from .model import CovariatePath, EventStream, InvalidInputError, ModelSpec, ParamSet
from .simulation import GroundTruth, example1, simulate_marked_process

__version__ = "0.1.0"

__all__ = [
    "CovariatePath", "EventDesign", "EventStream", "FitReport", "GroundTruth", "InvalidInputError",
    "ModelSpec", "ParamSet", "QbeConfig", "example1", "fit_qbe", "fit_qmle", "simulate_marked_process",
]
