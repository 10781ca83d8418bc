"""Neural-network optimal control of tumor-immune dynamics.

Controls are parameterized by a small MLP trained with exact
reverse-mode gradients of the discretized objective; a continuous
costate engine and a classical forward-backward sweep solver provide
independent verification of the first-order optimality conditions.
"""

__version__ = "0.1.0"

from .engine import DEFAULT_IMPL, HAVE_COMPILED
from .models import (ChemoCoupling, ControlBounds, ImmunoModel, ImmunoParams,
                     baseline_initial_state, baseline_params)
from .objective import CostBreakdown, ObjectiveWeights
from .optimize import TrainConfig, TrainResult, train
from .problems import ControlProblem, combo_problem, immuno_problem, lq_problem

__all__ = [
    "DEFAULT_IMPL", "HAVE_COMPILED", "ChemoCoupling", "ControlBounds",
    "ImmunoModel", "ImmunoParams", "baseline_initial_state", "baseline_params",
    "CostBreakdown", "ObjectiveWeights", "TrainConfig", "TrainResult", "train",
    "ControlProblem", "combo_problem", "immuno_problem", "lq_problem",
    "__version__",
]
