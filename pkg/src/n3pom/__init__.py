"""Neural-network non-proportional odds model for continuous ordinal regression."""

from .core import (
    CoefficientNet,
    InterceptParams,
    N3pomModel,
    eval_a,
    eval_a_deriv,
    eval_b,
    eval_b_deriv,
    eval_ccp,
    eval_cpd,
    eval_f,
    eval_f_deriv,
    eval_marginal_effect,
)
from .monotonicity import MonotonicityReport, check_condition, project
from .trainer import TrainConfig, TrainTrace, fit

__version__ = "0.1.0"
