"""polyfeas: feasible-output polytopes of A x = B y with box-bounded y.

The core entry point is ichm.evaluate, which returns vertex and half-space
representations of the feasible set to a user-chosen accuracy.  baselines
hosts exact and sampled reference algorithms, msk the wrench-capacity layer,
and cli the command-line front end.
"""

from .ichm import (  # noqa: F401
    EvaluationLimits,
    FeasibilityProblem,
    IterationLimitError,
    PolytopeResult,
    PolytopeStatus,
    evaluate,
)
from .msk import (  # noqa: F401
    BiasForceResult,
    InfeasibleTorqueError,
    MuscleSnapshot,
    assist_share,
    bias_force,
    capacity_along,
    mock_model,
    residual_problem,
)

__version__ = "0.1.0"
