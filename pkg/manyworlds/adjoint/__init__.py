"""Loss, adjoint pass and the finite-difference oracle."""

from .backprop import BackpropStats, backpropagate
from .finite_diff import (
    FiniteDifference,
    GradcheckReport,
    compute_gradient,
    cosine_similarity,
    finite_difference,
    finite_difference_gradient,
    gradcheck_report,
)
from .loss import loss_and_adjoint

__all__ = [
    "BackpropStats",
    "FiniteDifference",
    "GradcheckReport",
    "backpropagate",
    "compute_gradient",
    "cosine_similarity",
    "finite_difference",
    "finite_difference_gradient",
    "gradcheck_report",
    "loss_and_adjoint",
]
