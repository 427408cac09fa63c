import numpy as np
from scipy.special import expit

from src.problems.Problem import LinearLossProblem, register_problem

# Below this margin log(1 + e^{-m}) is evaluated as -m + log1p(e^m).
OVERFLOW_MARGIN = -30.0


def logistic_loss(margins: np.ndarray) -> np.ndarray:
    """log(1 + exp(-m)) without overflow for very negative margins."""
    out = np.empty_like(margins, dtype=np.float64)
    low = margins < OVERFLOW_MARGIN
    out[~low] = np.log1p(np.exp(-margins[~low]))
    out[low] = -margins[low] + np.log1p(np.exp(margins[low]))
    return out


@register_problem("logistic")
class LogisticRegression(LinearLossProblem):
    """L2-regularized logistic regression."""

    def loss(self, margins):
        return logistic_loss(margins)

    def loss_derivative(self, margins):
        return -expit(-margins)

    def curvature(self, margins):
        sigma = expit(margins)
        return sigma * (1.0 - sigma)
