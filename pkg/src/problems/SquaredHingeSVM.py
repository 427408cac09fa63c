import numpy as np

from src.problems.Problem import LinearLossProblem, register_problem


@register_problem("svm-l2")
class SquaredHingeSVM(LinearLossProblem):
    """
    L2-regularized L2-loss (squared hinge) SVM.

    The loss is only once differentiable; hessian_oracle returns the generalized
    Hessian over the active set {m_i < 1} (strict inequality at the kink).
    """

    def loss(self, margins):
        slack = np.maximum(0.0, 1.0 - margins)
        return slack * slack

    def loss_derivative(self, margins):
        return -2.0 * np.maximum(0.0, 1.0 - margins)

    def curvature(self, margins):
        return np.where(margins < 1.0, 2.0, 0.0)
