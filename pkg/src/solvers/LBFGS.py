import logging
from typing import Sequence, Tuple

import numpy as np

from src.problems import Problem
from src.solvers.Solver import (
    CURVATURE_EPS,
    IterationSnapshot,
    SolverConfig,
    SolverState,
    armijo_backtracking,
    register_method,
    snapshot,
)

logger = logging.getLogger(__name__)


def lbfgs_two_loop(g: np.ndarray, pairs: Sequence[Tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """
    Product of the L-BFGS inverse Hessian approximation with g.

    Pairs are ordered oldest first; the initial matrix is gamma*I with
    gamma = s^T y / y^T y from the newest pair (identity without pairs).
    """
    q = np.array(g, dtype=np.float64, copy=True)
    history = []
    for s, y in reversed(pairs):
        rho = 1.0 / float(y @ s)
        a = rho * float(s @ q)
        q -= a * y
        history.append((rho, a))
    if len(pairs):
        s, y = pairs[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y), (rho, a) in zip(pairs, reversed(history)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return q


def curvature_ok(s: np.ndarray, y: np.ndarray) -> bool:
    return float(s @ y) > CURVATURE_EPS * float(np.linalg.norm(s)) * float(np.linalg.norm(y))


@register_method("lbfgs")
def lbfgs_step(problem: Problem, state: SolverState, config: SolverConfig) -> IterationSnapshot:
    d = -lbfgs_two_loop(state.grad, state.lbfgs_pairs)
    if float(d @ state.grad) >= 0:
        d = -state.grad
    state.iter += 1

    alpha, w_new, f_new = armijo_backtracking(problem, state.w, state.objective, state.grad, d)
    if alpha is None:
        # Restart from steepest descent next time.
        state.lbfgs_pairs.clear()
        state.rejections += 1
        return snapshot(state, False, 0.0)

    w_old, g_old = state.w, state.grad
    state.move_to(problem, w_new, f_new)
    s = state.w - w_old
    y = state.grad - g_old
    if curvature_ok(s, y):
        state.lbfgs_pairs.append((s, y))
    else:
        logger.debug("iteration %d: discarding pair with s^T y = %.3e", state.iter, float(s @ y))
    return snapshot(state, True, alpha * float(np.linalg.norm(d)))
