import logging
from typing import Callable, Tuple

import numpy as np

from src.problems import Problem
from src.solvers.Solver import (
    IterationSnapshot,
    SolverConfig,
    SolverState,
    armijo_backtracking,
    register_method,
    snapshot,
)

logger = logging.getLogger(__name__)


def conjugate_gradient(hv: Callable[[np.ndarray], np.ndarray], g: np.ndarray, rtol: float,
                       max_iters: int) -> Tuple[np.ndarray, int]:
    """
    Approximately solve H d = -g from d = 0.

    Stops at ||H d + g|| <= rtol ||g||, at the iteration cap, or on the first
    direction of non-positive curvature (keeping the iterate reached so far).
    """
    d = np.zeros_like(g)
    r = g.copy()
    p = -r
    rr = float(r @ r)
    tol = rtol * np.sqrt(rr)
    k = 0
    for k in range(1, max_iters + 1):
        Hp = hv(p)
        pHp = float(p @ Hp)
        if pHp <= 0:
            logger.debug("non-positive curvature in CG at iteration %d", k)
            break
        alpha = rr / pHp
        d = d + alpha * p
        r = r + alpha * Hp
        rr_next = float(r @ r)
        if np.sqrt(rr_next) <= tol:
            break
        p = -r + (rr_next / rr) * p
        rr = rr_next
    return d, k


@register_method("newton-cg")
def newton_cg_step(problem: Problem, state: SolverState, config: SolverConfig) -> IterationSnapshot:
    hv = problem.hessian_oracle(state.w)
    d, cg_iters = conjugate_gradient(hv, state.grad, config.cg_rtol, config.cg_max_iters)
    rows = getattr(hv, "rows", problem.n_rows) * cg_iters
    if float(d @ state.grad) >= 0:
        logger.debug("Newton direction is not a descent direction, using -g")
        d = -state.grad
    state.iter += 1

    alpha, w_new, f_new = armijo_backtracking(problem, state.w, state.objective, state.grad, d)
    if alpha is None:
        state.rejections += 1
        return snapshot(state, False, 0.0, cg_iters, rows)
    state.move_to(problem, w_new, f_new)
    return snapshot(state, True, alpha * float(np.linalg.norm(d)), cg_iters, rows)
