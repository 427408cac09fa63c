import logging

import numpy as np

from src.problems import FULL_BATCH, BatchSpec, Problem
from src.solvers.Solver import (
    MAX_TR_RADIUS,
    IterationSnapshot,
    SolverConfig,
    SolverState,
    noise_floor,
    register_method,
    snapshot,
)
from src.solvers.SteihaugCG import BOUNDARY, NEG_CURVATURE, steihaug_cg

logger = logging.getLogger(__name__)


def reduction_ratio(actual: float, predicted: float, f: float) -> float:
    """rho = actual / predicted, taken as 1 when both are below the noise floor and f did not increase."""
    floor = noise_floor(f)
    if abs(actual) < floor and abs(predicted) < floor:
        return 1.0 if actual >= 0 else 0.0
    return actual / predicted


def set_radius(state: SolverState, radius: float):
    state.tr_radius = radius
    if radius < np.finfo(float).eps * max(1.0, float(np.linalg.norm(state.w))):
        logger.debug("iteration %d: trust region radius %.3e below resolution of w", state.iter, radius)
        state.stagnant = True


def trust_region_step(problem: Problem, state: SolverState, config: SolverConfig,
                      batch: BatchSpec = FULL_BATCH) -> IterationSnapshot:
    """One trust-region Newton iteration with the Hessian taken on `batch`."""
    eta0, eta1, eta2 = config.eta
    sigma1, sigma2, sigma3 = config.radius_factors
    radius = state.tr_radius

    hv = problem.hessian_oracle(state.w, batch)
    products = 0

    def counted_hv(v):
        nonlocal products
        products += 1
        return hv(v)

    result = steihaug_cg(counted_hv, state.grad, radius, config.cg_rtol, config.cg_max_iters,
                         refine_boundary=config.cg_refine_boundary)
    rows = getattr(hv, "rows", problem.n_rows) * products
    s = result.step
    step_norm = float(np.linalg.norm(s))
    predicted = -result.model_value
    state.iter += 1

    if not predicted > 0:
        # Numerical breakdown of the model: shrink and retry.
        logger.debug("iteration %d: predicted decrease %.3e <= 0, rejecting step", state.iter, predicted)
        state.rejections += 1
        set_radius(state, sigma2 * radius)
        return snapshot(state, False, state.tr_radius, result.iterations, rows)

    w_new = state.w + s
    f_new = problem.objective(w_new)
    rho = reduction_ratio(state.objective - f_new, predicted, state.objective) if np.isfinite(f_new) else -np.inf

    if not rho > eta0:
        state.rejections += 1
        set_radius(state, sigma2 * min(radius, step_norm))
        return snapshot(state, False, state.tr_radius, result.iterations, rows)

    state.move_to(problem, w_new, f_new)
    if rho < eta1:
        set_radius(state, max(sigma1 * radius, sigma2 * step_norm))
    elif rho > eta2 and (result.status in (BOUNDARY, NEG_CURVATURE) or step_norm >= radius * (1 - 1e-12)):
        state.tr_radius = min(sigma3 * radius, MAX_TR_RADIUS)
    return snapshot(state, True, state.tr_radius, result.iterations, rows)


@register_method("tron")
def tron_step(problem: Problem, state: SolverState, config: SolverConfig) -> IterationSnapshot:
    return trust_region_step(problem, state, config, FULL_BATCH)
