import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Deque, Dict, Optional, Tuple

import numpy as np

from src.problems import Problem

logger = logging.getLogger(__name__)

MAX_TR_RADIUS = 1e10
MAX_CONSECUTIVE_REJECTIONS = 20
CURVATURE_EPS = 1e-10

StepFunction = Callable[[Problem, "SolverState", "SolverConfig"], "IterationSnapshot"]

SOLVER_METHODS: Dict[str, StepFunction] = {}


class SolverConfigError(ValueError):
    pass


class Termination(str, Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    STALLED = "stalled"
    ABORTED = "aborted"


def register_method(name: str):
    """Function decorator adding a step operation to the registry under `name`."""
    def decorator(fn):
        SOLVER_METHODS[name] = fn
        return fn
    return decorator


@dataclass(frozen=True)
class SolverConfig:
    method: str = "tron"
    max_iters: int = 500
    grad_tol: float = 1e-6
    cg_max_iters: int = 25
    cg_rtol: float = 0.1
    tr_radius0: float = 1.0
    eta: Tuple[float, float, float] = (1e-4, 0.25, 0.75)
    radius_factors: Tuple[float, float, float] = (0.25, 0.5, 4.0)
    lbfgs_memory: int = 10
    batch0_frac: float = 0.1
    batch_growth: float = 1.5
    rng_seed: int = 42
    cg_refine_boundary: bool = True

    def validate(self):
        if self.method not in SOLVER_METHODS:
            raise SolverConfigError(f"unknown method {self.method!r} (choose from {', '.join(sorted(SOLVER_METHODS))})")
        if self.max_iters < 0:
            raise SolverConfigError("max_iters must be >= 0")
        if not self.grad_tol > 0:
            raise SolverConfigError("grad_tol must be > 0")
        if self.cg_max_iters < 1:
            raise SolverConfigError("cg_max_iters must be >= 1")
        if not 0 < self.cg_rtol < 1:
            raise SolverConfigError("cg_rtol must be in (0, 1)")
        if not self.tr_radius0 > 0:
            raise SolverConfigError("tr_radius0 must be > 0")
        eta0, eta1, eta2 = self.eta
        if not 0 < eta0 < eta1 < eta2 < 1:
            raise SolverConfigError("eta must satisfy 0 < eta0 < eta1 < eta2 < 1")
        sigma1, sigma2, sigma3 = self.radius_factors
        if not (0 < sigma1 <= sigma2 < 1 < sigma3):
            raise SolverConfigError("radius_factors must satisfy 0 < sigma1 <= sigma2 < 1 < sigma3")
        if self.lbfgs_memory < 1:
            raise SolverConfigError("lbfgs_memory must be >= 1")
        if not 0 < self.batch0_frac <= 1:
            raise SolverConfigError("batch0_frac must be in (0, 1]")
        if not self.batch_growth >= 1:
            raise SolverConfigError("batch_growth must be >= 1")

    def with_seed(self, seed: int) -> "SolverConfig":
        return replace(self, rng_seed=seed)


@dataclass
class SolverState:
    w: np.ndarray
    objective: float
    grad: np.ndarray
    grad_norm: float
    grad_norm0: float
    tr_radius: float
    batch_size: int
    rng: np.random.Generator
    lbfgs_pairs: Deque[Tuple[np.ndarray, np.ndarray]] = field(default_factory=deque)
    iter: int = 0
    rejections: int = 0
    # set when the trust region is too small to change w in floating point
    stagnant: bool = False

    def move_to(self, problem: Problem, w_new: np.ndarray, f_new: float):
        """Accept w_new as the current iterate and refresh the gradient."""
        self.w = w_new
        self.objective = f_new
        self.grad = problem.gradient(w_new)
        self.grad_norm = float(np.linalg.norm(self.grad))
        self.rejections = 0


@dataclass(frozen=True)
class IterationSnapshot:
    iter: int
    w: np.ndarray
    objective: float
    grad_norm: float
    step_accepted: bool
    tr_radius_or_step: float
    cg_iters_used: int = 0
    rows_touched: int = 0


def initial_batch_size(config: SolverConfig, n_rows: int) -> int:
    return max(1, min(n_rows, math.ceil(config.batch0_frac * n_rows)))


def init_state(problem: Problem, config: SolverConfig) -> SolverState:
    """State at w0 = 0."""
    w0 = np.zeros(problem.dimension)
    g0 = problem.gradient(w0)
    g0_norm = float(np.linalg.norm(g0))
    return SolverState(
        w=w0,
        objective=problem.objective(w0),
        grad=g0,
        grad_norm=g0_norm,
        grad_norm0=g0_norm,
        tr_radius=config.tr_radius0,
        batch_size=initial_batch_size(config, problem.n_rows),
        rng=np.random.default_rng(config.rng_seed),
        lbfgs_pairs=deque(maxlen=config.lbfgs_memory),
    )


def snapshot(state: SolverState, accepted: bool, radius_or_step: float, cg_iters: int = 0, rows: int = 0) -> IterationSnapshot:
    return IterationSnapshot(
        iter=state.iter,
        w=state.w,
        objective=state.objective,
        grad_norm=state.grad_norm,
        step_accepted=accepted,
        tr_radius_or_step=radius_or_step,
        cg_iters_used=cg_iters,
        rows_touched=rows,
    )


def noise_floor(f: float) -> float:
    """Changes of the objective below this are floating-point noise."""
    return 10.0 * np.finfo(float).eps * max(1.0, abs(f))


def armijo_backtracking(problem: Problem, w: np.ndarray, f0: float, g0: np.ndarray, d: np.ndarray,
                        alpha0: float = 1.0, c1: float = 1e-4, tau: float = 0.5,
                        max_halvings: int = 50) -> Tuple[Optional[float], Optional[np.ndarray], float]:
    """
    Backtrack from alpha0 until f(w + alpha d) <= f0 + c1 alpha g0^T d.

    Returns (alpha, w_new, f_new), or (None, None, f0) when every halving failed.
    """
    slope = float(g0 @ d)
    alpha = alpha0
    for _ in range(max_halvings + 1):
        w_try = w + alpha * d
        f_try = problem.objective(w_try)
        if np.isfinite(f_try) and f_try <= f0 + c1 * alpha * slope:
            return alpha, w_try, f_try
        alpha *= tau
    return None, None, f0


def run_solver(problem: Problem, config: SolverConfig,
               callback: Optional[Callable[[IterationSnapshot], None]] = None) -> Tuple[np.ndarray, Termination]:
    """
    Run the configured method from w0 = 0.

    The callback sees every snapshot (iteration 0 included) before the stopping
    test. An exception raised by the callback ends the run with ABORTED.
    """
    config.validate()
    step = SOLVER_METHODS[config.method]
    state = init_state(problem, config)
    snap = snapshot(state, True, state.tr_radius)

    while True:
        if callback is not None:
            try:
                callback(snap)
            except Exception as e:
                logger.error("callback failed at iteration %d, aborting run: %s", state.iter, e)
                return state.w, Termination.ABORTED

        if state.grad_norm <= config.grad_tol * state.grad_norm0:
            termination = Termination.CONVERGED
        elif state.iter >= config.max_iters:
            termination = Termination.MAX_ITERS
        elif state.rejections >= MAX_CONSECUTIVE_REJECTIONS or state.stagnant:
            termination = Termination.STALLED
        else:
            snap = step(problem, state, config)
            logger.debug("%s iter %d: f=%.12g |g|=%.3e radius/step=%.3e cg=%d accepted=%s",
                         config.method, snap.iter, snap.objective, snap.grad_norm,
                         snap.tr_radius_or_step, snap.cg_iters_used, snap.step_accepted)
            continue

        logger.info("%s finished after %d iterations: %s (f=%.12g, |g|=%.3e)",
                    config.method, state.iter, termination.value, state.objective, state.grad_norm)
        return state.w, termination
