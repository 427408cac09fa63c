import math

from src.problems import Problem, sample_batch
from src.solvers.Solver import IterationSnapshot, SolverConfig, SolverState, register_method
from src.solvers.Tron import trust_region_step


def next_batch_size(config: SolverConfig, batch_size: int, n_rows: int) -> int:
    return min(n_rows, math.ceil(config.batch_growth * batch_size))


@register_method("stron")
def stron_step(problem: Problem, state: SolverState, config: SolverConfig) -> IterationSnapshot:
    """
    Trust-region Newton step with a sub-sampled Hessian.

    The gradient and the acceptance test use every row; only the Hessian-vector
    products run on a uniform sample of batch_size rows. The sample grows
    geometrically until it covers the data, from which point the step is TRON's.
    """
    batch = sample_batch(state.rng, problem.n_rows, state.batch_size)
    snap = trust_region_step(problem, state, config, batch)
    state.batch_size = next_batch_size(config, state.batch_size, problem.n_rows)
    return snap
