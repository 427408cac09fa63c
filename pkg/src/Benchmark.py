import logging
import os
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

from src.problems import DimensionMismatchError, Problem, ProblemConfig, RowReducer, make_problem
from src.solvers import IterationSnapshot, SolverConfig, Termination, run_solver
from tools.data_manager import Dataset, load_dataset
from tools.fstar_manager import FStarCache

logger = logging.getLogger(__name__)

F_STAR_CONFIG = SolverConfig(method="tron", grad_tol=1e-12, max_iters=1000)
# |g| / |g0| at which any run has reached the double-precision floor.
F_STAR_GRAD_FLOOR = 1e-8

Traces = Dict[str, List[List["TraceRecord"]]]


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    wall_time_s: float
    objective: float
    optimality_gap: float
    test_accuracy: Optional[float]
    grad_norm: float
    rows_touched: int


@dataclass(frozen=True)
class ExperimentSpec:
    problem: ProblemConfig
    solvers: Tuple[SolverConfig, ...]
    train_path: Optional[str] = None
    test_path: Optional[str] = None
    f_star: Union[float, str] = "compute"
    repetitions: int = 1
    deterministic: bool = False
    threads: int = 1
    run_workers: int = 1

    def validate(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.solvers:
            raise ValueError("an experiment needs at least one solver")
        if self.f_star != "compute" and not isinstance(self.f_star, (int, float)):
            raise ValueError(f"f_star must be a number or 'compute', got {self.f_star!r}")
        if self.threads < 1 or self.run_workers < 1:
            raise ValueError("threads and run_workers must be >= 1")
        self.problem.validate()
        for solver in self.solvers:
            solver.validate()


class StopwatchTimer:
    """Monotonic stopwatch that can be paused while bookkeeping runs."""

    def __init__(self):
        self._elapsed = 0.0
        self._started: Optional[float] = None

    def start(self):
        if self._started is None:
            self._started = time.perf_counter()

    def pause(self):
        if self._started is not None:
            self._elapsed += time.perf_counter() - self._started
            self._started = None

    @property
    def elapsed(self) -> float:
        if self._started is None:
            return self._elapsed
        return self._elapsed + time.perf_counter() - self._started


def compute_f_star(problem: Problem, cache: Optional[FStarCache] = None) -> float:
    """Reference optimum: TRON run to a 1e-12 relative gradient, cached by problem identity."""
    key = problem.cache_key()
    if cache is not None and key is not None:
        cached = cache.get(key)
        if cached is not None:
            logger.info("using cached F* = %.17g", cached)
            return cached

    snapshots: List[IterationSnapshot] = []
    w, termination = run_solver(problem, F_STAR_CONFIG, snapshots.append)
    first, last = snapshots[0], snapshots[-1]
    at_floor = termination != Termination.ABORTED and last.grad_norm <= F_STAR_GRAD_FLOOR * first.grad_norm
    if termination != Termination.CONVERGED and not at_floor:
        raise ConvergenceError(
            f"F* computation ended with {termination.value} after {last.iter} iterations "
            f"(|g| = {last.grad_norm:.3e}, |g0| = {first.grad_norm:.3e}); "
            "use a larger lambda or raise the iteration cap")

    f_star = problem.objective(w)
    logger.info("F* = %.17g (%s after %d iterations)", f_star, termination.value, last.iter)
    if cache is not None and key is not None:
        cache.put(key, f_star)
    return f_star


def solver_names(solvers: Sequence[SolverConfig]) -> List[str]:
    """Method names, with #2, #3, ... for repeated methods."""
    seen = Counter()
    names = []
    for solver in solvers:
        seen[solver.method] += 1
        count = seen[solver.method]
        names.append(solver.method if count == 1 else f"{solver.method}#{count}")
    return names


def run_traced(problem: Problem, config: SolverConfig, f_star: float,
               test: Optional[Dataset] = None) -> Tuple[List[TraceRecord], Termination]:
    """Run one solver, timing only the solver's own work."""
    records: List[TraceRecord] = []
    timer = StopwatchTimer()
    rows = 0

    def record(snap: IterationSnapshot):
        nonlocal rows
        timer.pause()
        rows += snap.rows_touched
        accuracy = problem.predict_accuracy(test, snap.w) if test is not None else None
        records.append(TraceRecord(
            iter=snap.iter,
            wall_time_s=timer.elapsed,
            objective=snap.objective,
            optimality_gap=snap.objective - f_star,
            test_accuracy=accuracy,
            grad_norm=snap.grad_norm,
            rows_touched=rows,
        ))
        timer.start()

    timer.start()
    _, termination = run_solver(problem, config, record)
    timer.pause()
    return records, termination


def run_loaded_experiment(spec: ExperimentSpec, train: Dataset, test: Optional[Dataset] = None,
                          cache: Optional[FStarCache] = None) -> Traces:
    """Run every (solver, repetition) of the experiment on already loaded data."""
    spec.validate()
    with RowReducer(threads=spec.threads, deterministic=spec.deterministic) as reducer:
        problem = make_problem(spec.problem, train, reducer)
        if test is not None and test.n_cols > problem.n_features:
            raise DimensionMismatchError(
                f"test data has {test.n_cols} features, training data has {problem.n_features}")

        f_star = compute_f_star(problem, cache) if spec.f_star == "compute" else float(spec.f_star)
        names = solver_names(spec.solvers)
        jobs = [(name, solver, rep) for name, solver in zip(names, spec.solvers) for rep in range(spec.repetitions)]

        def run_job(job):
            name, solver, rep = job
            records, termination = run_traced(problem, solver.with_seed(solver.rng_seed + rep), f_star, test)
            last = records[-1]
            logger.info("%s rep %d: %s after %d iterations, gap %.3e, %.3fs, %d Hessian rows",
                        name, rep, termination.value, last.iter, last.optimality_gap,
                        last.wall_time_s, last.rows_touched)
            return records

        if spec.run_workers > 1:
            with ThreadPoolExecutor(max_workers=spec.run_workers) as pool:
                results = list(pool.map(run_job, jobs))
        else:
            results = [run_job(job) for job in jobs]

    traces: Traces = {name: [] for name in names}
    for (name, _, _), records in zip(jobs, results):
        traces[name].append(records)
    return traces


def run_experiment(spec: ExperimentSpec) -> Traces:
    if spec.train_path is None:
        raise ValueError("experiment has no training data path")
    train = load_dataset(spec.train_path, workers=spec.threads)
    test = load_dataset(spec.test_path, n_cols_hint=train.n_cols, workers=spec.threads) if spec.test_path else None
    cache = FStarCache(os.path.dirname(os.path.abspath(spec.train_path)))
    return run_loaded_experiment(spec, train, test, cache)


def rows_to_reach_gap(records: Sequence[TraceRecord], gap: float) -> Optional[int]:
    """Cumulative Hessian rows at the first record with optimality_gap <= gap."""
    for record in records:
        if record.optimality_gap <= gap:
            return record.rows_touched
    return None
