import importlib
import pkgutil

from src.solvers.Solver import (
    SOLVER_METHODS,
    IterationSnapshot,
    SolverConfig,
    SolverConfigError,
    SolverState,
    Termination,
    armijo_backtracking,
    init_state,
    register_method,
    run_solver,
)
from src.solvers.SteihaugCG import SubproblemResult, steihaug_cg

# Every module in this folder registers its method on import.
for _module in pkgutil.iter_modules(__path__):
    importlib.import_module(f"{__name__}.{_module.name}")

from src.solvers.LBFGS import lbfgs_two_loop  # noqa: E402
from src.solvers.NewtonCG import conjugate_gradient  # noqa: E402
