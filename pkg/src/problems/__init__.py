import importlib
import pkgutil

from src.problems.Problem import (
    FULL_BATCH,
    PROBLEM_KINDS,
    BatchSpec,
    DimensionMismatchError,
    LinearLossProblem,
    Problem,
    ProblemConfig,
    RowReducer,
    make_problem,
    register_problem,
    sample_batch,
)

# Every module in this folder registers its problem on import.
for _module in pkgutil.iter_modules(__path__):
    importlib.import_module(f"{__name__}.{_module.name}")
