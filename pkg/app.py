import argparse
import logging
import os
import sys
from typing import Any, Dict, List, Optional

sys.path.append(os.path.abspath(os.path.dirname(__file__)))

from src.Benchmark import ConvergenceError, ExperimentSpec, compute_f_star, run_experiment  # noqa: E402
from src.problems import PROBLEM_KINDS, DimensionMismatchError, ProblemConfig, RowReducer, make_problem  # noqa: E402
from src.solvers import SOLVER_METHODS, SolverConfig, SolverConfigError, run_solver  # noqa: E402
from tools.config_manager import ConfigError, config_to_argv, load_settings, read_config_file  # noqa: E402
from tools.data_manager import DatasetError, load_dataset  # noqa: E402
from tools.fstar_manager import FStarCache  # noqa: E402
from tools.model_manager import ModelFormatError, write_model  # noqa: E402
from tools.plot_manager import PlotError, render_convergence_svg  # noqa: E402
from tools.trace_manager import read_trace_csv, traces_to_frame, write_trace_csv  # noqa: E402

logger = logging.getLogger("s2ml")

RUNTIME_ERRORS = (OSError, DatasetError, ConvergenceError, ModelFormatError, PlotError, DimensionMismatchError)

# name -> argparse keyword arguments; names double as --config keys
FLAGS: Dict[str, Dict[str, Any]] = {
    "data": dict(metavar="PATH", help="training data in LIBSVM format (traces CSV for plot)"),
    "test-data": dict(metavar="PATH", help="evaluation data in LIBSVM format"),
    "problem": dict(choices=sorted(PROBLEM_KINDS), help="objective to minimize"),
    "lambda": dict(type=float, dest="lambda_", metavar="REAL", help="regularization strength (default 1/n)"),
    "bias": dict(action="store_true", default=None, help="append a bias feature (not regularized)"),
    "solver": dict(action="append", choices=sorted(SOLVER_METHODS), help="optimization method"),
    "grad-tol": dict(type=float, metavar="REAL", help="stop when |g| <= grad-tol * |g0|"),
    "max-iters": dict(type=int, metavar="N"),
    "cg-max-iters": dict(type=int, metavar="N"),
    "cg-rtol": dict(type=float, metavar="REAL"),
    "tr-radius0": dict(type=float, metavar="REAL"),
    "lbfgs-memory": dict(type=int, metavar="N"),
    "batch0-frac": dict(type=float, metavar="REAL", help="initial Hessian sample fraction (stron)"),
    "batch-growth": dict(type=float, metavar="REAL", help="Hessian sample growth factor (stron)"),
    "seed": dict(type=int, metavar="N"),
    "reps": dict(type=int, metavar="N", help="repetitions per solver (seeds seed, seed+1, ...)"),
    "threads": dict(type=int, metavar="N", help="worker threads for data loading and reductions"),
    "deterministic": dict(action="store_true", default=None, help="fixed-shape reductions (bit-reproducible)"),
    "out": dict(metavar="PATH", help="model output file"),
    "out-dir": dict(metavar="DIR", help="directory for traces.csv and plots"),
    "config": dict(metavar="PATH", help="file of 'key = value' lines, keys as flag names"),
}

SOLVER_FLAGS = ["solver", "grad-tol", "max-iters", "cg-max-iters", "cg-rtol", "tr-radius0",
                "lbfgs-memory", "batch0-frac", "batch-growth", "seed"]
PROBLEM_FLAGS = ["problem", "lambda", "bias"]
SUBCOMMAND_FLAGS = {
    "train": ["data", "test-data"] + PROBLEM_FLAGS + SOLVER_FLAGS + ["threads", "deterministic", "out", "config"],
    "benchmark": ["data", "test-data"] + PROBLEM_FLAGS + SOLVER_FLAGS + ["reps", "threads", "deterministic",
                                                                        "out-dir", "config"],
    "fstar": ["data"] + PROBLEM_FLAGS + ["threads", "deterministic", "config"],
    "plot": ["data", "out-dir", "config"],
}


class UsageError(Exception):
    def __init__(self, message: str, usage: str = ""):
        super().__init__(message)
        self.usage = usage


class CliArgumentParser(argparse.ArgumentParser):
    """argparse parser that raises UsageError instead of exiting."""

    def error(self, message):
        raise UsageError(message, self.format_usage())


def dest_of(name: str) -> str:
    return FLAGS[name].get("dest", name.replace("-", "_"))


# config field -> flag, for validation messages
FIELD_FLAGS = {**{dest_of(name).rstrip("_"): name for name in FLAGS}, "rng_seed": "seed"}


def flag_message(message: str) -> str:
    """Name the flag instead of the config field a validation message starts with."""
    field_name, _, rest = message.partition(" ")
    name = FIELD_FLAGS.get(field_name)
    return f"--{name} {rest}" if name else message


def option_kind(name: str) -> str:
    action = FLAGS[name].get("action")
    if action == "store_true":
        return "flag"
    if action == "append":
        return "multi"
    return "value"


def add_verbosity(parser, default):
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true", default=default, help="log every iteration")
    verbosity.add_argument("--quiet", "-q", action="store_true", default=default, help="only log warnings and errors")


def build_parser():
    parser = CliArgumentParser(prog="app.py", description="Second-order solvers for L2-regularized linear classification.")
    add_verbosity(parser, False)
    commands = parser.add_subparsers(dest="command", metavar="{train,benchmark,fstar,plot}", parser_class=CliArgumentParser)
    commands.required = True

    helps = {
        "train": "fit one solver and write the model",
        "benchmark": "trace several solvers against F* and plot them",
        "fstar": "print the reference optimum F*",
        "plot": "plot a previously written traces.csv",
    }
    subparsers = {}
    for command, names in SUBCOMMAND_FLAGS.items():
        sub = commands.add_parser(command, help=helps[command])
        # SUPPRESS keeps a flag given before the subcommand from being reset here
        add_verbosity(sub, argparse.SUPPRESS)
        for name in names:
            sub.add_argument(f"--{name}", **FLAGS[name])
        subparsers[command] = sub
    return parser, subparsers


def resolve_args(argv: Optional[List[str]], settings: Dict[str, Any]) -> argparse.Namespace:
    """Command line over --config file over bundled settings and environment."""
    parser, subparsers = build_parser()
    args = parser.parse_args(argv)
    names = SUBCOMMAND_FLAGS[args.command]
    sub = subparsers[args.command]

    from_file = argparse.Namespace()
    if args.config:
        pairs = read_config_file(args.config)
        kinds = {name: option_kind(name) for name in names if name != "config"}
        from_file = sub.parse_args(config_to_argv(pairs, kinds, source=args.config))

    for name in names:
        dest = dest_of(name)
        if getattr(args, dest, None) is not None:
            continue
        value = getattr(from_file, dest, None)
        if value is None:
            value = settings.get(dest.rstrip("_"))
        setattr(args, dest, value)

    if args.verbose and args.quiet:
        sub.error("--verbose and --quiet are mutually exclusive")
    if not args.data:
        sub.error("--data is required")
    if args.command == "train":
        if not args.out:
            sub.error("--out is required")
        if len(args.solver) != 1:
            sub.error(f"train takes exactly one --solver, got {', '.join(args.solver)}")
    args.usage = sub.format_usage()
    args.log_level = "DEBUG" if args.verbose else "WARNING" if args.quiet else settings.get("log_level", "INFO")
    return args


def problem_config(args) -> ProblemConfig:
    config = ProblemConfig(kind=args.problem, lambda_=args.lambda_, add_bias=bool(args.bias))
    try:
        config.validate()
    except ValueError as e:
        raise UsageError(flag_message(str(e)), args.usage)
    return config


def solver_configs(args) -> List[SolverConfig]:
    configs = []
    for method in args.solver:
        config = SolverConfig(
            method=method,
            max_iters=args.max_iters,
            grad_tol=args.grad_tol,
            cg_max_iters=args.cg_max_iters,
            cg_rtol=args.cg_rtol,
            tr_radius0=args.tr_radius0,
            lbfgs_memory=args.lbfgs_memory,
            batch0_frac=args.batch0_frac,
            batch_growth=args.batch_growth,
            rng_seed=args.seed,
        )
        try:
            config.validate()
        except SolverConfigError as e:
            raise UsageError(flag_message(str(e)), args.usage)
        configs.append(config)
    return configs


def check_threads(args):
    if args.threads < 1:
        raise UsageError(f"--threads must be >= 1, got {args.threads}", args.usage)


def train(args) -> int:
    config = problem_config(args)
    solver = solver_configs(args)[0]
    check_threads(args)
    data = load_dataset(args.data, workers=args.threads)
    with RowReducer(threads=args.threads, deterministic=bool(args.deterministic)) as reducer:
        problem = make_problem(config, data, reducer)
        w, termination = run_solver(problem, solver)
        write_model(args.out, w, config, problem.lam)
        logger.info("%s: %s, final objective %.17g, model written to %s",
                    solver.method, termination.value, problem.objective(w), args.out)
    if args.test_data:
        test = load_dataset(args.test_data, n_cols_hint=data.n_cols, workers=args.threads)
        logger.info("test accuracy %.6f", problem.predict_accuracy(test, w))
    return 0


def benchmark(args) -> int:
    if args.reps < 1:
        raise UsageError(f"--reps must be >= 1, got {args.reps}", args.usage)
    check_threads(args)
    spec = ExperimentSpec(
        problem=problem_config(args),
        solvers=tuple(solver_configs(args)),
        train_path=args.data,
        test_path=args.test_data,
        repetitions=args.reps,
        deterministic=bool(args.deterministic),
        threads=args.threads,
    )
    traces = run_experiment(spec)
    os.makedirs(args.out_dir, exist_ok=True)
    frame = traces_to_frame(traces)
    write_trace_csv(frame, os.path.join(args.out_dir, "traces.csv"))
    write_plots(frame, args.out_dir)
    return 0


def write_plots(frame, out_dir: str):
    try:
        render_convergence_svg(frame, "optimality_gap", os.path.join(out_dir, "gap.svg"))
        if frame["test_accuracy"].notna().any():
            render_convergence_svg(frame, "test_accuracy", os.path.join(out_dir, "accuracy.svg"))
    except PlotError as e:
        logger.warning("no plot written: %s", e)


def fstar(args) -> int:
    config = problem_config(args)
    check_threads(args)
    data = load_dataset(args.data, workers=args.threads)
    with RowReducer(threads=args.threads, deterministic=bool(args.deterministic)) as reducer:
        problem = make_problem(config, data, reducer)
        value = compute_f_star(problem, FStarCache(os.path.dirname(os.path.abspath(args.data))))
    print(f"{value:.17g}")
    return 0


def plot(args) -> int:
    frame = read_trace_csv(args.data)
    os.makedirs(args.out_dir, exist_ok=True)
    render_convergence_svg(frame, "optimality_gap", os.path.join(args.out_dir, "gap.svg"))
    if frame["test_accuracy"].notna().any():
        render_convergence_svg(frame, "test_accuracy", os.path.join(args.out_dir, "accuracy.svg"))
    return 0


COMMANDS = {"train": train, "benchmark": benchmark, "fstar": fstar, "plot": plot}


def main(argv: Optional[List[str]] = None) -> int:
    try:
        settings = load_settings()
        args = resolve_args(argv, settings)
    except (UsageError, ConfigError) as e:
        sys.stderr.write(getattr(e, "usage", ""))
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    logging.basicConfig(level=args.log_level, format="[%(levelname)s] %(name)s: %(message)s",
                        stream=sys.stderr, force=True)
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        sys.stderr.write(e.usage)
        print(f"error: {e}", file=sys.stderr)
        return 1
    except RUNTIME_ERRORS as e:
        logger.debug("traceback", exc_info=True)
        logger.error("%s", e)
        return 2
    except Exception as e:
        logger.debug("traceback", exc_info=True)
        logger.error("unexpected %s: %s", type(e).__name__, e)
        return 2


if __name__ == "__main__":
    sys.exit(main())
