import hashlib
import math
import os
import xml.etree.ElementTree as ET

import numpy as np
import pandas as pd
import pytest

from src.Benchmark import (
    ConvergenceError,
    ExperimentSpec,
    TraceRecord,
    compute_f_star,
    rows_to_reach_gap,
    run_experiment,
    run_loaded_experiment,
    solver_names,
)
from src.problems import DimensionMismatchError, ProblemConfig, make_problem
from src.solvers import IterationSnapshot, SolverConfig, Termination, run_solver
from tools.data_manager import build_dataset, write_dataset
from tools.fstar_manager import FStarCache
from tools.plot_manager import PlotError, render_convergence_svg
from tools.trace_manager import TRACE_COLUMNS, read_trace_csv, traces_to_frame, write_trace_csv
from test_problems import dense_dataset
from test_solvers import QuadraticProblem

HEADER = "solver,rep,iter,wall_time_s,objective,optimality_gap,test_accuracy,grad_norm,rows_touched"


def synthetic(seed, n, d, density):
    """Sparse binary classification data labelled by a noisy linear model."""
    rng = np.random.default_rng(seed)
    truth = rng.normal(size=d)
    rows = []
    for _ in range(n):
        k = max(1, int(rng.binomial(d, density)))
        cols = np.sort(rng.choice(d, size=k, replace=False))
        vals = rng.normal(size=k)
        score = float(vals @ truth[cols]) + 0.3 * rng.normal()
        rows.append((1 if score >= 0 else -1, [(int(j), float(v)) for j, v in zip(cols, vals)]))
    return build_dataset(rows, d)


def record(i, t, gap, accuracy=None):
    return TraceRecord(iter=i, wall_time_s=t, objective=gap + 0.25, optimality_gap=gap,
                       test_accuracy=accuracy, grad_norm=gap / 3, rows_touched=10 * i)


# F*

def test_f_star_degenerate_point():
    data = build_dataset([(1, [])], 1)
    problem = make_problem(ProblemConfig("logistic", lambda_=1.0), data)
    assert compute_f_star(problem) == pytest.approx(math.log(2.0), abs=1e-15)


def test_f_star_of_quadratic_is_zero():
    problem = QuadraticProblem(np.diag([1.0, 4.0]), c=[3.0, -4.0])
    assert abs(compute_f_star(problem)) <= 1e-20


def test_f_star_agrees_with_lbfgs():
    data = dense_dataset(np.random.default_rng(30), 200, 20)
    problem = make_problem(ProblemConfig("logistic", lambda_=0.01), data)
    f_star = compute_f_star(problem)
    w, _ = run_solver(problem, SolverConfig(method="lbfgs", grad_tol=1e-12, max_iters=3000))
    assert abs(problem.objective(w) - f_star) <= 1e-9


def test_f_star_cache_file(tmp_path):
    data = dense_dataset(np.random.default_rng(31), 60, 5)
    problem = make_problem(ProblemConfig("svm-l2", lambda_=0.1), data)
    value = compute_f_star(problem, FStarCache(str(tmp_path)))

    path = FStarCache(str(tmp_path)).path_for(problem.cache_key())
    assert os.path.basename(path) == hashlib.sha256(problem.cache_key().encode()).hexdigest() + ".fstar"
    with open(path) as f:
        assert float(f.read()) == value
    assert FStarCache(str(tmp_path)).get(problem.cache_key()) == value


def test_f_star_reports_non_convergence(monkeypatch):
    monkeypatch.setattr("src.Benchmark.F_STAR_CONFIG", SolverConfig(method="tron", grad_tol=1e-12, max_iters=1))
    problem = make_problem(ProblemConfig("logistic", lambda_=0.01), dense_dataset(np.random.default_rng(32), 50, 5))
    with pytest.raises(ConvergenceError) as info:
        compute_f_star(problem)
    assert "lambda" in str(info.value)


def test_f_star_accepts_any_ending_at_the_gradient_floor(monkeypatch):
    problem = QuadraticProblem(np.eye(2), c=[1.0, 2.0])
    w_end = np.array([1.0, 2.0 + 1e-10])

    def capped_run(problem, config, callback):
        callback(IterationSnapshot(iter=0, w=np.zeros(2), objective=2.5, grad_norm=1.0, step_accepted=True,
                                   tr_radius_or_step=1.0))
        callback(IterationSnapshot(iter=7, w=w_end, objective=problem.objective(w_end), grad_norm=1e-9,
                                   step_accepted=False, tr_radius_or_step=1e-18))
        return w_end, Termination.MAX_ITERS

    monkeypatch.setattr("src.Benchmark.run_solver", capped_run)
    assert compute_f_star(problem) == problem.objective(w_end)


# Experiments

def test_zero_iteration_experiment():
    data = dense_dataset(np.random.default_rng(33), 80, 6)
    spec = ExperimentSpec(problem=ProblemConfig("logistic", lambda_=0.1),
                          solvers=(SolverConfig(method="tron", max_iters=0), SolverConfig(method="lbfgs", max_iters=0)))
    traces = run_loaded_experiment(spec, data)
    f_star = compute_f_star(make_problem(ProblemConfig("logistic", lambda_=0.1), data))
    assert list(traces) == ["tron", "lbfgs"]
    for runs in traces.values():
        assert len(runs) == 1 and len(runs[0]) == 1
        first = runs[0][0]
        assert first.iter == 0
        assert first.optimality_gap == first.objective - f_star
        assert first.objective == pytest.approx(math.log(2.0), abs=1e-15)


def test_repetitions_are_deterministic_and_accuracy_is_free():
    data = dense_dataset(np.random.default_rng(34), 150, 8)
    test = dense_dataset(np.random.default_rng(35), 40, 8)
    spec = ExperimentSpec(problem=ProblemConfig("logistic"), solvers=(SolverConfig(method="tron"),
                                                                       SolverConfig(method="stron")),
                          repetitions=2, deterministic=True, threads=2)
    with_test = run_loaded_experiment(spec, data, test)
    without_test = run_loaded_experiment(spec, data)

    tron = with_test["tron"]
    columns = [[(r.iter, r.objective, r.grad_norm) for r in rep] for rep in tron]
    assert columns[0] == columns[1]
    for name in ("tron", "stron"):
        for a, b in zip(with_test[name], without_test[name]):
            assert [r.objective for r in a] == [r.objective for r in b]
    assert all(r.test_accuracy is not None and 0.0 <= r.test_accuracy <= 1.0 for r in tron[0])
    assert all(r.test_accuracy is None for r in without_test["tron"][0])


def test_trace_invariants():
    data = dense_dataset(np.random.default_rng(36), 200, 10)
    spec = ExperimentSpec(problem=ProblemConfig("svm-l2", lambda_=0.01),
                          solvers=(SolverConfig(method="tron"), SolverConfig(method="newton-cg"),
                                   SolverConfig(method="lbfgs")), run_workers=3)
    traces = run_loaded_experiment(spec, data)
    for name, runs in traces.items():
        records = runs[0]
        times = [r.wall_time_s for r in records]
        assert all(b >= a for a, b in zip(times, times[1:])), name
        assert all(r.optimality_gap >= -1e-9 for r in records), name
        rows = [r.rows_touched for r in records]
        assert all(b >= a for a, b in zip(rows, rows[1:])), name
    gaps = [r.optimality_gap for r in traces["tron"][0]]
    assert all(b <= a for a, b in zip(gaps, gaps[1:]))


def test_solver_names_and_spec_validation():
    tron = SolverConfig(method="tron")
    assert solver_names([tron, SolverConfig(method="lbfgs"), tron, tron]) == ["tron", "lbfgs", "tron#2", "tron#3"]
    data = dense_dataset(np.random.default_rng(37), 20, 3)
    with pytest.raises(ValueError):
        run_loaded_experiment(ExperimentSpec(problem=ProblemConfig(), solvers=()), data)
    with pytest.raises(ValueError):
        run_loaded_experiment(ExperimentSpec(problem=ProblemConfig(), solvers=(tron,), repetitions=0), data)


def test_test_data_must_fit_the_model():
    rng = np.random.default_rng(38)
    spec = ExperimentSpec(problem=ProblemConfig(), solvers=(SolverConfig(method="tron"),))
    with pytest.raises(DimensionMismatchError):
        run_loaded_experiment(spec, dense_dataset(rng, 30, 4), dense_dataset(rng, 10, 6))


def test_run_experiment_from_files(tmp_path):
    rng = np.random.default_rng(39)
    train_path = str(tmp_path / "train.libsvm")
    test_path = str(tmp_path / "test.libsvm")
    write_dataset(dense_dataset(rng, 100, 6), train_path)
    write_dataset(dense_dataset(rng, 30, 6), test_path)
    spec = ExperimentSpec(problem=ProblemConfig(), solvers=(SolverConfig(method="newton-cg"),),
                          train_path=train_path, test_path=test_path)
    traces = run_experiment(spec)
    assert traces["newton-cg"][0][-1].test_accuracy is not None
    assert len([f for f in os.listdir(tmp_path) if f.endswith(".fstar")]) == 1


def test_stron_needs_fewer_hessian_rows_than_tron():
    """Test that sub-sampled Hessians reach a 1e-3 gap with fewer Hessian rows than TRON"""
    wins = 0
    for seed in range(3):
        data = synthetic(100 + seed, 5000, 200, 0.05)
        spec = ExperimentSpec(problem=ProblemConfig("logistic"),
                              solvers=(SolverConfig(method="tron", grad_tol=1e-8, rng_seed=seed),
                                       SolverConfig(method="stron", grad_tol=1e-8, rng_seed=seed)))
        traces = run_loaded_experiment(spec, data)
        tron_rows = rows_to_reach_gap(traces["tron"][0], 1e-3)
        stron_rows = rows_to_reach_gap(traces["stron"][0], 1e-3)
        assert tron_rows is not None and stron_rows is not None
        wins += stron_rows <= tron_rows
    assert wins >= 2


# CSV

def test_empty_trace_csv_is_header_only(tmp_path):
    path = str(tmp_path / "traces.csv")
    write_trace_csv({}, path)
    with open(path) as f:
        assert f.read() == HEADER + "\n"
    assert read_trace_csv(path).empty


def test_single_record_csv(tmp_path):
    path = str(tmp_path / "traces.csv")
    write_trace_csv({"tron": [[record(0, 0.125, 0.5)]]}, path)
    with open(path) as f:
        lines = f.read().splitlines()
    assert lines[0] == HEADER
    assert len(lines) == 2
    assert lines[1].split(",")[6] == ""
    frame = read_trace_csv(path)
    assert frame.loc[0, "solver"] == "tron"
    assert frame.loc[0, "wall_time_s"] == 0.125
    assert np.isnan(frame.loc[0, "test_accuracy"])


def test_large_trace_csv_round_trips_exactly(tmp_path):
    rng = np.random.default_rng(40)
    records = [TraceRecord(iter=i, wall_time_s=float(rng.random() * 100), objective=float(rng.normal()),
                           optimality_gap=float(rng.random() * 10.0 ** rng.integers(-16, 2)),
                           test_accuracy=None if i % 7 == 0 else float(rng.random()),
                           grad_norm=float(rng.random() * 1e-3), rows_touched=int(rng.integers(0, 10 ** 12)))
               for i in range(1000)]
    traces = {"stron": [records[:500], records[500:]]}
    path = str(tmp_path / "traces.csv")
    write_trace_csv(traces, path)
    expected = traces_to_frame(traces)
    back = read_trace_csv(path)
    assert list(back.columns) == TRACE_COLUMNS
    pd.testing.assert_frame_equal(back, expected, check_exact=True)


# SVG

def two_solver_frame():
    return traces_to_frame({
        "tron": [[record(0, 0.0, 1.0, 0.5), record(1, 0.5, 1e-8, 0.9)]],
        "stron": [[record(0, 0.0, 1.0, 0.5), record(1, 0.3, 1e-4, 0.8)]],
    })


def test_svg_has_one_line_per_solver(tmp_path):
    path = str(tmp_path / "gap.svg")
    render_convergence_svg(two_solver_frame(), "optimality_gap", path)
    with open(path) as f:
        text = f.read()
    ET.fromstring(text)
    assert text.count('id="trace-') == 2
    assert 'id="trace-tron"' in text and 'id="trace-stron"' in text


def test_svg_draws_repetitions_as_one_path_per_solver(tmp_path):
    frame = traces_to_frame({
        "tron": [[record(0, 0.0, 1.0), record(1, 0.5, 1e-6)], [record(0, 0.0, 1.0), record(1, 0.4, 1e-7)]],
        "lbfgs": [[record(0, 0.0, 1.0), record(1, 0.9, 1e-3)], [record(0, 0.0, 1.0), record(1, 0.8, 1e-2)]],
    })
    path = str(tmp_path / "gap.svg")
    render_convergence_svg(frame, "optimality_gap", path)
    with open(path) as f:
        root = ET.fromstring(f.read())
    groups = {el.get("id"): el for el in root.iter() if el.get("id", "").startswith("trace-")}
    assert sorted(groups) == ["trace-lbfgs", "trace-tron"]
    for group in groups.values():
        assert len(list(group.iter("{http://www.w3.org/2000/svg}path"))) == 1


def test_svg_log_axis_has_decade_labels(tmp_path):
    path = str(tmp_path / "gap.svg")
    render_convergence_svg(two_solver_frame(), "optimality_gap", path)
    with open(path) as f:
        text = f.read()
    for exponent in range(0, -9, -1):
        assert f">1e{exponent}<" in text


def test_svg_is_deterministic(tmp_path):
    digests = []
    for name in ("a.svg", "b.svg"):
        path = str(tmp_path / name)
        render_convergence_svg(two_solver_frame(), "test_accuracy", path)
        with open(path, "rb") as f:
            digests.append(hashlib.sha256(f.read()).hexdigest())
    assert digests[0] == digests[1]


def test_svg_degenerate_inputs(tmp_path):
    path = str(tmp_path / "gap.svg")
    flat = traces_to_frame({"tron": [[record(0, 1.0, 1.0), record(1, 1.0, 0.1)]]})
    with pytest.raises(PlotError):
        render_convergence_svg(flat, "optimality_gap", path)
    no_accuracy = traces_to_frame({"tron": [[record(0, 0.0, 1.0), record(1, 1.0, 0.1)]]})
    with pytest.raises(PlotError):
        render_convergence_svg(no_accuracy, "test_accuracy", path)
    with pytest.raises(PlotError):
        render_convergence_svg(traces_to_frame({}), "optimality_gap", path)
