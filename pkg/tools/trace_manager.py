import logging
from typing import Mapping, Sequence

import pandas as pd

logger = logging.getLogger(__name__)

TRACE_COLUMNS = [
    "solver", "rep", "iter", "wall_time_s", "objective",
    "optimality_gap", "test_accuracy", "grad_norm", "rows_touched",
]
INT_COLUMNS = ["rep", "iter", "rows_touched"]
FLOAT_COLUMNS = ["wall_time_s", "objective", "optimality_gap", "test_accuracy", "grad_norm"]


def traces_to_frame(traces: Mapping[str, Sequence[Sequence]]) -> pd.DataFrame:
    """Flatten {solver: [records of rep 0, records of rep 1, ...]} into one table."""
    rows = []
    for solver, repetitions in traces.items():
        for rep, records in enumerate(repetitions):
            for record in records:
                rows.append({
                    "solver": solver,
                    "rep": rep,
                    "iter": record.iter,
                    "wall_time_s": record.wall_time_s,
                    "objective": record.objective,
                    "optimality_gap": record.optimality_gap,
                    "test_accuracy": record.test_accuracy,
                    "grad_norm": record.grad_norm,
                    "rows_touched": record.rows_touched,
                })
    frame = pd.DataFrame(rows, columns=TRACE_COLUMNS)
    frame = frame.astype({**{c: "int64" for c in INT_COLUMNS}, **{c: "float64" for c in FLOAT_COLUMNS}})
    return frame.astype({"solver": str})


def write_trace_csv(traces, path: str):
    """Write traces (a solver mapping or a frame from traces_to_frame) as CSV at 17 significant digits."""
    frame = traces if isinstance(traces, pd.DataFrame) else traces_to_frame(traces)
    frame.to_csv(path, index=False, columns=TRACE_COLUMNS, float_format="%.17g", na_rep="")
    logger.info("wrote %d trace records to %s", len(frame), path)


def read_trace_csv(path: str) -> pd.DataFrame:
    frame = pd.read_csv(path, float_precision="round_trip", dtype={"solver": str}, keep_default_na=False,
                        na_values={"test_accuracy": [""]})
    if list(frame.columns) != TRACE_COLUMNS:
        raise ValueError(f"{path}: expected header {','.join(TRACE_COLUMNS)}, found {','.join(frame.columns)}")
    return frame.astype({**{c: "int64" for c in INT_COLUMNS}, **{c: "float64" for c in FLOAT_COLUMNS}})
