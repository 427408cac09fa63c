import logging

import matplotlib

matplotlib.use("Agg")

import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402
from matplotlib.ticker import FuncFormatter, LogLocator, NullFormatter  # noqa: E402

logger = logging.getLogger(__name__)

GAP_FLOOR = 1e-16
METRICS = {
    "optimality_gap": "Optimality gap F(w) - F*",
    "test_accuracy": "Test accuracy",
}
# Fixed salt and no timestamp so identical traces give identical files.
SVG_RC = {"svg.hashsalt": "s2ml", "svg.fonttype": "none"}


class PlotError(ValueError):
    pass


def _decade_label(value, _pos):
    return f"1e{int(round(np.log10(value)))}"


def render_convergence_svg(traces: pd.DataFrame, metric: str, path: str):
    """
    Plot `metric` against training time as SVG.

    Each solver is one `<path>` element with id `trace-<solver>`; its repetitions
    are separate segments of that path.
    """
    if metric not in METRICS:
        raise PlotError(f"unknown metric {metric!r} (choose from {', '.join(METRICS)})")
    if traces.empty:
        raise PlotError("no trace records to plot")
    if metric == "test_accuracy" and traces["test_accuracy"].isna().all():
        raise PlotError("traces carry no test accuracy")
    times = traces["wall_time_s"].to_numpy()
    if np.all(times == times[0]):
        raise PlotError("all wall_time_s values are identical, the time axis has no range")

    with matplotlib.rc_context(SVG_RC):
        fig = Figure(figsize=(6.4, 4.8))
        ax = fig.add_subplot(1, 1, 1)
        for i, solver in enumerate(pd.unique(traces["solver"])):
            color = f"C{i % 10}"
            runs = traces[traces["solver"] == solver].sort_values(["rep", "iter"])
            xs, ys = [], []
            # Repetitions share one line, separated by NaN breaks.
            for _, run in runs.groupby("rep", sort=True):
                if xs:
                    xs.append([np.nan])
                    ys.append([np.nan])
                xs.append(run["wall_time_s"].to_numpy(dtype=np.float64))
                ys.append(run[metric].to_numpy(dtype=np.float64))
            y = np.concatenate(ys)
            if metric == "optimality_gap":
                y = np.where(np.isnan(y), y, np.maximum(y, GAP_FLOOR))
            line, = ax.plot(np.concatenate(xs), y, color=color, label=solver)
            line.set_gid(f"trace-{solver}")

        if metric == "optimality_gap":
            ax.set_yscale("log")
            ax.yaxis.set_major_locator(LogLocator(base=10, subs=(1.0,), numticks=100))
            ax.yaxis.set_major_formatter(FuncFormatter(_decade_label))
            ax.yaxis.set_minor_formatter(NullFormatter())
        ax.set_xlabel("Training time (s)")
        ax.set_ylabel(METRICS[metric])
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.savefig(path, format="svg", metadata={"Date": None})
    logger.info("wrote %s plot to %s", metric, path)
