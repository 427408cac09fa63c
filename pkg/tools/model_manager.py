import re
from typing import Tuple

import numpy as np

from src.problems import ProblemConfig

MODEL_HEADER = "s2ml-model v1"
PARAMS_PATTERN = re.compile(r"kind=(\S+) lambda=(\S+) bias=([01]) dim=(\d+)")


class ModelFormatError(ValueError):
    pass


def write_model(path: str, w: np.ndarray, config: ProblemConfig, lam: float):
    """Save weights with the resolved regularization strength `lam`."""
    lines = [MODEL_HEADER, f"kind={config.kind} lambda={lam:.17g} bias={int(config.add_bias)} dim={w.shape[0]}"]
    lines.extend(f"{v:.17g}" for v in w)
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_model(path: str) -> Tuple[np.ndarray, ProblemConfig]:
    with open(path, "r") as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != MODEL_HEADER:
        found = lines[0] if lines else "an empty file"
        raise ModelFormatError(f"{path}: expected header {MODEL_HEADER!r}, found {found!r}")
    if len(lines) < 2:
        raise ModelFormatError(f"{path}: missing parameter line")
    match = PARAMS_PATTERN.fullmatch(lines[1])
    if match is None:
        raise ModelFormatError(f"{path}: malformed parameter line {lines[1]!r}")
    kind, lam_text, bias, dim_text = match.groups()
    dim = int(dim_text)
    expected = dim + 2
    if len(lines) != expected:
        raise ModelFormatError(f"{path}: expected {expected} lines for dim={dim}, found {len(lines)}")
    try:
        lam = float(lam_text)
        w = np.array([float(v) for v in lines[2:]], dtype=np.float64)
    except ValueError as e:
        raise ModelFormatError(f"{path}: {e}") from e
    if not np.isfinite(lam):
        raise ModelFormatError(f"{path}: lambda must be finite, got {lam_text}")
    bad = np.flatnonzero(~np.isfinite(w))
    if bad.size:
        raise ModelFormatError(f"{path}: line {bad[0] + 3}: coefficient {lines[bad[0] + 2]!r} is not finite")
    config = ProblemConfig(kind=kind, lambda_=lam, add_bias=bias == "1")
    try:
        config.validate()
    except ValueError as e:
        raise ModelFormatError(f"{path}: {e}") from e
    return w, config
