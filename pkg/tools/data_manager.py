"""Reading and writing LIBSVM-format binary classification datasets.

Rows are assembled into a compressed sparse row (CSR) matrix that every
problem and solver shares read-only.
"""
import gzip
import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

GZIP_MAGIC = b"\x1f\x8b"
LABEL_TOKENS = {"+1": 1, "1": 1, "-1": -1, "0": 0}


class DatasetError(ValueError):
    """Raised for datasets that cannot be loaded or violate their invariants."""


class LibsvmParseError(DatasetError):
    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    _csr: list = field(default_factory=list, repr=False, compare=False)

    @property
    def nnz(self) -> int:
        return int(self.values.shape[0])

    def row(self, i: int) -> Tuple[np.ndarray, np.ndarray]:
        """Column indices and values of row i."""
        start, stop = self.row_offsets[i], self.row_offsets[i + 1]
        return self.col_indices[start:stop], self.values[start:stop]

    def to_csr(self) -> sp.csr_matrix:
        """The same arrays viewed as a scipy CSR matrix (built once, no copy)."""
        if not self._csr:
            matrix = sp.csr_matrix(
                (self.values, self.col_indices, self.row_offsets),
                shape=(self.n_rows, self.n_cols),
                copy=False,
            )
            # Sorted, duplicate-free indices are guaranteed at assembly.
            matrix.has_sorted_indices = True
            self._csr.append(matrix)
        return self._csr[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return (
            self.n_rows == other.n_rows
            and self.n_cols == other.n_cols
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    features: SparseMatrix
    labels: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.features.n_rows

    @property
    def n_cols(self) -> int:
        return self.features.n_cols

    @property
    def nnz(self) -> int:
        return self.features.nnz

    def digest(self) -> str:
        """SHA-256 over the shape, CSR arrays and labels."""
        h = hashlib.sha256()
        h.update(f"{self.n_rows}x{self.n_cols}".encode("ascii"))
        for array in (self.features.row_offsets, self.features.col_indices,
                      self.features.values, self.labels):
            h.update(np.ascontiguousarray(array).tobytes())
        return h.hexdigest()

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.features == other.features and np.array_equal(self.labels, other.labels)


def build_dataset(rows: List[Tuple[int, List[Tuple[int, float]]]], n_cols: int) -> Dataset:
    """Assemble (label, [(0-based index, value), ...]) rows that are already sorted."""
    offsets = np.zeros(len(rows) + 1, dtype=np.int64)
    for i, (_, entries) in enumerate(rows):
        offsets[i + 1] = offsets[i] + len(entries)
    cols = np.fromiter((j for _, entries in rows for j, _ in entries), dtype=np.int32, count=int(offsets[-1]))
    vals = np.fromiter((v for _, entries in rows for _, v in entries), dtype=np.float64, count=int(offsets[-1]))
    labels = np.array([label for label, _ in rows], dtype=np.float64)
    matrix = SparseMatrix(len(rows), n_cols, _frozen(offsets), _frozen(cols), _frozen(vals))
    return Dataset(matrix, _frozen(labels))


def _strip_comment(line: str) -> str:
    return line.split("#", 1)[0].strip()


def _parse_label(token: str, line_number: Optional[int]) -> int:
    if token in LABEL_TOKENS:
        return LABEL_TOKENS[token]
    if ":" in token:
        raise LibsvmParseError(f"first token {token!r} is not a label", line_number)
    try:
        value = float(token)
    except ValueError:
        raise LibsvmParseError(f"invalid label {token!r}", line_number) from None
    if value in (1.0, -1.0, 0.0):
        return int(value)
    raise LibsvmParseError(f"label {token!r} is not one of +1, -1, 0", line_number)


def _parse_line(line: str, line_number: Optional[int] = None) -> Tuple[int, List[Tuple[int, float]]]:
    """Label as written (0 kept) and 1-based entries in file order."""
    tokens = _strip_comment(line).split()
    if not tokens:
        raise LibsvmParseError("missing label", line_number)

    label = _parse_label(tokens[0], line_number)
    entries = []
    for token in tokens[1:]:
        index_text, sep, value_text = token.partition(":")
        if not sep:
            raise LibsvmParseError(f"token {token!r} is missing ':'", line_number)
        try:
            index = int(index_text)
        except ValueError:
            raise LibsvmParseError(f"non-numeric index in {token!r}", line_number) from None
        try:
            value = float(value_text)
        except ValueError:
            raise LibsvmParseError(f"non-numeric value in {token!r}", line_number) from None
        if index < 1:
            raise LibsvmParseError(f"index {index} < 1 in {token!r}", line_number)
        if not math.isfinite(value):
            raise LibsvmParseError(f"non-finite value in {token!r}", line_number)
        entries.append((index, value))
    return label, entries


def parse_libsvm_line(line: str, line_number: Optional[int] = None) -> Tuple[int, List[Tuple[int, float]]]:
    """Parse one data line into (label in {-1, +1}, [(1-based index, value), ...])."""
    label, entries = _parse_line(line, line_number)
    return (label if label != 0 else -1), entries


def _parse_chunk(chunk: List[Tuple[int, str]]):
    return [(number,) + _parse_line(text, number) for number, text in chunk]


def parse_libsvm_text(text: str, n_cols_hint: Optional[int] = None, workers: int = 1, source: str = "<text>") -> Dataset:
    """Parse a whole LIBSVM document; blank and comment-only lines are skipped."""
    numbered = [(i + 1, line) for i, line in enumerate(text.splitlines()) if _strip_comment(line)]
    if not numbered:
        raise DatasetError(f"{source}: no data rows")

    if workers > 1 and len(numbered) > 1:
        size = math.ceil(len(numbered) / workers)
        chunks = [numbered[i:i + size] for i in range(0, len(numbered), size)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            # map() yields in submission order, so rows keep file order
            parsed = [row for part in pool.map(_parse_chunk, chunks) for row in part]
    else:
        parsed = _parse_chunk(numbered)

    rows = []
    max_index = 0
    zero_labels = 0
    for number, label, entries in parsed:
        entries = sorted(entries, key=lambda e: e[0])
        for (a, _), (b, _) in zip(entries, entries[1:]):
            if a == b:
                raise LibsvmParseError(f"duplicate index {a}", number)
        if entries:
            max_index = max(max_index, entries[-1][0])
        if label == 0:
            zero_labels += 1
            label = -1
        rows.append((label, [(j - 1, v) for j, v in entries]))

    if zero_labels:
        logger.warning("%s: %d rows labelled 0 were read as -1", source, zero_labels)

    n_cols = max(n_cols_hint or 0, max_index)
    ds = build_dataset(rows, n_cols)
    logger.info("%s: %d rows, %d features, %d nonzeros", source, ds.n_rows, ds.n_cols, ds.nnz)
    return ds


def load_dataset(path: str, n_cols_hint: Optional[int] = None, workers: int = 1) -> Dataset:
    """Load a LIBSVM file, plain or gzip-compressed."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] == GZIP_MAGIC:
        raw = gzip.decompress(raw)
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise DatasetError(f"{path}: not a text file ({e})") from None
    ds = parse_libsvm_text(text, n_cols_hint=n_cols_hint, workers=workers, source=str(path))
    validate_dataset(ds)
    return ds


def serialize_dataset(ds: Dataset) -> str:
    """Canonical LIBSVM text: '+1'/'-1' labels, ascending 1-based indices, repr() values."""
    lines = []
    for i in range(ds.n_rows):
        cols, vals = ds.features.row(i)
        parts = ["+1" if ds.labels[i] > 0 else "-1"]
        parts.extend(f"{int(j) + 1}:{float(v)!r}" for j, v in zip(cols, vals))
        lines.append(" ".join(parts))
    return "\n".join(lines)


def write_dataset(ds: Dataset, path: str):
    with open(path, "w") as f:
        f.write(serialize_dataset(ds) + "\n")


def row_dot(m: SparseMatrix, row: int, v: np.ndarray) -> float:
    """Sum of values[k] * v[col_indices[k]] over the row, rounded once after exact summation."""
    cols, vals = m.row(row)
    return math.fsum(vals * v[cols])


def validate_sparse_matrix(m: SparseMatrix):
    """Raise DatasetError when a CSR invariant does not hold."""
    offsets = m.row_offsets
    if offsets.shape[0] != m.n_rows + 1:
        raise DatasetError(f"row_offsets has length {offsets.shape[0]}, expected {m.n_rows + 1}")
    if offsets[0] != 0:
        raise DatasetError("row_offsets[0] must be 0")
    if np.any(np.diff(offsets) < 0):
        raise DatasetError("row_offsets must be non-decreasing")
    if offsets[-1] != m.values.shape[0] or m.values.shape[0] != m.col_indices.shape[0]:
        raise DatasetError("row_offsets[-1], len(values) and len(col_indices) disagree")
    if m.nnz:
        if m.col_indices.min() < 0 or m.col_indices.max() >= m.n_cols:
            raise DatasetError(f"column index outside [0, {m.n_cols})")
        # Within a row indices strictly increase; across a row boundary anything goes.
        steps = np.diff(m.col_indices.astype(np.int64))
        boundary = np.zeros(steps.shape[0], dtype=bool)
        inner = offsets[1:-1]
        inner = inner[(inner > 0) & (inner < m.nnz)]
        boundary[inner - 1] = True
        if np.any((steps <= 0) & ~boundary):
            raise DatasetError("column indices must strictly increase within each row")


def validate_dataset(ds: Dataset):
    validate_sparse_matrix(ds.features)
    if ds.labels.shape[0] != ds.n_rows:
        raise DatasetError(f"{ds.labels.shape[0]} labels for {ds.n_rows} rows")
    if not np.all(np.abs(ds.labels) == 1.0):
        raise DatasetError("labels must be -1 or +1")
