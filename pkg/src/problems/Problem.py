import logging
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from tools.data_manager import Dataset

logger = logging.getLogger(__name__)

HessianOracle = Callable[[np.ndarray], np.ndarray]

PROBLEM_KINDS: Dict[str, type] = {}


class DimensionMismatchError(ValueError):
    pass


def register_problem(kind: str):
    """Class decorator adding a problem to the registry under `kind`."""
    def decorator(cls):
        PROBLEM_KINDS[kind] = cls
        cls.kind = kind
        return cls
    return decorator


@dataclass(frozen=True)
class ProblemConfig:
    kind: str = "logistic"
    lambda_: Optional[float] = None  # None means 1/n
    add_bias: bool = False

    def validate(self):
        if self.kind not in PROBLEM_KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r} (choose from {', '.join(sorted(PROBLEM_KINDS))})")
        if self.lambda_ is not None and not (self.lambda_ >= 0 and np.isfinite(self.lambda_)):
            raise ValueError(f"lambda must be a finite number >= 0, got {self.lambda_}")

    def resolve_lambda(self, n_rows: int) -> float:
        return float(self.lambda_) if self.lambda_ is not None else 1.0 / n_rows


@dataclass(frozen=True, eq=False)
class BatchSpec:
    """Sorted distinct row indices, or the full dataset when indices is None."""
    indices: Optional[np.ndarray] = None

    @property
    def is_full(self) -> bool:
        return self.indices is None

    def size(self, n_rows: int) -> int:
        return n_rows if self.indices is None else int(self.indices.shape[0])

    def validate(self, n_rows: int):
        if self.indices is None:
            return
        idx = self.indices
        if idx.shape[0] == 0:
            raise ValueError("batch must not be empty")
        if idx[0] < 0 or idx[-1] >= n_rows or np.any(np.diff(idx) <= 0):
            raise ValueError(f"batch indices must be sorted, distinct and inside [0, {n_rows})")


FULL_BATCH = BatchSpec()


def sample_batch(rng: np.random.Generator, n_rows: int, size: int) -> BatchSpec:
    """Uniform sample without replacement; the full batch when size >= n_rows."""
    if size >= n_rows:
        return FULL_BATCH
    return BatchSpec(np.sort(rng.choice(n_rows, size=size, replace=False)))


def pairwise_sum(parts: Sequence):
    """Sum by a balanced binary tree whose shape depends only on len(parts)."""
    if len(parts) == 1:
        return parts[0]
    mid = len(parts) // 2
    return pairwise_sum(parts[:mid]) + pairwise_sum(parts[mid:])


class RowReducer:
    """Maps a function over fixed row blocks and sums the partial results."""

    def __init__(self, threads: int = 1, deterministic: bool = False, block_rows: int = 4096):
        if threads < 1:
            raise ValueError("threads must be >= 1")
        if block_rows < 1:
            raise ValueError("block_rows must be >= 1")
        self.threads = threads
        self.deterministic = deterministic
        self.block_rows = block_rows
        self._pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    def close(self):
        """Shut the worker threads down; later reductions run on the calling thread."""
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def split(self, n_rows: int) -> List[slice]:
        return [slice(start, min(start + self.block_rows, n_rows)) for start in range(0, n_rows, self.block_rows)]

    def reduce(self, blocks: Sequence, fn: Callable):
        if len(blocks) == 1:
            return fn(blocks[0])
        if self._pool is None:
            return pairwise_sum([fn(b) for b in blocks])
        if self.deterministic:
            return pairwise_sum(list(self._pool.map(fn, blocks)))
        total = None
        for future in as_completed([self._pool.submit(fn, b) for b in blocks]):
            total = future.result() if total is None else total + future.result()
        return total


@dataclass(frozen=True, eq=False)
class RowBlock:
    X: sp.csr_matrix
    y: np.ndarray


class Problem(ABC):
    """The contract every objective of the form (1/|B|) sum f_i(w) + regularizer follows."""

    kind = "abstract"

    @property
    @abstractmethod
    def dimension(self) -> int:
        ...

    @property
    @abstractmethod
    def n_rows(self) -> int:
        ...

    @abstractmethod
    def objective(self, w: np.ndarray, batch: BatchSpec = FULL_BATCH) -> float:
        ...

    @abstractmethod
    def gradient(self, w: np.ndarray, batch: BatchSpec = FULL_BATCH) -> np.ndarray:
        ...

    @abstractmethod
    def hessian_oracle(self, w: np.ndarray, batch: BatchSpec = FULL_BATCH) -> HessianOracle:
        """v -> H(w) v on the batch, with everything that depends only on w computed once."""

    def hess_vec(self, w: np.ndarray, v: np.ndarray, batch: BatchSpec = FULL_BATCH) -> np.ndarray:
        return self.hessian_oracle(w, batch)(v)

    def predict_accuracy(self, data: Dataset, w: np.ndarray) -> float:
        raise NotImplementedError(f"{type(self).__name__} does not classify")

    def cache_key(self) -> Optional[str]:
        """Stable identity of (problem, data) for caching, or None when not cacheable."""
        return None


class LinearLossProblem(Problem):
    """
    Loss of the margin m_i = y_i * (w^T x_i [+ bias]) plus (lambda/2)||w||^2.

    Subclasses supply the per-row loss, its first derivative and its (generalized)
    second derivative with respect to the margin.
    """

    def __init__(self, config: ProblemConfig, data: Dataset, reducer: Optional[RowReducer] = None):
        config.validate()
        if data.n_rows == 0:
            raise ValueError("dataset has no rows")
        self.config = config
        self.data = data
        self.reducer = reducer or RowReducer()
        self.lam = config.resolve_lambda(data.n_rows)
        self.n_features = data.n_cols
        self._X = data.features.to_csr()
        self._full_blocks = self._make_blocks(self._X, data.labels)

    @abstractmethod
    def loss(self, margins: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def loss_derivative(self, margins: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def curvature(self, margins: np.ndarray) -> np.ndarray:
        ...

    @property
    def dimension(self) -> int:
        return self.n_features + (1 if self.config.add_bias else 0)

    @property
    def n_rows(self) -> int:
        return self.data.n_rows

    def _make_blocks(self, X: sp.csr_matrix, y: np.ndarray) -> List[RowBlock]:
        return [RowBlock(X[rows], y[rows]) for rows in self.reducer.split(X.shape[0])]

    def _blocks(self, batch: BatchSpec) -> List[RowBlock]:
        if batch.is_full:
            return self._full_blocks
        batch.validate(self.n_rows)
        return self._make_blocks(self._X[batch.indices], self.data.labels[batch.indices])

    def _scores(self, block: RowBlock, w: np.ndarray) -> np.ndarray:
        z = block.X @ w[:self.n_features]
        if self.config.add_bias:
            z = z + w[self.n_features]
        return z

    def _transpose_times(self, block: RowBlock, u: np.ndarray) -> np.ndarray:
        """X_block^T u, extended with sum(u) for the bias coordinate."""
        out = block.X.T @ u
        if self.config.add_bias:
            out = np.append(out, u.sum())
        return out

    def _regularizer_weights(self, w: np.ndarray) -> np.ndarray:
        """w with the bias coordinate zeroed: the regularizer never touches it."""
        if not self.config.add_bias:
            return w
        masked = w.copy()
        masked[self.n_features] = 0.0
        return masked

    def _check(self, w: np.ndarray):
        if w.shape != (self.dimension,):
            raise DimensionMismatchError(f"weights have shape {w.shape}, expected ({self.dimension},)")

    def objective(self, w: np.ndarray, batch: BatchSpec = FULL_BATCH) -> float:
        self._check(w)
        blocks = self._blocks(batch)
        total = self.reducer.reduce(blocks, lambda b: float(self.loss(b.y * self._scores(b, w)).sum()))
        wr = self._regularizer_weights(w)
        return total / batch.size(self.n_rows) + 0.5 * self.lam * float(wr @ wr)

    def gradient(self, w: np.ndarray, batch: BatchSpec = FULL_BATCH) -> np.ndarray:
        self._check(w)
        blocks = self._blocks(batch)

        def block_gradient(b: RowBlock) -> np.ndarray:
            coef = self.loss_derivative(b.y * self._scores(b, w)) * b.y
            return self._transpose_times(b, coef)

        total = self.reducer.reduce(blocks, block_gradient)
        return total / batch.size(self.n_rows) + self.lam * self._regularizer_weights(w)

    def hessian_oracle(self, w: np.ndarray, batch: BatchSpec = FULL_BATCH) -> HessianOracle:
        self._check(w)
        blocks = self._blocks(batch)
        weights = [self.curvature(b.y * self._scores(b, w)) for b in blocks]
        scale = 1.0 / batch.size(self.n_rows)
        pairs = list(zip(blocks, weights))

        def hv(v: np.ndarray) -> np.ndarray:
            total = self.reducer.reduce(pairs, lambda p: self._transpose_times(p[0], p[1] * self._scores(p[0], v)))
            return total * scale + self.lam * self._regularizer_weights(v)

        hv.rows = batch.size(self.n_rows)
        return hv

    def predict_accuracy(self, data: Dataset, w: np.ndarray) -> float:
        self._check(w)
        if data.n_cols > self.n_features:
            raise DimensionMismatchError(
                f"evaluation data has {data.n_cols} features, the model has {self.n_features}")
        z = data.features.to_csr() @ w[:data.n_cols]
        if self.config.add_bias:
            z = z + w[self.n_features]
        predicted = np.where(z >= 0.0, 1.0, -1.0)
        return float(np.mean(predicted == data.labels))

    def cache_key(self) -> Optional[str]:
        return f"{self.kind}|lambda={self.lam!r}|bias={int(self.config.add_bias)}|data={self.data.digest()}"


def make_problem(config: ProblemConfig, data: Dataset, reducer: Optional[RowReducer] = None) -> Problem:
    config.validate()
    return PROBLEM_KINDS[config.kind](config, data, reducer)
