"""Training a fixed-pattern factor L so that L L^T x reproduces A x.

The model is a two-layer linear network whose edges are the nonzeros of the
ICHOL(0) pattern: the hidden layer computes ``u = L^T x`` and the output is
``L u``. Only the stored values are trained; the pattern never changes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import _kernels
from .sparse import (
    CsrMatrix,
    DimensionError,
    LowerFactor,
    NotPositiveDiagonalError,
    extract_lower_pattern,
    lower_values,
    spmv,
)


class TrainingError(ArithmeticError):
    pass


def default_sample_count(n: int) -> int:
    """ceil(sqrt(n))."""
    return math.isqrt(n - 1) + 1 if n > 0 else 0


def default_alpha(n: int, normalize: bool) -> float:
    return n**1.5 / 20000 if normalize else 0.1


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Training pairs stored row-wise: ``y_vectors[k] = A @ x_vectors[k]``."""

    x_vectors: np.ndarray
    y_vectors: np.ndarray
    normalized: bool
    seed: int

    def __len__(self) -> int:
        return self.x_vectors.shape[0]


def generate_samples(
    a: CsrMatrix, count: int | None = None, normalize: bool = False, seed: int = 0
) -> SampleSet:
    if count is None:
        count = default_sample_count(a.n)
    if count < 1:
        raise ValueError(f"sample count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((count, a.n))
    if normalize:
        x /= np.linalg.norm(x, axis=1, keepdims=True)
    y = np.stack([spmv(a, xi) for xi in x])
    return SampleSet(x, y, normalize, seed)


@dataclass(frozen=True)
class TrainConfig:
    alpha: float | None = None  # None -> default_alpha(n, normalize_samples)
    epsilon: float = 1e-8
    epochs: int = 1
    optimizer: Literal["adagrad", "sgd"] = "adagrad"
    normalize_samples: bool = False
    seed: int = 0
    samples: int | None = None  # None -> ceil(sqrt(n))
    initial_accumulator: float = 0.1  # tensorflow adagrad default

    def __post_init__(self):
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.optimizer not in ("adagrad", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.samples is not None and self.samples < 1:
            raise ValueError(f"samples must be >= 1, got {self.samples}")
        if not self.initial_accumulator >= 0:
            raise ValueError("initial_accumulator must be >= 0")

    def resolved_alpha(self, n: int) -> float:
        return self.alpha if self.alpha is not None else default_alpha(n, self.normalize_samples)


@dataclass
class TrainState:
    factor: LowerFactor
    grad_accum: np.ndarray
    loss_history: list[float] = field(default_factory=list)
    steps: int = 0
    initial_sample_loss: float = math.nan
    final_sample_loss: float = math.nan


def _check_pair(l: LowerFactor, x, y=None):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (l.n,):
        raise DimensionError(f"x has shape {x.shape}, expected ({l.n},)")
    if y is None:
        return x
    y = np.ascontiguousarray(y, dtype=np.float64)
    if y.shape != (l.n,):
        raise DimensionError(f"y has shape {y.shape}, expected ({l.n},)")
    return x, y


def forward(l: LowerFactor, x) -> np.ndarray:
    """L (L^T x) over the fixed pattern."""
    x = _check_pair(l, x)
    p = l.pattern
    u = _kernels.csr_rmatvec(p.row_ptr, p.col_idx, l.values, x)
    return _kernels.csr_matvec(p.row_ptr, p.col_idx, l.values, u)


def loss(l: LowerFactor, x, y) -> float:
    """(1/n) * ||L L^T x - y||^2."""
    x, y = _check_pair(l, x, y)
    r = forward(l, x) - y
    return float(r @ r) / l.n


def _loss_and_gradient(pattern, values, x, y):
    n = pattern.n
    u = _kernels.csr_rmatvec(pattern.row_ptr, pattern.col_idx, values, x)
    r = _kernels.csr_matvec(pattern.row_ptr, pattern.col_idx, values, u) - y
    w = _kernels.csr_rmatvec(pattern.row_ptr, pattern.col_idx, values, r)
    rows, cols = pattern.rows, pattern.col_idx
    # d/dL_ij of (1/n)||L L^T x - y||^2: output layer gives r_i u_j, hidden layer x_i (L^T r)_j
    g = (2.0 / n) * (r[rows] * u[cols] + x[rows] * w[cols])
    return float(r @ r) / n, g


def gradient(l: LowerFactor, x, y) -> np.ndarray:
    """Gradient of :func:`loss` w.r.t. each stored value of ``l``."""
    x, y = _check_pair(l, x, y)
    return _loss_and_gradient(l.pattern, l.values, x, y)[1]


def _require_finite(g: np.ndarray, step: int) -> None:
    if not np.all(np.isfinite(g)):
        bad = int(np.flatnonzero(~np.isfinite(g))[0])
        raise TrainingError(f"non-finite gradient at step {step}, nonzero {bad}")


def adagrad_step(state: TrainState, grad, alpha: float, epsilon: float) -> TrainState:
    grad = np.asarray(grad, dtype=np.float64)
    _require_finite(grad, state.steps)
    accum = state.grad_accum + grad * grad
    values = state.factor.values - alpha * grad / (np.sqrt(accum) + epsilon)
    return TrainState(
        state.factor.with_values(values), accum, list(state.loss_history), state.steps + 1
    )


def sgd_step(state: TrainState, grad, alpha: float) -> TrainState:
    grad = np.asarray(grad, dtype=np.float64)
    _require_finite(grad, state.steps)
    values = state.factor.values - alpha * grad
    return TrainState(
        state.factor.with_values(values),
        state.grad_accum.copy(),
        list(state.loss_history),
        state.steps + 1,
    )


def initial_factor(a: CsrMatrix) -> LowerFactor:
    """l_ii = sqrt(a_ii), l_ij = a_ij / sqrt(a_jj): the first Cholesky column step."""
    pos = a.require_diagonal()
    d = a.values[pos]
    bad = np.flatnonzero(~(d > 0))
    if bad.size:
        raise NotPositiveDiagonalError(int(bad[0]), float(d[bad[0]]))
    pattern = extract_lower_pattern(a)
    root = np.sqrt(d)
    values = lower_values(a) / root[pattern.col_idx]
    values[pattern.row_ptr[1:] - 1] = root
    return LowerFactor(pattern, values)


def sample_loss(l: LowerFactor, samples: SampleSet) -> float:
    """Mean of :func:`loss` over every pair in ``samples``."""
    return float(np.mean([loss(l, x, y) for x, y in zip(samples.x_vectors, samples.y_vectors)]))


def train(
    a: CsrMatrix,
    cfg: TrainConfig = TrainConfig(),
    samples: SampleSet | None = None,
    evaluate: bool = True,
) -> tuple[LowerFactor, TrainState]:
    """Fit the factor values by batch-size-1 passes over the sample set.

    Each epoch visits the samples in order; ``loss_history`` records the loss
    of every step, evaluated before its update. With ``evaluate`` the mean
    loss over the whole sample set is also computed for the initial and the
    trained factor (left as NaN otherwise, e.g. when timing).
    """
    factor = initial_factor(a)
    if samples is None:
        samples = generate_samples(a, cfg.samples, cfg.normalize_samples, cfg.seed)
    alpha = cfg.resolved_alpha(a.n)
    pattern = factor.pattern
    values = factor.values.copy()
    accum = np.full(values.shape, float(cfg.initial_accumulator))
    history: list[float] = []
    step = 0
    for _ in range(cfg.epochs):
        for x, y in zip(samples.x_vectors, samples.y_vectors):
            value, g = _loss_and_gradient(pattern, values, x, y)
            _require_finite(g, step)
            history.append(value)
            if cfg.optimizer == "adagrad":
                accum += g * g
                values -= alpha * g / (np.sqrt(accum) + cfg.epsilon)
            else:
                values -= alpha * g
            step += 1
    if not np.all(np.isfinite(values)):
        raise TrainingError("training produced non-finite factor values")
    trained = LowerFactor(pattern, values)
    state = TrainState(trained, accum, history, step)
    if evaluate:
        state.initial_sample_loss = sample_loss(factor, samples)
        state.final_sample_loss = sample_loss(trained, samples)
    return trained, state
