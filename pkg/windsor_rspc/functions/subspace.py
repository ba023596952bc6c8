"""
Structural linear algebra for subspace predictors

Stacked vectors, block Hankel matrices, the summation matrices S and 1,
extended observability/controllability, block-Toeplitz matrices and the
noise-free data equation used as a reconstruction oracle.

Signals are arrays of shape (T, n): one row per sample. Stacked vectors and
Hankel columns are time-major, so block b holds the sample at origin + b.
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import ArrayLike, NDArray

from .errors import DimensionError, RangeError

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]

# Frobenius norm of the predictor-form transition power below which the
# truncated past window reproduces the state
DECAY_TOLERANCE = 1e-6


def as_signal(signal: ArrayLike) -> Array:
    """Return the signal as a float (T, n) array; 1-D input is a scalar signal"""
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.ndim != 2:
        raise DimensionError(f"Signal must be 1-D or 2-D, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class StackedVector:
    origin: int
    span: int
    block_dim: int
    data: Array

    def __post_init__(self):
        if self.data.shape != (self.block_dim * self.span,):
            raise DimensionError(
                f"Stacked vector of span {self.span} and block {self.block_dim} "
                f"cannot hold data of shape {self.data.shape}"
            )

    def block(self, b: int) -> Array:
        if not 0 <= b < self.span:
            raise RangeError(f"Block {b} outside span {self.span}")
        n = self.block_dim
        return self.data[b * n : (b + 1) * n]


@dataclass(frozen=True)
class HankelMatrix:
    origin: int
    rows_span: int
    cols: int
    block_dim: int
    data: Array

    def __post_init__(self):
        expected = (self.block_dim * self.rows_span, self.cols)
        if self.data.shape != expected:
            raise DimensionError(
                f"Hankel data shape {self.data.shape} differs from {expected}"
            )

    def block(self, i: int, j: int) -> Array:
        n = self.block_dim
        return self.data[i * n : (i + 1) * n, j]

    def column(self, j: int) -> StackedVector:
        return StackedVector(
            self.origin + j, self.rows_span, self.block_dim, self.data[:, j].copy()
        )


@dataclass(frozen=True)
class IoHankel:
    """Input and output Hankel matrices stacked as W = [U; Y]"""

    u: HankelMatrix
    y: HankelMatrix

    def __post_init__(self):
        if (self.u.origin, self.u.rows_span, self.u.cols) != (
            self.y.origin,
            self.y.rows_span,
            self.y.cols,
        ):
            raise DimensionError("Input and output Hankel matrices are misaligned")

    @property
    def origin(self) -> int:
        return self.u.origin

    @property
    def rows_span(self) -> int:
        return self.u.rows_span

    @property
    def cols(self) -> int:
        return self.u.cols

    @property
    def data(self) -> Array:
        return np.vstack([self.u.data, self.y.data])


def stack_vector(signal: ArrayLike, k: int, span: int) -> StackedVector:
    """Stack x(k), ..., x(k+span-1) into one column"""
    x = as_signal(signal)
    if span < 1:
        raise RangeError(f"Span must be at least 1, got {span}")
    if k < 0 or k + span > x.shape[0]:
        raise RangeError(
            f"Window [{k}, {k + span - 1}] outside signal of length {x.shape[0]}"
        )
    return StackedVector(k, span, x.shape[1], x[k : k + span].reshape(-1).copy())


def hankel(signal: ArrayLike, k: int, span: int, cols: int) -> HankelMatrix:
    """Block Hankel matrix whose column j is stack_vector(signal, k + j, span)"""
    x = as_signal(signal)
    if span < 1 or cols < 1:
        raise RangeError(f"Span and column count must be positive ({span}, {cols})")
    last = k + span + cols - 2
    if k < 0 or last >= x.shape[0]:
        raise RangeError(
            f"Hankel matrix needs samples [{k}, {last}], signal has {x.shape[0]}"
        )
    n = x.shape[1]
    # windows[j] has shape (n, span)
    windows = sliding_window_view(x[k : last + 1], span, axis=0)
    data = np.ascontiguousarray(windows.transpose(0, 2, 1).reshape(cols, span * n).T)
    return HankelMatrix(k, span, cols, n, data)


def io_hankel(u: ArrayLike, y: ArrayLike, k: int, span: int, cols: int) -> IoHankel:
    return IoHankel(hankel(u, k, span, cols), hankel(y, k, span, cols))


def persistent_excitation(signal: ArrayLike, order: int) -> Tuple[int, bool]:
    """
    Rank of the order-deep Hankel matrix of the signal and whether the signal
    is persistently exciting of that order
    """
    x = as_signal(signal)
    cols = x.shape[0] - order + 1
    if cols < 1:
        raise RangeError(f"Signal of length {x.shape[0]} is shorter than {order}")
    rank = int(np.linalg.matrix_rank(hankel(x, 0, order, cols).data))
    return rank, rank == x.shape[1] * order


@dataclass(frozen=True)
class StructuralMatrices:
    s_lower: Array
    ones_stack: Array
    span: int
    block_dim: int

    def cumulate(self, increments: ArrayLike) -> Array:
        return self.s_lower @ np.asarray(increments, dtype=np.float64)

    def replicate(self, v: ArrayLike) -> Array:
        return self.ones_stack @ np.asarray(v, dtype=np.float64)


def structural(span: int, n: int) -> StructuralMatrices:
    if span < 1 or n < 1:
        raise DimensionError(f"Structural matrices need span, n >= 1 ({span}, {n})")
    eye = np.eye(n)
    s_lower = np.kron(np.tril(np.ones((span, span))), eye)
    ones_stack = np.kron(np.ones((span, 1)), eye)
    return StructuralMatrices(s_lower, ones_stack, span, n)


@dataclass(frozen=True)
class LtiRealization:
    """Innovation-form realization x+ = Ax + Bu + Ke, y = Cx + Du + e"""

    A: Array
    B: Array
    C: Array
    D: Optional[Array] = None
    K: Optional[Array] = None
    R_e: Optional[Array] = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        B = np.atleast_2d(np.asarray(self.B, dtype=np.float64))
        C = np.atleast_2d(np.asarray(self.C, dtype=np.float64))
        n_x, n_u, n_y = A.shape[0], B.shape[1], C.shape[0]
        D = np.zeros((n_y, n_u)) if self.D is None else np.asarray(self.D, float)
        K = np.zeros((n_x, n_y)) if self.K is None else np.asarray(self.K, float)
        R_e = np.zeros((n_y, n_y)) if self.R_e is None else np.asarray(self.R_e, float)

        shapes = {
            "A": (A.shape, (n_x, n_x)),
            "B": (B.shape, (n_x, n_u)),
            "C": (C.shape, (n_y, n_x)),
            "D": (D.shape, (n_y, n_u)),
            "K": (K.shape, (n_x, n_y)),
            "R_e": (R_e.shape, (n_y, n_y)),
        }
        for name, (got, expected) in shapes.items():
            if got != expected:
                raise DimensionError(f"{name} has shape {got}, expected {expected}")
        if not np.allclose(R_e, R_e.T, atol=1e-12):
            raise DimensionError("Innovation covariance R_e must be symmetric")

        for name, value in zip("ABCD", (A, B, C, D)):
            object.__setattr__(self, name, value)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "R_e", R_e)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    @property
    def A_tilde(self) -> Array:
        return self.A - self.K @ self.C

    @property
    def B_tilde(self) -> Array:
        return self.B - self.K @ self.D

    def predictor_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A_tilde))))

    def is_observable(self) -> bool:
        return np.linalg.matrix_rank(observability(self, self.n_x)) == self.n_x

    def observable_part(self) -> "LtiRealization":
        """
        Restriction to the observable subspace. The unobservable subspace is
        A-invariant and orthogonal to the basis T, so (T'AT, T'B, CT, T'K)
        has the same input/output and innovation behaviour.
        """
        O = observability(self, self.n_x)
        _, s, Vt = np.linalg.svd(O)
        tol = max(O.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
        rank = int(np.sum(s > tol))
        if rank == self.n_x:
            return self
        T = Vt[:rank].T
        return LtiRealization(
            T.T @ self.A @ T,
            T.T @ self.B,
            self.C @ T,
            self.D,
            T.T @ self.K,
            self.R_e,
        )

    def shifted(self) -> "LtiRealization":
        """
        Realization whose Toeplitz matrix maps u(i..i+l-1) to y(i+1..i+l):
        (A, AB, C, CB)
        """
        return LtiRealization(self.A, self.A @ self.B, self.C, self.C @ self.B)


def _power_blocks(A: Array, count: int):
    power = np.eye(A.shape[0])
    for _ in range(count):
        yield power
        power = power @ A


def observability(real: LtiRealization, span: int) -> Array:
    return observability_matrix(real.A, real.C, span)


def observability_matrix(A: Array, C: Array, span: int) -> Array:
    if span < 1:
        raise DimensionError(f"Span must be at least 1, got {span}")
    return np.vstack([C @ power for power in _power_blocks(A, span)])


def controllability(A: ArrayLike, B: ArrayLike, span: int) -> Array:
    """Column blocks [A^(span-1) B, ..., AB, B]"""
    if span < 1:
        raise DimensionError(f"Span must be at least 1, got {span}")
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    blocks = [power @ B for power in _power_blocks(A, span)]
    return np.hstack(blocks[::-1])


def block_toeplitz(A: Array, B: Array, C: Array, D: Array, span: int) -> Array:
    """Lower block-triangular Toeplitz matrix with D on the diagonal"""
    if span < 1:
        raise DimensionError(f"Span must be at least 1, got {span}")
    n_y, n_u = D.shape
    markov = [D] + [C @ power @ B for power in _power_blocks(A, span - 1)]
    H = np.zeros((span * n_y, span * n_u))
    for i in range(span):
        for j in range(i + 1):
            H[i * n_y : (i + 1) * n_y, j * n_u : (j + 1) * n_u] = markov[i - j]
    return H


def toeplitz(real: LtiRealization, span: int) -> Array:
    return block_toeplitz(real.A, real.B, real.C, real.D, span)


@dataclass(frozen=True)
class DataEquationResult:
    y_future: Array
    valid: bool
    decay_norm: float


def data_equation_rhs(
    real: LtiRealization,
    past_W: IoHankel,
    future_U: HankelMatrix,
    future_E: HankelMatrix,
) -> DataEquationResult:
    """
    Future outputs predicted from past inputs/outputs, future inputs and
    future innovations of a known realization
    """
    rho, span = past_W.rows_span, future_U.rows_span
    if future_E.rows_span != span:
        raise DimensionError("Future input and innovation spans differ")
    if not past_W.cols == future_U.cols == future_E.cols:
        raise DimensionError("Past and future Hankel matrices differ in columns")
    if past_W.origin + rho != future_U.origin or future_U.origin != future_E.origin:
        raise DimensionError(
            f"Past window at {past_W.origin} (span {rho}) does not end where the "
            f"future window at {future_U.origin} starts"
        )
    if (past_W.u.block_dim, past_W.y.block_dim) != (real.n_u, real.n_y):
        raise DimensionError("Past Hankel blocks do not match the realization")
    if future_U.block_dim != real.n_u or future_E.block_dim != real.n_y:
        raise DimensionError("Future Hankel blocks do not match the realization")

    A_tilde = real.A_tilde
    decay = float(np.linalg.norm(np.linalg.matrix_power(A_tilde, rho), "fro"))
    valid = decay < DECAY_TOLERANCE and real.predictor_radius() < 1.0
    if not valid:
        logger.warning(
            "Data equation truncation not negligible: |A_tilde^%d|_F = %.3g",
            rho,
            decay,
        )

    past_map = np.hstack(
        [
            controllability(A_tilde, real.B_tilde, rho),
            controllability(A_tilde, real.K, rho),
        ]
    )
    gamma = observability(real, span)
    h_u = toeplitz(real, span)
    h_e = block_toeplitz(real.A, real.K, real.C, np.eye(real.n_y), span)
    y_future = (
        gamma @ past_map @ past_W.data
        + h_u @ future_U.data
        + h_e @ future_E.data
    )
    return DataEquationResult(y_future, valid, decay)


class SignalRing:
    """
    Fixed-capacity ring of samples addressed by absolute time index.

    Index 0 is the first sample ever pushed; only the latest ``capacity``
    samples are retained.
    """

    def __init__(self, dim: int, capacity: int):
        if dim < 1 or capacity < 1:
            raise DimensionError(
                f"Ring needs positive dim and capacity ({dim}, {capacity})"
            )
        self.dim = dim
        self.capacity = capacity
        self._buffer: deque = deque(maxlen=capacity)
        self.count = 0

    def __len__(self) -> int:
        return len(self._buffer)

    @property
    def first(self) -> int:
        """Absolute index of the oldest retained sample"""
        return self.count - len(self._buffer)

    def push(self, sample: ArrayLike):
        x = np.asarray(sample, dtype=np.float64).reshape(-1)
        if x.shape[0] != self.dim:
            raise DimensionError(
                f"Sample of size {x.shape[0]} pushed to ring of dim {self.dim}"
            )
        self._buffer.append(x.copy())
        self.count += 1

    def at(self, index: int) -> Array:
        if not self.first <= index < self.count:
            raise RangeError(
                f"Index {index} not retained "
                f"(ring holds [{self.first}, {self.count - 1}])"
            )
        return self._buffer[index - self.first]

    def window(self, start: int, span: int) -> Array:
        """Samples start..start+span-1 as a (span, dim) array"""
        if start < self.first or start + span > self.count:
            raise RangeError(
                f"Window [{start}, {start + span - 1}] not retained "
                f"(ring holds [{self.first}, {self.count - 1}])"
            )
        offset = start - self.first
        return np.array([self._buffer[offset + i] for i in range(span)])


@dataclass
class IoWindow:
    """
    Paired input/output rings for the controller.

    At time k the output ring holds y up to k while the input ring holds the
    applied inputs up to k-1.
    """

    n_u: int
    n_y: int
    capacity: int
    u: SignalRing = field(init=False)
    y: SignalRing = field(init=False)

    def __post_init__(self):
        self.u = SignalRing(self.n_u, self.capacity)
        self.y = SignalRing(self.n_y, self.capacity)

    @property
    def now(self) -> int:
        """Index of the latest output sample"""
        return self.y.count - 1

    def record(self, u_prev: Optional[ArrayLike], y_now: ArrayLike):
        if u_prev is not None:
            self.u.push(u_prev)
        self.y.push(y_now)
        if self.u.count not in (self.y.count, self.y.count - 1):
            raise DimensionError("Input and output rings drifted apart")

    def stacked(
        self,
        start: int,
        span: int,
        u_offset: Optional[Array] = None,
        y_offset: Optional[Array] = None,
    ) -> Array:
        """Stacked [U; Y] over start..start+span-1, optionally offset-removed"""
        u = self.u.window(start, span)
        y = self.y.window(start, span)
        if u_offset is not None:
            u = u - u_offset
        if y_offset is not None:
            y = y - y_offset
        return np.concatenate([u.reshape(-1), y.reshape(-1)])

    def increments(self, start: int, span: int) -> Array:
        """Stacked [dU; dY] over start..start+span-1, dx(j) = x(j) - x(j-1)"""
        u = np.diff(self.u.window(start - 1, span + 1), axis=0)
        y = np.diff(self.y.window(start - 1, span + 1), axis=0)
        return np.concatenate([u.reshape(-1), y.reshape(-1)])
