"""
Batch and recursive estimation of the subspace predictor

Both estimators share one time alignment. For origin i the regressor stacks
the past window W(i-rho .. i-1) as [U; Y], the future inputs u(i .. i+l-1) and
the estimated innovations e(i .. i+l-1). The target is y(i+1 .. i+l). At time
k the recursive update uses i = k - l, so the newest target sample is y(k).
"""

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import LinAlgError, cho_factor, pinv, qr, solve_triangular

from .errors import DimensionError, EstimatorFault, ExportError, RangeError
from .plant import ProportionalFeedback, prbs, simulate
from .subspace import LtiRealization, as_signal, hankel, io_hankel, toeplitz

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]

RIDGE = 1e-8
RANK_TOLERANCE = 1e-10
# smallest eigenvalue the covariance may keep before it is reset
EIGEN_FLOOR = 1e-12


@dataclass(frozen=True)
class WindowLayout:
    n_u: int
    n_y: int
    rho: int
    span: int

    def __post_init__(self):
        if min(self.n_u, self.n_y, self.rho, self.span) < 1:
            raise DimensionError(f"Window layout needs positive sizes: {self}")

    @property
    def past_dim(self) -> int:
        return (self.n_u + self.n_y) * self.rho

    @property
    def future_u_dim(self) -> int:
        return self.n_u * self.span

    @property
    def future_e_dim(self) -> int:
        return self.n_y * self.span

    @property
    def regressor_dim(self) -> int:
        return self.past_dim + self.future_u_dim + self.future_e_dim

    @property
    def target_dim(self) -> int:
        return self.n_y * self.span

    @property
    def innovation_dim(self) -> int:
        """Regressor size of the recursive innovation estimator (span l)"""
        return (self.n_u + self.n_y) * self.span


@dataclass(frozen=True)
class PredictorGains:
    L_W: Array
    L_u: Array
    L_e: Array
    layout: WindowLayout

    def __post_init__(self):
        lay = self.layout
        expected = {
            "L_W": (lay.target_dim, lay.past_dim),
            "L_u": (lay.target_dim, lay.future_u_dim),
            "L_e": (lay.target_dim, lay.future_e_dim),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise DimensionError(
                    f"{name} has shape {getattr(self, name).shape}, expected {shape}"
                )
        if not all(np.all(np.isfinite(getattr(self, name))) for name in expected):
            raise EstimatorFault("Predictor gains contain non-finite entries")

    @classmethod
    def from_matrix(cls, L: ArrayLike, layout: WindowLayout) -> "PredictorGains":
        """Partition L into [L_W, L_u, L_e] at the exact block boundaries"""
        L = np.asarray(L, dtype=np.float64)
        if L.shape != (layout.target_dim, layout.regressor_dim):
            raise DimensionError(
                f"Predictor matrix has shape {L.shape}, expected "
                f"{(layout.target_dim, layout.regressor_dim)}"
            )
        w_end = layout.past_dim
        u_end = w_end + layout.future_u_dim
        return cls(
            L[:, :w_end].copy(), L[:, w_end:u_end].copy(), L[:, u_end:].copy(), layout
        )

    @property
    def matrix(self) -> Array:
        return np.hstack([self.L_W, self.L_u, self.L_e])

    def predict(
        self,
        w_past: ArrayLike,
        u_future: ArrayLike,
        e_future: Optional[ArrayLike] = None,
    ) -> Array:
        y = self.L_W @ np.asarray(w_past) + self.L_u @ np.asarray(u_future)
        if e_future is not None:
            y = y + self.L_e @ np.asarray(e_future)
        return y


@dataclass(frozen=True)
class RlsState:
    """
    Recursive least-squares state: theta maps regressors to targets
    (n_outputs x n_regressors) and P is the scaled inverse information matrix.
    """

    P: Array
    theta: Array
    forgetting: float
    initial_covariance: float = 1e4
    ceiling: bool = True
    check_interval: int = 1
    updates: int = 0
    resets: int = 0

    @classmethod
    def initial(
        cls,
        n_regressors: int,
        n_outputs: int,
        forgetting: float = 0.995,
        initial_covariance: float = 1e4,
        ceiling: bool = True,
        check_interval: int = 1,
    ) -> "RlsState":
        if not 0.0 < forgetting <= 1.0:
            raise DimensionError(f"Forgetting factor {forgetting} outside (0, 1]")
        return cls(
            P=initial_covariance * np.eye(n_regressors),
            theta=np.zeros((n_outputs, n_regressors)),
            forgetting=forgetting,
            initial_covariance=initial_covariance,
            ceiling=ceiling,
            check_interval=check_interval,
        )

    @property
    def n_regressors(self) -> int:
        return self.P.shape[0]


def _rls_step(state: RlsState, w: Array, target: Array) -> RlsState:
    if w.shape != (state.n_regressors,):
        raise DimensionError(
            f"Regressor of size {w.shape} for an estimator of size {state.n_regressors}"
        )
    if target.shape != (state.theta.shape[0],):
        raise DimensionError(
            f"Target of size {target.shape} for {state.theta.shape[0]} outputs"
        )

    P = state.P
    lam = state.forgetting
    # no forgetting while the covariance sits above its initial size
    if state.ceiling and np.trace(P) > lam * state.initial_covariance * P.shape[0]:
        lam = 1.0

    xi = w @ P
    Z = xi / (lam + xi @ w)
    P_next = (P - np.outer(xi, Z)) / lam
    P_next = 0.5 * (P_next + P_next.T)
    theta = state.theta + np.outer(target - state.theta @ w, Z)

    if not (np.all(np.isfinite(P_next)) and np.all(np.isfinite(theta))):
        raise EstimatorFault(f"Non-finite RLS update after {state.updates} updates")

    updates = state.updates + 1
    healthy = bool(np.all(np.diag(P_next) > 0.0))
    if healthy and updates % state.check_interval == 0:
        try:
            cho_factor(P_next - EIGEN_FLOOR * np.eye(P.shape[0]), check_finite=False)
        except LinAlgError:
            healthy = False
    if not healthy:
        logger.warning(
            "Covariance lost positive definiteness after %d updates; reset to %.3g I",
            updates,
            state.initial_covariance,
        )
        P_next = state.initial_covariance * np.eye(P.shape[0])
        return replace(
            state, P=P_next, theta=theta, updates=updates, resets=state.resets + 1
        )
    return replace(state, P=P_next, theta=theta, updates=updates)


def rls_innovation_update(
    state: RlsState, w_past: ArrayLike, y_now: ArrayLike
) -> Tuple[RlsState, Array, Array]:
    """
    One innovation-estimator update on the past window W(k-l .. k-1)

    Returns the new state, the a posteriori prediction y_hat(k) and the
    innovation estimate e_hat(k) = y(k) - y_hat(k).
    """
    w = np.asarray(w_past, dtype=np.float64)
    y = np.asarray(y_now, dtype=np.float64)
    state = _rls_step(state, w, y)
    y_hat = state.theta @ w
    return state, y_hat, y - y_hat


def rls_predictor_update(
    state: RlsState, regressor: ArrayLike, y_future: ArrayLike, layout: WindowLayout
) -> Tuple[RlsState, PredictorGains]:
    """One predictor-estimator update; regressor is [W_past; U_future; E_future]"""
    w = np.asarray(regressor, dtype=np.float64)
    if w.shape != (layout.regressor_dim,):
        raise DimensionError(
            f"Predictor regressor of size {w.shape}, expected {layout.regressor_dim}"
        )
    state = _rls_step(state, w, np.asarray(y_future, dtype=np.float64))
    return state, PredictorGains.from_matrix(state.theta, layout)


class InnovationEstimator:
    def __init__(
        self,
        layout: WindowLayout,
        forgetting: float = 0.995,
        initial_covariance: float = 1e4,
        ceiling: bool = True,
        check_interval: int = 1,
    ):
        self.layout = layout
        self.state = RlsState.initial(
            layout.innovation_dim,
            layout.n_y,
            forgetting,
            initial_covariance,
            ceiling,
            check_interval,
        )

    def update(self, w_past: ArrayLike, y_now: ArrayLike) -> Tuple[Array, Array]:
        self.state, y_hat, e_hat = rls_innovation_update(self.state, w_past, y_now)
        return y_hat, e_hat


class PredictorEstimator:
    def __init__(
        self,
        layout: WindowLayout,
        forgetting: float = 0.995,
        initial_covariance: float = 1e4,
        ceiling: bool = True,
        check_interval: int = 1,
    ):
        self.layout = layout
        self.state = RlsState.initial(
            layout.regressor_dim,
            layout.target_dim,
            forgetting,
            initial_covariance,
            ceiling,
            check_interval,
        )
        self.gains: Optional[PredictorGains] = None
        # a priori prediction error norm of every update
        self.prediction_errors: List[float] = []

    def update(self, regressor: ArrayLike, y_future: ArrayLike) -> PredictorGains:
        theta = self.state.theta
        self.state, self.gains = rls_predictor_update(
            self.state, regressor, y_future, self.layout
        )
        a_priori = np.asarray(y_future) - theta @ np.asarray(regressor)
        self.prediction_errors.append(float(np.linalg.norm(a_priori)))
        return self.gains


@dataclass(frozen=True)
class InnovationBatch:
    e_hat: Array
    start: int
    rank: int
    rank_deficient: bool


def batch_innovation(
    u: ArrayLike, y: ArrayLike, rho: int, rcond: float = RANK_TOLERANCE
) -> InnovationBatch:
    """
    Innovation estimates e(k) = y(k) - Y/W from a projection on the past rho
    samples, for k = rho .. N-1. Earlier rows of e_hat are zero.
    """
    u, y = as_signal(u), as_signal(y)
    N = y.shape[0]
    if u.shape[0] != N:
        raise DimensionError("Input and output records differ in length")
    if N <= rho:
        raise RangeError(f"{N} samples cannot fill a past window of {rho}")
    cols = N - rho
    W = io_hankel(u, y, 0, rho, cols).data
    Y = y[rho:].T
    W_pinv = pinv(W, rtol=rcond)
    e_hat = np.zeros_like(y)
    e_hat[rho:] = (Y - (Y @ W_pinv) @ W).T
    rank = int(np.linalg.matrix_rank(W, tol=rcond * np.linalg.norm(W, 2)))
    deficient = rank < W.shape[0]
    if deficient:
        logger.info("Innovation projection rank %d of %d", rank, W.shape[0])
    return InnovationBatch(e_hat, rho, rank, deficient)


@dataclass(frozen=True)
class PredictorFit:
    gains: PredictorGains
    rank: int
    rank_deficient: bool
    regularized: bool
    residual: float


def predictor_regression(
    u: Array, y: Array, e_hat: Optional[Array], layout: WindowLayout, first: int
) -> Tuple[Array, Array]:
    """Regressor and target matrices for origins first .. N-l-1"""
    N = y.shape[0]
    cols = N - layout.span - first
    if first < layout.rho or cols < 1:
        raise RangeError(
            f"{N} samples give no predictor columns for rho={layout.rho}, "
            f"l={layout.span} from origin {first}"
        )
    past = io_hankel(u, y, first - layout.rho, layout.rho, cols).data
    future_u = hankel(u, first, layout.span, cols).data
    if e_hat is None:
        future_e = np.zeros((layout.future_e_dim, cols))
    else:
        future_e = hankel(e_hat, first, layout.span, cols).data
    target = hankel(y, first + 1, layout.span, cols).data
    return np.vstack([past, future_u, future_e]), target


def _qr_least_squares(
    Phi: Array, target: Array, ridge: float
) -> Tuple[Array, int, bool, bool]:
    """Solve min |target - L Phi|_F (+ ridge |L|_F^2) by pivoted QR"""
    A, B = Phi.T, target.T
    _, R, _ = qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > RANK_TOLERANCE * diag[0])) if diag.size and diag[0] else 0
    deficient = rank < Phi.shape[0]
    regularized = False
    if deficient and ridge <= 0.0:
        ridge = RIDGE
        regularized = True
    if ridge > 0.0:
        A = np.vstack([A, np.sqrt(ridge) * np.eye(A.shape[1])])
        B = np.vstack([B, np.zeros((A.shape[1], B.shape[1]))])
    Q, R, piv = qr(A, mode="economic", pivoting=True)
    X = solve_triangular(R, Q.T @ B)
    theta_T = np.empty_like(X)
    theta_T[piv] = X
    return theta_T.T, rank, deficient, regularized


def batch_fit_predictor(
    u: ArrayLike,
    y: ArrayLike,
    innovations: Optional[Union[InnovationBatch, ArrayLike]],
    rho: int,
    span: int,
    ridge: float = 0.0,
    first: Optional[int] = None,
) -> PredictorFit:
    """
    Least-squares predictor fit of Y_future on [W_past; U_future; E_future]

    ``innovations=None`` fits without the innovation regressor, so L_e is zero.
    A rank-deficient regressor is solved with a small ridge and flagged.
    """
    u, y = as_signal(u), as_signal(y)
    layout = WindowLayout(u.shape[1], y.shape[1], rho, span)
    start = rho
    e_hat = None
    if isinstance(innovations, InnovationBatch):
        e_hat, start = innovations.e_hat, max(rho, innovations.start)
    elif innovations is not None:
        e_hat = as_signal(innovations)
    if first is not None:
        start = max(start, first)

    Phi, target = predictor_regression(u, y, e_hat, layout, start)
    if e_hat is None:
        Phi_fit = Phi[: layout.past_dim + layout.future_u_dim]
    else:
        Phi_fit = Phi
    theta, rank, deficient, regularized = _qr_least_squares(Phi_fit, target, ridge)
    if e_hat is None:
        theta = np.hstack([theta, np.zeros((layout.target_dim, layout.future_e_dim))])
    if deficient:
        logger.info("Predictor regressor rank %d of %d", rank, Phi_fit.shape[0])
    gains = PredictorGains.from_matrix(theta, layout)
    residual = float(np.linalg.norm(target - theta @ Phi))
    return PredictorFit(gains, rank, deficient, regularized, residual)


@dataclass(frozen=True)
class BiasReport:
    biased_error: float
    unbiased_error: float
    reference_norm: float
    closed_loop: bool
    # relative distance between the naive and compensated L_u
    fit_gap: float = 0.0

    @property
    def ratio(self) -> float:
        return self.unbiased_error / self.biased_error if self.biased_error else 1.0


def markov_reference(real: LtiRealization, span: int) -> Array:
    """True L_u under the one-step-shifted alignment"""
    return toeplitz(real.shifted(), span)


def bias_comparison(
    real: LtiRealization,
    samples: int = 5000,
    rho: int = 20,
    span: int = 5,
    seed: int = 0,
    closed_loop: bool = True,
    noise: bool = True,
    excitation: float = 0.5,
) -> BiasReport:
    """
    Fit the predictor with and without the innovation regressor on simulated
    data and compare both L_u estimates with the true Markov parameters.

    Closed-loop data comes from a proportional output feedback with a small
    PRBS dither; open-loop data from a PRBS input alone.
    """
    rng = np.random.default_rng(seed) if noise else None
    if closed_loop:
        policy = ProportionalFeedback.around(
            real, samples, seed=seed + 1, dither_amplitude=excitation
        )
        data = simulate(real, samples, rng, policy=policy)
    else:
        inputs = prbs(samples, real.n_u, seed=seed + 1, amplitude=excitation)
        data = simulate(real, samples, rng, inputs=inputs)

    innovations = batch_innovation(data.u, data.y, rho)
    first = 2 * rho
    naive = batch_fit_predictor(data.u, data.y, None, rho, span, first=first)
    compensated = batch_fit_predictor(
        data.u, data.y, innovations, rho, span, first=first
    )

    reference = markov_reference(real, span)
    report = BiasReport(
        biased_error=float(np.linalg.norm(naive.gains.L_u - reference)),
        unbiased_error=float(np.linalg.norm(compensated.gains.L_u - reference)),
        reference_norm=float(np.linalg.norm(reference)),
        closed_loop=closed_loop,
        fit_gap=float(
            np.linalg.norm(naive.gains.L_u - compensated.gains.L_u)
            / max(np.linalg.norm(reference), np.finfo(float).tiny)
        ),
    )
    logger.debug(
        "Bias comparison seed %d: naive %.4g, compensated %.4g, gap %.3g",
        seed,
        report.biased_error,
        report.unbiased_error,
        report.fit_gap,
    )
    return report


def dump_estimator_state(
    innovation: InnovationEstimator,
    predictor: PredictorEstimator,
    directory: Union[str, Path],
) -> Tuple[Path, ...]:
    """One CSV per matrix, row-major, with a '# rows,cols' header"""
    directory = Path(directory)
    matrices = {
        "P_e.csv": innovation.state.P,
        "Gamma_e.csv": innovation.state.theta,
        "P_y.csv": predictor.state.P,
        "L.csv": predictor.state.theta,
    }
    written = []
    try:
        directory.mkdir(parents=True, exist_ok=True)
        for name, matrix in matrices.items():
            path = directory / name
            rows, cols = matrix.shape
            np.savetxt(
                path, matrix, fmt="%.10g", delimiter=",", header=f"{rows},{cols}"
            )
            written.append(path)
    except OSError as e:
        raise ExportError("Could not write estimator state", directory) from e
    return tuple(written)
