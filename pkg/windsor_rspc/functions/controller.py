"""
Recursive subspace predictive control

The controller works on input increments. With the predictor gains L_W, L_u
the future outputs read

    Y(k+1 .. k+l) = 1 (x) y(k) + S L_W dW(k-rho .. k-1) + S L_u dU(k .. k+l-1)

and the increments dU minimise the tracking cost subject to amplitude bounds
on the integrated command, solved through Hildreth's dual iteration.
"""

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import ConfigError, DimensionError, EstimatorFault
from .estimator import (
    InnovationEstimator,
    PredictorEstimator,
    PredictorGains,
    WindowLayout,
)
from .plant import M_OUT, N_U, prbs
from .subspace import IoWindow, SignalRing, persistent_excitation, structural

if TYPE_CHECKING:
    from ..properties.controller_properties import ControllerProperties
    from ..properties.estimator_properties import EstimatorProperties

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]
Bound = Union[float, ArrayLike]

RIDGE = 1e-8


@dataclass(frozen=True)
class ControlObjective:
    Y_r: Array
    Q: Array
    R: Array

    def __post_init__(self):
        for name in ("Q", "R"):
            W = getattr(self, name)
            if W.ndim != 2 or W.shape[0] != W.shape[1]:
                raise DimensionError(f"{name} must be square, got {W.shape}")
            if not np.allclose(W, W.T):
                raise ConfigError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(W).min() <= 0.0:
                raise ConfigError(f"{name} must be positive definite")
        if self.Y_r.shape != (self.Q.shape[0],):
            raise DimensionError(
                f"Reference of size {self.Y_r.shape} for Q of size {self.Q.shape}"
            )

    @classmethod
    def from_weights(
        cls,
        y_r: ArrayLike,
        output_weights: ArrayLike,
        input_weights: ArrayLike,
        span: int,
    ) -> "ControlObjective":
        """Constant reference and per-step diagonal weights over the horizon"""
        y_r = np.asarray(y_r, dtype=np.float64)
        eye = np.eye(span)
        return cls(
            Y_r=np.tile(y_r, span),
            Q=np.kron(eye, np.diag(np.asarray(output_weights, dtype=np.float64))),
            R=np.kron(eye, np.diag(np.asarray(input_weights, dtype=np.float64))),
        )


@dataclass(frozen=True)
class IncrementalPredictor:
    L_Wi: Array
    L_ui: Array
    Y_anchor: Array

    def predict(self, dW: ArrayLike, dU: ArrayLike) -> Array:
        return self.Y_anchor + self.L_Wi @ np.asarray(dW) + self.L_ui @ np.asarray(dU)


def build_incremental(gains: PredictorGains, y_now: ArrayLike) -> IncrementalPredictor:
    """Integrate the one-step increments of the predictor onto y(k)"""
    layout = gains.layout
    y_now = np.asarray(y_now, dtype=np.float64)
    if y_now.shape != (layout.n_y,):
        raise DimensionError(f"Output of size {y_now.shape}, expected {layout.n_y}")
    S = structural(layout.span, layout.n_y)
    return IncrementalPredictor(
        L_Wi=S.s_lower @ gains.L_W,
        L_ui=S.s_lower @ gains.L_u,
        Y_anchor=S.replicate(y_now),
    )


@dataclass(frozen=True)
class QpProblem:
    """
    min 1/2 dU' E dU + F' dU  subject to  M_con dU <= gamma

    M_con = [-S; S], so the first half of gamma holds the lower-bound headroom
    1 (x) u(k-1) - U_min and the second half the upper-bound headroom.
    """

    E: Array
    F: Array
    M_con: Array
    gamma: Array
    u_prev: Array
    factor: Tuple[Array, bool]
    regularized: bool = False

    @property
    def n_u(self) -> int:
        return self.u_prev.shape[0]

    @property
    def size(self) -> int:
        return self.F.shape[0]

    @property
    def S(self) -> Array:
        return self.M_con[self.size :]

    @property
    def gamma_minus(self) -> Array:
        return self.gamma[: self.size]

    @property
    def gamma_plus(self) -> Array:
        return self.gamma[self.size :]

    def solve(self, rhs: ArrayLike) -> Array:
        return cho_solve(self.factor, np.asarray(rhs, dtype=np.float64))

    def unconstrained(self) -> Array:
        return -self.solve(self.F)

    def cost(self, dU: ArrayLike) -> float:
        dU = np.asarray(dU, dtype=np.float64)
        return float(0.5 * dU @ self.E @ dU + self.F @ dU)

    def violation(self, dU: ArrayLike) -> float:
        """Largest constraint violation of dU, zero when feasible"""
        return float(max(0.0, np.max(self.M_con @ np.asarray(dU) - self.gamma)))


def _bound(value: Bound, n_u: int) -> Array:
    return np.broadcast_to(np.asarray(value, dtype=np.float64), (n_u,)).copy()


def build_qp(
    pred: IncrementalPredictor,
    obj: ControlObjective,
    dW_past: ArrayLike,
    u_prev: ArrayLike,
    u_min: Bound,
    u_max: Bound,
) -> QpProblem:
    u_prev = np.asarray(u_prev, dtype=np.float64)
    n_u = u_prev.shape[0]
    size = pred.L_ui.shape[1]
    if size % n_u or obj.R.shape != (size, size):
        raise DimensionError(
            f"Input weight {obj.R.shape} does not match {size} future increments"
        )
    if obj.Q.shape[0] != pred.L_ui.shape[0]:
        raise DimensionError("Output weight does not match the prediction horizon")
    span = size // n_u
    lower, upper = _bound(u_min, n_u), _bound(u_max, n_u)

    free = obj.Y_r - pred.L_Wi @ np.asarray(dW_past, dtype=np.float64) - pred.Y_anchor
    QL = obj.Q @ pred.L_ui
    F = -QL.T @ free
    E = obj.R + pred.L_ui.T @ QL
    E = 0.5 * (E + E.T)

    regularized = False
    try:
        factor = cho_factor(E)
    except LinAlgError:
        logger.warning("E not positive definite; adding ridge %.0e", RIDGE)
        E = E + RIDGE * np.eye(size)
        regularized = True
        try:
            factor = cho_factor(E)
        except LinAlgError as e:
            raise EstimatorFault("E is not positive definite after ridge") from e

    S = structural(span, n_u)
    held = S.replicate(u_prev)
    return QpProblem(
        E=E,
        F=F,
        M_con=np.vstack([-S.s_lower, S.s_lower]),
        gamma=np.concatenate([held - S.replicate(lower), S.replicate(upper) - held]),
        u_prev=u_prev,
        factor=factor,
        regularized=regularized,
    )


@dataclass(frozen=True)
class DualSolution:
    lambda_plus: Array
    lambda_minus: Array
    iterations: int
    converged: bool
    objective: Tuple[float, ...] = ()

    @property
    def multipliers(self) -> Array:
        """Multipliers in M_con row order [lower; upper]"""
        return np.concatenate([self.lambda_minus, self.lambda_plus])


def hildreth_solve(
    qp: QpProblem, max_iter: int = 200, tol: float = 1e-8
) -> DualSolution:
    """
    Hildreth's dual coordinate descent with the constraint set split into
    upper (lambda_plus) and lower (lambda_minus) bound rows.

    The dual Hessian is [[Z, -Z], [-Z, Z]] with Z = S E^-1 S'. Each sweep
    updates the pair (lambda_plus_i, lambda_minus_i) jointly; at most one of
    the two is nonzero.
    """
    n = qp.size
    zeros = np.zeros(n)
    if qp.violation(qp.unconstrained()) <= 0.0:
        return DualSolution(zeros, zeros.copy(), 0, True, (0.0,))

    S = qp.S
    V = qp.solve(S.T).T
    Z = V @ S.T
    VF = V @ qp.F
    K_plus = qp.gamma_plus + VF
    K_minus = qp.gamma_minus - VF
    diag = np.diag(Z).copy()

    def dual_objective(lp: Array, lm: Array) -> float:
        d = lp - lm
        return float(0.5 * d @ Z @ d + lp @ K_plus + lm @ K_minus)

    lp, lm = zeros.copy(), zeros.copy()
    d = zeros.copy()
    history = [dual_objective(lp, lm)]
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        lp_old, lm_old = lp.copy(), lm.copy()
        for i in range(n):
            c = Z[i] @ d - diag[i] * d[i]
            lp[i] = max(0.0, -(K_plus[i] + c) / diag[i])
            if lp[i] > 0.0:
                lm[i] = 0.0
            else:
                lm[i] = max(0.0, -(K_minus[i] - c) / diag[i])
            d[i] = lp[i] - lm[i]
        history.append(dual_objective(lp, lm))
        change = max(np.max(np.abs(lp - lp_old)), np.max(np.abs(lm - lm_old)))
        if change < tol:
            converged = True
            break

    if not converged:
        logger.warning("Hildreth stopped after %d sweeps without converging", max_iter)
    return DualSolution(lp, lm, iterations, converged, tuple(history))


def recover_control(qp: QpProblem, dual: DualSolution) -> Tuple[Array, Array]:
    """dU = -E^-1 (F + M_con' lambda) and the applied u = u(k-1) + dU(k)"""
    dU = -qp.solve(qp.F + qp.M_con.T @ dual.multipliers)
    return dU, qp.u_prev + dU[: qp.n_u]


@dataclass(frozen=True)
class StepReport:
    command: Array
    iterations: int
    converged: bool
    mode: str
    e_hat: Array
    y: Array
    regularized: bool = False


class RspcController:
    """
    Per-sample RSPC loop: output map, both recursive estimators, incremental
    predictor, QP and Hildreth.

    Before the rings are full the command is zero. During the dwell that
    follows, a PRBS excites the plant for the estimators. Control engages
    once the dwell is over.
    """

    def __init__(
        self,
        estimator: "EstimatorProperties",
        controller: "ControllerProperties",
        reference: ArrayLike,
        sample_period: float,
        excitation_seed: int = 0,
        output_map: ArrayLike = M_OUT,
    ):
        self.output_map = np.asarray(output_map, dtype=np.float64)
        n_y = self.output_map.shape[0]
        self.layout = WindowLayout(N_U, n_y, estimator.rho, estimator.span)
        self.tuning = controller
        self.u_min, self.u_max = controller.u_min, controller.u_max
        self.objective = ControlObjective.from_weights(
            reference,
            controller.output_weights,
            controller.input_weights,
            self.layout.span,
        )
        hygiene = dict(
            initial_covariance=estimator.initial_covariance,
            ceiling=estimator.covariance_ceiling,
            check_interval=estimator.health_check_interval,
        )
        self.innovation = InnovationEstimator(
            self.layout, estimator.innovation_forgetting, **hygiene
        )
        self.predictor = PredictorEstimator(
            self.layout, estimator.predictor_forgetting, **hygiene
        )
        self.mean_forgetting = estimator.operating_point_forgetting

        rho, span = self.layout.rho, self.layout.span
        capacity = rho + span + 2
        self.window = IoWindow(N_U, n_y, capacity)
        self.innovations = SignalRing(n_y, capacity)
        self.fill_samples = rho + span
        self.predictor_start = max(rho + span, 2 * span)
        self.engagement = controller.engagement_sample(rho, span, sample_period)
        self.excitation = prbs(
            max(self.engagement - self.fill_samples, 1),
            N_U,
            seed=excitation_seed,
            switch_period=controller.excitation_switch,
            amplitude=controller.excitation_amplitude,
        )
        order = min(span, self.excitation.shape[0])
        rank, exciting = persistent_excitation(self.excitation, order)
        logger.info(
            "Dwell excitation: %d samples, rank %d of %d at order %d%s",
            self.excitation.shape[0],
            rank,
            N_U * order,
            order,
            "" if exciting else " (not persistently exciting)",
        )
        self.y_mean: Optional[Array] = None
        self.u_mean = np.zeros(N_U)
        self.y_last = np.zeros(n_y)
        self.command = np.zeros(N_U)
        self.last_qp: Optional[QpProblem] = None
        self.last_dual: Optional[DualSolution] = None

    @property
    def k(self) -> int:
        return self.window.now

    def _track_means(self, y: Array, applied_prev: Optional[Array]):
        f = self.mean_forgetting
        self.y_mean = y.copy() if self.y_mean is None else f * self.y_mean + (1 - f) * y
        if applied_prev is not None:
            self.u_mean = f * self.u_mean + (1 - f) * applied_prev

    def _estimate(self, y: Array) -> Array:
        k = self.k
        span, rho = self.layout.span, self.layout.rho
        u_dev, y_dev = self.u_mean, self.y_mean
        e_hat = np.zeros(self.layout.n_y)
        if k >= span:
            w = self.window.stacked(k - span, span, u_dev, y_dev)
            _, e_hat = self.innovation.update(w, y - y_dev)
        self.innovations.push(e_hat)

        if k >= self.predictor_start:
            i = k - span
            regressor = np.concatenate(
                [
                    self.window.stacked(i - rho, rho, u_dev, y_dev),
                    (self.window.u.window(i, span) - u_dev).reshape(-1),
                    self.innovations.window(i, span).reshape(-1),
                ]
            )
            target = (self.window.y.window(i + 1, span) - y_dev).reshape(-1)
            self.predictor.update(regressor, target)
        return e_hat

    def _control(self, y: Array, u_prev: Array) -> Tuple[Array, int, bool, bool]:
        k, rho = self.k, self.layout.rho
        pred = build_incremental(self.predictor.gains, y)
        dW = self.window.increments(k - rho, rho)
        qp = build_qp(pred, self.objective, dW, u_prev, self.u_min, self.u_max)
        dual = hildreth_solve(qp, self.tuning.max_iter, self.tuning.tol)
        _, command = recover_control(qp, dual)
        if not dual.converged:
            logger.warning(
                "Step %d: applying unconverged command, bound violation %.3g",
                k,
                max(np.max(command - self.u_max), np.max(self.u_min - command), 0.0),
            )
        self.last_qp, self.last_dual = qp, dual
        return command, dual.iterations, dual.converged, qp.regularized

    def step(
        self, dcp: ArrayLike, applied_prev: Optional[ArrayLike] = None
    ) -> StepReport:
        """
        Advance one sample: dcp is the current pressure measurement and
        applied_prev the flap angles applied over the previous sample
        (None at the first sample).
        """
        y = self.output_map @ np.asarray(dcp, dtype=np.float64)
        prev = None if applied_prev is None else np.asarray(applied_prev, float)
        finite = bool(np.all(np.isfinite(y)))
        if not finite:
            # the rings stay aligned on the last finite output
            y = self.y_last.copy()
        self.window.record(prev, y)
        self._track_means(y, prev)
        self.y_last = y
        k = self.k
        u_prev = np.zeros(N_U) if prev is None else prev

        try:
            if not finite:
                raise EstimatorFault("non-finite pressure measurement")
            e_hat = self._estimate(y)
        except EstimatorFault as e:
            logger.warning("Step %d: %s; holding the previous command", k, e)
            if self.innovations.count <= k:
                self.innovations.push(np.zeros(self.layout.n_y))
            return StepReport(
                self.command.copy(), 0, False, "hold", np.zeros(self.layout.n_y), y
            )

        iterations, converged, regularized = 0, True, False
        if k < self.fill_samples:
            mode = "fill"
            self.command = np.zeros(N_U)
        elif k < self.engagement:
            mode = "excite"
            self.command = self.excitation[k - self.fill_samples].copy()
        else:
            mode = "control"
            try:
                self.command, iterations, converged, regularized = self._control(
                    y, u_prev
                )
            except EstimatorFault as e:
                logger.warning("Step %d: %s; holding the previous command", k, e)
                mode = "hold"
        return StepReport(
            self.command.copy(), iterations, converged, mode, e_hat, y, regularized
        )
