"""
Synthetic flap-equipped bluff body in a wind tunnel

A scheduled linear parameter-varying plant in innovation form. Four decoupled
second-order modes (horizontal gradient, vertical gradient, pressure level and
an unobserved diagonal twist) drive four base-pressure sensors. Each mode is a
first-order aerodynamic lag followed by the sensor low-pass filter. Pressure
coefficients are expressed in percent of dynamic pressure.

Flap order is (top, bottom, left, right). Sensor order is (top-left,
top-right, bottom-left, bottom-right).
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.interpolate import RegularGridInterpolator
from scipy.signal import max_len_seq

from ..properties.plant_properties import PlantProperties
from ..properties.run_properties import ScenarioProperties
from .errors import ConfigError, DimensionError, PlantFault, RangeError
from .subspace import LtiRealization

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]

N_X, N_U, N_SENSORS, N_Y = 8, 4, 4, 3

# Rows map sensors to horizontal gradient, vertical gradient, level and twist
SENSOR_TRANSFORM = np.array(
    [
        [1.0, -1.0, 1.0, -1.0],
        [1.0, 1.0, -1.0, -1.0],
        [1.0, 1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0, 1.0],
    ]
)
M_OUT = SENSOR_TRANSFORM[:N_Y]

# Flap combinations driving each mode
_DIFFERENTIAL_H = np.array([0.0, 0.0, 1.0, -1.0])
_DIFFERENTIAL_V = np.array([1.0, -1.0, 0.0, 0.0])
_SYMMETRIC = np.ones(4)
_CROSS = np.array([1.0, 1.0, -1.0, -1.0])

BETA_RANGE = (-5.0, 5.0)
GRID_RANGE = (-200.0, 100.0)
# Sweep levels, one per degree
SWEEP_ANGLES = tuple(float(b) for b in range(-5, 6))
_TIME_EPS = 1e-9


@dataclass(frozen=True)
class SchedulingPoint:
    beta: float = 0.0
    h_g: float = -200.0

    def __post_init__(self):
        if not BETA_RANGE[0] <= self.beta <= BETA_RANGE[1]:
            raise RangeError(f"Yaw angle {self.beta} outside {BETA_RANGE}")
        if not GRID_RANGE[0] <= self.h_g <= GRID_RANGE[1]:
            raise RangeError(f"Grid height {self.h_g} outside {GRID_RANGE}")


REFERENCE_POINT = SchedulingPoint(0.0, -200.0)


@dataclass(frozen=True)
class ScenarioProfile:
    kind: str
    duration: float
    amplitude: float = 3.0
    period: float = 200.0
    steps: Tuple[Tuple[float, float], ...] = ((0.0, 0.0),)
    sweep_dwell: float = 30.0
    beta: float = 0.0
    grid_height: float = -200.0
    grid_steps: Tuple[Tuple[float, float], ...] = ()

    @classmethod
    def from_properties(cls, scenario: ScenarioProperties) -> "ScenarioProfile":
        return cls(
            kind=scenario.kind,
            duration=scenario.duration,
            amplitude=scenario.amplitude,
            period=scenario.period,
            steps=tuple((float(t), float(v)) for t, v in scenario.steps),
            sweep_dwell=scenario.sweep_dwell,
            beta=scenario.beta,
            grid_height=scenario.grid_height,
            grid_steps=tuple((float(t), float(v)) for t, v in scenario.grid_steps),
        )


def _held(table: Sequence[Tuple[float, float]], t: float) -> float:
    value = table[0][1]
    for start, level in table:
        if t + _TIME_EPS >= start:
            value = level
        else:
            break
    return value


def schedule(profile: ScenarioProfile, t: float) -> SchedulingPoint:
    """Scheduling point of the profile at time t (seconds)"""
    if t < -_TIME_EPS or t > profile.duration + _TIME_EPS:
        raise RangeError(f"t = {t} outside scenario [0, {profile.duration}]")

    if profile.kind == "sinusoid":
        beta = profile.amplitude * np.sin(2.0 * np.pi * t / profile.period)
    elif profile.kind == "steps":
        beta = _held(profile.steps, t)
    elif profile.kind == "sweep":
        level = int(np.floor((t + _TIME_EPS) / profile.sweep_dwell))
        beta = SWEEP_ANGLES[min(level, len(SWEEP_ANGLES) - 1)]
    elif profile.kind == "constant":
        beta = profile.beta
    else:
        raise ConfigError(f"Unknown scenario kind: {profile.kind}")

    h_g = _held(profile.grid_steps, t) if profile.grid_steps else profile.grid_height
    return SchedulingPoint(float(np.clip(beta, *BETA_RANGE)), float(h_g))


def saturate_and_rate_limit(
    requested: ArrayLike,
    previous: ArrayLike,
    amplitude_limit: float = 7.0,
    max_step: float = 1.0,
) -> Array:
    """Clamp to +-amplitude_limit, then to +-max_step around the previous angle"""
    clamped = np.clip(np.asarray(requested, float), -amplitude_limit, amplitude_limit)
    previous = np.asarray(previous, float)
    return np.clip(clamped, previous - max_step, previous + max_step)


class Actuator:
    """Four flaps with amplitude saturation and a rate limit"""

    def __init__(self, properties: PlantProperties):
        self.amplitude_limit = properties.amplitude_limit
        self.max_step = properties.max_flap_step
        self.angle = np.zeros(N_U)

    def apply(self, requested: ArrayLike) -> Array:
        applied = saturate_and_rate_limit(
            requested, self.angle, self.amplitude_limit, self.max_step
        )
        self.angle = applied
        return applied.copy()


def prbs(
    length: int,
    n_channels: int = N_U,
    seed: int = 0,
    switch_period: int = 1,
    amplitude: float = 5.0,
) -> Array:
    """
    Two-level pseudo-random binary sequences, one per channel

    Channels are distinct cyclic shifts of one maximum-length sequence, so
    they are nearly uncorrelated. Each bit is held for switch_period samples.
    """
    if length < 1:
        raise RangeError(f"PRBS length must be positive, got {length}")
    if switch_period < 1:
        raise ConfigError(f"PRBS switch period must be positive, got {switch_period}")
    bits = -(-length // switch_period)
    nbits = max(5, int(np.ceil(np.log2(bits + 1))))
    while 2**nbits - 1 < n_channels:
        nbits += 1
    sequence, _ = max_len_seq(nbits)
    period = sequence.shape[0]

    rng = np.random.default_rng(seed)
    offsets = rng.choice(period, size=n_channels, replace=False)
    channels = [np.roll(sequence, -int(offset))[:bits] for offset in offsets]
    held = np.repeat(np.array(channels, dtype=np.float64).T, switch_period, axis=0)
    return amplitude * (2.0 * held[:length] - 1.0)


def _place_observer(a: float, phi: float, pole: float) -> Tuple[float, float]:
    """Innovation gains placing both eigenvalues of the mode's A - KC at pole"""
    kappa2 = a + phi - 2.0 * pole
    kappa1 = (pole - a) ** 2 / (1.0 - phi)
    return kappa1, kappa2


class PlantModel:
    """
    Scheduled realization of the plant

    Anchor realizations are built on the (yaw, grid height) grid and
    interpolated linearly in between.
    """

    def __init__(self, properties: Optional[PlantProperties] = None):
        self.properties = properties or PlantProperties()
        props = self.properties
        self.sample_period = props.sample_period
        cutoff = 2.0 * np.pi * props.filter_cutoff
        self.phi = float(np.exp(-cutoff * self.sample_period))

        # Sensor map: dCp = T' z / 4, z = filtered mode outputs
        Cz = np.zeros((N_SENSORS, N_X))
        for mode in range(N_SENSORS):
            Cz[mode, 2 * mode + 1] = 1.0
        self.C = SENSOR_TRANSFORM.T @ Cz / 4.0
        self.C_out = M_OUT @ self.C

        sigma2 = props.innovation_std**2
        modes = np.diag([sigma2, sigma2, sigma2, 0.0])
        self.R_e = SENSOR_TRANSFORM.T @ modes @ SENSOR_TRANSFORM / 16.0
        self.R_out = sigma2 * np.eye(N_Y)

        betas = np.asarray(props.beta_anchors, dtype=np.float64)
        grids = np.asarray(props.grid_anchors, dtype=np.float64)
        values = np.empty((betas.size, grids.size, N_X * N_X + N_X * N_U + N_X * N_Y))
        for i, beta in enumerate(betas):
            for j, h_g in enumerate(grids):
                A, B, K_out = self._anchor(beta, h_g)
                values[i, j] = np.concatenate([A.ravel(), B.ravel(), K_out.ravel()])
        self._interpolator = RegularGridInterpolator((betas, grids), values)
        logger.debug(
            "Plant model: %d x %d anchors, filter pole %.3f",
            betas.size,
            grids.size,
            self.phi,
        )

    def _mode_gains(self, beta: float, h_g: float) -> Array:
        props = self.properties
        grid = (h_g + 200.0) / 100.0
        return np.vstack(
            [
                props.differential_gain * _DIFFERENTIAL_H
                + props.yaw_cross * beta * _SYMMETRIC,
                props.differential_gain * _DIFFERENTIAL_V
                + props.grid_cross * grid * _SYMMETRIC,
                props.level_gain * _SYMMETRIC,
                props.twist_gain * _CROSS,
            ]
        )

    def mode_poles(self, beta: float) -> Array:
        props = self.properties
        gradient = props.gradient_pole + props.pole_yaw_slope * abs(beta)
        return np.array([gradient, gradient, props.level_pole, props.twist_pole])

    def _anchor(self, beta: float, h_g: float) -> Tuple[Array, Array, Array]:
        poles = self.mode_poles(beta)
        gains = self._mode_gains(beta, h_g)
        A = np.zeros((N_X, N_X))
        B = np.zeros((N_X, N_U))
        K_out = np.zeros((N_X, N_Y))
        for mode, a in enumerate(poles):
            s, f = 2 * mode, 2 * mode + 1
            A[s, s] = a
            A[f, s] = 1.0 - self.phi
            A[f, f] = self.phi
            # unit DC gain through the filter stage
            B[s] = (1.0 - a) * gains[mode]
            if mode < N_Y:
                K_out[s, mode], K_out[f, mode] = _place_observer(
                    a, self.phi, self.properties.observer_pole
                )
        return A, B, K_out

    def _matrices(self, p: SchedulingPoint) -> Tuple[Array, Array, Array]:
        try:
            flat = self._interpolator([[p.beta, p.h_g]])[0]
        except ValueError as e:
            raise RangeError(f"Scheduling point {p} outside the anchor grid") from e
        n_a, n_b = N_X * N_X, N_X * N_U
        A = flat[:n_a].reshape(N_X, N_X)
        B = flat[n_a : n_a + n_b].reshape(N_X, N_U)
        K_out = flat[n_a + n_b :].reshape(N_X, N_Y)
        return A, B, K_out

    def realization_at(self, p: SchedulingPoint) -> LtiRealization:
        """Sensor-level realization: four pressure coefficients"""
        A, B, K_out = self._matrices(p)
        return LtiRealization(A, B, self.C, K=K_out @ M_OUT, R_e=self.R_e)

    def output_realization_at(self, p: SchedulingPoint) -> LtiRealization:
        """
        Realization of the controlled outputs y = M_out dCp, reduced to its
        observable part: the twist mode never reaches the three outputs.
        """
        A, B, K_out = self._matrices(p)
        full = LtiRealization(A, B, self.C_out, K=K_out, R_e=self.R_out)
        return full.observable_part()

    def transition_variation(self, step: float = 0.1) -> float:
        """Largest |A(p) - A(p')|_F over neighbouring yaw angles step apart"""
        count = int(round((BETA_RANGE[1] - BETA_RANGE[0]) / step)) + 1
        betas = np.linspace(BETA_RANGE[0], BETA_RANGE[1], count)
        worst = 0.0
        for h_g in self.properties.grid_anchors:
            points = [[b, h_g] for b in betas]
            flat = self._interpolator(points)[:, : N_X * N_X]
            jumps = np.linalg.norm(np.diff(flat, axis=0), axis=1)
            worst = max(worst, float(np.max(jumps)))
        if worst > self.properties.lipschitz_bound:
            logger.warning(
                "Scheduled A varies by %.3g per %.2f deg, above the bound %.3g",
                worst,
                step,
                self.properties.lipschitz_bound,
            )
        return worst

    def baseline(self, p: SchedulingPoint) -> Array:
        """Steady outputs with flaps at zero"""
        props = self.properties
        grid = (p.h_g + 200.0) / 100.0
        return np.array(
            [
                props.yaw_gradient * p.beta,
                props.vertical_offset
                + props.vertical_yaw * abs(p.beta)
                + props.vertical_grid * grid,
                props.level_offset
                - props.level_yaw * abs(p.beta)
                + props.level_grid * grid,
            ]
        )

    def dc_gain(self, p: SchedulingPoint) -> Array:
        """Steady-state output change per degree of flap deflection (3 x 4)"""
        real = self.output_realization_at(p)
        return real.C @ np.linalg.solve(np.eye(real.n_x) - real.A, real.B)

    def plant_step(
        self, state: ArrayLike, u: ArrayLike, p: SchedulingPoint, e: ArrayLike
    ) -> Tuple[Array, Array]:
        """
        One innovation-form step; returns (next state, dCp). dCp is the
        deviation from the baseline pressure, which WindsorPlant.measure adds.
        """
        real = self.realization_at(p)
        x = np.asarray(state, dtype=np.float64)
        e = np.asarray(e, dtype=np.float64)
        dcp = real.C @ x + e
        x_next = real.A @ x + real.B @ np.asarray(u, dtype=np.float64) + real.K @ e
        if not (np.all(np.isfinite(x_next)) and np.all(np.isfinite(dcp))):
            raise PlantFault(f"Non-finite plant state at {p}")
        return x_next, dcp

    def predictor_step(
        self, state: ArrayLike, u: ArrayLike, y_measured: ArrayLike, p: SchedulingPoint
    ) -> Array:
        """One predictor-form step driven by the measured dCp"""
        real = self.realization_at(p)
        x_next = (
            real.A_tilde @ np.asarray(state, dtype=np.float64)
            + real.B_tilde @ np.asarray(u, dtype=np.float64)
            + real.K @ np.asarray(y_measured, dtype=np.float64)
        )
        if not np.all(np.isfinite(x_next)):
            raise PlantFault(f"Non-finite predictor state at {p}")
        return x_next


class WindsorPlant:
    """
    Running plant instance: state, noise stream and baseline pressure.

    ``measure`` draws the innovation of the current sample and returns dCp;
    ``advance`` applies the flap angles and moves to the next sample.
    """

    def __init__(
        self,
        model: PlantModel,
        rng: np.random.Generator,
        p0: SchedulingPoint = REFERENCE_POINT,
        noise: bool = True,
    ):
        self.model = model
        self.rng = rng
        self.noise = noise
        self.state = np.zeros(N_X)
        self.baseline = model.baseline(p0)
        tau = model.properties.baseline_time_constant
        self._settling = float(np.exp(-model.sample_period / tau)) if tau > 0 else 0.0
        self._innovation = np.zeros(N_SENSORS)
        self.step = 0

    def draw_innovation(self) -> Array:
        if not self.noise:
            return np.zeros(N_SENSORS)
        sigma = self.model.properties.innovation_std
        modes = np.append(sigma * self.rng.standard_normal(N_Y), 0.0)
        return SENSOR_TRANSFORM.T @ modes / 4.0

    def measure(self, p: SchedulingPoint) -> Array:
        self._innovation = self.draw_innovation()
        offset = SENSOR_TRANSFORM.T @ np.append(self.baseline, 0.0) / 4.0
        dcp = self.model.C @ self.state + self._innovation + offset
        if not np.all(np.isfinite(dcp)):
            raise PlantFault("Non-finite pressure measurement", self.step)
        return dcp

    def advance(self, u: ArrayLike, p: SchedulingPoint):
        try:
            self.state, _ = self.model.plant_step(self.state, u, p, self._innovation)
        except PlantFault as e:
            raise PlantFault(str(e), self.step) from e
        self.baseline = (
            self._settling * self.baseline
            + (1.0 - self._settling) * self.model.baseline(p)
        )
        self.step += 1


Policy = Callable[[Array, int], Array]


@dataclass
class ProportionalFeedback:
    """u(k) = gain y(k) + dither(k): a simple closed loop for estimator benchmarks"""

    gain: Array
    dither: Array

    @classmethod
    def around(
        cls,
        real: LtiRealization,
        samples: int,
        seed: int = 0,
        kappa: float = 0.5,
        dither_amplitude: float = 0.5,
    ) -> "ProportionalFeedback":
        dc = real.C @ np.linalg.solve(np.eye(real.n_x) - real.A, real.B)
        dither = prbs(samples, real.n_u, seed=seed, amplitude=dither_amplitude)
        return cls(-kappa * np.linalg.pinv(dc), dither)

    def __call__(self, y: Array, k: int) -> Array:
        return self.gain @ y + self.dither[k]


@dataclass(frozen=True)
class LoopData:
    u: Array
    y: Array
    e: Array
    x: Array


def _covariance_root(R: Array) -> Array:
    eigenvalues, vectors = np.linalg.eigh(R)
    return vectors * np.sqrt(np.clip(eigenvalues, 0.0, None))


def simulate(
    real: LtiRealization,
    samples: int,
    rng: Optional[np.random.Generator] = None,
    inputs: Optional[ArrayLike] = None,
    policy: Optional[Policy] = None,
    innovations: Optional[ArrayLike] = None,
    x0: Optional[ArrayLike] = None,
) -> LoopData:
    """
    Innovation-form simulation from x0 (default zero)

    Inputs come from a fixed sequence or from a feedback policy of the
    current output. Innovations are given, or drawn from R_e with rng, or zero.
    """
    if (inputs is None) == (policy is None):
        raise ConfigError("Give exactly one of inputs and policy")
    if policy is not None and np.any(real.D):
        raise DimensionError("Output feedback needs D = 0")
    if innovations is not None:
        e = np.asarray(innovations, dtype=np.float64).reshape(samples, real.n_y)
    elif rng is not None:
        e = rng.standard_normal((samples, real.n_y)) @ _covariance_root(real.R_e).T
    else:
        e = np.zeros((samples, real.n_y))
    u = np.zeros((samples, real.n_u))
    if inputs is not None:
        u[:] = np.asarray(inputs, dtype=np.float64).reshape(samples, real.n_u)
    y = np.zeros((samples, real.n_y))
    x = np.zeros((samples + 1, real.n_x))
    if x0 is not None:
        x[0] = x0

    for k in range(samples):
        y[k] = real.C @ x[k] + e[k]
        if policy is not None:
            u[k] = policy(y[k], k)
        y[k] += real.D @ u[k]
        x[k + 1] = real.A @ x[k] + real.B @ u[k] + real.K @ e[k]
    if not np.all(np.isfinite(x)):
        raise PlantFault("Simulation diverged")
    return LoopData(u, y, e, x)


def simulate_predictor(
    real: LtiRealization, u: ArrayLike, y: ArrayLike, x0: Optional[ArrayLike] = None
) -> Array:
    """Predictor-form state trajectory driven by measured inputs and outputs"""
    u = np.asarray(u, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    x = np.zeros((u.shape[0] + 1, real.n_x))
    if x0 is not None:
        x[0] = x0
    A_tilde, B_tilde = real.A_tilde, real.B_tilde
    for k in range(u.shape[0]):
        x[k + 1] = A_tilde @ x[k] + B_tilde @ u[k] + real.K @ y[k]
    return x
