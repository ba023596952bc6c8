"""
Scenario runs, paired comparisons and CSV output

A run steps the plant through a scenario with or without the controller.
Paired on/off runs share the seed, so noise realizations match and every
difference in the metrics comes from control.
"""

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .controller import (
    ControlObjective,
    IncrementalPredictor,
    RspcController,
    build_qp,
    hildreth_solve,
    recover_control,
)
from .errors import ConfigError, ExportError, PlantFault, RangeError
from .estimator import bias_comparison, dump_estimator_state
from .plant import (
    M_OUT,
    N_SENSORS,
    N_U,
    N_Y,
    REFERENCE_POINT,
    SWEEP_ANGLES,
    Actuator,
    PlantModel,
    ScenarioProfile,
    WindsorPlant,
    schedule,
)

if TYPE_CHECKING:
    from ..properties.run_properties import RunConfig

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]

SLIDING_WINDOW = 30

TIMESERIES_COLUMNS = (
    ("t", "beta", "h_g")
    + tuple(f"u_cmd{i}" for i in range(1, N_U + 1))
    + tuple(f"u{i}" for i in range(1, N_U + 1))
    + tuple(f"dcp{i}" for i in range(1, N_SENSORS + 1))
    + tuple(f"y{i}" for i in range(1, N_Y + 1))
    + tuple(f"yr{i}" for i in range(1, N_Y + 1))
    + tuple(f"e{i}" for i in range(1, N_Y + 1))
    + ("dual_iterations", "converged")
)


def cb_analog(y: ArrayLike) -> Array:
    """Base-pressure proxy from the level channel: cb = -y3 / 4"""
    return -np.asarray(y)[..., 2] / 4.0


def resolve_reference(config: "RunConfig", model: PlantModel) -> Array:
    """Output reference of the configured objective"""
    tuning = config.controller
    if tuning.reference:
        return np.asarray(tuning.reference, dtype=np.float64)
    base = model.baseline(REFERENCE_POINT)
    if tuning.objective == "uplift":
        return np.array([0.0, 0.0, base[2] + tuning.uplift])
    return base


@dataclass
class RunRecord:
    scenario: str
    seed: int
    control: bool
    sample_period: float
    y_r: Array
    t: Array
    beta: Array
    h_g: Array
    u_cmd: Array
    u: Array
    dcp: Array
    y: Array
    e_hat: Array
    iterations: Array
    converged: Array
    # wall-clock seconds spent in the controller per sample
    step_time: Array
    engaged_at: Optional[int] = None
    fault: Optional[str] = None
    config_echo: str = "{}\n"
    elapsed: float = 0.0

    @classmethod
    def empty(
        cls,
        scenario: str,
        seed: int,
        control: bool,
        sample_period: float,
        y_r: ArrayLike,
        steps: int = 0,
    ) -> "RunRecord":
        return cls(
            scenario=scenario,
            seed=seed,
            control=control,
            sample_period=sample_period,
            y_r=np.asarray(y_r, dtype=np.float64),
            t=np.zeros(steps),
            beta=np.zeros(steps),
            h_g=np.zeros(steps),
            u_cmd=np.zeros((steps, N_U)),
            u=np.zeros((steps, N_U)),
            dcp=np.zeros((steps, N_SENSORS)),
            y=np.zeros((steps, N_Y)),
            e_hat=np.zeros((steps, N_Y)),
            iterations=np.zeros(steps, dtype=np.int64),
            converged=np.ones(steps, dtype=bool),
            step_time=np.zeros(steps),
        )

    def __len__(self) -> int:
        return self.t.shape[0]

    def truncated(self, rows: int) -> "RunRecord":
        series = ("t", "beta", "h_g", "u_cmd", "u", "dcp", "y", "e_hat")
        changes = {name: getattr(self, name)[:rows] for name in series}
        changes["iterations"] = self.iterations[:rows]
        changes["converged"] = self.converged[:rows]
        changes["step_time"] = self.step_time[:rows]
        return replace(self, **changes)

    @property
    def cb(self) -> Array:
        return cb_analog(self.y)

    def rows(self):
        for k in range(len(self)):
            yield (
                [self.t[k], self.beta[k], self.h_g[k]]
                + list(self.u_cmd[k])
                + list(self.u[k])
                + list(self.dcp[k])
                + list(self.y[k])
                + list(self.y_r)
                + list(self.e_hat[k])
                + [int(self.iterations[k]), int(self.converged[k])]
            )


def run_scenario(
    config: "RunConfig", state_dir: Optional[Union[str, Path]] = None
) -> RunRecord:
    """
    Simulate one scenario. Without control the flaps stay at 0 degrees.
    A plant fault ends the run; the record is truncated and marked.
    With a state_dir, the final estimator matrices of a controlled run are
    written there.
    """
    started = time.perf_counter()
    model = PlantModel(config.plant)
    profile = ScenarioProfile.from_properties(config.scenario)
    dt = model.sample_period
    steps = config.steps
    control = config.run.control
    y_r = resolve_reference(config, model)

    noise_seed, excitation_seed = np.random.SeedSequence(config.run.seed).spawn(2)
    rng = np.random.default_rng(noise_seed)
    plant = WindsorPlant(model, rng, schedule(profile, 0.0))
    actuator = Actuator(config.plant)
    controller = None
    if control:
        controller = RspcController(
            config.estimator,
            config.controller,
            y_r,
            dt,
            excitation_seed=int(excitation_seed.generate_state(1)[0]),
        )

    record = RunRecord.empty(profile.kind, config.run.seed, control, dt, y_r, steps)
    record.config_echo = config.echo()
    logger.info(
        "Run %s: %d steps, control %s, seed %d",
        profile.kind,
        steps,
        "on" if control else "off",
        config.run.seed,
    )

    applied: Optional[Array] = None
    rows = steps
    for k in range(steps):
        t = round(k * dt, 10)
        p = schedule(profile, t)
        try:
            dcp = plant.measure(p)
            if controller is not None:
                tick = time.perf_counter()
                report = controller.step(dcp, applied)
                record.step_time[k] = time.perf_counter() - tick
                command, y = report.command, report.y
                record.e_hat[k] = report.e_hat
                record.iterations[k] = report.iterations
                record.converged[k] = report.converged
                if report.mode == "control" and record.engaged_at is None:
                    record.engaged_at = k
                    logger.info("Control engaged at t = %.1f s", t)
            else:
                command, y = np.zeros(N_U), M_OUT @ dcp
            applied = actuator.apply(command)
            if not np.allclose(applied, command):
                logger.debug("Step %d: rate or amplitude limit active", k)
            plant.advance(applied, p)
        except PlantFault as e:
            record.fault = f"step {k}: {e}"
            logger.error("Plant fault at step %d: %s", k, e)
            rows = k
            break
        record.t[k], record.beta[k], record.h_g[k] = t, p.beta, p.h_g
        record.u_cmd[k], record.u[k], record.dcp[k], record.y[k] = (
            command,
            applied,
            dcp,
            y,
        )

    if rows < steps:
        record = record.truncated(rows)
    overruns = int(np.sum(record.step_time > dt))
    if overruns:
        logger.warning(
            "Controller step exceeded the %.3g s sample period %d times (max %.3g s)",
            dt,
            overruns,
            float(np.max(record.step_time)),
        )
    if controller is not None and state_dir is not None:
        dump_estimator_state(controller.innovation, controller.predictor, state_dir)
        logger.info("Estimator state written to %s", state_dir)
    record.elapsed = time.perf_counter() - started
    logger.info("Run %s finished in %.2f s", profile.kind, record.elapsed)
    return record


def sliding_mean(series: ArrayLike, window: int = SLIDING_WINDOW) -> Array:
    """
    Centered moving average over [i - window//2, i + window - window//2 - 1];
    near the edges the window is truncated to the available samples.
    """
    x = np.asarray(series, dtype=np.float64)
    N = x.shape[0]
    if window < 1:
        raise ConfigError(f"Sliding window must be positive, got {window}")
    if N < window:
        raise RangeError(f"Series of {N} samples is shorter than the window {window}")
    half = window // 2
    cumulative = np.concatenate([[0.0], np.cumsum(x)])
    index = np.arange(N)
    lo = np.clip(index - half, 0, N)
    hi = np.clip(index + window - half, 0, N)
    return (cumulative[hi] - cumulative[lo]) / (hi - lo)


def _rms(x: Array) -> Array:
    return np.sqrt(np.mean(np.square(x), axis=0))


@dataclass(frozen=True)
class Metrics:
    scenario: str
    seed: int
    evaluation_start: int
    tracking_rms_on: Array
    tracking_rms_off: Array
    cb_mean_on: float
    cb_mean_off: float
    cb_std_on: float
    cb_std_off: float
    cb_deviation_on: float
    cb_deviation_off: float
    improvement_pct: float
    sliding_cb_on: Array = field(repr=False)
    sliding_cb_off: Array = field(repr=False)
    engaged_at: Optional[int] = None
    step_time_mean_ms: float = 0.0
    step_time_max_ms: float = 0.0

    @property
    def sliding_ptp_on(self) -> float:
        return float(np.ptp(self.sliding_cb_on))

    @property
    def sliding_ptp_off(self) -> float:
        return float(np.ptp(self.sliding_cb_off))

    @property
    def tracking_ratio(self) -> Array:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.tracking_rms_on / self.tracking_rms_off

    def rows(self) -> List[Tuple[str, Union[str, float, int]]]:
        rows: List[Tuple[str, Union[str, float, int]]] = [
            ("scenario", self.scenario),
            ("seed", self.seed),
            ("evaluation_start", self.evaluation_start),
            ("engaged_at", -1 if self.engaged_at is None else self.engaged_at),
        ]
        for i in range(N_Y):
            rows.append((f"tracking_rms_on_y{i + 1}", self.tracking_rms_on[i]))
            rows.append((f"tracking_rms_off_y{i + 1}", self.tracking_rms_off[i]))
        rows += [
            ("cb_analog_mean_on", self.cb_mean_on),
            ("cb_analog_mean_off", self.cb_mean_off),
            ("cb_analog_std_on", self.cb_std_on),
            ("cb_analog_std_off", self.cb_std_off),
            ("cb_analog_deviation_on", self.cb_deviation_on),
            ("cb_analog_deviation_off", self.cb_deviation_off),
            ("cb_analog_sliding_ptp_on", self.sliding_ptp_on),
            ("cb_analog_sliding_ptp_off", self.sliding_ptp_off),
            ("improvement_pct", self.improvement_pct),
            ("step_time_mean_ms", self.step_time_mean_ms),
            ("step_time_max_ms", self.step_time_max_ms),
        ]
        return rows


def compare_runs(on: RunRecord, off: RunRecord) -> Metrics:
    """
    Paired metrics, evaluated from the sample at which control engaged.
    The records must share scenario, seed, sample period and length.
    """
    for name in ("scenario", "seed", "sample_period"):
        if getattr(on, name) != getattr(off, name):
            mine, theirs = getattr(on, name), getattr(off, name)
            raise ConfigError(f"Runs differ in {name}: {mine!r} vs {theirs!r}")
    if len(on) != len(off):
        raise ConfigError(f"Runs differ in length: {len(on)} vs {len(off)}")
    if not np.allclose(on.y_r, off.y_r):
        raise ConfigError("Runs track different references")

    start = on.engaged_at or 0
    if start >= len(on):
        raise RangeError(f"No samples after engagement at {start} in {len(on)} rows")

    cb_ref = float(cb_analog(on.y_r))
    cb_on, cb_off = on.cb[start:], off.cb[start:]
    deviation_on = float(_rms(cb_on - cb_ref))
    deviation_off = float(_rms(cb_off - cb_ref))
    if deviation_off > 0.0:
        improvement = (deviation_off - deviation_on) / deviation_off * 100.0
    else:
        improvement = 0.0

    window = min(SLIDING_WINDOW, cb_on.shape[0])
    return Metrics(
        scenario=on.scenario,
        seed=on.seed,
        evaluation_start=start,
        tracking_rms_on=_rms(on.y[start:] - on.y_r),
        tracking_rms_off=_rms(off.y[start:] - off.y_r),
        cb_mean_on=float(np.mean(cb_on)),
        cb_mean_off=float(np.mean(cb_off)),
        cb_std_on=float(np.std(cb_on)),
        cb_std_off=float(np.std(cb_off)),
        cb_deviation_on=deviation_on,
        cb_deviation_off=deviation_off,
        improvement_pct=float(improvement),
        sliding_cb_on=sliding_mean(cb_on, window),
        sliding_cb_off=sliding_mean(cb_off, window),
        engaged_at=on.engaged_at,
        step_time_mean_ms=float(np.mean(on.step_time)) * 1e3,
        step_time_max_ms=float(np.max(on.step_time)) * 1e3,
    )


def _format(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_, int, np.integer)):
        return str(int(value))
    return f"{float(value):.6g}"


def write_table(path: Path, header: Sequence[str], rows):
    """Header row, then one row per record with 6 significant digits"""
    with path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format(v) for v in row])


def export_csv(
    record: RunRecord,
    metrics: Optional[Metrics],
    directory: Union[str, Path],
) -> Tuple[Path, ...]:
    """timeseries.csv, metrics.csv (when given) and config_echo.json"""
    directory = Path(directory)
    written = []
    path = directory
    try:
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / "timeseries.csv"
        write_table(path, TIMESERIES_COLUMNS, record.rows())
        written.append(path)
        if metrics is not None:
            path = directory / "metrics.csv"
            write_table(path, ("metric", "value"), metrics.rows())
            written.append(path)
        path = directory / "config_echo.json"
        path.write_text(record.config_echo)
        written.append(path)
    except OSError as e:
        raise ExportError("Could not write run output", path) from e
    logger.info("Wrote %d files to %s", len(written), directory)
    return tuple(written)


def read_timeseries(path: Union[str, Path]) -> Dict[str, Array]:
    """Columns of an exported timeseries.csv"""
    path = Path(path)
    try:
        with path.open(newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            values = [[float(v) for v in row] for row in reader]
    except (OSError, StopIteration) as e:
        raise ExportError("Could not read timeseries", path) from e
    data = np.array(values, dtype=np.float64).reshape(-1, len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def run_pair(
    config: "RunConfig", workers: Optional[int] = None
) -> Tuple[RunRecord, RunRecord, Metrics]:
    """Controlled and uncontrolled runs of one configuration, in worker threads"""
    configs = (
        config.with_overrides(control=True),
        config.with_overrides(control=False),
    )
    with ThreadPoolExecutor(max_workers=workers or config.run.workers) as pool:
        on, off = pool.map(run_scenario, configs)
    return on, off, compare_runs(on, off)


@dataclass(frozen=True)
class SweepRow:
    beta: float
    cb_mean_on: float
    cb_std_on: float
    cb_mean_off: float
    cb_std_off: float
    y_on: Array
    y_off: Array


SWEEP_COLUMNS = (
    ("beta", "cb_mean_on", "cb_std_on", "cb_mean_off", "cb_std_off")
    + tuple(f"y{i}_on" for i in range(1, N_Y + 1))
    + tuple(f"y{i}_off" for i in range(1, N_Y + 1))
)


def _settled(record: RunRecord, beta: float, dwell: float, first: int) -> Array:
    """Rows in the second half of the dwell at this yaw angle"""
    level = SWEEP_ANGLES.index(beta)
    start = (level + 0.5) * dwell
    stop = (level + 1) * dwell
    mask = (record.t >= start - 1e-9) & (record.t < stop - 1e-9)
    mask &= np.arange(len(record)) >= first
    return np.flatnonzero(mask)


def sweep_table(
    on: RunRecord, off: RunRecord, dwell: float
) -> Tuple[SweepRow, ...]:
    """Time-averaged cb analog and outputs per yaw angle of a sweep pair"""
    rows = []
    first = on.engaged_at or 0
    for beta in SWEEP_ANGLES:
        rows_on = _settled(on, beta, dwell, first)
        rows_off = _settled(off, beta, dwell, 0)
        if rows_on.size == 0 or rows_off.size == 0:
            logger.warning("Sweep level %+.0f deg has no settled samples", beta)
            continue
        rows.append(
            SweepRow(
                beta=beta,
                cb_mean_on=float(np.mean(on.cb[rows_on])),
                cb_std_on=float(np.std(on.cb[rows_on])),
                cb_mean_off=float(np.mean(off.cb[rows_off])),
                cb_std_off=float(np.std(off.cb[rows_off])),
                y_on=np.mean(on.y[rows_on], axis=0),
                y_off=np.mean(off.y[rows_off], axis=0),
            )
        )
    return tuple(rows)


def run_sweep(
    config: "RunConfig", directory: Optional[Union[str, Path]] = None
) -> Tuple[RunRecord, RunRecord, Tuple[SweepRow, ...]]:
    """
    Static yaw sweep from -5 to +5 degrees with and without control.
    Controlled rows before engagement are left out of the table.
    """
    scenario = config.scenario
    duration = len(SWEEP_ANGLES) * scenario.sweep_dwell
    sweep = config.with_overrides(scenario="sweep", duration=duration)
    on, off, _ = run_pair(sweep)
    table = sweep_table(on, off, scenario.sweep_dwell)
    if directory is not None:
        path = Path(directory) / "sweep.csv"
        try:
            Path(directory).mkdir(parents=True, exist_ok=True)
            write_table(
                path,
                SWEEP_COLUMNS,
                (
                    [r.beta, r.cb_mean_on, r.cb_std_on, r.cb_mean_off, r.cb_std_off]
                    + list(r.y_on)
                    + list(r.y_off)
                    for r in table
                ),
            )
        except OSError as e:
            raise ExportError("Could not write sweep table", path) from e
    return on, off, table


@dataclass(frozen=True)
class EstimatorBench:
    seeds: int
    biased_error: float
    unbiased_error: float
    reference_norm: float
    elapsed: float

    @property
    def ratio(self) -> float:
        return self.unbiased_error / self.biased_error if self.biased_error else 1.0


def bench_estimator(
    config: "RunConfig",
    seeds: int = 20,
    samples: int = 5000,
    rho: int = 20,
    span: int = 5,
    closed_loop: bool = True,
) -> EstimatorBench:
    """Innovation-compensated vs naive predictor fit, averaged over seeds"""
    started = time.perf_counter()
    real = PlantModel(config.plant).output_realization_at(REFERENCE_POINT)
    first_seed = config.run.seed
    with ThreadPoolExecutor(max_workers=config.run.workers) as pool:
        reports = list(
            pool.map(
                lambda seed: bias_comparison(
                    real, samples, rho, span, seed=seed, closed_loop=closed_loop
                ),
                range(first_seed, first_seed + seeds),
            )
        )
    return EstimatorBench(
        seeds=seeds,
        biased_error=float(np.mean([r.biased_error for r in reports])),
        unbiased_error=float(np.mean([r.unbiased_error for r in reports])),
        reference_norm=reports[0].reference_norm,
        elapsed=time.perf_counter() - started,
    )


@dataclass(frozen=True)
class QpBench:
    problems: int
    converged: int
    max_violation: float
    mean_iterations: float
    elapsed: float


def bench_qp(
    problems: int = 100, seed: int = 0, max_iter: int = 2000, tol: float = 1e-10
) -> QpBench:
    """Hildreth on random box-constrained problems with active bounds"""
    started = time.perf_counter()
    rng = np.random.default_rng(seed)
    converged, iterations, violation = 0, [], 0.0
    for _ in range(problems):
        n_u = int(rng.integers(1, 4))
        span = int(rng.integers(1, 6))
        n_y = int(rng.integers(1, 4))
        pred = IncrementalPredictor(
            L_Wi=np.zeros((n_y * span, 1)),
            L_ui=rng.standard_normal((n_y * span, n_u * span)),
            Y_anchor=np.zeros(n_y * span),
        )
        obj = ControlObjective.from_weights(
            5.0 * rng.standard_normal(n_y), np.ones(n_y), 0.1 * np.ones(n_u), span
        )
        qp = build_qp(pred, obj, np.zeros(1), rng.uniform(-1, 1, n_u), -1.0, 1.0)
        dual = hildreth_solve(qp, max_iter, tol)
        dU, _ = recover_control(qp, dual)
        converged += dual.converged
        iterations.append(dual.iterations)
        violation = max(violation, qp.violation(dU))
    return QpBench(
        problems=problems,
        converged=converged,
        max_violation=violation,
        mean_iterations=float(np.mean(iterations)) if iterations else 0.0,
        elapsed=time.perf_counter() - started,
    )
