import itertools

import numpy as np
import numpy.testing as npt
import pytest
from scipy.linalg import cholesky, solve_triangular
from scipy.optimize import lsq_linear

from windsor_rspc.functions.controller import (
    ControlObjective,
    IncrementalPredictor,
    RspcController,
    build_incremental,
    build_qp,
    hildreth_solve,
    recover_control,
)
from windsor_rspc.functions.errors import ConfigError, DimensionError, EstimatorFault
from windsor_rspc.functions.estimator import PredictorGains, WindowLayout
from windsor_rspc.functions.harness import run_scenario
from windsor_rspc.properties import (
    ControllerProperties,
    EstimatorProperties,
    PlantProperties,
    RunConfig,
    RunProperties,
    ScenarioProperties,
)


def _random_gains(rng, layout):
    L = rng.standard_normal((layout.target_dim, layout.regressor_dim))
    return PredictorGains.from_matrix(L, layout)


def _random_qp(seed, n_u=None, span=None, n_y=2, scale=1.0, bound=1.0):
    rng = np.random.default_rng(seed)
    n_u = n_u or int(rng.integers(1, 4))
    span = span or int(rng.integers(1, 6))
    pred = IncrementalPredictor(
        L_Wi=np.zeros((n_y * span, 1)),
        L_ui=rng.standard_normal((n_y * span, n_u * span)),
        Y_anchor=np.zeros(n_y * span),
    )
    obj = ControlObjective.from_weights(
        5.0 * rng.standard_normal(n_y),
        scale * np.ones(n_y),
        scale * 0.5 * np.ones(n_u),
        span,
    )
    u_prev = rng.uniform(-bound, bound, n_u)
    return build_qp(pred, obj, np.zeros(1), u_prev, -bound, bound)


def _brute_force(qp):
    """Best equality-constrained minimiser over every feasible active set"""
    n = qp.size
    best, best_cost = None, np.inf
    for pattern in itertools.product((None, "lower", "upper"), repeat=n):
        rows = [
            i if side == "lower" else n + i for i, side in enumerate(pattern) if side
        ]
        M = qp.M_con[rows]
        kkt = np.block([[qp.E, M.T], [M, np.zeros((len(rows), len(rows)))]])
        rhs = np.concatenate([-qp.F, qp.gamma[rows]])
        try:
            dU = np.linalg.solve(kkt, rhs)[:n]
        except np.linalg.LinAlgError:
            continue
        if qp.violation(dU) <= 1e-9 and qp.cost(dU) < best_cost:
            best, best_cost = dU, qp.cost(dU)
    return best


def test_incremental_predictor_holds_without_increments():
    rng = np.random.default_rng(0)
    layout = WindowLayout(2, 2, 3, 4)
    pred = build_incremental(_random_gains(rng, layout), [1.0, -2.0])
    Y = pred.predict(np.zeros(layout.past_dim), np.zeros(layout.future_u_dim))
    npt.assert_array_equal(Y, np.tile([1.0, -2.0], 4))


def test_incremental_predictor_with_unit_horizon_keeps_gains():
    rng = np.random.default_rng(1)
    layout = WindowLayout(2, 2, 3, 1)
    gains = _random_gains(rng, layout)
    pred = build_incremental(gains, np.zeros(2))
    npt.assert_array_equal(pred.L_Wi, gains.L_W)
    npt.assert_array_equal(pred.L_ui, gains.L_u)


def test_incremental_predictor_integrates_one_step_increments():
    rng = np.random.default_rng(2)
    layout = WindowLayout(2, 3, 3, 4)
    gains = _random_gains(rng, layout)
    y_now = rng.standard_normal(3)
    dW = rng.standard_normal(layout.past_dim)
    dU = rng.standard_normal(layout.future_u_dim)

    steps = (gains.L_W @ dW + gains.L_u @ dU).reshape(4, 3)
    expected = y_now + np.cumsum(steps, axis=0)
    npt.assert_allclose(
        build_incremental(gains, y_now).predict(dW, dU), expected.reshape(-1)
    )
    with pytest.raises(DimensionError):
        build_incremental(gains, np.zeros(2))


def test_objective_weights_must_be_positive_definite():
    with pytest.raises(ConfigError):
        ControlObjective(np.zeros(2), np.diag([1.0, 0.0]), np.eye(2))
    with pytest.raises(ConfigError):
        ControlObjective(np.zeros(2), np.eye(2), np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(DimensionError):
        ControlObjective(np.zeros(3), np.eye(2), np.eye(2))
    obj = ControlObjective.from_weights([1.0, 2.0], [1.0, 3.0], [0.1], 2)
    npt.assert_array_equal(obj.Y_r, [1, 2, 1, 2])
    npt.assert_array_equal(np.diag(obj.Q), [1, 3, 1, 3])


def test_zero_gains_give_identity_hessian_and_no_gradient():
    pred = IncrementalPredictor(np.zeros((4, 1)), np.zeros((4, 4)), np.ones(4))
    obj = ControlObjective(np.arange(4.0), np.eye(4), np.eye(4))
    qp = build_qp(pred, obj, np.zeros(1), [0.0, 0.0], -7.0, 7.0)
    npt.assert_array_equal(qp.E, np.eye(4))
    npt.assert_array_equal(qp.F, 0.0)
    npt.assert_array_equal(qp.unconstrained(), 0.0)


def test_command_at_the_upper_bound_leaves_no_upward_headroom():
    pred = IncrementalPredictor(np.zeros((2, 1)), np.eye(2), np.zeros(2))
    obj = ControlObjective(np.zeros(2), np.eye(2), np.eye(2))
    qp = build_qp(pred, obj, np.zeros(1), [7.0], -7.0, 7.0)
    npt.assert_array_equal(qp.gamma_plus, 0.0)
    npt.assert_array_equal(qp.gamma_minus, 14.0)


def test_qp_cost_matches_the_tracking_cost():
    rng = np.random.default_rng(4)
    layout = WindowLayout(2, 3, 2, 3)
    pred = build_incremental(_random_gains(rng, layout), rng.standard_normal(3))
    obj = ControlObjective.from_weights(
        rng.standard_normal(3), [1.0, 2.0, 0.5], [0.1, 0.3], layout.span
    )
    dW = rng.standard_normal(layout.past_dim)
    qp = build_qp(pred, obj, dW, [0.0, 0.0], -7.0, 7.0)

    def tracking_cost(dU):
        error = obj.Y_r - pred.predict(dW, dU)
        return error @ obj.Q @ error + dU @ obj.R @ dU

    for _ in range(5):
        dU = rng.standard_normal(layout.future_u_dim)
        npt.assert_allclose(
            tracking_cost(dU) - tracking_cost(np.zeros_like(dU)),
            2.0 * qp.cost(dU),
            rtol=1e-9,
        )


def test_interior_optimum_needs_no_multipliers():
    pred = IncrementalPredictor(np.zeros((2, 1)), np.eye(2), np.zeros(2))
    obj = ControlObjective(np.array([0.01, 0.02]), np.eye(2), np.eye(2))
    qp = build_qp(pred, obj, np.zeros(1), [0.0], -7.0, 7.0)
    dual = hildreth_solve(qp)
    assert dual.converged and dual.iterations == 0
    npt.assert_array_equal(dual.multipliers, 0.0)
    dU, _ = recover_control(qp, dual)
    npt.assert_allclose(dU, qp.unconstrained())


def test_single_input_two_step_problem_matches_enumeration():
    qp = _random_qp(11, n_u=1, span=2)
    dual = hildreth_solve(qp, max_iter=20000, tol=1e-12)
    dU, _ = recover_control(qp, dual)
    npt.assert_allclose(dU, _brute_force(qp), atol=1e-7)


def _bounded_least_squares(qp):
    """Primal optimum from a bounded least-squares problem in v = S dU"""
    C = cholesky(qp.E)
    S_inv = np.linalg.inv(qp.S)
    A = C @ S_inv
    b = -solve_triangular(C, qp.F, trans="T")
    result = lsq_linear(
        A, b, bounds=(-qp.gamma_minus, qp.gamma_plus), method="bvls", tol=1e-14
    )
    return S_inv @ result.x


@pytest.mark.parametrize("seed", range(100))
def test_hildreth_solves_random_box_problems(seed):
    qp = _random_qp(seed)
    assert qp.n_u <= 3 and qp.size <= 15
    dual = hildreth_solve(qp, max_iter=50000, tol=1e-12)
    assert dual.converged
    dU, _ = recover_control(qp, dual)

    multipliers = dual.multipliers
    assert np.all(multipliers >= 0.0)
    assert qp.violation(dU) <= 1e-8
    slack = qp.gamma - qp.M_con @ dU
    assert np.max(np.abs(multipliers * slack)) < 1e-6
    npt.assert_allclose(qp.E @ dU + qp.F + qp.M_con.T @ multipliers, 0.0, atol=1e-6)
    npt.assert_allclose(dU, _bounded_least_squares(qp), atol=1e-6)
    if qp.size <= 6:
        npt.assert_allclose(dU, _brute_force(qp), atol=1e-6)


def test_dual_objective_never_increases():
    qp = _random_qp(5, n_u=2, span=3)
    dual = hildreth_solve(qp, max_iter=5000, tol=1e-12)
    history = np.array(dual.objective)
    assert history.size > 1
    assert np.all(np.diff(history) <= 1e-12 * np.maximum(1.0, np.abs(history[1:])))
    # at most one of each bound pair is active
    assert np.all(dual.lambda_plus * dual.lambda_minus == 0.0)


def test_saturated_command_lands_on_the_bound():
    pred = IncrementalPredictor(np.zeros((1, 1)), np.eye(1), np.zeros(1))
    obj = ControlObjective(np.array([100.0]), np.eye(1), 0.01 * np.eye(1))
    qp = build_qp(pred, obj, np.zeros(1), [6.5], -7.0, 7.0)
    dual = hildreth_solve(qp, max_iter=1000, tol=1e-12)
    _, u = recover_control(qp, dual)
    npt.assert_allclose(u, [7.0], atol=1e-9)


def test_no_gradient_keeps_the_previous_command():
    pred = IncrementalPredictor(np.zeros((2, 1)), np.zeros((2, 2)), np.zeros(2))
    obj = ControlObjective(np.zeros(2), np.eye(2), np.eye(2))
    qp = build_qp(pred, obj, np.zeros(1), [1.5, -2.0], -7.0, 7.0)
    _, u = recover_control(qp, hildreth_solve(qp))
    npt.assert_allclose(u, [1.5, -2.0])


@pytest.mark.parametrize("seed", [3, 8])
def test_scaling_both_weights_leaves_the_solution_unchanged(seed):
    solutions = []
    for scale in (1.0, 40.0):
        qp = _random_qp(seed, n_u=2, span=3, scale=scale)
        dual = hildreth_solve(qp, max_iter=20000, tol=1e-12)
        solutions.append(recover_control(qp, dual)[0])
    npt.assert_allclose(solutions[0], solutions[1], atol=1e-7)


def _controller(**tuning):
    return RspcController(
        EstimatorProperties(rho=3, span=3),
        ControllerProperties(dwell=1.0, **tuning),
        reference=[0.0, -4.0, -80.0],
        sample_period=0.1,
        excitation_seed=4,
    )


def test_controller_fills_excites_then_engages():
    controller = _controller()
    assert controller.engagement == 16
    rng = np.random.default_rng(0)
    applied = None
    modes = []
    for _ in range(25):
        report = controller.step(rng.standard_normal(4), applied)
        applied = report.command
        modes.append(report.mode)
        if report.mode == "fill":
            npt.assert_array_equal(report.command, 0.0)
        elif report.mode == "excite":
            npt.assert_array_equal(np.abs(report.command), 3.0)
    assert modes[:6] == ["fill"] * 6
    assert modes[6:16] == ["excite"] * 10
    assert set(modes[16:]) == {"control"}
    assert controller.last_qp is not None


def test_controller_holds_on_a_non_finite_measurement():
    controller = _controller()
    rng = np.random.default_rng(1)
    applied = None
    for _ in range(20):
        applied = controller.step(rng.standard_normal(4), applied).command

    report = controller.step(np.full(4, np.nan), applied)
    assert report.mode == "hold"
    npt.assert_array_equal(report.command, applied)

    report = controller.step(rng.standard_normal(4), report.command)
    assert report.mode == "control"
    assert np.all(np.isfinite(report.command))


def test_controller_holds_when_the_estimator_fails(monkeypatch):
    controller = _controller()
    rng = np.random.default_rng(2)
    applied = None
    for _ in range(20):
        applied = controller.step(rng.standard_normal(4), applied).command

    def fail(*args):
        raise EstimatorFault("forced")

    monkeypatch.setattr(controller.innovation, "update", fail)
    report = controller.step(rng.standard_normal(4), applied)
    assert report.mode == "hold"
    npt.assert_array_equal(report.command, applied)


def _noise_free(beta, h_g, duration=80.0, **controller):
    return RunConfig(
        plant=PlantProperties(innovation_std=0.0),
        estimator=EstimatorProperties(rho=10, span=10),
        controller=ControllerProperties(dwell=40.0, max_iter=2000, **controller),
        scenario=ScenarioProperties(
            kind="constant", beta=beta, grid_height=h_g, duration=duration
        ),
        run=RunProperties(seed=0),
    )


@pytest.mark.slow
@pytest.mark.parametrize(
    "beta, h_g",
    list(
        itertools.product(
            PlantProperties().beta_anchors, PlantProperties().grid_anchors
        )
    ),
)
def test_integral_action_removes_constant_offsets(beta, h_g):
    record = run_scenario(_noise_free(beta, h_g))
    assert len(record) == 800 and record.engaged_at == 420
    # 30 s after engagement
    error = record.y[720:] - record.y_r
    assert np.max(np.abs(error)) < 1e-2


@pytest.mark.slow
def test_unreachable_reference_parks_the_flaps_on_the_bound():
    record = run_scenario(_noise_free(0.0, -200.0, reference=(0.0, -4.0, -60.0)))
    npt.assert_allclose(record.u[-100:], 7.0, atol=1e-6)
    assert np.all(np.abs(record.u) <= 7.0)
