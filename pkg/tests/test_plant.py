import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from windsor_rspc.functions.errors import ConfigError, RangeError
from windsor_rspc.functions.plant import (
    M_OUT,
    N_U,
    N_X,
    REFERENCE_POINT,
    Actuator,
    ProportionalFeedback,
    ScenarioProfile,
    SchedulingPoint,
    WindsorPlant,
    prbs,
    saturate_and_rate_limit,
    schedule,
    simulate,
    simulate_predictor,
)
from windsor_rspc.properties import PlantProperties


def test_zero_state_and_input_stay_at_zero(model):
    x_next, dcp = model.plant_step(
        np.zeros(N_X), np.zeros(N_U), REFERENCE_POINT, np.zeros(4)
    )
    npt.assert_array_equal(x_next, 0.0)
    npt.assert_array_equal(dcp, 0.0)


def test_output_map_rows_are_orthogonal():
    npt.assert_allclose(M_OUT @ M_OUT.T, 4.0 * np.eye(3))


def test_dc_gain_at_reference(model):
    expected = np.array(
        [
            [0.0, 0.0, 0.8, -0.8],
            [0.8, -0.8, 0.0, 0.0],
            [0.4, 0.4, 0.4, 0.4],
        ]
    )
    gain = model.dc_gain(REFERENCE_POINT)
    npt.assert_allclose(gain, expected, atol=1e-10)
    # symmetric deflection leaves both gradients alone at zero yaw
    npt.assert_allclose((gain @ np.ones(N_U))[:2], 0.0, atol=1e-10)


def test_step_response_settles_at_dc_gain(model, windsor):
    u = np.array([1.0, -2.0, 0.5, 3.0])
    data = simulate(windsor, 300, inputs=np.tile(u, (300, 1)))
    npt.assert_allclose(data.y[-1], model.dc_gain(REFERENCE_POINT) @ u, atol=1e-8)


def test_predictor_form_reproduces_the_innovation_form_state(windsor):
    inputs = prbs(1000, N_U, seed=2, amplitude=2.0)
    data = simulate(windsor, 1000, np.random.default_rng(2), inputs=inputs)
    x = simulate_predictor(windsor, data.u, data.y)
    assert np.max(np.abs(x - data.x)) < 1e-10


def test_single_step_forms_agree(model):
    rng = np.random.default_rng(5)
    p = SchedulingPoint(2.5, -50.0)
    x, u, e = rng.standard_normal(N_X), rng.standard_normal(N_U), rng.standard_normal(4)
    x_next, dcp = model.plant_step(x, u, p, e)
    npt.assert_allclose(model.predictor_step(x, u, dcp, p), x_next, atol=1e-12)


def test_scheduled_realizations_stay_stable(model):
    for beta in np.linspace(-5.0, 5.0, 41):
        for h_g in (-200.0, -150.0, 0.0, 100.0):
            real = model.realization_at(SchedulingPoint(beta, h_g))
            assert np.max(np.abs(np.linalg.eigvals(real.A))) <= 0.9
            assert real.predictor_radius() < 1.0
            npt.assert_array_equal(real.D, 0.0)


def test_transition_varies_slowly_with_yaw(model):
    assert model.transition_variation() <= model.properties.lipschitz_bound


def test_baseline_at_reference(model):
    npt.assert_allclose(model.baseline(REFERENCE_POINT), [0.0, -4.0, -80.0])
    npt.assert_allclose(model.baseline(SchedulingPoint(3.0, -200.0)), [3, -2.2, -83])


@pytest.mark.parametrize(
    "requested, previous, expected", [(10.0, 6.5, 7.0), (-10.0, 0.0, -1.0)]
)
def test_saturate_and_rate_limit(requested, previous, expected):
    applied = saturate_and_rate_limit([requested], [previous])
    npt.assert_array_equal(applied, [expected])


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.lists(st.floats(-50, 50), min_size=N_U, max_size=N_U),
        min_size=1,
        max_size=30,
    )
)
def test_actuator_respects_amplitude_and_rate(requests):
    actuator = Actuator(PlantProperties())
    previous = np.zeros(N_U)
    for requested in requests:
        applied = actuator.apply(requested)
        assert np.all(np.abs(applied) <= 7.0)
        assert np.all(np.abs(applied - previous) <= 1.0 + 1e-12)
        previous = applied


def test_prbs_of_length_one():
    sequence = prbs(1, N_U)
    assert sequence.shape == (1, N_U)
    assert set(np.abs(sequence).ravel()) == {5.0}


def test_prbs_channels_are_nearly_uncorrelated():
    sequence = prbs(4000, N_U, seed=0)
    correlation = np.corrcoef(sequence.T)
    off_diagonal = correlation[~np.eye(N_U, dtype=bool)]
    assert np.max(np.abs(off_diagonal)) < 0.1


def test_prbs_is_deterministic_and_held():
    first = prbs(40, 2, seed=4, switch_period=5, amplitude=3.0)
    npt.assert_array_equal(first, prbs(40, 2, seed=4, switch_period=5, amplitude=3.0))
    blocks = first.reshape(8, 5, 2)
    npt.assert_array_equal(blocks, np.repeat(blocks[:, :1], 5, axis=1))


def test_prbs_rejects_empty_sequence():
    with pytest.raises(RangeError):
        prbs(0, N_U)
    with pytest.raises(ConfigError):
        prbs(10, N_U, switch_period=0)


def test_sinusoid_schedule():
    profile = ScenarioProfile("sinusoid", duration=300.0)
    assert schedule(profile, 0.0).beta == 0.0
    assert schedule(profile, 50.0).beta == pytest.approx(3.0)
    assert schedule(profile, 50.0).h_g == -200.0


def test_step_schedule_switches_at_the_table_times():
    profile = ScenarioProfile("steps", duration=300.0, steps=((0.0, 0.0), (30.0, 3.0)))
    assert schedule(profile, 29.9).beta == 0.0
    assert schedule(profile, 30.0).beta == 3.0
    assert schedule(profile, 300.0).beta == 3.0


def test_sweep_schedule_holds_each_angle():
    profile = ScenarioProfile("sweep", duration=330.0, sweep_dwell=30.0)
    assert schedule(profile, 0.0).beta == -5.0
    assert schedule(profile, 30.0).beta == -4.0
    assert schedule(profile, 329.9).beta == 5.0


def test_grid_steps_override_the_constant_height():
    profile = ScenarioProfile(
        "constant", duration=100.0, grid_steps=((0.0, -200.0), (50.0, 100.0))
    )
    assert schedule(profile, 49.0).h_g == -200.0
    assert schedule(profile, 50.0).h_g == 100.0


@pytest.mark.parametrize("t", [-1.0, 300.5])
def test_schedule_outside_the_scenario(t):
    with pytest.raises(RangeError):
        schedule(ScenarioProfile("sinusoid", duration=300.0), t)


@pytest.mark.parametrize("beta, h_g", [(6.0, -200.0), (0.0, 150.0)])
def test_scheduling_point_bounds(beta, h_g):
    with pytest.raises(RangeError):
        SchedulingPoint(beta, h_g)


def test_plant_baseline_follows_yaw_with_a_lag(model):
    plant = WindsorPlant(model, np.random.default_rng(0), noise=False)
    p = SchedulingPoint(3.0, -200.0)
    npt.assert_allclose(M_OUT @ plant.measure(p), model.baseline(REFERENCE_POINT))
    plant.advance(np.zeros(N_U), p)
    first = M_OUT @ plant.measure(p)
    assert 0.0 < first[0] < 3.0
    for _ in range(400):
        plant.advance(np.zeros(N_U), p)
        y = M_OUT @ plant.measure(p)
    npt.assert_allclose(y, model.baseline(p), atol=1e-8)


def test_plant_noise_is_reproducible(model):
    runs = []
    for _ in range(2):
        plant = WindsorPlant(model, np.random.default_rng(11))
        samples = []
        for _ in range(20):
            samples.append(plant.measure(REFERENCE_POINT))
            plant.advance(np.ones(N_U), REFERENCE_POINT)
        runs.append(np.array(samples))
    npt.assert_array_equal(runs[0], runs[1])


def test_proportional_feedback_closes_a_stable_loop(windsor):
    policy = ProportionalFeedback.around(windsor, 2000, seed=1)
    data = simulate(windsor, 2000, np.random.default_rng(1), policy=policy)
    assert np.all(np.abs(data.y) < 50.0)


def test_output_realization_drops_the_twist_mode(model, windsor):
    full = model.realization_at(REFERENCE_POINT)
    assert full.n_x == N_X
    assert windsor.n_x == N_X - 2
    assert windsor.is_observable()
    steady = np.linalg.solve(np.eye(N_X) - full.A, full.B)
    npt.assert_allclose(
        model.dc_gain(REFERENCE_POINT), M_OUT @ full.C @ steady, atol=1e-10
    )


def test_plant_step_reports_the_deviation_from_the_baseline(model):
    p = SchedulingPoint(3.0, -200.0)
    plant = WindsorPlant(model, np.random.default_rng(0), p, noise=False)
    _, deviation = model.plant_step(plant.state, np.zeros(N_U), p, np.zeros(4))
    npt.assert_array_equal(deviation, 0.0)
    assert np.any(np.abs(plant.measure(p)) > 1e-6)
