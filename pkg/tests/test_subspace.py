import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from windsor_rspc.functions.errors import DimensionError, RangeError
from windsor_rspc.functions.plant import prbs, simulate
from windsor_rspc.functions.subspace import (
    IoWindow,
    LtiRealization,
    SignalRing,
    controllability,
    data_equation_rhs,
    hankel,
    io_hankel,
    observability,
    persistent_excitation,
    stack_vector,
    structural,
    toeplitz,
)


def test_stack_vector_is_time_major():
    x = np.arange(12.0).reshape(6, 2)
    v = stack_vector(x, 2, 3)
    npt.assert_array_equal(v.data, [4, 5, 6, 7, 8, 9])
    npt.assert_array_equal(v.block(1), [6, 7])
    with pytest.raises(RangeError):
        v.block(3)


@pytest.mark.parametrize("k, span", [(-1, 2), (5, 2), (0, 0)])
def test_stack_vector_rejects_windows_outside_signal(k, span):
    with pytest.raises(RangeError):
        stack_vector(np.zeros((6, 2)), k, span)


@settings(max_examples=50, deadline=None)
@given(
    n=st.integers(1, 3),
    k=st.integers(0, 4),
    span=st.integers(1, 5),
    cols=st.integers(1, 6),
    seed=st.integers(0, 2**16),
)
def test_hankel_columns_are_shifted_stacks(n, k, span, cols, seed):
    x = np.random.default_rng(seed).standard_normal((k + span + cols, n))
    H = hankel(x, k, span, cols)
    assert H.data.shape == (n * span, cols)
    for j in range(cols):
        npt.assert_array_equal(H.data[:, j], stack_vector(x, k + j, span).data)
    # constant along block anti-diagonals
    for i in range(span - 1):
        for j in range(1, cols):
            npt.assert_array_equal(H.block(i + 1, j - 1), H.block(i, j))


def test_hankel_needs_enough_samples():
    with pytest.raises(RangeError):
        hankel(np.zeros((10, 1)), 0, 5, 7)
    assert hankel(np.zeros((10, 1)), 0, 5, 6).cols == 6


def test_io_hankel_stacks_inputs_over_outputs():
    u = np.arange(10.0).reshape(5, 2)
    y = -np.arange(5.0)
    W = io_hankel(u, y, 1, 2, 3)
    npt.assert_array_equal(W.data[:4], hankel(u, 1, 2, 3).data)
    npt.assert_array_equal(W.data[4:], hankel(y, 1, 2, 3).data)
    assert (W.origin, W.rows_span, W.cols) == (1, 2, 3)


@settings(max_examples=30, deadline=None)
@given(span=st.integers(1, 8), n=st.integers(1, 4))
def test_structural_summation_is_invertible(span, n):
    S = structural(span, n)
    assert abs(np.linalg.det(S.s_lower) - 1.0) < 1e-9
    increments = np.arange(1.0, span * n + 1)
    cumulative = np.cumsum(increments.reshape(span, n), axis=0).reshape(-1)
    npt.assert_allclose(S.cumulate(increments), cumulative)
    npt.assert_array_equal(S.replicate(np.arange(n)), np.tile(np.arange(n), span))


def test_observability_and_controllability_block_order(lti):
    O = observability(lti, 3)
    npt.assert_allclose(O[lti.n_y : 2 * lti.n_y], lti.C @ lti.A)
    Cc = controllability(lti.A, lti.B, 3)
    npt.assert_allclose(Cc[:, : lti.n_u], lti.A @ lti.A @ lti.B)
    npt.assert_allclose(Cc[:, -lti.n_u :], lti.B)
    assert lti.is_observable()


def test_toeplitz_matches_zero_state_response(lti):
    span = 6
    u = np.random.default_rng(1).standard_normal((span, lti.n_u))
    data = simulate(lti, span, inputs=u)
    npt.assert_allclose(toeplitz(lti, span) @ u.reshape(-1), data.y.reshape(-1))


def test_shifted_toeplitz_has_first_markov_parameter_on_diagonal(lti):
    H = toeplitz(lti.shifted(), 3)
    npt.assert_allclose(H[: lti.n_y, : lti.n_u], lti.C @ lti.B)
    npt.assert_array_equal(H[: lti.n_y, lti.n_u :], 0.0)


def test_realization_rejects_inconsistent_shapes():
    with pytest.raises(DimensionError):
        LtiRealization(np.eye(2), np.ones((3, 1)), np.ones((1, 2)))
    with pytest.raises(DimensionError):
        LtiRealization(np.eye(2), np.ones((2, 1)), np.ones((1, 2)), K=np.ones((2, 2)))


def test_data_equation_reconstructs_future_outputs(lti):
    rho, span, N = 30, 10, 500
    inputs = prbs(N, lti.n_u, seed=3, amplitude=1.0)
    data = simulate(lti, N, np.random.default_rng(3), inputs=inputs)
    cols = N - rho - span + 1
    result = data_equation_rhs(
        lti,
        io_hankel(data.u, data.y, 0, rho, cols),
        hankel(data.u, rho, span, cols),
        hankel(data.e, rho, span, cols),
    )
    assert result.valid
    expected = hankel(data.y, rho, span, cols).data
    assert np.max(np.abs(result.y_future - expected)) < 1e-8


def test_data_equation_rejects_misaligned_windows(lti):
    u = np.zeros((60, lti.n_u))
    y = np.zeros((60, lti.n_y))
    with pytest.raises(DimensionError):
        data_equation_rhs(
            lti,
            io_hankel(u, y, 0, 10, 20),
            hankel(u, 11, 5, 20),
            hankel(y, 11, 5, 20),
        )


def test_persistent_excitation_of_prbs_and_zero_signal():
    rank, exciting = persistent_excitation(prbs(400, 1, seed=1), 10)
    assert exciting and rank == 10
    rank, exciting = persistent_excitation(np.zeros((400, 2)), 10)
    assert not exciting and rank == 0


def test_signal_ring_keeps_latest_samples():
    ring = SignalRing(2, 3)
    for k in range(5):
        ring.push([k, -k])
    assert ring.first == 2 and ring.count == 5 and len(ring) == 3
    npt.assert_array_equal(ring.at(4), [4, -4])
    npt.assert_array_equal(ring.window(2, 3)[:, 0], [2, 3, 4])
    with pytest.raises(RangeError):
        ring.at(1)
    with pytest.raises(RangeError):
        ring.window(3, 3)
    with pytest.raises(DimensionError):
        ring.push([1.0])


def test_io_window_layout_and_increments():
    window = IoWindow(1, 1, 10)
    window.record(None, [0.0])
    for k in range(1, 6):
        window.record([float(k)], [10.0 * k])
    assert window.now == 5
    # u(k) is the input applied over sample k, recorded one step later
    npt.assert_array_equal(window.stacked(1, 2), [2.0, 3.0, 10.0, 20.0])
    npt.assert_array_equal(
        window.stacked(1, 2, np.array([1.0]), np.array([10.0])), [1, 2, 0, 10]
    )
    npt.assert_array_equal(window.increments(1, 3), [1, 1, 1, 10, 10, 10])
