import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dreamtrack.dynamics import (
    DEFAULT_PROCESS_NOISE,
    EgoMotion,
    ProcessNoise,
    TrackState,
    discrete_process_noise,
    ego_motion_from_poses,
    jacobian_f,
    propagate,
)

from oracles import central_difference_jacobian, euler_integrate

states = st.builds(
    lambda x, y, th, s, l, w: np.array([x, y, th, s, l, w]),
    st.floats(-60, 60),
    st.floats(-30, 30),
    st.floats(-3.0, 3.0),
    st.floats(-5, 25),
    st.floats(2, 6),
    st.floats(1, 2.5),
)
egos = st.builds(EgoMotion, st.floats(-5, 20), st.floats(-2, 2), st.floats(-0.5, 0.5), st.floats(0.02, 0.2))


class TestPropagate:
    def test_rejects_non_positive_dt(self):
        with pytest.raises(ValueError):
            EgoMotion(0, 0, 0, 0.0)

    def test_still(self):
        x = np.array([10, 2, 0.3, 0.0, 4, 2])
        np.testing.assert_array_equal(propagate(x, EgoMotion.still(0.1)), x)

    def test_equal_speeds_cancel(self):
        x = np.array([10, 0, 0, 5, 4, 2])
        np.testing.assert_allclose(propagate(x, EgoMotion(5, 0, 0, 0.1)), x, atol=1e-15)

    def test_matches_fine_integration(self):
        x = np.array([10, 2, math.pi / 2, 3, 4, 2])
        ego = EgoMotion(1, 0, 0.1, 0.1)
        got = x
        for _ in range(100):
            got = propagate(got, EgoMotion(1, 0, 0.1, 0.001))
        ref = euler_integrate(x, 1, 0, 0.1, 0.1, 1000)
        np.testing.assert_allclose(got, ref, atol=1e-4)
        # one coarse step stays within the second-order local error
        assert np.max(np.abs(propagate(x, ego) - ref)) < ego.dt**2

    def test_backward_inverts_forward_to_second_order(self):
        x = np.array([20, -3, 0.4, 8, 4.5, 1.9])
        ego = EgoMotion(10, 0.2, 0.05, 0.1)
        back = propagate(propagate(x, ego), ego, backward=True)
        assert np.max(np.abs(back - x)) < 0.05 * ego.dt

    def test_first_order_convergence(self):
        x = np.array([15, 4, 0.7, 9, 4.5, 1.9])
        vx, vy, wz = 8.0, 0.3, 0.2
        exact = euler_integrate(x, vx, vy, wz, 0.2, 20000)
        errs = []
        for n in (1, 2, 4):
            y = x.copy()
            for _ in range(n):
                y = propagate(y, EgoMotion(vx, vy, wz, 0.2 / n))
            errs.append(np.linalg.norm(y[:3] - exact[:3]))
        # first-order scheme: error roughly halves with the step
        assert errs[1] < 0.6 * errs[0] and errs[2] < 0.6 * errs[1]

    @given(states, egos)
    def test_theta_wrapped(self, x, ego):
        assert -math.pi < propagate(x, ego)[2] <= math.pi


class TestJacobian:
    def test_still_ego_zero_speed(self):
        expected = np.eye(6)
        expected[0, 3] = 0.1 * math.cos(0.2)
        expected[1, 3] = 0.1 * math.sin(0.2)
        np.testing.assert_allclose(jacobian_f(np.array([5, 1, 0.2, 0, 4, 2]), EgoMotion.still(0.1)), expected, atol=1e-15)

    def test_read_off(self):
        F = jacobian_f(np.array([5, 1, 0.0, 7.0, 4, 2]), EgoMotion(3, 0, 0, 0.1))
        assert F[0, 3] == pytest.approx(0.1)
        assert F[1, 2] == pytest.approx(0.7)
        assert F[0, 2] == 0.0

    @given(states, egos)
    def test_finite_differences(self, x, ego):
        J = central_difference_jacobian(lambda v: propagate(v, ego), x)
        np.testing.assert_allclose(jacobian_f(x, ego), J, rtol=1e-6, atol=1e-6)


class TestProcessNoise:
    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            ProcessNoise((1, -1, 0, 0, 0, 0, 0))

    def test_zero(self):
        Q = discrete_process_noise(np.array([10, 5, 0, 1, 4, 2]), EgoMotion.still(0.1), ProcessNoise((0,) * 7))
        np.testing.assert_array_equal(Q, np.zeros((6, 6)))

    def test_heading_channel_only(self):
        Q = discrete_process_noise(np.array([10, 5, 0, 1, 4, 2]), EgoMotion.still(1.0), ProcessNoise((1, 0, 0, 0, 0, 0, 0)))
        expected = np.zeros((6, 6))
        expected[2, 2] = 1.0
        np.testing.assert_array_equal(Q, expected)

    def test_defaults_by_hand(self):
        x, y, dt = 10.0, 5.0, 0.1
        e_th, e_s, e_vx, e_vy, e_wz, e_l, e_w = DEFAULT_PROCESS_NOISE
        expected = np.zeros((6, 6))
        # x row gets -e_vx and +y*e_wz; y row gets -e_vy and -x*e_wz; theta row gets e_theta and -e_wz
        expected[0, 0] = e_vx + y * y * e_wz
        expected[1, 1] = e_vy + x * x * e_wz
        expected[2, 2] = e_th + e_wz
        expected[3, 3] = e_s
        expected[4, 4] = e_l
        expected[5, 5] = e_w
        expected[0, 1] = expected[1, 0] = -x * y * e_wz
        expected[0, 2] = expected[2, 0] = -y * e_wz
        expected[1, 2] = expected[2, 1] = x * e_wz
        expected *= dt
        Q = discrete_process_noise(np.array([x, y, 0.3, 8, 4, 2]), EgoMotion(5, 0, 0.1, dt), ProcessNoise())
        np.testing.assert_allclose(Q, expected, rtol=1e-12, atol=1e-15)

    @given(states, egos, st.lists(st.floats(0, 5), min_size=7, max_size=7))
    def test_symmetric_psd(self, x, ego, q):
        Q = discrete_process_noise(x, ego, ProcessNoise(tuple(q)))
        np.testing.assert_array_equal(Q, Q.T)
        assert np.linalg.eigvalsh(Q)[0] >= -1e-9 * max(1.0, np.abs(Q).max())


class TestEgoMotion:
    def test_straight(self):
        ego = ego_motion_from_poses((0, 0, 0), (1.2, 0, 0), 0.1)
        assert (ego.vx, ego.vy, ego.wz) == pytest.approx((12, 0, 0))

    def test_expressed_in_start_frame(self):
        ego = ego_motion_from_poses((5, 5, math.pi / 2), (5, 6, math.pi / 2 + 0.01), 0.1)
        assert (ego.vx, ego.vy, ego.wz) == pytest.approx((10, 0, 0.1))

    def test_rejects_bad_dt(self):
        with pytest.raises(ValueError):
            ego_motion_from_poses((0, 0, 0), (0, 0, 0), 0.0)


def test_track_state_round_trip():
    s = TrackState(1, 2, 4.0, 3, 4, 2)
    assert -math.pi < s.theta <= math.pi
    assert TrackState.from_array(s.as_array()) == s
