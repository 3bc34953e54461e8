import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dreamtrack.data import GROUND_TRUTH, PseudoLabel
from dreamtrack.dynamics import propagate, ego_motion_from_poses
from dreamtrack.io import labels_text, sequence_text
from dreamtrack.sim import (
    EgoPathSpec,
    ScenarioSpec,
    SensorModel,
    VehicleSpec,
    generate,
    ground_truth_states,
    logistic_falloff,
    traffic_scenario,
)

ZERO_NOISE = SensorModel(
    r50=1e6, pool_r50=1e6, sigma0=(0, 0, 0, 0, 0), sigma_per_m=(0, 0, 0, 0, 0), size_bias=0.0, score_noise=0.0
)


def gt_at(r):
    return PseudoLabel(0, 0, r, 0.0, 0.8, 0.0, 4.5, 1.9, 1.6, 1.0, GROUND_TRUTH)


class TestSensorModel:
    def test_logistic_midpoint(self):
        assert logistic_falloff(50, 50, 4) == pytest.approx(0.5)
        assert logistic_falloff(0, 50, 4) > 0.99999

    def test_rejects_bad_slope(self):
        with pytest.raises(ValueError):
            SensorModel(slope=0)

    def test_rejects_negative_sigma(self):
        with pytest.raises(ValueError):
            SensorModel(sigma0=(-1, 0, 0, 0, 0))

    @pytest.mark.parametrize("r", [20.0, 50.0, 60.0])
    def test_detection_rate_binomial(self, r):
        sensor = SensorModel(dropout=0.1)
        rng = np.random.default_rng(int(r))
        n = 10_000
        hits = sum(sensor.observe(rng, gt_at(r))[0] is not None for _ in range(n))
        p = sensor.detect_prob(r) * 0.9
        assert abs(hits - n * p) <= 3 * math.sqrt(n * p * (1 - p))

    def test_pool_contains_detection(self):
        rng = np.random.default_rng(0)
        sensor = SensorModel()
        for r in np.linspace(5, 95, 200):
            det, pooled = sensor.observe(rng, gt_at(float(r)))
            if det is not None:
                assert pooled == det

    def test_scores(self):
        rng = np.random.default_rng(1)
        sensor = SensorModel()
        for r in np.linspace(5, 95, 300):
            det, pooled = sensor.observe(rng, gt_at(float(r)))
            if det is not None:
                assert sensor.score_min <= det.score <= 1.0
            elif pooled is not None:
                assert sensor.pool_score_min <= pooled.score < sensor.score_min

    def test_size_bias_ramp(self):
        s = SensorModel(size_bias=0.1)
        assert s.size_factor(10) == 1.0
        assert s.size_factor(50) == pytest.approx(1.05)
        assert s.size_factor(90) == pytest.approx(1.1)


class TestGenerate:
    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            generate(ScenarioSpec(vehicles=()))
        with pytest.raises(ValueError):
            generate(ScenarioSpec(num_frames=0, vehicles=(VehicleSpec(20, 0, 0, 5),)))

    def test_zero_noise_equals_truth(self):
        spec = ScenarioSpec(
            seed=1, num_frames=30, vehicles=(VehicleSpec(20, 1, 0.1, 8), VehicleSpec(60, -4, math.pi, 10)), sensor=ZERO_NOISE
        )
        seq, gt = generate(spec)
        for frame in seq.frames:
            truth = gt[frame.frame_index]
            assert len(frame.detections) == len(truth)
            for d, g in zip(frame.detections, truth):
                assert (d.cx, d.cy, d.yaw, d.l, d.w) == pytest.approx((g.cx, g.cy, g.yaw, g.l, g.w), abs=1e-12)

    def test_deterministic(self):
        spec = traffic_scenario(11, num_frames=40)
        a, ga = generate(spec)
        b, gb = generate(spec)
        assert sequence_text(a) == sequence_text(b)
        assert labels_text("x", ga) == labels_text("x", gb)

    def test_seed_matters(self):
        assert sequence_text(generate(traffic_scenario(1, num_frames=20))[0]) != sequence_text(
            generate(traffic_scenario(2, num_frames=20))[0]
        )

    def test_pool_superset(self):
        seq, _ = generate(traffic_scenario(3, num_frames=60, sensor=SensorModel(clutter_rate=1.0)))
        for frame in seq.frames:
            for d in frame.detections:
                assert d in frame.pool_detections

    def test_gt_inside_sensor_view(self):
        spec = traffic_scenario(4, num_frames=60)
        _, gt = generate(spec)
        for labs in gt.values():
            for g in labs:
                assert spec.sensor.sees(g.cx, g.cy)

    def test_timestamps(self):
        seq, _ = generate(traffic_scenario(5, num_frames=10, frame_rate=20))
        np.testing.assert_allclose([f.timestamp for f in seq.frames], np.arange(10) / 20)

    def test_short_traffic_sequence(self):
        seq, _ = generate(traffic_scenario(7, num_frames=1))
        assert len(seq.frames) == 1

    def test_overfull_road_rejected(self):
        with pytest.raises(ValueError, match="cannot place"):
            traffic_scenario(0, num_frames=10, num_vehicles=500)

    def test_spec_round_trip(self):
        spec = traffic_scenario(6, num_frames=10)
        assert ScenarioSpec.from_dict(spec.to_dict()) == spec


class TestGroundTruthKinematics:
    @settings(max_examples=30, deadline=None)
    @given(
        st.floats(-3.0, 3.0),
        st.floats(0, 20),
        st.floats(0, 15),
        st.floats(-0.3, 0.3),
    )
    def test_agrees_with_propagation(self, heading, speed, ego_speed, yaw_rate):
        spec = ScenarioSpec(
            num_frames=20,
            ego=EgoPathSpec(speed=ego_speed, yaw_rate=yaw_rate),
            vehicles=(VehicleSpec(25, 3, heading, speed),),
        )
        states = ground_truth_states(spec)
        dt = 1 / spec.frame_rate
        for k in range(spec.num_frames - 1):
            ego = ego_motion_from_poses(spec.ego.pose(k * dt), spec.ego.pose((k + 1) * dt), dt)
            pred = propagate(states[k][0], ego)
            err = np.abs(pred - states[k + 1][0])
            err[2] = abs(math.remainder(pred[2] - states[k + 1][0][2], 2 * math.pi))
            # one Euler step: error bounded by dt^2 times the state's second derivative scale
            bound = dt**2 * (abs(yaw_rate) * (speed + ego_speed + abs(yaw_rate) * 40) + 1e-9)
            assert err.max() <= bound
