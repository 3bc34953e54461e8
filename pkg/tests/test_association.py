import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dreamtrack.association import associate, associate_iou, hungarian
from dreamtrack.geometry import BevBox

from oracles import all_partial_matchings, brute_force_assignment_cost

cost_matrices = st.tuples(st.integers(1, 5), st.integers(1, 5)).flatmap(
    lambda nm: arrays(np.float64, nm, elements=st.floats(-10, 10, allow_nan=False))
)
iou_matrices = st.tuples(st.integers(0, 4), st.integers(0, 4)).flatmap(
    lambda nm: arrays(np.float64, nm, elements=st.floats(0, 1, allow_nan=False))
)


def total(cost, pairs):
    return sum(cost[i, j] for i, j in pairs)


class TestHungarian:
    def test_empty(self):
        assert hungarian(np.zeros((0, 3))) == []

    def test_greedy_is_suboptimal(self):
        cost = np.array([[1, 2, 3], [2, 4, 6], [3, 6, 9]], dtype=float)
        # greedy picks (0,0) first for a total of 1+4+9=14; optimum is 10
        pairs = hungarian(cost)
        assert total(cost, pairs) == pytest.approx(10)

    def test_ties_resolved_lexicographically(self):
        assert hungarian(np.zeros((2, 2))) == [(0, 0), (1, 1)]
        assert hungarian(np.zeros((2, 3))) == [(0, 0), (1, 1)]

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            hungarian(np.array([[np.inf, 0.0]]))

    def test_rejects_wrong_rank(self):
        with pytest.raises(ValueError):
            hungarian(np.zeros(3))

    def test_brute_force(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n, m = rng.integers(1, 6, 2)
            cost = rng.normal(size=(n, m))
            pairs = hungarian(cost)
            assert len(pairs) == min(n, m)
            assert total(cost, pairs) == pytest.approx(brute_force_assignment_cost(cost), abs=1e-9)

    @settings(max_examples=60)
    @given(cost_matrices)
    def test_one_to_one_and_optimal(self, cost):
        pairs = hungarian(cost)
        assert len({i for i, _ in pairs}) == len(pairs) == len({j for _, j in pairs}) == min(cost.shape)
        assert total(cost, pairs) <= brute_force_assignment_cost(cost) + 1e-9 * (1 + np.abs(cost).sum())

    @settings(max_examples=40)
    @given(cost_matrices, st.integers(1, 20), st.integers(-50, 50))
    def test_affine_invariance(self, cost, scale, shift):
        # integer costs keep ties exact under the map
        cost = np.round(cost)
        assert hungarian(cost) == hungarian(cost * scale + shift)


class TestAssociateIou:
    def test_gate(self):
        iou = np.array([[0.29, 0.0], [0.0, 0.31]])
        r = associate_iou(iou, 0.3)
        assert [(i, j) for i, j, _ in r.matches] == [(1, 1)]
        assert r.unmatched_tracks == [0] and r.unmatched_detections == [0]

    def test_maximizes_gated_iou(self):
        iou = np.array([[0.9, 0.8], [0.85, 0.0]])
        assert [(i, j) for i, j, _ in associate_iou(iou, 0.3).matches] == [(0, 1), (1, 0)]

    def test_rejects_bad_gate(self):
        with pytest.raises(ValueError):
            associate_iou(np.zeros((1, 1)), 1.5)

    @settings(max_examples=80)
    @given(iou_matrices, st.floats(0.05, 0.9))
    def test_partition_and_optimality(self, iou, gate):
        n, m = iou.shape
        r = associate_iou(iou, gate)
        tracks = [i for i, _, _ in r.matches] + r.unmatched_tracks
        dets = [j for _, j, _ in r.matches] + r.unmatched_detections
        assert sorted(tracks) == list(range(n)) and sorted(dets) == list(range(m))
        assert all(iou[i, j] >= gate for i, j, _ in r.matches)
        best = max(
            sum(iou[i, j] for i, j in mt)
            for mt in all_partial_matchings(n, m)
            if all(iou[i, j] >= gate for i, j in mt)
        )
        assert sum(v for _, _, v in r.matches) == pytest.approx(best, abs=1e-9)


class TestAssociate:
    def test_boxes(self):
        tracks = [BevBox(10, 0, 0, 4, 2), BevBox(20, 5, 0, 4, 2)]
        dets = [BevBox(20.3, 5, 0, 4, 2), BevBox(50, 0, 0, 4, 2), BevBox(10.2, 0.1, 0.05, 4, 2)]
        r = associate(tracks, dets)
        assert [(i, j) for i, j, _ in r.matches] == [(0, 2), (1, 0)]
        assert r.unmatched_detections == [1]

    def test_no_tracks(self):
        r = associate([], [BevBox(0, 0, 0, 1, 1)])
        assert r.matches == [] and r.unmatched_detections == [0]

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(9)
        tracks = [BevBox(*rng.uniform(0, 8, 2), 0, 4, 2) for _ in range(4)]
        dets = [BevBox(t.cx + rng.normal(0, 0.5), t.cy + rng.normal(0, 0.5), 0, 4, 2) for t in tracks]
        base = {(i, j) for i, j, _ in associate(tracks, dets).matches}
        for perm in itertools.permutations(range(4)):
            r = associate(tracks, [dets[p] for p in perm])
            assert {(i, perm[j]) for i, j, _ in r.matches} == base
