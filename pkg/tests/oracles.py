"""Independent reference computations used by the tests.

None of these call into the code paths they check.
"""

import itertools
import math

import numpy as np


def mc_iou(a, b, rng, n_side=1000):
    """Stratified Monte-Carlo IoU with ``n_side**2`` samples drawn over box ``a``.

    One jittered sample per grid cell of ``a``'s local frame; each is tested
    for membership in ``b`` by projecting onto ``b``'s axes.
    """
    u = ((np.arange(n_side) + rng.random(n_side)) / n_side - 0.5) * a.length
    v = ((np.arange(n_side)[:, None] + rng.random((n_side, n_side))) / n_side - 0.5) * a.width
    rel = a.yaw - b.yaw
    c, s = math.cos(rel), math.sin(rel)
    cb, sb = math.cos(b.yaw), math.sin(b.yaw)
    dx, dy = a.cx - b.cx, a.cy - b.cy
    px, py = cb * dx + sb * dy, -sb * dx + cb * dy
    bu = px + c * u[None, :] - s * v
    bv = py + s * u[None, :] + c * v
    inside = (np.abs(bu) <= 0.5 * b.length) & (np.abs(bv) <= 0.5 * b.width)
    area_a, area_b = a.length * a.width, b.length * b.width
    inter = inside.mean() * area_a
    return inter / (area_a + area_b - inter)


def brute_force_assignment_cost(cost):
    """Minimum total over all injections of the smaller side into the larger."""
    cost = np.asarray(cost)
    n, m = cost.shape
    if n <= m:
        return min(sum(cost[i, p[i]] for i in range(n)) for p in itertools.permutations(range(m), n))
    return min(sum(cost[p[j], j] for j in range(m)) for p in itertools.permutations(range(n), m))


def all_partial_matchings(n, m):
    """Every one-to-one partial matching between ``range(n)`` and ``range(m)``."""
    def rec(i, used):
        if i == n:
            yield []
            return
        yield from rec(i + 1, used)
        for j in range(m):
            if j not in used:
                for rest in rec(i + 1, used | {j}):
                    yield [(i, j)] + rest
    yield from rec(0, frozenset())


def greedy_nms(boxes, priorities, scores, thresh, iou_fn):
    """Plain greedy NMS: repeatedly take the best remaining box, drop its overlaps."""
    remaining = list(range(len(boxes)))
    kept = []
    while remaining:
        best = remaining[0]
        for i in remaining[1:]:
            if (priorities[i], scores[i], -i) > (priorities[best], scores[best], -best):
                best = i
        kept.append(best)
        remaining = [i for i in remaining if i != best and iou_fn(boxes[i], boxes[best]) <= thresh]
    return kept


def euler_integrate(state, vx, vy, wz, duration, substeps):
    """Fine-step integration of the relative constant-velocity kinematics."""
    x, y, th, s, l, w = (float(v) for v in state)
    h = duration / substeps
    for _ in range(substeps):
        dx = s * math.cos(th) - vx + wz * y
        dy = s * math.sin(th) - vy - wz * x
        x, y, th = x + h * dx, y + h * dy, th - h * wz
    return np.array([x, y, th, s, l, w])


def central_difference_jacobian(fn, x0, h=1e-6):
    x0 = np.asarray(x0, dtype=float)
    f0 = np.asarray(fn(x0))
    J = np.zeros((f0.size, x0.size))
    for k in range(x0.size):
        e = np.zeros_like(x0)
        e[k] = h
        J[:, k] = (np.asarray(fn(x0 + e)) - np.asarray(fn(x0 - e))) / (2 * h)
    return J


def linear_kalman(x0, P0, F, B_u, Q, H, R, zs):
    """Textbook linear Kalman filter; ``B_u`` is a constant additive control term.

    Returns the list of posterior (x, P) pairs, the first being (x0, P0)
    updated by ``zs[0]`` if that is not None.
    """
    x, P = np.array(x0, dtype=float), np.array(P0, dtype=float)
    out = []
    for k, z in enumerate(zs):
        if k > 0:
            x = F @ x + B_u
            P = F @ P @ F.T + Q
        if z is not None:
            S = H @ P @ H.T + R
            K = P @ H.T @ np.linalg.inv(S)
            x = x + K @ (z - H @ x)
            P = (np.eye(len(x)) - K @ H) @ P
        out.append((x.copy(), P.copy()))
    return out


def batch_least_squares_cv(x0, P0, dt, q_pos, q_vel, r_pos, zs, offset=0.0):
    """MAP trajectory of a 1-D constant-velocity model by dense weighted least squares.

    Unknowns are (p_k, v_k) for every step; residuals are the prior on step 0,
    the process model between steps, and position measurements ``z_k = p_k + offset``.
    """
    n = len(zs)
    dim = 2 * n
    rows, rhs, weights = [], [], []

    def add(coeffs, value, var):
        row = np.zeros(dim)
        for idx, c in coeffs:
            row[idx] += c
        rows.append(row)
        rhs.append(value)
        weights.append(1.0 / var)

    add([(0, 1.0)], x0[0], P0[0])
    add([(1, 1.0)], x0[1], P0[1])
    for k in range(n - 1):
        p, v, p1, v1 = 2 * k, 2 * k + 1, 2 * k + 2, 2 * k + 3
        add([(p1, 1.0), (p, -1.0), (v, -dt)], 0.0, q_pos * dt)
        add([(v1, 1.0), (v, -1.0)], 0.0, q_vel * dt)
    for k, z in enumerate(zs):
        if z is not None:
            add([(2 * k, 1.0)], z - offset, r_pos)
    A = np.array(rows)
    b = np.array(rhs)
    Wt = np.array(weights)
    sol = np.linalg.solve(A.T @ (Wt[:, None] * A), A.T @ (Wt * b))
    return sol.reshape(n, 2)


def hand_ap_40(scores, tp, num_gt):
    """40-point interpolated AP by direct definition, one threshold at a time."""
    thresholds = sorted(set(scores), reverse=True)
    pts = []
    for t in thresholds:
        sel = [f for s, f in zip(scores, tp) if s >= t]
        tps = sum(sel)
        pts.append((tps / num_gt, tps / len(sel)))
    total = 0.0
    for i in range(1, 41):
        r = i / 40
        cands = [p for rec, p in pts if rec >= r - 1e-12]
        total += max(cands) if cands else 0.0
    return total / 40
