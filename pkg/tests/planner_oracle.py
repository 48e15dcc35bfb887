"""Independent uniform-cost search over the planner's primitive graph.

Written separately from the planner core: poses are advanced with a rotation
matrix, occupancy along each sub-segment is checked by dense sampling, and the
frontier is a plain binary heap keyed by path cost.
"""

import heapq
import math

import numpy as np
from numba import njit


@njit(cache=True)
def _advance(x, y, th, kappa, s):
    if kappa == 0.0:
        return x + s * math.cos(th), y + s * math.sin(th), th
    r = 1.0 / kappa
    # centre of curvature then rotate about it
    cx, cy = x - r * math.sin(th), y + r * math.cos(th)
    phi = kappa * s
    c, sn = math.cos(phi), math.sin(phi)
    dx, dy = x - cx, y - cy
    return cx + c * dx - sn * dy, cy + sn * dx + c * dy, th + phi


@njit(cache=True)
def _lookup(cost, x0, y0, res, x, y):
    ix = int(math.floor((x - x0) / res))
    iy = int(math.floor((y - y0) / res))
    if 0 <= ix < cost.shape[1] and 0 <= iy < cost.shape[0]:
        return cost[iy, ix]
    return math.inf


@njit(cache=True)
def _free(cost, x0, y0, res, thresh, ax, ay, bx, by):
    n = 16
    for k in range(n + 1):
        t = k / n
        if not _lookup(cost, x0, y0, res, ax + t * (bx - ax), ay + t * (by - ay)) < thresh:
            return False
    return True


@njit(cache=True)
def dijkstra_cost(cost, x0, y0, res, thresh, start, goal, kappas, arc_len, nsub, nb, goal_tol, head_tol,
                  steer_w, kmax):
    h, w = cost.shape
    done = np.zeros(h * w * nb, np.bool_)
    best = np.full(h * w * nb, np.inf)
    frontier = [(0.0, start[0], start[1], start[2])]
    while frontier:
        g, x, y, th = heapq.heappop(frontier)
        key = ((int(math.floor((y - y0) / res)) * w + int(math.floor((x - x0) / res))) * nb
               + int(math.floor((th % (2 * math.pi)) / (2 * math.pi) * nb + 0.5)) % nb)
        if done[key]:
            continue
        done[key] = True
        dth = math.atan2(math.sin(th - goal[2]), math.cos(th - goal[2]))
        if math.hypot(x - goal[0], y - goal[1]) <= goal_tol and abs(dth) <= head_tol:
            return g
        for k in kappas:
            px, py = x, y
            acc = 0.0
            blocked = False
            for j in range(1, nsub + 1):
                qx, qy, _ = _advance(x, y, th, k, arc_len * j / nsub)
                if not _free(cost, x0, y0, res, thresh, px, py, qx, qy):
                    blocked = True
                    break
                acc += _lookup(cost, x0, y0, res, qx, qy)
                px, py = qx, qy
            if blocked:
                continue
            ex, ey, eth = _advance(x, y, th, k, arc_len)
            eth = math.atan2(math.sin(eth), math.cos(eth))
            nkey = ((int(math.floor((ey - y0) / res)) * w + int(math.floor((ex - x0) / res))) * nb
                    + int(math.floor((eth % (2 * math.pi)) / (2 * math.pi) * nb + 0.5)) % nb)
            if done[nkey]:
                continue
            g2 = g + arc_len * (1.0 + acc / nsub) + steer_w * arc_len * abs(k) / kmax
            if g2 < best[nkey]:
                best[nkey] = g2
                heapq.heappush(frontier, (g2, ex, ey, eth))
    return math.inf


def oracle_cost(cost_map, start, goal, vehicle, config):
    from coopsense.planner import primitive_curvatures

    res = cost_map.resolution
    arc_len = config.arc_cells * res
    nsub = max(1, int(math.ceil(arc_len / (res / 2.0))))
    return dijkstra_cost(cost_map.cost, cost_map.origin[0], cost_map.origin[1], res, cost_map.occupied_threshold,
                         np.array([start.x, start.y, start.theta]), np.array([goal.x, goal.y, goal.theta]),
                         primitive_curvatures(vehicle), arc_len, nsub, config.heading_bins, config.goal_tolerance,
                         config.heading_tolerance, config.steer_penalty, vehicle.max_curvature)


def random_cost_map(rng, n=200, res=0.5):
    """Smooth cost field with hard circular obstacles on an ``n x n`` grid."""
    from coopsense.planner import CostMap

    gx, gy = np.meshgrid(np.arange(n) + 0.5, np.arange(n) + 0.5)
    cost = np.zeros((n, n))
    scale = (n / 200.0) ** 2
    for _ in range(max(3, round(12 * scale))):
        cx, cy, s, a = rng.uniform(0, n), rng.uniform(0, n), rng.uniform(5, 25), rng.uniform(0.1, 0.6)
        cost += a * np.exp(-((gx - cx) ** 2 + (gy - cy) ** 2) / (2 * s * s))
    cost = np.minimum(cost, 0.85)
    for _ in range(max(4, round(25 * scale))):
        cx, cy, r = rng.uniform(0, n), rng.uniform(0, n), rng.uniform(2, 10)
        cost[(gx - cx) ** 2 + (gy - cy) ** 2 <= r * r] = 1.0
    return CostMap((0.0, 0.0), res, cost)


def random_endpoints(rng, cost_map, min_sep=30.0):
    from coopsense.geometry import Pose2

    lo, hi = 5.0, cost_map.width * cost_map.resolution - 5.0

    def free():
        for _ in range(100_000):
            x, y = rng.uniform(lo, hi, 2)
            if all(cost_map.cost_at(x + dx, y + dy) < 0.5 for dx in (-2, 0, 2) for dy in (-2, 0, 2)):
                return Pose2(x, y, rng.uniform(-math.pi, math.pi))
        raise RuntimeError("no free pose found")

    s = free()
    while True:
        g = free()
        if math.hypot(g.x - s.x, g.y - s.y) >= min_sep:
            return s, g
