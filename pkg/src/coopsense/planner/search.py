"""Hybrid A* over ``(x, y, heading)`` with forward arc primitives.

Nodes keep continuous poses; a search bin (cell x heading sector) is closed the
first time one of its nodes is expanded.  Setting the heuristic off turns the
same search into a uniform-cost (Dijkstra) search of the identical graph.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..geometry import InvalidArgumentError, Pose2, wrap_angle
from .costmap import CostMap, VehicleParams

__all__ = ["PlannerConfig", "PlannedPath", "InvalidStartError", "plan", "primitive_curvatures", "path_cost"]


class InvalidStartError(InvalidArgumentError):
    """The start pose lies in an occupied or off-map cell."""


@dataclass(frozen=True)
class PlannerConfig:
    heading_bins: int = 72
    arc_cells: float = 2.0
    goal_tolerance: float = 0.5  # m
    heading_tolerance: float = math.radians(10.0)
    steer_penalty: float = 0.05
    max_expansions: int = 2_000_000

    def __post_init__(self):
        if self.heading_bins < 4 or not self.arc_cells > 0 or not self.goal_tolerance > 0:
            raise InvalidArgumentError("invalid planner configuration")


@dataclass(frozen=True, eq=False)
class PlannedPath:
    poses: np.ndarray  # (n, 3)
    speeds: np.ndarray
    feasible: bool
    cost: float = math.inf
    expansions: int = 0

    @classmethod
    def infeasible(cls, expansions: int = 0) -> "PlannedPath":
        return cls(np.zeros((0, 3)), np.zeros(0), False, math.inf, expansions)

    @property
    def length(self) -> float:
        if len(self.poses) < 2:
            return 0.0
        return float(np.hypot(*np.diff(self.poses[:, :2], axis=0).T).sum())


def primitive_curvatures(vehicle: VehicleParams) -> np.ndarray:
    k = vehicle.max_curvature
    return np.array([0.0, k / 2, -k / 2, k, -k])


# --- numba core ----------------------------------------------------------------

@njit(cache=True)
def _arc(x, y, th, kappa, s):
    if abs(kappa) < 1e-12:
        return x + s * math.cos(th), y + s * math.sin(th), th
    th2 = th + kappa * s
    return x + (math.sin(th2) - math.sin(th)) / kappa, y - (math.cos(th2) - math.cos(th)) / kappa, th2


@njit(cache=True)
def _cell_cost(cost, x0, y0, res, x, y):
    ix = int(math.floor((x - x0) / res))
    iy = int(math.floor((y - y0) / res))
    if ix < 0 or iy < 0 or ix >= cost.shape[1] or iy >= cost.shape[0]:
        return math.inf
    return cost[iy, ix]


@njit(cache=True)
def _segment_clear(cost, x0, y0, res, thresh, ax, ay, bx, by):
    """Grid traversal of every cell the segment touches."""
    gax, gay = (ax - x0) / res, (ay - y0) / res
    gbx, gby = (bx - x0) / res, (by - y0) / res
    ix, iy = int(math.floor(gax)), int(math.floor(gay))
    jx, jy = int(math.floor(gbx)), int(math.floor(gby))
    h, w = cost.shape
    if ix < 0 or iy < 0 or ix >= w or iy >= h or cost[iy, ix] >= thresh:
        return False
    dx, dy = gbx - gax, gby - gay
    sx = 1 if dx > 0 else -1
    sy = 1 if dy > 0 else -1
    tmx = ((ix + (1 if dx > 0 else 0)) - gax) / dx if dx != 0 else math.inf
    tmy = ((iy + (1 if dy > 0 else 0)) - gay) / dy if dy != 0 else math.inf
    tdx = abs(1.0 / dx) if dx != 0 else math.inf
    tdy = abs(1.0 / dy) if dy != 0 else math.inf
    for _ in range(abs(jx - ix) + abs(jy - iy)):
        if tmx < tmy:
            ix += sx
            tmx += tdx
        else:
            iy += sy
            tmy += tdy
        if ix < 0 or iy < 0 or ix >= w or iy >= h or cost[iy, ix] >= thresh:
            return False
    return True


@njit(cache=True)
def _bin(x, y, th, x0, y0, res, w, nb):
    ix = int(math.floor((x - x0) / res))
    iy = int(math.floor((y - y0) / res))
    t = th % (2.0 * math.pi)
    ib = int(math.floor(t / (2.0 * math.pi) * nb + 0.5)) % nb
    return (iy * w + ix) * nb + ib


@njit(cache=True)
def _heuristic(cost, x0, y0, res, x, y, gx, gy, tol):
    d = math.hypot(gx - x, gy - y)
    n = int(math.ceil(d / res)) + 1
    mc = math.inf
    for k in range(n + 1):
        t = k / n
        c = _cell_cost(cost, x0, y0, res, x + t * (gx - x), y + t * (gy - y))
        if c < mc:
            mc = c
    if not mc < math.inf:
        mc = 0.0
    return max(0.0, d - tol) * (1.0 + mc)


@njit(cache=True)
def _grow(a, n):
    out = np.empty(n, a.dtype)
    out[: a.size] = a
    return out


@njit(cache=True)
def _search(cost, x0, y0, res, thresh, sx, sy, sth, gx, gy, gth, kappas, arc_len, nsub, nb,
            goal_tol, head_tol, steer_w, kmax, use_h, max_exp):
    h, w = cost.shape
    nbins = h * w * nb
    closed = np.zeros(nbins, np.uint8)
    best = np.full(nbins, np.inf)
    cap = 1024
    nx = np.empty(cap)
    ny = np.empty(cap)
    nth = np.empty(cap)
    ng = np.empty(cap)
    npar = np.empty(cap, np.int64)
    nprim = np.empty(cap, np.int64)
    nx[0], ny[0], nth[0], ng[0], npar[0], nprim[0] = sx, sy, sth, 0.0, -1, -1
    count = 1
    h0 = _heuristic(cost, x0, y0, res, sx, sy, gx, gy, goal_tol) if use_h else 0.0
    heap = [(h0, 0.0, 0)]
    best[_bin(sx, sy, sth, x0, y0, res, w, nb)] = 0.0
    expansions = 0
    while len(heap) > 0:
        f, g, i = heapq.heappop(heap)
        b = _bin(nx[i], ny[i], nth[i], x0, y0, res, w, nb)
        if closed[b]:
            continue
        closed[b] = 1
        expansions += 1
        dth = (nth[i] - gth + math.pi) % (2.0 * math.pi) - math.pi
        if math.hypot(nx[i] - gx, ny[i] - gy) <= goal_tol and abs(dth) <= head_tol:
            return i, expansions, nx[:count], ny[:count], nth[:count], ng[:count], npar[:count], nprim[:count]
        if expansions >= max_exp:
            break
        for p in range(kappas.size):
            k = kappas[p]
            px, py = nx[i], ny[i]
            csum = 0.0
            ok = True
            for s in range(1, nsub + 1):
                qx, qy, _ = _arc(nx[i], ny[i], nth[i], k, arc_len * s / nsub)
                if not _segment_clear(cost, x0, y0, res, thresh, px, py, qx, qy):
                    ok = False
                    break
                csum += _cell_cost(cost, x0, y0, res, qx, qy)
                px, py = qx, qy
            if not ok:
                continue
            ex, ey, eth = _arc(nx[i], ny[i], nth[i], k, arc_len)
            eth = (eth + math.pi) % (2.0 * math.pi) - math.pi
            nbk = _bin(ex, ey, eth, x0, y0, res, w, nb)
            if closed[nbk]:
                continue
            g2 = g + arc_len * (1.0 + csum / nsub) + steer_w * arc_len * abs(k) / kmax
            if g2 >= best[nbk]:
                continue
            best[nbk] = g2
            if count == nx.size:
                cap = 2 * nx.size
                nx, ny, nth, ng = _grow(nx, cap), _grow(ny, cap), _grow(nth, cap), _grow(ng, cap)
                npar, nprim = _grow(npar, cap), _grow(nprim, cap)
            nx[count], ny[count], nth[count], ng[count], npar[count], nprim[count] = ex, ey, eth, g2, i, p
            hv = _heuristic(cost, x0, y0, res, ex, ey, gx, gy, goal_tol) if use_h else 0.0
            heapq.heappush(heap, (g2 + hv, g2, count))
            count += 1
    return -1, expansions, nx[:count], ny[:count], nth[:count], ng[:count], npar[:count], nprim[:count]


# --- python front end ------------------------------------------------------------

def _check_inside(cm: CostMap, pose: Pose2, what: str):
    if not cm.contains(pose.x, pose.y):
        raise (InvalidStartError if what == "start" else InvalidArgumentError)(
            f"{what} ({pose.x:.3f}, {pose.y:.3f}) lies outside the cost map")


def plan(cost_map: CostMap, start: Pose2, goal: Pose2, vehicle: VehicleParams | None = None,
         config: PlannerConfig | None = None, heuristic: bool = True) -> PlannedPath:
    """Lowest-cost forward path from ``start`` to within tolerance of ``goal``.

    Returns ``feasible=False`` when the goal region is unreachable.  With
    ``heuristic=False`` the search is exhaustive uniform-cost over the same graph.
    """
    vehicle = vehicle or VehicleParams()
    cfg = config or PlannerConfig()
    _check_inside(cost_map, start, "start")
    _check_inside(cost_map, goal, "goal")
    if cost_map.is_occupied(start.x, start.y):
        raise InvalidStartError(f"start ({start.x:.3f}, {start.y:.3f}) is in an occupied cell")
    res = cost_map.resolution
    arc_len = cfg.arc_cells * res
    nsub = max(1, int(math.ceil(arc_len / (res / 2.0))))
    kappas = primitive_curvatures(vehicle)
    x0, y0 = cost_map.origin
    goal_i, expansions, nx, ny, nth, ng, npar, nprim = _search(
        cost_map.cost, x0, y0, res, cost_map.occupied_threshold, start.x, start.y, start.theta,
        goal.x, goal.y, goal.theta, kappas, arc_len, nsub, cfg.heading_bins, cfg.goal_tolerance,
        cfg.heading_tolerance, cfg.steer_penalty, vehicle.max_curvature, heuristic, cfg.max_expansions)
    if goal_i < 0:
        return PlannedPath.infeasible(int(expansions))
    chain = []
    i = goal_i
    while i >= 0:
        chain.append(i)
        i = npar[i]
    chain.reverse()
    poses = [(nx[chain[0]], ny[chain[0]], nth[chain[0]])]
    for i in chain[1:]:
        p, k = npar[i], kappas[nprim[i]]
        for s in range(1, nsub + 1):
            qx, qy, qth = _arc(nx[p], ny[p], nth[p], k, arc_len * s / nsub)
            poses.append((qx, qy, wrap_angle(qth)))
    poses = np.array(poses)
    cap = vehicle.speed_cap
    speeds = np.array([min(cap, cost_map.speed_limit_at(x, y)) for x, y, _ in poses])
    return PlannedPath(poses, speeds, True, float(ng[goal_i]), int(expansions))


def path_cost(path: PlannedPath, cost_map: CostMap, vehicle: VehicleParams | None = None,
              config: PlannerConfig | None = None) -> float:
    """Re-evaluate the edge costs of a planned path from its densified poses."""
    vehicle = vehicle or VehicleParams()
    cfg = config or PlannerConfig()
    res = cost_map.resolution
    arc_len = cfg.arc_cells * res
    nsub = max(1, int(math.ceil(arc_len / (res / 2.0))))
    total = 0.0
    kmax = vehicle.max_curvature
    for e in range(0, len(path.poses) - 1, nsub):
        seg = path.poses[e:e + nsub + 1]
        c = np.mean([cost_map.cost_at(x, y) for x, y, _ in seg[1:]])
        k = abs(wrap_angle(seg[-1, 2] - seg[0, 2])) / arc_len
        total += arc_len * (1.0 + c) + cfg.steer_penalty * arc_len * k / kmax
    return total
