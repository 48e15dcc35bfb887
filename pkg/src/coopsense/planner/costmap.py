"""Grid cost map from road structure and tracked or predicted road users."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from matplotlib.path import Path

from ..cpm import ObjectClass
from ..geometry import GaussianPose2, InvalidArgumentError, Pose2, confidence_ellipse
from ..tracker import Track, TrackerParams, cv_propagate
from .lanes import LaneMap

__all__ = [
    "CostMap",
    "CostMapConfig",
    "VehicleParams",
    "build_cost_map",
    "predict_road_user",
    "track_pose",
    "ellipse_intersects_rect",
]

VULNERABLE = (ObjectClass.PEDESTRIAN, ObjectClass.CYCLIST)


@dataclass(frozen=True)
class VehicleParams:
    wheelbase: float = 2.7
    max_steer: float = 0.5  # rad
    length: float = 4.5
    width: float = 1.8
    speed_cap: float = 5.0  # m/s, 18 km/h

    def __post_init__(self):
        if not (self.wheelbase > 0 and 0 < self.max_steer < math.pi / 2 and self.length > 0
                and self.width > 0 and self.speed_cap > 0):
            raise InvalidArgumentError("vehicle dimensions, steering limit and speed cap must be positive")

    @property
    def max_curvature(self) -> float:
        return math.tan(self.max_steer) / self.wheelbase

    @property
    def inflation_radius(self) -> float:
        """Radius of the three equal disks that cover the footprint."""
        return math.hypot(self.length / 6.0, self.width / 2.0)


@dataclass(frozen=True)
class CostMapConfig:
    occupied_threshold: float = 0.9
    other_lane_cost: float = 0.3
    centre_cost: float = 0.1  # ego-lane cost at the lane edge, quadratic in the lateral offset
    falloff_cells: float = 2.0
    falloff_peak: float = 0.8
    mass: float = 0.95


@dataclass(frozen=True, eq=False)
class CostMap:
    """Axis-aligned grid; ``cost[iy, ix]`` covers the cell whose lower-left corner is
    ``origin + (ix, iy) * resolution``."""

    origin: tuple
    resolution: float
    cost: np.ndarray
    occupied_threshold: float = 0.9
    speed_limit: np.ndarray | None = None

    def __post_init__(self):
        if not self.resolution > 0:
            raise InvalidArgumentError("resolution must be > 0")
        cost = np.ascontiguousarray(self.cost, dtype=float)
        if cost.ndim != 2 or not np.all(np.isfinite(cost)):
            raise InvalidArgumentError("cost must be a finite 2-D array")
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def width(self) -> int:
        return self.cost.shape[1]

    @property
    def height(self) -> int:
        return self.cost.shape[0]

    @property
    def extent(self):
        x0, y0 = self.origin
        return x0, x0 + self.width * self.resolution, y0, y0 + self.height * self.resolution

    def cell_of(self, x: float, y: float):
        return (int(math.floor((x - self.origin[0]) / self.resolution)),
                int(math.floor((y - self.origin[1]) / self.resolution)))

    def contains(self, x: float, y: float) -> bool:
        ix, iy = self.cell_of(x, y)
        return 0 <= ix < self.width and 0 <= iy < self.height

    def cost_at(self, x: float, y: float) -> float:
        ix, iy = self.cell_of(x, y)
        if not (0 <= ix < self.width and 0 <= iy < self.height):
            return math.inf
        return float(self.cost[iy, ix])

    def is_occupied(self, x: float, y: float) -> bool:
        return self.cost_at(x, y) >= self.occupied_threshold

    def speed_limit_at(self, x: float, y: float) -> float:
        if self.speed_limit is None or not self.contains(x, y):
            return math.inf
        ix, iy = self.cell_of(x, y)
        return float(self.speed_limit[iy, ix])

    def cell_centers(self):
        x0, y0 = self.origin
        xs = x0 + (np.arange(self.width) + 0.5) * self.resolution
        ys = y0 + (np.arange(self.height) + 0.5) * self.resolution
        return np.meshgrid(xs, ys)


def track_pose(track: Track) -> GaussianPose2:
    s = track.state
    return GaussianPose2(Pose2(s.x, s.y, s.heading), track.cov[:3, :3])


def predict_road_user(track: Track, horizon: float, step: float, params: TrackerParams | None = None):
    """Constant-velocity forecasts at ``step, 2*step, ..., horizon`` seconds."""
    if horizon < 0 or not step > 0:
        raise InvalidArgumentError("need horizon >= 0 and step > 0")
    params = params or TrackerParams()
    mean, cov = track.state.as_array(), np.asarray(track.cov, dtype=float)
    out = []
    for _ in range(int(math.floor(horizon / step + 1e-9))):
        mean, cov = cv_propagate(mean, cov, step, params)
        out.append(GaussianPose2(Pose2(*mean[:3]), cov[:3, :3]))
    return out


def ellipse_intersects_rect(center, position_cov, mass, corners) -> bool:
    """Exact test of a confidence ellipse against a convex polygon (here a rectangle)."""
    el = confidence_ellipse(position_cov, center, mass)
    c = np.asarray(center, dtype=float)
    rot = np.array([[math.cos(el.orientation), -math.sin(el.orientation)],
                    [math.sin(el.orientation), math.cos(el.orientation)]])
    a = max(el.semi_major, 1e-12)
    b = max(el.semi_minor, 1e-12)
    m = rot @ np.diag([1 / a ** 2, 1 / b ** 2]) @ rot.T
    pts = np.asarray(corners, dtype=float)
    # centre inside the polygon
    edges = np.roll(pts, -1, axis=0) - pts
    cross = edges[:, 0] * (c[1] - pts[:, 1]) - edges[:, 1] * (c[0] - pts[:, 0])
    if np.all(cross >= 0) or np.all(cross <= 0):
        return True
    for p0, d in zip(pts - c, edges):
        dmd = d @ m @ d
        t = float(np.clip(-(p0 @ m @ d) / dmd, 0.0, 1.0)) if dmd > 0 else 0.0
        q = p0 + t * d
        if q @ m @ q <= 1.0:
            return True
    return False


def _stamp_ellipse(cost, xs, ys, center, position_cov, inflate, cfg: CostMapConfig, res):
    el = confidence_ellipse(position_cov, center, cfg.mass)
    big_a = el.semi_major + inflate
    big_b = el.semi_minor + inflate
    reach = big_a + cfg.falloff_cells * res
    cx, cy = center
    # restrict to the bounding box
    cols = np.nonzero(np.abs(xs[0] - cx) <= reach + res)[0]
    rows = np.nonzero(np.abs(ys[:, 0] - cy) <= reach + res)[0]
    if cols.size == 0 or rows.size == 0:
        return
    sl = np.s_[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]
    dx, dy = xs[sl] - cx, ys[sl] - cy
    c, s = math.cos(el.orientation), math.sin(el.orientation)
    u = c * dx + s * dy
    v = -s * dx + c * dy
    rho = np.sqrt((u / big_a) ** 2 + (v / big_b) ** 2)
    # (rho - 1) * minor axis never exceeds the true distance to the boundary
    d = (rho - 1.0) * big_b
    val = np.where(rho <= 1.0, 1.0,
                   np.where(d <= cfg.falloff_cells * res, cfg.falloff_peak * np.exp(-0.5 * (d / res) ** 2), 0.0))
    np.maximum(cost[sl], val, out=cost[sl])


def _distance_to_polyline(pts: np.ndarray, q: np.ndarray) -> np.ndarray:
    best = np.full(len(q), np.inf)
    for a, b in zip(pts[:-1], pts[1:]):
        d = b - a
        t = np.clip(((q - a) @ d) / (d @ d), 0.0, 1.0)
        best = np.minimum(best, np.hypot(*(q - a - t[:, None] * d).T))
    return best


def _stamp_polyline(cost, origin, res, pts, value):
    h, w = cost.shape
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(2, int(math.ceil(np.hypot(*(b - a)) / (res / 4.0))) + 1)
        p = a + np.linspace(0.0, 1.0, n)[:, None] * (b - a)
        ix = np.floor((p[:, 0] - origin[0]) / res).astype(int)
        iy = np.floor((p[:, 1] - origin[1]) / res).astype(int)
        ok = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
        cost[iy[ok], ix[ok]] = value


def build_cost_map(lane_map: LaneMap, tracks, predictions, ego: Pose2, extent: float, resolution: float,
                   vehicle: VehicleParams | None = None, ego_lane: str | None = None,
                   config: CostMapConfig | None = None) -> CostMap:
    """Moving window of half-size ``extent`` centred on ``ego``.

    ``tracks`` are tracker outputs; ``predictions`` is a parallel sequence of
    forecast lists (see :func:`predict_road_user`).
    """
    if not resolution > 0:
        raise InvalidArgumentError("resolution must be > 0")
    if not extent > 0:
        raise InvalidArgumentError("extent must be > 0")
    if len(predictions) != len(tracks):
        raise InvalidArgumentError("predictions must parallel tracks")
    cfg = config or CostMapConfig()
    vehicle = vehicle or VehicleParams()
    n = int(math.ceil(2 * extent / resolution))
    origin = (math.floor((ego.x - extent) / resolution) * resolution,
              math.floor((ego.y - extent) / resolution) * resolution)
    xs = origin[0] + (np.arange(n) + 0.5) * resolution
    ys = origin[1] + (np.arange(n) + 0.5) * resolution
    gx, gy = np.meshgrid(xs, ys)
    centers = np.column_stack([gx.ravel(), gy.ravel()])

    cost = np.where(lane_map.drivable_mask(centers), 0.0, 1.0).reshape(n, n)
    speed = np.full((n, n), math.inf)
    for lane in lane_map.lanes:
        inside = Path(lane.polygon()).contains_points(centers).reshape(n, n)
        speed[inside] = np.minimum(speed[inside], lane.speed_limit)
        if ego_lane is not None and lane.name != ego_lane:
            cost[inside] = np.maximum(cost[inside], cfg.other_lane_cost)
        elif lane.name == ego_lane and cfg.centre_cost > 0:
            lat = _distance_to_polyline(lane.centerline, centers[inside.ravel()])
            pull = cfg.centre_cost * np.minimum(1.0, (lat / (lane.width / 2.0)) ** 2)
            cost[inside] = np.maximum(cost[inside], pull)
    for div in lane_map.dividers:
        if not div.crossable:
            _stamp_polyline(cost, origin, resolution, div.points, 1.0)

    inflate = vehicle.inflation_radius
    blocked_zones = set()
    for track, preds in zip(tracks, predictions):
        poses = [track_pose(track), *preds]
        for g in poses:
            center = (g.mean.x, g.mean.y)
            _stamp_ellipse(cost, gx, gy, center, g.position_cov, inflate, cfg, resolution)
            if track.object_class in VULNERABLE:
                for i, zone in enumerate(lane_map.crossing_zones):
                    if i not in blocked_zones and ellipse_intersects_rect(center, g.position_cov, cfg.mass,
                                                                          zone.corners()):
                        blocked_zones.add(i)
    for i, zone in enumerate(lane_map.crossing_zones):
        # every cell that overlaps the zone
        half = resolution / 2.0
        inside = ((gx + half >= zone.xmin) & (gx - half <= zone.xmax)
                  & (gy + half >= zone.ymin) & (gy - half <= zone.ymax))
        if i in blocked_zones:
            cost[inside] = 1.0
        if zone.speed_limit is not None:
            speed[inside] = np.minimum(speed[inside], zone.speed_limit)
    return CostMap(origin, resolution, cost, cfg.occupied_threshold, speed)
