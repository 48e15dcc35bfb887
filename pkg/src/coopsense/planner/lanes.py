"""Minimal structured road description used to build cost maps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from matplotlib.path import Path

from ..geometry import InvalidArgumentError, Pose2

__all__ = ["Lane", "Divider", "CrossingZone", "StopLine", "LaneMap", "polyline"]


def polyline(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise InvalidArgumentError("a polyline needs at least two (x, y) points")
    if not np.all(np.isfinite(pts)):
        raise InvalidArgumentError("polyline coordinates must be finite")
    pts.setflags(write=False)
    return pts


def _project(pts: np.ndarray, x: float, y: float):
    """Arc length and lateral offset (left positive) of a point on a polyline."""
    best = (math.inf, 0.0, 0.0)
    s0 = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        d = b - a
        seg = float(np.hypot(*d))
        t = float(np.clip(((x - a[0]) * d[0] + (y - a[1]) * d[1]) / (seg * seg), 0.0, 1.0))
        px, py = a + t * d
        dist = math.hypot(x - px, y - py)
        if dist < best[0]:
            side = math.copysign(1.0, d[0] * (y - a[1]) - d[1] * (x - a[0]))
            best = (dist, s0 + t * seg, side * dist)
        s0 += seg
    return best[1], best[2]


def _point_at(pts: np.ndarray, s: float) -> Pose2:
    seglens = np.hypot(*np.diff(pts, axis=0).T)
    s = float(np.clip(s, 0.0, seglens.sum()))
    i = min(int(np.searchsorted(np.cumsum(seglens), s)), len(seglens) - 1)
    a, b = pts[i], pts[i + 1]
    t = min((s - seglens[:i].sum()) / seglens[i], 1.0)
    p = a + t * (b - a)
    return Pose2(float(p[0]), float(p[1]), math.atan2(b[1] - a[1], b[0] - a[0]))


@dataclass(frozen=True, eq=False)
class Lane:
    """A lane given by its centerline, constant width and speed limit (m/s)."""

    name: str
    centerline: np.ndarray
    width: float
    speed_limit: float

    def __post_init__(self):
        object.__setattr__(self, "centerline", polyline(self.centerline))
        if not self.width > 0 or not self.speed_limit > 0:
            raise InvalidArgumentError(f"lane {self.name!r}: width and speed_limit must be positive")

    @property
    def length(self) -> float:
        return float(np.hypot(*np.diff(self.centerline, axis=0).T).sum())

    def polygon(self) -> np.ndarray:
        """Outline obtained by offsetting the centerline by half the width (mitred joins)."""
        pts = self.centerline
        d = np.diff(pts, axis=0)
        d /= np.hypot(*d.T)[:, None]
        normals = np.column_stack([-d[:, 1], d[:, 0]])
        vn = np.vstack([normals[:1], normals[:-1] + normals[1:], normals[-1:]])
        vn /= np.hypot(*vn.T)[:, None]
        # mitre scale keeps the offset distance constant at joins
        cos_half = np.einsum("ij,ij->i", vn, np.vstack([normals, normals[-1:]]))
        vn /= cos_half[:, None]
        h = self.width / 2.0
        return np.vstack([pts + h * vn, (pts - h * vn)[::-1]])

    def project(self, x: float, y: float):
        """Return ``(s, lateral)`` of a point relative to the centerline."""
        return _project(self.centerline, x, y)

    def pose_at(self, s: float) -> Pose2:
        return _point_at(self.centerline, s)

    def contains(self, x: float, y: float) -> bool:
        return bool(Path(self.polygon()).contains_point((x, y)))


@dataclass(frozen=True, eq=False)
class Divider:
    points: np.ndarray
    crossable: bool = True

    def __post_init__(self):
        object.__setattr__(self, "points", polyline(self.points))


@dataclass(frozen=True)
class CrossingZone:
    """Axis-aligned pedestrian crossing area."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float
    speed_limit: float | None = None

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise InvalidArgumentError("crossing zone must have positive extent")

    def corners(self) -> np.ndarray:
        return np.array([[self.xmin, self.ymin], [self.xmax, self.ymin], [self.xmax, self.ymax], [self.xmin, self.ymax]])


@dataclass(frozen=True, eq=False)
class StopLine:
    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", polyline(self.points))

    def distance_ahead(self, pose: Pose2) -> float:
        """Signed distance along ``pose`` heading to the nearest point of the line."""
        c, s = math.cos(pose.theta), math.sin(pose.theta)
        proj = (self.points[:, 0] - pose.x) * c + (self.points[:, 1] - pose.y) * s
        return float(proj.min())


@dataclass(frozen=True, eq=False)
class LaneMap:
    drivable: tuple = ()
    lanes: tuple = ()
    dividers: tuple = ()
    crossing_zones: tuple = ()
    stop_lines: tuple = ()
    _paths: tuple = field(default=(), repr=False)

    def __post_init__(self):
        polys = tuple(np.asarray(p, dtype=float) for p in self.drivable)
        for p in polys:
            if p.ndim != 2 or p.shape[1] != 2 or len(p) < 3:
                raise InvalidArgumentError("drivable polygons need at least three (x, y) vertices")
        object.__setattr__(self, "drivable", polys)
        for name in ("lanes", "dividers", "crossing_zones", "stop_lines"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        names = [lane.name for lane in self.lanes]
        if len(set(names)) != len(names):
            raise InvalidArgumentError("lane names must be unique")
        paths = tuple(Path(p) for p in polys)
        object.__setattr__(self, "_paths", paths)
        for i, z in enumerate(self.crossing_zones):
            rect = Path(np.vstack([z.corners(), z.corners()[:1]]), closed=True)
            if not any(p.intersects_path(rect, filled=True) for p in paths):
                raise InvalidArgumentError(f"crossing zone {i} does not touch any drivable polygon")

    def lane(self, name: str) -> Lane:
        for lane in self.lanes:
            if lane.name == name:
                return lane
        raise InvalidArgumentError(f"unknown lane {name!r}")

    def is_drivable(self, x: float, y: float) -> bool:
        return any(p.contains_point((x, y)) for p in self._paths)

    def drivable_mask(self, points: np.ndarray) -> np.ndarray:
        mask = np.zeros(len(points), dtype=bool)
        for p in self._paths:
            mask |= p.contains_points(points)
        return mask

    def lane_goal(self, lane_name: str, pose: Pose2, lookahead: float, end_margin: float = 1.0) -> Pose2:
        """Point ``lookahead`` metres further along a lane than ``pose``."""
        lane = self.lane(lane_name)
        s, _ = lane.project(pose.x, pose.y)
        return lane.pose_at(min(s + lookahead, lane.length - end_margin))
