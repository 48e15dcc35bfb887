"""GM-PHD multi road-user tracker.

The target intensity is a weighted Gaussian mixture over ``(x, y, heading,
speed)`` with a constant-velocity motion model.  New tracks are initiated from
measurements that no existing component explains, and components carry track
identities that survive update, merging and extraction.  One tracker instance
handles a single road-user class; :class:`TrackerBank` routes measurements.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cpm import ObjectClass
from .geometry import GaussianPose2, InvalidArgumentError, wrap_angle

__all__ = [
    "TargetState",
    "GaussianComponent",
    "Measurement",
    "TrackerParams",
    "Track",
    "cv_propagate",
    "predict",
    "update",
    "prune_and_merge",
    "extract_tracks",
    "self_filter",
    "GmPhdTracker",
    "TrackerBank",
]

log = logging.getLogger(__name__)

X, Y, TH, V = range(4)


@dataclass(frozen=True)
class TargetState:
    x: float
    y: float
    heading: float
    speed: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.heading, self.speed])


@dataclass
class GaussianComponent:
    weight: float
    mean: np.ndarray
    cov: np.ndarray
    track_id: int | None = None

    def copy(self, **changes) -> "GaussianComponent":
        c = replace(self, mean=self.mean.copy(), cov=self.cov.copy())
        for k, v in changes.items():
            setattr(c, k, v)
        return c


@dataclass(frozen=True)
class Measurement:
    """A frame-transformed perceived object.

    ``heading_var``/``speed_var`` set to ``inf`` (or ``speed=None``) mark the
    quantity as unobserved; the update then ignores it.
    """

    position: tuple
    position_cov: np.ndarray
    heading: float = 0.0
    heading_var: float = math.inf
    speed: float | None = None
    speed_var: float = math.inf
    object_class: ObjectClass = ObjectClass.UNKNOWN
    timestamp: float = 0.0

    @classmethod
    def from_pose(cls, pose: GaussianPose2, object_class=ObjectClass.UNKNOWN, timestamp=0.0,
                  speed=None, speed_std=math.inf) -> "Measurement":
        return cls(
            (pose.mean.x, pose.mean.y), np.array(pose.cov[:2, :2]), pose.mean.theta, float(pose.cov[2, 2]),
            speed, speed_std ** 2 if speed is not None else math.inf, ObjectClass(object_class), timestamp,
        )

    @property
    def has_heading(self) -> bool:
        return math.isfinite(self.heading_var)

    @property
    def has_speed(self) -> bool:
        return self.speed is not None and math.isfinite(self.speed_var)


@dataclass(frozen=True)
class TrackerParams:
    p_survival: float = 0.99
    p_detect: float = 0.9
    clutter_density: float = 1e-4  # per m^2
    birth_weight: float = 0.1
    prune_threshold: float = 1e-5
    merge_distance: float = 2.0  # Mahalanobis, not squared
    confirm_weight: float = 0.5
    max_components: int = 200
    speed_noise: float = 0.5  # m/s per sqrt(s)
    heading_noise: float = 0.2  # rad per sqrt(s)
    birth_speed_std: float = 2.0
    birth_association: float = 0.5
    speed_span: float = 20.0  # m/s, clutter spread over the speed axis

    def __post_init__(self):
        for name in ("p_survival", "p_detect"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise InvalidArgumentError(f"{name} must lie in (0, 1], got {v}")
        for name in ("clutter_density", "birth_weight", "prune_threshold", "merge_distance",
                     "confirm_weight", "max_components", "speed_span"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive")


@dataclass(frozen=True, eq=False)
class Track:
    track_id: int
    state: TargetState
    cov: np.ndarray
    weight: float
    object_class: ObjectClass = ObjectClass.UNKNOWN


# --- filter steps -------------------------------------------------------------

def _process_noise(mean: np.ndarray, dt: float, params: TrackerParams) -> np.ndarray:
    # white noise on speed rate and turn rate, integrated over dt
    th, v = mean[TH], mean[V]
    u = np.array([math.cos(th), math.sin(th)])
    n = np.array([-math.sin(th), math.cos(th)])
    qv = params.speed_noise ** 2
    qt = params.heading_noise ** 2
    q = np.zeros((4, 4))
    q[:2, :2] = (qv * np.outer(u, u) + qt * v * v * np.outer(n, n)) * dt ** 3 / 3.0
    q[:2, V] = q[V, :2] = qv * u * dt ** 2 / 2.0
    q[:2, TH] = q[TH, :2] = qt * v * n * dt ** 2 / 2.0
    q[TH, TH] = qt * dt
    q[V, V] = qv * dt
    return q


def cv_propagate(mean: np.ndarray, cov: np.ndarray, dt: float, params: TrackerParams):
    """Advance one ``(x, y, heading, speed)`` Gaussian by ``dt`` under constant velocity."""
    th, v = mean[TH], mean[V]
    c, s = math.cos(th), math.sin(th)
    m = mean.copy()
    m[X] += v * c * dt
    m[Y] += v * s * dt
    f = np.eye(4)
    f[X, TH] = -v * s * dt
    f[X, V] = c * dt
    f[Y, TH] = v * c * dt
    f[Y, V] = s * dt
    p = f @ cov @ f.T + _process_noise(mean, dt, params)
    return m, 0.5 * (p + p.T)


def predict(components, dt: float, params: TrackerParams):
    """Constant-velocity prediction of every component by ``dt`` seconds."""
    if dt < 0:
        raise InvalidArgumentError(f"dt must be >= 0, got {dt}")
    if dt == 0:
        return [c.copy() for c in components]
    out = []
    for c in components:
        m, p = cv_propagate(c.mean, c.cov, dt, params)
        out.append(GaussianComponent(c.weight * params.p_survival, m, p, c.track_id))
    return out


def _fold_speed(mean: np.ndarray, cov: np.ndarray):
    if mean[V] < 0:
        mean[V] = -mean[V]
        mean[TH] += math.pi
        j = np.diag([1.0, 1.0, 1.0, -1.0])
        cov = j @ cov @ j
    mean[TH] = wrap_angle(mean[TH])
    return mean, cov


def _measurement_model(z: Measurement):
    rows = [X, Y]
    vals = [float(z.position[0]), float(z.position[1])]
    pc = np.asarray(z.position_cov, dtype=float)
    if pc.shape != (2, 2):
        raise InvalidArgumentError(f"position_cov must be 2x2, got {pc.shape}")
    if len(z.position) != 2:
        raise InvalidArgumentError("measurement position must have two coordinates")
    variances = []
    if z.has_heading:
        rows.append(TH)
        vals.append(z.heading)
        variances.append(z.heading_var)
    if z.has_speed:
        rows.append(V)
        vals.append(z.speed)
        variances.append(z.speed_var)
    r = np.zeros((len(rows), len(rows)))
    r[:2, :2] = pc
    for k, var in enumerate(variances, start=2):
        r[k, k] = var
    h = np.zeros((len(rows), 4))
    h[np.arange(len(rows)), rows] = 1.0
    return h, np.array(vals), r, rows


def _clutter_intensity(z: Measurement, params: TrackerParams) -> float:
    k = params.clutter_density
    if z.has_heading:
        k /= 2.0 * math.pi
    if z.has_speed:
        k /= params.speed_span
    return k


def _kalman(c: GaussianComponent, h, zv, r, rows):
    nu = zv - h @ c.mean
    if TH in rows:
        i = rows.index(TH)
        nu[i] = wrap_angle(nu[i])
    pht = c.cov @ h.T
    s = h @ pht + r
    s = 0.5 * (s + s.T)
    try:
        chol = np.linalg.cholesky(s)
    except np.linalg.LinAlgError:
        return None
    sol = np.linalg.solve(chol, nu)
    logq = -0.5 * sol @ sol - np.log(np.diag(chol)).sum() - 0.5 * len(nu) * math.log(2 * math.pi)
    k = np.linalg.solve(s, pht.T).T
    m = c.mean + k @ nu
    ikh = np.eye(4) - k @ h
    p = ikh @ c.cov @ ikh.T + k @ r @ k.T
    m, p = _fold_speed(m, 0.5 * (p + p.T))
    return m, p, logq


def _birth(z: Measurement, params: TrackerParams) -> GaussianComponent:
    mean = np.array([z.position[0], z.position[1], z.heading if z.has_heading else 0.0,
                     z.speed if z.has_speed else 0.0])
    cov = np.zeros((4, 4))
    cov[:2, :2] = z.position_cov
    cov[TH, TH] = z.heading_var if z.has_heading else math.pi ** 2 / 3.0
    cov[V, V] = z.speed_var if z.has_speed else params.birth_speed_std ** 2
    # a zero-noise measurement still needs some spread to be updatable
    cov += np.diag([1e-9, 1e-9, 1e-9, 1e-9])
    mean, cov = _fold_speed(mean, cov)
    return GaussianComponent(params.birth_weight, mean, cov, None)


def update(components, measurements, params: TrackerParams):
    """GM-PHD measurement update with measurement-driven birth."""
    pd = params.p_detect
    out = [c.copy(weight=c.weight * (1.0 - pd)) for c in components]
    for z in measurements:
        h, zv, r, rows = _measurement_model(z)
        updated = []
        for c in components:
            res = _kalman(c, h, zv, r, rows)
            if res is not None:
                updated.append((c, *res))
        if updated:
            logw = np.array([math.log(pd * c.weight) + lq if c.weight > 0 else -math.inf
                             for c, _, _, lq in updated])
            log_denom = np.logaddexp.reduce(np.append(logw, math.log(_clutter_intensity(z, params))))
            weights = np.exp(logw - log_denom)
        else:
            weights = np.zeros(0)
        for (c, m, p, _), w in zip(updated, weights):
            out.append(GaussianComponent(float(w), m, p, c.track_id))
        if weights.sum() < params.birth_association:
            out.append(_birth(z, params))
    return out


def _mahalanobis2(a: GaussianComponent, b: GaussianComponent) -> float:
    d = a.mean - b.mean
    d[TH] = wrap_angle(d[TH])
    try:
        return float(d @ np.linalg.solve(a.cov, d))
    except np.linalg.LinAlgError:
        return math.inf


def prune_and_merge(components, params: TrackerParams):
    """Drop light components, merge near-duplicates, cap the mixture size."""
    alive = [c for c in components if c.weight >= params.prune_threshold]
    # stable order: heavier first, original order among ties
    alive.sort(key=lambda c: -c.weight)
    gate = params.merge_distance ** 2
    merged = []
    while alive:
        lead = alive[0]
        group = [c for c in alive if _mahalanobis2(c, lead) <= gate]
        group_ids = {id(c) for c in group}
        group_ids.add(id(lead))
        if lead not in group:
            group.insert(0, lead)
        alive = [c for c in alive if id(c) not in group_ids]
        w = np.array([c.weight for c in group])
        wsum = float(w.sum())
        means = np.array([c.mean for c in group])
        rel = means - lead.mean
        rel[:, TH] = wrap_angle(rel[:, TH])
        mean = lead.mean + w @ rel / wsum
        dev = rel - (mean - lead.mean)
        cov = sum(wi * (c.cov + np.outer(di, di)) for wi, c, di in zip(w, group, dev)) / wsum
        mean[TH] = wrap_angle(mean[TH])
        tid = lead.track_id
        if tid is None:
            tid = next((c.track_id for c in group if c.track_id is not None), None)
        merged.append(GaussianComponent(wsum, mean, 0.5 * (cov + cov.T), tid))
    merged.sort(key=lambda c: -c.weight)
    return merged[: params.max_components]


def extract_tracks(components, params: TrackerParams, id_source=None, object_class=ObjectClass.UNKNOWN):
    """Confirmed tracks.  Components without an identity get the next fresh id.

    ``id_source`` is an iterator of unused ids owned by the tracker instance;
    assigned ids are written back onto the components so they persist.
    """
    if id_source is None:
        id_source = itertools.count(1)
    confirmed = sorted((c for c in components if c.weight >= params.confirm_weight), key=lambda c: -c.weight)
    seen = set()
    tracks = []
    for c in confirmed:
        if c.track_id is None or c.track_id in seen:
            c.track_id = next(id_source)
        seen.add(c.track_id)
        mean, cov = _fold_speed(c.mean.copy(), c.cov.copy())
        tracks.append(Track(c.track_id, TargetState(*map(float, mean)), cov, c.weight, object_class))
    tracks.sort(key=lambda t: t.track_id)
    return tracks


def self_filter(measurements, ego_pose: GaussianPose2, exclusion_radius: float):
    """Remove measurements within ``exclusion_radius`` of the ego position (closed ball)."""
    if not exclusion_radius > 0:
        raise InvalidArgumentError("exclusion_radius must be > 0")
    ex, ey = ego_pose.mean.x, ego_pose.mean.y
    return [z for z in measurements
            if math.hypot(z.position[0] - ex, z.position[1] - ey) > exclusion_radius]


# --- stateful wrappers ------------------------------------------------------------

class GmPhdTracker:
    """Single-class tracker: owns the mixture, the clock and the id counter."""

    def __init__(self, object_class: ObjectClass = ObjectClass.PEDESTRIAN, params: TrackerParams | None = None):
        self.object_class = ObjectClass(object_class)
        self.params = params or TrackerParams()
        self.components: list[GaussianComponent] = []
        self.time: float | None = None
        self.dropped_out_of_order = 0
        self._ids = itertools.count(1)

    def step(self, measurements, timestamp: float) -> bool:
        """Advance to ``timestamp`` and fuse a scan.  Stale scans are dropped."""
        for z in measurements:
            if z.object_class != self.object_class:
                raise InvalidArgumentError(
                    f"{z.object_class.name} measurement fed to the {self.object_class.name} tracker")
        if self.time is not None and timestamp < self.time:
            self.dropped_out_of_order += 1
            log.warning("dropping scan at t=%.3f older than filter time %.3f", timestamp, self.time)
            return False
        dt = 0.0 if self.time is None else timestamp - self.time
        comps = predict(self.components, dt, self.params)
        comps = update(comps, measurements, self.params)
        self.components = prune_and_merge(comps, self.params)
        self.time = timestamp
        return True

    def tracks(self):
        return extract_tracks(self.components, self.params, self._ids, self.object_class)

    def predicted_tracks(self, timestamp: float):
        """Tracks extrapolated to ``timestamp`` without touching the filter state."""
        dt = 0.0 if self.time is None else max(0.0, timestamp - self.time)
        out = []
        for t in self.tracks():
            m, p = cv_propagate(t.state.as_array(), t.cov, dt, self.params) if dt > 0 else (t.state.as_array(), t.cov)
            m, p = _fold_speed(m, p)
            out.append(Track(t.track_id, TargetState(*map(float, m)), p, t.weight, t.object_class))
        return out


@dataclass
class TrackerBank:
    """One :class:`GmPhdTracker` per road-user class."""

    params: TrackerParams = field(default_factory=TrackerParams)
    classes: tuple = (ObjectClass.PEDESTRIAN, ObjectClass.CAR, ObjectClass.CYCLIST)
    trackers: dict = field(default_factory=dict)

    def __post_init__(self):
        for cls in self.classes:
            self.trackers.setdefault(ObjectClass(cls), GmPhdTracker(cls, self.params))

    def step(self, measurements, timestamp: float) -> None:
        by_class = {cls: [] for cls in self.trackers}
        for z in measurements:
            if z.object_class in by_class:
                by_class[z.object_class].append(z)
        for cls, tracker in self.trackers.items():
            tracker.step(by_class[cls], timestamp)

    def tracks(self):
        return [t for tr in self.trackers.values() for t in tr.tracks()]

    def predicted_tracks(self, timestamp: float):
        return [t for tr in self.trackers.values() for t in tr.predicted_tracks(timestamp)]

    @property
    def dropped_out_of_order(self) -> int:
        return sum(t.dropped_out_of_order for t in self.trackers.values())
