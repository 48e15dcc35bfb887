"""Scenario description: stations, road users, channel, road layout."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..cpm import ObjectClass, StationType
from ..geometry import InvalidArgumentError, Pose2
from ..planner import CostMapConfig, CrossingZone, Divider, Lane, LaneMap, PlannerConfig, StopLine, VehicleParams
from ..tracker import TrackerParams
from .schema import Node, SchemaError, load_document

__all__ = [
    "SensorSpec",
    "StationSpec",
    "RoadUserSpec",
    "ChannelSpec",
    "PlanningSpec",
    "Scenario",
    "parse_scenario",
    "load_scenario",
]

DEFAULT_PERCEPTION_STD = (0.5, 0.5, math.radians(6.0))


@dataclass(frozen=True)
class SensorSpec:
    range: float = 50.0
    fov_start: float = -math.pi  # rad, relative to the station heading
    fov_end: float = math.pi

    def sees(self, x: float, y: float) -> bool:
        """Whether a point in the station frame lies inside the sensing sector."""
        if math.hypot(x, y) > self.range:
            return False
        if self.fov_end - self.fov_start >= 2 * math.pi - 1e-12:
            return True
        bearing = math.atan2(y, x)
        return (bearing - self.fov_start) % (2 * math.pi) <= (self.fov_end - self.fov_start) % (2 * math.pi)


@dataclass(frozen=True)
class StationSpec:
    station_id: int
    role: str  # "sensing" or "receiving"
    kind: StationType
    pose: Pose2
    speed: float = 0.0
    localisation_std: tuple = (0.0, 0.0, 0.0)
    sensor: SensorSpec | None = None
    lane: str | None = None
    perception_std: tuple = DEFAULT_PERCEPTION_STD
    length: float = 4.5
    width: float = 1.8

    def pose_at(self, t: float) -> Pose2:
        """Constant-velocity motion along the initial heading."""
        p = self.pose
        return Pose2(p.x + self.speed * t * math.cos(p.theta), p.y + self.speed * t * math.sin(p.theta), p.theta)

    @property
    def localisation_cov(self) -> np.ndarray:
        return np.diag(np.square(self.localisation_std))


@dataclass(frozen=True)
class RoadUserSpec:
    """Piecewise-linear trajectory through timed waypoints ``(t, x, y)``."""

    user_id: int
    object_class: ObjectClass
    waypoints: tuple
    perception_std: tuple = DEFAULT_PERCEPTION_STD
    speed_std: float | None = None
    heading: float = 0.0  # used while standing still before any motion
    length: float = 0.5
    width: float = 0.5

    def __post_init__(self):
        ts = [w[0] for w in self.waypoints]
        if not ts:
            raise InvalidArgumentError("a road user needs at least one waypoint")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise InvalidArgumentError("waypoint times must be strictly increasing")

    def state_at(self, t: float):
        """``(x, y, heading, speed)`` at time ``t``; holds still outside the waypoint span."""
        w = self.waypoints
        heading = self.heading
        for a, b in zip(w, w[1:]):
            if (b[1], b[2]) != (a[1], a[2]):
                heading = math.atan2(b[2] - a[2], b[1] - a[1])
            if a[0] <= t < b[0]:
                f = (t - a[0]) / (b[0] - a[0])
                speed = math.hypot(b[1] - a[1], b[2] - a[2]) / (b[0] - a[0])
                return a[1] + f * (b[1] - a[1]), a[2] + f * (b[2] - a[2]), heading, speed
            if t < a[0]:
                break
        if t < w[0][0]:
            return w[0][1], w[0][2], self._first_heading(), 0.0
        return w[-1][1], w[-1][2], heading, 0.0

    def _first_heading(self) -> float:
        for a, b in zip(self.waypoints, self.waypoints[1:]):
            if (b[1], b[2]) != (a[1], a[2]):
                return math.atan2(b[2] - a[2], b[1] - a[1])
        return self.heading

    @property
    def perception_cov(self) -> np.ndarray:
        return np.diag(np.square(self.perception_std))


@dataclass(frozen=True)
class ChannelSpec:
    loss: float = 0.0
    latency_ticks: int = 0
    codec: bool = True  # False hands message objects over without encoding

    def __post_init__(self):
        if not 0.0 <= self.loss <= 1.0 or self.latency_ticks < 0:
            raise InvalidArgumentError("channel loss must lie in [0, 1] and latency must be >= 0")


@dataclass(frozen=True)
class PlanningSpec:
    resolution: float = 0.5
    extent: float = 35.0
    lookahead: float = 30.0
    horizon: float = 1.5
    step: float = 0.5
    accel: float = 1.0
    comfort_decel: float = 1.5
    max_decel: float = 4.0
    stop_margin: float = 0.5
    exclusion_radius: float = 3.0
    merge_length: float = 10.0
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    cost_map: CostMapConfig = field(default_factory=CostMapConfig)


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    seed: int
    duration: float
    stations: tuple
    road_users: tuple = ()
    tick: float = 0.1
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    lane_map: LaneMap | None = None
    planning: PlanningSpec = field(default_factory=PlanningSpec)
    tracker: TrackerParams = field(default_factory=TrackerParams)
    occluders: tuple = ()
    local_sensor_range: float = 50.0

    def __post_init__(self):
        if not self.tick > 0 or not self.duration > 0:
            raise InvalidArgumentError("tick and duration must be > 0")
        receivers = [s for s in self.stations if s.role == "receiving"]
        if len(receivers) != 1:
            raise InvalidArgumentError(f"exactly one receiving station required, found {len(receivers)}")
        ids = [s.station_id for s in self.stations]
        if len(set(ids)) != len(ids):
            raise InvalidArgumentError("station ids must be unique")
        if self.receiver.lane is not None:
            if self.lane_map is None:
                raise InvalidArgumentError("receiver lane given without a lane map")
            self.lane_map.lane(self.receiver.lane)

    @property
    def receiver(self) -> StationSpec:
        return next(s for s in self.stations if s.role == "receiving")

    @property
    def senders(self) -> tuple:
        return tuple(s for s in self.stations if s.role == "sensing")

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration / self.tick))


# --- parsing ------------------------------------------------------------------------

_TOP = {"version", "name", "seed", "duration", "tick", "channel", "stations", "road_users", "lane_map",
        "planning", "tracker", "occluders", "local_sensor_range"}
_CLASSES = {c.name.lower(): c for c in ObjectClass}


def _deg3(node: Node) -> tuple:
    a, b, c = node.vector(3, lo=0.0)
    return a, b, math.radians(c)


def _pose(node: Node) -> Pose2:
    x, y, h = node.vector(3)
    return Pose2(x, y, math.radians(h))


def _station(n: Node) -> StationSpec:
    n.mapping({"id", "role", "type", "pose", "speed", "localisation_std", "sensor", "lane", "perception_std",
               "length", "width"})
    kw = {}
    role = n.req("role").string(("sensing", "receiving"))
    kind = {"IRSU": StationType.IRSU, "CAV": StationType.VEHICLE}[n.req("type").string(("IRSU", "CAV"))]
    if (s := n.opt("speed")) is not None:
        kw["speed"] = s.number(0.0)
    if (s := n.opt("localisation_std")) is not None:
        kw["localisation_std"] = _deg3(s)
    if (s := n.opt("perception_std")) is not None:
        kw["perception_std"] = _deg3(s)
    if (s := n.opt("sensor")) is not None:
        s.mapping({"range", "fov"})
        skw = {}
        if (r := s.opt("range")) is not None:
            skw["range"] = r.number(0.0, lo_open=True)
        if (f := s.opt("fov")) is not None:
            a, b = f.vector(2)
            skw["fov_start"], skw["fov_end"] = math.radians(a), math.radians(b)
        kw["sensor"] = SensorSpec(**skw)
    elif role == "sensing":
        kw["sensor"] = SensorSpec()
    if (s := n.opt("lane")) is not None:
        kw["lane"] = s.string()
    for key in ("length", "width"):
        if (s := n.opt(key)) is not None:
            kw[key] = s.number(0.0, lo_open=True)
    return StationSpec(n.req("id").integer(0, 0xFFFFFFFF), role, kind, _pose(n.req("pose")), **kw)


def _road_user(n: Node) -> RoadUserSpec:
    n.mapping({"id", "class", "trajectory", "perception_std", "speed_std", "heading", "length", "width"})
    kw = {}
    wps = []
    for w in n.req("trajectory").items():
        w.mapping({"t", "x", "y"})
        wps.append((w.req("t").number(0.0), w.req("x").number(), w.req("y").number()))
    if not wps:
        raise n.req("trajectory").error("trajectory needs at least one waypoint")
    if any(b[0] <= a[0] for a, b in zip(wps, wps[1:])):
        raise n.req("trajectory").error("waypoint times must be strictly increasing")
    if (s := n.opt("perception_std")) is not None:
        kw["perception_std"] = _deg3(s)
    if (s := n.opt("speed_std")) is not None:
        kw["speed_std"] = s.number(0.0)
    if (s := n.opt("heading")) is not None:
        kw["heading"] = math.radians(s.number())
    for key in ("length", "width"):
        if (s := n.opt(key)) is not None:
            kw[key] = s.number(0.0)
    cls = _CLASSES[n.req("class").string(tuple(_CLASSES))]
    return RoadUserSpec(n.req("id").integer(0, 0xFFFF), cls, tuple(wps), **kw)


def _lane_map(n: Node) -> LaneMap:
    n.mapping({"drivable", "lanes", "dividers", "crossing_zones", "stop_lines"})
    drivable = [p.points(3) for p in n.req("drivable").items()]
    lanes = []
    for ln in (n.opt("lanes").items() if n.has("lanes") else []):
        ln.mapping({"name", "centerline", "width", "speed_limit"})
        lanes.append(Lane(ln.req("name").string(), ln.req("centerline").points(), ln.req("width").number(0.0, lo_open=True),
                          ln.req("speed_limit").number(0.0, lo_open=True)))
    dividers = []
    for d in (n.opt("dividers").items() if n.has("dividers") else []):
        d.mapping({"points", "crossable"})
        dividers.append(Divider(d.req("points").points(), d.req("crossable").boolean() if d.has("crossable") else True))
    zones = []
    for z in (n.opt("crossing_zones").items() if n.has("crossing_zones") else []):
        z.mapping({"xmin", "ymin", "xmax", "ymax", "speed_limit"})
        vals = [z.req(k).number() for k in ("xmin", "ymin", "xmax", "ymax")]
        limit = z.req("speed_limit").number(0.0, lo_open=True) if z.has("speed_limit") else None
        try:
            zones.append(CrossingZone(*vals, speed_limit=limit))
        except InvalidArgumentError as exc:
            raise z.error(str(exc)) from exc
    stops = []
    for s in (n.opt("stop_lines").items() if n.has("stop_lines") else []):
        s.mapping({"points"})
        stops.append(StopLine(s.req("points").points()))
    try:
        return LaneMap(drivable, lanes, dividers, zones, stops)
    except InvalidArgumentError as exc:
        raise n.error(str(exc)) from exc


def _planning(n: Node) -> PlanningSpec:
    simple = {"resolution", "extent", "lookahead", "horizon", "step", "accel", "comfort_decel", "max_decel",
              "stop_margin", "exclusion_radius", "merge_length"}
    n.mapping(simple | {"vehicle"})
    kw = {k: n.req(k).number(0.0, lo_open=True) for k in simple if n.has(k)}
    if n.has("horizon"):
        kw["horizon"] = n.req("horizon").number(0.0)
    if (v := n.opt("vehicle")) is not None:
        v.mapping({"wheelbase", "max_steer_deg", "length", "width", "speed_cap"})
        vkw = {k: v.req(k).number(0.0, lo_open=True) for k in ("wheelbase", "length", "width", "speed_cap") if v.has(k)}
        if v.has("max_steer_deg"):
            vkw["max_steer"] = math.radians(v.req("max_steer_deg").number(0.0, 89.0, lo_open=True))
        kw["vehicle"] = VehicleParams(**vkw)
    return PlanningSpec(**kw)


def _tracker(n: Node) -> TrackerParams:
    names = set(TrackerParams.__dataclass_fields__)
    n.mapping(names)
    kw = {}
    for k in names:
        if n.has(k):
            kw[k] = n.req(k).integer(1) if k == "max_components" else n.req(k).number()
    try:
        return TrackerParams(**kw)
    except InvalidArgumentError as exc:
        raise n.error(str(exc)) from exc


def parse_scenario(doc: Node) -> Scenario:
    doc.mapping(_TOP)
    if doc.has("version") and doc.req("version").integer() != 1:
        raise doc.req("version").error("unsupported scenario file version")
    kw = {}
    if doc.has("tick"):
        kw["tick"] = doc.req("tick").number(0.0, lo_open=True)
    if (c := doc.opt("channel")) is not None:
        c.mapping({"loss", "latency_ticks", "codec"})
        kw["channel"] = ChannelSpec(
            c.req("loss").number(0.0, 1.0) if c.has("loss") else 0.0,
            c.req("latency_ticks").integer(0, 10_000) if c.has("latency_ticks") else 0,
            c.req("codec").boolean() if c.has("codec") else True,
        )
    stations_node = doc.req("stations")
    stations = []
    for s in stations_node.items():
        try:
            stations.append(_station(s))
        except InvalidArgumentError as exc:
            if isinstance(exc, SchemaError):
                raise
            raise s.error(str(exc)) from exc
    users = []
    if doc.has("road_users"):
        for u in doc.req("road_users").items():
            try:
                users.append(_road_user(u))
            except InvalidArgumentError as exc:
                if isinstance(exc, SchemaError):
                    raise
                raise u.error(str(exc)) from exc
    if (lm := doc.opt("lane_map")) is not None:
        kw["lane_map"] = _lane_map(lm)
    if (p := doc.opt("planning")) is not None:
        try:
            kw["planning"] = _planning(p)
        except InvalidArgumentError as exc:
            if isinstance(exc, SchemaError):
                raise
            raise p.error(str(exc)) from exc
    if (t := doc.opt("tracker")) is not None:
        kw["tracker"] = _tracker(t)
    if (o := doc.opt("occluders")) is not None:
        kw["occluders"] = tuple(np.array(p.points(3)) for p in o.items())
    if (r := doc.opt("local_sensor_range")) is not None:
        kw["local_sensor_range"] = r.number(0.0, lo_open=True)
    name = doc.req("name").string() if doc.has("name") else Path(doc.source).stem
    try:
        return Scenario(name, doc.req("seed").integer(0), doc.req("duration").number(0.0, lo_open=True),
                        tuple(stations), tuple(users), **kw)
    except InvalidArgumentError as exc:
        if isinstance(exc, SchemaError):
            raise
        raise stations_node.error(str(exc)) if "station" in str(exc) else doc.error(str(exc)) from exc


def load_scenario(path) -> Scenario:
    return parse_scenario(load_document(Path(path)))
