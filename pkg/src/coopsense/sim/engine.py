"""Closed-loop cooperative-perception simulation.

Sensing stations perceive road users and broadcast CPMs over a lossy, delayed
channel.  The receiving vehicle transforms every received object into the
world frame, tracks it, builds a cost map, plans and decides at each tick.
The vehicle is driven by its true pose; localisation error only enters through
the frame transform and the self-filter.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from matplotlib.path import Path

from .. import cpm as cpm_mod
from ..cpm import Cpm, CpmManagement, ObjectClass, PerceivedObject, SensorInformation, SensorType, StationData
from ..geometry import GaussianPose2, Pose2, transform_with_uncertainty, wrap_angle
from ..planner import (
    Decision,
    InvalidStartError,
    PlannedPath,
    build_cost_map,
    decide,
    plan,
    predict_road_user,
    trim_ahead,
)
from ..tracker import Measurement, TrackerBank, self_filter
from .scenario import Scenario, StationSpec

__all__ = ["TrackRecord", "MessageRecord", "TickRecord", "ScenarioLog", "run_scenario", "to_world"]

log = logging.getLogger(__name__)

EGO_OBJECT_ID = 0xFFFF
TRACKED_RADIUS = 2.0  # m, a road user counts as tracked when a same-class track is this close


@dataclass(frozen=True)
class TrackRecord:
    track_id: int
    object_class: ObjectClass
    x: float
    y: float
    heading: float
    speed: float
    position_cov: np.ndarray
    weight: float


@dataclass(frozen=True)
class MessageRecord:
    sent_tick: int
    station_id: int
    n_objects: int
    n_bytes: int
    lost: bool
    arrival_tick: int | None


@dataclass(frozen=True, eq=False)
class TickRecord:
    tick: int
    time: float
    ego: Pose2
    ego_speed: float
    decision: Decision | None
    tracks: tuple
    path: PlannedPath | None
    received: int
    visibility: dict = field(default_factory=dict)  # user id -> (locally visible, tracked)


@dataclass(eq=False)
class ScenarioLog:
    scenario: Scenario
    ticks: list = field(default_factory=list)
    messages: list = field(default_factory=list)
    dropped_out_of_order: int = 0

    def decisions(self) -> list:
        return [t.decision for t in self.ticks]

    def ego_trajectory(self) -> np.ndarray:
        return np.array([[t.time, t.ego.x, t.ego.y, t.ego.theta, t.ego_speed] for t in self.ticks])


def to_world(receiver: GaussianPose2, sender: GaussianPose2, obj: GaussianPose2) -> GaussianPose2:
    """Sender-frame object to world frame via the receiver frame.

    The uncertainty is propagated into the receiver frame and then carried to
    the world along the receiver's own pose estimate.
    """
    local = transform_with_uncertainty(receiver, sender, obj)
    r = receiver.mean
    c, s = math.cos(r.theta), math.sin(r.theta)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    m = local.mean
    world = Pose2(r.x + c * m.x - s * m.y, r.y + s * m.x + c * m.y, wrap_angle(r.theta + m.theta))
    cov = rot @ local.cov @ rot.T
    return GaussianPose2(world, 0.5 * (cov + cov.T))


def _noisy(rng, pose: Pose2, std) -> Pose2:
    e = rng.standard_normal(3) * np.asarray(std)
    return Pose2(pose.x + e[0], pose.y + e[1], wrap_angle(pose.theta + e[2]))


def _relative(frame: Pose2, x: float, y: float, heading: float) -> Pose2:
    c, s = math.cos(frame.theta), math.sin(frame.theta)
    dx, dy = x - frame.x, y - frame.y
    return Pose2(c * dx + s * dy, -s * dx + c * dy, wrap_angle(heading - frame.theta))


class _Follower:
    """Moves the ego vehicle along a densified path polyline."""

    @staticmethod
    def advance(pose: Pose2, path: PlannedPath | None, distance: float) -> Pose2:
        if distance <= 0:
            return pose
        if path is None or len(path.poses) < 2:
            return Pose2(pose.x + distance * math.cos(pose.theta), pose.y + distance * math.sin(pose.theta),
                         pose.theta)
        pts = path.poses
        i = int(np.argmin(np.hypot(pts[:, 0] - pose.x, pts[:, 1] - pose.y)))
        here = np.array([pose.x, pose.y])
        remaining = distance
        for j in range(i + 1, len(pts)):
            seg = pts[j, :2] - here
            d = float(np.hypot(*seg))
            if d >= remaining:
                q = here + seg * (remaining / d)
                return Pose2(q[0], q[1], float(math.atan2(seg[1], seg[0])) if d > 1e-9 else pts[j, 2])
            remaining -= d
            here = pts[j, :2].copy()
        th = float(pts[-1, 2])
        return Pose2(here[0] + remaining * math.cos(th), here[1] + remaining * math.sin(th), th)


class _Engine:
    def __init__(self, scenario: Scenario):
        self.sc = scenario
        seeds = np.random.SeedSequence(scenario.seed).spawn(3)
        self.rng_loc, self.rng_percep, self.rng_chan = (np.random.default_rng(s) for s in seeds)
        self.recv = scenario.receiver
        self.ego = self.recv.pose
        self.speed = self.recv.speed
        self.bank = TrackerBank(scenario.tracker)
        self.pose_estimates: dict[int, GaussianPose2] = {}
        self.in_flight: dict[int, list] = {}
        self.log = ScenarioLog(scenario)
        self.path: PlannedPath | None = None
        self.decision: Decision | None = None
        self.occluders = [Path(np.vstack([o, o[:1]]), closed=True) for o in scenario.occluders]

    # -- sensing side --
    def _targets(self, t: float):
        """Ground-truth ``(object id, class, x, y, heading, speed, user)`` for everything perceivable."""
        out = []
        for u in self.sc.road_users:
            x, y, h, v = u.state_at(t)
            out.append((u.user_id, u.object_class, x, y, h, v, u))
        e = self.ego
        out.append((EGO_OBJECT_ID, ObjectClass.CAR, e.x, e.y, e.theta, self.speed, None))
        return out

    def _perceive(self, station: StationSpec, tick: int, t: float) -> Cpm:
        truth = station.pose_at(t)
        est = _noisy(self.rng_loc, truth, station.localisation_std)
        objects = []
        for oid, cls, x, y, h, v, user in self._targets(t):
            rel = _relative(truth, x, y, h)
            if not station.sensor.sees(rel.x, rel.y):
                continue
            std = user.perception_std if user is not None else self.recv.perception_std
            meas = _noisy(self.rng_percep, rel, std)
            speed, speed_std = 0.0, math.inf
            if user is not None and user.speed_std is not None:
                speed_std = user.speed_std
                speed = max(0.0, v + speed_std * float(self.rng_percep.standard_normal()))
            dims = (user.length, user.width) if user is not None else (self.recv.length, self.recv.width)
            objects.append(PerceivedObject(oid, cls, GaussianPose2(meas, np.diag(np.square(std))), speed, speed_std,
                                           *dims))
        sensor = station.sensor
        sdata = None
        if station.kind == cpm_mod.StationType.VEHICLE:
            sdata = StationData(truth.theta, station.speed, station.length, station.width)
        mgmt = CpmManagement(station.station_id, station.kind, int(round(t * 1000)),
                             GaussianPose2(est, station.localisation_cov))
        sensors = (SensorInformation(0, SensorType.FUSED, sensor.range, sensor.fov_start, sensor.fov_end),)
        return Cpm(mgmt, sdata, sensors, tuple(objects[: cpm_mod.MAX_OBJECTS]))

    def _broadcast(self, tick: int, t: float):
        ch = self.sc.channel
        for station in self.sc.senders:
            msg = self._perceive(station, tick, t)
            payload = cpm_mod.encode(msg)
            lost = bool(self.rng_chan.random() < ch.loss)
            arrival = None if lost else tick + ch.latency_ticks
            self.log.messages.append(MessageRecord(tick, station.station_id, len(msg.objects), len(payload), lost,
                                                   arrival))
            if not lost:
                self.in_flight.setdefault(arrival, []).append(payload if ch.codec else msg)

    # -- receiving side --
    def _receive(self, tick: int) -> int:
        arrivals = self.in_flight.pop(tick, [])
        for item in arrivals:
            msg = cpm_mod.decode(item) if isinstance(item, (bytes, bytearray)) else item
            gen_t = msg.management.generation_time / 1000.0
            gen_tick = int(round(gen_t / self.sc.tick))
            own = self.pose_estimates.get(gen_tick)
            if own is None:
                log.warning("no pose estimate for tick %d, message skipped", gen_tick)
                continue
            zs = []
            for o in msg.objects:
                w = to_world(own, msg.management.reference_position, o.pose)
                speed = o.speed if math.isfinite(o.speed_std) else None
                zs.append(Measurement.from_pose(w, o.object_class, gen_t, speed, o.speed_std))
            zs = self_filter(zs, own, self.sc.planning.exclusion_radius)
            self.bank.step(zs, gen_t)
        return len(arrivals)

    def _stop_line(self):
        lm = self.sc.lane_map
        ahead = [(s.distance_ahead(self.ego), s) for s in lm.stop_lines]
        ahead = [(d, s) for d, s in ahead if 0 < d <= self.sc.planning.lookahead]
        return min(ahead, key=lambda p: p[0])[1] if ahead else None

    def _goal(self, cost_map):
        """Lane goal at the lookahead, moved clear of obstacles on the centreline.

        A goal is usable when ``merge_length`` of free centreline precedes it,
        so the vehicle can settle back into its lane.  Failing that, the goal is
        pulled back in front of the first obstruction.  ``None`` when nothing
        ahead is free.
        """
        ps = self.sc.planning
        lane = self.sc.lane_map.lane(self.recv.lane)
        s0, _ = lane.project(self.ego.x, self.ego.y)
        s_end = lane.length - 1.0
        step = cost_map.resolution / 2.0
        ss = np.arange(s0, s_end + 1e-9, step)
        free = []
        for s in ss:
            q = lane.pose_at(s)
            if not cost_map.contains(q.x, q.y):
                break
            free.append(not cost_map.is_occupied(q.x, q.y))
        ss = ss[: len(free)]
        if len(ss) == 0:
            return None
        free = np.array(free)
        run = np.zeros(len(free), dtype=int)  # consecutive free samples ending here
        for i, f in enumerate(free):
            run[i] = (run[i - 1] + 1 if i else 1) if f else 0
        need = int(math.ceil(ps.merge_length / step))
        target = s0 + ps.lookahead
        first_blocked = int(np.argmin(free)) if not free.all() else len(free)
        for i in range(len(ss)):
            if ss[i] >= target - 1e-9 or i == len(ss) - 1:
                if i < first_blocked:
                    return lane.pose_at(ss[i])
                break
        for j in range(i, len(ss)):
            if run[j] >= need:
                return lane.pose_at(ss[j])
        back = first_blocked - int(math.ceil(ps.stop_margin / step)) - 1
        if back <= 0:
            return None
        return lane.pose_at(ss[back])

    def _plan_and_control(self, t: float):
        sc, ps = self.sc, self.sc.planning
        tracks = self.bank.predicted_tracks(t)
        preds = [predict_road_user(tr, ps.horizon, ps.step, sc.tracker) for tr in tracks]
        cm = build_cost_map(sc.lane_map, tracks, preds, self.ego, ps.extent, ps.resolution, ps.vehicle,
                            self.recv.lane, ps.cost_map)
        goal = self._goal(cm)
        try:
            path = PlannedPath.infeasible() if goal is None else plan(cm, self.ego, goal, ps.vehicle, ps.planner)
        except InvalidStartError:
            path = PlannedPath.infeasible()
        stop = self._stop_line()
        previous = trim_ahead(self.path, self.ego) if self.path is not None else None
        decision = decide(path, cm, stop, previous, self.decision, self.ego)
        cap = ps.vehicle.speed_cap
        if path.feasible:
            self.path = path
            target = float(path.speeds[0]) if len(path.speeds) else cap
            # come to rest at the end of a shortened path
            room = max(0.0, path.length - ps.stop_margin)
            target = min(target, math.sqrt(2.0 * ps.comfort_decel * room))
        elif decision is Decision.GIVE_WAY:
            d = stop.distance_ahead(self.ego) - ps.vehicle.length / 2.0 - ps.stop_margin
            target = min(cap, math.sqrt(2.0 * ps.comfort_decel * max(0.0, d)))
        else:
            target = 0.0
        self.decision = decision
        return decision, path, target, cm

    def _visibility(self, t: float, tracks) -> dict:
        out = {}
        e = self.ego
        for u in self.sc.road_users:
            x, y, _, _ = u.state_at(t)
            visible = math.hypot(x - e.x, y - e.y) <= self.sc.local_sensor_range
            if visible and self.occluders:
                ray = Path(np.array([[e.x, e.y], [x, y]]))
                visible = not any(o.intersects_path(ray, filled=True) for o in self.occluders)
            tracked = any(tr.object_class == u.object_class and math.hypot(tr.state.x - x, tr.state.y - y)
                          <= TRACKED_RADIUS for tr in tracks)
            out[u.user_id] = (visible, tracked)
        return out

    def step(self, tick: int):
        sc = self.sc
        t = tick * sc.tick
        self.pose_estimates[tick] = GaussianPose2(_noisy(self.rng_loc, self.ego, self.recv.localisation_std),
                                                  self.recv.localisation_cov)
        self._broadcast(tick, t)
        received = self._receive(tick)
        decision, path, target = None, None, self.recv.speed
        if sc.lane_map is not None and self.recv.lane is not None:
            decision, path, target, _ = self._plan_and_control(t)
        tracks = self.bank.predicted_tracks(t)
        self.log.ticks.append(TickRecord(
            tick, t, self.ego, self.speed, decision,
            tuple(TrackRecord(tr.track_id, tr.object_class, tr.state.x, tr.state.y, tr.state.heading, tr.state.speed,
                              np.array(tr.cov[:2, :2]), tr.weight) for tr in tracks),
            path, received, self._visibility(t, tracks)))
        # longitudinal control, then motion over one tick
        ps = sc.planning
        if target >= self.speed:
            new_speed = min(target, self.speed + ps.accel * sc.tick)
        else:
            new_speed = max(target, self.speed - ps.max_decel * sc.tick)
        dist = 0.5 * (self.speed + new_speed) * sc.tick
        self.speed = new_speed
        self.ego = _Follower.advance(self.ego, self.path, dist)


def run_scenario(scenario: Scenario) -> ScenarioLog:
    """Simulate ``scenario`` and return the per-tick log.  Fully determined by the seed."""
    eng = _Engine(scenario)
    for k in range(scenario.n_ticks):
        eng.step(k)
    eng.log.dropped_out_of_order = eng.bank.dropped_out_of_order
    return eng.log
