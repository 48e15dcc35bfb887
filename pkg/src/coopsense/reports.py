"""CSV and newline-delimited JSON writers for sweep and scenario results.

Every CSV starts with one ``#`` comment naming the schema and its version;
numbers are written with a fixed format so identical runs give identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from .geometry import GaussianPose2, confidence_ellipse
from .sim.engine import ScenarioLog
from .sim.sweep import SweepResult

__all__ = [
    "SWEEP_COLUMNS",
    "SCENARIO_COLUMNS",
    "TRANSFORM_COLUMNS",
    "fmt",
    "sweep_csv",
    "scenario_csv",
    "scenario_jsonl",
    "transform_csv",
]

SWEEP_SCHEMA = "# coopsense-sweep v1"
SCENARIO_SCHEMA = "# coopsense-scenario v1"
TRANSFORM_SCHEMA = "# coopsense-transform v1"

SWEEP_COLUMNS = (
    "mode", "varied", "value", "offset_m", "object", "sender_x", "sender_y", "receiver_range_m",
    "x", "y", "heading_deg", "cov_xx", "cov_xy", "cov_yy", "var_heading_deg2",
    "semi_major", "semi_minor", "orientation_deg", "area_m2", "mass",
    "mc_x", "mc_y", "mc_cov_xx", "mc_cov_xy", "mc_cov_yy",
)
SCENARIO_COLUMNS = (
    "tick", "time_s", "kind", "id", "class", "x", "y", "heading_deg", "speed",
    "cov_xx", "cov_xy", "cov_yy", "decision", "bytes_sent", "messages_received",
)
TRANSFORM_COLUMNS = ("x", "y", "heading_deg", "cov_xx", "cov_xy", "cov_yy", "cov_xt", "cov_yt", "cov_tt",
                     "semi_major", "semi_minor", "orientation_deg", "mass")


def fmt(v) -> str:
    """Fixed numeric formatting; blanks for missing values."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    out = f"{v:.9g}"
    return "0" if out == "-0" else out


def _table(schema: str, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(schema + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([x if isinstance(x, str) else fmt(x) for x in r])
    return buf.getvalue()


def sweep_csv(result: SweepResult, mass: float | None = None) -> str:
    """One row per (mode, value, offset, object).

    ``value`` is in degrees when the heading deviation is varied and in metres
    otherwise.  ``mass`` re-derives the ellipses at another probability mass.
    """
    spec = result.spec
    deg = spec.varied == "heading_std"
    rows = []
    for r in result.records:
        g = r.transformed
        el = r.ellipse if mass is None else confidence_ellipse(g.position_cov, (g.mean.x, g.mean.y), mass)
        mc = r.mc_cov
        rows.append((
            r.mode, spec.varied, math.degrees(r.value) if deg else r.value, r.offset, r.object_index,
            r.object_in_sender.x, r.object_in_sender.y, r.receiver_range,
            g.mean.x, g.mean.y, math.degrees(g.mean.theta), g.cov[0, 0], g.cov[0, 1], g.cov[1, 1],
            math.degrees(math.degrees(g.cov[2, 2])),
            el.semi_major, el.semi_minor, math.degrees(el.orientation), el.area, el.probability_mass,
            None if r.mc_mean is None else r.mc_mean[0], None if r.mc_mean is None else r.mc_mean[1],
            None if mc is None else mc[0, 0], None if mc is None else mc[0, 1], None if mc is None else mc[1, 1],
        ))
    return _table(SWEEP_SCHEMA, SWEEP_COLUMNS, rows)


def _scenario_rows(log: ScenarioLog):
    sc = log.scenario
    sent = {}
    for m in log.messages:
        sent[m.sent_tick] = sent.get(m.sent_tick, 0) + m.n_bytes
    for t in log.ticks:
        e = t.ego
        yield (t.tick, t.time, "ego", sc.receiver.station_id, "CAR", e.x, e.y, math.degrees(e.theta), t.ego_speed,
               None, None, None, t.decision.value if t.decision else "", sent.get(t.tick, 0), t.received)
        for s in sc.senders:
            p = s.pose_at(t.time)
            yield (t.tick, t.time, "station", s.station_id, s.kind.name, p.x, p.y, math.degrees(p.theta), s.speed,
                   None, None, None, "", None, None)
        for u in sc.road_users:
            x, y, h, v = u.state_at(t.time)
            yield (t.tick, t.time, "truth", u.user_id, u.object_class.name, x, y, math.degrees(h), v,
                   None, None, None, "", None, None)
        for tr in t.tracks:
            c = tr.position_cov
            yield (t.tick, t.time, "track", tr.track_id, tr.object_class.name, tr.x, tr.y, math.degrees(tr.heading),
                   tr.speed, c[0, 0], c[0, 1], c[1, 1], "", None, None)


def scenario_csv(log: ScenarioLog) -> str:
    """Long-format log: per tick one ``ego`` row, then station, ground-truth and track rows."""
    return _table(SCENARIO_SCHEMA, SCENARIO_COLUMNS, _scenario_rows(log))


def scenario_jsonl(log: ScenarioLog) -> str:
    """One JSON object per tick, for tools that prefer nested records."""
    lines = []
    for t in log.ticks:
        rec = {
            "tick": t.tick,
            "time": round(t.time, 9),
            "ego": [t.ego.x, t.ego.y, t.ego.theta],
            "speed": t.ego_speed,
            "decision": t.decision.value if t.decision else None,
            "received": t.received,
            "tracks": [{"id": tr.track_id, "class": tr.object_class.name, "x": tr.x, "y": tr.y,
                        "heading": tr.heading, "speed": tr.speed, "weight": tr.weight,
                        "position_cov": np.asarray(tr.position_cov).tolist()} for tr in t.tracks],
            "path": None if t.path is None or not t.path.feasible else np.round(t.path.poses, 6).tolist(),
            "visibility": {str(k): {"visible": v[0], "tracked": v[1]} for k, v in sorted(t.visibility.items())},
        }
        lines.append(json.dumps(rec, sort_keys=True, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def transform_csv(g: GaussianPose2, mass: float = 0.95) -> str:
    el = confidence_ellipse(g.position_cov, (g.mean.x, g.mean.y), mass)
    c = g.cov
    row = (g.mean.x, g.mean.y, math.degrees(g.mean.theta), c[0, 0], c[0, 1], c[1, 1], c[0, 2], c[1, 2], c[2, 2],
           el.semi_major, el.semi_minor, math.degrees(el.orientation), mass)
    return _table(TRANSFORM_SCHEMA, TRANSFORM_COLUMNS, [row])
