"""Overhead SVG figures: confidence ellipses on a metric grid and scenario replays.

Figures are rendered with a fixed hash salt, no timestamp and text kept as
text, so the same inputs always give the same bytes.  Every ellipse carries a
``gid`` (``ellipse-<label>``) so tests and downstream tools can find it.
"""

from __future__ import annotations

import io
import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Ellipse, Polygon, Rectangle  # noqa: E402

from .geometry import ConfidenceEllipse, confidence_ellipse  # noqa: E402
from .sim.engine import ScenarioLog  # noqa: E402
from .sim.sweep import SweepResult  # noqa: E402

__all__ = ["ellipse_figure", "sweep_figures", "scenario_figure", "render_svg"]

_RC = {
    "svg.hashsalt": "coopsense",
    "svg.fonttype": "none",
    "path.simplify": False,
    "font.size": 8,
}


def render_svg(fig) -> str:
    buf = io.StringIO()
    with matplotlib.rc_context(_RC):
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return buf.getvalue()


def _extent(el: ConfidenceEllipse):
    """Axis-aligned half-extents of an ellipse."""
    c, s = math.cos(el.orientation), math.sin(el.orientation)
    hx = math.hypot(el.semi_major * c, el.semi_minor * s)
    hy = math.hypot(el.semi_major * s, el.semi_minor * c)
    return hx, hy


def _grid_limits(xs, ys, grid: float, pad: float):
    lo_x = math.floor((min(xs) - pad) / grid) * grid
    hi_x = math.ceil((max(xs) + pad) / grid) * grid
    lo_y = math.floor((min(ys) - pad) / grid) * grid
    hi_y = math.ceil((max(ys) + pad) / grid) * grid
    return (lo_x, hi_x), (lo_y, hi_y)


def _draw_ellipse(ax, el: ConfidenceEllipse, label: str, **style):
    patch = Ellipse(el.center, 2 * el.semi_major, 2 * el.semi_minor, angle=math.degrees(el.orientation),
                    fill=False, **style)
    patch.set_gid(f"ellipse-{label}")
    ax.add_patch(patch)


def _setup(ax, xlim, ylim, grid: float):
    ax.set_xlim(*xlim)
    ax.set_ylim(*ylim)
    ax.set_aspect("equal")
    ax.set_xticks(np.arange(xlim[0], xlim[1] + 1e-9, grid))
    ax.set_yticks(np.arange(ylim[0], ylim[1] + 1e-9, grid))
    ax.grid(True, linewidth=0.3, color="0.8")
    ax.set_axisbelow(True)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")


def _figsize(xlim, ylim, width: float = 8.0):
    aspect = (ylim[1] - ylim[0]) / max(xlim[1] - xlim[0], 1e-9)
    return width, float(np.clip(width * aspect, 2.5, 14.0)) + 0.8


def ellipse_figure(ellipses, title: str = "", grid: float = 10.0, markers=(), labels=None) -> str:
    """Ellipses (and optional ``(x, y, text)`` markers) on a ``grid``-metre lattice."""
    xs, ys = [0.0], [0.0]
    for el in ellipses:
        hx, hy = _extent(el)
        xs += [el.center[0] - hx, el.center[0] + hx]
        ys += [el.center[1] - hy, el.center[1] + hy]
    for x, y, _ in markers:
        xs.append(x)
        ys.append(y)
    xlim, ylim = _grid_limits(xs, ys, grid, pad=grid / 2)
    fig, ax = plt.subplots(figsize=_figsize(xlim, ylim), constrained_layout=True)
    _setup(ax, xlim, ylim, grid)
    for i, el in enumerate(ellipses):
        _draw_ellipse(ax, el, labels[i] if labels else str(i), color="tab:blue", linewidth=0.8)
        ax.plot(*el.center, marker=".", markersize=2, color="tab:blue")
    for x, y, text in markers:
        ax.plot(x, y, marker="^", color="tab:red", markersize=5)
        ax.annotate(text, (x, y), textcoords="offset points", xytext=(4, 4))
    if title:
        ax.set_title(title)
    return render_svg(fig)


def sweep_figures(result: SweepResult, grid: float = 10.0, mass: float | None = None) -> dict:
    """``{filename: svg}`` with one figure per (mode, value, offset), in the receiver frame."""
    spec = result.spec
    deg = spec.varied == "heading_std"
    out = {}
    for mode in spec.modes:
        for value in spec.values:
            for offset in spec.offsets:
                rows = result.select(mode, value, offset)
                els = [r.ellipse if mass is None else
                       confidence_ellipse(r.transformed.position_cov, (r.transformed.mean.x, r.transformed.mean.y),
                                          mass) for r in rows]
                sender = result.sender_ellipses[(mode, value, offset)]
                shown = f"{math.degrees(value):g}deg" if deg else f"{value:g}m"
                title = f"{mode}  {spec.varied} = {shown}  offset {offset:g} m"
                markers = [(0.0, 0.0, "receiver"), (sender.center[0], sender.center[1], "sender")]
                name = f"{mode}_{spec.varied}_{shown}_offset_{offset:g}.svg"
                out[name] = ellipse_figure(els, title, grid, markers, [f"{r.object_index:02d}" for r in rows])
    return out


def scenario_figure(log: ScenarioLog, every: float = 1.0, mass: float = 0.95, grid: float = 10.0) -> str:
    """Top view: road layout, ground truth, ego trajectory, sampled tracks and plans."""
    sc = log.scenario
    traj = log.ego_trajectory()
    xs, ys = list(traj[:, 1]), list(traj[:, 2])
    if sc.lane_map is not None:
        for poly in sc.lane_map.drivable:
            xs += list(poly[:, 0])
            ys += list(poly[:, 1])
    for s in sc.senders:
        xs.append(s.pose.x)
        ys.append(s.pose.y)
    truths = {u.user_id: np.array([u.state_at(t.time)[:2] for t in log.ticks]) for u in sc.road_users}
    for pts in truths.values():
        xs += list(pts[:, 0])
        ys += list(pts[:, 1])
    stride = max(1, int(round(every / sc.tick)))
    sampled = log.ticks[::stride]
    ellipses = []
    for t in sampled:
        for tr in t.tracks:
            el = confidence_ellipse(tr.position_cov, (tr.x, tr.y), mass)
            hx, hy = _extent(el)
            xs += [tr.x - hx, tr.x + hx]
            ys += [tr.y - hy, tr.y + hy]
            ellipses.append((t.tick, tr.track_id, el))
    xlim, ylim = _grid_limits(xs, ys, grid, pad=2.0)
    fig, ax = plt.subplots(figsize=_figsize(xlim, ylim, 10.0), constrained_layout=True)
    _setup(ax, xlim, ylim, grid)
    if sc.lane_map is not None:
        lm = sc.lane_map
        for poly in lm.drivable:
            ax.add_patch(Polygon(poly, closed=True, facecolor="0.93", edgecolor="0.5", linewidth=0.6))
        for z in lm.crossing_zones:
            ax.add_patch(Rectangle((z.xmin, z.ymin), z.xmax - z.xmin, z.ymax - z.ymin, facecolor="none",
                                   edgecolor="0.4", hatch="//", linewidth=0.5))
        for d in lm.dividers:
            ax.plot(d.points[:, 0], d.points[:, 1], color="0.3", linewidth=0.8,
                    linestyle="--" if d.crossable else "-")
        for s in lm.stop_lines:
            ax.plot(s.points[:, 0], s.points[:, 1], color="black", linewidth=1.6)
    for occ in sc.occluders:
        ax.add_patch(Polygon(occ, closed=True, facecolor="0.55", edgecolor="0.3"))
    for s in sc.senders:
        ax.plot(s.pose.x, s.pose.y, marker="s", color="tab:purple", markersize=5)
        ax.annotate(f"{s.kind.name} {s.station_id}", (s.pose.x, s.pose.y), textcoords="offset points",
                    xytext=(4, -10))
    for uid, pts in truths.items():
        ax.plot(pts[:, 0], pts[:, 1], color="tab:green", linewidth=0.8)
        ax.annotate(f"user {uid}", tuple(pts[0]), textcoords="offset points", xytext=(4, 4))
    for t in sampled:
        if t.path is not None and t.path.feasible:
            ax.plot(t.path.poses[:, 0], t.path.poses[:, 1], color="tab:orange", linewidth=0.5, alpha=0.7)
    for tick, tid, el in ellipses:
        _draw_ellipse(ax, el, f"t{tick}-track{tid}", color="tab:blue", linewidth=0.6)
    ax.plot(traj[:, 1], traj[:, 2], color="tab:red", linewidth=1.2)
    ax.set_title(sc.name)
    return render_svg(fig)
