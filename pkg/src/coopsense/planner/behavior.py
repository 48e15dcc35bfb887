"""Give-way / replan / proceed decision on top of the path planner."""

from __future__ import annotations

import enum

import numpy as np

from ..geometry import Pose2
from .costmap import CostMap
from .lanes import StopLine
from .search import PlannedPath

__all__ = ["Decision", "decide", "path_blocked", "trim_ahead"]


class Decision(enum.Enum):
    PROCEED = "Proceed"
    GIVE_WAY = "GiveWay"
    REPLAN = "Replan"


def path_blocked(path: PlannedPath, cost_map: CostMap) -> bool:
    """True when any in-map pose of ``path`` falls on an occupied cell."""
    for x, y, _ in path.poses:
        if cost_map.contains(x, y) and cost_map.is_occupied(x, y):
            return True
    return False


def decide(path: PlannedPath, cost_map: CostMap, stop_line: StopLine | None = None,
           previous: PlannedPath | None = None, previous_decision: Decision | None = None,
           ego: Pose2 | None = None) -> Decision:
    """Classify a fresh plan.

    ``previous`` is the path being followed before this plan, already trimmed to
    the part ahead of the vehicle.  Resuming after a give-way is reported as a
    replan.  An infeasible plan with no stop line ahead also asks for a replan.
    """
    if not path.feasible:
        if stop_line is not None:
            if ego is None or stop_line.distance_ahead(ego) > 0:
                return Decision.GIVE_WAY
        return Decision.REPLAN
    if previous_decision is Decision.GIVE_WAY:
        return Decision.REPLAN
    if previous is not None and len(previous.poses) and path_blocked(previous, cost_map):
        return Decision.REPLAN
    return Decision.PROCEED


def trim_ahead(path: PlannedPath, pose: Pose2) -> PlannedPath:
    """Portion of ``path`` from the pose nearest to ``pose`` onwards."""
    if not len(path.poses):
        return path
    d = np.hypot(path.poses[:, 0] - pose.x, path.poses[:, 1] - pose.y)
    i = int(np.argmin(d))
    return PlannedPath(path.poses[i:], path.speeds[i:], path.feasible, path.cost, path.expansions)
