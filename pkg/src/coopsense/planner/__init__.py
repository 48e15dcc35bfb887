"""Cost-map construction, hybrid A* planning and give-way decisions."""

from .behavior import Decision, decide, path_blocked, trim_ahead
from .costmap import (
    CostMap,
    CostMapConfig,
    VehicleParams,
    build_cost_map,
    ellipse_intersects_rect,
    predict_road_user,
    track_pose,
)
from .lanes import CrossingZone, Divider, Lane, LaneMap, StopLine
from .search import InvalidStartError, PlannedPath, PlannerConfig, path_cost, plan, primitive_curvatures

__all__ = [
    "CostMap",
    "CostMapConfig",
    "CrossingZone",
    "Decision",
    "Divider",
    "InvalidStartError",
    "Lane",
    "LaneMap",
    "PlannedPath",
    "PlannerConfig",
    "StopLine",
    "VehicleParams",
    "build_cost_map",
    "decide",
    "ellipse_intersects_rect",
    "path_blocked",
    "path_cost",
    "plan",
    "predict_road_user",
    "primitive_curvatures",
    "track_pose",
    "trim_ahead",
]
