"""Scenario engine, localisation sweeps and the sampling reference."""

from .engine import MessageRecord, ScenarioLog, TickRecord, TrackRecord, run_scenario, to_world
from .montecarlo import monte_carlo_batch, monte_carlo_reference, sample_moments
from .scenario import (
    ChannelSpec,
    PlanningSpec,
    RoadUserSpec,
    Scenario,
    SensorSpec,
    StationSpec,
    load_scenario,
    parse_scenario,
)
from .schema import SchemaError, load_document
from .sweep import SweepRecord, SweepResult, SweepSpec, load_sweep, parse_sweep, run_sweep

__all__ = [
    "ChannelSpec",
    "MessageRecord",
    "PlanningSpec",
    "RoadUserSpec",
    "Scenario",
    "ScenarioLog",
    "SchemaError",
    "SensorSpec",
    "StationSpec",
    "SweepRecord",
    "SweepResult",
    "SweepSpec",
    "TickRecord",
    "TrackRecord",
    "load_document",
    "load_scenario",
    "load_sweep",
    "monte_carlo_batch",
    "monte_carlo_reference",
    "parse_scenario",
    "parse_sweep",
    "run_scenario",
    "run_sweep",
    "sample_moments",
    "to_world",
]
