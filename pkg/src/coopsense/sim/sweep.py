"""Localisation-uncertainty sweeps over a line of static road users.

A sensing station observes objects placed along its x-axis; a receiving
vehicle at several longitudinal offsets transforms them into its own frame.
Every (mode, value, offset) combination is independent, so combinations are
spread over a thread pool and merged back by key.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..geometry import (
    ConfidenceEllipse,
    GaussianPose2,
    InvalidArgumentError,
    Pose2,
    confidence_ellipse,
    transform_with_uncertainty,
)
from .montecarlo import monte_carlo_batch
from .schema import Node, SchemaError, load_document

__all__ = ["SweepSpec", "SweepRecord", "SweepResult", "run_sweep", "load_sweep", "parse_sweep", "thread_count"]

MODES = ("V2I", "V2V")
VARIED = ("heading_std", "position_std")


@dataclass(frozen=True)
class SweepSpec:
    """Sweep definition; angles in radians, lengths in metres."""

    name: str
    varied: str
    values: tuple
    fixed_position_std: float = 0.25
    fixed_heading_std: float = math.radians(0.5)
    modes: tuple = MODES
    offsets: tuple = (50.0, -50.0, -150.0)
    sender_pose: Pose2 = Pose2(100.0, 100.0, 0.0)
    receiver_y: float = 75.0
    v2i_position_std: float = 0.005
    v2i_heading_std: float = 1e-4
    n_objects: int = 20
    spacing: float = 5.0
    first: float = 5.0
    object_std: tuple = (0.5, 0.5, math.radians(6.0))
    mc_samples: int = 1_000_000
    seed: int = 0
    mass: float = 0.95

    def __post_init__(self):
        if self.varied not in VARIED:
            raise InvalidArgumentError(f"varied must be one of {VARIED}")
        if len(self.values) == 0:
            raise InvalidArgumentError("sweep values must not be empty")
        if any(not (v >= 0 and math.isfinite(v)) for v in self.values):
            raise InvalidArgumentError("sweep values must be finite and non-negative")
        if not self.modes or any(m not in MODES for m in self.modes):
            raise InvalidArgumentError(f"modes must be a non-empty subset of {MODES}")
        if not self.offsets:
            raise InvalidArgumentError("offsets must not be empty")
        if self.n_objects < 1 or self.mc_samples < 1:
            raise InvalidArgumentError("n_objects and mc_samples must be >= 1")

    def receiver_std(self, value: float):
        """``(position std, heading std)`` of the receiver for one sweep value."""
        if self.varied == "heading_std":
            return self.fixed_position_std, value
        return value, self.fixed_heading_std

    def receiver(self, value: float, offset: float) -> GaussianPose2:
        sp, sh = self.receiver_std(value)
        return GaussianPose2.from_std(self.sender_pose.x - offset, self.receiver_y, 0.0, sp, sp, sh)

    def sender(self, mode: str, value: float) -> GaussianPose2:
        s = self.sender_pose
        if mode == "V2V":
            sp, sh = self.receiver_std(value)
        else:
            sp, sh = self.v2i_position_std, self.v2i_heading_std
        return GaussianPose2.from_std(s.x, s.y, s.theta, sp, sp, sh)

    def objects(self) -> list:
        sx, sy, sth = self.object_std
        return [GaussianPose2.from_std(self.first + k * self.spacing, 0.0, 0.0, sx, sy, sth)
                for k in range(self.n_objects)]

    def combos(self):
        for mi, mode in enumerate(self.modes):
            for vi, value in enumerate(self.values):
                for oi, offset in enumerate(self.offsets):
                    yield (mi, vi, oi), mode, value, offset


@dataclass(frozen=True, eq=False)
class SweepRecord:
    mode: str
    value: float
    offset: float
    object_index: int
    object_in_sender: Pose2
    transformed: GaussianPose2
    ellipse: ConfidenceEllipse
    mc_mean: np.ndarray | None = None
    mc_cov: np.ndarray | None = None

    @property
    def receiver_range(self) -> float:
        return math.hypot(self.transformed.mean.x, self.transformed.mean.y)

    @property
    def sender_range(self) -> float:
        return math.hypot(self.object_in_sender.x, self.object_in_sender.y)


@dataclass(frozen=True, eq=False)
class SweepResult:
    spec: SweepSpec
    records: tuple
    sender_ellipses: dict = field(default_factory=dict)

    def select(self, mode: str, value: float, offset: float) -> list:
        return [r for r in self.records if r.mode == mode and r.value == value and r.offset == offset]


def thread_count(default: int = 1) -> int:
    raw = os.environ.get("COOPSENSE_THREADS")
    if not raw:
        return default
    try:
        n = int(raw)
    except ValueError as exc:
        raise InvalidArgumentError(f"COOPSENSE_THREADS must be an integer, got {raw!r}") from exc
    return max(1, n)


def combo_seed(base: int, key) -> np.random.SeedSequence:
    return np.random.SeedSequence([base, *key])


def _run_combo(spec: SweepSpec, key, mode, value, offset, monte_carlo: bool, n_samples: int):
    recv = spec.receiver(value, offset)
    send = spec.sender(mode, value)
    objs = spec.objects()
    out = [transform_with_uncertainty(recv, send, o) for o in objs]
    mc = [(None, None)] * len(objs)
    if monte_carlo:
        seed = combo_seed(spec.seed, key).generate_state(1)[0]
        mc = monte_carlo_batch(recv, send, objs, n_samples, int(seed))
    records = []
    for i, (o, g, (mm, mcov)) in enumerate(zip(objs, out, mc)):
        el = confidence_ellipse(g.position_cov, (g.mean.x, g.mean.y), spec.mass)
        records.append(SweepRecord(mode, value, offset, i, o.mean, g, el, mm, mcov))
    # the sending station itself, seen from the receiver
    origin = GaussianPose2(Pose2(0.0, 0.0, 0.0), np.zeros((3, 3)))
    sg = transform_with_uncertainty(recv, send, origin)
    return key, records, confidence_ellipse(sg.position_cov, (sg.mean.x, sg.mean.y), spec.mass)


def run_sweep(spec: SweepSpec, monte_carlo: bool = True, n_samples: int | None = None,
              threads: int | None = None) -> SweepResult:
    """Transform every object for every combination; optionally add sampled references."""
    n = spec.mc_samples if n_samples is None else n_samples
    if n < 1:
        raise InvalidArgumentError("n_samples must be >= 1")
    jobs = list(spec.combos())
    workers = thread_count() if threads is None else max(1, threads)
    if workers == 1:
        results = [_run_combo(spec, k, m, v, o, monte_carlo, n) for k, m, v, o in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda j: _run_combo(spec, *j, monte_carlo, n), jobs))
    results.sort(key=lambda r: r[0])
    records = tuple(rec for _, recs, _ in results for rec in recs)
    senders = {(spec.modes[k[0]], spec.values[k[1]], spec.offsets[k[2]]): el for k, _, el in results}
    return SweepResult(spec, records, senders)


# --- file format ------------------------------------------------------------------

_SWEEP_FIELDS = {"version", "name", "varied", "values", "fixed", "modes", "offsets", "sender", "receiver_y",
                 "v2i_sender_std", "objects", "monte_carlo", "mass"}


def parse_sweep(doc: Node) -> SweepSpec:
    doc.mapping(_SWEEP_FIELDS)
    if doc.has("version") and doc.req("version").integer() != 1:
        raise doc.req("version").error("unsupported sweep file version")
    varied = doc.req("varied").string(VARIED)
    values_node = doc.req("values")
    raw = [v.number(0.0) for v in values_node.items()]
    if not raw:
        raise values_node.error("values must not be empty")
    values = tuple(math.radians(v) for v in raw) if varied == "heading_std" else tuple(raw)
    kw = {}
    if (fixed := doc.opt("fixed")) is not None:
        fixed.mapping({"position_std", "heading_std_deg"})
        if (p := fixed.opt("position_std")) is not None:
            kw["fixed_position_std"] = p.number(0.0)
        if (h := fixed.opt("heading_std_deg")) is not None:
            kw["fixed_heading_std"] = math.radians(h.number(0.0))
    if (m := doc.opt("modes")) is not None:
        kw["modes"] = tuple(i.string(MODES) for i in m.items())
        if not kw["modes"]:
            raise m.error("modes must not be empty")
    if (o := doc.opt("offsets")) is not None:
        kw["offsets"] = tuple(i.number() for i in o.items())
        if not kw["offsets"]:
            raise o.error("offsets must not be empty")
    if (s := doc.opt("sender")) is not None:
        s.mapping({"pose"})
        x, y, h = s.req("pose").vector(3)
        kw["sender_pose"] = Pose2(x, y, math.radians(h))
    if (r := doc.opt("receiver_y")) is not None:
        kw["receiver_y"] = r.number()
    if (v := doc.opt("v2i_sender_std")) is not None:
        v.mapping({"position", "heading_rad"})
        if (p := v.opt("position")) is not None:
            kw["v2i_position_std"] = p.number(0.0)
        if (h := v.opt("heading_rad")) is not None:
            kw["v2i_heading_std"] = h.number(0.0)
    if (ob := doc.opt("objects")) is not None:
        ob.mapping({"count", "spacing", "first", "std"})
        if (c := ob.opt("count")) is not None:
            kw["n_objects"] = c.integer(1, 10_000)
        if (c := ob.opt("spacing")) is not None:
            kw["spacing"] = c.number()
        if (c := ob.opt("first")) is not None:
            kw["first"] = c.number()
        if (c := ob.opt("std")) is not None:
            sx, sy, sh = c.vector(3, lo=0.0)
            kw["object_std"] = (sx, sy, math.radians(sh))
    if (mc := doc.opt("monte_carlo")) is not None:
        mc.mapping({"samples", "seed"})
        if (c := mc.opt("samples")) is not None:
            kw["mc_samples"] = c.integer(1)
        if (c := mc.opt("seed")) is not None:
            kw["seed"] = c.integer(0)
    if (c := doc.opt("mass")) is not None:
        kw["mass"] = c.number(0.0, 1.0, lo_open=True)
        if kw["mass"] >= 1.0:
            raise c.error("mass must be < 1")
    name = doc.req("name").string() if doc.has("name") else Path(doc.source).stem
    try:
        return SweepSpec(name, varied, values, **kw)
    except InvalidArgumentError as exc:
        raise SchemaError(str(exc), doc.source) from exc


def load_sweep(path) -> SweepSpec:
    return parse_sweep(load_document(Path(path)))
