"""``coopsense`` command line: transforms, sweeps, scenarios and message inspection.

Exit codes: 0 success, 2 input or schema error, 3 message decode error.
Angles on the command line and in files are in degrees.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, data_path
from .cpm import CpmDecodeError, decode, encode
from .geometry import GaussianPose2, InvalidArgumentError, NumericDomainError, Pose2, transform_with_uncertainty

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CODEC = 3

log = logging.getLogger("coopsense")


class InputError(Exception):
    """Bad user input; reported with exit code 2."""


# --- helpers ------------------------------------------------------------------------

def _write(out: Path, name: str, text: str) -> Path:
    path = out / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    log.info("wrote %s", path)
    return path


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc.strerror}") from exc
    return out


def _wants(args, kind: str) -> bool:
    return args.format in (kind, "both")


def _mass(value: str) -> float:
    m = float(value)
    if not 0.0 < m < 1.0:
        raise argparse.ArgumentTypeError("mass must lie strictly between 0 and 1")
    return m


def _gaussian(name: str, pose, std, cov) -> GaussianPose2:
    """Pose in degrees plus either three deviations or a 3x3 covariance (heading terms in degrees)."""
    x, y, h = pose
    if cov is not None:
        c = np.asarray(cov, dtype=float).reshape(3, 3)
        scale = np.array([1.0, 1.0, math.pi / 180.0])
        c = c * np.outer(scale, scale)
    else:
        sx, sy, sh = std if std is not None else (0.0, 0.0, 0.0)
        if min(sx, sy, sh) < 0:
            raise InputError(f"{name} standard deviations must be >= 0")
        c = np.diag([sx * sx, sy * sy, math.radians(sh) ** 2])
    try:
        return GaussianPose2(Pose2(x, y, math.radians(h)), c)
    except (InvalidArgumentError, NumericDomainError) as exc:
        raise InputError(f"{name} covariance: {exc}") from exc


def _load_transform_file(path: Path) -> dict:
    from .sim.schema import load_document

    doc = load_document(path).mapping({"receiver", "sender", "object"})
    out = {}
    for key in ("receiver", "sender", "object"):
        n = doc.req(key).mapping({"pose", "std", "cov"})
        cov = None
        if n.has("cov"):
            cov = [c.vector(3) for c in n.req("cov").items()]
            if len(cov) != 3:
                raise n.req("cov").error("expected a 3x3 matrix")
        std = n.req("std").vector(3, lo=0.0) if n.has("std") else None
        out[key] = (n.req("pose").vector(3), std, cov)
    return out


# --- subcommands --------------------------------------------------------------------

def cmd_transform(args) -> int:
    from .plotting import ellipse_figure
    from .reports import transform_csv
    from .geometry import confidence_ellipse

    if args.file:
        spec = _load_transform_file(Path(args.file))
    else:
        missing = [k for k in ("receiver", "sender", "object") if getattr(args, k) is None]
        if missing:
            raise InputError(f"missing --{' --'.join(missing)} (or give --file)")
        spec = {k: (getattr(args, k), getattr(args, f"{k}_std"), getattr(args, f"{k}_cov"))
                for k in ("receiver", "sender", "object")}
    g = {k: _gaussian(k, *v) for k, v in spec.items()}
    out = transform_with_uncertainty(g["receiver"], g["sender"], g["object"])
    m, c = out.mean, out.cov
    mass = args.mass or 0.95
    el = confidence_ellipse(out.position_cov, (m.x, m.y), mass)
    print(f"mean: x={m.x:.6f} m  y={m.y:.6f} m  heading={math.degrees(m.theta):.6f} deg")
    print("covariance (x [m], y [m], heading [rad]):")
    for row in c:
        print("  " + "  ".join(f"{v: .6e}" for v in row))
    print(f"{mass:g} ellipse: semi-major={el.semi_major:.6f} m  semi-minor={el.semi_minor:.6f} m  "
          f"orientation={math.degrees(el.orientation):.3f} deg")
    if args.out:
        out_dir = _out_dir(args)
        if _wants(args, "csv"):
            _write(out_dir, "transform.csv", transform_csv(out, mass))
        if _wants(args, "svg"):
            _write(out_dir, "transform.svg", ellipse_figure([el], "object in receiver frame", args.grid,
                                                            [(0.0, 0.0, "receiver")]))
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .plotting import sweep_figures
    from .reports import sweep_csv
    from .sim.sweep import load_sweep, run_sweep

    path = _resolve(args.sweep, "", ".sweep")
    spec = load_sweep(path)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    if args.mass is not None:
        spec = replace(spec, mass=args.mass)
    n = args.samples if args.samples is not None else spec.mc_samples
    result = run_sweep(spec, monte_carlo=n > 0, n_samples=max(n, 1))
    out = _out_dir(args)
    if _wants(args, "csv"):
        _write(out, f"{spec.name}.csv", sweep_csv(result))
    if _wants(args, "svg"):
        for name, svg in sweep_figures(result, args.grid).items():
            _write(out, f"{spec.name}/{name}", svg)
    print(f"{spec.name}: {len(result.records)} records, {len(result.sender_ellipses)} combinations -> {out}")
    return EXIT_OK


def _resolve(name: str, folder: str, suffix: str) -> Path:
    """A path on disk, or the name of a bundled file."""
    p = Path(name)
    if p.exists():
        return p
    bundled = data_path(*(f for f in (folder, p.name if p.suffix else p.name + suffix) if f))
    if bundled.is_file():
        return Path(str(bundled))
    raise InputError(f"no such file or bundled preset: {name}")


def cmd_scenario(args) -> int:
    from .plotting import scenario_figure
    from .reports import scenario_csv, scenario_jsonl
    from .sim.engine import run_scenario
    from .sim.scenario import load_scenario

    sc = load_scenario(_resolve(args.scenario, "scenarios", ".yaml"))
    if args.seed is not None:
        sc = replace(sc, seed=args.seed)
    lg = run_scenario(sc)
    out = _out_dir(args)
    if _wants(args, "csv"):
        _write(out, f"{sc.name}.csv", scenario_csv(lg))
    if _wants(args, "svg"):
        _write(out, f"{sc.name}.svg", scenario_figure(lg, mass=args.mass or 0.95, grid=args.grid))
    if args.jsonl:
        _write(out, f"{sc.name}.jsonl", scenario_jsonl(lg))
    counts = {}
    for d in lg.decisions():
        if d is not None:
            counts[d.value] = counts.get(d.value, 0) + 1
    summary = ", ".join(f"{k}={v}" for k, v in sorted(counts.items())) or "no planning"
    print(f"{sc.name}: {len(lg.ticks)} ticks, {len(lg.messages)} messages, decisions: {summary}")
    return EXIT_OK


def _hexdump(data: bytes) -> str:
    lines = []
    for off in range(0, len(data), 16):
        chunk = data[off:off + 16]
        lines.append(f"{off:08x}  {chunk.hex(' '):<47}  {''.join(chr(b) if 32 <= b < 127 else '.' for b in chunk)}")
    return "\n".join(lines)


def describe(msg) -> str:
    """Readable multi-line summary of a decoded message."""
    m = msg.management
    r = m.reference_position
    sd = np.sqrt(np.diag(r.cov))
    lines = [
        f"station {m.station_id} ({m.station_type.name}) generated at {m.generation_time} ms",
        f"  reference pose: x={r.mean.x:.3f} m y={r.mean.y:.3f} m heading={math.degrees(r.mean.theta):.2f} deg"
        f"  std=({sd[0]:.3f} m, {sd[1]:.3f} m, {math.degrees(sd[2]):.2f} deg)",
    ]
    if msg.station_data is not None:
        s = msg.station_data
        lines.append(f"  station data: heading={math.degrees(s.heading):.2f} deg speed={s.speed:.3f} m/s "
                     f"size={s.length:.2f}x{s.width:.2f} m")
    for s in msg.sensors:
        lines.append(f"  sensor {s.sensor_id} {s.sensor_type.name}: range={s.range:.2f} m "
                     f"fov=[{math.degrees(s.fov_start):.2f}, {math.degrees(s.fov_end):.2f}] deg")
    for o in msg.objects:
        p = o.pose
        sd = np.sqrt(np.diag(p.cov))
        speed = "n/a" if not math.isfinite(o.speed_std) else f"{o.speed:.3f}+-{o.speed_std:.3f} m/s"
        lines.append(f"  object {o.object_id} {o.object_class.name}: x={p.mean.x:.3f} y={p.mean.y:.3f} "
                     f"heading={math.degrees(p.mean.theta):.2f} deg std=({sd[0]:.3f}, {sd[1]:.3f}, "
                     f"{math.degrees(sd[2]):.2f} deg) speed={speed}")
    lines.append(f"  {len(msg.sensors)} sensor(s), {len(msg.objects)} object(s)")
    return "\n".join(lines)


def cmd_cpm(args) -> int:
    if args.hex is not None:
        try:
            data = bytes.fromhex(args.hex)
        except ValueError as exc:
            raise InputError(f"invalid hex string: {exc}") from exc
    else:
        p = Path(args.file)
        if not p.exists():
            bundled = data_path("cpm", p.name)
            if not bundled.is_file():
                raise InputError(f"no such file or bundled fixture: {args.file}")
            p = Path(str(bundled))
        try:
            data = p.read_bytes()
        except OSError as exc:
            raise InputError(f"cannot read {p}: {exc.strerror}") from exc
    print(f"{len(data)} bytes")
    print(_hexdump(data))
    try:
        msg = decode(data)
    except CpmDecodeError as exc:
        print(f"decode error: {exc}", file=sys.stderr)
        return EXIT_CODEC
    print(describe(msg))
    if args.check:
        again = encode(msg)
        if again != data or decode(again) != msg:
            print("roundtrip check FAILED: re-encoding differs", file=sys.stderr)
            return EXIT_CODEC
        print("roundtrip check passed")
    return EXIT_OK


# --- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # suppressed defaults let the option appear before or after the subcommand
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the seed of the input file")
    common.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS,
                        help="more logging (repeatable)")

    outputs = argparse.ArgumentParser(add_help=False)
    outputs.add_argument("--out", default="out", help="output directory (default: out)")
    outputs.add_argument("--format", choices=("csv", "svg", "both"), default="both")
    outputs.add_argument("--mass", type=_mass, default=None, help="ellipse probability mass (default 0.95)")
    outputs.add_argument("--grid", type=float, default=10.0, help="figure grid spacing in metres")

    p = argparse.ArgumentParser(prog="coopsense", description=__doc__.splitlines()[0], parents=[common])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    t = sub.add_parser("transform", parents=[common, outputs], help="move one object between frames")
    t.set_defaults(out=None)
    t.add_argument("--file", help="YAML file with receiver/sender/object entries (pose, std or cov)")
    for k in ("receiver", "sender", "object"):
        t.add_argument(f"--{k}", nargs=3, type=float, metavar=("X", "Y", "DEG"))
        g = t.add_mutually_exclusive_group()
        g.add_argument(f"--{k}-std", nargs=3, type=float, metavar=("SX", "SY", "SDEG"))
        g.add_argument(f"--{k}-cov", nargs=9, type=float, metavar="C", help="row-major 3x3, heading in deg")
    t.set_defaults(func=cmd_transform)

    s = sub.add_parser("sweep", parents=[common, outputs], help="run a localisation-uncertainty sweep")
    s.add_argument("sweep", help="sweep file, or a bundled name (test1, test2)")
    s.add_argument("--samples", type=int, default=None,
                   help="sampling reference size per object (0 disables; default from the file)")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("scenario", parents=[common, outputs], help="run a closed-loop scenario")
    c.add_argument("scenario", help="scenario file, or a bundled preset name")
    c.add_argument("--jsonl", action="store_true", help="also write one JSON record per tick")
    c.set_defaults(func=cmd_scenario)

    m = sub.add_parser("cpm", parents=[common], help="decode and inspect an encoded message")
    src = m.add_mutually_exclusive_group(required=True)
    src.add_argument("file", nargs="?", help="binary message file, or a bundled fixture name")
    src.add_argument("--hex", help="message bytes as a hex string")
    m.add_argument("--check", action="store_true", help="verify that re-encoding reproduces the input")
    m.set_defaults(func=cmd_cpm)
    return p


def main(argv=None) -> int:
    from .sim.schema import SchemaError

    parser = build_parser()
    args = parser.parse_args(argv)
    args.seed = getattr(args, "seed", None)
    args.verbose = getattr(args, "verbose", 0)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InputError, InvalidArgumentError, NumericDomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
