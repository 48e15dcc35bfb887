"""CPM-style message model and its binary codec.

The message mirrors the four ETSI container kinds (management, optional
station data, up to 10 sensor descriptions, up to 255 perceived objects) but
uses a fixed little-endian layout instead of ASN.1 UPER::

    magic "CPM1" | version u8 | station_id u32 | station_type u8 | generation_time_ms u64
    ref_x_mm i64 | ref_y_mm i64 | ref_heading_cdeg u16
    ref_sigma_x u16 | ref_sigma_y u16 | ref_rho_xy i16 | ref_sigma_theta u16
    station_data_present u8 | [heading_cdeg u16 | speed_mm_s u16 | length_cm u16 | width_cm u16]
    sensor_count u8 | sensor_count * (id u8 | type u8 | range_cm u32 | fov_start_cdeg u16 | fov_end_cdeg u16)
    object_count u8 | object_count * (id u16 | class u8 | x_mm i32 | y_mm i32 | heading_cdeg u16
                                     | sigma_x u16 | sigma_y u16 | rho_xy i16 | sigma_theta u16
                                     | speed_mm_s u16 | speed_sigma_mm_s u16 | length_cm u16 | width_cm u16)

Standard deviations travel as confidence codes (multiples of 0.005 m or
0.05 deg, always rounded up); correlations as ``round(rho * 32767)``.
Position/heading cross terms are not carried.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np

from .geometry import GaussianPose2, Pose2, wrap_angle

__all__ = [
    "MAGIC", "VERSION", "MAX_SENSORS", "MAX_OBJECTS", "MIN_MESSAGE_SIZE",
    "POSITION_STEP", "HEADING_STEP", "SPEED_SIGMA_UNAVAILABLE",
    "StationType", "SensorType", "ObjectClass",
    "CpmManagement", "StationData", "SensorInformation", "PerceivedObject", "Cpm",
    "CpmError", "CpmCapacityError", "CpmValueError",
    "CpmDecodeError", "BadMagicError", "UnsupportedVersionError", "TruncatedError",
    "CountLimitError", "InvalidFieldError", "TrailingBytesError",
    "quantize_confidence", "dequantize_confidence", "quantize", "encode", "decode",
]

MAGIC = b"CPM1"
VERSION = 1
MAX_SENSORS = 10
MAX_OBJECTS = 255

POSITION_STEP = 0.005  # m per confidence code
HEADING_STEP = math.radians(0.05)  # rad per confidence code
SPEED_SIGMA_STEP = 0.001
SPEED_SIGMA_UNAVAILABLE = 0xFFFF
RHO_SCALE = 32767

_HEADER = struct.Struct("<4sBIBQqqHHHhH")
_STATION = struct.Struct("<HHHH")
_SENSOR = struct.Struct("<BBIHH")
_OBJECT = struct.Struct("<HBiiHHHhHHHHH")
_U8 = struct.Struct("<B")

MIN_MESSAGE_SIZE = _HEADER.size + 3


class StationType(IntEnum):
    IRSU = 0
    VEHICLE = 1


class SensorType(IntEnum):
    CAMERA = 0
    LIDAR = 1
    FUSED = 2


class ObjectClass(IntEnum):
    UNKNOWN = 0
    PEDESTRIAN = 1
    CAR = 2
    CYCLIST = 3


class CpmError(Exception):
    pass


class CpmCapacityError(CpmError, ValueError):
    pass


class CpmValueError(CpmError, ValueError):
    pass


class CpmDecodeError(CpmError):
    """Base for decode failures; ``offset`` is the byte position at fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class BadMagicError(CpmDecodeError):
    pass


class UnsupportedVersionError(CpmDecodeError):
    pass


class TruncatedError(CpmDecodeError):
    pass


class CountLimitError(CpmDecodeError):
    pass


class InvalidFieldError(CpmDecodeError):
    pass


class TrailingBytesError(CpmDecodeError):
    pass


# --- containers -----------------------------------------------------------

@dataclass(frozen=True)
class CpmManagement:
    station_id: int
    station_type: StationType
    generation_time: int  # ms since epoch
    reference_position: GaussianPose2

    def __post_init__(self):
        object.__setattr__(self, "station_type", StationType(self.station_type))
        if not 0 <= int(self.station_id) <= 0xFFFFFFFF:
            raise CpmValueError(f"station_id out of u32 range: {self.station_id}")
        if not 0 <= int(self.generation_time) <= 0xFFFFFFFFFFFFFFFF:
            raise CpmValueError(f"generation_time out of u64 range: {self.generation_time}")


@dataclass(frozen=True)
class StationData:
    heading: float
    speed: float
    length: float
    width: float

    def __post_init__(self):
        if not self.speed >= 0:
            raise CpmValueError(f"station speed must be >= 0, got {self.speed}")
        if not (self.length > 0 and self.width > 0):
            raise CpmValueError("station length and width must be > 0")


@dataclass(frozen=True)
class SensorInformation:
    sensor_id: int
    sensor_type: SensorType
    range: float
    fov_start: float
    fov_end: float

    def __post_init__(self):
        object.__setattr__(self, "sensor_type", SensorType(self.sensor_type))
        if not self.range > 0:
            raise CpmValueError(f"sensor range must be > 0, got {self.range}")

    def covers(self, x: float, y: float) -> bool:
        """True when the station-frame point lies inside range and field of view."""
        if math.hypot(x, y) > self.range:
            return False
        span = (self.fov_end - self.fov_start) % (2 * math.pi)
        if span == 0.0:
            return True
        return (math.atan2(y, x) - self.fov_start) % (2 * math.pi) <= span


@dataclass(frozen=True)
class PerceivedObject:
    object_id: int
    object_class: ObjectClass
    pose: GaussianPose2  # in the originating station's frame
    speed: float = 0.0
    speed_std: float = math.inf
    length: float = 0.0
    width: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "object_class", ObjectClass(self.object_class))
        if self.speed < 0:
            raise CpmValueError(f"object speed must be >= 0, got {self.speed}")
        if not self.speed_std >= 0:
            raise CpmValueError("speed_std must be >= 0")
        if self.length < 0 or self.width < 0:
            raise CpmValueError("object dimensions must be >= 0")


@dataclass(frozen=True)
class Cpm:
    management: CpmManagement
    station_data: StationData | None = None
    sensors: tuple = field(default_factory=tuple)
    objects: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "sensors", tuple(self.sensors))
        object.__setattr__(self, "objects", tuple(self.objects))
        if len(self.sensors) > MAX_SENSORS:
            raise CpmCapacityError(f"{len(self.sensors)} sensor containers exceed the limit of {MAX_SENSORS}")
        if len(self.objects) > MAX_OBJECTS:
            raise CpmCapacityError(f"{len(self.objects)} perceived objects exceed the limit of {MAX_OBJECTS}")


# --- field quantisers --------------------------------------------------------

def quantize_confidence(std_dev: float, kind: str = "position") -> int:
    """Confidence code for a standard deviation, rounded up.

    ``kind`` is ``"position"`` (0.005 m steps) or ``"heading"`` (0.05 deg
    steps, input in radians).  Codes are clamped to ``[1, 65535]``.
    """
    step = _step(kind)
    return _ceil_code(std_dev, step, 1, 0xFFFF)


def dequantize_confidence(code: int, kind: str = "position") -> float:
    return code * _step(kind)


def _step(kind: str) -> float:
    if kind == "position":
        return POSITION_STEP
    if kind == "heading":
        return HEADING_STEP
    raise ValueError(f"unknown confidence kind {kind!r}")


def _ceil_code(value: float, step: float, lo: int, hi: int) -> int:
    if not value >= 0:
        raise CpmValueError(f"standard deviation must be >= 0, got {value}")
    if value >= hi * step:
        return hi
    code = max(lo, math.ceil(value / step))
    # make code * step the smallest representable value >= value
    while code > lo and (code - 1) * step >= value:
        code -= 1
    while code * step < value:
        code += 1
    return min(code, hi)


def _mm(v: float, bits: int, what: str) -> int:
    q = round(v * 1000.0)
    lim = 1 << (bits - 1)
    if not -lim <= q < lim:
        raise CpmValueError(f"{what} {v} m does not fit an i{bits} millimetre field")
    return q


def _unsigned(v: float, scale: float, bits: int, what: str) -> int:
    q = round(v * scale)
    if not 0 <= q < (1 << bits):
        raise CpmValueError(f"{what} {v} does not fit a u{bits} field")
    return q


def _cdeg(theta: float) -> int:
    return round(math.degrees(wrap_angle(theta)) * 100.0) % 36000


def _from_cdeg(code: int) -> float:
    if code >= 36000:
        raise ValueError(f"angle code {code} outside [0, 36000)")
    return wrap_angle(math.radians(code / 100.0))


def _cov_codes(cov: np.ndarray) -> tuple[int, int, int, int]:
    sx = math.sqrt(max(cov[0, 0], 0.0))
    sy = math.sqrt(max(cov[1, 1], 0.0))
    st = math.sqrt(max(cov[2, 2], 0.0))
    rho = cov[0, 1] / (sx * sy) if sx > 0 and sy > 0 else 0.0
    rho_code = max(-RHO_SCALE, min(RHO_SCALE, round(rho * RHO_SCALE)))
    return (quantize_confidence(sx, "position"), quantize_confidence(sy, "position"),
            rho_code, quantize_confidence(st, "heading"))


def _cov_from_codes(csx: int, csy: int, crho: int, cst: int) -> np.ndarray:
    sx = csx * POSITION_STEP
    sy = csy * POSITION_STEP
    st = cst * HEADING_STEP
    cxy = (crho / RHO_SCALE) * sx * sy
    return np.array([[sx * sx, cxy, 0.0], [cxy, sy * sy, 0.0], [0.0, 0.0, st * st]])


def _speed_sigma_code(v: float) -> int:
    if v >= SPEED_SIGMA_UNAVAILABLE * SPEED_SIGMA_STEP:
        return SPEED_SIGMA_UNAVAILABLE
    return _ceil_code(v, SPEED_SIGMA_STEP, 0, SPEED_SIGMA_UNAVAILABLE - 1)


def _speed_sigma(code: int) -> float:
    return math.inf if code == SPEED_SIGMA_UNAVAILABLE else code * SPEED_SIGMA_STEP


# --- records <-> python values ------------------------------------------------

def _header_fields(cpm: Cpm) -> tuple:
    m = cpm.management
    ref = m.reference_position
    return (MAGIC, VERSION, int(m.station_id), int(m.station_type), int(m.generation_time),
            _mm(ref.mean.x, 64, "reference x"), _mm(ref.mean.y, 64, "reference y"),
            _cdeg(ref.mean.theta), *_cov_codes(ref.cov))


def _station_fields(sd: StationData) -> tuple:
    return (_cdeg(sd.heading), _unsigned(sd.speed, 1000.0, 16, "station speed"),
            _unsigned(sd.length, 100.0, 16, "station length"), _unsigned(sd.width, 100.0, 16, "station width"))


def _sensor_fields(s: SensorInformation) -> tuple:
    if not 0 <= s.sensor_id <= 0xFF:
        raise CpmValueError(f"sensor id {s.sensor_id} does not fit u8")
    return (int(s.sensor_id), int(s.sensor_type), _unsigned(s.range, 100.0, 32, "sensor range"),
            _cdeg(s.fov_start), _cdeg(s.fov_end))


def _object_fields(o: PerceivedObject) -> tuple:
    if not 0 <= o.object_id <= 0xFFFF:
        raise CpmValueError(f"object id {o.object_id} does not fit u16")
    p = o.pose
    return (int(o.object_id), int(o.object_class), _mm(p.mean.x, 32, "object x"), _mm(p.mean.y, 32, "object y"),
            _cdeg(p.mean.theta), *_cov_codes(p.cov), _unsigned(o.speed, 1000.0, 16, "object speed"),
            _speed_sigma_code(o.speed_std), _unsigned(o.length, 100.0, 16, "object length"),
            _unsigned(o.width, 100.0, 16, "object width"))


def _management_from(f: tuple) -> CpmManagement:
    _, _, sid, stype, gen, x, y, hd, csx, csy, crho, cst = f
    ref = GaussianPose2(Pose2(x / 1000.0, y / 1000.0, _from_cdeg(hd)), _cov_from_codes(csx, csy, crho, cst))
    return CpmManagement(sid, StationType(stype), gen, ref)


def _station_from(f: tuple) -> StationData:
    hd, spd, ln, wd = f
    return StationData(_from_cdeg(hd), spd / 1000.0, ln / 100.0, wd / 100.0)


def _sensor_from(f: tuple) -> SensorInformation:
    sid, stype, rng, fs, fe = f
    return SensorInformation(sid, SensorType(stype), rng / 100.0, _from_cdeg(fs), _from_cdeg(fe))


def _object_from(f: tuple) -> PerceivedObject:
    oid, cls, x, y, hd, csx, csy, crho, cst, spd, sspd, ln, wd = f
    pose = GaussianPose2(Pose2(x / 1000.0, y / 1000.0, _from_cdeg(hd)), _cov_from_codes(csx, csy, crho, cst))
    return PerceivedObject(oid, ObjectClass(cls), pose, spd / 1000.0, _speed_sigma(sspd), ln / 100.0, wd / 100.0)


def quantize(cpm: Cpm) -> Cpm:
    """The message exactly as it reads back after a trip over the wire."""
    return Cpm(
        _management_from(_header_fields(cpm)),
        None if cpm.station_data is None else _station_from(_station_fields(cpm.station_data)),
        tuple(_sensor_from(_sensor_fields(s)) for s in cpm.sensors),
        tuple(_object_from(_object_fields(o)) for o in cpm.objects),
    )


# --- codec ------------------------------------------------------------------

def encode(cpm: Cpm) -> bytes:
    if len(cpm.sensors) > MAX_SENSORS:
        raise CpmCapacityError(f"{len(cpm.sensors)} sensor containers exceed the limit of {MAX_SENSORS}")
    if len(cpm.objects) > MAX_OBJECTS:
        raise CpmCapacityError(f"{len(cpm.objects)} perceived objects exceed the limit of {MAX_OBJECTS}")
    parts = [_HEADER.pack(*_header_fields(cpm))]
    if cpm.station_data is None:
        parts.append(b"\x00")
    else:
        parts.append(b"\x01" + _STATION.pack(*_station_fields(cpm.station_data)))
    parts.append(_U8.pack(len(cpm.sensors)))
    parts.extend(_SENSOR.pack(*_sensor_fields(s)) for s in cpm.sensors)
    parts.append(_U8.pack(len(cpm.objects)))
    parts.extend(_OBJECT.pack(*_object_fields(o)) for o in cpm.objects)
    return b"".join(parts)


def _need(buf, offset: int, size: int, what: str) -> None:
    if offset + size > len(buf):
        raise TruncatedError(f"truncated {what}: need {size} bytes, {len(buf) - offset} left", offset)


def _build(fn, fields, offset: int, what: str):
    try:
        return fn(fields)
    except (ValueError, ArithmeticError) as exc:  # enum range, container invariants
        raise InvalidFieldError(f"invalid {what}: {exc}", offset) from None


def decode(data) -> Cpm:
    """Parse a message; failures raise a :class:`CpmDecodeError` subclass."""
    buf = bytes(data)
    if len(buf) < len(MAGIC) or buf[:4] != MAGIC:
        if len(buf) < len(MAGIC) and MAGIC.startswith(buf):
            raise TruncatedError("truncated magic", len(buf))
        raise BadMagicError(f"bad magic {buf[:4]!r}", 0)
    if len(buf) < 5:
        raise TruncatedError("truncated version", 4)
    if buf[4] != VERSION:
        raise UnsupportedVersionError(f"unsupported version {buf[4]}", 4)
    _need(buf, 0, _HEADER.size, "management container")
    management = _build(_management_from, _HEADER.unpack_from(buf, 0), 0, "management container")
    off = _HEADER.size

    _need(buf, off, 1, "station data flag")
    flag = buf[off]
    off += 1
    station = None
    if flag == 1:
        _need(buf, off, _STATION.size, "station data container")
        station = _build(_station_from, _STATION.unpack_from(buf, off), off, "station data container")
        off += _STATION.size
    elif flag != 0:
        raise InvalidFieldError(f"station data flag must be 0 or 1, got {flag}", off - 1)

    _need(buf, off, 1, "sensor count")
    n_sensors = buf[off]
    if n_sensors > MAX_SENSORS:
        raise CountLimitError(f"sensor count {n_sensors} exceeds {MAX_SENSORS}", off)
    off += 1
    sensors = []
    for _ in range(n_sensors):
        _need(buf, off, _SENSOR.size, "sensor container")
        sensors.append(_build(_sensor_from, _SENSOR.unpack_from(buf, off), off, "sensor container"))
        off += _SENSOR.size

    _need(buf, off, 1, "object count")
    n_objects = buf[off]
    off += 1
    objects = []
    for _ in range(n_objects):
        _need(buf, off, _OBJECT.size, "perceived object container")
        objects.append(_build(_object_from, _OBJECT.unpack_from(buf, off), off, "perceived object container"))
        off += _OBJECT.size

    if off != len(buf):
        raise TrailingBytesError(f"{len(buf) - off} unexpected trailing bytes", off)
    return Cpm(management, station, tuple(sensors), tuple(objects))


def with_objects(cpm: Cpm, objects) -> Cpm:
    return replace(cpm, objects=tuple(objects))
