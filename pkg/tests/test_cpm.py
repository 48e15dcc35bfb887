import math
import random

import numpy as np
import pytest
from hypothesis import given, settings

from coopsense import cpm
from coopsense.cpm import (
    BadMagicError,
    Cpm,
    CpmCapacityError,
    CpmDecodeError,
    CpmManagement,
    CountLimitError,
    InvalidFieldError,
    ObjectClass,
    PerceivedObject,
    StationType,
    TrailingBytesError,
    TruncatedError,
    UnsupportedVersionError,
    decode,
    encode,
    quantize,
    quantize_confidence,
)
from coopsense.geometry import GaussianPose2, Pose2

from .strategies import cpms


def minimal_cpm():
    ref = GaussianPose2.from_std(100.0, 100.0, 0.0, 0.005, 0.005, 1e-4)
    return Cpm(CpmManagement(7, StationType.IRSU, 1_600_000_000_000, ref))


def one_object(i=0):
    return PerceivedObject(i, ObjectClass.PEDESTRIAN, GaussianPose2.from_std(5.0, 1.0, 0.2, 0.5, 0.5, 0.1), 1.4, 0.2)


@pytest.mark.parametrize(
    "std, kind, code",
    [
        (0.005, "position", 1),
        (0.0037, "position", 1),
        (0.0, "position", 1),
        (0.0051, "position", 2),
        (0.015, "position", 3),
        (math.radians(0.5), "heading", 10),
        (math.radians(0.05), "heading", 1),
        (1e9, "position", 65535),
    ],
)
def test_quantize_confidence(std, kind, code):
    assert quantize_confidence(std, kind) == code


@pytest.mark.parametrize("kind", ["position", "heading"])
def test_quantize_confidence_never_under_reports(kind):
    rng = np.random.default_rng(0)
    for std in rng.uniform(0, 2.0, 2000):
        code = quantize_confidence(std, kind)
        assert cpm.dequantize_confidence(code, kind) >= std
        if code > 1:
            assert cpm.dequantize_confidence(code - 1, kind) < std


def test_minimal_message_is_47_bytes():
    # 4+1+4+1+8+8+8+2+2+2+2+2 header, then three single-byte flags/counts
    assert cpm.MIN_MESSAGE_SIZE == 47
    data = encode(minimal_cpm())
    assert len(data) == 47
    assert data[:4] == b"CPM1"


def test_field_widths():
    base = len(encode(minimal_cpm()))
    with_obj = Cpm(minimal_cpm().management, objects=(one_object(),))
    assert len(encode(with_obj)) == base + 29


def test_roundtrip_example():
    msg = Cpm(minimal_cpm().management, objects=(one_object(0), one_object(1)))
    assert decode(encode(msg)) == quantize(msg)


def test_encode_is_deterministic():
    msg = Cpm(minimal_cpm().management, objects=(one_object(0),))
    assert encode(msg) == encode(msg)


def test_too_many_objects():
    objs = tuple(one_object(i) for i in range(256))
    with pytest.raises(CpmCapacityError):
        Cpm(minimal_cpm().management, objects=objs)
    Cpm(minimal_cpm().management, objects=objs[:255])


def test_too_many_sensors_on_wire():
    data = bytearray(encode(minimal_cpm()))
    data[45] = 11  # sensor count byte
    with pytest.raises(CountLimitError) as exc:
        decode(bytes(data))
    assert exc.value.offset == 45


def test_truncated_objects():
    data = bytearray(encode(minimal_cpm()))
    data[-1] = 3
    with pytest.raises(TruncatedError) as exc:
        decode(bytes(data))
    assert exc.value.offset == 47


def test_bad_magic():
    data = bytearray(encode(minimal_cpm()))
    data[0] = ord("X")
    with pytest.raises(BadMagicError) as exc:
        decode(bytes(data))
    assert exc.value.offset == 0


def test_bad_version():
    data = bytearray(encode(minimal_cpm()))
    data[4] = 2
    with pytest.raises(UnsupportedVersionError) as exc:
        decode(bytes(data))
    assert exc.value.offset == 4


def test_trailing_bytes():
    with pytest.raises(TrailingBytesError) as exc:
        decode(encode(minimal_cpm()) + b"\x00")
    assert exc.value.offset == 47


def test_invalid_enum_names_container_offset():
    msg = Cpm(minimal_cpm().management, objects=(one_object(),))
    data = bytearray(encode(msg))
    data[47 + 2] = 9  # object class
    with pytest.raises(InvalidFieldError) as exc:
        decode(bytes(data))
    assert exc.value.offset == 47


def test_decoded_position_heading_cross_terms_are_zero():
    cov = np.array([[0.25, 0.05, 0.01], [0.05, 0.3, 0.02], [0.01, 0.02, 0.01]])
    obj = PerceivedObject(1, ObjectClass.CAR, GaussianPose2(Pose2(1, 2, 0), cov))
    out = decode(encode(Cpm(minimal_cpm().management, objects=(obj,))))
    c = out.objects[0].pose.cov
    assert c[0, 2] == c[1, 2] == c[2, 0] == c[2, 1] == 0.0
    assert c[0, 1] == pytest.approx(0.05, rel=1e-2)  # sigma_y rounds up to 0.55


@given(cpms)
@settings(max_examples=300, deadline=None)
def test_roundtrip_property(msg):
    data = encode(msg)
    back = decode(data)
    assert back == quantize(msg)
    assert encode(back) == data


@given(cpms)
@settings(max_examples=200, deadline=None)
def test_quantisation_is_conservative(msg):
    back = decode(encode(msg))
    for orig, q in zip(msg.objects, back.objects):
        for i in range(3):
            assert q.pose.cov[i, i] >= orig.pose.cov[i, i] or orig.pose.cov[i, i] > 327.675 ** 2
        assert q.speed_std >= orig.speed_std


def test_fuzz_small():
    rng = random.Random(1)
    seed_msg = encode(Cpm(minimal_cpm().management, objects=(one_object(0), one_object(1))))
    for i in range(20_000):
        if i % 2:
            buf = bytes(rng.getrandbits(8) for _ in range(rng.randrange(0, 120)))
        else:
            buf = bytearray(seed_msg)
            for _ in range(rng.randrange(1, 4)):
                buf[rng.randrange(len(buf))] = rng.getrandbits(8)
            buf = bytes(buf[: rng.randrange(len(buf) + 1)])
        try:
            decode(buf)
        except CpmDecodeError:
            pass
