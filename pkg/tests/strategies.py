"""Hypothesis strategies shared by the codec tests."""

import math

import numpy as np
from hypothesis import strategies as st

from coopsense.cpm import (
    Cpm,
    CpmManagement,
    ObjectClass,
    PerceivedObject,
    SensorInformation,
    SensorType,
    StationData,
    StationType,
)
from coopsense.geometry import GaussianPose2, Pose2

angle = st.floats(-math.pi, math.pi, allow_nan=False)
pos_std = st.floats(0.0, 300.0, allow_nan=False)
head_std = st.floats(0.0, 0.5, allow_nan=False)
rho = st.floats(-1.0, 1.0, allow_nan=False)


@st.composite
def gaussian_pose(draw, extent):
    x = draw(st.floats(-extent, extent, allow_nan=False))
    y = draw(st.floats(-extent, extent, allow_nan=False))
    sx, sy, r, sth = draw(pos_std), draw(pos_std), draw(rho), draw(head_std)
    cov = np.array([[sx * sx, r * sx * sy, 0.0], [r * sx * sy, sy * sy, 0.0], [0.0, 0.0, sth * sth]])
    return GaussianPose2(Pose2(x, y, draw(angle)), cov)


station_data = st.builds(
    StationData, angle, st.floats(0, 65.0), st.floats(0.01, 600.0), st.floats(0.01, 600.0)
)

sensor = st.builds(
    SensorInformation,
    st.integers(0, 255),
    st.sampled_from(list(SensorType)),
    st.floats(0.01, 40_000_000.0),
    angle,
    angle,
)

perceived_object = st.builds(
    PerceivedObject,
    st.integers(0, 0xFFFF),
    st.sampled_from(list(ObjectClass)),
    gaussian_pose(2_000_000.0),
    st.floats(0.0, 65.0),
    st.one_of(st.floats(0.0, 65.0), st.just(math.inf)),
    st.floats(0.0, 600.0),
    st.floats(0.0, 600.0),
)

management = st.builds(
    CpmManagement,
    st.integers(0, 0xFFFFFFFF),
    st.sampled_from(list(StationType)),
    st.integers(0, 2 ** 63),
    gaussian_pose(2_000_000_000.0),
)

cpms = st.builds(
    Cpm,
    management,
    st.one_of(st.none(), station_data),
    st.lists(sensor, max_size=10).map(tuple),
    st.lists(perceived_object, max_size=12).map(tuple),
)
