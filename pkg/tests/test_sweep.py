import math

import numpy as np
import pytest

from coopsense import data_path
from coopsense.geometry import GaussianPose2, Pose2, trans, transform_with_uncertainty
from coopsense.sim import (
    SchemaError,
    SweepSpec,
    load_document,
    load_sweep,
    monte_carlo_reference,
    parse_sweep,
    run_sweep,
)


@pytest.fixture(scope="module")
def test1():
    return load_sweep(data_path("test1.sweep"))


@pytest.fixture(scope="module")
def test1_result(test1):
    return run_sweep(test1, monte_carlo=False)


def test_bundled_sweeps_match_the_grid(test1):
    assert test1.varied == "heading_std"
    assert np.allclose(np.degrees(test1.values), [0.05, 0.5, 1.0, 1.5, 2.0])
    assert test1.fixed_position_std == 0.25
    t2 = load_sweep(data_path("test2.sweep"))
    assert t2.varied == "position_std" and t2.values == (0.005, 0.25, 0.5, 0.75, 1.0)
    assert t2.fixed_heading_std == pytest.approx(math.radians(0.5))


def test_default_placement(test1):
    r = test1.receiver(test1.values[0], 50.0)
    assert (r.mean.x, r.mean.y, r.mean.theta) == (50.0, 75.0, 0.0)
    objs = test1.objects()
    assert len(objs) == 20 and objs[0].mean.x == 5.0 and objs[-1].mean.x == 100.0
    v2i = test1.sender("V2I", test1.values[0])
    assert v2i.cov[0, 0] == pytest.approx(0.005 ** 2) and v2i.cov[2, 2] == pytest.approx(1e-8)
    v2v = test1.sender("V2V", test1.values[3])
    assert np.allclose(v2v.cov, test1.receiver(test1.values[3], 50.0).cov)


def test_one_record_per_combination(test1, test1_result):
    assert len(test1_result.records) == 2 * 5 * 3 * 20
    keys = {(r.mode, r.value, r.offset, r.object_index) for r in test1_result.records}
    assert len(keys) == len(test1_result.records)
    assert len(test1_result.sender_ellipses) == 30


def test_thread_count_does_not_change_results(test1):
    a = run_sweep(test1, n_samples=2000, threads=1)
    b = run_sweep(test1, n_samples=2000, threads=3)
    for ra, rb in zip(a.records, b.records):
        assert (ra.mode, ra.value, ra.offset, ra.object_index) == (rb.mode, rb.value, rb.offset, rb.object_index)
        assert np.array_equal(ra.transformed.cov, rb.transformed.cov)
        assert np.array_equal(ra.mc_cov, rb.mc_cov)


def test_v2v_never_smaller_than_v2i(test1_result):
    by = {(r.mode, r.value, r.offset, r.object_index): r.ellipse.area for r in test1_result.records}
    for (mode, v, o, i), area in by.items():
        if mode == "V2I":
            assert area <= by[("V2V", v, o, i)] + 1e-9


def test_major_axis_grows_along_the_line(test1_result):
    # receiver approaching the sender: objects further along are further from both stations
    for v in test1_result.spec.values[1:]:
        rows = test1_result.select("V2I", v, 50.0)
        axes = [r.ellipse.semi_major for r in rows]
        assert all(b > a for a, b in zip(axes, axes[1:]))


# --- sampling reference -------------------------------------------------------------

def test_monte_carlo_zero_covariance_is_exact():
    z = np.zeros((3, 3))
    r = GaussianPose2(Pose2(0.0, 75.0, 0.0), z)
    s = GaussianPose2(Pose2(100.0, 100.0, 0.3), z)
    o = GaussianPose2(Pose2(10.0, -2.0, 1.0), z)
    mean, cov = monte_carlo_reference(r, s, o, 1000, seed=4)
    expect = trans(r.mean, s.mean, o.mean)
    assert np.allclose(mean, [expect.x, expect.y, expect.theta], atol=1e-12)
    assert np.all(cov == 0.0)


def test_monte_carlo_is_seeded():
    r = GaussianPose2.from_std(0.0, 75.0, 0.0, 0.25, 0.25, 0.01)
    s = GaussianPose2.from_std(100.0, 100.0, 0.0, 0.005, 0.005, 1e-4)
    o = GaussianPose2.from_std(20.0, 0.0, 0.0, 0.5, 0.5, 0.1)
    a = monte_carlo_reference(r, s, o, 5000, seed=9)
    b = monte_carlo_reference(r, s, o, 5000, seed=9)
    c = monte_carlo_reference(r, s, o, 5000, seed=10)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    assert not np.array_equal(a[1], c[1])


def test_nearest_object_matches_sampling(test1):
    v = test1.values[0]
    r, s = test1.receiver(v, 50.0), test1.sender("V2I", v)
    o = test1.objects()[0]
    ut = transform_with_uncertainty(r, s, o)
    mean, cov = monte_carlo_reference(r, s, o, 1_000_000, seed=1)
    assert math.hypot(ut.mean.x - mean[0], ut.mean.y - mean[1]) < 0.02
    assert np.linalg.norm(ut.cov - cov) / np.linalg.norm(cov) < 0.05


# --- file format ------------------------------------------------------------------

SWEEP = """\
version: 1
varied: heading_std
values: [0.05, 0.5]
fixed: {position_std: 0.25}
"""


def test_parse_minimal_sweep():
    spec = parse_sweep(load_document(SWEEP, "x.sweep"))
    assert spec.name == "x" and spec.modes == ("V2I", "V2V") and spec.offsets == (50.0, -50.0, -150.0)


@pytest.mark.parametrize("edit, line, field", [
    (("values: [0.05, 0.5]", "values: []"), 3, "values"),
    (("values: [0.05, 0.5]", "values: [0.05, -1]"), 3, "values[1]"),
    (("varied: heading_std", "varied: speed"), 2, "varied"),
    (("fixed: {position_std: 0.25}", "fixed: {position_std: 0.25, colour: red}"), 4, "fixed.colour"),
])
def test_sweep_schema_errors(edit, line, field):
    with pytest.raises(SchemaError) as exc:
        parse_sweep(load_document(SWEEP.replace(*edit), "x.sweep"))
    assert (exc.value.line, exc.value.field) == (line, field)


def test_spec_rejects_empty_values():
    from coopsense.geometry import InvalidArgumentError
    with pytest.raises(InvalidArgumentError):
        SweepSpec("s", "heading_std", ())
