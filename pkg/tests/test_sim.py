import math
from dataclasses import replace

import numpy as np
import pytest

from coopsense import data_path
from coopsense.cpm import Cpm, CpmManagement, ObjectClass, PerceivedObject, StationType, decode, encode, quantize
from coopsense.geometry import GaussianPose2, InvalidArgumentError, Pose2
from coopsense.planner import Decision
from coopsense.sim import (
    ChannelSpec,
    RoadUserSpec,
    Scenario,
    SchemaError,
    SensorSpec,
    StationSpec,
    load_document,
    load_scenario,
    parse_scenario,
    run_scenario,
    to_world,
)

PED = (37.0, -9.0)


def static_scenario(codec=False, loss=0.0, noise=0.0, latency=0, duration=1.0):
    """One roadside unit, one receiving vehicle, one standing pedestrian."""
    std = (noise, noise, noise)
    stations = (
        StationSpec(1, "sensing", StationType.IRSU, Pose2(44.0, -6.0, math.pi), localisation_std=std,
                    sensor=SensorSpec(40.0)),
        StationSpec(2, "receiving", StationType.VEHICLE, Pose2(20.0, -1.75, 0.0), localisation_std=std),
    )
    users = (RoadUserSpec(11, ObjectClass.PEDESTRIAN, ((0.0, *PED),), perception_std=std, speed_std=0.0,
                          heading=math.pi / 2),)
    return Scenario("static", 1, duration, stations, users, channel=ChannelSpec(loss, latency, codec))


def ped_tracks(tick):
    return [t for t in tick.tracks if t.object_class == ObjectClass.PEDESTRIAN]


# --- scenario model ---------------------------------------------------------------

def test_road_user_interpolation_and_hold():
    u = RoadUserSpec(1, ObjectClass.PEDESTRIAN, ((1.0, 0.0, 0.0), (3.0, 4.0, 0.0)))
    assert u.state_at(0.0) == (0.0, 0.0, 0.0, 0.0)
    x, y, h, v = u.state_at(2.0)
    assert (x, y, h, v) == pytest.approx((2.0, 0.0, 0.0, 2.0))
    assert u.state_at(5.0)[:2] == (4.0, 0.0) and u.state_at(5.0)[3] == 0.0


def test_sensor_sector():
    s = SensorSpec(10.0, -math.pi / 4, math.pi / 4)
    assert s.sees(5.0, 0.0) and not s.sees(0.0, 5.0) and not s.sees(11.0, 0.0)
    assert SensorSpec(10.0).sees(-5.0, 0.0)


def test_scenario_needs_exactly_one_receiver():
    sc = static_scenario()
    with pytest.raises(InvalidArgumentError):
        replace(sc, stations=sc.stations[:1])
    with pytest.raises(InvalidArgumentError):
        replace(sc, stations=sc.stations + (replace(sc.stations[1], station_id=3),))
    with pytest.raises(InvalidArgumentError):
        replace(sc, tick=0.0)


# --- engine -----------------------------------------------------------------------

def test_zero_noise_converges_exactly():
    lg = run_scenario(static_scenario(codec=False))
    tick = lg.ticks[10 - 1]
    (tr,) = ped_tracks(tick)
    assert math.hypot(tr.x - PED[0], tr.y - PED[1]) < 1e-6


def test_zero_noise_through_codec_within_quantisation():
    lg = run_scenario(static_scenario(codec=True))
    (tr,) = ped_tracks(lg.ticks[9])
    # mm positions plus the smallest encodable confidence
    assert math.hypot(tr.x - PED[0], tr.y - PED[1]) < 5e-3


def test_total_loss_gives_no_tracks():
    lg = run_scenario(static_scenario(loss=1.0, noise=0.1))
    assert all(not t.tracks for t in lg.ticks)
    assert all(m.lost for m in lg.messages) and lg.messages


def test_latency_delays_first_track():
    lg = run_scenario(static_scenario(latency=3))
    assert [t.received for t in lg.ticks[:4]] == [0, 0, 0, 1]
    assert not lg.ticks[2].tracks


def test_self_filter_drops_own_vehicle():
    lg = run_scenario(static_scenario(noise=0.05, duration=2.0))
    assert all(t.object_class == ObjectClass.PEDESTRIAN for tick in lg.ticks for t in tick.tracks)


def test_message_sizes_match_codec():
    lg = run_scenario(static_scenario(noise=0.05))
    for m in lg.messages:
        assert m.n_bytes == 47 + 10 + 29 * m.n_objects  # one 10-byte sensor block


def test_runs_are_deterministic():
    sc = static_scenario(noise=0.2, loss=0.3, duration=3.0)
    a, b = run_scenario(sc), run_scenario(sc)
    assert np.array_equal(a.ego_trajectory(), b.ego_trajectory())
    assert [m.lost for m in a.messages] == [m.lost for m in b.messages]
    ta = [(t.track_id, t.x, t.y, t.heading) for k in a.ticks for t in k.tracks]
    tb = [(t.track_id, t.x, t.y, t.heading) for k in b.ticks for t in k.tracks]
    assert ta == tb


def test_codec_only_inflates_received_covariance():
    # zero localisation noise: codec path vs direct hand-over differ by quantisation only
    recv = GaussianPose2(Pose2(20.0, -1.75, 0.0), np.zeros((3, 3)))
    ref = GaussianPose2(Pose2(44.0, -6.0, math.pi), np.zeros((3, 3)))
    obj = PerceivedObject(1, ObjectClass.PEDESTRIAN,
                          GaussianPose2.from_std(7.0, 3.0, -1.0, 0.2234, 0.1717, math.radians(6.01)))
    msg = Cpm(CpmManagement(1, StationType.IRSU, 0, ref), objects=(obj,))
    direct = to_world(recv, ref, obj.pose)
    coded = decode(encode(msg))
    assert coded == quantize(msg)
    via = to_world(recv, coded.management.reference_position, coded.objects[0].pose)
    diff = via.cov - direct.cov
    assert np.linalg.eigvalsh(diff).min() > -1e-12
    assert np.linalg.norm(diff) / np.linalg.norm(direct.cov) < 0.1
    assert math.hypot(via.mean.x - direct.mean.x, via.mean.y - direct.mean.y) < 2e-3


# --- presets ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def preset_logs():
    names = ("lab_crossing", "opposite_walker", "overtake", "alley")
    return {n: run_scenario(load_scenario(data_path("scenarios", f"{n}.yaml"))) for n in names}


def runs(decisions):
    return [d for i, d in enumerate(decisions) if i == 0 or d != decisions[i - 1]]


def test_crossing_gives_way_then_resumes(preset_logs):
    lg = preset_logs["lab_crossing"]
    seq = runs(lg.decisions())
    i = seq.index(Decision.GIVE_WAY)
    assert seq[i + 1:i + 3] == [Decision.REPLAN, Decision.PROCEED]
    stop_x = 33.5
    length = lg.scenario.planning.vehicle.length
    front = [t.ego.x + length / 2 for t in lg.ticks]
    first_gw = lg.decisions().index(Decision.GIVE_WAY)
    assert front[first_gw] < stop_x
    # never crosses the line while giving way
    assert all(f < stop_x for f, d in zip(front, lg.decisions()) if d is Decision.GIVE_WAY)
    assert lg.ticks[-1].ego.x > 40.0


def test_opposite_walker_keeps_lane(preset_logs):
    lg = preset_logs["opposite_walker"]
    assert Decision.REPLAN not in lg.decisions()
    for t in lg.ticks:
        assert t.path.feasible
        assert np.abs(t.path.poses[:, 1] + 1.75).max() < 1e-9
    assert any(t.tracks for t in lg.ticks)


def test_overtake_departs_and_returns(preset_logs):
    lg = preset_logs["overtake"]
    ys = lg.ego_trajectory()[:, 2]
    assert ys.max() > 0.0  # crossed the dividing line
    assert abs(ys[-1] + 1.75) < 0.25
    ped = lg.scenario.road_users[0]
    for t in lg.ticks:
        x, y, _, _ = ped.state_at(t.time)
        assert math.hypot(t.ego.x - x, t.ego.y - y) > 1.5


def test_alley_pedestrian_tracked_while_hidden(preset_logs):
    lg = preset_logs["alley"]
    hidden_tracked = [t.visibility[41] for t in lg.ticks if t.visibility[41] == (False, True)]
    assert len(hidden_tracked) > 10


# --- file format ------------------------------------------------------------------

MINIMAL = """\
version: 1
seed: 3
duration: 1.0
stations:
  - {id: 1, role: sensing, type: IRSU, pose: [0, 0, 0]}
  - {id: 2, role: receiving, type: CAV, pose: [-10, 0, 0], speed: 1.0}
road_users:
  - id: 5
    class: pedestrian
    trajectory:
      - {t: 0, x: 5, y: 1}
"""


def test_minimal_file_parses():
    sc = parse_scenario(load_document(MINIMAL, "mini.yaml"))
    assert sc.name == "mini" and sc.seed == 3 and sc.tick == 0.1
    assert sc.receiver.station_id == 2 and sc.senders[0].sensor.range == 50.0
    assert len(run_scenario(sc).ticks) == 10


@pytest.mark.parametrize("edit, line, field", [
    (("seed: 3", "seed: 3\nbogus: 1"), 3, "bogus"),
    (("class: pedestrian", "class: horse"), 9, "road_users[0].class"),
    (("{t: 0, x: 5, y: 1}", "{t: 0, x: five, y: 1}"), 11, "road_users[0].trajectory[0].x"),
    (("role: receiving", "role: sensing"), 4, "stations"),
    (("duration: 1.0", "duration: -1"), 3, "duration"),
])
def test_schema_errors_name_line_and_field(edit, line, field):
    with pytest.raises(SchemaError) as exc:
        parse_scenario(load_document(MINIMAL.replace(*edit), "s.yaml"))
    assert exc.value.line == line
    assert exc.value.field == field
    assert str(exc.value).startswith(f"s.yaml:{line}: {field}")


def test_missing_seed_and_bad_yaml():
    with pytest.raises(SchemaError, match="seed"):
        parse_scenario(load_document(MINIMAL.replace("seed: 3\n", ""), "s.yaml"))
    with pytest.raises(SchemaError) as exc:
        load_document("a: [1, 2\nb: 3\n", "bad.yaml")
    assert exc.value.line is not None


def test_bundled_presets_load():
    for p in data_path("scenarios").iterdir():
        sc = load_scenario(p)
        assert sc.lane_map is not None and sc.receiver.lane
