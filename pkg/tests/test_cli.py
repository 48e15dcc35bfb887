import re
import xml.etree.ElementTree as ET

import pytest

from coopsense import data_path
from coopsense.cli import main

SVG_NS = "{http://www.w3.org/2000/svg}"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def mean_of(out):
    m = re.search(r"x=(\S+) m\s+y=(\S+) m\s+heading=(\S+) deg", out)
    return tuple(float(v) for v in m.groups())


def svg_ellipses_inside(svg: str):
    """Parse the document and check every ellipse path against the viewBox."""
    root = ET.fromstring(svg)
    _, _, w, h = (float(v) for v in root.attrib["viewBox"].split())
    groups = [g for g in root.iter(f"{SVG_NS}g") if g.attrib.get("id", "").startswith("ellipse-")]
    for g in groups:
        for path in g.iter(f"{SVG_NS}path"):
            nums = [float(v) for v in re.findall(r"-?\d+(?:\.\d+)?(?:e-?\d+)?", path.attrib["d"])]
            xs, ys = nums[0::2], nums[1::2]
            assert min(xs) >= 0 and max(xs) <= w and min(ys) >= 0 and max(ys) <= h
    return len(groups)


# --- transform ----------------------------------------------------------------------

def test_transform_identity_echoes_object(capsys):
    code, out, _ = run(capsys, "transform", "--receiver", "0", "0", "0", "--sender", "0", "0", "0",
                       "--object", "3", "-2", "45")
    assert code == 0
    assert mean_of(out) == pytest.approx((3.0, -2.0, 45.0))


def test_transform_placement_example(capsys, tmp_path):
    code, out, _ = run(capsys, "transform", "--receiver", "0", "75", "0", "--sender", "100", "100", "0",
                       "--object", "10", "0", "0", "--object-std", "0.5", "0.5", "6", "--out", str(tmp_path))
    assert code == 0
    assert mean_of(out) == pytest.approx((110.0, 25.0, 0.0), abs=1e-9)
    assert (tmp_path / "transform.csv").read_text().startswith("# coopsense-transform v1\n")
    assert svg_ellipses_inside((tmp_path / "transform.svg").read_text()) == 1


def test_transform_rejects_non_psd(capsys):
    code, _, err = run(capsys, "transform", "--receiver", "0", "0", "0", "--sender", "0", "0", "0",
                       "--object", "1", "0", "0", "--sender-cov", "1", "2", "0", "2", "1", "0", "0", "0", "1")
    assert code == 2
    assert "sender covariance" in err


def test_transform_from_file(capsys, tmp_path):
    f = tmp_path / "t.yaml"
    f.write_text("receiver: {pose: [0, 75, 0], std: [0.25, 0.25, 0.5]}\n"
                 "sender: {pose: [100, 100, 0]}\n"
                 "object: {pose: [10, 0, 0], cov: [[0.25, 0, 0], [0, 0.25, 0], [0, 0, 36]]}\n")
    code, out, _ = run(capsys, "transform", "--file", str(f))
    assert code == 0
    code, flags_out, _ = run(capsys, "transform", "--receiver", "0", "75", "0", "--receiver-std", "0.25", "0.25",
                             "0.5", "--sender", "100", "100", "0", "--object", "10", "0", "0",
                             "--object-std", "0.5", "0.5", "6")
    assert code == 0 and out == flags_out
    f.write_text("receiver: {pose: [0, 75]}\nsender: {pose: [0, 0, 0]}\nobject: {pose: [0, 0, 0]}\n")
    code, _, err = run(capsys, "transform", "--file", str(f))
    assert code == 2 and ":1: receiver.pose" in err


def test_transform_missing_pose(capsys):
    code, _, err = run(capsys, "transform", "--receiver", "0", "0", "0")
    assert code == 2 and "--sender" in err


# --- sweep --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def sweep_runs(tmp_path_factory):
    dirs = []
    for k in range(2):
        d = tmp_path_factory.mktemp(f"sweep{k}")
        assert main(["sweep", "test1", "--samples", "200", "--out", str(d)]) == 0
        dirs.append(d)
    return dirs


def test_sweep_writes_thirty_figures(sweep_runs):
    svgs = sorted((sweep_runs[0] / "test1").glob("*.svg"))
    assert len(svgs) == 30
    for p in svgs[:6]:
        assert svg_ellipses_inside(p.read_text()) == 20
    lines = (sweep_runs[0] / "test1.csv").read_text().splitlines()
    assert lines[0] == "# coopsense-sweep v1" and len(lines) == 2 + 600


def test_sweep_outputs_are_byte_identical(sweep_runs):
    a, b = sweep_runs
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files and files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes(), f


def test_sweep_test2_count(tmp_path):
    assert main(["sweep", str(data_path("test2.sweep")), "--samples", "0", "--format", "svg",
                 "--out", str(tmp_path)]) == 0
    assert len(list((tmp_path / "test2").glob("*.svg"))) == 30


def test_sweep_empty_values_exit_2(capsys, tmp_path):
    f = tmp_path / "bad.sweep"
    f.write_text("varied: heading_std\nvalues: []\n")
    code, _, err = run(capsys, "sweep", str(f), "--out", str(tmp_path))
    assert code == 2 and "bad.sweep:2: values" in err


def test_seed_option_before_or_after_command(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["--seed", "5", "sweep", "test1", "--samples", "50", "--format", "csv", "--out", str(a)]) == 0
    assert main(["sweep", "test1", "--seed", "5", "--samples", "50", "--format", "csv", "--out", str(b)]) == 0
    assert main(["sweep", "test1", "--seed", "6", "--samples", "50", "--format", "csv", "--out", str(c)]) == 0
    assert (a / "test1.csv").read_bytes() == (b / "test1.csv").read_bytes()
    assert (a / "test1.csv").read_bytes() != (c / "test1.csv").read_bytes()


# --- scenario -----------------------------------------------------------------------

def decision_rows(csv_text):
    return [line.split(",")[12] for line in csv_text.splitlines()[2:] if line.split(",")[2] == "ego"]


def test_crossing_scenario_csv(capsys, tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / str(k)
        code, out, _ = run(capsys, "scenario", "lab_crossing", "--out", str(d), "--jsonl")
        assert code == 0 and "GiveWay=" in out
        outs.append(d)
    csv_text = (outs[0] / "lab_crossing.csv").read_text()
    assert csv_text.startswith("# coopsense-scenario v1\n")
    assert decision_rows(csv_text).count("GiveWay") >= 1
    for name in ("lab_crossing.csv", "lab_crossing.svg", "lab_crossing.jsonl"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    assert svg_ellipses_inside((outs[0] / "lab_crossing.svg").read_text()) > 0


def test_opposite_walker_has_no_replan_rows(tmp_path):
    assert main(["scenario", "opposite_walker", "--format", "csv", "--out", str(tmp_path)]) == 0
    rows = decision_rows((tmp_path / "opposite_walker.csv").read_text())
    assert rows and "Replan" not in rows


def test_scenario_schema_error_exit_2(capsys, tmp_path):
    f = tmp_path / "s.yaml"
    f.write_text("seed: 1\nduration: 1\nstations: []\n")
    code, _, err = run(capsys, "scenario", str(f), "--out", str(tmp_path))
    assert code == 2 and "receiving" in err
    code, _, err = run(capsys, "scenario", "no_such_preset", "--out", str(tmp_path))
    assert code == 2


# --- cpm ----------------------------------------------------------------------------

def test_cpm_minimal_dump(capsys):
    code, out, _ = run(capsys, "cpm", str(data_path("cpm", "minimal.cpm")))
    assert code == 0
    assert out.startswith("47 bytes\n")
    assert "0 sensor(s), 0 object(s)" in out


@pytest.mark.parametrize("name", ["minimal.cpm", "irsu_crossing.cpm", "cav_v2v.cpm"])
def test_cpm_check_bundled(capsys, name):
    code, out, _ = run(capsys, "cpm", name, "--check")
    assert code == 0 and "roundtrip check passed" in out


def test_cpm_truncated_exit_3(capsys, tmp_path):
    raw = data_path("cpm", "irsu_crossing.cpm").read_bytes()
    f = tmp_path / "cut.cpm"
    f.write_bytes(raw[:60])
    code, _, err = run(capsys, "cpm", str(f))
    assert code == 3 and "offset 57" in err


def test_cpm_hex_and_bad_input(capsys):
    raw = data_path("cpm", "minimal.cpm").read_bytes()
    assert run(capsys, "cpm", "--hex", raw.hex(), "--check")[0] == 0
    assert run(capsys, "cpm", "--hex", "zz")[0] == 2
    assert run(capsys, "cpm", "--hex", "00" * 10)[0] == 3
    assert run(capsys, "cpm", "missing.cpm")[0] == 2


def test_argparse_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "test1", "--mass", "1.5"])
    assert exc.value.code == 2
