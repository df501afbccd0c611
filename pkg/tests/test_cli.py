import csv
import io
import json
import math

import pytest

from polyapprox.cli import RunConfig, build_parser, config_from_args, run_command
from polyapprox.experiments import DEFICIT_HEADER, SCALING_HEADER, VERIFY_HEADER

SCHEMAS = {
    "scaling": (SCALING_HEADER, {"n_points": int, "trials": int, "seed": int}),
    "construct": (SCALING_HEADER, {"n_points": int, "trials": int, "seed": int}),
    "deficit": (DEFICIT_HEADER, {"n_points": int, "trials": int}),
    "verify": (VERIFY_HEADER, {"identity": str, "pass": lambda s: {"true": True, "false": False}[s]}),
    "bpcheck": (VERIFY_HEADER, {"identity": str, "pass": lambda s: {"true": True, "false": False}[s]}),
}


def check_csv(text, command):
    """Header must match exactly; every other column must parse as a finite float."""
    header, types = SCHEMAS[command]
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == header
    assert len(rows) > 1
    for row in rows[1:]:
        assert len(row) == len(header)
        for name, cell in zip(header, row):
            value = types.get(name, float)(cell)
            if isinstance(value, float):
                assert math.isfinite(value), (name, cell)
    return rows


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = run_command(argv, stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def test_asp_ball():
    code, out, _ = run(["asp", "--body", "ball:r=1,n=3", "--p", "1"])
    assert code == 0
    row = list(csv.DictReader(io.StringIO(out)))[0]
    assert float(row["value"]) == pytest.approx(4 * math.pi)


def test_asp_json_has_schema_version():
    code, out, _ = run(["asp", "--body", "ellipsoid:a=2,b=1", "--p", "2", "--format", "json"])
    doc = json.loads(out)
    assert code == 0 and doc["schema_version"] == 1
    assert doc["value"] == pytest.approx(2 * math.pi)


@pytest.mark.parametrize("argv,flag", [
    (["asp", "--body", "cube:r=1", "--p", "1"], "--body"),
    (["asp", "--body", "ball:r=1,n=3", "--p", "1", "--nope"], "usage"),
    (["asp", "--body", "ball:r=1,n=3", "--p", "-3"], "--p"),
    (["scaling", "--body", "ball:r=1,n=2", "--density", "weird", "--schedule", "200,400,800"], "--density"),
    (["scaling", "--body", "ball:r=1,n=2", "--schedule", "2x"], "usage"),
    (["construct", "--body", "ball:r=1,n=2", "--n-points", "100", "--trials", "0"], "--trials"),
    (["bpcheck", "--body", "ball:r=1,n=3"], "--body"),
    (["verify", "--body", "ball:r=1,n=3", "--workers", "0"], "--workers"),
    (["deviate", "--body", "ball:r=1,n=2"], "--n-points"),
    (["deviate", "--body", "ball:r=1,n=2", "--polytope", "/nonexistent.json"], "--polytope"),
    (["frobnicate"], "usage"),
])
def test_configuration_errors_exit_1(argv, flag):
    code, out, err = run(argv)
    assert code == 1
    assert out == ""
    lines = err.strip().splitlines()
    assert len(lines) == 1 and flag in lines[0]


def test_numerical_failure_exit_2():
    # N = 3 on the circle makes the shrink factor leave (0, 1)
    code, _, err = run(["construct", "--body", "ball:r=1,n=2", "--n-points", "3", "--trials", "2",
                        "--c-mode", "asymptotic"])
    assert code == 2 and "numerical failure" in err


def test_custom_density_file(tmp_path):
    spec = tmp_path / "w.json"
    spec.write_text(json.dumps({"bias": [0.5, 0.0], "quadratic": [[0.1, 0], [0, 0]]}))
    code, out, _ = run(["deficit", "--body", "ellipsoid:a=2,b=1", "--density", f"custom:{spec}",
                        "--schedule", "50,100,200", "--trials", "20"])
    assert code == 0
    check_csv(out, "deficit")
    spec.write_text(json.dumps({"bias": [0.5, 0.0, 1.0]}))
    code, _, err = run(["deficit", "--body", "ellipsoid:a=2,b=1", "--density", f"custom:{spec}",
                        "--schedule", "50,100,200", "--trials", "20"])
    assert code == 1 and "--density" in err


def test_verify_csv_schema():
    code, out, _ = run(["verify", "--body", "ellipsoid:a=1.5,b=1,c=0.75"])
    assert code == 0
    rows = check_csv(out, "verify")
    assert all(r[-1] == "true" for r in rows[1:])


def test_verify_literal_convention_exit_2():
    code, out, _ = run(["verify", "--body", "ellipsoid:a=2,b=1", "--mean-curvature", "n"])
    assert code == 2
    rows = check_csv(out, "verify")
    assert rows[1][0] == "minkowski" and rows[1][-1] == "false"


def test_bpcheck_csv():
    code, out, _ = run(["bpcheck", "--body", "ball:r=1,n=2", "--samples", "20000"])
    assert code == 0
    check_csv(out, "bpcheck")


def test_scaling_outputs_and_plot(tmp_path):
    csv_path, svg = tmp_path / "s.csv", tmp_path / "s.svg"
    argv = ["scaling", "--body", "ball:r=1,n=2", "--schedule", "200,400,800", "--trials", "4",
            "--seed", "7", "--out", str(csv_path), "--plot", str(svg)]
    code, out, _ = run(argv)
    assert code == 0 and out == ""
    check_csv(csv_path.read_text(), "scaling")
    assert svg.read_text().lstrip().startswith("<?xml")
    first = (csv_path.read_bytes(), svg.read_bytes())
    run(argv + ["--workers", "2"])
    assert (csv_path.read_bytes(), svg.read_bytes()) == first


def test_construct_witness_and_deviate(tmp_path):
    wit = tmp_path / "w.json"
    code, out, _ = run(["construct", "--body", "ball:r=1,n=3", "--n-points", "200", "--trials", "3",
                        "--c-mode", "asymptotic", "--witness", str(wit)])
    assert code == 0
    check_csv(out, "construct")
    assert json.loads(wit.read_text())["schema_version"] == 1
    code, out, _ = run(["deviate", "--body", "ball:r=1,n=3", "--polytope", str(wit), "--format", "json"])
    doc = json.loads(out)
    assert code == 0 and doc["schema_version"] == 1 and doc["n_vertices"] == 200


def test_bodyinfo_json():
    code, out, _ = run(["bodyinfo", "--body", "ellipsoid:a=2,b=1"])
    doc = json.loads(out)
    assert code == 0 and doc["schema_version"] == 1 and doc["valid"]
    assert doc["as_1"] == pytest.approx(2 * math.pi * 2 ** (1 / 3))


@pytest.mark.parametrize("argv", [
    ["scaling", "--body", "ball:r=1,n=2", "--schedule", "200,400,800", "--trials", "5", "--seed", "9"],
    ["asp", "--body", "ellipsoid:a=1.5,b=1,c=0.75", "--p", "0.5", "--format", "json"],
    ["deficit", "--body", "ball:r=1,n=3", "--density", "uniform", "--schedule", "50,100,200"],
])
def test_run_config_round_trip(tmp_path, argv):
    cfg = config_from_args(build_parser().parse_args(argv))
    again = RunConfig.from_json(cfg.to_json())
    assert again == cfg
    assert json.loads(cfg.to_json())["schema_version"] == 1
    path = tmp_path / "cfg.json"
    path.write_text(cfg.to_json())
    direct = run(argv)
    assert run(["run", str(path)]) == direct


def test_default_seed_is_fixed():
    cfg = config_from_args(build_parser().parse_args(["asp", "--body", "ball:r=1,n=2", "--p", "1"]))
    assert cfg.seed == 20240521
