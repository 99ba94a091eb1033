import csv
import hashlib
import json

import pytest
from click.testing import CliRunner

from cscx import __version__
from cscx.cli import dumps, main


def run(*args, env=None):
    return CliRunner().invoke(main, [str(a) for a in args], env=env, catch_exceptions=False)


def manifest(path):
    return json.loads((path.parent / (path.name + ".manifest.json")).read_text())


def csv_rows(path):
    return list(csv.DictReader(line for line in path.read_text().splitlines() if not line.startswith("#")))


# -----------------------------------------------------------------------------
# serialization
# -----------------------------------------------------------------------------
def test_dumps_sorted_full_precision_and_null_for_nonfinite():
    text = dumps({"b": 0.1, "a": [float("nan"), float("inf"), 1 / 3], "c": True, "d": None})
    assert text.index('"a"') < text.index('"b"')
    obj = json.loads(text)
    assert obj["a"][:2] == [None, None]
    assert obj["a"][2] == 1 / 3
    assert obj["b"] == 0.1
    assert obj["c"] is True


# -----------------------------------------------------------------------------
# commands
# -----------------------------------------------------------------------------
def test_simanca_outputs_and_manifest(tmp_path):
    out = tmp_path / "sim.json"
    r = run("simanca", "--m", 3, "--smax", 1e3, "--out", out)
    assert r.exit_code == 0, r.output
    prof = json.loads(out.read_text())
    assert abs(prof["lambda"] - 2.3650942707412270201) < 1e-8
    assert prof["decay"]["expected_order"] == -2
    assert (tmp_path / "sim_asymptotics.csv").exists()

    man = manifest(out)
    assert set(man) >= {"schema_version", "command", "config", "input_hashes", "outputs",
                        "version", "wall_time_s"}
    assert man["command"] == "simanca"
    assert man["version"] == __version__
    assert man["config"] == {"m": 3, "s_max": 1e3, "tol": 1e-12, "check": False}
    assert man["input_hashes"]["config"] == hashlib.sha256(dumps(man["config"]).encode()).hexdigest()
    files = {o["file"]: o["sha256"] for o in man["outputs"]}
    assert set(files) == {"sim.json", "sim_asymptotics.csv"}
    for name, digest in files.items():
        assert hashlib.sha256((tmp_path / name).read_bytes()).hexdigest() == digest


def test_simanca_check_passes(tmp_path):
    r = run("simanca", "--m", 3, "--smax", 1e3, "--check", "--out", tmp_path / "s.json")
    assert r.exit_code == 0, r.output


def test_simanca_m2_is_precondition_failure(tmp_path):
    r = CliRunner().invoke(main, ["simanca", "--m", "2", "--out", str(tmp_path / "s.json")])
    assert r.exit_code == 2
    assert "error" in r.output
    assert not (tmp_path / "s.json").exists()


def test_roots_z2_drops_odd_modes(tmp_path):
    out = tmp_path / "r.csv"
    assert run("roots", "--m", 3, "--group", "z2", "--out", out).exit_code == 0
    gammas = {int(row["gamma"]) for row in csv_rows(out)}
    assert gammas and all(g % 2 == 0 for g in gammas)
    run("roots", "--m", 3, "--out", out)
    assert {int(row["gamma"]) for row in csv_rows(out)} == set(range(5))


def test_glue_small_eps_matches(tmp_path):
    out = tmp_path / "g.json"
    r = run("glue", "--m", 2, "--ale", "burns", "--eps", 1e-2, "--out", out)
    assert r.exit_code == 0, r.output
    sol = json.loads(out.read_text())
    assert max(sol["mismatch"]) <= 1e-9
    assert sol["nu"] < 0
    assert manifest(out)["config"]["eps"] == 1e-2


def test_sweep_csv_and_slopes(tmp_path):
    out = tmp_path / "sw.csv"
    r = run("sweep", "--m", 2, "--ale", "burns", "--theta", 0.5, "--eps", "0.03,0.01,0.003",
            "--out", out, env={"CSCX_THREADS": "2"})
    assert r.exit_code == 0, r.output
    rows = csv_rows(out)
    assert [float(x["eps"]) for x in rows] == [0.03, 0.01, 0.003]
    assert all(x["status"] == "ok" for x in rows)
    slope = [line for line in out.read_text().splitlines() if line.startswith("# slope_nu,")][0]
    assert abs(float(slope.split(",")[1]) - 4) < 0.5


def test_sweep_total_failure_exits_3(tmp_path):
    # outer radius inside the neck: every point is rejected
    r = CliRunner().invoke(main, ["sweep", "--m", "2", "--r0", "1e-3", "--eps", "0.1,0.05",
                                  "--out", str(tmp_path / "f.csv")])
    assert r.exit_code == 3


def test_scal_and_alias(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["--m", 2, "--vol", 1.0, "--chern", 0.0, "--weights", "1,2", "--eps-max", 0.3, "--n", 7]
    assert run("scal", *args, "--out", a).exit_code == 0
    assert run("scal-sweep", *args, "--out", b).exit_code == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(csv_rows(a)) == 7
    mono = json.loads((tmp_path / "a_monotonicity.json").read_text())
    assert mono["decreasing"] is True


# -----------------------------------------------------------------------------
# reproducibility
# -----------------------------------------------------------------------------
def test_outputs_are_deterministic(tmp_path):
    outs = []
    for d in ("one", "two"):
        out = tmp_path / d / "r.csv"
        run("roots", "--m", 4, "--group", "cyclic_diagonal(3)", "--out", out)
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_verify_identical_and_differing(tmp_path):
    out = tmp_path / "g.json"
    args = ["glue", "--m", 2, "--theta", 0.5, "--eps", 0.03, "--out", out]
    run(*args)
    r = run(*args, "--verify")
    assert r.exit_code == 0 and "identical" in r.output
    out.write_text(out.read_text().replace('"nu"', '"nu_"'))
    r = CliRunner().invoke(main, [str(a) for a in args] + ["--verify"])
    assert r.exit_code == 3


def test_verify_missing_file_fails(tmp_path):
    r = CliRunner().invoke(main, ["roots", "--m", "3", "--out", str(tmp_path / "x.csv"), "--verify"])
    assert r.exit_code == 3


def test_io_error_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    r = CliRunner().invoke(main, ["roots", "--m", "3", "--out", str(blocker / "sub" / "r.csv")])
    assert r.exit_code == 4
    assert "I/O" in r.output


@pytest.mark.parametrize("cmd", ["simanca", "roots", "glue", "sweep", "scal", "scal-sweep"])
def test_help(cmd):
    assert CliRunner().invoke(main, [cmd, "--help"]).exit_code == 0
