import json
import math
import subprocess
import sys

import pytest

from microlocal import cli
from microlocal.acceptance import CriterionResult
from microlocal.field import make_bump
from microlocal.presets import PrincipalValueTrace


def _run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_example_command(tmp_path, capsys):
    out = tmp_path / "ex.json"
    code, _, _ = _run(capsys, "example", "example41", "--out", str(out))
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["preset"] == "example41"
    assert set(doc["solutions"]) >= {"Z", "h", "W1"}
    assert len(doc["grid"]["x"]) == 21 and len(doc["grid"]["t"]) == 4


def test_example_output_feeds_field_commands(tmp_path, capsys):
    path = tmp_path / "lemma.json"
    assert _run(capsys, "example", "degenerate_axis", "--out", str(path))[0] == 0
    code, out, _ = _run(capsys, "field-classify", "--field", str(path), "--points", "0,0.5")
    assert code == 0
    doc = json.loads(out)
    assert doc["F0"] == [[0.0, 0.0]]
    assert [r["class"] for r in doc["points"]] == ["Degenerate", "Elliptic"]


def test_field_classify_non_real_coefficient(capsys):
    code, out, _ = _run(capsys, "field-classify", "--preset", "example41", "--points", "0,0.5")
    assert code == 0
    doc = json.loads(out)
    assert doc["F0"] is None and "F0_note" in doc


def test_integral_command(tmp_path, capsys):
    out = tmp_path / "z.json"
    code, _, _ = _run(capsys, "integral", "--preset", "mizohata", "--k", "4", "--out", str(out))
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["exact"] or doc["residual_slope"] >= 4.5
    side = (tmp_path / "z.residual.csv").read_bytes()
    assert side.startswith(b"t,max_residual\n") and b"\r" not in side


def test_trace_pair_matches_oracle(capsys):
    code, out, _ = _run(capsys, "trace-pair", "--preset", "cauchy_riemann.inv", "--phi", "bump:0,1,4", "--k", "2")
    assert code == 0
    doc = json.loads(out)
    value = complex(*doc["value"])
    ref = PrincipalValueTrace(0.0).pair(make_bump(0.0, 1.0, 4))
    assert abs(value - ref) < 1e-3


def test_fbi_scan_csv(tmp_path, capsys):
    out = tmp_path / "scan.csv"
    code, _, _ = _run(capsys, "fbi-scan", "--trace", "thm31ii.u3", "--points", "0,0.5", "--ladder", "8,64,2",
                      "--cutoff-radius", "0.4", "--out", str(out))
    assert code == 0
    lines = out.read_bytes().decode().split("\n")
    assert lines[0] == "s,direction,xi,re_F,im_F,abs_F"
    assert len([l for l in lines[1:] if l]) == 2 * 2 * 4


def test_wf_report_example41_h(capsys):
    code, out, _ = _run(capsys, "wf-report", "--trace", "example41.h", "--points", "0", "--cutoff-radius", "0.5")
    assert code == 0
    rows = json.loads(out)
    assert {r["direction"] for r in rows if r["in_WF"]} == {1, -1}
    assert all(r["halfspace_ok"] is False for r in rows)


def test_measure_probe_with_sidecar(tmp_path, capsys):
    out = tmp_path / "probe.json"
    code, _, _ = _run(capsys, "measure-probe", "--trace", "cauchy_riemann.inv", "--out", str(out), "--decompose")
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["ac"] is False
    [atom] = doc["atoms"]
    assert atom["x"] == 0.0 and abs(complex(*atom["mass"]) - 1j * math.pi) < 0.03
    assert (tmp_path / "probe.window.csv").read_text().startswith("x,delta,re_ratio,im_ratio\n")


def test_acceptance_command(capsys):
    code, out, err = _run(capsys, "acceptance", "--only", "10")
    assert code == 0
    assert "PASS" in err
    assert json.loads(out)[0]["number"] == 10


def test_acceptance_failure_exit_code(capsys, monkeypatch):
    import microlocal.acceptance as acc

    monkeypatch.setattr(acc, "run_all", lambda numbers: [CriterionResult(1, "stub", False, {}, 1.0)])
    code, _, err = _run(capsys, "acceptance", "--only", "1")
    assert code == cli.EXIT_ASSERTION
    assert json.loads(err[err.index("{"):])["error"] == "assertion"


# ---------------------------------------------------------------------------
# errors


@pytest.mark.parametrize(
    "argv",
    [
        ["wf-report", "--trace", "nope.h"],
        ["wf-report", "--trace", "example41.nope"],
        ["measure-probe", "--trace", "cauchy_riemann.inv", "--deltas", "0.2,0.1"],
        ["fbi-scan", "--trace", "example41.h", "--ladder", "1,2"],
        ["fbi-scan", "--trace", "example41.h", "--jobs", "0"],
        ["trace-pair", "--trace", "cauchy_riemann.inv", "--phi", "gauss:0,1"],
        ["field-classify", "--field", "/does/not/exist.json"],
        ["integral"],
        ["no-such-command"],
    ],
)
def test_config_errors(capsys, argv):
    code, _, err = _run(capsys, *argv)
    assert code == cli.EXIT_CONFIG
    doc = json.loads(err)
    assert doc["error"] == "config" and doc["exit_code"] == 2 and doc["message"]


def test_numeric_error(capsys):
    code, _, err = _run(capsys, "trace-pair", "--trace", "cauchy_riemann.inv", "--phi", "bump:0.3,1,4", "--k", "2",
                        "--quad-tol", "1e-20")
    assert code == cli.EXIT_NUMERIC
    doc = json.loads(err)
    assert doc["error"] == "numeric" and doc["estimate"] > 0


def test_domain_violation_is_config_error(capsys):
    code, _, _ = _run(capsys, "trace-pair", "--trace", "cauchy_riemann.inv", "--phi", "bump:1.5,1,4", "--k", "2")
    assert code == cli.EXIT_CONFIG


# ---------------------------------------------------------------------------
# invariants


@pytest.mark.parametrize(
    "argv",
    [
        ["example", "tube1d"],
        ["field-classify", "--preset", "degenerate_axis"],
        ["wf-report", "--trace", "thm31ii.u3", "--points", "0,0.5", "--cutoff-radius", "0.4", "--seed", "7"],
        ["measure-probe", "--trace", "example41.h", "--points", "0,0.05"],
    ],
)
def test_byte_identical_and_round_trip(tmp_path, capsys, argv):
    outs = []
    for i in range(2):
        path = tmp_path / f"run{i}.json"
        assert _run(capsys, *argv, "--out", str(path))[0] == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    doc = json.loads(outs[0])
    assert cli.dumps(doc).encode() == outs[0]


def test_entry_point_subprocess():
    proc = subprocess.run([sys.executable, "-m", "microlocal.cli", "example", "mizohata"], capture_output=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["preset"] == "mizohata"
