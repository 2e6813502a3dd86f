import csv
import io
import json
import math

import numpy as np
import pytest

from wulfflab import cli, fixtures
from wulfflab.fileio import dump, geomset_to_json, shape_to_json


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def _tension(path, dirs, vals):
    dump({"kind": "tension", "dim": 2, "samples": [{"dir": list(d), "value": v} for d, v in zip(dirs, vals)]},
         path)
    return path


def test_build_wulff(tmp_path, capsys):
    th = 2 * np.pi * np.arange(360) / 360
    p = _tension(tmp_path / "c.json", np.column_stack([np.cos(th), np.sin(th)]), [1.0] * 360)
    code, out, _ = run(capsys, "build-wulff", "--input", p)
    assert code == 0 and abs(json.loads(out)["volume"] - math.pi) <= 1e-3
    p = _tension(tmp_path / "s.json", [(1, 0), (-1, 0), (0, 1), (0, -1)], [1.0] * 4)
    code, out, _ = run(capsys, "build-wulff", "--input", p)
    v = np.array(json.loads(out)["vertices"])
    assert code == 0 and len(v) == 4 and np.allclose(np.abs(v), math.sqrt(math.pi) / 2)
    p = _tension(tmp_path / "d.json", [(1, 0), (-1, 0)], [1.0, 1.0])
    code, _, err = run(capsys, "build-wulff", "--input", p)
    assert code == 2 and "UnboundedShape" in err


def test_offset_polygon_is_normalized(tmp_path, capsys):
    th = 2 * np.pi * np.arange(64) / 64
    dump({"kind": "polygon", "vertices": (2 * np.column_stack([np.cos(th), np.sin(th)]) + [3, 0]).tolist()},
         tmp_path / "k.json")
    code, out, _ = run(capsys, "build-wulff", "--input", tmp_path / "k.json")
    d = json.loads(out)
    assert code == 0 and d["volume"] == pytest.approx(math.pi)
    assert np.allclose(np.mean(d["vertices"], axis=0), 0, atol=1e-12)


def test_input_errors(tmp_path, capsys):
    assert run(capsys, "perimeter", "--input", tmp_path / "missing.json")[0] == 2
    (tmp_path / "bad.json").write_text("{not json")
    assert run(capsys, "perimeter", "--input", tmp_path / "bad.json")[0] == 2
    assert run(capsys, "perimeter", "--input", "fixture:nowhere")[0] == 2
    assert run(capsys, "asymmetry", "--input", "fixture:square")[0] == 2
    assert run(capsys, "perimeter", "--input", "fixture:square", "--format", "csv")[0] == 2
    assert run(capsys, "verify", "nonsense")[0] == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 2


def test_perimeter_and_deficit(tmp_path, capsys):
    code, out, _ = run(capsys, "perimeter", "--input", "fixture:square_with_hole", "--shape", "fixture:disc")
    d = json.loads(out)
    assert code == 0 and d["volume"] == pytest.approx(0.75) and d["perimeter"] == pytest.approx(6)
    dump(geomset_to_json(fixtures.ellipse(0.1)), tmp_path / "e.json")
    code, out, _ = run(capsys, "deficit", "--input", tmp_path / "e.json", "--shape", "fixture:disc")
    assert code == 0 and json.loads(out)["deficit"] > 0


def test_asymmetry_cmd(tmp_path, capsys):
    K = fixtures.wulff_corpus()["hexagon"]
    dump(shape_to_json(K), tmp_path / "k.json")
    E = fixtures.ellipse(0.0, K).translate([0.2, 0.1])
    dump(geomset_to_json(E), tmp_path / "e.json")
    code, out, _ = run(capsys, "asymmetry", "--input", tmp_path / "e.json", "--shape", tmp_path / "k.json")
    d = json.loads(out)
    assert code == 0 and d["A"] <= 1e-4 and np.allclose(d["translation"], [0.2, 0.1], atol=1e-4)


def test_sweep_and_plot(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    code, _, _ = run(capsys, "qwi-sweep", "--input", "fixture:ellipse", "--shape", "fixture:disc",
                     "--params", "0.2,0.1", "--out", out)
    rows = list(csv.DictReader(out.open()))
    assert code == 0 and [float(r["param"]) for r in rows] == [0.2, 0.1]
    assert all(float(r["ratio"]) > 0 for r in rows)
    code, svg_text, _ = run(capsys, "plot", "--input", out)
    assert code == 0 and svg_text.count("<circle") == 2


def test_whitney_cmd_deterministic(tmp_path, capsys):
    a = run(capsys, "whitney", "--input", "fixture:l_shape", "--max-level", 7)
    b = run(capsys, "whitney", "--input", "fixture:l_shape", "--max-level", 7)
    assert a[0] == 0 and a[1] == b[1]
    code, out, _ = run(capsys, "whitney", "--input", "fixture:l_shape", "--max-level", 7, "--format", "json")
    d = json.loads(out)
    assert code == 0 and d["certified"] == d["cubes"] and d["ratio_failures"] == 0
    (tmp_path / "cubes.csv").write_text(a[1])
    code, svg_text, _ = run(capsys, "plot", "--input", tmp_path / "cubes.csv")
    assert code == 0 and svg_text.count("<rect") == d["cubes"]


def test_john_and_trace_cmds(tmp_path, capsys):
    code, out, _ = run(capsys, "john", "--input", "fixture:square", "--max-level", 7)
    d = json.loads(out)
    assert code == 0 and 1 <= d["J_value"] <= 3 and d["curves"]
    (tmp_path / "john.json").write_text(out)
    code, svg_text, _ = run(capsys, "plot", "--input", tmp_path / "john.json", "--domain", "fixture:square")
    assert code == 0 and "<polyline" in svg_text
    a = run(capsys, "trace", "--input", "fixture:disc", "--max-level", 7)
    b = run(capsys, "trace", "--input", "fixture:disc", "--max-level", 7)
    assert a[0] == 0 and a[1] == b[1]
    assert json.loads(a[1])["ok"]


def test_select_cmd(tmp_path, capsys):
    K = fixtures.wulff_corpus()["square"]
    prob = {"input_set": geomset_to_json(fixtures.bumped_square(0.04, K, samples=16)),
            "shape": shape_to_json(K), "solver": {"vertices": 64}}
    dump(prob, tmp_path / "p.json")
    code, out, _ = run(capsys, "select", "--input", tmp_path / "p.json")
    d = json.loads(out)
    assert code == 0 and d["energies"]["total"] <= d["energies"]["input_total"] + 1e-9
    assert d["checks"]["minimality_pass_fraction"] == 1.0
    (tmp_path / "sel.json").write_text(out)
    code, svg_text, _ = run(capsys, "plot", "--input", tmp_path / "sel.json")
    assert code == 0 and svg_text.count("<path") == 2


def test_verify_exit_codes(capsys, monkeypatch):
    code, out, err = run(capsys, "verify", "wulff")
    assert code == 0
    assert json.loads(out)["passed"] and err.count("PASS") == 3
    from wulfflab import verify

    name, budget, fn = verify.CRITERIA[1]
    monkeypatch.setitem(verify.CRITERIA, 1, (name, budget, lambda seed: (False, {})))
    monkeypatch.setitem(verify.SUITES, "one", (1,))
    code, out, err = run(capsys, "verify", "one")
    assert code == 1 and "FAIL" in err and not json.loads(out)["passed"]


def test_module_entry_point(tmp_path):
    import subprocess
    import sys

    out = tmp_path / "p.json"
    r = subprocess.run([sys.executable, "-m", "wulfflab.cli", "perimeter", "--input", "fixture:square",
                        "--out", str(out)], capture_output=True, text=True)
    assert r.returncode == 0 and json.loads(out.read_text())["perimeter"] == pytest.approx(4)
    r = subprocess.run([sys.executable, "-m", "wulfflab.cli", "perimeter", "--input", "nope.json"],
                       capture_output=True, text=True)
    assert r.returncode == 2 and "error" in r.stderr
