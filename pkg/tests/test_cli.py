import csv
import json
import math
import xml.etree.ElementTree as ET

import pytest

from planarmin.cli import main

SVG = "{http://www.w3.org/2000/svg}"


def write(tmp_path, name, doc):
    p = tmp_path / name
    p.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return p


def run(tmp_path, command, cfg, out="out", *extra):
    return main([command, "--config", str(cfg), "--out", str(tmp_path / out), *extra])


def test_simulate_center(tmp_path):
    cfg = write(tmp_path, "c.json", {"field": {"builtin": "center"}, "x0": [1, 0],
                                     "budgets": {"t_end": 2 * math.pi}})
    assert run(tmp_path, "simulate", cfg) == 0
    rows = list(csv.reader(open(tmp_path / "out" / "trajectory.csv")))
    assert rows[0] == ["t", "x", "y", "fx", "fy"]
    t, x, y = map(float, rows[-1][:3])
    assert abs(t - 2 * math.pi) < 1e-12
    assert math.hypot(x - 1, y) <= 1e-8


def test_simulate_vdp_svg(tmp_path):
    cfg = write(tmp_path, "v.json", {"field": {"builtin": "vdp", "params": {"mu": 1}},
                                     "x0": [0.1, 0], "budgets": {"t_end": 100}})
    assert run(tmp_path, "simulate", cfg) == 0
    root = ET.parse(tmp_path / "out" / "portrait.svg").getroot()
    groups = {g.get("id") for g in root.iter(SVG + "g")}
    assert {"trajectory", "balls", "windows"} <= groups
    vx, vy, w, h = map(float, root.get("viewBox").split())
    # y axis is flipped inside the drawing group
    assert vx <= -2.0 and vx + w >= 2.0
    assert vy <= -2.2 and vy + h >= 2.2
    assert w < 5.0


@pytest.mark.parametrize("doc, needle", [
    ({"field": {"builtin": "center"}, "x0": [1, 0], "tolerances": {"tol": 1}}, "$.tolerances.tol"),
    ({"field": {"builtin": "nope"}, "x0": [1, 0]}, "$.field"),
    ({"field": {"fx": "-y + (", "fy": "x"}, "x0": [1, 0]}, "offset 6"),
    ({"field": {"builtin": "center"}, "x0": [1, 0], "windows": {"auto": {"n": 3, "r_range": [0.01, 0.1]}}},
     "$.seed"),
    ({"field": {"builtin": "center"}}, "'x0' is a required property"),
])
def test_invalid_configs(tmp_path, capsys, doc, needle):
    cfg = write(tmp_path, "bad.json", doc)
    assert run(tmp_path, "classify", cfg) == 1
    assert needle in capsys.readouterr().err


def test_json_syntax_error_is_positioned(tmp_path, capsys):
    cfg = write(tmp_path, "bad.json", '{"field": {"builtin": "center"},\n "x0": [1, 0],}')
    assert run(tmp_path, "simulate", cfg) == 1
    assert "bad.json:2:" in capsys.readouterr().err


def test_classify_center_and_focus(tmp_path):
    cfg = write(tmp_path, "c.json", {"field": {"builtin": "center"}, "x0": [1, 0]})
    assert run(tmp_path, "classify", cfg, "c") == 0
    rep = json.loads((tmp_path / "c" / "report.json").read_text())
    assert rep["classification"]["kind"] == "periodic_orbit"
    assert rep["classification"]["period"] == pytest.approx(2 * math.pi, abs=1e-6)
    assert rep["all_pass"] and rep["certificates"]
    cfg = write(tmp_path, "s.json", {"field": {"builtin": "stable_focus"}, "x0": [1, 0]})
    assert run(tmp_path, "classify", cfg, "s") == 0
    rep = json.loads((tmp_path / "s" / "report.json").read_text())
    assert rep["classification"]["kind"] == "equilibrium"
    assert rep["classification"]["point"] == pytest.approx([0, 0], abs=1e-9)


def test_classify_undecided_exit_code(tmp_path):
    cfg = write(tmp_path, "u.json", {"field": {"builtin": "vdp"}, "x0": [2, 0],
                                     "budgets": {"T_pre": 0, "t_probe": 1, "t_max": 0.5}})
    assert run(tmp_path, "classify", cfg) == 2


def test_classify_certificate_failure_exit_code(tmp_path):
    # an explicit but tangent window makes the crossing count fail after zero retries
    cfg = write(tmp_path, "t.json", {"field": {"builtin": "center"}, "x0": [1, 0],
                                     "budgets": {"T_pre": 0},
                                     "windows": [{"center": [-1.5, 0], "radius": 0.5}],
                                     "retries": 0})
    assert run(tmp_path, "classify", cfg) == 3


def test_classify_vdp_auto_windows(tmp_path):
    cfg = write(tmp_path, "v.json", {"field": {"builtin": "vdp", "params": {"mu": 1}},
                                     "x0": [0.1, 0], "seed": 7,
                                     "windows": {"auto": {"n": 20, "r_range": [0.01, 0.2]}}})
    assert run(tmp_path, "classify", cfg) == 0
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    flux = [c for c in rep["certificates"] if c["kind"] == "flux_bound"]
    assert len(flux) == 20 and all(c["pass"] for c in flux)
    for c in rep["certificates"]:
        assert "stage" in c["context"] or c["kind"] == "equilibrium"


def test_seed_flag_overrides_config(tmp_path):
    doc = {"field": {"builtin": "center"}, "x0": [1, 0], "seed": 1, "budgets": {"T_pre": 0},
           "windows": {"auto": {"n": 2, "r_range": [0.05, 0.1]}}}
    cfg = write(tmp_path, "c.json", doc)
    assert run(tmp_path, "classify", cfg, "a", "--seed", "99") == 0
    rep = json.loads((tmp_path / "a" / "report.json").read_text())
    assert rep["seed"] == 99


def test_certify_reuses_stored_trace(tmp_path):
    base = {"field": {"builtin": "center"}, "x0": [1, 0], "budgets": {"T_pre": 0}, "seed": 3}
    cfg = write(tmp_path, "c.json", base)
    assert run(tmp_path, "classify", cfg, "fresh") == 0
    trace = tmp_path / "fresh" / "trace.json"
    new = write(tmp_path, "w.json", {**base, "windows": [{"center": [-1, 0], "radius": 0.1},
                                                         {"center": [-0.6, 0.8], "radius": 0.05}]})
    assert run(tmp_path, "certify", new, "stored", "--trace", str(trace)) == 0
    assert run(tmp_path, "classify", new, "fresh2") == 0
    a = json.loads((tmp_path / "stored" / "report.json").read_text())["certificates"]
    b = json.loads((tmp_path / "fresh2" / "report.json").read_text())["certificates"]
    fa = [c["measured"] for c in a if c["kind"] == "flux_bound"]
    fb = [c["measured"] for c in b if c["kind"] == "flux_bound"]
    assert len(fa) == 2
    for x, y in zip(fa, fb):
        for k in x:
            assert x[k] == pytest.approx(y[k], abs=1e-9)


def test_certify_rejects_corrupted_and_stale(tmp_path, capsys):
    base = {"field": {"builtin": "center"}, "x0": [1, 0], "budgets": {"T_pre": 0}}
    cfg = write(tmp_path, "c.json", base)
    assert run(tmp_path, "classify", cfg, "fresh") == 0
    trace = tmp_path / "fresh" / "trace.json"
    broken = write(tmp_path, "broken.json", trace.read_text()[:2000])
    assert run(tmp_path, "certify", cfg, "x", "--trace", str(broken)) == 1
    doc = json.loads(trace.read_text())
    del doc["curves"]
    missing = write(tmp_path, "missing.json", doc)
    assert run(tmp_path, "certify", cfg, "x", "--trace", str(missing)) == 1
    assert "'curves' is a required property" in capsys.readouterr().err
    other = write(tmp_path, "v.json", {**base, "field": {"builtin": "vdp"}})
    assert run(tmp_path, "certify", other, "x", "--trace", str(trace)) == 1
    assert "stale trace" in capsys.readouterr().err


def test_report_is_byte_stable(tmp_path):
    cfg = write(tmp_path, "v.json", {"field": {"builtin": "vdp"}, "x0": [0.1, 0], "seed": 2,
                                     "windows": {"auto": {"n": 4, "r_range": [0.02, 0.1]}}})
    assert run(tmp_path, "classify", cfg, "a") == 0
    assert run(tmp_path, "classify", cfg, "b") == 0
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()


def test_published_schemas_match_code():
    from pathlib import Path
    from planarmin.cli import CONFIG_SCHEMA, TRACE_SCHEMA
    docs = Path(__file__).resolve().parents[1] / "docs"
    assert json.loads((docs / "config.schema.json").read_text()) == CONFIG_SCHEMA
    assert json.loads((docs / "trace.schema.json").read_text()) == TRACE_SCHEMA


@pytest.mark.parametrize("name", ["center", "vdp", "hopf"])
def test_shipped_configs_classify(tmp_path, name):
    from pathlib import Path
    cfg = Path(__file__).resolve().parents[1] / "configs" / f"{name}.json"
    assert run(tmp_path, "classify", cfg) == 0
