import json
import re

import pytest

from cascademap.cli import EXIT_INFEASIBLE, EXIT_IO, EXIT_OK, main, parse_mapping, CliError


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_search_text(capsys):
    code, out, _ = run(capsys, "search", "--model", "jsc-m")
    assert code == EXIT_OK
    assert "floorplan" in out and "total AIEs" in out and "latency:" in out
    assert re.search(r"total\s+\d+\s+[\d.]+", out)


def test_search_json_matches_text(capsys):
    _, text, _ = run(capsys, "search", "--model", "jsc-m")
    _, js, _ = run(capsys, "search", "--model", "jsc-m", "--format", "json")
    d = json.loads(js)["designs"][0]
    lat = d["latency"]
    assert re.search(rf"total\s+{lat['total_cycles']}\s+{lat['total_ns']:.1f}", text)
    for t in lat["terms"]:
        assert re.search(rf"{re.escape(t['name'])}\s+{t['kind']}\s+{t['cycles']}\b", text)


def test_topk(capsys):
    _, js, _ = run(capsys, "search", "--model", "two-layer", "--topk", "3", "--format", "json")
    totals = [d["latency"]["total_cycles"] for d in json.loads(js)["designs"]]
    assert len(totals) == 3 and totals == sorted(totals)


def test_infeasible_exit_code(tmp_path, capsys):
    arch = tmp_path / "tiny.arch"
    arch.write_text("[arch]\nrows = 1\ncols = 1\nplio = 32\n")
    code, _, err = run(capsys, "search", "--model", "jsc-m", "--arch", str(arch))
    assert code == EXIT_INFEASIBLE
    assert "AIE budget" in err


def test_missing_profile_names_path(capsys):
    code, _, err = run(capsys, "estimate", "--model", "two-layer", "--mapping", "1x4x1,1x4x1",
                       "--profile", "/nonexistent/p.profile")
    assert code == EXIT_IO and "/nonexistent/p.profile" in err


def test_bad_model(tmp_path, capsys):
    bad = tmp_path / "bad.model"
    bad.write_text("name = x\ninput = 8x8\ndense 8 foo\n")
    code, _, err = run(capsys, "search", "--model", str(bad))
    assert code == EXIT_IO and "line 3" in err


def test_estimate_explicit_mapping(tmp_path, capsys):
    model = tmp_path / "mm.model"
    model.write_text("name = mm\ninput = 32x32\ndense 32\n")
    code, out, _ = run(capsys, "estimate", "--model", str(model), "--mapping", "2x2x1")
    assert code == EXIT_OK
    assert "jloops=" in out and "jloop_cycles=" in out and "overhead=" in out


def test_simulate_pass(capsys, tmp_path):
    trace = tmp_path / "t.csv"
    code, out, _ = run(capsys, "simulate", "--model", "deepsets-32", "--trace", str(trace))
    assert code == EXIT_OK
    assert "functional: PASS (exact)" in out and "deviation:" in out
    assert trace.read_text().startswith("cycle,entity,event,payload_bits")


def test_simulate_fixture_components(capsys):
    _, dma, _ = run(capsys, "simulate", "--model", "two-layer", "--mapping", "1x4x2,1x4x1")
    _, cas, _ = run(capsys, "simulate", "--model", "two-layer", "--mapping", "1x4x1,1x4x1")
    assert "L0->L1=74" in dma
    assert re.search(r"L0->L1=7\b", cas) and "cascade" in cas


def test_design_file_flow(tmp_path, capsys):
    path = tmp_path / "d.json"
    assert run(capsys, "search", "--model", "jsc-m", "--save-design", str(path))[0] == EXIT_OK
    code, out, _ = run(capsys, "simulate", "--model", "jsc-m", "--design", str(path))
    assert code == EXIT_OK and "PASS" in out
    d = json.loads(path.read_text())
    d["placement"][1] = d["placement"][0]
    path.write_text(json.dumps(d))
    code, _, err = run(capsys, "simulate", "--model", "jsc-m", "--design", str(path))
    assert code == EXIT_IO and "overlap" in err


def test_calibrate(tmp_path, capsys):
    out_path = tmp_path / "fit.profile"
    code, out, _ = run(capsys, "calibrate", "--no-br", "--output", str(out_path))
    assert code == EXIT_OK and "MAPE" in out
    assert "[l_o]" in out_path.read_text()
    code, js, _ = run(capsys, "calibrate", "--format", "json")
    assert json.loads(js)["mape_pct"] > 0


def test_calibrate_custom_file(tmp_path, capsys):
    csv = tmp_path / "m.csv"
    csv.write_text("H1,W1,W2,variant,br,latency_ns\n32,32,32,dma-dma,0,129.6\n64,64,64,dma-dma,0,868\n")
    code, js, _ = run(capsys, "calibrate", "--measurements", str(csv), "--format", "json")
    params = json.loads(js)["params"]
    assert params["l_epi"] == pytest.approx(1.125)
    assert params["l_o[dma-dma]"] == pytest.approx(25.0)


def test_parse_mapping():
    assert parse_mapping("2x2x1, 4x1x1") == ((2, 2, 1), (4, 1, 1))
    with pytest.raises(CliError):
        parse_mapping("2x2")
