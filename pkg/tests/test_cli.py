import json

import pytest

from circdesign.cli import DEFAULTS, main, parse_range


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, out


def run_json(argv, capsys):
    code, out = run(argv, capsys)
    return code, json.loads(out.strip().splitlines()[-1])


def test_solve_smallest_instance(capsys):
    code, rec = run_json(["solve", "--k", 4, "--t", 2, "--model", "undirectional"], capsys)
    assert code == 0
    assert rec["x_star"] == pytest.approx([1 / 3], abs=1e-8)
    assert rec["y_star"] == pytest.approx(2 / 9, abs=1e-10)
    for key in ("k", "t", "model", "sigma", "support", "get_residual", "path", "weights"):
        assert key in rec
    assert sum(rec["weights"].values()) == pytest.approx(1.0, abs=1e-12)


def test_zero_information_exit_code(capsys):
    code, rec = run_json(["solve", "--k", 3, "--t", 2], capsys)
    assert code == 2 and rec["error"] == "zero information"
    code, _ = run_json(["solve", "--k", 2, "--t", 2, "--model", "crossover"], capsys)
    assert code == 2


def test_output_file_and_summary(tmp_path, capsys):
    out = tmp_path / "cert.json"
    code, summary = run_json(["solve", "--k", 5, "--t", 3, "--output", out], capsys)
    assert code == 0
    full = json.loads(out.read_text())
    assert full["y_star"] == summary["y_star"]


def test_exact_is_deterministic_and_matches_certificate_route(tmp_path, capsys):
    cert = tmp_path / "cert.json"
    run(["solve", "--k", 5, "--t", 4, "--output", cert], capsys)
    a, b, c = tmp_path / "a.json", tmp_path / "b.json", tmp_path / "c.json"
    assert run(["exact", "--certificate", cert, "--n", 6, "--output", a], capsys)[0] == 0
    assert run(["exact", "--certificate", cert, "--n", 6, "--output", b], capsys)[0] == 0
    assert run(["exact", "--k", 5, "--t", 4, "--n", 6, "--output", c], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()
    rec = json.loads(a.read_text())
    assert rec["n"] == 6 and len(rec["blocks"]) == 6
    assert rec["efficiencies"]["e_D"] >= 0.986


def test_exact_without_improvement_exits_four(tmp_path, capsys):
    out = tmp_path / "d.json"
    code, _ = run(["exact", "--k", 8, "--t", 3, "--n", 15, "--model", "crossover",
                   "--restarts", 2, "--output", out], capsys)
    assert code == 4
    assert json.loads(out.read_text())["n"] == 15  # the best design found is still written


def test_evaluate_round_trip(tmp_path, capsys):
    design = tmp_path / "d.json"
    run(["exact", "--k", 6, "--t", 3, "--n", 8, "--model", "undirectional", "--output", design],
        capsys)
    written = json.loads(design.read_text())
    code, rec = run_json(["evaluate", design], capsys)
    assert code == 0
    for f in ("e_A", "e_D", "e_E", "e_T"):
        assert rec["efficiencies"][f] == pytest.approx(written["efficiencies"][f], abs=1e-12)


def test_evaluate_csv_design(tmp_path, capsys):
    path = tmp_path / "d.csv"
    path.write_text("p1,p2,p3,p4\n1,1,2,2\n1,2,1,2\n2,2,1,1\n2,1,2,1\n")
    code, rec = run_json(["evaluate", path, "--t", 2, "--model", "undirectional"], capsys)
    assert code == 0 and rec["n"] == 4
    assert 0 < rec["efficiencies"]["e_A"] <= 1 + 1e-9


def test_evaluate_flags_disconnected_design(tmp_path, capsys):
    path = tmp_path / "d.csv"
    path.write_text("p1,p2,p3,p4,p5\n1,1,2,3,4\n1,1,2,3,4\n")
    code, rec = run_json(["evaluate", path, "--t", 5], capsys)
    assert code == 0 and rec["efficiencies"]["disconnected"]


@pytest.mark.parametrize("content,extra", [
    ("p1,p2,p3,p4\n1,1,2,9\n", ["--t", 3]),
    ('{"k": 4, "blocks": [[1,1,2,2]]}', []),
    ("not a design", []),
])
def test_malformed_design_exits_six(tmp_path, capsys, content, extra):
    path = tmp_path / ("d.csv" if content.startswith("p1") else "d.json")
    path.write_text(content)
    code, rec = run_json(["evaluate", path, *extra], capsys)
    assert code == 6 and "error" in rec


def test_malformed_certificate_exits_six(tmp_path, capsys):
    bad = tmp_path / "c.json"
    bad.write_text("{}")
    assert run(["exact", "--certificate", bad, "--n", 4], capsys)[0] == 6


def test_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"k": 4, "t": 2, "model": "undirectional", "max-iters": 500}))
    code, rec = run_json(["solve", "--config", cfg], capsys)
    assert code == 0 and rec["model"] == "undirectional" and rec["k"] == 4
    code, rec = run_json(["solve", "--config", cfg, "--k", 6], capsys)
    assert code == 0 and rec["k"] == 6 and rec["x_star"] == pytest.approx([0.4], abs=1e-8)
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    assert run(["solve", "--config", bad], capsys)[0] == 6
    assert DEFAULTS["model"] == "directional" and DEFAULTS["seed"] == 0


def test_symmetrize(tmp_path, capsys):
    code, rec = run_json(["symmetrize", "--rep", "1_4,2_4,3_3", "--t", 5,
                          "--model", "undirectional"], capsys)
    assert code == 0 and rec["n"] == 20
    assert rec["efficiencies"]["e_A"] == pytest.approx(0.9862, abs=5e-4)
    code, rec = run_json(["symmetrize", "--rep", "1,1,2,2,3,3", "--t", 3, "--copies", 2], capsys)
    assert code == 0 and rec["n"] == 12


def test_symmetrize_injection_cap(capsys):
    code, rec = run_json(["symmetrize", "--rep", "1,1,2,3,2,3", "--t", 6, "--n-cap", 100], capsys)
    assert code == 5 and rec["n"] == 120
    code, rec = run_json(["symmetrize", "--rep", "1,1,2,3,2,3", "--t", 6], capsys)
    assert code == 0 and rec["n"] == 120


def test_csv_output(tmp_path, capsys):
    out = tmp_path / "d.csv"
    code, _ = run(["exact", "--k", 5, "--t", 3, "--n", 4, "--format", "csv", "--output", out], capsys)
    assert code == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 5 and len(lines[0].split(",")) == 5


def test_table_commands(capsys):
    code, rec = run_json(["table", "t2", "--k", "4..7"], capsys)
    assert code == 0 and rec["max_deviation"] < 1e-8 and len(rec["rows"]) == 4
    code, rec = run_json(["table", "supplement", "--k", 11], capsys)
    assert code == 0 and rec["all_supports_match"]
    assert rec["rows"][0]["p_s1"] == pytest.approx(0.8034, abs=1e-3)


def test_parse_range():
    assert parse_range("11..14", (0, 0)) == [11, 12, 13, 14]
    assert parse_range("6", (0, 0)) == [6]
    assert parse_range(None, (4, 6)) == [4, 5, 6]
