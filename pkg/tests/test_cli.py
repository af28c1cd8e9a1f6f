import csv
import json

from vnfmig.cli import EXIT_ERROR, EXIT_INFEASIBLE, EXIT_OK, main


def test_generate_then_plan(tmp_path, capsys):
    assert main(["generate", "--preset", "trapezoid", "--seed", "2", "--out", str(tmp_path / "g")]) == EXIT_OK
    scen = next((tmp_path / "g").iterdir())
    code = main(["plan", "--scenario", str(scen), "--out", str(tmp_path / "p")])
    assert code in (EXIT_OK, EXIT_INFEASIBLE)
    rows = list(csv.DictReader((tmp_path / "p" / "agents.csv").open()))
    assert [r["agent"] for r in rows]
    assert main(["validate", str(tmp_path / "p" / "plan.json")]) == code


def test_plan_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        main(["plan", "--preset", "three-tier", "--seed", "5", "--out", str(tmp_path / d)])
    for name in ("plan.json", "runs.csv", "agents.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_validate_flags_tampering(tmp_path):
    main(["plan", "--preset", "tiny", "--seed", "0", "--out", str(tmp_path)])
    data = json.loads((tmp_path / "plan.json").read_text())
    data["feasible"] = not data["feasible"]
    (tmp_path / "bad.json").write_text(json.dumps(data))
    assert main(["validate", str(tmp_path / "bad.json")]) == EXIT_INFEASIBLE


def test_sweep_writes_tables(tmp_path):
    assert main(["sweep", "--experiment", "fig1", "--seeds", "2", "--out", str(tmp_path)]) == EXIT_OK
    assert len((tmp_path / "runs.csv").read_text().splitlines()) == 1 + 2 * 4
    assert (tmp_path / "summary.csv").exists()


def test_oracle_modes(tmp_path):
    assert main(["oracle", "exhaustive", "--preset", "trapezoid", "--out", str(tmp_path / "e")]) == EXIT_OK
    rows = list(csv.DictReader((tmp_path / "e" / "oracle.csv").open()))
    assert float(rows[0]["value"]) >= float(rows[1]["value"]) - 1e-12
    assert main(["oracle", "joint", "--preset", "tiny", "--out", str(tmp_path / "j")]) == EXIT_OK
    rows = list(csv.DictReader((tmp_path / "j" / "oracle.csv").open()))
    assert float(rows[0]["value"]) <= float(rows[1]["value"]) * (1 + 1e-6)


def test_errors_exit_two(capsys):
    assert main(["plan", "--scenario", "/nonexistent.json"]) == EXIT_ERROR
    assert main(["oracle", "grid", "--preset", "tiny"]) == EXIT_ERROR
    assert capsys.readouterr().err
