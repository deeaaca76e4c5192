import csv
import json
import math
import os
import subprocess
import sys


from contactlab.cli import EXIT_CAP, EXIT_INPUT, EXIT_OK, main


def run(argv, cwd):
    return subprocess.run([sys.executable, "-m", "contactlab.cli", *argv], cwd=cwd, capture_output=True, text=True)


def read_rows(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        return header, list(csv.DictReader(fh))


def test_survival_on_single_site(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kind": "survival", "group": "C1", "kernel": "none", "delta": 1.0,
                               "seed": 3, "replicas": 20_000, "params": {"horizon": 1.0}}))
    rc = main(["run", "--config", str(cfg), "--out-dir", str(tmp_path / "o")])
    assert rc == EXIT_OK
    header, rows = read_rows(tmp_path / "o" / "survival.csv")
    assert header.startswith("# contactlab-csv v1 kind=survival group=C1")
    rho, se = float(rows[0]["rho_hat"]), float(rows[0]["rho_se"])
    assert abs(rho - math.exp(-1)) < 4 * se
    report = json.loads((tmp_path / "o" / "survival.json").read_text())
    assert report["config"]["seed"] == 3 and "wall_clock_seconds" in report


def test_same_seed_gives_identical_csv(tmp_path):
    argv = ["simulate", "--group", "Z", "--kernel", "a:2,A:1", "--obs", "0.5,1,2", "--replicas", "500",
            "--seed", "99"]
    for d in ("x", "y"):
        assert main(argv + ["--out-dir", str(tmp_path / d)]) == EXIT_OK
    a = (tmp_path / "x" / "simulate.csv").read_bytes()
    assert a == (tmp_path / "y" / "simulate.csv").read_bytes()
    assert main(argv[:-1] + ["100", "--out-dir", str(tmp_path / "z")]) == EXIT_OK
    assert a != (tmp_path / "z" / "simulate.csv").read_bytes()


def test_invalid_group_names_the_field(tmp_path, capsys):
    rc = main(["survival", "--group", "Q8", "--out-dir", str(tmp_path)])
    assert rc == EXIT_INPUT
    assert "'group'" in capsys.readouterr().err
    assert main(["survival", "--replicas", "0", "--out-dir", str(tmp_path)]) == EXIT_INPUT
    assert main(["survival", "--delta", "fast", "--out-dir", str(tmp_path)]) == EXIT_INPUT
    assert not os.listdir(tmp_path)


def test_bad_json_reports_line(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{\n  "kind": "survival",\n  "group": "Z"\n  "delta": 1\n}\n')
    assert main(["run", "--config", str(cfg)]) == EXIT_INPUT
    assert "line 4" in capsys.readouterr().err
    cfg.write_text('{\n  "kind": "survival",\n  "params": {"horizon": 1, "colour": 2}\n}\n')
    assert main(["run", "--config", str(cfg)]) == EXIT_INPUT
    err = capsys.readouterr().err
    assert "params.colour" in err and "line 3" in err


def test_flags_override_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kind": "survival", "group": "C1", "kernel": "none", "seed": 1,
                               "replicas": 100, "params": {"horizon": 1.0}}))
    out = tmp_path / "o"
    assert main(["survival", "--config", str(cfg), "--seed", "7", "--horizon", "0.5", "--out-dir", str(out)]) == EXIT_OK
    header, rows = read_rows(out / "survival.csv")
    assert "seed=7" in header and rows[0]["horizon"] == "0.5"


def test_time_alias(tmp_path):
    argv = ["rw-decay", "--group", "F2", "--kernel", "nn(1)", "--delta", "0.5", "--replicas", "200",
            "--m-max", "4", "--walks", "2"]
    assert main(argv + ["--time", "2", "--out-dir", str(tmp_path / "a")]) == EXIT_OK
    assert main(argv + ["--t", "2", "--out-dir", str(tmp_path / "b")]) == EXIT_OK
    assert (tmp_path / "a" / "rw-decay.csv").read_bytes() == (tmp_path / "b" / "rw-decay.csv").read_bytes()


def test_oracle_cap_exit_code(tmp_path, capsys):
    assert main(["oracle-check", "--group", "C5", "--replicas", "10", "--out-dir", str(tmp_path)]) == EXIT_CAP
    assert "cap" in capsys.readouterr().err


def test_global_flags_before_subcommand(tmp_path):
    p = run(["--seed", "5", "--out-dir", "o", "ball-profile", "--group", "F2", "--radius", "3"], tmp_path)
    assert p.returncode == 0, p.stderr
    header, rows = read_rows(tmp_path / "o" / "ball-profile.csv")
    assert [int(r["ball_size"]) for r in rows] == [1, 5, 17, 53]


def test_accept_subcommand(tmp_path):
    p = run(["accept", "--only", "11", "--out-dir", "o"], tmp_path)
    assert p.returncode == 0, p.stdout + p.stderr
    assert "[PASS] criterion 11" in p.stdout
