import csv
import json
import subprocess
import sys

import pytest

from dpow.cli import main, parse_int, parse_int_list

SAFE = {"byzantine": [[3, "equivocate"]], "drop_rate": 0.2, "latency": [0.01, 0.3], "runs": 5}


def test_power_notation():
    assert parse_int("2^128") == 2**128
    assert parse_int("2**16") == 65536
    assert parse_int_list("1,2^3, 10") == [1, 8, 10]


def test_mine_bench_writes_csv_and_manifest(tmp_path, capsys):
    out = tmp_path / "mb.csv"
    assert main(["mine-bench", "--miners", "7", "--trials", "25", "--seed", "42",
                 "--output", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 50 and {r["group"] for r in rows} == {"solo", "sharded"}
    man = json.loads((tmp_path / "mb.csv.manifest.json").read_text())
    assert man["command"] == "mine-bench" and man["seed"] == 42
    assert man["config"]["miners"] == 7 and man["outputs"] == [str(out)]
    text = capsys.readouterr().out
    assert "solo" in text and "sharded" in text and "IQR" in text


def test_mine_bench_is_reproducible_from_manifest(tmp_path):
    out = tmp_path / "a.csv"
    main(["mine-bench", "--trials", "10", "--seed", "4", "--output", str(out)])
    man = json.loads((tmp_path / "a.csv.manifest.json").read_text())
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(man["config"]))
    main(["mine-bench", "--config", str(cfg), "--output", str(tmp_path / "b.csv")])
    assert out.read_text() == (tmp_path / "b.csv").read_text()


def test_mine_bench_single_miner_arms_match(tmp_path, capsys):
    main(["mine-bench", "--miners", "1", "--trials", "10", "--output", str(tmp_path / "x.csv")])
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split("mean=")[1].split()[0] == lines[1].split("mean=")[1].split()[0]


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"trials": 50, "miners": 3}))
    out = tmp_path / "o.csv"
    main(["mine-bench", "--config", str(cfg), "--trials", "4", "--output", str(out)])
    man = json.loads((tmp_path / "o.csv.manifest.json").read_text())
    assert man["config"]["trials"] == 4 and man["config"]["miners"] == 3


def test_pbft_table(capsys):
    assert main(["pbft-table", "--trials", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 7
    assert lines[1].split()[2:] == ["V", "V", "V"]  # A1
    assert lines[5].split()[2:] == ["I", "I", "I"]  # B2


def test_attack_prob_collision(capsys):
    assert main(["attack-prob", "--collision", "--m", "2^128"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "m,probability,form"
    assert float(out[1].split(",")[1]) == pytest.approx(0.5, rel=1e-6)


def test_attack_prob_scenario_and_mc(tmp_path, capsys):
    assert main(["attack-prob", "--N", "100", "--T", "50", "--M", "12", "--z", "6"]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert float(rows[0]["p_s"]) == 1.0 and "mc_estimate" not in rows[0]
    out = tmp_path / "g.csv"
    assert main(["attack-prob", "--N", "100", "--T", "10,20", "--M", "10", "--z", "2",
                 "--mc-trials", "100000", "--output", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 2 and rows[0]["mc_estimate"] != "" and rows[0]["mc_stderr"] != ""
    assert (tmp_path / "g.csv.manifest.json").exists()


@pytest.mark.parametrize("argv", [
    ["attack-prob", "--collision"],
    ["attack-prob", "--N", "10"],
    ["attack-prob", "--N", "10", "--T", "20", "--M", "4", "--z", "1"],
    ["attack-prob", "--N", "10", "--T", "2", "--M", "4", "--z", "1", "--mc-trials", "10"],
    ["simulate"],
    ["mine-bench", "--trials", "0"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "error" in capsys.readouterr().err


def test_unknown_flag_exits_2():
    with pytest.raises(SystemExit) as e:
        main(["mine-bench", "--miners", "many"])
    assert e.value.code == 2


def test_simulate_exit_codes_and_replay(tmp_path, capsys):
    good = tmp_path / "good.json"
    good.write_text(json.dumps(SAFE))
    assert main(["simulate", "--config", str(good), "--out-dir", str(tmp_path / "g"),
                 "--trace-run", "1"]) == 0
    report = json.loads((tmp_path / "g" / "safety_report.json").read_text())
    assert report["ok"] and report["runs"] == 5
    assert (tmp_path / "g" / "safety_report.json.manifest.json").exists()
    assert main(["simulate", "--replay", str(tmp_path / "g" / "run1.trace.jsonl")]) == 0

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**SAFE, "inject_double_commit": True}))
    assert main(["simulate", "--config", str(bad), "--out-dir", str(tmp_path / "b")]) == 1
    out = capsys.readouterr().out
    trace = [l for l in out.splitlines() if l.startswith("trace: ")][0][7:]
    assert main(["simulate", "--replay", trace]) == 1
    assert "replay matches recorded trace: yes" in capsys.readouterr().out


def test_module_entry_point_runs():
    r = subprocess.run([sys.executable, "-m", "dpow", "attack-prob", "--collision", "--m", "2^16"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("m,probability")
