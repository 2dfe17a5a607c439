import csv
import json
import subprocess
import sys

import pytest

from rapidmem.cli import SCENARIO_FILE, SUMMARY_FILE, TIMESERIES_FILE, main


def test_crash_writes_three_files(tmp_path, capsys):
    out = tmp_path / "crash"
    rc = main(["crash", "--n", "20", "--k", "5", "--h", "4", "--l", "2", "--fail", "2",
               "--at", "10", "--duration", "60", "--out", str(out)])
    assert rc == 0
    assert capsys.readouterr().out.strip() == "unique_sizes=2, agreement=OK"
    summary = json.loads((out / SUMMARY_FILE).read_text())
    assert summary["agreement"] == "OK" and summary["decisions"] == 1
    rows = list(csv.reader((out / TIMESERIES_FILE).open()))
    assert rows[0] == ["tick", "node", "size"]
    assert json.loads((out / SCENARIO_FILE).read_text())["n"] == 20


def test_replay_is_byte_identical(tmp_path, capsys):
    first, second = tmp_path / "a", tmp_path / "b"
    main(["partition", "--n", "12", "--k", "4", "--h", "3", "--l", "1", "--side", "2",
          "--duration", "150", "--at", "10", "--heal", "60", "--rejoin", "--out", str(first)])
    main(["replay", str(first / SCENARIO_FILE), "--out", str(second)])
    for name in (SCENARIO_FILE, SUMMARY_FILE, TIMESERIES_FILE):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_seed_env_override(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("RAPID_SEED", "0x2a")
    main(["loss", "--n", "10", "--k", "4", "--h", "3", "--l", "1", "--duration", "30",
          "--out", str(tmp_path)])
    assert json.loads((tmp_path / SCENARIO_FILE).read_text())["seed"] == 42


@pytest.mark.parametrize("argv", [["crash", "--h", "11"], ["crash", "--l", "0"],
                                  ["crash", "--fail", "100"], ["bound", "--delta", "0.6"],
                                  ["spectral", "--n", "2"], ["sensitivity", "--reps", "0"],
                                  ["crash", "--delay", "0,1"]])
def test_bad_parameters_exit_2(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2
    assert capsys.readouterr().err


def test_bad_replay_file(tmp_path, capsys):
    p = tmp_path / "s.json"
    p.write_text("{\"version\": 7}")
    with pytest.raises(SystemExit) as exc:
        main(["replay", str(p)])
    assert exc.value.code == 2


def test_bound_prints_value(capsys):
    assert main(["bound", "--k", "10", "--delta", "0.3", "--t", "2"]) == 0
    assert capsys.readouterr().out.strip() == "0.193"


def test_bound_with_monte_carlo(capsys):
    main(["bound", "--k", "10", "--delta", "0.3", "--t", "2", "--mc", "5000"])
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "0.193" and "within_bound=True" in lines[1]


def test_sensitivity_csv(tmp_path):
    out = tmp_path / "s.csv"
    main(["sensitivity", "--n", "100", "--hs", "7,8", "--ls", "2", "--fs", "2", "--reps", "2",
          "--out", str(out)])
    rows = list(csv.DictReader(out.open()))
    assert [(r["H"], r["L"], r["F"]) for r in rows] == [("7", "2", "2"), ("8", "2", "2")]


def test_spectral_csv(tmp_path):
    out = tmp_path / "g.csv"
    main(["spectral", "--n", "50", "--k", "4", "--seeds", "3", "--out", str(out)])
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 3 and all(0 < float(r["ratio"]) < 1 for r in rows)
    assert all(r["converged"] == "1" for r in rows)


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "rapidmem", "bound", "--k", "20", "--delta",
                          "0.1"], capture_output=True, text=True, check=True)
    assert float(out.stdout) > 0
