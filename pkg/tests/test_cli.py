import json
import subprocess
import sys

import pytest

from oppqbm.cli import ConfigError, RunConfig, build_config, main, make_parser, parse_list, parse_window


def run(argv, tmp_path):
    return main(argv + ["--cache-dir", str(tmp_path / "cache")])


def test_parse_list():
    assert parse_list("6-14,20") == list(range(6, 15)) + [20]
    assert parse_list("10-100:10") == list(range(10, 101, 10))
    assert parse_list("5") == [5]
    for bad in ("", "9-3", "1-5:0"):
        with pytest.raises(ConfigError):
            parse_list(bad)


def test_parse_window():
    assert parse_window("4:6") == ("4", "6")
    assert parse_window("-4:-3") == ("-4", "-3")
    for bad in ("4", "a:b", ":3"):
        with pytest.raises(ConfigError):
            parse_window(bad)


def test_config_validation():
    cfg = RunConfig(orders="3,2", windows=["0:1"])
    with pytest.raises(ConfigError):
        cfg.validate("minima")
    with pytest.raises(ConfigError):
        RunConfig(digits=20).validate("cache")
    with pytest.raises(ConfigError):
        RunConfig(orders="3", windows=["2:1"]).validate("scan")
    with pytest.raises(ConfigError):
        RunConfig(orders="3", ms="1", windows=["0:1"]).validate("scan")
    RunConfig(orders="3", windows=["0:1"]).validate("scan")
    assert RunConfig(ms="0-2").order_list() == [2, 9, 20]


def test_yaml_config_and_flag_override(tmp_path):
    cfg_file = tmp_path / "run.yaml"
    cfg_file.write_text("problem: qzm\nparams:\n  B: 0.02\n  eps0: 0.5\ndigits: 70\nms: 2-4\nwindow: 0.51:0.52\n")
    args = make_parser().parse_args(["minima", "--config", str(cfg_file), "--digits", "80", "--param", "B=0.2"])
    cfg = build_config(args)
    assert cfg.problem == "qzm" and cfg.digits == 80
    assert cfg.params == {"B": "0.2", "eps0": "0.5"}  # decimal strings, never floats
    assert cfg.windows == ["0.51:0.52"]
    bad = tmp_path / "bad.yaml"
    bad.write_text("colour: blue\n")
    with pytest.raises(ConfigError):
        build_config(make_parser().parse_args(["minima", "--config", str(bad)]))


def test_exit_codes(tmp_path, capsys):
    assert run(["minima", "--problem", "harmonic", "--orders", "5", "--window", "4:4", "--digits", "40"], tmp_path) == 2
    assert run(["minima", "--problem", "harmonic", "--orders", "5", "--window", "4:6", "--digits", "20"], tmp_path) == 2
    assert run(["minima", "--problem", "nope", "--orders", "5", "--window", "4:6"], tmp_path) == 2
    # monotone functional on the window: numerical failure
    assert run(["minima", "--problem", "harmonic", "--orders", "12", "--window", "2:2.5", "--digits", "40"], tmp_path) == 4
    # projections at this order cancel away most of 30 digits: precision failure
    assert run(["minima", "--problem", "quartic", "--orders", "400", "--window", "22:23", "--digits", "30"], tmp_path) == 3
    assert "precision exhausted" in capsys.readouterr().err


def test_scan_csv_and_determinism(tmp_path):
    out1, out2 = tmp_path / "a" / "scan.csv", tmp_path / "b" / "scan.csv"
    argv = ["scan", "--problem", "harmonic", "--orders", "5,8", "--window", "0:20", "--points", "40", "--digits", "40"]
    assert run(argv + ["--out", str(out1)], tmp_path) == 0
    assert run(argv + ["--out", str(out2)], tmp_path) == 0
    data = out1.read_bytes()
    assert data == out2.read_bytes() and b"\r" not in data
    lines = data.decode().splitlines()
    assert lines[0] == "E,I,value,log10_value" and len(lines) == 1 + 2 * 41
    rec = json.loads((tmp_path / "a" / "scan.json").read_text())
    assert rec["command"] == "scan" and len(rec["rows"]) == 82
    assert (tmp_path / "a" / "scan.timing.json").exists()


def test_minima_ground_state_flat(tmp_path):
    out = tmp_path / "m.csv"
    assert run(["minima", "--problem", "harmonic", "--orders", "4-8", "--window", "0.5:2", "--digits", "40",
                "--out", str(out)], tmp_path) == 0
    rows = out.read_text().splitlines()[1:]
    assert len(rows) == 5
    values = {r.split(",")[5][:8] for r in rows}
    assert values == {"0.398942"}


def test_minima_then_cache_status(tmp_path, capsys):
    out = tmp_path / "m.csv"
    assert run(["minima", "--problem", "quartic", "--orders", "20", "--window", "13:14.5", "--digits", "40",
                "--out", str(out)], tmp_path) == 0
    assert len(out.read_text().splitlines()) == 2
    capsys.readouterr()
    assert main(["cache", "status", "--cache-dir", str(tmp_path / "cache")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["entries"] >= 2 and "basis" in report["by_kind"] and "checkpoint" in report["by_kind"]
    assert main(["cache", "clear", "--cache-dir", str(tmp_path / "cache")]) == 0
    capsys.readouterr()
    main(["cache", "status", "--cache-dir", str(tmp_path / "cache")])
    assert json.loads(capsys.readouterr().out)["entries"] == 0


def test_bound_rerun_resumes_identically(tmp_path):
    argv = ["bound", "--problem", "harmonic", "--orders", "6-9", "--window", "4:6", "--cap", "3.6", "--digits", "40"]
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    assert run(argv + ["--out", str(a)], tmp_path) == 0      # fresh
    assert run(argv + ["--out", str(b)], tmp_path) == 0      # from checkpoints
    assert main(argv + ["--out", str(c), "--no-cache"]) == 0  # no cache at all
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "c.json").read_bytes()
    first = a.read_text().splitlines()[1].split(",")
    assert f"{float(first[7]):.5f}" == "4.07088" and f"{float(first[8]):.5f}" == "5.00593"


def test_corrupt_cache_entry_survives_run(tmp_path, capsys):
    argv = ["minima", "--problem", "harmonic", "--orders", "6,7", "--window", "4:6", "--digits", "40"]
    assert run(argv, tmp_path) == 0
    for f in (tmp_path / "cache").glob("*.json"):
        f.write_text(f.read_text()[:-5])
    capsys.readouterr()
    assert run(argv, tmp_path) == 0
    assert main(["cache", "status", "--cache-dir", str(tmp_path / "cache")]) == 0


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "oppqbm", "cache", "status", "--cache-dir", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0 and json.loads(r.stdout)["entries"] == 0
