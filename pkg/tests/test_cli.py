import csv

import pytest

from voltdrop.cli import main

TINY = """\
flash.blocks = 64
flash.pages_per_block = 64
wl.wss_bytes = 4M
wl.iops = 40
wl.n_requests = 300
faults.count = 2
"""


def write_cfg(tmp_path, extra="", name="run.cfg"):
    p = tmp_path / name
    p.write_text(TINY + extra)
    return p


def run(tmp_path, cfg, out="out", *more):
    return main(["run", "--config", str(cfg), "--scale", "1", "--out", str(tmp_path / out), *more])


def test_single_run_outputs(tmp_path, capsys):
    assert run(tmp_path, write_cfg(tmp_path)) == 0
    out = tmp_path / "out"
    assert len(list((out / "verdicts").glob("*.csv"))) == 1
    rows = list(csv.reader((out / "report.csv").open()))
    assert len(rows) == 2
    header = next(csv.reader((next((out / "verdicts").glob("*.csv"))).open()))
    assert header == ["req_id", "op", "lba", "len", "completed", "notApplied", "class"]
    assert "custom" in capsys.readouterr().out


def test_sequence_sweep_has_four_rows(tmp_path):
    assert run(tmp_path, write_cfg(tmp_path, "experiment = sequence\n")) == 0
    rows = list(csv.reader((tmp_path / "out" / "report.csv").open()))
    assert [r[rows[0].index("value")] for r in rows[1:]] == ["RAR", "RAW", "WAR", "WAW"]


def test_time_interval_extras(tmp_path):
    assert run(tmp_path, write_cfg(tmp_path, "experiment = time_interval\n")) == 0
    assert (tmp_path / "out" / "ack_delays.csv").exists()
    assert (tmp_path / "out" / "delay_histogram.csv").read_text().startswith("bin_ms,failures")


def test_rerun_is_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path)
    assert run(tmp_path, cfg, "a", "--seed", "9") == 0
    assert run(tmp_path, cfg, "b", "--seed", "9") == 0
    a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert a == b
    for rel in a:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_verify_round_trip(tmp_path, capsys):
    assert run(tmp_path, write_cfg(tmp_path)) == 0
    out = tmp_path / "out"
    verdicts = next((out / "verdicts").glob("*.csv"))
    trace = next((out / "traces").glob("*.trace"))
    dump = next((out / "dumps").glob("*.json"))
    assert main(["verify", "--trace", str(trace), "--flash-dump", str(dump),
                 "--out", str(tmp_path / "again.csv")]) == 0
    assert (tmp_path / "again.csv").read_bytes() == verdicts.read_bytes()


@pytest.mark.parametrize("text", ["wl.write_pct = 150\n", "nonsense.key = 3\n"])
def test_config_error_exit_code(tmp_path, capsys, text):
    p = tmp_path / "bad.cfg"
    p.write_text(text)
    assert main(["run", "--config", str(p)]) == 2
    assert "line 1" in capsys.readouterr().err


def test_bad_scale_is_config_error(tmp_path):
    assert run(tmp_path, write_cfg(tmp_path), "out", "--scale", "0") == 2


def test_infeasible_fault_count_is_config_error(tmp_path, capsys):
    bad = tmp_path / "many.cfg"
    bad.write_text(TINY.replace("faults.count = 2", "faults.count = 50"))
    assert run(tmp_path, bad) == 2
    assert "cannot hold" in capsys.readouterr().err


def test_unwritable_output_exit_code(tmp_path, capsys):
    (tmp_path / "blocker").write_text("a file, not a directory")
    assert run(tmp_path, write_cfg(tmp_path), "blocker") == 3
    assert "cannot write" in capsys.readouterr().err


def test_verify_missing_files(tmp_path, capsys):
    assert main(["verify", "--trace", str(tmp_path / "x"), "--flash-dump", str(tmp_path / "y")]) == 3
    assert "cannot read" in capsys.readouterr().err


def test_verify_corrupt_trace(tmp_path, capsys):
    (tmp_path / "t.trace").write_text("1 2 3\n")
    (tmp_path / "d.json").write_text("{}")
    assert main(["verify", "--trace", str(tmp_path / "t.trace"),
                 "--flash-dump", str(tmp_path / "d.json")]) == 3
