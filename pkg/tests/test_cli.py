import csv
import statistics
from pathlib import Path

import pytest

from mcfs2l import cli
from mcfs2l.cli import ConfigError, Scenario, compare, main, parse_int_list, run_cells
from mcfs2l.model import AggregateFrame, Schedule


def files_of(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file() and "timing" not in p.name}


@pytest.fixture
def serial(monkeypatch):
    monkeypatch.setenv("MCFS_THREADS", "1")


@pytest.mark.parametrize("text, values", [
    ("50,100", [50, 100]),
    ("1..4", [1, 2, 3, 4]),
    ("50..200:50", [50, 100, 150, 200]),
    ("7, 1..2", [7, 1, 2]),
])
def test_parse_int_list(text, values):
    assert parse_int_list(text) == values


@pytest.mark.parametrize("text", ["", "a", "5..1", "1..5:0", "1..2..3"])
def test_parse_int_list_errors(text):
    with pytest.raises(ConfigError):
        parse_int_list(text)


def test_run_writes_layout_and_is_byte_identical(tmp_path, serial, capsys):
    args = ["run", "--n", "20,40", "--seeds", "1..2", "--scenario", "s"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    root = tmp_path / "a" / "s"
    for algo in ("mcfs2l", "nwtt", "rnwtt"):
        for name in ("schedule.json", "metrics.csv", "gcl.csv", "timing.csv"):
            assert (root / algo / "40" / "2" / name).is_file()
    assert (root / "timing_summary.csv").is_file()
    assert files_of(root) == files_of(tmp_path / "b" / "s")
    assert "critical_acceptance_mean" in capsys.readouterr().out


def test_parallel_matches_serial(tmp_path, monkeypatch):
    scenario = Scenario(ns=[30], seeds=[1, 2, 3], algos=["mcfs2l", "rnwtt"])
    one = run_cells(scenario, 1)
    two = run_cells(scenario, 2)
    assert [r.files["schedule.json"] for r in one] == [r.files["schedule.json"] for r in two]


def test_flow_file_runs_are_repeatable(tmp_path, serial):
    flows = tmp_path / "flows.json"
    assert main(["generate", "--n", "60", "--seed", "5", "--out", str(flows)]) == 0
    for out in ("a", "b"):
        assert main(["run", "--flows", str(flows), "--algo", "mcfs2l", "--seeds", "1",
                     "--out", str(tmp_path / out)]) == 0
    a = (tmp_path / "a" / "default" / "mcfs2l" / "60" / "1" / "metrics.csv").read_bytes()
    b = (tmp_path / "b" / "default" / "mcfs2l" / "60" / "1" / "metrics.csv").read_bytes()
    assert a == b


@pytest.mark.parametrize("args", [
    ["run", "--algos", "nope"],
    ["run", "--n", "x"],
    ["run", "--seeds", "1,1"],
    ["run", "--flows", "/nonexistent/flows.json"],
    ["run", "--step-ns", "0", "--n", "5", "--seeds", "1"],
    ["run", "--critical-fraction", "2", "--n", "5"],
    ["bogus"],
])
def test_config_errors_exit_2(args, tmp_path, serial):
    assert main(args + ["--out", str(tmp_path)] if args[0] == "run" else args) == 2


def test_bad_thread_count_exits_2(tmp_path, monkeypatch):
    monkeypatch.setenv("MCFS_THREADS", "zero")
    assert main(["run", "--n", "5", "--seeds", "1", "--out", str(tmp_path)]) == 2


def test_verification_failure_exits_3(tmp_path, serial, monkeypatch, capsys):
    def broken(flows, topology, cfg):
        s = Schedule("broken", 20_000_000)
        for f in flows[:2]:
            s.commit(AggregateFrame.from_flows([f]), [0, 0])
        return s
    monkeypatch.setitem(cli.ALGORITHMS, "mcfs2l", broken)
    assert main(["run", "--n", "10", "--seeds", "1", "--algos", "mcfs2l", "--out", str(tmp_path)]) == 3
    assert "verification failed" in capsys.readouterr().err
    assert list(tmp_path.rglob("violations.txt"))


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_compare_deltas_match_per_run_means(tmp_path, serial, capsys):
    base = ["--n", "30", "--seeds", "1..3", "--out", str(tmp_path)]
    assert main(["run", "--algos", "mcfs2l", "--scenario", "ours"] + base) == 0
    assert main(["run", "--algos", "nwtt,rnwtt", "--scenario", "theirs"] + base) == 0
    capsys.readouterr()
    table = compare([tmp_path / "ours", tmp_path / "theirs"])
    assert {(r["baseline"], r["metric"]) for r in table} == {
        (b, m) for b in ("nwtt", "rnwtt") for m in cli.SUMMARY_METRICS}
    for row in table:
        means = {}
        for scenario, algo in (("ours", "mcfs2l"), ("theirs", row["baseline"])):
            runs = [read_csv(tmp_path / scenario / algo / "30" / str(s) / "metrics.csv")[0] for s in (1, 2, 3)]
            means[algo] = statistics.fmean(float(r[row["metric"]]) for r in runs)
        assert float(row["delta"]) == pytest.approx(means["mcfs2l"] - means[row["baseline"]], abs=1e-12)
    out = tmp_path / "cmp.csv"
    assert main(["compare", str(tmp_path / "ours"), str(tmp_path / "theirs"), "--out", str(out)]) == 0
    assert len(read_csv(out)) == len(table)


def test_compare_identity_and_empty(tmp_path, serial, capsys):
    assert main(["run", "--n", "20", "--seeds", "1", "--out", str(tmp_path)]) == 0
    table = compare([tmp_path / "default"])
    assert compare([tmp_path / "default", tmp_path / "default" / "summary.csv"]) == table
    assert compare([]) == []
    capsys.readouterr()
    assert main(["compare"]) == 0
    assert capsys.readouterr().out.strip() == ",".join(cli.COMPARE_COLUMNS)


def test_compare_refuses_mismatched_manifests(tmp_path, serial, capsys):
    assert main(["run", "--n", "20", "--seeds", "1", "--scenario", "a", "--out", str(tmp_path)]) == 0
    assert main(["run", "--n", "20", "--seeds", "2", "--scenario", "b", "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    assert main(["compare", str(tmp_path / "a"), str(tmp_path / "b")]) == 2
    err = capsys.readouterr().err
    assert "manifests differ" in err and "-  1" in err and "+  2" in err
