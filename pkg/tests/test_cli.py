import csv
import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from avla_scn import cli, scnem

FIX = Path(__file__).parent / "fixtures"


@pytest.fixture
def run(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "out"))
    runner = CliRunner()

    def invoke(*args):
        return runner.invoke(cli.main, [str(a) for a in args])
    return invoke


def solution_toml(path, flows, rates, extr):
    lines = ["format_version = 1", 'instance = "SCN1"', "", "[flows]"]
    lines += [f'"{k}" = {v!r}' for k, v in flows.items()]
    lines += ["", "[profit_rates]"] + [f"{k} = {v!r}" for k, v in rates.items()]
    lines += ["", "[extractions]"] + [f"{k} = {v!r}" for k, v in extr.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


def scn1_tables():
    net = scnem.load_bundled("scn1")
    sol = scnem.load_solution(scnem.bundled_path("solutions", "scn1"), net)
    d = scnem.decode(sol.x, net)
    flows = {str(lk.id): float(f) for lk, f in zip(net.links, d.flows)}
    rates = {s.id: float(v) for s, v in zip(net.priced_spots, d.rates)}
    extr = {s.id: float(v) for s, v in zip(net.suppliers, d.extractions)}
    return flows, rates, extr


def test_verify_scn1_passes(run):
    res = run("verify", "SCN1")
    assert res.exit_code == 0, res.output
    assert "PASS" in res.output and "reported objective" in res.output


def test_verify_printed_values_fail(run):
    res = run("verify", "scn1", "--printed")
    assert res.exit_code == 1 and "FAIL" in res.output


def test_verify_perturbed_flow_fails(run, tmp_path):
    flows, rates, extr = scn1_tables()
    flows["5"] = 1.0
    path = solution_toml(tmp_path / "bad.toml", flows, rates, extr)
    res = run("verify", "SCN1", path)
    assert res.exit_code != 0 and "FAIL" in res.output


def test_verify_dimension_mismatch(run, tmp_path):
    flows, rates, extr = scn1_tables()
    del flows["8"]
    path = solution_toml(tmp_path / "short.toml", flows, rates, extr)
    res = run("verify", "SCN1", path)
    assert res.exit_code == cli.EXIT_INSTANCE


def test_verify_writes_reports(run, tmp_path):
    res = run("verify", "SCN1", "--out", tmp_path / "rep")
    assert res.exit_code == 0
    doc = json.loads((tmp_path / "rep" / "report.json").read_text())
    assert doc["objective"] <= 1e-2


def test_verify_missing_instance(run):
    assert run("verify", "nope.toml").exit_code == cli.EXIT_CONFIG


def test_solve_zero_iterations(run, tmp_path):
    res = run("solve", "F1", "--iters", 0, "--pop", 10, "--dim", 5, "--out", tmp_path / "s")
    assert res.exit_code == 0, res.output
    with open(tmp_path / "s" / "trace.csv") as fh:
        rows = list(csv.DictReader(ln for ln in fh if not ln.startswith("#")))
    assert len(rows) == 1
    best = json.loads((tmp_path / "s" / "best.json").read_text())
    assert len(best["x"]) == 5


def test_solve_scn_writes_report(run, tmp_path):
    res = run("solve", "SCN1", "--iters", 5, "--pop", 10, "--out", tmp_path / "s")
    assert res.exit_code == 0, res.output
    assert (tmp_path / "s" / "report.txt").exists()
    assert (tmp_path / "s" / "report.json").exists()


def test_solve_bad_config(run):
    assert run("solve", "F1", "--pop", 2).exit_code == cli.EXIT_CONFIG
    assert run("solve", "F99").exit_code == cli.EXIT_CONFIG
    assert run("solve", "F14", "--dim", 5).exit_code == cli.EXIT_CONFIG


def test_bench_small_plan(run, tmp_path):
    plan = tmp_path / "plan.toml"
    plan.write_text('runs = 2\nproblems = ["F1", "F6"]\ndim = 5\n\n'
                    '[[algorithms]]\nname = "AVLA"\npop_size = 10\nmax_iter = 10\n\n'
                    '[[algorithms]]\nname = "VLA"\nvariant = "vla"\npop_size = 10\n'
                    'max_iter = 10\n')
    res = run("bench", plan, "--out", tmp_path / "b", "--format", "json")
    assert res.exit_code == 0, res.output
    doc = json.loads((tmp_path / "b" / "rank.json").read_text())
    fm = [r["fm_aves"] for r in doc["rows"]]
    assert sum(fm) == pytest.approx(1.0)
    assert (tmp_path / "b" / "nfe.json").exists()


def test_bench_unknown_benchmark(run, tmp_path):
    plan = tmp_path / "plan.toml"
    plan.write_text('problems = ["F1", "F99"]\n')
    res = run("bench", plan)
    assert res.exit_code == cli.EXIT_CONFIG
    assert "F99" in res.output


def test_rank_fixture(run, tmp_path):
    res = run("rank", FIX / "table3_stats.csv", "--out", tmp_path / "r")
    assert res.exit_code == 0, res.output
    line = next(ln for ln in res.output.splitlines() if ln.split()[0] == "CMA-ES")
    assert line.split()[1] == "0.095238" and float(line.split()[2]) == 20
    assert (tmp_path / "r" / "rank.csv").exists()


def test_rank_rejects_nan(run, tmp_path):
    src = (FIX / "table3_stats.csv").read_text().splitlines()
    header = next(i for i, ln in enumerate(src) if not ln.startswith("#"))
    cols = src[header].split(",")
    row = src[header + 1].split(",")
    row[cols.index("mean")] = "nan"
    src[header + 1] = ",".join(row)
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(src) + "\n")
    assert run("rank", bad).exit_code == cli.EXIT_CONFIG
