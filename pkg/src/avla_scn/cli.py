"""Command-line front end: ``solve``, ``verify``, ``bench`` and ``rank``.

Exit codes: 0 success, 1 runtime failure (or a failed verification),
2 configuration error, 3 instance validation error or dimension mismatch.
"""
from __future__ import annotations

import json
import math
import os
import sys
from pathlib import Path
from typing import List, Optional

import click
import numpy as np

from . import avla, benchmarks, harness, scnem
from .core import StructuralError

OUT_ENV = "AVLA_SCN_OUT"
DEFAULT_OUT = "avla_out"

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_INSTANCE = 0, 1, 2, 3


class CliFailure(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _out_dir(out: Optional[str]) -> Path:
    path = Path(out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _config(iters, pop, memory, nr, variant) -> avla.AvlaConfig:
    kw = {}
    for key, val in (("max_iter", iters), ("pop_size", pop), ("memory_size", memory),
                     ("n_r", nr), ("variant", variant)):
        if val is not None:
            kw[key] = val
    try:
        return avla.AvlaConfig(**kw)
    except avla.ConfigError as exc:
        raise CliFailure(str(exc), EXIT_CONFIG) from exc


def _is_network(target: str) -> bool:
    up = target.upper()
    return (up.startswith("SCN") and up[3:].isdigit()) or target.endswith(".toml") \
        or Path(target).is_file()


def _load_network(target: str) -> scnem.SupplyChainNetwork:
    up = target.upper()
    try:
        if up.startswith("SCN") and up[3:].isdigit() and not Path(target).is_file():
            return scnem.load_bundled(up.lower())
        return scnem.load_network(target)
    except FileNotFoundError as exc:
        raise CliFailure(f"no such instance: {target}", EXIT_CONFIG) from exc
    except (scnem.InstanceError, StructuralError) as exc:
        raise CliFailure(f"invalid instance {target}: {exc}", EXIT_INSTANCE) from exc


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o).__name__)


def _record_dict(rec: avla.RunRecord) -> dict:
    return dict(problem=rec.problem, variant=rec.variant, seed=rec.seed, config=rec.config,
                nfe=rec.nfe, iterations=rec.iterations, best_f=rec.best_f,
                best_x=rec.best_x, error=rec.error)


# ---------------------------------------------------------------- reports

def format_report(rep: scnem.EvaluationReport, net: scnem.SupplyChainNetwork) -> str:
    """Per-link and per-spot tables in the layout of published equilibrium tables."""
    lines = [f"network {rep.network}",
             f"objective {rep.objective:.6g}",
             f"violation {rep.violation:.6g}",
             f"penalty {rep.penalty:.6g}",
             f"fitness {rep.fitness:.6g}", "",
             f"{'link':>4} {'from':>5} {'to':>5} {'p_from':>10} {'c':>8} {'p_to':>10} "
             f"{'residual':>10} {'flow':>10} {'case':>5} {'pass':>5}"]
    for row in rep.vi:
        r = row.link
        lines.append(f"{r.id:>4} {r.src:>5} {r.dst:>5} {r.p_from:10.4f} {r.cost:8.4f} "
                     f"{r.p_to:10.4f} {r.residual:10.4f} {r.flow:10.4f} {row.case:>5} "
                     f"{'ok' if row.passed else 'FAIL':>5}")
    lines += ["", f"{'spot':>5} {'role':>12} {'qty':>10} {'sold':>10} {'held':>10} "
                  f"{'p_out':>10} {'rate':>8}"]
    for s in net.spots:
        st = rep.spots[s.id]
        price = f"{st.p_out:10.4f}"
        if st.degenerate:
            price += " (no quantity)"
        lines.append(f"{s.id:>5} {s.role:>12} {st.available:10.4f} {st.sold:10.4f} {st.held:10.4f} "
                     f"{price} {st.rate:8.4f}")
    return "\n".join(lines)


def report_dict(rep: scnem.EvaluationReport) -> dict:
    return dict(
        network=rep.network, objective=rep.objective, violation=rep.violation,
        penalty=rep.penalty, fitness=rep.fitness, vi_pass=rep.vi_pass,
        links=[dict(id=r.link.id, src=r.link.src, dst=r.link.dst, flow=r.link.flow,
                    p_from=r.link.p_from, cost=r.link.cost, p_to=r.link.p_to,
                    residual=r.link.residual, pa=r.link.pa, pb=r.link.pb,
                    contribution=r.link.contribution, case=r.case, passed=r.passed)
               for r in rep.vi],
        spots=[dict(id=st.id, role=st.role, arrived=st.arrived, produced=st.produced,
                    sold=st.sold, held=st.held, cost=st.cost, rate=st.rate, p_out=st.p_out,
                    p_in=st.p_in, no_quantity=st.degenerate)
               for st in rep.spots.values()])


# ---------------------------------------------------------------- commands

def _wrap(fn):
    """Translate library errors into exit codes."""
    def inner(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except CliFailure as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(exc.code)
        except benchmarks.UnknownBenchmark as exc:
            click.echo(f"error: {exc.args[0]}", err=True)
            sys.exit(EXIT_CONFIG)
        except (scnem.InstanceError, StructuralError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_INSTANCE)
        except (avla.ConfigError, harness.PlanError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
    inner.__name__ = fn.__name__
    inner.__doc__ = fn.__doc__
    return inner


def _algo_options(f):
    opts = [
        click.option("--iters", type=int, default=None, help="Iterations (default 2000)."),
        click.option("--pop", type=int, default=None, help="Population size N (default 50)."),
        click.option("--memory", type=int, default=None, help="Memory size H (default 50)."),
        click.option("--nr", type=int, default=None, help="Stagnation trigger n_R (default 100)."),
        click.option("--variant", type=click.Choice([avla.AVLA, avla.VLA]), default=None),
    ]
    for o in reversed(opts):
        f = o(f)
    return f


_format = click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
                       show_default=True)
_out = click.option("--out", type=click.Path(file_okay=False), default=None,
                    help=f"Output directory (default ${OUT_ENV} or ./{DEFAULT_OUT}).")
_weight = click.option("--penalty-weight", type=float, default=scnem.DEFAULT_PENALTY,
                       show_default=True, help="Penalty weight W on constraint violation.")


@click.group()
@click.version_option(package_name="artifact")
def main():
    """AVLA optimizer, supply chain network equilibrium checks and benchmark tables."""


@main.command()
@click.argument("target")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--runs", type=int, default=1, show_default=True)
@click.option("--dim", type=int, default=None, help="Dimension for scalable benchmarks.")
@_algo_options
@_weight
@_out
@_format
@_wrap
def solve(target, seed, runs, dim, iters, pop, memory, nr, variant, penalty_weight, out, fmt):
    """Optimize TARGET: a benchmark id (F1-F29), SCN1-SCN5 or a network TOML file.

    Run k uses seed SEED + k; the best run is reported.
    """
    if runs < 1:
        raise CliFailure("--runs must be >= 1", EXIT_CONFIG)
    cfg = _config(iters, pop, memory, nr, variant)
    net = _load_network(target) if _is_network(target) else None
    if net is not None:
        problem = scnem.make_problem(net, penalty_weight)
    else:
        if dim is not None:
            try:
                benchmarks.make(benchmarks.spec(target.upper()).id, dim)
            except ValueError as exc:
                raise CliFailure(str(exc), EXIT_CONFIG) from exc
        problem = harness.resolve_problem(target, dim, penalty_weight)
    records = []
    for k in range(runs):
        try:
            records.append(avla.run(problem, cfg, seed + k))
        except avla.RunError as exc:
            click.echo(f"run {k} failed: {exc}", err=True)
            records.append(exc.record)
    ok = [r for r in records if r.error is None]
    if not ok:
        raise CliFailure("all runs failed", EXIT_RUNTIME)
    best = min(ok, key=lambda r: r.best_f)
    d = _out_dir(out)
    _dump(d / "run.json", dict(best=_record_dict(best),
                               runs=[dict(seed=r.seed, best_f=r.best_f, nfe=r.nfe, error=r.error)
                                     for r in records]))
    _dump(d / "best.json", dict(problem=problem.name, fitness=best.best_f, x=best.best_x))
    cells = [harness.CellRun(cfg.variant.upper(), problem.name, k, r)
             for k, r in enumerate(records)]
    harness.write_traces(d / f"trace.{fmt}", harness.trace_export(cells), fmt)
    click.echo(f"{problem.name}: best fitness {best.best_f:.6g} (seed {best.seed}, "
               f"nfe {best.nfe})")
    if net is not None:
        rep = scnem.evaluate_report(net, best.best_x, penalty_weight)
        text = format_report(rep, net)
        (d / "report.txt").write_text(text + "\n")
        _dump(d / "report.json", report_dict(rep))
        click.echo(f"objective {rep.objective:.6g} penalty {rep.penalty:.6g}")
    click.echo(f"wrote {d}")


@main.command()
@click.argument("network")
@click.argument("solution", required=False)
@click.option("--tol", type=float, default=1e-2, show_default=True,
              help="Objective and per-link residual tolerance.")
@click.option("--printed", is_flag=True, help="Check the values as printed, not the refined ones.")
@_weight
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Also write report.txt and report.json here.")
@_wrap
def verify(network, solution, tol, printed, penalty_weight, out):
    """Check a SOLUTION file against NETWORK and print the residual table.

    With a bundled network (SCN1-SCN5) the SOLUTION defaults to the bundled
    published solution.  Exits 0 iff objective <= TOL and every link passes.
    """
    net = _load_network(network)
    if solution is None:
        try:
            solution = scnem.bundled_path("solutions", net.name.lower())
        except FileNotFoundError as exc:
            raise CliFailure(f"no bundled solution for {net.name}", EXIT_CONFIG) from exc
    try:
        sol = scnem.load_solution(solution, net)
    except FileNotFoundError as exc:
        raise CliFailure(f"no such solution file: {solution}", EXIT_CONFIG) from exc
    x = sol.x
    if printed:
        if sol.printed is None:
            raise CliFailure("solution has no [printed] tables", EXIT_CONFIG)
        x = sol.printed
    rep = scnem.evaluate_report(net, x, penalty_weight, tol=tol)
    text = format_report(rep, net)
    click.echo(text)
    if sol.reported_objective is not None:
        click.echo(f"\nreported objective {sol.reported_objective:.6g}")
    if out:
        d = _out_dir(out)
        (d / "report.txt").write_text(text + "\n")
        _dump(d / "report.json", report_dict(rep))
    ok = rep.objective <= tol and rep.vi_pass
    click.echo("PASS" if ok else "FAIL")
    sys.exit(EXIT_OK if ok else EXIT_RUNTIME)


@main.command()
@click.argument("plan", type=click.Path(exists=True, dir_okay=False))
@click.option("--workers", type=int, default=1, show_default=True)
@_out
@_format
@_wrap
def bench(plan, workers, out, fmt):
    """Run an experiment PLAN (TOML or JSON) and write stats, rank and trace tables."""
    p = harness.load_plan(plan)
    res = harness.run_plan(p, workers=workers)
    d = _out_dir(out)
    meta = dict(base_seed=p.base_seed, runs=p.runs)
    harness.write_stats(d / f"stats.{fmt}", res.stats, fmt, meta)
    for s in res.partial_cells:
        click.echo(f"warning: {s.algorithm}/{s.problem} partial: {'; '.join(s.failures)}",
                   err=True)
    if p.trace:
        harness.write_traces(d / f"trace.{fmt}", harness.trace_export(res.runs), fmt, meta)
    nfe = harness.nfe_summary(res.runs)
    _dump(d / "nfe.json", [dict(algorithm=a, problem=q, mean_nfe=v) for (a, q), v in nfe.items()])
    if res.stats and all(s.runs == 0 for s in res.stats):
        raise CliFailure("every cell failed", EXIT_RUNTIME)
    try:
        summary = harness.rank_stats(res.stats) if res.stats else None
    except harness.MissingCellsError as exc:
        click.echo(f"warning: rank table skipped: {exc}", err=True)
        summary = None
    if summary is not None:
        harness.write_ranks(d / f"rank.{fmt}", summary, fmt, meta)
    for s in res.stats:
        click.echo(f"{s.algorithm:>6} {s.problem:>6} mean {s.mean:.4g} std {s.std:.4g} "
                   f"best {s.best:.4g} runs {s.runs} nfe {s.mean_nfe:.0f}")
    click.echo(f"wrote {d}")


@main.command()
@click.argument("stats", type=click.Path(exists=True, dir_okay=False))
@_out
@_format
@_wrap
def rank(stats, out, fmt):
    """Recompute Friedman rank tables from a STATS file without rerunning."""
    rows = harness.read_stats(stats)
    summary = harness.rank_stats(rows)
    d = _out_dir(out)
    harness.write_ranks(d / f"rank.{fmt}", summary, fmt)
    click.echo(f"{'algorithm':>12} {'fm_aves':>10} {'fmr_aves':>9} {'fm_bests':>10} "
               f"{'fmr_bests':>9}")
    for r in summary.rows():
        click.echo(f"{r['algorithm']:>12} {r['fm_aves']:10.6f} {r['fmr_aves']:9.1f} "
                   f"{r['fm_bests']:10.6f} {r['fmr_bests']:9.1f}")
    click.echo(f"ties: {harness.TIES}")


if __name__ == "__main__":  # pragma: no cover
    main()
