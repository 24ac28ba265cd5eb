"""Multi-seed experiments: per-cell statistics, Friedman rank tables, traces, NFE summaries."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import rankdata

from . import benchmarks, scnem
from .avla import AvlaConfig, ConfigError, RunError, RunRecord, run
from .core import Problem

TIES = "average"
STD_FORMULA = "population"
STATS_COLUMNS = ("algorithm", "problem", "mean", "std", "best", "runs", "mean_nfe")
RANK_COLUMNS = ("algorithm", "fm_aves", "fmr_aves", "fm_bests", "fmr_bests")
TRACE_COLUMNS = ("algorithm", "problem", "seed", "iteration", "best_so_far")


class PlanError(ValueError):
    """An experiment plan or stats table is malformed."""


class MissingCellsError(PlanError):
    def __init__(self, cells: Sequence[Tuple[str, str]]):
        self.cells = list(cells)
        listed = ", ".join(f"{a}/{p}" for a, p in self.cells)
        super().__init__(f"missing or non-finite cells: {listed}")


# ---------------------------------------------------------------- problems

def resolve_problem(pid: str, dim: Optional[int] = None,
                    penalty_weight: float = scnem.DEFAULT_PENALTY) -> Problem:
    """Benchmark id (F1-F29), bundled network (SCN1-SCN5) or a network TOML path."""
    key = str(pid).strip()
    up = key.upper()
    if up.startswith("SCN") and up[3:].isdigit():
        net = scnem.load_bundled(up.lower())
        return scnem.make_problem(net, penalty_weight)
    if key.endswith(".toml") or Path(key).is_file():
        return scnem.make_problem(scnem.load_network(key), penalty_weight)
    sp = benchmarks.spec(up)
    # plan-wide dimension only applies to the scalable functions
    return benchmarks.make(sp.id, dim if int(sp.id[1:]) <= 13 else None)


def check_problem_id(pid: str) -> None:
    """Raise ``benchmarks.UnknownBenchmark`` or ``InstanceError`` for unusable ids."""
    up = str(pid).strip().upper()
    if up.startswith("SCN") and up[3:].isdigit():
        scnem.bundled_path("instances", up.lower())
    elif str(pid).endswith(".toml") or Path(str(pid)).is_file():
        scnem.load_network(str(pid))
    else:
        benchmarks.spec(up)


# ---------------------------------------------------------------- plan

@dataclass(frozen=True)
class AlgorithmSpec:
    name: str
    config: AvlaConfig = AvlaConfig()


@dataclass(frozen=True)
class ExperimentPlan:
    algorithms: Tuple[AlgorithmSpec, ...]
    problems: Tuple[str, ...]
    runs: int = 30
    base_seed: int = 0
    dim: Optional[int] = None
    penalty_weight: float = scnem.DEFAULT_PENALTY
    trace: bool = True

    def __post_init__(self):
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        object.__setattr__(self, "problems", tuple(str(p) for p in self.problems))
        if self.runs < 1:
            raise PlanError(f"runs must be >= 1, got {self.runs}")
        names = [a.name for a in self.algorithms]
        if len(set(names)) != len(names):
            raise PlanError(f"duplicate algorithm names: {names}")
        if len(set(self.problems)) != len(self.problems):
            raise PlanError(f"duplicate problems: {list(self.problems)}")
        if self.dim is not None and self.dim < 1:
            raise PlanError(f"dim must be >= 1, got {self.dim}")


def derive_seed(base_seed: int, algorithm: str, problem: str, run_index: int) -> int:
    """Stable 63-bit seed from the cell identity and run index."""
    key = f"{int(base_seed)}|{algorithm}|{problem}|{int(run_index)}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little") & (2**63 - 1)


_CONFIG_KEYS = set(AvlaConfig.__dataclass_fields__)


def plan_from_mapping(doc: Mapping) -> ExperimentPlan:
    """Build a plan from a parsed TOML/JSON document.

    ``algorithms`` is a list of tables with a ``name`` plus any AvlaConfig
    field; a bare string is shorthand for that variant with defaults.
    """
    try:
        algs = []
        raw = doc.get("algorithms", [{"name": "AVLA"}])
        for a in raw:
            if isinstance(a, str):
                a = {"name": a.upper(), "variant": a.lower()}
            a = dict(a)
            name = str(a.pop("name", a.get("variant", "avla")).strip() or "AVLA")
            unknown = set(a) - _CONFIG_KEYS
            if unknown:
                raise PlanError(f"algorithm {name}: unknown settings {sorted(unknown)}")
            algs.append(AlgorithmSpec(name, AvlaConfig(**a)))
        problems = doc.get("problems", [])
        if isinstance(problems, str):
            problems = [problems]
        plan = ExperimentPlan(tuple(algs), tuple(problems), int(doc.get("runs", 30)),
                              int(doc.get("base_seed", 0)), doc.get("dim"),
                              float(doc.get("penalty_weight", scnem.DEFAULT_PENALTY)),
                              bool(doc.get("trace", True)))
    except ConfigError as exc:
        raise PlanError(str(exc)) from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, PlanError):
            raise
        raise PlanError(f"malformed plan: {exc}") from exc
    for p in plan.problems:
        check_problem_id(p)
    return plan


def load_plan(path: Union[str, Path]) -> ExperimentPlan:
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        doc = json.loads(text)
    else:
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise PlanError(f"{path}: {exc}") from exc
    return plan_from_mapping(doc)


# ---------------------------------------------------------------- execution

@dataclass(frozen=True)
class CellRun:
    algorithm: str
    problem: str
    run_index: int
    record: RunRecord

    @property
    def failed(self) -> bool:
        return self.record.error is not None


@dataclass(frozen=True)
class CellStats:
    algorithm: str
    problem: str
    mean: float
    std: float
    best: float
    finals: Tuple[float, ...]
    nfes: Tuple[int, ...]
    failures: Tuple[str, ...] = ()

    @property
    def runs(self) -> int:
        return len(self.finals)

    @property
    def mean_nfe(self) -> float:
        return float(np.mean(self.nfes)) if self.nfes else math.nan

    @property
    def partial(self) -> bool:
        return bool(self.failures)


def cell_stats(algorithm: str, problem: str, runs: Sequence[CellRun]) -> CellStats:
    ok = [r for r in sorted(runs, key=lambda r: r.run_index) if not r.failed]
    bad = tuple(f"run {r.run_index}: {r.record.error}" for r in runs if r.failed)
    finals = tuple(float(r.record.best_f) for r in ok)
    nfes = tuple(int(r.record.nfe) for r in ok)
    if finals:
        arr = np.array(finals)
        mean, std, best = float(arr.mean()), float(arr.std(ddof=0)), float(arr.min())
    else:
        mean = std = best = math.nan
    return CellStats(algorithm, problem, mean, std, best, finals, nfes, bad)


@dataclass
class PlanResult:
    runs: List[CellRun]
    stats: List[CellStats]

    @property
    def partial_cells(self) -> List[CellStats]:
        return [s for s in self.stats if s.partial]


def _execute(task) -> CellRun:
    alg, pid, k, seed, cfg, dim, weight = task
    problem = resolve_problem(pid, dim, weight)
    try:
        rec = run(problem, cfg, seed)
    except RunError as exc:
        rec = exc.record
    return CellRun(alg, pid, k, rec)


def run_plan(plan: ExperimentPlan, workers: int = 1, progress=None) -> PlanResult:
    """Execute every (algorithm, problem, run) cell and aggregate per-cell stats.

    Seeds come from :func:`derive_seed`, so results do not depend on problem
    order or on the number of workers.  Runs whose evaluation fails are kept
    with their error and the cell is marked partial.
    """
    tasks = [(a.name, p, k, derive_seed(plan.base_seed, a.name, p, k), a.config,
              plan.dim, plan.penalty_weight)
             for a in plan.algorithms for p in plan.problems for k in range(plan.runs)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_execute, tasks))
    else:
        done = []
        for t in tasks:
            done.append(_execute(t))
            if progress is not None:
                progress(done[-1])
    done.sort(key=lambda r: (r.algorithm, r.problem, r.run_index))
    stats = []
    for a in plan.algorithms:
        for p in plan.problems:
            cell = [r for r in done if r.algorithm == a.name and r.problem == p]
            stats.append(cell_stats(a.name, p, cell))
    return PlanResult(done, stats)


# ---------------------------------------------------------------- ranking

@dataclass(frozen=True)
class RankTable:
    """Friedman mean (FM) and Friedman mean rank (FMR) per algorithm."""

    algorithms: Tuple[str, ...]
    fm: np.ndarray
    fmr: np.ndarray
    ranks: np.ndarray
    ties: str = TIES

    def as_dict(self) -> Dict[str, Tuple[float, float]]:
        return {a: (float(f), float(r)) for a, f, r in zip(self.algorithms, self.fm, self.fmr)}


def friedman(values, algorithms: Optional[Sequence[str]] = None) -> RankTable:
    """Rank algorithms (rows) on each problem (column), smaller value better.

    Ties share the average rank.  ``FM_a = sum_p rank[a, p] / (P * A(A+1)/2)``
    so FM sums to 1, and FMR ranks FM with average ties.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 2:
        raise PlanError(f"expected an algorithms x problems matrix, got shape {v.shape}")
    A, P = v.shape
    if algorithms is None:
        algorithms = [f"A{i + 1}" for i in range(A)]
    algorithms = tuple(algorithms)
    if len(algorithms) != A:
        raise PlanError(f"{len(algorithms)} names for {A} rows")
    if A == 0:
        return RankTable((), np.zeros(0), np.zeros(0), np.zeros((0, P)))
    if np.isnan(v).any():
        bad = [(algorithms[i], f"column {j}") for i, j in zip(*np.nonzero(np.isnan(v)))]
        raise MissingCellsError(bad)
    ranks = np.column_stack([rankdata(v[:, j], method=TIES) for j in range(P)]) if P else \
        np.zeros((A, 0))
    if P == 0:
        fm = np.full(A, 1.0 / A)
    else:
        fm = ranks.sum(axis=1) / (P * A * (A + 1) / 2.0)
    fmr = rankdata(fm, method=TIES)
    return RankTable(algorithms, fm, fmr, ranks)


@dataclass(frozen=True)
class RankSummary:
    aves: RankTable
    bests: RankTable

    def rows(self) -> List[dict]:
        return [dict(algorithm=a, fm_aves=float(self.aves.fm[i]), fmr_aves=float(self.aves.fmr[i]),
                     fm_bests=float(self.bests.fm[i]), fmr_bests=float(self.bests.fmr[i]))
                for i, a in enumerate(self.aves.algorithms)]


def stats_matrix(stats: Sequence[CellStats], key: str = "mean"
                 ) -> Tuple[np.ndarray, List[str], List[str]]:
    """Algorithms x problems matrix of ``key`` in first-seen order."""
    algs, probs = [], []
    for s in stats:
        if s.algorithm not in algs:
            algs.append(s.algorithm)
        if s.problem not in probs:
            probs.append(s.problem)
    m = np.full((len(algs), len(probs)), np.nan)
    for s in stats:
        m[algs.index(s.algorithm), probs.index(s.problem)] = getattr(s, key)
    missing = [(algs[i], probs[j]) for i, j in zip(*np.nonzero(~np.isfinite(m)))]
    if missing:
        raise MissingCellsError(missing)
    return m, algs, probs


def rank_stats(stats: Sequence[CellStats]) -> RankSummary:
    ave, algs, _ = stats_matrix(stats, "mean")
    best, _, _ = stats_matrix(stats, "best")
    return RankSummary(friedman(ave, algs), friedman(best, algs))


# ---------------------------------------------------------------- traces and NFE

def trace_export(runs: Sequence[CellRun]) -> List[dict]:
    """Long-format best-so-far rows, one per run and iteration."""
    rows = []
    for r in runs:
        for it, v in enumerate(r.record.trace):
            rows.append(dict(algorithm=r.algorithm, problem=r.problem, seed=r.record.seed,
                             iteration=it, best_so_far=float(v)))
    return rows


def nfe_summary(runs: Sequence[CellRun]) -> Dict[Tuple[str, str], float]:
    """Mean NFE per (algorithm, problem) over all recorded runs."""
    acc: Dict[Tuple[str, str], List[int]] = {}
    for r in runs:
        acc.setdefault((r.algorithm, r.problem), []).append(r.record.nfe)
    return {k: float(np.mean(v)) for k, v in acc.items()}


# ---------------------------------------------------------------- files

def _metadata(extra: Optional[Mapping] = None) -> dict:
    meta = {"ties": TIES, "std": STD_FORMULA}
    if extra:
        meta.update(extra)
    return meta


def _write_table(path: Path, columns: Sequence[str], rows: Sequence[Mapping], fmt: str,
                 meta: Mapping) -> Path:
    path = Path(path)
    if fmt == "json":
        path.write_text(json.dumps({"metadata": dict(meta), "columns": list(columns),
                                    "rows": [dict(r) for r in rows]}, indent=1) + "\n")
        return path
    if fmt != "csv":
        raise PlanError(f"unknown format {fmt!r}")
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}: {v}\n")
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n",
                       extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    path.write_text(buf.getvalue())
    return path


def stats_rows(stats: Sequence[CellStats]) -> List[dict]:
    return [dict(algorithm=s.algorithm, problem=s.problem, mean=s.mean, std=s.std, best=s.best,
                 runs=s.runs, mean_nfe=s.mean_nfe) for s in stats]


def write_stats(path, stats: Sequence[CellStats], fmt: str = "csv",
                meta: Optional[Mapping] = None) -> Path:
    partial = [f"{s.algorithm}/{s.problem}" for s in stats if s.partial]
    extra = dict(meta or {})
    if partial:
        extra["partial_cells"] = " ".join(partial)
    return _write_table(path, STATS_COLUMNS, stats_rows(stats), fmt, _metadata(extra))


def write_ranks(path, summary: RankSummary, fmt: str = "csv",
                meta: Optional[Mapping] = None) -> Path:
    return _write_table(path, RANK_COLUMNS, summary.rows(), fmt, _metadata(meta))


def write_traces(path, rows: Sequence[Mapping], fmt: str = "csv",
                 meta: Optional[Mapping] = None) -> Path:
    return _write_table(path, TRACE_COLUMNS, rows, fmt, _metadata(meta))


def _num(v) -> float:
    try:
        return float(v)
    except (TypeError, ValueError):
        raise PlanError(f"not a number: {v!r}") from None


def read_stats(path) -> List[CellStats]:
    """Load a stats table written by :func:`write_stats` (CSV or JSON)."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json" or text.lstrip().startswith("{"):
        try:
            rows = json.loads(text)["rows"]
        except (ValueError, KeyError, TypeError) as exc:
            raise PlanError(f"{path}: malformed stats JSON ({exc})") from exc
    else:
        lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
        rows = list(csv.DictReader(lines))
    out = []
    for i, r in enumerate(rows):
        missing = [c for c in ("algorithm", "problem", "mean", "best") if c not in r]
        if missing:
            raise PlanError(f"{path}: row {i + 1} lacks {missing}")
        runs = int(_num(r.get("runs") or 0))
        mean_nfe = _num(r.get("mean_nfe")) if r.get("mean_nfe") not in (None, "") else math.nan
        nfes = (int(mean_nfe),) * runs if math.isfinite(mean_nfe) else ()
        out.append(CellStats(str(r["algorithm"]), str(r["problem"]), _num(r["mean"]),
                             _num(r.get("std", "nan") or "nan"), _num(r["best"]),
                             (math.nan,) * runs, nfes))
    return out


def stats_from_matrix(values, algorithms: Sequence[str], problems: Sequence[str],
                      bests=None) -> List[CellStats]:
    """Stats rows from published tables (mean and optional best matrices)."""
    v = np.asarray(values, dtype=float)
    b = v if bests is None else np.asarray(bests, dtype=float)
    return [CellStats(a, p, float(v[i, j]), math.nan, float(b[i, j]), (), ())
            for i, a in enumerate(algorithms) for j, p in enumerate(problems)]
