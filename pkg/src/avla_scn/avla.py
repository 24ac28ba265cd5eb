"""AVLA optimiser and its non-adaptive VLA ablation.

Members learn in rank order.  Elites imitate or avoid two other elites;
common members learn either from two commons or from an elite and a common,
with the elite branch growing more likely over time.  Trial vectors go
through binomial crossover and greedy acceptance.  Poorly ranked members
reflect to their opposite positions every iteration, and the whole group
reflects after a run of iterations without improvement.  F and CR are drawn
from a success-history memory updated with weighted Lehmer means.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import List, Optional

import numpy as np

from .core import (
    Bounds,
    EvaluationError,
    NfeCounter,
    Problem,
    SeededRng,
    StructuralError,
    clamp,
    uniform_init,
)

AVLA = "avla"
VLA = "vla"
RESTART_RANDOM = "random"
RESTART_KEEP = "keep"
CAUCHY_REDRAWS = 100


class ConfigError(ValueError):
    """Invalid optimiser configuration."""


@dataclass(frozen=True)
class AvlaConfig:
    pop_size: int = 50
    max_iter: int = 2000
    memory_size: int = 50
    n_r: int = 100
    gamma: float = 6.0
    elite_start: int = 3
    elite_end_frac: float = 0.2
    variant: str = AVLA
    vla_cr: float = 0.25
    tail_restart: str = RESTART_KEEP

    def __post_init__(self):
        if self.pop_size < 10:
            raise ConfigError(f"pop_size must be >= 10, got {self.pop_size}")
        if self.max_iter < 0:
            raise ConfigError(f"max_iter must be >= 0, got {self.max_iter}")
        if self.memory_size < 1:
            raise ConfigError(f"memory_size must be >= 1, got {self.memory_size}")
        if self.n_r < 1:
            raise ConfigError(f"n_r must be >= 1, got {self.n_r}")
        if not self.gamma > 0:
            raise ConfigError(f"gamma must be > 0, got {self.gamma}")
        if self.elite_start < 3:
            raise ConfigError("elite_start must be >= 3 so each elite has two partners")
        if self.variant not in (AVLA, VLA):
            raise ConfigError(f"variant must be 'avla' or 'vla', got {self.variant!r}")
        if not 0.0 <= self.vla_cr <= 1.0:
            raise ConfigError(f"vla_cr must lie in [0, 1], got {self.vla_cr}")
        if self.tail_restart not in (RESTART_RANDOM, RESTART_KEEP):
            raise ConfigError(f"tail_restart must be 'random' or 'keep', got {self.tail_restart!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Member:
    position: np.ndarray
    fitness: float
    F: float = 0.5
    CR: float = 0.5


@dataclass
class AdaptiveMemory:
    """H-slot history of (M_CR, M_F); ``k`` is the 1-based next write slot."""

    m_cr: np.ndarray
    m_f: np.ndarray
    k: int = 1

    @classmethod
    def initial(cls, size: int) -> "AdaptiveMemory":
        return cls(np.full(size, 0.5), np.full(size, 0.5), 1)

    @property
    def size(self) -> int:
        return self.m_cr.size


@dataclass
class SuccessLog:
    s_cr: List[float] = field(default_factory=list)
    s_f: List[float] = field(default_factory=list)
    delta_fit: List[float] = field(default_factory=list)

    def record(self, cr: float, f: float, delta: float) -> None:
        self.s_cr.append(cr)
        self.s_f.append(f)
        self.delta_fit.append(abs(delta))

    def __len__(self) -> int:
        return len(self.s_cr)


@dataclass
class RunRecord:
    problem: str
    variant: str
    seed: int
    config: dict
    trace: np.ndarray
    nfe: int
    best_x: np.ndarray
    best_f: float
    iterations: int
    error: Optional[str] = None


class RunError(RuntimeError):
    """An evaluation failed mid-run; ``record`` holds the partial run."""

    def __init__(self, message: str, record: RunRecord):
        super().__init__(message)
        self.record = record


# ---------------------------------------------------------------- schedules

def le_probability(t: float, cfg: AvlaConfig) -> float:
    """Probability that a common member learns from an elite at iteration t."""
    if cfg.max_iter == 0:
        return 0.5
    z = (2.0 * cfg.gamma / cfg.max_iter) * (cfg.max_iter / 2.0 - t)
    return 1.0 / (1.0 + math.exp(z))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def elite_count(t: float, cfg: AvlaConfig) -> int:
    """Elite size growing linearly from ``elite_start`` to ``elite_end_frac * N``."""
    if cfg.max_iter == 0:
        return cfg.elite_start
    end = cfg.elite_end_frac * cfg.pop_size
    n = _round_half_up(cfg.elite_start + t * (end - cfg.elite_start) / cfg.max_iter)
    # small populations: keep three elites and three commons
    return int(min(max(n, 3), cfg.pop_size - 3))


# ---------------------------------------------------------------- parameters

def sample_cr(memory: AdaptiveMemory, rng, size=None):
    """CR ~ N(M_CR[r], 0.1) truncated to [0, 1], r uniform over the slots."""
    n = 1 if size is None else size
    r = np.minimum((np.asarray(rng.uniform(n)) * memory.size).astype(int), memory.size - 1)
    cr = np.clip(np.asarray(rng.normal(memory.m_cr[r], 0.1, n), dtype=float), 0.0, 1.0)
    return float(cr[0]) if size is None else cr


def sample_f(memory: AdaptiveMemory, rng, size=None):
    """F ~ Cauchy(M_F[r], 0.1); values above 1 become 1, values <= 0 are redrawn.

    After ``CAUCHY_REDRAWS`` failed redraws the memory value itself is used.
    """
    n = 1 if size is None else size
    r = np.minimum((np.asarray(rng.uniform(n)) * memory.size).astype(int), memory.size - 1)
    loc = memory.m_f[r]
    f = np.asarray(rng.cauchy(loc, 0.1, n), dtype=float).copy()
    bad = np.flatnonzero(f <= 0.0)
    tries = 0
    while bad.size and tries < CAUCHY_REDRAWS:
        f[bad] = np.asarray(rng.cauchy(loc[bad], 0.1, bad.size), dtype=float)
        bad = bad[f[bad] <= 0.0]
        tries += 1
    if bad.size:
        f[bad] = loc[bad]
    f = np.minimum(f, 1.0)
    return float(f[0]) if size is None else f


def _lehmer(values: np.ndarray, weights: np.ndarray) -> Optional[float]:
    den = float(np.dot(weights, values))
    if den <= 0.0:
        return None
    return float(np.dot(weights, values * values)) / den


def update_memory(memory: AdaptiveMemory, log: SuccessLog) -> AdaptiveMemory:
    """Write weighted Lehmer means of the successful CR and F at slot k."""
    if len(log) == 0:
        return memory
    delta = np.asarray(log.delta_fit, dtype=float)
    total = delta.sum()
    w = delta / total if total > 0 else np.full(delta.size, 1.0 / delta.size)
    slot = memory.k - 1
    cr = _lehmer(np.asarray(log.s_cr, dtype=float), w)
    f = _lehmer(np.asarray(log.s_f, dtype=float), w)
    if cr is not None:
        memory.m_cr[slot] = min(max(cr, 0.0), 1.0)
    if f is not None:
        memory.m_f[slot] = min(max(f, 0.0), 1.0)
    memory.k = memory.k % memory.size + 1
    return memory


# ---------------------------------------------------------------- learning

def _sign(f_self: float, f_other: float) -> float:
    return 1.0 if f_self > f_other else -1.0


def _crossover(x, v, cr, u_row, j_rand, lo, hi):
    mask = u_row <= cr
    mask[j_rand] = True
    trial = np.where(mask, v, x)
    np.minimum(np.maximum(trial, lo, out=trial), hi, out=trial)
    return trial


def _draw_crossover(rng, dim):
    u = rng.uniform(dim)
    j = min(int(rng.uniform() * dim), dim - 1)
    return u, j


class _Evaluator:
    __slots__ = ("fn", "nfe", "name")

    def __init__(self, problem: Problem, nfe: NfeCounter):
        self.fn = problem.fitness
        self.nfe = nfe
        self.name = problem.name

    def __call__(self, x: np.ndarray) -> float:
        value = float(self.fn(x))
        self.nfe.count += 1
        if not math.isfinite(value):
            raise EvaluationError(f"{self.name}: non-finite fitness {value}", x, value)
        return value


def _accept(x, fx, trial, evaluator, cr, f, log):
    ft = evaluator(trial)
    if ft < fx:
        if log is not None:
            log.record(cr, f, fx - ft)
        return trial, ft
    return x, fx


def elite_learn(e: Member, e1: Member, e2: Member, problem: Problem, rng,
                log: Optional[SuccessLog] = None, nfe: Optional[NfeCounter] = None) -> Member:
    """One elite learning step: imitate better partners, move away from worse ones."""
    lo, hi = problem.bounds.lower, problem.bounds.upper
    x = np.asarray(e.position, dtype=float)
    s1 = _sign(e.fitness, e1.fitness)
    s2 = _sign(e.fitness, e2.fitness)
    v = x + s1 * e.F * (e1.position - x) + s2 * e.F * (e2.position - x)
    u, j = _draw_crossover(rng, x.size)
    trial = _crossover(x, v, e.CR, u, j, lo, hi)
    ev = _Evaluator(problem, nfe if nfe is not None else NfeCounter())
    pos, fit = _accept(x, e.fitness, trial, ev, e.CR, e.F, log)
    return Member(pos, fit, e.F, e.CR)


def common_learn(i: Member, elite: Member, i1: Member, i2: Member, t: float,
                 cfg: AvlaConfig, problem: Problem, rng,
                 log: Optional[SuccessLog] = None, nfe: Optional[NfeCounter] = None) -> Member:
    """One common-member learning step.

    With probability LE(t) the member moves toward ``elite`` (no sign rule)
    and learns from ``i2``; otherwise it learns from commons ``i1`` and ``i2``.
    """
    lo, hi = problem.bounds.lower, problem.bounds.upper
    x = np.asarray(i.position, dtype=float)
    s2 = _sign(i.fitness, i2.fitness)
    if rng.uniform() > le_probability(t, cfg):
        s1 = _sign(i.fitness, i1.fitness)
        v = x + s1 * i.F * (i1.position - x) + s2 * i.F * (i2.position - x)
    else:
        v = x + i.F * (elite.position - x) + s2 * i.F * (i2.position - x)
    u, j = _draw_crossover(rng, x.size)
    trial = _crossover(x, v, i.CR, u, j, lo, hi)
    ev = _Evaluator(problem, nfe if nfe is not None else NfeCounter())
    pos, fit = _accept(x, i.fitness, trial, ev, i.CR, i.F, log)
    return Member(pos, fit, i.F, i.CR)


# ---------------------------------------------------------------- reflections

def opposite(v, bounds: Bounds) -> np.ndarray:
    """Box reflection ``lower + upper - v``."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != bounds.dim:
        raise StructuralError(f"expected length {bounds.dim}, got {v.shape[-1]}")
    return bounds.lower + bounds.upper - v


@dataclass
class RunState:
    X: np.ndarray
    fit: np.ndarray
    best_x: np.ndarray
    best_f: float
    n_r_counter: int = 0
    t: int = 0
    nfe: NfeCounter = field(default_factory=NfeCounter)
    trace: List[float] = field(default_factory=list)

    def sort(self) -> None:
        order = np.argsort(self.fit, kind="stable")
        self.X = self.X[order]
        self.fit = self.fit[order]

    def note_best(self) -> bool:
        i = int(np.argmin(self.fit))
        if self.fit[i] < self.best_f:
            self.best_f = float(self.fit[i])
            self.best_x = self.X[i].copy()
            return True
        return False


def _evaluator_for(state: RunState, problem: Problem) -> _Evaluator:
    return _Evaluator(problem, state.nfe)


def tail_reflection(state: RunState, n_tail: int, problem: Problem, rng,
                    restart: str = RESTART_KEEP) -> RunState:
    """Tail members take their opposite if it is strictly better.

    Otherwise ``restart="random"`` re-draws the member uniformly (one more
    evaluation) and ``restart="keep"`` leaves it in place.
    """
    ev = _evaluator_for(state, problem)
    b = problem.bounds
    n = state.X.shape[0]
    for i in range(n - n_tail, n):
        xr = b.lower + b.upper - state.X[i]
        fr = ev(xr)
        if fr < state.fit[i]:
            state.X[i], state.fit[i] = xr, fr
        elif restart == RESTART_RANDOM:
            xs = uniform_init(b, rng)
            state.X[i], state.fit[i] = xs, ev(xs)
    return state


def group_reflection(state: RunState, n_tail: int, problem: Problem, rng=None) -> RunState:
    """Whole-group reflection: keep the better of x and its opposite, tail forced to move."""
    ev = _evaluator_for(state, problem)
    b = problem.bounds
    n = state.X.shape[0]
    for i in range(n):
        xr = b.lower + b.upper - state.X[i]
        fr = ev(xr)
        if i >= n - n_tail or fr < state.fit[i]:
            state.X[i], state.fit[i] = xr, fr
    state.n_r_counter = 0
    return state


# ---------------------------------------------------------------- driver

def _pick_two(rng_u, n: int, exclude: int):
    """Two distinct indices from range(n) without ``exclude``, from two uniforms."""
    a = min(int(rng_u[0] * (n - 1)), n - 2)
    if a >= exclude:
        a += 1
    b = min(int(rng_u[1] * (n - 2)), n - 3)
    lo_, hi_ = sorted((a, exclude))
    if b >= lo_:
        b += 1
    if b >= hi_:
        b += 1
    return a, b


def _pick_one(u: float, n: int, exclude: int = -1) -> int:
    if exclude < 0:
        return min(int(u * n), n - 1)
    a = min(int(u * (n - 1)), n - 2)
    return a + 1 if a >= exclude else a


def run(problem: Problem, cfg: AvlaConfig = AvlaConfig(), seed: int = 0,
        memory: Optional[AdaptiveMemory] = None) -> RunRecord:
    """Execute one AVLA (or VLA) run and return its record.

    The trace holds the best-so-far fitness after initialisation and after
    every iteration, so it has ``max_iter + 1`` entries.
    """
    if problem.dim <= 0:
        raise ConfigError("problem dimension must be positive")
    rng = SeededRng(seed)
    n, dim = cfg.pop_size, problem.dim
    b = problem.bounds
    lo, hi = b.lower, b.upper
    adaptive = cfg.variant == AVLA
    mem = memory if memory is not None else AdaptiveMemory.initial(cfg.memory_size)

    state = RunState(np.empty((n, dim)), np.empty(n), np.empty(dim), math.inf)
    ev = _evaluator_for(state, problem)

    def record(error=None) -> RunRecord:
        best_x = state.best_x.copy() if math.isfinite(state.best_f) else np.full(dim, np.nan)
        return RunRecord(problem.name, cfg.variant, int(seed), cfg.to_dict(),
                         np.asarray(state.trace, dtype=float), state.nfe.count,
                         best_x, float(state.best_f), state.t, error)

    try:
        for i in range(n):
            state.X[i] = uniform_init(b, rng)
            state.fit[i] = ev(state.X[i])
        state.sort()
        state.note_best()
        state.trace.append(state.best_f)

        X, fit = state.X, state.fit
        for t in range(1, cfg.max_iter + 1):
            state.t = t
            n_e = elite_count(t, cfg)
            le = le_probability(t, cfg)
            n_c = n - n_e
            if adaptive:
                CR = sample_cr(mem, rng, n)
                F = sample_f(mem, rng, n)
            else:
                CR = np.full(n, cfg.vla_cr)
                F = rng.uniform(n)
            U = rng.uniform((n, dim))
            J = np.minimum((rng.uniform(n) * dim).astype(int), dim - 1)
            P = rng.uniform((n, 3))
            log = SuccessLog() if adaptive else None
            best_before = state.best_f

            for e in range(n_e):
                a, c = _pick_two(P[e], n_e, e)
                x, fx, f = X[e], fit[e], F[e]
                s1 = 1.0 if fx > fit[a] else -1.0
                s2 = 1.0 if fx > fit[c] else -1.0
                v = x + (s1 * f) * (X[a] - x) + (s2 * f) * (X[c] - x)
                trial = _crossover(x, v, CR[e], U[e], J[e], lo, hi)
                ft = ev(trial)
                if ft < fx:
                    if log is not None:
                        log.record(CR[e], f, fx - ft)
                    X[e], fit[e] = trial, ft

            for ci in range(n_c):
                i = n_e + ci
                x, fx, f = X[i], fit[i], F[i]
                p = P[i]
                if p[2] > le:
                    a, c = _pick_two(p, n_c, ci)
                    a += n_e
                    c += n_e
                    s1 = 1.0 if fx > fit[a] else -1.0
                    s2 = 1.0 if fx > fit[c] else -1.0
                    v = x + (s1 * f) * (X[a] - x) + (s2 * f) * (X[c] - x)
                else:
                    a = _pick_one(p[0], n_e)
                    c = n_e + _pick_one(p[1], n_c, ci)
                    s2 = 1.0 if fx > fit[c] else -1.0
                    v = x + f * (X[a] - x) + (s2 * f) * (X[c] - x)
                trial = _crossover(x, v, CR[i], U[i], J[i], lo, hi)
                ft = ev(trial)
                if ft < fx:
                    if log is not None:
                        log.record(CR[i], f, fx - ft)
                    X[i], fit[i] = trial, ft

            state.sort()
            X, fit = state.X, state.fit
            if adaptive:
                update_memory(mem, log)
            if state.note_best() or state.best_f < best_before:
                state.n_r_counter = 0
            if state.n_r_counter == cfg.n_r:
                group_reflection(state, n_e, problem, rng)
            else:
                state.n_r_counter += 1
                tail_reflection(state, n_e, problem, rng, cfg.tail_restart)
            state.sort()
            X, fit = state.X, state.fit
            if state.note_best():
                state.n_r_counter = 0
            state.trace.append(state.best_f)
    except EvaluationError as exc:
        raise RunError(str(exc), record(str(exc))) from exc

    return record()
