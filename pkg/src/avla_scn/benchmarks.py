"""The 29 benchmark objectives: unimodal F1-F7, multimodal F8-F13,
fixed-dimension F14-F23 and composite F24-F29.

F1-F13 take their usual forms (absolute values in F2/F4/F8, the step
function for F6, the pi/n factor for F12).  F14-F23 use the standard
coefficient tables.  Composites follow the hybrid composition scheme with
identity rotations and the shift optima stored in
``data/composite_shifts.toml``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Callable, Dict, Optional, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .core import Bounds, Problem, SeededRng


class UnknownBenchmark(KeyError):
    pass


@dataclass(frozen=True)
class BenchmarkSpec:
    id: str
    dim: int
    lower: float
    upper: float
    f_min: float
    optimum: Optional[tuple] = None
    stochastic: bool = False
    lower_vec: Optional[tuple] = None
    upper_vec: Optional[tuple] = None

    def bounds(self, dim: Optional[int] = None) -> Bounds:
        if self.lower_vec is not None:
            return Bounds(np.array(self.lower_vec), np.array(self.upper_vec))
        return Bounds.uniform(self.lower, self.upper, dim or self.dim)


# ------------------------------------------------------------------ helpers

def penalized_u(x, a: float, k: float, m: float):
    """``k (x - a)^m`` above ``a``, ``k (-x - a)^m`` below ``-a``, zero between."""
    x = np.asarray(x, dtype=float)
    out = np.where(x > a, k * (x - a) ** m, 0.0)
    out = np.where(x < -a, k * (-x - a) ** m, out)
    return out if out.ndim else float(out)


# ------------------------------------------------------------------ F1-F13

def sphere(x):
    return float(np.dot(x, x))


def schwefel_2_22(x):
    ax = np.abs(x)
    return float(ax.sum() + np.prod(ax))


def schwefel_1_2(x):
    c = np.cumsum(x)
    return float(np.dot(c, c))


def schwefel_2_21(x):
    return float(np.max(np.abs(x)))


def rosenbrock(x):
    a, b = x[:-1], x[1:]
    return float(np.sum(100.0 * (b - a * a) ** 2 + (a - 1.0) ** 2))


def step(x):
    s = np.floor(x + 0.5)
    return float(np.dot(s, s))


def quartic_clean(x):
    i = np.arange(1, x.size + 1)
    return float(np.sum(i * x ** 4))


def schwefel_2_26(x):
    return float(np.sum(-x * np.sin(np.sqrt(np.abs(x)))))


def rastrigin(x):
    return float(np.sum(x * x - 10.0 * np.cos(2.0 * np.pi * x) + 10.0))


def ackley(x):
    # expm1 form: same function, no cancellation near the optimum
    n = x.size
    r = math.sqrt(float(np.dot(x, x)) / n)
    return float(-20.0 * math.expm1(-0.2 * r)
                 + (math.e - math.exp(float(np.sum(np.cos(2.0 * np.pi * x))) / n)))


def griewank(x):
    i = np.sqrt(np.arange(1, x.size + 1))
    return float(np.dot(x, x) / 4000.0 - np.prod(np.cos(x / i)) + 1.0)


def penalized_1(x):
    n = x.size
    y = 1.0 + (x + 1.0) / 4.0
    s = 10.0 * np.sin(np.pi * y[0]) ** 2
    s += np.sum((y[:-1] - 1.0) ** 2 * (1.0 + 10.0 * np.sin(np.pi * y[1:]) ** 2))
    s += (y[-1] - 1.0) ** 2
    return float(np.pi / n * s + np.sum(penalized_u(x, 10.0, 100.0, 4)))


def penalized_2(x):
    s = np.sin(3.0 * np.pi * x[0]) ** 2
    s += np.sum((x[:-1] - 1.0) ** 2 * (1.0 + np.sin(3.0 * np.pi * x[1:]) ** 2))
    s += (x[-1] - 1.0) ** 2 * (1.0 + np.sin(2.0 * np.pi * x[-1]) ** 2)
    return float(0.1 * s + np.sum(penalized_u(x, 5.0, 100.0, 4)))


# ------------------------------------------------------------------ F14-F23

_FOX = np.array([[-32.0, -16.0, 0.0, 16.0, 32.0] * 5,
                 np.repeat([-32.0, -16.0, 0.0, 16.0, 32.0], 5)])

_KOW_A = np.array([0.1957, 0.1947, 0.1735, 0.1600, 0.0844, 0.0627,
                   0.0456, 0.0342, 0.0323, 0.0235, 0.0246])
_KOW_B = 1.0 / np.array([0.25, 0.5, 1.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0])

_H3_A = np.array([[3.0, 10.0, 30.0], [0.1, 10.0, 35.0], [3.0, 10.0, 30.0], [0.1, 10.0, 35.0]])
_H3_P = np.array([[0.3689, 0.1170, 0.2673], [0.4699, 0.4387, 0.7470],
                  [0.1091, 0.8732, 0.5547], [0.03815, 0.5743, 0.8828]])
_H_C = np.array([1.0, 1.2, 3.0, 3.2])
_H6_A = np.array([[10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
                  [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
                  [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
                  [17.0, 8.0, 0.05, 10.0, 0.1, 14.0]])
_H6_P = np.array([[0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
                  [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
                  [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
                  [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381]])

_SHEKEL_A = np.array([[4, 4, 4, 4], [1, 1, 1, 1], [8, 8, 8, 8], [6, 6, 6, 6],
                      [3, 7, 3, 7], [2, 9, 2, 9], [5, 5, 3, 3], [8, 1, 8, 1],
                      [6, 2, 6, 2], [7, 3.6, 7, 3.6]], dtype=float)
_SHEKEL_C = np.array([0.1, 0.2, 0.2, 0.4, 0.4, 0.6, 0.3, 0.7, 0.5, 0.5])


def foxholes(x):
    d = np.sum((x[:, None] - _FOX) ** 6, axis=0)
    return float(1.0 / (1.0 / 500.0 + np.sum(1.0 / (np.arange(1, 26) + d))))


def kowalik(x):
    b = _KOW_B
    r = _KOW_A - x[0] * (b * b + b * x[1]) / (b * b + b * x[2] + x[3])
    return float(np.dot(r, r))


def six_hump_camel(x):
    x1, x2 = x[0], x[1]
    return float(4 * x1 ** 2 - 2.1 * x1 ** 4 + x1 ** 6 / 3 + x1 * x2 - 4 * x2 ** 2 + 4 * x2 ** 4)


def branin(x):
    x1, x2 = x[0], x[1]
    return float((x2 - 5.1 / (4 * np.pi ** 2) * x1 ** 2 + 5 / np.pi * x1 - 6) ** 2
                 + 10 * (1 - 1 / (8 * np.pi)) * np.cos(x1) + 10)


def goldstein_price(x):
    x1, x2 = x[0], x[1]
    a = 1 + (x1 + x2 + 1) ** 2 * (19 - 14 * x1 + 3 * x1 ** 2 - 14 * x2 + 6 * x1 * x2 + 3 * x2 ** 2)
    b = 30 + (2 * x1 - 3 * x2) ** 2 * (18 - 32 * x1 + 12 * x1 ** 2 + 48 * x2 - 36 * x1 * x2 + 27 * x2 ** 2)
    return float(a * b)


def _hartmann(x, a, p):
    return float(-np.dot(_H_C, np.exp(-np.sum(a * (x - p) ** 2, axis=1))))


def hartmann3(x):
    return _hartmann(x, _H3_A, _H3_P)


def hartmann6(x):
    return _hartmann(x, _H6_A, _H6_P)


def _shekel(m):
    a, c = _SHEKEL_A[:m], _SHEKEL_C[:m]

    def f(x):
        d = x - a
        return float(-np.sum(1.0 / (np.sum(d * d, axis=1) + c)))
    return f


# ------------------------------------------------------------------ composites

def _weierstrass(x, a=0.5, b=3.0, kmax=20):
    k = np.arange(kmax + 1)
    ak, bk = a ** k, b ** k
    inner = np.sum(ak * np.cos(2 * np.pi * bk * (x[:, None] + 0.5)), axis=1)
    return float(np.sum(inner) - x.size * np.sum(ak * np.cos(np.pi * bk)))


_BASE = {"sphere": sphere, "griewank": griewank, "ackley": ackley,
         "rastrigin": rastrigin, "weierstrass": _weierstrass}

_CF_LAYOUT = {
    24: (["sphere"] * 10, [1.0] * 10, [5 / 100] * 10),
    25: (["griewank"] * 10, [1.0] * 10, [5 / 100] * 10),
    26: (["griewank"] * 10, [1.0] * 10, [1.0] * 10),
    27: (["ackley"] * 2 + ["rastrigin"] * 2 + ["weierstrass"] * 2 + ["griewank"] * 2 + ["sphere"] * 2,
         [1.0] * 10,
         [5 / 32, 5 / 32, 1, 1, 5 / 0.5, 5 / 0.5, 5 / 100, 5 / 100, 5 / 100, 5 / 100]),
    28: (["rastrigin"] * 2 + ["weierstrass"] * 2 + ["griewank"] * 2 + ["ackley"] * 2 + ["sphere"] * 2,
         [1.0] * 10,
         [1 / 5, 1 / 5, 5 / 0.5, 5 / 0.5, 5 / 100, 5 / 100, 5 / 32, 5 / 32, 5 / 100, 5 / 100]),
    29: (["rastrigin"] * 2 + ["weierstrass"] * 2 + ["griewank"] * 2 + ["ackley"] * 2 + ["sphere"] * 2,
         [0.1 * (i + 1) for i in range(10)],
         [0.1 * 1 / 5, 0.2 * 1 / 5, 0.3 * 5 / 0.5, 0.4 * 5 / 0.5, 0.5 * 5 / 100,
          0.6 * 5 / 100, 0.7 * 5 / 32, 0.8 * 5 / 32, 0.9 * 5 / 100, 1.0 * 5 / 100]),
}

COMPOSITE_C = 2000.0
COMPOSITE_UPPER = 5.0


@dataclass(frozen=True)
class CompositeSpec:
    components: tuple
    sigma: np.ndarray
    lam: np.ndarray
    shifts: np.ndarray
    bias: np.ndarray
    f_max: np.ndarray

    @property
    def dim(self) -> int:
        return self.shifts.shape[1]


@lru_cache(maxsize=None)
def _shift_table() -> dict:
    path = resources.files("avla_scn").joinpath("data/composite_shifts.toml")
    with path.open("rb") as fh:
        return tomllib.load(fh)


def composite_spec(fid: int) -> CompositeSpec:
    names, sigma, lam = _CF_LAYOUT[fid]
    shifts = np.array(_shift_table()[f"F{fid}"]["shifts"], dtype=float)
    lam = np.array(lam, dtype=float)
    dim = shifts.shape[1]
    f_max = np.array([abs(_BASE[n](np.full(dim, COMPOSITE_UPPER) / l)) for n, l in zip(names, lam)])
    return CompositeSpec(tuple(names), np.array(sigma, dtype=float), lam, shifts,
                         100.0 * np.arange(len(names)), f_max)


def composite_weights(spec: CompositeSpec, x) -> np.ndarray:
    """Distance-based component weights, sharpened toward the nearest optimum, summing to 1.

    Each weight is scaled by ``1 - m**10`` where ``m`` is the largest of the
    other weights, so at any shifted optimum only its own component remains
    and the weights stay continuous in ``x``.
    """
    x = np.asarray(x, dtype=float)
    d2 = np.sum((x - spec.shifts) ** 2, axis=1)
    w = np.exp(-d2 / (2.0 * spec.dim * spec.sigma ** 2))
    order = np.argsort(w)
    top, second = w[order[-1]], w[order[-2]]
    others = np.full(w.size, top)
    others[order[-1]] = second
    w = w * (1.0 - others ** 10)
    total = w.sum()
    if total <= 0.0:
        return np.full(w.size, 1.0 / w.size)
    return w / total


def evaluate_composite(spec: CompositeSpec, x) -> float:
    x = np.asarray(x, dtype=float)
    w = composite_weights(spec, x)
    total = 0.0
    for k, name in enumerate(spec.components):
        z = (x - spec.shifts[k]) / spec.lam[k]
        fk = COMPOSITE_C * _BASE[name](z) / spec.f_max[k]
        total += w[k] * (fk + spec.bias[k])
    return float(total)


# ------------------------------------------------------------------ registry

_X8 = 420.968746359982
_SPECS: Dict[str, tuple] = {
    "F1": (sphere, BenchmarkSpec("F1", 30, -100, 100, 0.0, (0.0,))),
    "F2": (schwefel_2_22, BenchmarkSpec("F2", 30, -10, 10, 0.0, (0.0,))),
    "F3": (schwefel_1_2, BenchmarkSpec("F3", 30, -100, 100, 0.0, (0.0,))),
    "F4": (schwefel_2_21, BenchmarkSpec("F4", 30, -100, 100, 0.0, (0.0,))),
    "F5": (rosenbrock, BenchmarkSpec("F5", 30, -30, 30, 0.0, (1.0,))),
    "F6": (step, BenchmarkSpec("F6", 30, -100, 100, 0.0, (0.0,))),
    "F7": (quartic_clean, BenchmarkSpec("F7", 30, -1.28, 1.28, 0.0, (0.0,), stochastic=True)),
    "F8": (schwefel_2_26, BenchmarkSpec("F8", 30, -500, 500, -418.982887272433799 * 30, (_X8,))),
    "F9": (rastrigin, BenchmarkSpec("F9", 30, -5.12, 5.12, 0.0, (0.0,))),
    "F10": (ackley, BenchmarkSpec("F10", 30, -32, 32, 0.0, (0.0,))),
    "F11": (griewank, BenchmarkSpec("F11", 30, -512, 512, 0.0, (0.0,))),
    "F12": (penalized_1, BenchmarkSpec("F12", 30, -50, 50, 0.0, (-1.0,))),
    "F13": (penalized_2, BenchmarkSpec("F13", 30, -50, 50, 0.0, (1.0,))),
    "F14": (foxholes, BenchmarkSpec("F14", 2, -65.536, 65.536, 0.998003837794449,
                                    (-31.978335750474, -31.978332565735))),
    "F15": (kowalik, BenchmarkSpec("F15", 4, -5, 5, 0.000307485987805,
                                   (0.192833453643, 0.190836227653,
                                    0.123117294948, 0.135765984879))),
    "F16": (six_hump_camel, BenchmarkSpec("F16", 2, -5, 5, -1.031628453489877,
                                          (0.089842012577, -0.712656403424))),
    "F17": (branin, BenchmarkSpec("F17", 2, -5, 5, 0.397887357729738, (np.pi, 2.275))),
    "F18": (goldstein_price, BenchmarkSpec("F18", 2, -2, 2, 3.0, (0.0, -1.0))),
    "F19": (hartmann3, BenchmarkSpec("F19", 3, 0, 1, -3.862782147820755,
                                     (0.114614336924, 0.55564885135, 0.852546954406))),
    "F20": (hartmann6, BenchmarkSpec("F20", 6, 0, 1, -3.322368011415515,
                                     (0.201689510713, 0.150010688658, 0.476873971982,
                                      0.27533243111, 0.311651617702, 0.657300534409))),
    "F21": (_shekel(5), BenchmarkSpec("F21", 4, 0, 10, -10.153199679058231,
                                      (4.000037154215, 4.000133273838,
                                       4.000037153098, 4.000133277054))),
    "F22": (_shekel(7), BenchmarkSpec("F22", 4, 0, 10, -10.402940566818664,
                                      (4.000572916756, 4.000689365028,
                                       3.999489708228, 3.999606160121))),
    "F23": (_shekel(10), BenchmarkSpec("F23", 4, 0, 10, -10.536409816692046,
                                       (4.000746531194, 4.000592934971,
                                       3.999663395228, 3.999509804744))),
}
for _fid in range(24, 30):
    _SPECS[f"F{_fid}"] = (None, BenchmarkSpec(f"F{_fid}", 10, -5, 5, 0.0))

BENCHMARK_IDS = tuple(_SPECS)


def spec(fid: str) -> BenchmarkSpec:
    try:
        return _SPECS[_norm(fid)][1]
    except KeyError:
        raise UnknownBenchmark(f"unknown benchmark id {fid!r}") from None


def _norm(fid: str) -> str:
    s = str(fid).strip().upper()
    return s if s.startswith("F") else f"F{s}"


def optimum(fid: str, dim: Optional[int] = None) -> np.ndarray:
    """A documented global minimiser (for composites, the first shift)."""
    sp = spec(fid)
    n = int(sp.id[1:])
    if n >= 24:
        return composite_spec(n).shifts[0].copy()
    d = dim or sp.dim
    if len(sp.optimum) == 1:
        return np.full(d, float(sp.optimum[0]))
    return np.array(sp.optimum, dtype=float)


def make(fid: str, dim: Optional[int] = None, noise_seed: int = 0) -> Problem:
    """Build the benchmark ``fid`` as a Problem.

    ``dim`` overrides the dimension of the scalable functions F1-F13.
    ``noise_seed`` pins F7's additive uniform noise stream.
    """
    sp = spec(fid)
    fn, n = _SPECS[sp.id][0], int(sp.id[1:])
    if dim is not None and n > 13 and dim != sp.dim:
        raise ValueError(f"{sp.id} has fixed dimension {sp.dim}")
    d = dim or sp.dim
    f_min = sp.f_min
    if sp.id == "F8":
        f_min = -418.982887272433799 * d
    if n >= 24:
        cs = composite_spec(n)
        fn = lambda x, cs=cs: evaluate_composite(cs, x)  # noqa: E731
    elif sp.id == "F7":
        noise = SeededRng(noise_seed)
        fn = lambda x, noise=noise: quartic_clean(x) + float(noise.uniform())  # noqa: E731
    return Problem(sp.id, sp.bounds(d), fn, stochastic=sp.stochastic, f_min=f_min)
