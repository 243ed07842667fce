"""Black-box problems, metered evaluation and the analytic benchmark suite.

Every solver talks to the objective through :func:`evaluate`, which clips to
bounds, charges one unit of budget and appends to an
:class:`EvaluationLedger`.  The ledger history is what profiles and
hypervolume curves are computed from.
"""

from __future__ import annotations

import csv
import math
import re
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import BudgetExhausted, DimensionMismatch

__all__ = [
    "ObjectiveProblem",
    "EvaluationRecord",
    "EvaluationLedger",
    "evaluate",
    "evaluate_cached",
    "benchmark_suite",
    "get_problem",
    "problem_names",
    "write_history_csv",
]


@dataclass(frozen=True, eq=False)
class ObjectiveProblem:
    """An immutable black-box minimization problem.

    Attributes:
        name: Identifier used on the command line and in result files.
        dim: Number of variables.
        fun: Callable mapping a length-``dim`` array to a float.
        x0: Starting point.
        f_opt_hint: Known minimum value, if any.
        bounds: Optional ``(dim, 2)`` array of per-coordinate ``[lo, hi]``.
    """

    name: str
    dim: int
    fun: Callable[[np.ndarray], float]
    x0: np.ndarray
    f_opt_hint: Optional[float] = None
    bounds: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if x0.shape[0] != self.dim:
            raise DimensionMismatch(f"x0 has length {x0.shape[0]}, expected {self.dim}")
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)
        if self.bounds is not None:
            b = np.asarray(self.bounds, dtype=float).reshape(self.dim, 2)
            if np.any(b[:, 0] > b[:, 1]):
                raise ValueError("bounds must satisfy lo <= hi")
            b.setflags(write=False)
            object.__setattr__(self, "bounds", b)

    def clip(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.bounds is None:
            return x
        return np.clip(x, self.bounds[:, 0], self.bounds[:, 1])

    def __call__(self, x) -> float:
        return float(self.fun(np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class EvaluationRecord:
    index: int
    point: np.ndarray
    value: float
    time_s: float


@dataclass
class EvaluationLedger:
    """Per-run evaluation history with an optional hard budget.

    One ledger belongs to exactly one run.  ``time_s`` in each record is
    measured on a monotonic clock from ledger creation.
    """

    budget: Optional[int] = None
    history: list = field(default_factory=list)
    _cache: dict = field(default_factory=dict, repr=False)
    _t0: float = field(default_factory=time.monotonic, repr=False)

    @property
    def count(self) -> int:
        return len(self.history)

    @property
    def remaining(self) -> float:
        if self.budget is None:
            return math.inf
        return self.budget - self.count

    def exhausted(self) -> bool:
        return self.budget is not None and self.count >= self.budget

    def elapsed(self) -> float:
        return time.monotonic() - self._t0

    def lookup(self, x: np.ndarray) -> Optional[float]:
        """Return the cached value of an exact (bitwise) repeat, else None."""
        return self._cache.get(_key(x))

    def best(self) -> Optional[EvaluationRecord]:
        if not self.history:
            return None
        return min(self.history, key=lambda r: (r.value, r.index))

    def _append(self, x: np.ndarray, value: float) -> EvaluationRecord:
        rec = EvaluationRecord(self.count + 1, x.copy(), value, self.elapsed())
        self.history.append(rec)
        self._cache.setdefault(_key(x), value)
        return rec


def _key(x) -> bytes:
    # +0.0 and -0.0 must collide
    return (np.asarray(x, dtype=float) + 0.0).tobytes()


def evaluate(problem: ObjectiveProblem, ledger: EvaluationLedger, x) -> float:
    """Evaluate ``problem`` at ``x``, charging exactly one evaluation.

    Raises:
        DimensionMismatch: ``x`` does not have ``problem.dim`` entries.
        BudgetExhausted: the ledger's budget is already spent.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != problem.dim:
        raise DimensionMismatch(f"point has length {x.shape[0]}, expected {problem.dim}")
    if ledger.exhausted():
        raise BudgetExhausted(f"budget of {ledger.budget} evaluations exhausted")
    x = problem.clip(x)
    value = problem(x)
    ledger._append(x, value)
    return value


def evaluate_cached(problem: ObjectiveProblem, ledger: EvaluationLedger, x):
    """Like :func:`evaluate` but reuse the value of a point already in the ledger.

    Returns:
        ``(x_clipped, value, fresh)`` where ``fresh`` tells whether budget
        was charged.
    """
    x = problem.clip(np.asarray(x, dtype=float).reshape(-1))
    cached = ledger.lookup(x)
    if cached is not None:
        return x, cached, False
    return x, evaluate(problem, ledger, x), True


def write_history_csv(ledger: EvaluationLedger, path, dump_points: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["eval_index", "time_s", "f_value"]
        if dump_points and ledger.history:
            header += [f"x{i}" for i in range(ledger.history[0].point.shape[0])]
        w.writerow(header)
        for rec in ledger.history:
            row = [rec.index, repr(rec.time_s), repr(rec.value)]
            if dump_points:
                row += [repr(float(v)) for v in rec.point]
            w.writerow(row)


# ---------------------------------------------------------------------------
# Test functions.  All smooth, all with a known global minimum value.


def sphere(x):
    return float(x @ x)


def rosenbrock(x):
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))


def abs_sum(x):
    return float(np.sum(np.abs(x)))


def powell_singular(x):
    a, b, c, d = x[0::4], x[1::4], x[2::4], x[3::4]
    return float(np.sum((a + 10 * b) ** 2 + 5 * (c - d) ** 2 + (b - 2 * c) ** 4 + 10 * (a - d) ** 4))


def dqdrtic(x):
    return float(np.sum(x[:-2] ** 2 + 100 * x[1:-1] ** 2 + 100 * x[2:] ** 2))


def tridia(x):
    i = np.arange(2, x.shape[0] + 1)
    return float((x[0] - 1.0) ** 2 + np.sum(i * (2 * x[1:] - x[:-1]) ** 2))


def zakharov(x):
    s = np.sum(0.5 * np.arange(1, x.shape[0] + 1) * x)
    return float(x @ x + s**2 + s**4)


def arwhead(x):
    return float(np.sum(-4 * x[:-1] + 3) + np.sum((x[:-1] ** 2 + x[-1] ** 2) ** 2))


def dixon_price(x):
    i = np.arange(2, x.shape[0] + 1)
    return float((x[0] - 1.0) ** 2 + np.sum(i * (2 * x[1:] ** 2 - x[:-1]) ** 2))


def trid(x):
    return float(np.sum((x - 1.0) ** 2) - np.sum(x[1:] * x[:-1]))


def broyden_tridiagonal(x):
    xp = np.concatenate(([0.0], x, [0.0]))
    r = (3 - 2 * x) * x - xp[:-2] - 2 * xp[2:] + 1
    return float(r @ r)


def vardim(x):
    n = x.shape[0]
    s = np.sum(np.arange(1, n + 1) * (x - 1.0))
    return float(np.sum((x - 1.0) ** 2) + s**2 + s**4)


def sumsquares(x):
    return float(np.sum(np.arange(1, x.shape[0] + 1) * x**2))


def _x0(family: str, n: int) -> np.ndarray:
    if family == "rosenbrock":
        x = np.ones(n)
        x[0::2] = -1.2
        return x
    if family == "powell_singular":
        return np.tile([3.0, -1.0, 0.0, 1.0], n // 4)
    if family == "dqdrtic":
        return np.full(n, 3.0)
    if family == "zakharov":
        return np.full(n, 0.5)
    if family == "trid":
        return np.zeros(n)
    if family == "broyden_tridiagonal":
        return -np.ones(n)
    if family == "vardim":
        return 1.0 - np.arange(1, n + 1) / n
    if family == "sphere":
        return np.full(n, 3.0) if n != 2 else np.array([3.0, 4.0])
    return np.ones(n)


def _fopt(family: str, n: int) -> float:
    if family == "trid":
        return -n * (n + 4) * (n - 1) / 6.0
    return 0.0


_FAMILIES = {
    "sphere": sphere,
    "rosenbrock": rosenbrock,
    "abs_sum": abs_sum,
    "powell_singular": powell_singular,
    "dqdrtic": dqdrtic,
    "tridia": tridia,
    "zakharov": zakharov,
    "arwhead": arwhead,
    "dixon_price": dixon_price,
    "trid": trid,
    "broyden_tridiagonal": broyden_tridiagonal,
    "vardim": vardim,
    "sumsquares": sumsquares,
}

_MIN_DIM = {"rosenbrock": 2, "powell_singular": 4, "dqdrtic": 3, "tridia": 2, "arwhead": 2,
            "dixon_price": 2, "trid": 2}

# (family, dim): dimension histogram {5:1, 8:1, 15:3, 20:4, 25:2, 30:2}
_SUITE = [
    ("rosenbrock", 5),
    ("powell_singular", 8),
    ("dqdrtic", 15),
    ("tridia", 15),
    ("zakharov", 15),
    ("arwhead", 20),
    ("dixon_price", 20),
    ("trid", 20),
    ("broyden_tridiagonal", 20),
    ("vardim", 25),
    ("sumsquares", 25),
    ("dqdrtic", 30),
    ("broyden_tridiagonal", 30),
]


def make_problem(family: str, n: int, bounds=None) -> ObjectiveProblem:
    if family not in _FAMILIES:
        raise KeyError(f"unknown problem family {family!r}")
    if n < _MIN_DIM.get(family, 1) or (family == "powell_singular" and n % 4):
        raise ValueError(f"{family} is not defined for n={n}")
    return ObjectiveProblem(
        name=f"{family}_{n}",
        dim=n,
        fun=_FAMILIES[family],
        x0=_x0(family, n),
        f_opt_hint=_fopt(family, n),
        bounds=bounds,
    )


def benchmark_suite() -> list:
    """The 13 smooth analytic problems used by the benchmark harness."""
    return [make_problem(fam, n) for fam, n in _SUITE]


def problem_names() -> list:
    return [f"{fam}_{n}" for fam, n in _SUITE]


_NAME_RE = re.compile(r"^([a-z_]+?)_?(\d+)$")


def get_problem(name: str) -> ObjectiveProblem:
    """Look up a problem by name, e.g. ``"arwhead_20"`` or ``"sphere2"``."""
    m = _NAME_RE.match(name.strip().lower())
    if not m or m.group(1) not in _FAMILIES:
        raise KeyError(
            f"unknown problem {name!r}; use <family>_<n> with family in {sorted(_FAMILIES)}"
        )
    return make_problem(m.group(1), int(m.group(2)))
