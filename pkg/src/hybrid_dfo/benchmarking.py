"""Convergence test, performance profiles and data profiles.

The inputs are per-run summaries carrying an improvement history
``[(evals, time_s, best_f), ...]`` so that profiles for any tolerance can be
recomputed without rerunning solvers.
"""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import EmptyResults

__all__ = [
    "convergence_test",
    "ResultCell",
    "ProfileCurve",
    "RunSummary",
    "performance_profile",
    "data_profile",
    "cost_to_converge",
    "build_cells",
    "write_profile_csv",
    "DEFAULT_TAUS",
]

DEFAULT_TAUS = (1e-1, 1e-3, 1e-5)


def convergence_test(f: float, f0: float, fL: float, tau: float) -> bool:
    """``f <= fL + tau * (f0 - fL)``."""
    return f <= fL + tau * (f0 - fL)


@dataclass(frozen=True)
class ResultCell:
    """Cost for one (problem, solver) pair; ``t`` is None when unconverged."""

    problem: str
    solver: str
    t: Optional[float]
    converged: bool
    f_best: float = math.nan
    n_p: int = 1

    def __post_init__(self):
        if self.converged != (self.t is not None):
            raise ValueError("t must be given iff the run converged")
        if self.t is not None and not self.t > 0:
            raise ValueError(f"cost must be positive, got {self.t}")


@dataclass(frozen=True)
class ProfileCurve:
    """Right-continuous step function: ``ordinates[i]`` holds on
    ``[abscissae[i], abscissae[i+1])`` and 0 left of the first breakpoint."""

    solver: str
    abscissae: tuple
    ordinates: tuple

    def __call__(self, alpha: float) -> float:
        i = bisect.bisect_right(self.abscissae, alpha)
        return 0.0 if i == 0 else self.ordinates[i - 1]

    def points(self):
        return list(zip(self.abscissae, self.ordinates))


@dataclass
class RunSummary:
    problem: str
    solver: str
    n: int
    f0: float
    f_opt_hint: Optional[float]
    f_best: float
    history: list  # (evals, time_s, best f so far), at each improvement


def _curves(cells: Sequence[ResultCell], cost_of) -> list:
    if not cells:
        raise EmptyResults("no results to profile")
    problems = sorted({c.problem for c in cells})
    solvers = sorted({c.solver for c in cells})
    if not any(c.converged for c in cells):
        raise EmptyResults("no solver converged on any problem")
    grid = {(c.problem, c.solver): c for c in cells}
    costs = {s: [] for s in solvers}
    for p in problems:
        best = min((grid[p, s].t for s in solvers if (p, s) in grid and grid[p, s].converged),
                   default=None)
        for s in solvers:
            c = grid.get((p, s))
            costs[s].append(math.inf if c is None or not c.converged else cost_of(c, best))
    breaks = sorted({v for vs in costs.values() for v in vs if math.isfinite(v)})
    out = []
    for s in solvers:
        vals = np.array(costs[s])
        xs = tuple(float(a) for a in breaks)
        ys = tuple(float(np.sum(vals <= a)) / len(problems) for a in xs)
        out.append(ProfileCurve(s, xs, ys))
    return out


def performance_profile(cells: Sequence[ResultCell]) -> list:
    """Fraction of problems each solver solves within ``alpha`` times the best cost.

    Breakpoints are all finite ratios (``alpha = 1`` is always among them
    since some solver is the best); unconverged cells never count.

    Raises:
        EmptyResults: no cells, or no converged cell.
    """
    curves = _curves(cells, lambda c, best: c.t / best)
    # alpha = 1 always belongs to the axis
    fixed = []
    for cv in curves:
        if not cv.abscissae or cv.abscissae[0] != 1.0:
            xs = (1.0,) + tuple(a for a in cv.abscissae if a != 1.0)
            ys = tuple(cv(a) for a in xs)
            cv = ProfileCurve(cv.solver, xs, ys)
        fixed.append(cv)
    return fixed


def data_profile(cells: Sequence[ResultCell]) -> list:
    """Fraction of problems solved within ``alpha`` simplex gradients,
    i.e. with ``t / (n_p + 1) <= alpha``.

    Raises:
        EmptyResults: no cells, or no converged cell.
    """
    return _curves(cells, lambda c, best: c.t / (c.n_p + 1))


def cost_to_converge(history, f0: float, fL: float, tau: float, metric: str = "evals"):
    """First cost at which the improvement history passes the convergence test."""
    col = {"evals": 0, "time": 1}[metric]
    for row in history:
        if convergence_test(row[2], f0, fL, tau):
            return max(float(row[col]), 1e-9)
    return None


def build_cells(runs: Iterable[RunSummary], tau: float, metric: str = "evals",
                fl_source: str = "hint") -> list:
    """Turn run summaries into result cells.

    ``fl_source="hint"`` takes ``f_L`` from the problem's known optimum and
    falls back to the best value found by any solver; ``"best"`` always uses
    the best found.
    """
    runs = list(runs)
    best_found = {}
    for r in runs:
        best_found[r.problem] = min(best_found.get(r.problem, math.inf), r.f_best)
    cells = []
    for r in runs:
        if fl_source == "hint" and r.f_opt_hint is not None:
            fL = r.f_opt_hint
        elif fl_source in ("hint", "best"):
            fL = best_found[r.problem]
        else:
            raise ValueError(f"fl_source must be 'hint' or 'best', got {fl_source!r}")
        t = cost_to_converge(r.history, r.f0, fL, tau, metric)
        cells.append(ResultCell(r.problem, r.solver, t, t is not None, r.f_best, r.n))
    return cells


def write_profile_csv(curves: Sequence[ProfileCurve], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "fraction", "solver"])
        for cv in curves:
            for a, y in cv.points():
                w.writerow([repr(a), repr(y), cv.solver])
