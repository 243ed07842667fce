"""Weighted-sum multiobjective driver, Pareto filtering and exact hypervolume."""

from __future__ import annotations

import csv
import itertools
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, HybridDFOError, UnsupportedObjectiveCount
from .objective import ObjectiveProblem

__all__ = [
    "normalize",
    "weighted_sum",
    "weight_grid",
    "dominates",
    "pareto_filter",
    "ArchiveEntry",
    "ParetoArchive",
    "hypervolume",
    "MoResult",
    "mo_driver",
    "toy_biobjective",
    "write_front_csv",
    "write_curve_csv",
]


def normalize(values, ranges=None) -> np.ndarray:
    """Map raw objective values to ``[0, 1]`` with per-objective ``(min, max)``.

    ``ranges=None`` leaves the values untouched (test mode).  Degenerate
    ranges map everything to 0.
    """
    v = np.asarray(values, dtype=float).reshape(-1)
    if ranges is None:
        return v
    r = np.asarray(ranges, dtype=float).reshape(-1, 2)
    if r.shape[0] != v.shape[0]:
        raise DimensionMismatch(f"{v.shape[0]} objectives but {r.shape[0]} ranges")
    span = r[:, 1] - r[:, 0]
    out = np.where(span > 0, (v - r[:, 0]) / np.where(span > 0, span, 1.0), 0.0)
    return np.clip(out, 0.0, 1.0)


def weighted_sum(fvec, w) -> float:
    f = np.asarray(fvec, dtype=float).reshape(-1)
    w = np.asarray(w, dtype=float).reshape(-1)
    if f.shape != w.shape:
        raise DimensionMismatch(f"objective vector has {f.size} entries, weights {w.size}")
    return float(f @ w)


def weight_grid(m: int) -> list:
    """The fixed weight sets: 5 pairs for two objectives, 10 triples for three.

    Raises:
        UnsupportedObjectiveCount: ``m`` not in ``{2, 3}``.
    """
    if m == 2:
        return [np.array([0.25 * i, 1.0 - 0.25 * i]) for i in range(5)]
    if m == 3:
        out = []
        for i1 in range(4):
            for i2 in range(4 - i1):
                out.append(np.array([i1, i2, 3 - i1 - i2]) / 3.0)
        return out
    raise UnsupportedObjectiveCount(f"weight grids exist for 2 or 3 objectives, got {m}")


def dominates(a, b) -> bool:
    """Pareto dominance for minimization."""
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise DimensionMismatch(f"cannot compare vectors of length {a.size} and {b.size}")
    return bool(np.all(a <= b) and np.any(a < b))


def pareto_filter(F) -> list:
    """Indices of the non-dominated rows of ``F`` (or of an archive's entries).

    Identical vectors are represented once, by the earliest row.
    """
    if isinstance(F, ParetoArchive):
        F = F.matrix()
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if F.size == 0:
        return []
    # lexicographic sort: a row can only be dominated by rows sorted before it
    order = np.lexsort(tuple(F[:, j] for j in reversed(range(F.shape[1]))))
    front = []
    for i in order:
        fi = F[i]
        if any(np.all(F[j] <= fi) for j in front):
            continue
        front.append(int(i))
    return sorted(front)


@dataclass(frozen=True)
class ArchiveEntry:
    point: np.ndarray
    fvec: np.ndarray
    weight_index: int
    eval_index: int


class ParetoArchive:
    """Every evaluated objective vector, plus the indices of the current front.

    The front is maintained incrementally: a new vector joins it unless some
    front member weakly dominates it (which also drops exact repeats), and it
    evicts the members it dominates.
    """

    def __init__(self, m: int):
        self.m = m
        self.entries: list = []
        self.front: list = []

    def __len__(self):
        return len(self.entries)

    def add(self, point, fvec, weight_index: int = -1, eval_index: Optional[int] = None) -> bool:
        """Archive one evaluation; return True if it entered the front."""
        f = np.asarray(fvec, dtype=float).reshape(-1)
        if f.shape[0] != self.m:
            raise DimensionMismatch(f"expected {self.m} objectives, got {f.shape[0]}")
        idx = len(self.entries)
        eidx = idx + 1 if eval_index is None else int(eval_index)
        self.entries.append(ArchiveEntry(np.array(point, dtype=float), f, weight_index, eidx))
        for j in self.front:
            if np.all(self.entries[j].fvec <= f):
                return False
        self.front = [j for j in self.front if not dominates(f, self.entries[j].fvec)]
        self.front.append(idx)
        self.front.sort()
        return True

    def matrix(self) -> np.ndarray:
        if not self.entries:
            return np.empty((0, self.m))
        return np.array([e.fvec for e in self.entries])

    def front_vectors(self) -> np.ndarray:
        if not self.front:
            return np.empty((0, self.m))
        return np.array([self.entries[j].fvec for j in self.front])


def _hv2(P, ref):
    P = P[np.argsort(P[:, 0], kind="stable")]
    hv, ybound = 0.0, ref[1]
    for x, y in P:
        if y < ybound:
            hv += (ref[0] - x) * (ybound - y)
            ybound = y
    return hv


def hypervolume(front, ref=None) -> float:
    """Exact hypervolume dominated by ``front`` inside the box up to ``ref``.

    Two objectives use a sweep over the first coordinate; three objectives
    slice along the third and sum 2-D sweeps.  Points not below ``ref`` in
    every coordinate are dropped with a warning.

    Raises:
        UnsupportedObjectiveCount: more than three or fewer than two objectives.
    """
    P = np.atleast_2d(np.asarray(front, dtype=float))
    if P.size == 0:
        return 0.0
    m = P.shape[1]
    if m not in (2, 3):
        raise UnsupportedObjectiveCount(f"hypervolume supports 2 or 3 objectives, got {m}")
    ref = np.ones(m) if ref is None else np.asarray(ref, dtype=float).reshape(-1)
    inside = np.all(P <= ref, axis=1)
    if not np.all(inside):
        warnings.warn(f"{int(np.sum(~inside))} point(s) outside the reference box ignored",
                      stacklevel=2)
        P = P[inside]
    if P.shape[0] == 0:
        return 0.0
    if m == 2:
        return float(_hv2(P, ref))
    P = P[np.argsort(P[:, 2], kind="stable")]
    hv = 0.0
    for k in range(P.shape[0]):
        top = P[k + 1, 2] if k + 1 < P.shape[0] else ref[2]
        if top > P[k, 2]:
            hv += _hv2(P[: k + 1, :2], ref[:2]) * (top - P[k, 2])
    return float(hv)


def toy_biobjective() -> list:
    """``(x^2, (x - 1)^2)`` on ``[0, 1]``, both objectives already in ``[0, 1]``."""
    b = np.array([[0.0, 1.0]])
    return [
        ObjectiveProblem("toy_f1", 1, lambda x: float(x[0] ** 2), np.array([0.5]), 0.0, b),
        ObjectiveProblem("toy_f2", 1, lambda x: float((x[0] - 1.0) ** 2), np.array([0.5]), 0.0, b),
    ]


@dataclass
class MoResult:
    archive: ParetoArchive
    curve: list  # (time_s, evals, hypervolume), one row per evaluation
    weights: list
    runs: list = field(default_factory=list)  # (weight_index, SolveResult or None, error or None)

    @property
    def hypervolume(self) -> float:
        return self.curve[-1][2] if self.curve else 0.0


def mo_driver(
    problems: Sequence[ObjectiveProblem],
    solver: Callable,
    cfg,
    weights: Optional[list] = None,
    ranges=None,
    budget: Optional[int] = None,
    ref=None,
) -> MoResult:
    """Weighted-sum sweep: one scalar solve per weight vector.

    Args:
        problems: The ``m`` objectives; all share dimension, start and bounds.
        solver: ``solver(problem, cfg) -> SolveResult``, e.g. ``hybrid_solve``.
        cfg: Solver config; ``max_evals`` is replaced by the per-weight share.
        weights: Defaults to :func:`weight_grid` for ``m``.
        ranges: Per-objective ``(min, max)`` for normalization.
        budget: Total evaluation budget (default ``cfg.max_evals``), split
            evenly across weights.
        ref: Hypervolume reference point, the unit vector by default.

    Every evaluation enters the archive with its full objective vector; the
    hypervolume of the running front is recorded after each one.  A solver
    error is stored with its weight and the sweep moves on.
    """
    import dataclasses

    m = len(problems)
    if m < 2:
        raise UnsupportedObjectiveCount("need at least two objectives")
    base = problems[0]
    for p in problems[1:]:
        if p.dim != base.dim:
            raise DimensionMismatch("objectives must share the decision space")
    W = weight_grid(m) if weights is None else [np.asarray(w, dtype=float) for w in weights]
    for w in W:
        if w.shape[0] != m or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"invalid weight vector {w}")
    total = int(budget if budget is not None else cfg.max_evals)
    share = max(1, total // len(W))
    archive = ParetoArchive(m)
    curve = []
    t0 = time.monotonic()
    hv_state = {"hv": 0.0}
    runs = []

    for wi, w in enumerate(W):
        def scalar(x, w=w, wi=wi):
            fv = normalize([p.fun(x) for p in problems], ranges)
            if archive.add(x, fv, wi, len(archive) + 1):
                hv_state["hv"] = hypervolume(archive.front_vectors(), ref)
            curve.append((time.monotonic() - t0, len(archive), hv_state["hv"]))
            return weighted_sum(fv, w)

        label = ",".join(f"{v:g}" for v in w)
        sp = ObjectiveProblem(f"ws[{label}]", base.dim, scalar, base.x0, None, base.bounds)
        run_cfg = dataclasses.replace(cfg, max_evals=share)
        try:
            runs.append((wi, solver(sp, run_cfg), None))
        except HybridDFOError as exc:  # recorded, sweep continues
            runs.append((wi, None, exc))
    return MoResult(archive, curve, W, runs)


def write_front_csv(archive: ParetoArchive, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{i + 1}" for i in range(archive.m)] + ["weight_index", "eval_index"])
        for j in archive.front:
            e = archive.entries[j]
            w.writerow([repr(float(v)) for v in e.fvec] + [e.weight_index, e.eval_index])


def write_curve_csv(curve, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "evals", "hypervolume"])
        for t, k, hv in curve:
            w.writerow([f"{t:.6f}", k, repr(float(hv))])
