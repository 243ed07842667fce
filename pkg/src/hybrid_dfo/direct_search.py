"""Mesh-based direct search: poll sets, the hybrid's DS phase, and the
standalone pattern-search loop used as the basic-DS baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import nnls

from .errors import BudgetExhausted, ConfigError
from .objective import EvaluationLedger, ObjectiveProblem, evaluate_cached

__all__ = [
    "DsConfig",
    "MeshState",
    "DsResult",
    "gps_directions",
    "positively_spans",
    "poll_set",
    "search_point",
    "ds_phase",
    "pattern_search",
]


def gps_directions(n: int) -> np.ndarray:
    """Columns ``[I, -I]``: the 2n coordinate directions."""
    return np.hstack((np.eye(n), -np.eye(n)))


def positively_spans(D: np.ndarray, tol: float = 1e-10) -> bool:
    """True if nonnegative combinations of the columns of ``D`` cover R^n.

    It suffices to reach ``e_1..e_n`` and ``-(e_1 + ... + e_n)``, which is
    checked with ``n + 1`` nonnegative least-squares probes.
    """
    D = np.atleast_2d(np.asarray(D, dtype=float))
    n = D.shape[0]
    targets = list(np.eye(n)) + [-np.ones(n)]
    for t in targets:
        _, resid = nnls(D, t)
        if resid > tol * max(1.0, np.linalg.norm(t)):
            return False
    return True


@dataclass
class DsConfig:
    epsilon_ds: float = 1e-6
    k_ds: Optional[int] = None  # None: n, half a poll stencil
    t_fail: int = 1
    use_search_step: bool = False
    tau_shrink: float = 0.5
    expand_factor: float = 2.0
    opportunistic: bool = True

    def __post_init__(self):
        if not self.epsilon_ds > 0:
            raise ConfigError("direct_search.epsilon_ds must be positive")
        if self.k_ds is not None and int(self.k_ds) < 1:
            raise ConfigError("direct_search.k_ds must be >= 1")
        if int(self.t_fail) < 1:
            raise ConfigError("direct_search.t_fail must be >= 1")
        if not 0 < self.tau_shrink < 1:
            raise ConfigError("direct_search.tau_shrink must lie in (0, 1)")
        if not self.expand_factor >= 1:
            raise ConfigError("direct_search.expand_factor must be >= 1")

    def budget_for(self, n: int) -> int:
        return int(self.k_ds) if self.k_ds is not None else n


@dataclass
class MeshState:
    """Mesh ``{center + delta_mesh * D z}`` with a positive spanning ``D``."""

    center: np.ndarray
    delta_mesh: float
    directions: np.ndarray = None
    tau_shrink: float = 0.5
    expand_factor: float = 2.0

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(-1)
        if self.directions is None:
            self.directions = gps_directions(self.center.shape[0])
        self.directions = np.atleast_2d(np.asarray(self.directions, dtype=float))
        if self.directions.shape[0] != self.center.shape[0]:
            raise ValueError("directions must have one row per coordinate")
        if not self.delta_mesh > 0:
            raise ValueError("delta_mesh must be positive")
        if not positively_spans(self.directions):
            raise ValueError("directions do not positively span R^n")

    def on_mesh(self, x, tol: float = 1e-9) -> bool:
        """True if ``x - center`` is ``delta_mesh * D z`` for an integer ``z``."""
        u = (np.asarray(x, dtype=float) - self.center) / self.delta_mesh
        if _is_gps(self.directions):
            return bool(np.allclose(u, np.round(u), atol=tol))
        z, *_ = np.linalg.lstsq(self.directions, u, rcond=None)
        return bool(np.allclose(self.directions @ np.round(z), u, atol=tol))


def _is_gps(D):
    n = D.shape[0]
    return D.shape[1] == 2 * n and np.array_equal(D, gps_directions(n))


def poll_set(mesh: MeshState, problem: Optional[ObjectiveProblem] = None) -> np.ndarray:
    """One poll point ``center + delta * d`` per direction column, clipped to bounds."""
    P = mesh.center + mesh.delta_mesh * mesh.directions.T
    if problem is not None:
        P = np.array([problem.clip(p) for p in P])
    return P


def search_point(mesh: MeshState, rng: np.random.Generator, reach: int = 2) -> np.ndarray:
    """A random nonzero mesh point within ``reach`` mesh steps per direction."""
    k = mesh.directions.shape[1]
    while True:
        z = rng.integers(0, reach + 1, size=k)
        if np.any(z):
            break
    return mesh.center + mesh.delta_mesh * (mesh.directions @ z)


@dataclass
class DsResult:
    x: np.ndarray
    f: float
    delta: float
    evals_used: int
    fail_count: int
    budget_exhausted: bool = False
    rounds: int = 0
    trajectory: list = field(default_factory=list)

    def __iter__(self):
        # unpacks as (x_out, f_out, delta_out, evals_used, fail_count)
        return iter((self.x, self.f, self.delta, self.evals_used, self.fail_count))


def ds_phase(
    x_in,
    f_in: float,
    delta_in: float,
    problem: ObjectiveProblem,
    ledger: EvaluationLedger,
    cfg: DsConfig,
    rng: Optional[np.random.Generator] = None,
    delta_max: float = math.inf,
    gradient=None,
) -> DsResult:
    """Run direct search from a trust-region iterate until it stops paying off.

    Each round polls the ``2n`` mesh neighbours (after an optional random
    search point).  A round succeeds only if its best point improves the
    incumbent by at least ``cfg.epsilon_ds``; the incumbent then moves and the
    mesh expands.  A failed round keeps incumbent and mesh size and counts
    towards ``cfg.t_fail``.  Points already in the ledger are not
    re-evaluated.  At most ``cfg.budget_for(n)`` fresh evaluations are spent.

    If ``gradient`` (a model gradient) is given, directions are polled in
    order of increasing ``gradient . d``.  With ``cfg.opportunistic`` a round
    stops at the first point achieving the sufficient decrease.
    """
    if not delta_in > 0:
        raise ValueError("delta_in must be positive")
    x = problem.clip(np.asarray(x_in, dtype=float))
    f = float(f_in)
    delta = min(float(delta_in), delta_max)
    budget = cfg.budget_for(problem.dim)
    evals = fails = rounds = 0
    traj = [(x.copy(), f)]
    flagged = False

    def probe(p):
        nonlocal evals
        p, v, fresh = evaluate_cached(problem, ledger, p)
        evals += int(fresh)
        return p, v

    try:
        while fails < cfg.t_fail and evals < budget:
            rounds += 1
            mesh = MeshState(x, delta, tau_shrink=cfg.tau_shrink, expand_factor=cfg.expand_factor)
            cands = []
            if cfg.use_search_step and rng is not None:
                p, v = probe(problem.clip(search_point(mesh, rng)))
                cands.append((v, -1, p))
            if not (cands and f - cands[0][0] >= cfg.epsilon_ds):
                P = poll_set(mesh, problem)
                order = range(len(P))
                if gradient is not None:
                    slope = np.asarray(gradient, dtype=float) @ mesh.directions
                    order = sorted(order, key=lambda i: (slope[i], i))
                for i in order:
                    if evals >= budget:
                        break
                    p, v = probe(P[i])
                    cands.append((v, i, p))
                    if cfg.opportunistic and f - v >= cfg.epsilon_ds:
                        break
            if not cands:
                break
            v_best, _, p_best = min(cands, key=lambda c: (c[0], c[1]))
            if f - v_best >= cfg.epsilon_ds:
                x, f = p_best, v_best
                delta = min(delta * cfg.expand_factor, delta_max)
                traj.append((x.copy(), f))
            else:
                fails += 1
    except BudgetExhausted:
        flagged = True
    return DsResult(x, f, delta, evals, fails, flagged, rounds, traj)


def pattern_search(
    x0,
    problem: ObjectiveProblem,
    ledger: EvaluationLedger,
    delta0: float = 1.0,
    delta_min: float = 1e-8,
    cfg: Optional[DsConfig] = None,
    rng: Optional[np.random.Generator] = None,
    on_round=None,
):
    """Standalone GPS loop: move on simple decrease (mesh kept), else shrink.

    Stops when the mesh size falls below ``delta_min`` or the ledger budget
    runs out.  ``on_round(x, f, delta, improved)`` is called after every poll.

    Returns:
        ``(x, f, delta, stop_reason)`` with stop_reason ``"radius_min"`` or
        ``"budget"``.
    """
    cfg = cfg or DsConfig()
    x = problem.clip(np.asarray(x0, dtype=float))
    delta = float(delta0)
    if delta < delta_min:
        return x, None, delta, "radius_min"
    f = None
    try:
        x, f, _ = evaluate_cached(problem, ledger, x)
        while delta >= delta_min:
            mesh = MeshState(x, delta)
            best = None
            if cfg.use_search_step and rng is not None:
                p, v, _ = evaluate_cached(problem, ledger, problem.clip(search_point(mesh, rng)))
                if v < f:
                    best = (v, -1, p)
            if best is None:
                for i, p in enumerate(poll_set(mesh, problem)):
                    p, v, _ = evaluate_cached(problem, ledger, p)
                    if v < f and (best is None or v < best[0]):
                        best = (v, i, p)
            if best is not None:
                f, _, x = best
            else:
                delta *= cfg.tau_shrink
            if on_round is not None:
                on_round(x, f, delta, best is not None)
    except BudgetExhausted:
        return x, f, delta, "budget"
    return x, f, delta, "radius_min"
