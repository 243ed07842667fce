"""Trust-region building blocks: subproblem, acceptance ratio, radius rules
and the criticality step."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from enum import Enum
from typing import Optional

import numpy as np
from scipy import linalg as sla

from .errors import ConfigError, RoundBudgetExhausted, ZeroPredictedDecrease
from .interp_model import (
    InterpolationSet,
    PolynomialBasis,
    QuadraticModel,
    fit_min_frobenius,
    repair_poisedness,
)
from .objective import EvaluationLedger, ObjectiveProblem, evaluate_cached

__all__ = [
    "IterClass",
    "TrustRegionConfig",
    "TrState",
    "cauchy_point",
    "solve_subproblem",
    "acceptance_ratio",
    "classify",
    "update_radius",
    "criticality_radius",
    "criticality_step",
    "resolve_npt",
    "sample_offsets",
    "build_sample_set",
]


class IterClass(str, Enum):
    SUCCESSFUL = "successful"
    ACCEPTABLE = "acceptable"
    MODEL_IMPROVING = "model_improving"
    UNSUCCESSFUL = "unsuccessful"
    CRITICALITY_REDUCE = "criticality_reduce"
    CRITICALITY_NOREDUCE = "criticality_noreduce"
    DS_PHASE = "ds_phase"

    def __str__(self):
        return self.value


@dataclass
class TrustRegionConfig:
    delta0: float = 1.0
    delta_min: float = 1e-8
    delta_max: float = 1e3
    eta0: float = 0.1
    eta1: float = 0.75
    gamma_inc: float = 2.0
    gamma_dec: float = 0.5
    epsilon_low: float = 1e-3
    mu: float = 1.0
    beta: float = 0.01
    omega: float = 0.5

    def __post_init__(self):
        self.validate()

    def validate(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigError(f"trust_region.{f.name} must be a finite number, got {v!r}")
        if not 0 < self.eta0 <= self.eta1 < 1:
            raise ConfigError("need 1 > eta1 >= eta0 > 0")
        if not self.gamma_inc > 1:
            raise ConfigError("need gamma_inc > 1")
        if not 0 < self.gamma_dec < 1:
            raise ConfigError("need 0 < gamma_dec < 1")
        if not self.mu > self.beta > 0:
            raise ConfigError("need mu > beta > 0")
        if not 0 < self.omega < 1:
            raise ConfigError("need 0 < omega < 1")
        if not 0 < self.delta_min <= self.delta0 <= self.delta_max:
            raise ConfigError("need 0 < delta_min <= delta0 <= delta_max")
        if self.epsilon_low < 0:
            raise ConfigError("epsilon_low must be nonnegative")


@dataclass
class TrState:
    x: np.ndarray
    f: float
    delta: float
    model: QuadraticModel
    yset: InterpolationSet
    last_class: Optional[IterClass] = None


# ---------------------------------------------------------------------------
# Subproblem


def cauchy_point(g: np.ndarray, H: np.ndarray, delta: float) -> np.ndarray:
    """Minimizer of the model along ``-g`` inside the ball."""
    gn = float(np.linalg.norm(g))
    if gn == 0.0:
        return np.zeros_like(g)
    curv = float(g @ H @ g)
    t = delta / gn
    if curv > 0:
        t = min(t, gn * gn / curv)
    return -t * g


def _boundary_min_2d(b, B, delta):
    # minimize q(theta) = delta b.u + 0.5 delta^2 u.B.u on the circle
    th = np.linspace(0.0, 2 * math.pi, 181)[:-1]
    U = np.stack((np.cos(th), np.sin(th)), axis=1)
    vals = delta * (U @ b) + 0.5 * delta**2 * np.einsum("ij,jk,ik->i", U, B, U)
    i = int(np.argmin(vals))
    t, best = th[i], vals[i]
    half = th[1] - th[0]
    lo, hi = t - half, t + half
    for _ in range(8):
        u = np.array([math.cos(t), math.sin(t)])
        du = np.array([-u[1], u[0]])
        d1 = delta * (b @ du) + delta**2 * (u @ B @ du)
        d2 = -delta * (b @ u) + delta**2 * (du @ B @ du - u @ B @ u)
        t_new = t - d1 / d2 if d2 > 0 else (lo if d1 > 0 else hi)
        t_new = min(max(t_new, lo), hi)
        if abs(t_new - t) < 1e-14:
            break
        t = t_new
    u = np.array([math.cos(t), math.sin(t)])
    if delta * (b @ u) + 0.5 * delta**2 * (u @ B @ u) > best:
        u = U[i]
    return delta * u


def _small_trs(b, B, delta):
    """Exact minimizer of ``b.y + 0.5 y.B.y`` over ``|y| <= delta`` in 1 or 2 dims."""
    k = b.shape[0]
    cands = []
    try:
        L = np.linalg.cholesky(B)
        y = -sla.cho_solve((L, True), b)
        if np.linalg.norm(y) <= delta:
            cands.append(y)
    except np.linalg.LinAlgError:
        pass
    if k == 1:
        cands += [np.array([delta]), np.array([-delta])]
    else:
        cands.append(_boundary_min_2d(b, B, delta))
    vals = [b @ y + 0.5 * y @ B @ y for y in cands]
    return cands[int(np.argmin(vals))]


def solve_subproblem(model: QuadraticModel, delta: float) -> np.ndarray:
    """Approximately minimize the model over the ball ``|s| <= delta``.

    Starts from the Cauchy point and refines over a two-dimensional subspace:
    ``span{g, H^-1 g}`` when ``H`` is positive definite, otherwise
    ``span{g, v}`` with ``v`` the eigenvector of the most negative eigenvalue.
    The better of the Cauchy point and the refined step is returned, so the
    Cauchy decrease ``0.5 |g| min(delta, |g|/|H|)`` always holds.
    """
    g = np.asarray(model.g, dtype=float)
    H = np.asarray(model.H, dtype=float)
    if not np.all(np.isfinite(g)) or not np.any(g) or delta <= 0:
        return np.zeros_like(g)

    def mval(s):
        return float(g @ s + 0.5 * s @ H @ s)

    best = cauchy_point(g, H, delta)
    best_val = mval(best)
    second = None
    try:
        L = np.linalg.cholesky(H)
        newton = -sla.cho_solve((L, True), g)
        if np.linalg.norm(newton) <= delta:
            if mval(newton) < best_val:
                return newton
            return best
        second = newton
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(H)
        second = V[:, 0] if w[0] < 0 else None
    if second is not None:
        Q, R = np.linalg.qr(np.column_stack((g, second)))
        keep = np.abs(np.diag(R)) > 1e-12 * np.linalg.norm(g)
        Q = Q[:, keep]
        if Q.shape[1]:
            y = _small_trs(Q.T @ g, Q.T @ H @ Q, delta)
            s = Q @ y
            ns = np.linalg.norm(s)
            if ns > delta:
                s *= delta / ns
            if mval(s) < best_val:
                best, best_val = s, mval(s)
    return best


def acceptance_ratio(f_x: float, f_trial: float, m_x: float, m_trial: float) -> float:
    """Actual over predicted reduction.

    Raises:
        ZeroPredictedDecrease: ``m_x - m_trial <= 1e-15 (1 + |f_x|)``.
    """
    pred = m_x - m_trial
    if not pred > 1e-15 * (1.0 + abs(f_x)):
        raise ZeroPredictedDecrease(f"predicted decrease {pred!r} is not positive")
    return (f_x - f_trial) / pred


def classify(rho: Optional[float], fully_linear: bool, cfg: TrustRegionConfig) -> IterClass:
    """Map a ratio (None means no predicted decrease) to an iteration class."""
    r = -math.inf if rho is None or math.isnan(rho) else rho
    if r >= cfg.eta1:
        return IterClass.SUCCESSFUL
    if not fully_linear:
        return IterClass.MODEL_IMPROVING
    if r >= cfg.eta0:
        return IterClass.ACCEPTABLE
    return IterClass.UNSUCCESSFUL


def update_radius(rho, delta: float, cls, cfg: TrustRegionConfig) -> float:
    cls = IterClass(cls)
    if cls is IterClass.SUCCESSFUL:
        new = min(cfg.gamma_inc * delta, cfg.delta_max)
    elif cls in (IterClass.ACCEPTABLE, IterClass.UNSUCCESSFUL):
        new = cfg.gamma_dec * delta
    else:
        new = delta
    return min(max(new, 0.0), cfg.delta_max)


def criticality_radius(delta_i: float, gnorm: float, beta: float) -> float:
    return max(delta_i, beta * gnorm)


# ---------------------------------------------------------------------------
# Sample sets


def resolve_npt(npt, n: int) -> int:
    """Interpolation set size from a config value."""
    q1 = (n + 1) * (n + 2) // 2
    table = {"linear": n + 1, "cross": 2 * n + 1, "determined": q1}
    if isinstance(npt, str):
        if npt not in table:
            raise ConfigError(f"npt must be an integer or one of {sorted(table)}, got {npt!r}")
        return table[npt]
    npt = int(npt)
    if not n + 1 <= npt <= q1:
        raise ConfigError(f"npt must lie in [{n + 1}, {q1}], got {npt}")
    return npt


def sample_offsets(n: int, delta: float, count: int) -> np.ndarray:
    """First ``count`` offsets of the pattern ``+e_i, -e_i, (e_i + e_j)/sqrt(2)``."""
    out = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = delta
        out.append(e)
    for i in range(n):
        e = np.zeros(n)
        e[i] = -delta
        out.append(e)
    r = delta / math.sqrt(2.0)
    for i in range(n):
        for j in range(i + 1, n):
            e = np.zeros(n)
            e[i] = e[j] = r
            out.append(e)
    return np.array(out[:count]).reshape(-1, n)


def _place(problem: ObjectiveProblem, x, off):
    cand = problem.clip(x + off)
    if np.array_equal(cand, x):
        cand = problem.clip(x - off)
    return cand


def build_sample_set(problem, ledger, x, fx, delta, npt, basis=None) -> InterpolationSet:
    """Evaluate the standard pattern around ``x`` and return a repaired set.

    Offsets blocked by bounds are mirrored.  Duplicate or dependent points are
    pruned with :func:`repair_poisedness`.
    """
    n = problem.dim
    pts, vals = [np.array(x, dtype=float)], [float(fx)]
    for off in sample_offsets(n, delta, npt - 1):
        p = _place(problem, x, off)
        p, v, _ = evaluate_cached(problem, ledger, p)
        pts.append(p)
        vals.append(v)
    Y = InterpolationSet(x, np.array(pts), np.array(vals), delta)
    return repair_poisedness(Y, basis=basis)


def criticality_step(
    state: TrState,
    problem: ObjectiveProblem,
    ledger: EvaluationLedger,
    cfg: TrustRegionConfig,
    npt: Optional[int] = None,
    basis: Optional[PolynomialBasis] = None,
    max_rounds: int = 50,
    kappa_bhm: float = 1e6,
    fully_linear: bool = False,
) -> TrState:
    """Shrink the radius until it is commensurate with the model gradient.

    Round ``i`` samples a fresh set at radius ``omega**(i-1) * delta`` around
    ``state.x`` and refits; the loop exits once that radius is at most
    ``mu * |g_i|`` and sets the radius to ``max(delta_i, beta * |g_i|)``.
    Returns ``state`` untouched when the criticality guard does not fire.
    With ``fully_linear=True`` the first round reuses the current model
    instead of resampling at the unchanged radius.

    Raises:
        RoundBudgetExhausted: ``max_rounds`` rounds without passing the test;
            the last refit state is attached as ``exc.state``.
        BudgetExhausted: propagated from the ledger.
    """
    g0 = float(np.linalg.norm(state.model.g))
    if not (g0 < cfg.epsilon_low and state.delta > cfg.mu * g0):
        return state
    n = problem.dim
    npt = npt or 2 * n + 1
    basis = basis or PolynomialBasis(n)
    h_ref = state.model.H
    last = state
    for i in range(1, max_rounds + 1):
        delta_i = cfg.omega ** (i - 1) * state.delta
        if i == 1 and fully_linear:
            Y, model = state.yset, state.model
        else:
            Y = build_sample_set(problem, ledger, state.x, state.f, delta_i, npt, basis)
            model = fit_min_frobenius(Y, h_ref, kappa_bhm=kappa_bhm, basis=basis, check=False)
        h_ref = model.H
        gi = float(np.linalg.norm(model.g))
        if delta_i <= cfg.mu * gi:
            new_delta = criticality_radius(delta_i, gi, cfg.beta)
            cls = (IterClass.CRITICALITY_REDUCE if new_delta < state.delta
                   else IterClass.CRITICALITY_NOREDUCE)
            return TrState(state.x, state.f, new_delta, model, Y, cls)
        last = TrState(state.x, state.f, delta_i, model, Y, IterClass.CRITICALITY_REDUCE)
    raise RoundBudgetExhausted(f"criticality test not met after {max_rounds} rounds", last)
