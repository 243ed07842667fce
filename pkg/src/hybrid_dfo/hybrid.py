"""TR-DS: a model-based trust-region method that hands control to direct
search after unsuccessful iterations, plus the two single-method baselines."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .direct_search import DsConfig, ds_phase, pattern_search
from .errors import (
    BudgetExhausted,
    ConfigError,
    IrreparableSet,
    NumericalFailure,
    RankDeficient,
    RoundBudgetExhausted,
    ZeroPredictedDecrease,
)
from .interp_model import (
    InterpolationSet,
    PolynomialBasis,
    fit_min_frobenius,
    insert_point,
    is_poised,
    repair_poisedness,
    scaled_matrix,
)
from .objective import EvaluationLedger, ObjectiveProblem, evaluate, evaluate_cached
from .trust_region import (
    IterClass,
    TrState,
    TrustRegionConfig,
    acceptance_ratio,
    build_sample_set,
    classify,
    criticality_step,
    resolve_npt,
    solve_subproblem,
    update_radius,
)

__all__ = [
    "HybridConfig",
    "IterationRecord",
    "SolveResult",
    "hybrid_solve",
    "basic_tr_solve",
    "basic_ds_solve",
    "rng_stream",
    "STOP_REASONS",
]

STOP_REASONS = ("radius_min", "budget", "time", "target", "criticality")


@dataclass
class HybridConfig:
    """Everything a TR-DS run needs.

    ``npt`` is the interpolation set size: an integer in ``[n+1, (n+1)(n+2)/2]``
    or one of ``"linear"``, ``"cross"`` (2n+1) and ``"determined"``.  A model
    counts as fully linear when its set has full rank and every point lies
    within ``poised_radius_factor * delta`` of the iterate.
    """

    tr: TrustRegionConfig = field(default_factory=TrustRegionConfig)
    ds: DsConfig = field(default_factory=DsConfig)
    t_ds_max: int = 1
    max_evals: int = 10_000
    max_time_s: Optional[float] = None
    seed: int = 0
    npt: object = "cross"
    poised_radius_factor: float = 10.0
    kappa_bhm: float = 1e6
    criticality_rounds: int = 50
    f_target: Optional[float] = None
    ds_reuse_polls: bool = True
    ds_model_order: bool = True

    def __post_init__(self):
        if int(self.t_ds_max) < 0:
            raise ConfigError("hybrid.t_ds_max must be >= 0")
        if int(self.max_evals) < 1:
            raise ConfigError("hybrid.max_evals must be >= 1")
        if self.max_time_s is not None and not self.max_time_s > 0:
            raise ConfigError("hybrid.max_time_s must be positive")
        if not self.poised_radius_factor >= 1:
            raise ConfigError("hybrid.poised_radius_factor must be >= 1")
        if int(self.criticality_rounds) < 1:
            raise ConfigError("hybrid.criticality_rounds must be >= 1")
        if isinstance(self.npt, str) and self.npt not in ("linear", "cross", "determined"):
            try:
                self.npt = int(self.npt)
            except ValueError:
                raise ConfigError(f"hybrid.npt: unknown value {self.npt!r}") from None


@dataclass(frozen=True)
class IterationRecord:
    k: int
    cls: IterClass
    x: np.ndarray
    f: float
    delta: float
    rho: Optional[float]
    evals_so_far: int


@dataclass
class SolveResult:
    x_best: np.ndarray
    f_best: float
    trace: list
    stop_reason: str
    evals: int
    time_s: float
    ledger: EvaluationLedger = field(repr=False, default=None)
    solver: str = "tr-ds"

    def __iter__(self):
        return iter((self.x_best, self.f_best, self.trace, self.stop_reason))


def rng_stream(seed: int, label: str) -> np.random.Generator:
    """Independent generator for one labeled component of a seeded run."""
    return np.random.default_rng([int(seed), zlib.crc32(label.encode())])


class _Stop(Exception):
    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason


class _Run:
    """Mutable state of one TR-DS run."""

    def __init__(self, problem, cfg, allow_ds, on_record, debug_hook):
        self.p = problem
        self.cfg = cfg
        self.tr = cfg.tr
        self.allow_ds = allow_ds
        self.on_record = on_record
        self.debug_hook = debug_hook
        self.ledger = EvaluationLedger(budget=int(cfg.max_evals))
        self.n = problem.dim
        self.basis = PolynomialBasis(self.n)
        self.npt = resolve_npt(cfg.npt, self.n)
        self.rng = rng_stream(cfg.seed, "direct_search")
        self.trace = []
        self.n_ds = 0

    # -- bookkeeping ---------------------------------------------------------

    def emit(self, cls, rho=None):
        rec = IterationRecord(len(self.trace), IterClass(cls), self.x.copy(), float(self.f),
                              float(self.delta), None if rho is None else float(rho),
                              self.ledger.count)
        self.trace.append(rec)
        if self.on_record is not None:
            self.on_record(rec)

    def check_limits(self):
        if self.ledger.exhausted():
            raise _Stop("budget")
        if self.cfg.max_time_s is not None and self.ledger.elapsed() >= self.cfg.max_time_s:
            raise _Stop("time")
        if self.cfg.f_target is not None and self.f <= self.cfg.f_target:
            raise _Stop("target")

    # -- interpolation set management ----------------------------------------

    def fully_linear(self, Y, delta):
        if len(Y) < self.n + 1 or not is_poised(Y, self.basis):
            return False
        return bool(np.max(np.linalg.norm(Y.points - self.x, axis=1)) <= self.cfg.poised_radius_factor * delta * (1 + 1e-12))

    def fit(self, Y):
        if self.debug_hook is not None:
            self.debug_hook(scaled_matrix(self.basis, Y))
        return fit_min_frobenius(Y, self.H_ref, kappa_bhm=self.cfg.kappa_bhm,
                                 basis=self.basis, check=False)

    def fresh_set(self):
        return build_sample_set(self.p, self.ledger, self.x, self.f, self.delta, self.npt, self.basis)

    def insert(self, Y, z, fz):
        """Recenter on the iterate, make room, then add ``z`` with rank repair."""
        Y = Y.recenter(self.x, self.delta)
        key = np.asarray(z, dtype=float)
        if np.any(np.all(Y.points == key, axis=1)):
            return Y
        if len(Y) >= self.npt:
            d = np.linalg.norm(Y.points - self.x, axis=1)
            d[np.all(Y.points == self.x, axis=1)] = -1.0
            Y = Y.remove(int(np.argmax(d)))
        try:
            return insert_point(Y, key, fz, self.basis)
        except IrreparableSet:
            return self.fresh_set()

    def _candidates(self, delta):
        n = self.n
        eye = np.eye(n)
        diag = (eye + np.roll(eye, 1, axis=1)) / math.sqrt(2.0) if n > 1 else eye
        return np.vstack((self.x + delta * eye, self.x - delta * eye,
                          self.x + delta * diag, self.x - delta * diag))

    def geometry_point(self, Y, delta):
        """Candidate point that adds the most new information to ``Y``.

        Scores ``x + delta*d`` for coordinate and neighbour-diagonal ``d`` by the
        part of its basis vector outside the row space of ``M(Phi, Y)``.
        """
        C = np.array([self.p.clip(c) for c in self._candidates(delta)])
        scale = max(delta, 1e-300)
        M = self.basis.evaluate((Y.points - self.x) / scale)
        Phi = self.basis.evaluate((C - self.x) / scale)
        Q, _ = np.linalg.qr(M.T)
        resid = np.linalg.norm(Phi - (Phi @ Q) @ Q.T, axis=1)
        lin = self.basis.n_linear
        Ql, _ = np.linalg.qr(M[:, :lin].T)
        lres = np.linalg.norm(Phi[:, :lin] - (Phi[:, :lin] @ Ql) @ Ql.T, axis=1)
        # linear novelty first, then full quadratic novelty; index breaks ties
        order = sorted(range(len(C)), key=lambda i: (-round(lres[i], 12), -resid[i], i))
        for i in order:
            if not np.any(np.all(Y.points == C[i], axis=1)):
                return C[i]
        return C[order[0]]

    def improve_model(self, Y):
        """One model-improvement round: repair, then fix the worst point."""
        Y = Y.recenter(self.x, self.delta)
        try:
            Y = repair_poisedness(Y, basis=self.basis)
        except IrreparableSet:
            return self.fresh_set()
        while len(Y) < self.n + 1 or not is_poised(Y, self.basis):
            p, v, _ = evaluate_cached(self.p, self.ledger, self.geometry_point(Y, self.delta))
            try:
                Y = repair_poisedness(Y, z=p, z_value=v, basis=self.basis)
            except IrreparableSet:
                return self.fresh_set()
            if len(Y) >= self.npt and not is_poised(Y, self.basis):
                return self.fresh_set()
        d = np.linalg.norm(Y.points - self.x, axis=1)
        far = d > self.cfg.poised_radius_factor * self.delta
        if np.any(far):
            Y = Y.remove(int(np.argmax(d)))
        elif len(Y) >= self.npt:
            return Y
        p, v, _ = evaluate_cached(self.p, self.ledger, self.geometry_point(Y, self.delta))
        try:
            return insert_point(Y, p, v, self.basis)
        except IrreparableSet:
            return self.fresh_set()

    # -- main loop -----------------------------------------------------------

    def solve(self):
        tr = self.tr
        self.x = self.p.clip(np.array(self.p.x0, dtype=float))
        self.delta = tr.delta0
        self.f = math.inf
        self.H_ref = np.zeros((self.n, self.n))
        try:
            self.f = evaluate(self.p, self.ledger, self.x)
            if self.cfg.max_evals < self.npt:
                self.npt = self.n + 1
            Y = self.fresh_set()
            while True:
                self.check_limits()
                try:
                    model = self.fit(Y)
                except (RankDeficient, NumericalFailure):
                    Y = self.improve_model(Y)
                    self.emit(IterClass.MODEL_IMPROVING)
                    continue
                fl = self.fully_linear(Y, self.delta)

                gn = float(np.linalg.norm(model.g))
                if gn < tr.epsilon_low and self.delta > tr.mu * gn:
                    Y, model = self.criticality(Y, model, fl)
                    fl = True
                    self.H_ref = model.H
                    if self.delta < tr.delta_min:
                        raise _Stop("radius_min")
                    self.check_limits()

                s = solve_subproblem(model, self.delta)
                m_trial = model.step_value(s)
                rho, x_t, f_t = None, None, None
                if model.c - m_trial > 1e-15 * (1.0 + abs(self.f)):
                    x_t, f_t, _ = evaluate_cached(self.p, self.ledger, self.x + s)
                    try:
                        rho = acceptance_ratio(self.f, f_t, model.c, model.step_value(x_t - self.x))
                    except ZeroPredictedDecrease:
                        rho = None
                self.H_ref = model.H
                cls = classify(rho, fl, tr)
                new_delta = update_radius(rho, self.delta, cls, tr)

                if cls in (IterClass.SUCCESSFUL, IterClass.ACCEPTABLE) and f_t < self.f:
                    self.x, self.f = x_t, f_t
                    self.delta = new_delta
                    Y = self.insert(Y, x_t, f_t)
                    self.emit(cls, rho)
                elif cls is IterClass.MODEL_IMPROVING or cls in (IterClass.SUCCESSFUL, IterClass.ACCEPTABLE):
                    # keep x and delta; the trial point still carries information
                    if x_t is not None:
                        Y = self.insert(Y, x_t, f_t)
                    Y = self.improve_model(Y)
                    self.emit(IterClass.MODEL_IMPROVING, rho)
                else:
                    self.delta = new_delta
                    if x_t is not None:
                        Y = self.insert(Y, x_t, f_t)
                    self.emit(IterClass.UNSUCCESSFUL, rho)
                    if self.allow_ds and self.n_ds < self.cfg.t_ds_max and is_poised(Y, self.basis):
                        Y = self.run_ds(Y, model.gradient(self.x))
                if self.delta < tr.delta_min:
                    raise _Stop("radius_min")
        except _Stop as stop:
            return stop.reason
        except BudgetExhausted:
            return "budget"

    def criticality(self, Y, model, fl):
        tr = self.tr
        if self.delta <= tr.delta_min:
            raise _Stop("radius_min")
        to_min = int(math.floor(math.log(tr.delta_min / self.delta) / math.log(tr.omega))) + 1
        rounds = min(self.cfg.criticality_rounds, to_min)
        state = TrState(self.x, self.f, self.delta, model, Y)
        try:
            st = criticality_step(state, self.p, self.ledger, tr, npt=self.npt, basis=self.basis,
                                  max_rounds=rounds, kappa_bhm=self.cfg.kappa_bhm,
                                  fully_linear=fl)
        except RoundBudgetExhausted as exc:
            hit_min = rounds == to_min
            # the round that would follow lies below delta_min
            self.delta = exc.state.delta * (tr.omega if hit_min else 1.0)
            self.emit(IterClass.CRITICALITY_REDUCE)
            raise _Stop("radius_min" if hit_min else "criticality") from None
        self.delta = tr.gamma_dec * st.delta
        self.emit(st.last_class)
        return st.yset, st.model

    def nearest_set(self, Y, start):
        """Rebuild ``Y`` around the iterate from the closest known points."""
        recs = self.ledger.history[start:]
        P = np.vstack([Y.points] + [r.point[None, :] for r in recs])
        V = np.concatenate([Y.values, [r.value for r in recs]])
        _, uniq = np.unique(P, axis=0, return_index=True)
        uniq = np.sort(uniq)
        P, V = P[uniq], V[uniq]
        d = np.linalg.norm(P - self.x, axis=1)
        order = np.argsort(d, kind="stable")[: self.npt]
        Z = InterpolationSet(self.x, P[order], V[order], self.delta)
        try:
            return repair_poisedness(Z, basis=self.basis)
        except IrreparableSet:
            return self.fresh_set()

    def run_ds(self, Y, grad=None):
        self.n_ds += 1
        start = self.ledger.count
        res = ds_phase(self.x, self.f, self.delta, self.p, self.ledger, self.cfg.ds,
                       rng=self.rng, delta_max=self.tr.delta_max,
                       gradient=grad if self.cfg.ds_model_order else None)
        moved = res.f < self.f
        self.x, self.f = res.x, res.f
        if self.cfg.ds_reuse_polls:
            Y = self.nearest_set(Y, start)
        elif moved:
            Y = self.insert(Y, res.x, res.f)
        self.emit(IterClass.DS_PHASE)
        if res.budget_exhausted:
            raise _Stop("budget")
        return Y


def _finish(run: _Run, reason: str, solver: str) -> SolveResult:
    best = run.ledger.best()
    if best is None:
        x_best, f_best = np.array(run.p.x0, dtype=float), math.inf
    else:
        x_best, f_best = best.point.copy(), float(best.value)
    return SolveResult(x_best, f_best, run.trace, reason, run.ledger.count,
                       run.ledger.elapsed(), run.ledger, solver)


def hybrid_solve(
    problem: ObjectiveProblem,
    cfg: Optional[HybridConfig] = None,
    allow_ds: bool = True,
    on_record: Optional[Callable[[IterationRecord], None]] = None,
    debug_hook: Optional[Callable[[np.ndarray], None]] = None,
) -> SolveResult:
    """Minimize ``problem`` with the TR-DS hybrid.

    Args:
        problem: Black-box problem.
        cfg: Solver settings; defaults if omitted.
        allow_ds: ``False`` turns the run into plain model-based TR.
        on_record: Called with every trace record as soon as it is emitted.
        debug_hook: Called with the (scaled) interpolation matrix right
            before each model fit.

    Returns:
        A :class:`SolveResult`; unpacks as ``(x_best, f_best, trace, stop_reason)``.
        ``x_best`` is the best point in the whole evaluation history.
    """
    cfg = cfg or HybridConfig()
    run = _Run(problem, cfg, allow_ds, on_record, debug_hook)
    reason = run.solve()
    return _finish(run, reason, "tr-ds" if allow_ds else "tr")


def basic_tr_solve(problem, cfg=None, on_record=None, debug_hook=None) -> SolveResult:
    """Model-based trust region without the direct-search phase."""
    return hybrid_solve(problem, cfg, allow_ds=False, on_record=on_record, debug_hook=debug_hook)


def basic_ds_solve(problem, cfg=None, on_record=None) -> SolveResult:
    """Coordinate pattern search: poll, move on decrease, halve on failure.

    Uses ``cfg.tr.delta0`` and ``cfg.tr.delta_min`` as initial and final mesh
    sizes, ``cfg.ds.tau_shrink`` as shrink factor and ``cfg.max_evals`` as
    budget.  Each poll round becomes one ``successful`` or ``unsuccessful``
    trace record.
    """
    cfg = cfg or HybridConfig()
    run = _Run(problem, cfg, False, on_record, None)
    run.x = problem.clip(np.array(problem.x0, dtype=float))
    run.f = math.inf
    run.delta = cfg.tr.delta0
    ds_cfg = DsConfig(epsilon_ds=cfg.ds.epsilon_ds, k_ds=cfg.ds.k_ds, t_fail=cfg.ds.t_fail,
                      use_search_step=cfg.ds.use_search_step, tau_shrink=cfg.ds.tau_shrink,
                      expand_factor=1.0)

    def on_round(x, f, delta, improved):
        run.x, run.f, run.delta = x, f, delta
        run.emit(IterClass.SUCCESSFUL if improved else IterClass.UNSUCCESSFUL)
        if cfg.max_time_s is not None and run.ledger.elapsed() >= cfg.max_time_s:
            raise _Stop("time")
        if cfg.f_target is not None and f <= cfg.f_target:
            raise _Stop("target")

    try:
        *_, reason = pattern_search(run.x, problem, run.ledger, cfg.tr.delta0, cfg.tr.delta_min,
                                    ds_cfg, run.rng, on_round)
    except _Stop as stop:
        reason = stop.reason
    return _finish(run, reason, "ds")
