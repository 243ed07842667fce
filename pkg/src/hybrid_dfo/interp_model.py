"""Quadratic interpolation models and interpolation-set geometry.

All basis evaluations use coordinates shifted to the set's center, ``y - c``.
The monomial order is fixed: the constant, then ``x_i`` (ascending ``i``),
then ``x_i**2 / 2`` (ascending), then ``x_i * x_j`` for ``i < j`` in
lexicographic order.  With that order the coefficient of ``x_i**2/2`` is
``H[i, i]`` and the coefficient of ``x_i x_j`` is ``H[i, j]``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import linalg as sla
from scipy import optimize, stats

from .errors import DimensionMismatch, IrreparableSet, NumericalFailure, RankDeficient

__all__ = [
    "PolynomialBasis",
    "InterpolationSet",
    "QuadraticModel",
    "RankReport",
    "interpolation_matrix",
    "fit_min_frobenius",
    "lagrange_polynomials",
    "lagrange_values",
    "poisedness_constant",
    "check_rank",
    "scaled_matrix",
    "is_poised",
    "repair_poisedness",
    "insert_point",
    "RANK_RTOL",
]

RANK_RTOL = 1e-10


class PolynomialBasis:
    """Monomial basis of degree one (``linear=True``) or two in ``dim`` variables."""

    def __init__(self, dim: int, linear: bool = False):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.linear = linear
        n = dim
        terms = [("const",)]
        terms += [("lin", i) for i in range(n)]
        if not linear:
            terms += [("sq", i) for i in range(n)]
            terms += [("cross", i, j) for i in range(n) for j in range(i + 1, n)]
        self.terms = tuple(terms)
        iu = np.triu_indices(n, 1)
        self._cross_i, self._cross_j = iu

    @property
    def q1(self) -> int:
        """Total number of terms, ``q + 1``."""
        return len(self.terms)

    @property
    def n_linear(self) -> int:
        return self.dim + 1

    def degrees(self) -> np.ndarray:
        n = self.dim
        d = np.concatenate(([0], np.ones(n)))
        if not self.linear:
            d = np.concatenate((d, 2 * np.ones(n + len(self._cross_i))))
        return d

    def evaluate(self, S) -> np.ndarray:
        """Evaluate every term at the rows of ``S`` (already shifted)."""
        S = np.atleast_2d(np.asarray(S, dtype=float))
        if S.shape[1] != self.dim:
            raise DimensionMismatch(f"points have dimension {S.shape[1]}, basis has {self.dim}")
        cols = [np.ones((S.shape[0], 1)), S]
        if not self.linear:
            cols.append(0.5 * S**2)
            cols.append(S[:, self._cross_i] * S[:, self._cross_j])
        return np.hstack(cols)

    def hessian_from_coeffs(self, beta: np.ndarray) -> np.ndarray:
        """Symmetric matrix from the quadratic coefficients (diag, then cross)."""
        n = self.dim
        H = np.diag(beta[:n]).astype(float)
        H[self._cross_i, self._cross_j] = beta[n:]
        H[self._cross_j, self._cross_i] = beta[n:]
        return H

    def coeffs_from_hessian(self, H: np.ndarray) -> np.ndarray:
        return np.concatenate((np.diag(H), H[self._cross_i, self._cross_j]))

    def frobenius_weights(self) -> np.ndarray:
        # off-diagonal entries appear twice in ||H||_F^2
        n = self.dim
        return np.concatenate((np.ones(n), 2.0 * np.ones(len(self._cross_i))))

    def __repr__(self):
        kind = "linear" if self.linear else "quadratic"
        return f"PolynomialBasis(dim={self.dim}, {kind}, q1={self.q1})"


@dataclass
class InterpolationSet:
    """Sample points with their function values and a reference center.

    Exact duplicates are tolerated on input so that degenerate sets can be
    handed to :func:`repair_poisedness`; a repaired set never contains them.
    """

    center: np.ndarray
    points: np.ndarray
    values: np.ndarray
    radius: float = 1.0

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(-1)
        n = self.center.shape[0]
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, n)
        self.points = np.atleast_2d(pts)
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.points.shape[1] != n:
            raise DimensionMismatch(
                f"points have dimension {self.points.shape[1]}, center has {n}"
            )
        if self.points.shape[0] != self.values.shape[0]:
            raise ValueError("points and values must be aligned")

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def __len__(self):
        return self.points.shape[0]

    def shifted(self) -> np.ndarray:
        return self.points - self.center

    def add(self, x, fx) -> "InterpolationSet":
        return InterpolationSet(
            self.center, np.vstack((self.points, np.reshape(x, (1, -1)))),
            np.append(self.values, fx), self.radius,
        )

    def remove(self, idx) -> "InterpolationSet":
        keep = np.setdiff1d(np.arange(len(self)), np.atleast_1d(idx))
        return InterpolationSet(self.center, self.points[keep], self.values[keep], self.radius)

    def recenter(self, center, radius=None) -> "InterpolationSet":
        return InterpolationSet(center, self.points, self.values,
                                self.radius if radius is None else radius)

    def distances(self) -> np.ndarray:
        return np.linalg.norm(self.shifted(), axis=1)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i}" for i in range(self.dim)] + ["f_value"])
            for p, v in zip(self.points, self.values):
                w.writerow([repr(float(t)) for t in p] + [repr(float(v))])


@dataclass
class QuadraticModel:
    """``m(center + s) = c + g.s + 0.5 s.H.s``."""

    center: np.ndarray
    c: float
    g: np.ndarray
    H: np.ndarray
    kappa_bhm_cap: float = 1e6

    def step_value(self, s) -> float:
        s = np.asarray(s, dtype=float)
        return float(self.c + self.g @ s + 0.5 * s @ self.H @ s)

    def value(self, x) -> float:
        return self.step_value(np.asarray(x, dtype=float) - self.center)

    def values(self, X) -> np.ndarray:
        S = np.atleast_2d(X) - self.center
        return self.c + S @ self.g + 0.5 * np.einsum("ij,jk,ik->i", S, self.H, S)

    def gradient(self, x) -> np.ndarray:
        return self.g + self.H @ (np.asarray(x, dtype=float) - self.center)


@dataclass
class RankReport:
    """Outcome of a numerical rank test on an interpolation matrix.

    ``dependent_indices`` is a minimal set of rows whose removal restores full
    row rank (chosen by column-pivoted QR of ``M.T``).  ``involved_indices``
    lists every row that carries a nonzero weight in some left null vector,
    i.e. every point taking part in a linear dependence.
    """

    full_rank: bool
    rank: int
    dependent_indices: list = field(default_factory=list)
    tolerance_used: float = 0.0
    involved_indices: list = field(default_factory=list)

    def __str__(self):
        state = "full" if self.full_rank else "deficient"
        return (f"rank={self.rank} ({state}, tol={self.tolerance_used:.3g}) "
                f"dependent={self.dependent_indices}")


def interpolation_matrix(basis: PolynomialBasis, Y: InterpolationSet) -> np.ndarray:
    """Rows ``phi(y_i - center)`` for every point of ``Y``."""
    if Y.dim != basis.dim:
        raise DimensionMismatch(f"set has dimension {Y.dim}, basis has {basis.dim}")
    return basis.evaluate(Y.shifted())


def scaled_matrix(basis: PolynomialBasis, Y: InterpolationSet) -> np.ndarray:
    """Interpolation matrix of ``Y`` with offsets divided by the largest one.

    Column scaling leaves the exact rank unchanged but keeps the relative
    singular-value test meaningful when the set is tiny or spread unevenly.
    """
    S = Y.shifted()
    return basis.evaluate(S / _scale_of(S))


def check_rank(M, rtol: float = RANK_RTOL) -> RankReport:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    rows, cols = M.shape
    if M.size == 0:
        return RankReport(False, 0, list(range(rows)), 0.0, list(range(rows)))
    if rows < cols:
        # same singular values, much smaller SVD
        sv = sla.svdvals(sla.qr(M.T, mode="r", check_finite=False)[0][:rows],
                         check_finite=False)
    else:
        sv = np.linalg.svd(M, compute_uv=False)
    tol = rtol * sv[0]
    rank = int(np.sum(sv > tol)) if sv[0] > 0 else 0
    full = rank == min(rows, cols)
    dependent, involved = [], []
    if not full and rows <= cols:
        _, _, piv = sla.qr(M.T, mode="economic", pivoting=True)
        dependent = sorted(int(i) for i in piv[rank:])
        U = np.linalg.svd(M, full_matrices=False)[0]
        null = U[:, rank:]
        weight = np.max(np.abs(null), axis=1)
        involved = [int(i) for i in np.flatnonzero(weight > 1e-8)]
    return RankReport(full, rank, dependent, float(tol), involved)


def _scale_of(S: np.ndarray) -> float:
    r = float(np.max(np.linalg.norm(S, axis=1))) if S.size else 0.0
    return r if r > 0 else 1.0


def _min_frobenius_solve(basis: PolynomialBasis, U: np.ndarray, rhs: np.ndarray):
    """Least-Frobenius-norm correction for scaled points ``U``.

    Solves ``min d' W d  s.t.  M_l a + M_q d = rhs`` for every column of
    ``rhs`` and returns the stacked coefficients ``[a; d]``.
    """
    M = basis.evaluate(U)
    nl = basis.n_linear
    Ml, Mq = M[:, :nl], M[:, nl:]
    p1 = M.shape[0]
    if basis.linear or Mq.shape[1] == 0:
        a, *_ = np.linalg.lstsq(Ml, rhs, rcond=None)
        return a, M
    winv = 1.0 / basis.frobenius_weights()
    A = 0.5 * (Mq * winv) @ Mq.T
    K = np.zeros((p1 + nl, p1 + nl))
    K[:p1, :p1] = A
    K[:p1, p1:] = Ml
    K[p1:, :p1] = Ml.T
    R = np.zeros((p1 + nl,) + rhs.shape[1:])
    R[:p1] = rhs
    try:
        lu = sla.lu_factor(K, check_finite=True)
        sol = sla.lu_solve(lu, R)
        # one step of iterative refinement
        sol += sla.lu_solve(lu, R - K @ sol)
    except (sla.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"interpolation KKT system is singular: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise NumericalFailure("interpolation KKT system is singular")
    lam, a = sol[:p1], sol[p1:]
    d = 0.5 * winv[:, None] * (Mq.T @ lam.reshape(p1, -1))
    d = d.reshape((Mq.shape[1],) + rhs.shape[1:])
    return np.concatenate((a, d)), M


def fit_min_frobenius(
    Y: InterpolationSet,
    H_ref: Optional[np.ndarray] = None,
    kappa_bhm: float = 1e6,
    basis: Optional[PolynomialBasis] = None,
    check: bool = True,
) -> QuadraticModel:
    """Fit the interpolating quadratic whose Hessian is closest to ``H_ref``.

    Among all quadratics through ``(Y.points, Y.values)`` return the one
    minimizing ``||H - H_ref||_F``.  The model is centered at ``Y.center``.
    If ``||H||_2`` exceeds ``kappa_bhm`` the Hessian is scaled down to the cap
    and ``c, g`` are refit by least squares, so interpolation then only holds
    approximately.

    Raises:
        RankDeficient: the set violates ``n+1 <= p+1 <= q+1`` or the
            interpolation matrix is not of full row rank.
        NumericalFailure: the KKT system could not be solved accurately.
    """
    n = Y.dim
    basis = basis or PolynomialBasis(n)
    p1 = len(Y)
    if not n + 1 <= p1 <= basis.q1:
        raise RankDeficient(f"need {n + 1} <= |Y| <= {basis.q1}, got {p1}")
    H_ref = np.zeros((n, n)) if H_ref is None else 0.5 * (H_ref + np.asarray(H_ref).T)
    S = Y.shifted()
    if check:
        rep = check_rank(scaled_matrix(basis, Y))
        if not rep.full_rank:
            raise RankDeficient(f"interpolation matrix not of full rank: {rep}")
    scale = _scale_of(S)
    U = S / scale
    Hs_ref = H_ref * scale**2
    nl = basis.n_linear
    if basis.linear:
        Mq_ref = 0.5 * np.einsum("ij,jk,ik->i", U, Hs_ref, U)
    else:
        beta_ref = basis.coeffs_from_hessian(Hs_ref)
        Mq_ref = basis.evaluate(U)[:, nl:] @ beta_ref
    rhs = Y.values - Mq_ref
    coef, _ = _min_frobenius_solve(basis, U, rhs)
    c = float(coef[0])
    g_u = coef[1:nl]
    if basis.linear:
        H_u = Hs_ref
    else:
        H_u = basis.hessian_from_coeffs(beta_ref + coef[nl:])
    resid = np.abs(c + U @ g_u + 0.5 * np.einsum("ij,jk,ik->i", U, H_u, U) - Y.values)
    fscale = 1.0 + np.max(np.abs(Y.values))
    if np.max(resid) > 1e-8 * fscale:
        raise NumericalFailure(f"interpolation residual {np.max(resid):.3g} too large")
    g = g_u / scale
    H = H_u / scale**2
    H = 0.5 * (H + H.T)
    hnorm = np.linalg.norm(H, 2) if n > 0 else 0.0
    if hnorm > kappa_bhm:
        H = H * (kappa_bhm / hnorm)
        quad = 0.5 * np.einsum("ij,jk,ik->i", S, H, S)
        Ml = np.hstack((np.ones((p1, 1)), S))
        lin, *_ = np.linalg.lstsq(Ml, Y.values - quad, rcond=None)
        c, g = float(lin[0]), lin[1:]
    return QuadraticModel(Y.center.copy(), c, g, H, kappa_bhm)


def lagrange_polynomials(Y: InterpolationSet, basis: Optional[PolynomialBasis] = None) -> np.ndarray:
    """Coefficients of the Lagrange polynomials of ``Y``.

    Row ``j`` holds the coefficients (in the centered basis) of ``l_j`` with
    ``l_j(y_i) = delta_ij``.  Square systems are inverted directly; for a
    quadratic basis with fewer points than terms the minimum-Frobenius-norm
    Lagrange functions are returned; more points than terms falls back to the
    pseudo-inverse (least-squares Lagrange functions).

    Raises:
        RankDeficient: the interpolation matrix is not of full rank.
    """
    basis = basis or PolynomialBasis(Y.dim)
    S = Y.shifted()
    scale = _scale_of(S)
    U = S / scale
    Mu = basis.evaluate(U)
    rep = check_rank(Mu)
    if not rep.full_rank:
        raise RankDeficient(f"interpolation matrix not of full rank: {rep}")
    p1, q1 = Mu.shape
    unscale = scale ** -basis.degrees()
    if p1 == q1:
        coef = np.linalg.solve(Mu, np.eye(p1))
    elif p1 > q1 or basis.linear:
        coef = np.linalg.pinv(Mu)
    else:
        if p1 < basis.n_linear:
            raise RankDeficient("need at least n+1 points for Lagrange polynomials")
        coef, _ = _min_frobenius_solve(basis, U, np.eye(p1))
    return (coef * unscale[:, None]).T


def lagrange_values(coeffs: np.ndarray, basis: PolynomialBasis, center, X) -> np.ndarray:
    """Evaluate all Lagrange polynomials at the rows of ``X``; shape ``(len(X), p+1)``."""
    Phi = basis.evaluate(np.atleast_2d(X) - np.asarray(center, dtype=float))
    return Phi @ coeffs.T


def _ball_samples(center, radius, n_samples):
    n = center.shape[0]
    h = stats.qmc.Halton(d=n + 1, scramble=False).random(n_samples + 1)[1:]
    h = np.clip(h, 1e-12, 1 - 1e-12)
    d = stats.norm.ppf(h[:, :n])
    nrm = np.linalg.norm(d, axis=1)
    ok = nrm > 1e-12
    d = d[ok] / nrm[ok, None]
    r = radius * h[ok, n] ** (1.0 / n)
    return center + d * r[:, None]


def poisedness_constant(
    Y: InterpolationSet,
    basis: Optional[PolynomialBasis] = None,
    ball=None,
    n_samples: int = 500,
) -> float:
    """Estimate ``max_j max_{x in ball} |l_j(x)|`` from below.

    Each ``|l_j|`` is probed at the ball center, the ``2n`` axis points on the
    boundary, the interpolation points lying in the ball and ``n_samples``
    Halton points; the best probe of each ``l_j`` is then polished with SLSQP.
    """
    basis = basis or PolynomialBasis(Y.dim)
    if ball is None:
        ball = (Y.center, float(np.max(Y.distances())) or 1.0)
    bc = np.asarray(ball[0], dtype=float)
    delta = float(ball[1])
    coeffs = lagrange_polynomials(Y, basis)
    n = Y.dim
    eye = np.eye(n)
    probes = [bc[None, :], bc + delta * eye, bc - delta * eye]
    inside = Y.points[np.linalg.norm(Y.points - bc, axis=1) <= delta * (1 + 1e-12)]
    probes.append(inside)
    probes.append(_ball_samples(bc, delta, n_samples))
    P = np.vstack(probes)
    L = np.abs(lagrange_values(coeffs, basis, Y.center, P))
    best = L.max(axis=0)
    cons = {"type": "ineq", "fun": lambda x: delta**2 - np.sum((x - bc) ** 2),
            "jac": lambda x: -2.0 * (x - bc)}
    for j in range(coeffs.shape[0]):
        x_start = P[np.argmax(L[:, j])]
        cj = coeffs[j]

        def neg(x, cj=cj):
            return -abs(float(basis.evaluate((x - Y.center)[None, :])[0] @ cj))

        res = optimize.minimize(neg, x_start, method="SLSQP", constraints=[cons],
                                options={"maxiter": 100, "ftol": 1e-12})
        if res.x is not None and np.linalg.norm(res.x - bc) <= delta * (1 + 1e-9):
            best[j] = max(best[j], -neg(res.x))
    return float(best.max())


def is_poised(Y: InterpolationSet, basis: Optional[PolynomialBasis] = None) -> bool:
    """Full-rank certificate used by the solvers.

    Requires ``M(Phi, Y)`` to have full rank and its linear block to have
    full column rank, so that a model gradient is determined.
    """
    basis = basis or PolynomialBasis(Y.dim)
    if len(Y) < Y.dim + 1:
        return False
    M = scaled_matrix(basis, Y)
    if not check_rank(M).full_rank:
        return False
    return check_rank(M[:, : basis.n_linear]).full_rank


def _removal_loop(pts, vals, center, basis, protected, log):
    for _ in range(len(pts) + 1):
        S = np.asarray(pts).reshape(-1, center.shape[0]) - center
        rep = check_rank(basis.evaluate(S / _scale_of(S)))
        if rep.full_rank:
            return pts, vals
        cand = [i for i in (rep.involved_indices or rep.dependent_indices) if i not in protected]
        if not cand:
            raise IrreparableSet(f"no removable point restores full rank ({rep})")
        # first maximal f wins ties
        imax = max(cand, key=lambda i: (vals[i], -i))
        if log is not None:
            log.append({"removed": imax, "point": np.array(pts[imax]), "value": vals[imax],
                        "involved_values": [vals[i] for i in cand]})
        del pts[imax]
        del vals[imax]
        protected = {i - 1 if i > imax else i for i in protected}
    raise IrreparableSet("rank repair did not terminate")


def insert_point(Y: InterpolationSet, z, z_value: float,
                 basis: Optional[PolynomialBasis] = None) -> InterpolationSet:
    """Append ``z`` to a full-rank ``Y`` and delete points (never ``z``) until
    the matrix has full rank again.

    Raises:
        IrreparableSet: fewer than ``n + 1`` points remain.
    """
    n = Y.dim
    basis = basis or PolynomialBasis(n)
    pts = [np.array(p) for p in Y.points] + [np.asarray(z, dtype=float).reshape(-1)]
    vals = [float(v) for v in Y.values] + [float(z_value)]
    pts, vals = _removal_loop(pts, vals, Y.center, basis, {len(pts) - 1}, None)
    if len(pts) < n + 1:
        raise IrreparableSet(f"only {len(pts)} points left, need {n + 1}")
    return InterpolationSet(Y.center, np.asarray(pts).reshape(-1, n), np.asarray(vals), Y.radius)


def repair_poisedness(
    Y: InterpolationSet,
    z=None,
    f_lookup: Optional[Callable] = None,
    basis: Optional[PolynomialBasis] = None,
    z_value: Optional[float] = None,
    log: Optional[list] = None,
) -> InterpolationSet:
    """Restore full rank of ``M(Phi, Y)`` by deleting high-value dependent points.

    While the matrix is rank deficient, the points involved in the linear
    dependence are collected and the one with the largest function value is
    removed.  If ``z`` is given it is inserted after ``Y`` itself is repaired,
    is never removed, and the loop runs again on the enlarged set.

    Args:
        Y: Set to repair.
        z: Optional new point (for example a direct-search incumbent).
        f_lookup: Used to obtain ``f(z)`` when ``z_value`` is not supplied.
        basis: Polynomial basis, quadratic by default.
        z_value: Known ``f(z)``.
        log: If given, one dict per removal round is appended to it.

    Raises:
        IrreparableSet: fewer than ``n + 1`` points remain.
    """
    n = Y.dim
    basis = basis or PolynomialBasis(n)
    pts = [np.array(p) for p in Y.points]
    vals = [float(v) for v in Y.values]
    pts, vals = _removal_loop(pts, vals, Y.center, basis, set(), log)
    if z is None and len(pts) == len(Y):
        if len(pts) < n + 1:
            raise IrreparableSet(f"only {len(pts)} points left, need {n + 1}")
        return Y
    if z is not None:
        z = np.asarray(z, dtype=float).reshape(-1)
        if z_value is None:
            if f_lookup is None:
                raise ValueError("z given without z_value or f_lookup")
            z_value = float(f_lookup(z))
        pts.append(z)
        vals.append(float(z_value))
        pts, vals = _removal_loop(pts, vals, Y.center, basis, {len(pts) - 1}, log)
    if len(pts) < n + 1:
        raise IrreparableSet(f"only {len(pts)} points left, need {n + 1}")
    P = np.asarray(pts).reshape(-1, n)
    return InterpolationSet(Y.center, P, np.asarray(vals), Y.radius)
