import csv
import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybrid_dfo.errors import DimensionMismatch, UnsupportedObjectiveCount
from hybrid_dfo.hybrid import HybridConfig, hybrid_solve
from hybrid_dfo.multiobjective import (
    ParetoArchive,
    dominates,
    hypervolume,
    mo_driver,
    normalize,
    pareto_filter,
    toy_biobjective,
    weight_grid,
    weighted_sum,
    write_curve_csv,
    write_front_csv,
)

vec3 = st.lists(st.integers(0, 4), min_size=3, max_size=3).map(lambda v: np.array(v) / 4)


def test_weighted_sum_examples():
    assert weighted_sum([2, 4], [0.5, 0.5]) == 3
    assert weighted_sum([7, 9], [1, 0]) == 7
    assert weighted_sum([0, 0, 0], [0.2, 0.3, 0.5]) == 0
    with pytest.raises(DimensionMismatch):
        weighted_sum([1, 2], [1, 0, 0])


def test_weight_grids():
    g2 = weight_grid(2)
    np.testing.assert_allclose(g2, [[0, 1], [0.25, 0.75], [0.5, 0.5], [0.75, 0.25], [1, 0]])
    g3 = weight_grid(3)
    assert len(g3) == 10
    assert any(np.allclose(w, [1, 0, 0]) for w in g3)
    assert any(np.allclose(w, [1 / 3] * 3) for w in g3)
    assert all(abs(w.sum() - 1) <= 1e-12 and w.min() >= 0 for w in g3)
    with pytest.raises(UnsupportedObjectiveCount):
        weight_grid(4)


def test_dominates_examples():
    assert dominates([0, 1], [1, 1])
    assert not dominates([0, 1], [1, 0])
    assert not dominates([0.3, 0.3], [0.3, 0.3])
    with pytest.raises(DimensionMismatch):
        dominates([0, 1], [0, 1, 2])


@settings(max_examples=200, deadline=None)
@given(vec3, vec3, vec3)
def test_dominance_is_strict_partial_order(a, b, c):
    assert not dominates(a, a)
    assert not (dominates(a, b) and dominates(b, a))
    if dominates(a, b) and dominates(b, c):
        assert dominates(a, c)


def _brute_front(F):
    keep = []
    for i, f in enumerate(F):
        if any(dominates(g, f) for g in F):
            continue
        if any(np.array_equal(F[j], f) for j in keep):
            continue
        keep.append(i)
    return keep


def test_pareto_filter_examples(rng):
    assert pareto_filter([[0, 1], [1, 0], [1, 1]]) == [0, 1]
    assert pareto_filter([[0.4, 0.4]]) == [0]
    assert pareto_filter([[0.2, 0.2], [0.1, 0.5], [0.2, 0.2]]) == [0, 1]
    F = rng.random((200, 2))
    assert pareto_filter(F) == _brute_front(F)
    F = np.round(rng.random((150, 3)) * 5) / 5  # many ties
    assert pareto_filter(F) == _brute_front(F)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=1, max_size=30))
def test_archive_matches_filter(pts):
    arc = ParetoArchive(2)
    for p in pts:
        arc.add([0.0], np.array(p) / 6)
    assert arc.front == pareto_filter(arc)
    front = arc.front_vectors()
    for i, j in itertools.permutations(range(len(front)), 2):
        assert not dominates(front[i], front[j])
    for e in arc.entries:
        assert any(np.all(f <= e.fvec) for f in front)


def test_hypervolume_examples():
    assert hypervolume([[0.5, 0.5]]) == 0.25
    assert hypervolume([[0, 1], [1, 0]]) == 0.0
    # union of [0.2,1]x[0.6,1] and [0.5,1]x[0.3,1]: 0.32 + 0.15
    assert hypervolume([[0.2, 0.6], [0.5, 0.3]]) == pytest.approx(0.47, abs=1e-12)
    assert hypervolume([[0.5, 0.5, 0.5]]) == 0.125
    assert hypervolume(np.empty((0, 2))) == 0.0
    with pytest.raises(UnsupportedObjectiveCount):
        hypervolume([[0.1, 0.1, 0.1, 0.1]])


def test_hypervolume_drops_points_outside_box():
    with pytest.warns(UserWarning):
        v = hypervolume([[0.5, 0.5], [1.5, 0.1]])
    assert v == 0.25


def _mc(front, m, n, rng):
    S = rng.random((n, m))
    dom = np.zeros(n, dtype=bool)
    for p in front:
        dom |= np.all(S >= p, axis=1)
    return dom.mean()


@pytest.mark.parametrize("m", [2, 3])
def test_hypervolume_vs_monte_carlo(m, rng):
    for _ in range(5):
        F = rng.random((rng.integers(1, 12), m))
        assert abs(hypervolume(F) - _mc(F, m, 400_000, rng)) < 5e-3


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=10),
       st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1)))
def test_hypervolume_monotone(front, extra):
    F = np.array(front)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        before = hypervolume(F)
        after = hypervolume(np.vstack([F, extra]))
        assert after >= before - 1e-12
        assert 0 <= after <= 1
        assert hypervolume(F[:, :2]) <= hypervolume(np.vstack([F[:, :2], extra[:2]])) + 1e-12


def test_normalize():
    np.testing.assert_allclose(normalize([5, 0], [(0, 10), (-1, 1)]), [0.5, 0.5])
    np.testing.assert_allclose(normalize([20, -3], [(0, 10), (-1, 1)]), [1, 0])
    np.testing.assert_allclose(normalize([2, 4]), [2, 4])


def test_mo_driver_toy():
    res = mo_driver(toy_biobjective(), hybrid_solve, HybridConfig(), budget=1000)
    assert len(res.runs) == 5 and all(err is None for _, _, err in res.runs)
    assert len(res.archive) == res.curve[-1][1] <= 1000
    hv = [c[2] for c in res.curve]
    assert all(b >= a for a, b in zip(hv, hv[1:]))
    assert res.hypervolume >= 0.55
    # every front point lies on the curve (t^2, (1-t)^2)
    F = res.archive.front_vectors()
    np.testing.assert_allclose(np.sqrt(F[:, 0]) + np.sqrt(F[:, 1]), 1.0, atol=1e-9)
    # weighted-sum minima are weakly Pareto optimal over the archive
    A = res.archive.matrix()
    for wi, sol, _ in res.runs:
        fv = np.array([p.fun(sol.x_best) for p in toy_biobjective()])
        assert not np.any(np.all(A < fv, axis=1))


def test_mo_driver_single_weight():
    res = mo_driver(toy_biobjective(), hybrid_solve, HybridConfig(), weights=[[1, 0]], budget=300)
    assert res.archive.matrix()[:, 0].min() <= 1e-6
    assert len(res.runs) == 1


def test_mo_driver_records_errors():
    from hybrid_dfo.errors import NumericalFailure

    def broken(problem, cfg):
        raise NumericalFailure("boom")

    res = mo_driver(toy_biobjective(), broken, HybridConfig(max_evals=50))
    assert len(res.runs) == 5 and all(isinstance(e, NumericalFailure) for _, _, e in res.runs)


def test_mo_driver_rejects_bad_weights():
    with pytest.raises(ValueError):
        mo_driver(toy_biobjective(), hybrid_solve, HybridConfig(), weights=[[0.7, 0.7]])


def test_csv_writers(tmp_path):
    arc = ParetoArchive(2)
    arc.add([0.0], [0.2, 0.8], 0)
    arc.add([1.0], [0.9, 0.9], 1)
    write_front_csv(arc, tmp_path / "f.csv")
    rows = list(csv.reader(open(tmp_path / "f.csv")))
    assert rows == [["f1", "f2", "weight_index", "eval_index"], ["0.2", "0.8", "0", "1"]]
    write_curve_csv([(0.001, 1, 0.16)], tmp_path / "c.csv")
    rows = list(csv.reader(open(tmp_path / "c.csv")))
    assert rows[0] == ["time_s", "evals", "hypervolume"] and rows[1][1:] == ["1", "0.16"]
