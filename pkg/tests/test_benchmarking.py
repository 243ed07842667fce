import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybrid_dfo.benchmarking import (
    ProfileCurve,
    ResultCell,
    RunSummary,
    build_cells,
    convergence_test,
    cost_to_converge,
    data_profile,
    performance_profile,
    write_profile_csv,
)
from hybrid_dfo.errors import EmptyResults


def _cells(T, n=None):
    """T[p][s] cost or None for a failure."""
    out = []
    for p, row in enumerate(T):
        for s, t in enumerate(row):
            out.append(ResultCell(f"p{p}", f"s{s}", t, t is not None, 0.0,
                                  1 if n is None else n[p]))
    return out


def _by(curves):
    return {c.solver: c for c in curves}


def test_convergence_test_examples():
    assert convergence_test(1.0, 10.0, 0.0, 0.1)
    assert not convergence_test(1.000001, 10.0, 0.0, 0.1)
    assert convergence_test(10.0, 10.0, 0.0, 1.0)
    assert convergence_test(3.0, 10.0, -5.0, 1.0)


def test_performance_profile_hand_matrix():
    c = _by(performance_profile(_cells([[1, 2], [1, 3]])))
    s1, s2 = c["s0"], c["s1"]
    assert s1(1) == 1.0
    assert s2(1) == 0.0 and s2(2) == 0.5 and s2(3) == 1.0
    assert s2(1.99) == 0.0 and s2(2.5) == 0.5 and s2(0.5) == 0.0
    assert s1.abscissae[0] == 1.0 and s2.abscissae[0] == 1.0


def test_performance_profile_single_and_failed_solver():
    c = performance_profile(_cells([[4], [7]]))
    assert c[0](1) == 1.0
    c = _by(performance_profile(_cells([[4, None], [7, None]])))
    assert all(c["s1"](a) == 0 for a in (1, 10, 1e9))


def test_ties_count_for_both():
    c = _by(performance_profile(_cells([[2, 2], [1, 5]])))
    assert c["s0"](1) == 1.0 and c["s1"](1) == 0.5


def test_data_profile_examples():
    c = data_profile(_cells([[6]], n=[2]))
    assert c[0].abscissae == (2.0,)
    c = data_profile(_cells([[10]], n=[4]))[0]
    assert c(2) == 1.0 and c(1.9) == 0.0
    c = _by(data_profile(_cells([[10, None]], n=[4])))
    assert c["s1"](1e9) == 0.0


def test_empty_results():
    with pytest.raises(EmptyResults):
        performance_profile([])
    with pytest.raises(EmptyResults):
        data_profile(_cells([[None, None]]))


def test_cell_validation():
    with pytest.raises(ValueError):
        ResultCell("p", "s", 1.0, False)
    with pytest.raises(ValueError):
        ResultCell("p", "s", 0.0, True)


costs = st.one_of(st.none(), st.floats(0.1, 100))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(costs, min_size=3, max_size=3), min_size=1, max_size=6),
       st.floats(0.01, 100))
def test_profile_properties(T, k):
    if all(t is None for row in T for t in row):
        return
    n = list(range(1, len(T) + 1))
    perf = performance_profile(_cells(T, n))
    data = data_profile(_cells(T, n))
    for cv in perf + data:
        ys = cv.ordinates
        assert all(0 <= y <= 1 for y in ys)
        assert all(b >= a for a, b in zip(ys, ys[1:]))
    # ratio invariance and horizontal shift
    Tk = [[None if t is None else t * k for t in row] for row in T]
    perf_k = _by(performance_profile(_cells(Tk, n)))
    data_k = _by(data_profile(_cells(Tk, n)))
    for cv in perf:
        for a in cv.abscissae:
            # ratios can pick up rounding when scaled
            assert perf_k[cv.solver](a * (1 + 1e-12)) == cv(a)
    for cv in data:
        for a in cv.abscissae:
            assert data_k[cv.solver](a * k * (1 + 1e-12)) == cv(a)
    # the fastest solver on each problem counts at alpha = 1
    by = _by(perf)
    for s in by:
        wins = 0
        for row in T:
            done = [t for t in row if t is not None]
            mine = row[int(s[1:])]
            wins += mine is not None and mine == min(done)
        assert by[s](1.0) == pytest.approx(wins / len(T))


def test_cost_to_converge_and_build_cells():
    hist = [(1, 0.01, 10.0), (5, 0.05, 2.0), (9, 0.2, 0.05)]
    assert cost_to_converge(hist, 10.0, 0.0, 0.1, "evals") == 9
    assert cost_to_converge(hist, 10.0, 0.0, 0.3, "time") == pytest.approx(0.05)
    assert cost_to_converge(hist, 10.0, 0.0, 1e-5) is None
    runs = [RunSummary("p", "a", 2, 10.0, 0.0, 0.05, hist),
            RunSummary("p", "b", 2, 10.0, 0.0, 1.0, [(3, 0.1, 1.0)])]
    cells = build_cells(runs, 0.1)
    assert [c.t for c in cells] == [9.0, 3.0]
    # against the best found value 0.05 the test gets stricter
    runs[0] = RunSummary("p", "a", 2, 10.0, None, 0.05, hist)
    runs[1] = RunSummary("p", "b", 2, 10.0, None, 1.0, [(3, 0.1, 1.0)])
    cells = build_cells(runs, 0.01, fl_source="best")
    assert cells[0].t == 9.0 and not cells[1].converged
    with pytest.raises(ValueError):
        build_cells(runs, 0.1, fl_source="other")


def test_profile_curve_step_semantics():
    cv = ProfileCurve("s", (1.0, 2.0), (0.5, 1.0))
    assert cv(0.999) == 0 and cv(1.0) == 0.5 and cv(1.5) == 0.5 and cv(2.0) == 1.0


def test_profile_csv(tmp_path):
    write_profile_csv(performance_profile(_cells([[1, 2], [1, 3]])), tmp_path / "p.csv")
    rows = list(csv.reader(open(tmp_path / "p.csv")))
    assert rows[0] == ["alpha", "fraction", "solver"]
    assert ["1.0", "1.0", "s0"] in rows and ["2.0", "0.5", "s1"] in rows
