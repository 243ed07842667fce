import csv
import json
import os
import subprocess
import sys

import pytest

from hybrid_dfo.cli import SUMMARY_KEYS, TRACE_HEADER, main

TRACE_CLASSES = {"successful", "acceptable", "model_improving", "unsuccessful",
                 "criticality_reduce", "criticality_noreduce", "ds_phase"}


def _run(argv, capsys):
    rc = main(argv)
    out, err = capsys.readouterr()
    return rc, out, err


def _check_trace_csv(path):
    rows = list(csv.reader(open(path)))
    assert rows[0] == TRACE_HEADER
    for r in rows[1:]:
        assert r[1] in TRACE_CLASSES
        int(r[0]), float(r[2]), float(r[3]), int(r[5])
        assert r[4] == "" or float(r[4]) == float(r[4])
    return rows


def test_solve_sphere(tmp_path, capsys):
    rc, out, _ = _run(["solve", "--problem", "sphere2", "--solver", "tr_ds", "--budget", "200",
                       "--out", str(tmp_path)], capsys)
    assert rc == 0
    summary = json.loads(out)
    assert list(summary) == list(SUMMARY_KEYS)
    assert summary["f_best"] <= 1e-10 and summary["evals"] <= 200
    _check_trace_csv(tmp_path / "sphere_2__tr_ds_trace.csv")
    full = json.loads((tmp_path / "sphere_2__tr_ds.json").read_text())
    assert set(SUMMARY_KEYS) <= set(full)
    assert isinstance(full["history"], list)


def test_solve_unknown_solver(tmp_path, capsys):
    rc, _, err = _run(["solve", "--problem", "sphere2", "--solver", "nelder", "--out",
                       str(tmp_path)], capsys)
    assert rc != 0
    assert "tr_ds" in err and "basic_tr" in err and "basic_ds" in err


def test_solve_unknown_problem(tmp_path, capsys):
    rc, _, err = _run(["solve", "--problem", "nosuch3", "--out", str(tmp_path)], capsys)
    assert rc == 2 and "unknown problem" in err


@pytest.mark.parametrize("solver", ["tr_ds", "basic_tr", "basic_ds"])
def test_solve_deterministic_trace(tmp_path, capsys, solver):
    outs = []
    name = f"rosenbrock_5__{solver}_trace.csv"
    for i in range(2):
        d = tmp_path / str(i)
        rc, out, _ = _run(["solve", "--problem", "rosenbrock_5", "--solver", solver,
                           "--budget", "600", "--seed", "3", "--out", str(d)], capsys)
        assert rc == 0
        outs.append(json.loads(out))
    a = (tmp_path / "0" / name).read_bytes()
    b = (tmp_path / "1" / name).read_bytes()
    assert a == b
    for s in outs:
        s.pop("time_s")
    assert outs[0] == outs[1]


def test_config_file_and_overrides(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[run]\nproblem = sphere3\nsolver = basic_tr\n\n"
                   "[trust_region]\ndelta0 = 0.5\n\n[hybrid]\nmax_evals = 150\n")
    rc, out, _ = _run(["solve", "--config", str(cfg), "--set", "hybrid.max_evals=90",
                       "--out", str(tmp_path)], capsys)
    assert rc == 0
    s = json.loads(out)
    assert s["solver"] == "basic_tr" and s["problem"] == "sphere_3" and s["evals"] <= 90


def test_config_errors_are_line_anchored(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[run]\nproblem = sphere2\n\n[trust_region]\neta0 = 0.1\ngamma_dec = 2\n")
    rc, _, err = _run(["solve", "--config", str(cfg), "--out", str(tmp_path)], capsys)
    assert rc == 2 and f"{cfg}:6" in err and "gamma_dec" in err
    cfg.write_text("[run]\nproblem = sphere2\n[hybrid]\n\nbogus = 1\n")
    rc, _, err = _run(["solve", "--config", str(cfg), "--out", str(tmp_path)], capsys)
    assert rc == 2 and f"{cfg}:5" in err and "bogus" in err
    cfg.write_text("[hybrid]\nmax_evals = lots\n")
    rc, _, err = _run(["solve", "--problem", "sphere2", "--config", str(cfg)], capsys)
    assert rc == 2 and f"{cfg}:2" in err
    rc, _, err = _run(["solve", "--problem", "sphere2", "--set", "nonsense"], capsys)
    assert rc == 2


def test_env_output_dir(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("HYBRID_DFO_OUT", str(tmp_path / "envout"))
    rc, _, _ = _run(["solve", "--problem", "sphere2", "--budget", "50"], capsys)
    assert rc == 0 and (tmp_path / "envout" / "sphere_2__tr_ds.json").exists()


def test_bench_full_suite_counts(tmp_path, capsys):
    rc, out, _ = _run(["bench", "--metric", "evals", "--budget", "400", "--out",
                       str(tmp_path)], capsys)
    assert rc == 0
    info = json.loads(out)
    assert info["runs"] + info["failures"] == 39
    assert len(list((tmp_path / "runs").glob("*.json"))) == info["runs"]
    csvs = sorted(p.name for p in tmp_path.glob("profile_*.csv"))
    assert len(csvs) == 6 and len(list(tmp_path.glob("profile_*.svg"))) == 6
    for name in csvs:
        rows = list(csv.reader(open(tmp_path / name)))
        assert rows[0] == ["alpha", "fraction", "solver"]
    assert (tmp_path / "profiles_report.txt").exists()

    # profiles can be recomputed from the saved summaries
    rc, out, _ = _run(["profiles", "--runs", str(tmp_path / "runs"), "--tau", "1e-3",
                       "--metric", "evals", "--out", str(tmp_path / "again")], capsys)
    assert rc == 0 and len(json.loads(out)["profiles"]) == 2


def test_bench_single_tau(tmp_path, capsys):
    rc, out, _ = _run(["bench", "--problems", "rosenbrock_5,powell_singular_8", "--tau", "1e-3",
                       "--metric", "evals", "--jobs", "2", "--out", str(tmp_path)], capsys)
    assert rc == 0
    assert len(json.loads(out)["profiles"]) == 2
    assert len(list(tmp_path.glob("profile_*.csv"))) == 2


def test_bench_empty_filter(tmp_path, capsys):
    rc, _, _ = _run(["bench", "--problems", "", "--out", str(tmp_path)], capsys)
    assert rc != 0


def test_profiles_without_runs(tmp_path, capsys):
    rc, _, err = _run(["profiles", "--runs", str(tmp_path), "--out", str(tmp_path)], capsys)
    assert rc == 2 and "no run summaries" in err


def test_pareto_toy(tmp_path, capsys):
    rc, out, _ = _run(["pareto", "--budget", "500", "--out", str(tmp_path)], capsys)
    assert rc == 0
    s = json.loads(out)
    assert s["hypervolume"] >= 0.55
    rows = list(csv.reader(open(tmp_path / "front.csv")))
    assert rows[0] == ["f1", "f2", "weight_index", "eval_index"]
    rows = list(csv.reader(open(tmp_path / "hypervolume.csv")))
    assert rows[0] == ["time_s", "evals", "hypervolume"]
    hv = [float(r[2]) for r in rows[1:]]
    assert hv == sorted(hv)
    assert (tmp_path / "hypervolume.svg").read_text().startswith("<svg")
    full = json.loads((tmp_path / "pareto_summary.json").read_text())
    assert len(full["weights"]) == 5


def test_pareto_single_weight(tmp_path, capsys):
    rc, out, _ = _run(["pareto", "--weights", "1,0", "--budget", "300", "--out",
                       str(tmp_path)], capsys)
    assert rc == 0 and json.loads(out)["best_per_objective"][0] <= 1e-6


def test_pareto_four_objectives(tmp_path, capsys):
    rc, _, err = _run(["pareto", "--objectives", "sphere2,sphere2,sphere2,sphere2",
                       "--out", str(tmp_path)], capsys)
    assert rc != 0 and "2 or 3" in err


def test_console_script(tmp_path):
    env = dict(os.environ, HYBRID_DFO_OUT=str(tmp_path))
    cp = subprocess.run([sys.executable, "-m", "hybrid_dfo.cli", "solve", "--problem", "sphere2",
                         "--budget", "100"], capture_output=True, text=True, env=env)
    assert cp.returncode == 0, cp.stderr
    assert json.loads(cp.stdout)["problem"] == "sphere_2"
