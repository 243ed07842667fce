"""``hybrid-dfo`` command line: solve, bench, pareto, profiles.

Settings come from an optional INI file (``--config``) whose sections mirror
the config objects (``[trust_region]``, ``[direct_search]``, ``[hybrid]``,
``[run]``, ``[benchmark]``, ``[multiobjective]``).  Command-line flags and
``--set section.key=value`` override the file.  ``HYBRID_DFO_OUT`` overrides
the output directory from the file; ``--out`` overrides both.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import math
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .benchmarking import (
    DEFAULT_TAUS,
    RunSummary,
    build_cells,
    data_profile,
    performance_profile,
    write_profile_csv,
)
from .direct_search import DsConfig
from .errors import ConfigError, EmptyResults, HybridDFOError, UnsupportedObjectiveCount
from .hybrid import HybridConfig, basic_ds_solve, basic_tr_solve, hybrid_solve
from .multiobjective import (
    hypervolume,
    mo_driver,
    toy_biobjective,
    write_curve_csv,
    write_front_csv,
)
from .objective import get_problem, problem_names
from .svg import plot_svg
from .trust_region import TrustRegionConfig

log = logging.getLogger("hybrid_dfo")

SOLVERS = {"tr_ds": hybrid_solve, "basic_tr": basic_tr_solve, "basic_ds": basic_ds_solve}
TRACE_HEADER = ["k", "class", "f", "delta", "rho", "evals"]
SUMMARY_KEYS = ("problem", "solver", "f_best", "evals", "time_s", "stop_reason")

_SECTIONS = {
    "trust_region": TrustRegionConfig,
    "direct_search": DsConfig,
    "hybrid": HybridConfig,
}
_OTHER = {
    "run": {"problem", "solver", "seed", "output_dir"},
    "benchmark": {"problems", "solvers", "taus", "metric", "fl_source", "budget_per_dim",
                  "stop_at_target", "jobs"},
    "multiobjective": {"objectives", "ranges", "weights", "budget", "solver"},
}


# ---------------------------------------------------------------------------
# configuration


class Settings:
    """Raw section -> {key: (value, origin)} map with typed accessors."""

    def __init__(self):
        self.data = {s: {} for s in list(_SECTIONS) + list(_OTHER)}

    def set(self, section, key, value, origin):
        if section not in self.data:
            raise ConfigError(f"{origin}: unknown section [{section}]")
        allowed = _OTHER.get(section) or {
            f.name for f in dataclasses.fields(_SECTIONS[section]) if f.name not in ("tr", "ds")
        }
        if key not in allowed:
            raise ConfigError(f"{origin}: unknown key {key!r} in [{section}]; "
                              f"valid keys: {', '.join(sorted(allowed))}")
        self.data[section][key] = (value, origin)

    def get(self, section, key, default=None, conv=str):
        if key not in self.data[section]:
            return default
        value, origin = self.data[section][key]
        try:
            return conv(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{origin}: bad value for {section}.{key}: {exc}") from None


def _key_lines(path):
    lines, section = {}, None
    for i, raw in enumerate(Path(path).read_text().splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", raw)
        if m:
            section = m.group(1).strip()
            continue
        m = re.match(r"\s*([A-Za-z_][\w]*)\s*[=:]", raw)
        if m and section:
            lines[(section, m.group(1))] = i
    return lines


def load_settings(path=None, overrides=()) -> Settings:
    st = Settings()
    if path:
        cp = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}".replace("\n", " ")) from None
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        where = _key_lines(path)
        for section in cp.sections():
            for key, value in cp.items(section):
                line = where.get((section, key), "?")
                st.set(section, key, value, f"{path}:{line}")
    for item in overrides:
        m = re.match(r"^([a-z_]+)\.([a-z_0-9]+)=(.*)$", item)
        if not m:
            raise ConfigError(f"--set {item!r}: expected section.key=value")
        st.set(m.group(1), m.group(2), m.group(3), f"--set {item}")
    return st


def _bool(v: str) -> bool:
    t = v.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


def _coerce(ftype: str, value: str):
    """Parse ``value`` for a dataclass field annotated as ``ftype``."""
    v = value.strip()
    optional = ftype.startswith("Optional")
    if optional and v.lower() in ("", "none"):
        return None
    base = ftype[len("Optional["):-1] if optional else ftype
    if base == "bool":
        return _bool(v)
    if base == "int":
        return int(v)
    if base == "float":
        return float(v)
    try:  # untyped fields such as npt take an int or a keyword
        return int(v)
    except ValueError:
        return v


def _build(cls, st: Settings, section: str, **extra):
    kwargs = dict(extra)
    for f in dataclasses.fields(cls):
        if f.name in st.data[section]:
            kwargs[f.name] = st.get(section, f.name, conv=lambda v, t=str(f.type): _coerce(t, v))
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        given = st.data[section]
        named = [k for k in given if re.search(rf"\b{k}\b", str(exc))]
        key = (named or list(given) or [None])[0]
        where = given[key][1] if key else f"[{section}]"
        raise ConfigError(f"{where}: {exc}") from None


def hybrid_config(st: Settings, budget=None, seed=None) -> HybridConfig:
    tr = _build(TrustRegionConfig, st, "trust_region")
    ds = _build(DsConfig, st, "direct_search")
    cfg = _build(HybridConfig, st, "hybrid", tr=tr, ds=ds)
    changes = {}
    if budget is not None:
        changes["max_evals"] = budget
    if seed is not None:
        changes["seed"] = seed
    return dataclasses.replace(cfg, **changes) if changes else cfg


def output_dir(st: Settings, flag=None) -> Path:
    out = flag or os.environ.get("HYBRID_DFO_OUT") or st.get("run", "output_dir", "hybrid_dfo_out")
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


# ---------------------------------------------------------------------------
# artifacts


def _fmt(v):
    if v is None:
        return ""
    return repr(float(v))


class TraceWriter:
    """Append-only trace CSV, flushed after every record."""

    def __init__(self, path):
        self.fh = open(path, "w", newline="")
        self.fh.write(",".join(TRACE_HEADER) + "\n")

    def __call__(self, rec):
        row = [str(rec.k), str(rec.cls), _fmt(rec.f), _fmt(rec.delta), _fmt(rec.rho),
               str(rec.evals_so_far)]
        self.fh.write(",".join(row) + "\n")
        self.fh.flush()

    def close(self):
        self.fh.close()


def improvement_history(ledger):
    best, out = math.inf, []
    for r in ledger.history:
        if r.value < best:
            best = r.value
            out.append([r.index, round(r.time_s, 6), r.value])
    return out


def summary_dict(problem, solver, res):
    return {
        "problem": problem.name,
        "solver": solver,
        "f_best": float(res.f_best),
        "evals": int(res.evals),
        "time_s": round(float(res.time_s), 6),
        "stop_reason": res.stop_reason,
        "n": problem.dim,
        "f0": float(problem(problem.x0)),
        "f_opt_hint": problem.f_opt_hint,
        "x_best": [float(v) for v in res.x_best],
        "history": improvement_history(res.ledger),
    }


def run_one(problem_name, solver, cfg, out_dir):
    """Solve one problem, writing ``<problem>__<solver>.{csv,json}``; returns the summary."""
    problem = get_problem(problem_name)
    stem = Path(out_dir) / f"{problem.name}__{solver}"
    tw = TraceWriter(f"{stem}_trace.csv")
    try:
        res = SOLVERS[solver](problem, cfg, on_record=tw)
    finally:
        tw.close()
    summary = summary_dict(problem, solver, res)
    with open(f"{stem}.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return summary


def _bench_task(args):
    name, solver, cfg, out_dir = args
    try:
        return run_one(name, solver, cfg, out_dir), None
    except Exception as exc:  # recorded by the caller, sweep continues
        return None, f"{type(exc).__name__}: {exc}"


def write_profiles(summaries, taus, metric, fl_source, out_dir):
    runs = [RunSummary(s["problem"], s["solver"], s["n"], s["f0"], s.get("f_opt_hint"),
                       s["f_best"], s["history"]) for s in summaries]
    written = []
    report = [f"# f_L source: {fl_source} (known optimum, else best found by any solver)"
              if fl_source == "hint" else "# f_L source: best found by any solver",
              f"# cost metric: {metric}", f"# runs: {len(runs)}"]
    for tau in taus:
        cells = build_cells(runs, tau, metric, fl_source)
        solved = {c.solver: 0 for c in cells}
        for c in cells:
            solved[c.solver] += c.converged
        report.append(f"tau={tau:g} solved: " + ", ".join(f"{k}={v}" for k, v in sorted(solved.items())))
        for kind, fn, xlabel, logx in (("perf", performance_profile, "alpha (ratio to best)", True),
                                       ("data", data_profile, "alpha (cost / (n+1))", False)):
            stem = Path(out_dir) / f"profile_{kind}_{metric}_tau{tau:g}"
            try:
                curves = fn(cells)
            except EmptyResults as exc:
                # nobody converged: header-only CSV, no plot
                report.append(f"tau={tau:g} {kind}: {exc}")
                write_profile_csv([], f"{stem}.csv")
                written.append(f"{stem}.csv")
                continue
            write_profile_csv(curves, f"{stem}.csv")
            plot_svg(f"{stem}.svg", [(c.solver, c.abscissae, c.ordinates) for c in curves],
                     title=f"{kind} profile, tau={tau:g}, metric={metric}", xlabel=xlabel,
                     ylabel="fraction of problems", step=True, logx=logx, ylim=(0.0, 1.0))
            written.append(f"{stem}.csv")
    Path(out_dir, "profiles_report.txt").write_text("\n".join(report) + "\n")
    return written


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(args, st) -> int:
    problem = args.problem or st.get("run", "problem")
    solver = args.solver or st.get("run", "solver", "tr_ds")
    if problem is None:
        raise ConfigError("no problem given (use --problem or [run] problem)")
    if solver not in SOLVERS:
        raise ConfigError(f"unknown solver {solver!r}; valid solvers: {', '.join(SOLVERS)}")
    try:
        get_problem(problem)
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc).strip('"')) from None
    seed = args.seed if args.seed is not None else st.get("run", "seed", None, int)
    cfg = hybrid_config(st, args.budget, seed)
    out = output_dir(st, args.out)
    summary = run_one(problem, solver, cfg, out)
    print(json.dumps({k: summary[k] for k in SUMMARY_KEYS}))
    return 0


def _split(text, conv=str):
    return [conv(t.strip()) for t in str(text).split(",") if t.strip()]


def cmd_bench(args, st) -> int:
    names = args.problems
    if names is None:
        names = st.get("benchmark", "problems", None, _split)
    if names is None:
        names = problem_names()
    if not names:
        raise ConfigError("problem filter selects no problems")
    solvers = args.solvers or st.get("benchmark", "solvers", None, _split) or list(SOLVERS)
    for s in solvers:
        if s not in SOLVERS:
            raise ConfigError(f"unknown solver {s!r}; valid solvers: {', '.join(SOLVERS)}")
    taus = args.tau or st.get("benchmark", "taus", None, lambda v: _split(v, float)) or list(DEFAULT_TAUS)
    metric = args.metric or st.get("benchmark", "metric", "time")
    if metric not in ("time", "evals"):
        raise ConfigError(f"metric must be 'time' or 'evals', got {metric!r}")
    fl_source = st.get("benchmark", "fl_source", "hint")
    per_dim = st.get("benchmark", "budget_per_dim", 500, int)
    stop = st.get("benchmark", "stop_at_target", True, _bool)
    jobs = args.jobs or st.get("benchmark", "jobs", 1, int)
    seed = args.seed if args.seed is not None else st.get("run", "seed", None, int)
    base = hybrid_config(st, None, seed)
    out = output_dir(st, args.out)
    runs_dir = out / "runs"
    runs_dir.mkdir(exist_ok=True)

    tasks = []
    for name in names:
        try:
            p = get_problem(name)
        except (KeyError, ValueError) as exc:
            raise ConfigError(str(exc).strip('"')) from None
        f0 = p(p.x0)
        target = None
        if stop and p.f_opt_hint is not None:
            target = p.f_opt_hint + min(taus) * (f0 - p.f_opt_hint)
        budget = args.budget or per_dim * (p.dim + 1)
        cfg = dataclasses.replace(base, max_evals=budget, f_target=target)
        for s in solvers:
            tasks.append((p.name, s, cfg, str(runs_dir)))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_bench_task, tasks))
    else:
        results = [_bench_task(t) for t in tasks]
    summaries, failures = [], []
    for (name, s, _, _), (summ, err) in zip(tasks, results):
        if err is None:
            summaries.append(summ)
            log.info("%s/%s: f_best=%.6g evals=%d (%s)", name, s, summ["f_best"], summ["evals"],
                     summ["stop_reason"])
        else:
            failures.append({"problem": name, "solver": s, "error": err})
            log.warning("%s/%s failed: %s", name, s, err)
    with open(out / "bench_failures.json", "w") as fh:
        json.dump(failures, fh, indent=2)
        fh.write("\n")
    if not summaries:
        log.error("every run failed")
        return 1
    files = write_profiles(summaries, taus, metric, fl_source, out)
    print(json.dumps({"runs": len(summaries), "failures": len(failures), "profiles": files}))
    return 0


def _parse_weights(text):
    out = []
    for chunk in str(text).split(";"):
        if chunk.strip():
            out.append(np.array(_split(chunk, float)))
    return out


def cmd_pareto(args, st) -> int:
    chosen = args.objectives or st.get("multiobjective", "objectives", "toy")
    if chosen == "toy":
        problems = toy_biobjective()
    else:
        try:
            problems = [get_problem(n) for n in _split(chosen)]
        except (KeyError, ValueError) as exc:
            raise ConfigError(str(exc).strip('"')) from None
    if len(problems) not in (2, 3):
        raise UnsupportedObjectiveCount(f"{len(problems)} objectives given; only 2 or 3 are supported")
    ranges = st.get("multiobjective", "ranges", None,
                    lambda v: [tuple(float(a) for a in r.split(":")) for r in _split(v)])
    wtext = args.weights or st.get("multiobjective", "weights")
    weights = _parse_weights(wtext) if wtext else None
    solver = args.solver or st.get("multiobjective", "solver", "tr_ds")
    if solver not in SOLVERS:
        raise ConfigError(f"unknown solver {solver!r}; valid solvers: {', '.join(SOLVERS)}")
    seed = args.seed if args.seed is not None else st.get("run", "seed", None, int)
    budget = args.budget or st.get("multiobjective", "budget", 500, int)
    cfg = hybrid_config(st, budget, seed)
    out = output_dir(st, args.out)
    try:
        res = mo_driver(problems, SOLVERS[solver], cfg, weights=weights, ranges=ranges, budget=budget)
    except ValueError as exc:
        if isinstance(exc, UnsupportedObjectiveCount):
            raise
        raise ConfigError(str(exc)) from None
    write_front_csv(res.archive, out / "front.csv")
    write_curve_csv(res.curve, out / "hypervolume.csv")
    plot_svg(out / "hypervolume.svg", [("hypervolume", [c[1] for c in res.curve],
                                        [c[2] for c in res.curve])],
             title="hypervolume of the running front", xlabel="evaluations",
             ylabel="hypervolume", step=True)
    F = res.archive.front_vectors()
    summary = {
        "objectives": [p.name for p in problems],
        "weights": [[float(v) for v in w] for w in res.weights],
        "hypervolume": res.hypervolume if res.curve else hypervolume(F),
        "evals": len(res.archive),
        "front_size": len(res.archive.front),
        "best_per_objective": [float(v) for v in F.min(axis=0)] if len(F) else [],
        "errors": [f"weight {wi}: {err}" for wi, _, err in res.runs if err is not None],
    }
    with open(out / "pareto_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    print(json.dumps({k: summary[k] for k in ("hypervolume", "evals", "front_size",
                                               "best_per_objective")}))
    return 0


def cmd_profiles(args, st) -> int:
    src = Path(args.runs)
    files = sorted(src.glob("*.json")) if src.is_dir() else []
    summaries = []
    for f in files:
        data = json.loads(f.read_text())
        if isinstance(data, dict) and "history" in data and all(k in data for k in SUMMARY_KEYS):
            summaries.append(data)
    if not summaries:
        raise EmptyResults(f"no run summaries found in {src}")
    taus = args.tau or st.get("benchmark", "taus", None, lambda v: _split(v, float)) or list(DEFAULT_TAUS)
    metric = args.metric or st.get("benchmark", "metric", "time")
    if metric not in ("time", "evals"):
        raise ConfigError(f"metric must be 'time' or 'evals', got {metric!r}")
    fl_source = args.fl_source or st.get("benchmark", "fl_source", "hint")
    out = output_dir(st, args.out)
    files = write_profiles(summaries, taus, metric, fl_source, out)
    print(json.dumps({"runs": len(summaries), "profiles": files}))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hybrid-dfo", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI settings file")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one setting (repeatable)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--budget", type=int, help="evaluation budget")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="run one solver on one problem")
    p.add_argument("--problem", help=f"e.g. sphere2 or one of: {', '.join(problem_names())}")
    p.add_argument("--solver", help=f"one of {', '.join(SOLVERS)}")

    p = sub.add_parser("bench", parents=[common], help="benchmark solvers and write profiles")
    p.add_argument("--problems", type=_split, help="comma-separated problem names")
    p.add_argument("--solvers", type=_split)
    p.add_argument("--tau", type=float, action="append", help="tolerance (repeatable)")
    p.add_argument("--metric", choices=("time", "evals"))
    p.add_argument("--jobs", type=int)

    p = sub.add_parser("pareto", parents=[common], help="weighted-sum multiobjective sweep")
    p.add_argument("--objectives", help="'toy' or comma-separated problem names")
    p.add_argument("--weights", help="e.g. '1,0' or '1,0;0.5,0.5'")
    p.add_argument("--solver")

    p = sub.add_parser("profiles", parents=[common], help="profiles from saved run summaries")
    p.add_argument("--runs", required=True, help="directory of run JSON summaries")
    p.add_argument("--tau", type=float, action="append")
    p.add_argument("--metric", choices=("time", "evals"))
    p.add_argument("--fl-source", choices=("hint", "best"))
    return ap


COMMANDS = {"solve": cmd_solve, "bench": cmd_bench, "pareto": cmd_pareto, "profiles": cmd_profiles}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        st = load_settings(args.config, args.set)
        return COMMANDS[args.command](args, st)
    except (ConfigError, UnsupportedObjectiveCount, EmptyResults) as exc:
        print(f"hybrid-dfo {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except HybridDFOError as exc:
        print(f"hybrid-dfo {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
