"""Experiment orchestration: run the configured methods and write results.

Outputs per run: timeseries.csv (one row per method and time instant),
summary.csv (one row per method, mirroring the usual comparison tables),
run.json (config echo and environment), per-method two-column plot data,
and rendered figures unless disabled.  All floats are written with 17
significant digits so files round-trip and repeated runs with one seed
are byte-identical (wall-clock columns aside).
"""

import csv
import json
import platform
from dataclasses import asdict, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .adaptive import compare_methods, error_series
from .config import ExperimentConfig
from .fem import steps_of
from .mesh import build_mesh
from .problems import (ProblemSpec, abc_problem, kolmogorov_problem,
                       manufactured_problem)

_COARSE_METHODS = ("two-grid", "aug-coarse")


def make_problem(cfg: ExperimentConfig) -> ProblemSpec:
    if cfg.problem == "kolmogorov":
        return kolmogorov_problem(cfg.epsilon)
    if cfg.problem == "abc":
        return abc_problem(cfg.epsilon, cfg.w_freq)
    if cfg.problem == "manufactured":
        return manufactured_problem(cfg.epsilon)
    raise ValueError(f"unknown problem '{cfg.problem}'")


def _g17(x) -> str:
    return f"{float(x):.17g}"


def run_experiment(cfg: ExperimentConfig, out_dir=None,
                   reference: Optional[bool] = None,
                   seed: Optional[int] = None) -> int:
    """Run every configured method and write the result files.

    Returns 0 when all methods completed, 1 when any row was aborted by a
    solver failure (the other rows are still written).
    """
    if reference is not None:
        cfg = replace(cfg, reference=reference)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if out_dir is not None:
        cfg = replace(cfg, out_dir=str(out_dir))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    problem = make_problem(cfg)
    mesh = build_mesh(cfg.fine_n, problem.kappa)
    coarse_mesh = None
    if any(m in _COARSE_METHODS for m in cfg.method):
        coarse_mesh = build_mesh(cfg.coarse_n, problem.kappa)

    rows, results, ref = compare_methods(cfg.method, cfg.to_adaptive(), mesh,
                                         problem, coarse_mesh,
                                         with_reference=cfg.reference,
                                         isolate_failures=True)

    w = steps_of(cfg.coarse_dt, cfg.dt)
    ts_path = out / "timeseries.csv"
    _write_timeseries(ts_path, cfg, results, ref, w)
    _write_summary(out / "summary.csv", cfg, rows)
    _write_metadata(out / "run.json", cfg, rows)
    emit_plotdata(ts_path)
    if cfg.plots:
        from .report import render_figures
        render_figures(out, cfg, results, ref)

    failed = [r.method for r in rows if r.status != "ok"]
    return 1 if failed else 0


def _write_timeseries(path, cfg: ExperimentConfig, results, ref, w: int) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("t,k,method,m,eta,marked,rel_error\n")
        for name in cfg.method:
            res = results.get(name)
            if res is None:
                continue
            if name == "fem":
                traj, rep, samples, err = res, None, [], None
            else:
                traj = res.trajectory
                rep = res.rep_dofs
                samples = res.samples
                err = error_series(ref, traj) if ref is not None else None
            by_k = {s.check_index * w: s for s in samples}
            n_dofs = traj.states.shape[1]
            for k in range(traj.states.shape[0]):
                m = n_dofs if rep is None else int(rep[k])
                s = by_k.get(k)
                eta = _g17(s.eta) if s is not None else ""
                marked = "1" if (s is not None and s.marked) else "0"
                rel = ""
                if err is not None and np.isfinite(err[k]):
                    rel = _g17(err[k])
                fh.write(f"{_g17(traj.times[k])},{k},{name},{m},{eta},{marked},{rel}\n")


def _write_summary(path, cfg: ExperimentConfig, rows) -> None:
    with_errors = cfg.reference
    with open(path, "w", newline="") as fh:
        if with_errors:
            fh.write("method,update_times,dofs,error_at_T,average_error,"
                     "wall_seconds,status\n")
        else:
            fh.write("method,update_times,dofs,wall_seconds,status\n")
        for row in rows:
            times = ";".join(_g17(t) for t in row.update_times)
            cells = [row.method, times, str(row.dofs)]
            if with_errors:
                cells.append("" if row.error_at_end is None else _g17(row.error_at_end))
                cells.append("" if row.average_error is None else _g17(row.average_error))
            cells.append(_g17(row.wall_seconds))
            cells.append(row.status)
            fh.write(",".join(cells) + "\n")


def _json_safe(value):
    if isinstance(value, float) and not np.isfinite(value):
        return repr(value)
    if isinstance(value, tuple):
        return list(value)
    return value


def _write_metadata(path, cfg: ExperimentConfig, rows) -> None:
    import matplotlib
    import scipy

    from . import __version__
    meta = {
        "config": {k: _json_safe(v) for k, v in asdict(cfg).items()},
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "matplotlib": matplotlib.__version__,
            "rom_apod": __version__,
        },
        "method_status": {row.method: row.status for row in rows},
        "notes": [
            "wall_seconds are single-process wall-clock times on one node; "
            "they are not comparable to timings of distributed runs",
        ],
    }
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")


def emit_plotdata(timeseries_path) -> list:
    """Split timeseries.csv into per-method two-column text files.

    For every method this writes `<method>_error.dat` (t, rel_error) and
    `<method>_eta.dat` (t, eta); the eta file holds check instants only.
    Returns the written paths.
    """
    timeseries_path = Path(timeseries_path)
    out = timeseries_path.parent
    per_method = {}
    with open(timeseries_path, newline="") as fh:
        for rec in csv.DictReader(fh):
            err, eta = per_method.setdefault(rec["method"], ([], []))
            if rec["rel_error"] != "":
                err.append((rec["t"], rec["rel_error"]))
            if rec["eta"] != "":
                eta.append((rec["t"], rec["eta"]))

    written = []
    for method, (err, eta) in per_method.items():
        for suffix, header, rows in (("error", "rel_error", err),
                                     ("eta", "eta", eta)):
            p = out / f"{method}_{suffix}.dat"
            with open(p, "w") as fh:
                fh.write(f"# t {header}\n")
                for t, v in rows:
                    fh.write(f"{t} {v}\n")
            written.append(p)
    return written
