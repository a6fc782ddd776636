"""Command-line front end: ``parablow {solve,construct,verify,sweep,report}``."""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .config import load_config
from .constructions import construct_lateral, construct_maximal, construct_minimal, time_grid
from .errors import ConfigError, ParablowError
from .geometry import ExhaustionPlan, Field, build_grid
from .report import emit_report, load_report, render_text
from .semigroup import c_q, check_scaling_invariance, evolve, phi_q
from .verification import TIERS, run_suite

log = logging.getLogger("parablow")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _parser():
    p = argparse.ArgumentParser(prog="parablow", description="Large solutions of u_t - Δu + |u|^(q-1)u = 0.")
    p.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, metavar="PATH", help="JSON run configuration")
        sp.add_argument("--out", metavar="DIR", help="output directory (PARABLOW_OUT overrides)")

    sp = sub.add_parser("solve", help="one forward run from the configured initial data")
    common(sp)
    sp = sub.add_parser("construct", help="run one or more large-solution constructions")
    common(sp)
    sp.add_argument("--path", action="append", choices=("minimal", "maximal", "lateral"), help="repeatable")
    sp.add_argument("--compare", action="store_true", help="tabulate pairwise relative differences on the probes")
    sp = sub.add_parser("verify", help="run the acceptance suite")
    common(sp, config_required=False)
    sp.add_argument("--suite", choices=sorted(TIERS), default="quick")
    sp.add_argument("--only", action="append", metavar="CHECK", help="restrict to named checks (repeatable)")
    sp.add_argument("--seed", type=int, default=0)
    sp = sub.add_parser("sweep", help="run the configured sweep axes")
    common(sp)
    sp.add_argument("--jobs", type=int, default=1, metavar="N")
    sp = sub.add_parser("report", help="print a stored verification report")
    common(sp, config_required=False)
    return p


def _out_dir(args, cfg=None):
    return os.environ.get("PARABLOW_OUT") or args.out or (cfg.out if cfg is not None else "out")


def _grid(cfg, h=None):
    return build_grid(cfg.problem.domain, cfg.h if h is None else h, periodic=cfg.periodic)


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _probe(cfg, grid):
    pr = cfg.probe
    return grid.probe_mask(min_dist=pr.get("min_dist"), radius=pr.get("radius"))


# solve ---------------------------------------------------------------------

def cmd_solve(args):
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    os.makedirs(out, exist_ok=True)
    grid = _grid(cfg)
    init = cfg.problem.initial
    if init.mode == "constant":
        k = init.k
    else:
        # a single member of the k-sequence
        k = init.k0 if init.k0 is not None else float(phi_q(cfg.stepper.tau0, cfg.problem.q))
    bv = cfg.problem.lateral.values(grid, 0.0)
    steps = time_grid(cfg.stepper, 0.0, cfg.output_times) if cfg.stepper.schedule == "geometric" else None
    traj = evolve(Field.constant(grid, k, boundary=bv), cfg.problem, cfg.stepper, cfg.output_times, step_times=steps, label="solve")
    traj.write_csv(os.path.join(out, "solve.csv"))
    traj.write_diagnostics_csv(os.path.join(out, "solve_diagnostics.csv"))
    summary = {
        "k": k,
        "steps": len(traj.steps["t"]) - 1,
        "times": list(traj.times),
        "max": [s.max() for s in traj.snapshots],
        "l2": [s.l2() for s in traj.snapshots],
    }
    with open(os.path.join(out, "solve.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for t, m in zip(summary["times"], summary["max"]):
        print(f"t={t:<10.4g} max u={m:.6g}")
    return EXIT_OK


# construct -----------------------------------------------------------------

def _run_path(cfg, path, grid, probe):
    problem, times = cfg.problem, cfg.output_times
    if path == "minimal":
        plan = cfg.exhaustion or ExhaustionPlan.dyadic(problem.domain, grid.h)
        return construct_minimal(problem, plan, cfg.stepper, grid, times, tol=cfg.tolerance, probe=probe)
    if path == "maximal":
        trunc = cfg.truncation
        if trunc is None and problem.domain.kind == "exterior":
            raise ConfigError("exterior domains need a 'truncation' plan", field="truncation")
        return construct_maximal(problem, cfg.stepper, grid, times, tol=cfg.tolerance,
                                 probe=None if trunc is not None and not cfg.probe else probe, truncation=trunc)
    return construct_lateral(problem, cfg.stepper, grid, times, tol=cfg.tolerance, probe=probe)


def _rel_diff(a, b, probe):
    den = np.maximum(np.abs(b.flat[probe]), 1e-300)
    return float(np.max(np.abs(a.flat[probe] - b.flat[probe]) / den))


def cmd_construct(args):
    cfg = load_config(args.config)
    paths = tuple(args.path) if args.path else cfg.paths
    out = _out_dir(args, cfg)
    os.makedirs(out, exist_ok=True)
    grid = _grid(cfg)
    probe = _probe(cfg, grid)
    results = {}
    for path in paths:
        log.info("constructing %s", path)
        res = _run_path(cfg, path, grid, probe)
        results[path] = res
        res.write_csv(os.path.join(out, f"{path}.csv"))
        res.write_table_json(os.path.join(out, f"{path}_table.json"))
        last = res.table[-1]
        print(f"{path:8s} limit parameter={last['parameter']:.6g}  last change={last['sup_change']:.3e}")
    if args.compare:
        if len(results) < 2:
            raise ConfigError("--compare needs at least two paths", field="path")
        rows = []
        for a, b in itertools.combinations(paths, 2):
            ra, rb = results[a], results[b]
            for t in cfg.output_times:
                fa, fb = ra.at(t), rb.at(t)
                if not fa.grid.same_as(fb.grid):
                    continue
                rows.append((a, b, float(t), _rel_diff(fa, fb, probe)))
        _write_rows(os.path.join(out, "compare.csv"), ("path_a", "path_b", "t", "rel_sup_difference"), rows)
        print(f"\n{'path_a':8s}  {'path_b':8s}  {'t':>8s}  rel_sup_difference")
        for a, b, t, d in rows:
            print(f"{a:8s}  {b:8s}  {t:8.4g}  {d:.4e}")
    return EXIT_OK


# verify / report -----------------------------------------------------------

def cmd_verify(args):
    out = _out_dir(args)
    say = (lambda msg: print(msg, file=sys.stderr)) if args.verbose else None
    report = run_suite(args.suite, seed=args.seed, names=args.only, log=say)
    if not report.checks:
        raise ConfigError("no checks selected", field="only")
    emit_report(report, out)
    print(render_text(report.to_json()), end="")
    return EXIT_OK if report.overall else EXIT_FAIL


def cmd_report(args):
    out = _out_dir(args)
    path = os.path.join(out, "report.json")
    if not os.path.exists(path):
        raise ConfigError(f"no report at {path}")
    data = load_report(path)
    print(render_text(data), end="")
    return EXIT_OK if data["overall"] == "PASS" else EXIT_FAIL


# sweep ---------------------------------------------------------------------

SWEEP_AXES = ("q", "h", "tau", "lambda")


def _sweep_members(cfg):
    axes = [a for a in SWEEP_AXES if a in cfg.sweep]
    if not axes:
        raise ConfigError("no sweep axes configured", field="sweep")
    return axes, [dict(zip(axes, combo)) for combo in itertools.product(*(cfg.sweep[a] for a in axes))]


def _sweep_member(cfg, point):
    """One sweep member; returns a flat dict of scalar results."""
    problem, stepper, h = cfg.problem, cfg.stepper, cfg.h
    if "q" in point:
        problem = replace(problem, q=point["q"])
    if "h" in point:
        h = point["h"]
    if "tau" in point:
        stepper = replace(stepper, tau=point["tau"]) if stepper.schedule == "fixed" else replace(stepper, tau0=point["tau"])
    cfg = cfg.with_values(problem=problem, stepper=stepper, h=h)
    row = dict(point)
    if "lambda" in point:
        rep = check_scaling_invariance(problem, point["lambda"], h, stepper, cfg.output_times, tol=cfg.tolerance)
        row["scaling_deviation"] = rep.deviation
        return row
    grid = _grid(cfg)
    probe = _probe(cfg, grid)
    res = _run_path(cfg, cfg.paths[0], grid, probe)
    t0 = cfg.output_times[0]
    first = res.at(t0).flat[probe]
    row["path"] = cfg.paths[0]
    row["limit_change"] = res.table[-1]["sup_change"]
    row["initial_deviation"] = float(np.max(np.abs(t0 ** (1 / (problem.q - 1)) * first / c_q(problem.q) - 1)))
    row["max_final"] = res.fields[-1].max()
    return row


def cmd_sweep(args):
    cfg = load_config(args.config)
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1", field="jobs")
    out = _out_dir(args, cfg)
    os.makedirs(out, exist_ok=True)
    axes, members = _sweep_members(cfg)
    if args.jobs == 1:
        rows = [_sweep_member(cfg, m) for m in members]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_member, itertools.repeat(cfg), members))
    # assembled only after every member has finished, in member order
    cols = list(axes) + sorted({k for r in rows for k in r} - set(axes))
    _write_rows(os.path.join(out, "sweep.csv"), cols, [[r.get(c, "") for c in cols] for r in rows])
    for r in rows:
        print("  ".join(f"{c}={r[c]:.4g}" if isinstance(r.get(c), float) else f"{c}={r.get(c, '')}" for c in cols))
    bad = [r for r in rows if isinstance(r.get("limit_change"), float) and not math.isfinite(r["limit_change"])]
    return EXIT_FAIL if bad else EXIT_OK


COMMANDS = {"solve": cmd_solve, "construct": cmd_construct, "verify": cmd_verify, "sweep": cmd_sweep, "report": cmd_report}


def cli_main(argv=None):
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParablowError, ValueError) as exc:
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


def main():
    sys.exit(cli_main())
