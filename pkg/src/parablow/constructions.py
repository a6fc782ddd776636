"""Monotone-limit constructions of large solutions.

* :func:`solve_elliptic_maximal` -- Keller-Osserman barrier ``W_R`` on a ball
* :func:`construct_maximal` -- ``k -> infinity`` limit of constant data
  (with truncation continuation on exterior domains)
* :func:`construct_minimal` -- limit over an interior exhaustion
* :func:`construct_lateral` -- large solutions with positive lateral data
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .errors import (
    BudgetExceeded,
    InsufficientSamples,
    NoConvergence,
    NonMonotoneSequence,
    SchedulesDisagree,
    UnresolvedLayer,
)
from .geometry import DomainSpec, ExhaustionPlan, Field, build_grid, exhaustion, extend_by_zero
from .operators import StepperConfig, newton_solve, signed_power, stencil_operator
from .problem import LateralData, ProblemSpec
from .semigroup import c_q, evolve, phi_q

MONOTONE_SLACK = 1e-10


@dataclass
class ConstructionResult:
    """Limit fields at output times plus the audit trail of the limit.

    ``table`` rows are dicts with ``parameter``, ``sup_change`` and
    ``wall_time``; ``tolerance`` is the declared tolerance of the outermost
    limit, which the last ``sup_change`` must not exceed.
    """

    path: str
    times: list
    fields: list
    table: list
    tolerance: float
    trajectories: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    @property
    def grid(self):
        return self.fields[0].grid

    def at(self, t):
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        return self.fields[i]

    def write_csv(self, path):
        g = self.grid
        pts = g.points[g.interior_idx]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + ["x", "y"][: g.dim] + ["u"])
            for t, f in zip(self.times, self.fields):
                for p, v in zip(pts, f.interior):
                    w.writerow([repr(float(t))] + [repr(float(c)) for c in p] + [repr(float(v))])

    def write_table_json(self, path):
        with open(path, "w") as fh:
            json.dump(
                {"path": self.path, "tolerance": self.tolerance, "table": self.table},
                fh,
                indent=2,
                sort_keys=True,
            )


def _rel_change(new, old, mask):
    if not np.any(mask):
        raise ValueError("the probe set is empty")
    a = new.flat[mask]
    b = old.flat[mask]
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-300)))


def _check_order(lower, upper, what, slack=MONOTONE_SLACK):
    scale = max(float(np.max(np.abs(upper.flat))), 1.0)
    gap = float(np.min(upper.flat - lower.flat))
    if gap < -slack * scale:
        raise NonMonotoneSequence(f"{what}: ordering violated by {-gap:.3e}")
    return gap


# ---------------------------------------------------------------------------
# elliptic barrier


def solve_elliptic(grid, q, boundary_values, x0=None, cfg=None):
    """Solve ``-Δ_h w + |w|^{q-1} w = 0`` with Dirichlet data; returns a Field."""
    cfg = StepperConfig() if cfg is None else cfg
    op = stencil_operator(grid, boundary_values)
    A = op.neg_lap_ii
    src = op.boundary_source()

    def residual(x):
        return A @ x + signed_power(x, q) - src

    def jacobian(x):
        d = q * np.abs(x) ** (q - 1)
        return (A + sp.diags(d)).tocsr(), A.diagonal() + d

    if x0 is None:
        # the constant max(data) is a supersolution: Newton decreases monotonically
        x0 = np.full(grid.n_interior, float(np.max(op.boundary_values, initial=0.0)))
    scale = max(float(np.max(np.abs(src), initial=0.0)), 1.0)
    x, info = newton_solve(residual, jacobian, x0, cfg, scale)
    return Field.from_interior(grid, x, op.boundary_values), info


def solve_elliptic_maximal(R, q, grid, *, k0=1.0, core_tol=0.05, layer_cells=1.0, max_doublings=80, cfg=None, return_info=False):
    """Maximal solution of ``-ΔW + W^q = 0`` in ``B_R`` by boundary-data
    continuation ``k, 2k, 4k, ...``.

    On a fixed grid the data cannot be sent to infinity: once the boundary
    layer of the data-``k`` solution is thinner than a cell, every further
    doubling shifts the discrete profile inward.  The layer thickness is
    estimated from the solution itself, ``d_k = h / ((k / W_max)^{1/α} - 1)``
    with ``α = 2/(q-1)``, and continuation stops at the first ``k`` with
    ``d_k < layer_cells * h``.  The relative change of the core (nodes at
    distance >= R/4 from the sphere) over the last doubling must then be
    below ``core_tol``.
    """
    dom = grid.domain
    if not (
        (dom.kind == "ball" and math.isclose(dom.params[0], R))
        or (dom.kind == "interval" and math.isclose(dom.params[0], -R) and math.isclose(dom.params[1], R))
    ):
        raise ValueError(f"grid must discretize the ball of radius {R}, got {dom}")
    alpha = 2.0 / (q - 1.0)
    h = grid.h
    core = grid.probe_mask(min_dist=0.25 * R)
    cfg = StepperConfig() if cfg is None else cfg
    # continuation members only steer the next solve; the last one is polished
    loose = replace(cfg, newton_rtol=max(cfg.newton_rtol, 1e-9))
    k = float(k0)
    table = []
    prev = None
    for _ in range(max_doublings):
        t0 = time.perf_counter()
        W, _ = solve_elliptic(grid, q, k, x0=None if prev is None else prev.interior, cfg=loose)
        if prev is not None:
            _check_order(prev, W, "elliptic k-continuation", slack=1e-8)
        change = _rel_change(W, prev, core) if prev is not None else math.inf
        ratio = k / W.max()
        layer = h / (ratio ** (1.0 / alpha) - 1.0) if ratio > 1 else math.inf
        table.append({"parameter": k, "sup_change": change, "layer_cells": layer / h, "wall_time": time.perf_counter() - t0})
        if layer < layer_cells * h and prev is not None:
            if change > core_tol:
                raise NoConvergence(f"core still moves by {change:.3e} when the boundary layer reaches the grid scale")
            W, _ = solve_elliptic(grid, q, k, x0=W.interior, cfg=cfg)
            return (W, {"k": k, "table": table}) if return_info else W
        prev = W
        k *= 2.0
    raise NoConvergence(f"boundary layer still resolved after {max_doublings} doublings")


def elliptic_residual(W, q):
    """Max-norm of ``-Δ_h W + W^q`` at interior nodes."""
    op = stencil_operator(W.grid)
    r = -(op.lap @ W.flat) + signed_power(W.interior, q)
    return float(np.max(np.abs(r)))


@dataclass
class AsymptoteFit:
    exponent: float
    constant: float
    depths: np.ndarray
    values: np.ndarray


def fit_boundary_asymptote(W, R, q=None, *, min_cells=8, max_fraction=0.25):
    """Least-squares fit of ``log W`` against ``log(R - |x|)`` on dyadic depths
    ``8h, 16h, ... <= R/4`` along the positive first axis."""
    g = W.grid
    h = g.h
    pts = g.points[g.interior_idx]
    on_axis = pts[:, 0] > 0
    if g.dim > 1:
        on_axis &= np.all(np.abs(pts[:, 1:]) < 1e-12 * max(1.0, R), axis=1)
    depth = R - np.linalg.norm(pts, axis=1)
    vals = W.interior
    ds, ws = [], []
    m = float(min_cells)
    while m * h <= max_fraction * R * (1 + 1e-12):
        cand = np.flatnonzero(on_axis & (np.abs(depth - m * h) <= 0.5 * h))
        if cand.size:
            j = cand[np.argmin(np.abs(depth[cand] - m * h))]
            ds.append(depth[j])
            ws.append(vals[j])
        m *= 2
    if len(ds) < 4:
        raise InsufficientSamples(f"only {len(ds)} dyadic depths in [{min_cells}h, {max_fraction}R]")
    ds, ws = np.asarray(ds), np.asarray(ws)
    slope, intercept = np.polyfit(np.log(ds), np.log(ws), 1)
    return AsymptoteFit(float(slope), float(math.exp(intercept)), ds, ws)


def keller_osserman_constant(q):
    """``C_q`` with ``C_q^{q-1} = 2(q+1)/(q-1)^2`` (flat-boundary profile)."""
    return (2.0 * (q + 1.0) / (q - 1.0) ** 2) ** (1.0 / (q - 1.0))


# ---------------------------------------------------------------------------
# parabolic k-limit


def time_grid(cfg, t_start, output_times):
    """Step boundaries of ``cfg``'s schedule restarted at ``t_start``, with
    the output times inserted so snapshots land on them exactly.

    Restarting matters: a huge constant relaxes to the ``φ_q`` profile only
    after ``~log log k`` steps, so the first steps after a start must be small.
    """
    times = np.asarray(output_times, dtype=float)
    times = times[times > t_start]
    base = cfg.step_times(t_start, float(times[-1]))
    # drop boundaries that would leave a sliver step next to an output time
    gap = np.min(np.abs(base[:, None] - times[None, :]), axis=1)
    widths = np.diff(np.concatenate([[t_start], base]))
    base = base[gap > 1e-3 * widths]
    return np.union1d(base, times)


def k_limit(problem, cfg, grid, output_times, *, tol=1e-4, probe=None, t_start=0.0, step_times=None, k0=None, label=""):
    """``lim_{k→∞}`` of runs from the constant ``k`` at ``t_start`` by doubling.

    Stops when the relative sup-change over ``probe`` nodes at all output times
    drops below ``tol``.  Every consecutive pair is checked for nodewise
    ordering.
    """
    times = np.asarray(output_times, dtype=float)
    if step_times is None:
        step_times = time_grid(cfg, t_start, times)
    steps = np.asarray(step_times)
    first = float(steps[steps > t_start][0] - t_start)
    k = float(phi_q(first, problem.q)) if k0 is None else float(k0)
    if problem.initial.k0 is not None and k0 is None:
        k = float(problem.initial.k0)
    probe = grid.probe_mask() if probe is None else probe
    op = stencil_operator(grid)
    bvals = problem.lateral.values(grid, t_start)
    prev = None
    table = []
    for _ in range(problem.initial.max_doublings + 1):
        t0 = time.perf_counter()
        u0 = Field.constant(grid, k, bvals)
        traj = evolve(u0, problem, cfg, times, t_start=t_start, op=op, step_times=steps, label=label)
        if prev is not None:
            for a, b in zip(prev.snapshots, traj.snapshots):
                _check_order(a, b, f"k-continuation at k={k:g}")
            change = max(_rel_change(b, a, probe) for a, b in zip(prev.snapshots, traj.snapshots))
        else:
            change = math.inf
        table.append({"parameter": k, "sup_change": change, "wall_time": time.perf_counter() - t0})
        if change < tol:
            return traj, table
        prev = traj
        k *= 2.0
    raise BudgetExceeded(f"k-doubling did not converge to {tol:g} in {problem.initial.max_doublings} doublings")


def _next_k0(table):
    # members end at k >= the previous member's k, so ordering is exact
    return None if not table else table[-1]["k"] / 2.0


def _result_from_traj(path, traj, table, tol, **extras):
    return ConstructionResult(path, list(traj.times), list(traj.snapshots), table, tol, [traj], dict(extras))


def construct_maximal(problem, cfg, grid, output_times, *, tol=1e-4, probe=None, truncation=None, step_times=None, k0=None):
    """Maximal solution: ``k -> infinity`` on the whole (truncated) domain.

    For exterior domains a ``truncation`` plan of radii ``n`` runs the k-limit
    on ``Ω ∩ B_n`` for each ``n``, checks monotonicity in ``n`` and reports the
    ``n``-convergence table; the last member is returned. ``k0`` seeds the
    first k-doubling (pass half the final k of a run that must stay below).
    """
    if not problem.lateral.is_zero:
        raise ValueError("construct_maximal takes zero lateral data; use construct_lateral")
    times = np.asarray(output_times, dtype=float)
    if step_times is None:
        step_times = time_grid(cfg, 0.0, times)
    if truncation is None:
        probe = grid.probe_mask() if probe is None else probe
        traj, table = k_limit(problem, cfg, grid, times, tol=tol, probe=probe, step_times=step_times, k0=k0, label="maximal")
        return _result_from_traj("maximal-truncation", traj, table, tol, k=table[-1]["parameter"])
    if truncation.mode != "truncation":
        raise ValueError("construct_maximal continues over a truncation plan")
    if probe is None:
        # a fixed compact in the inner half of the first shell, off the obstacle
        r0 = problem.domain.params[0]
        probe = grid.probe_mask(min_dist=0.25 * r0, radius=r0 + 0.5 * (truncation.values[0] - r0))
    prev = None
    table = []
    trajs = []
    for m in range(truncation.count):
        t0 = time.perf_counter()
        dom = exhaustion(problem.domain, truncation, m)
        sub = grid if dom == grid.domain else build_grid(dom, grid.h)
        sub_problem = replace(problem, domain=dom)
        traj, ktab = k_limit(sub_problem, cfg, sub, times, tol=tol, step_times=step_times, k0=_next_k0(table) if table else k0, label=f"maximal n={truncation.values[m]:g}")
        fields = [extend_by_zero(f, grid) for f in traj.snapshots]
        if prev is not None:
            for a, b in zip(prev, fields):
                _check_order(a, b, f"truncation continuation at n={truncation.values[m]:g}")
            change = max(_rel_change(b, a, probe) for a, b in zip(prev, fields))
        else:
            change = math.inf
        table.append({"parameter": truncation.values[m], "sup_change": change, "k": ktab[-1]["parameter"], "wall_time": time.perf_counter() - t0})
        trajs.append(traj)
        prev = fields
    return ConstructionResult("maximal-truncation", list(trajs[-1].times), prev, table, tol, trajs)


def construct_minimal(problem, plan, cfg, grid, output_times, *, tol=1e-4, m_tol=0.05, probe=None, step_times=None, budget=None):
    """Minimal solution: k-limits on the members of an interior exhaustion,
    extended by zero to ``grid`` and required to increase with ``m``.

    On a grid the exhaustion can only be followed down to margins of one
    cell, so the ``m``-sequence is audited against the looser ``m_tol``.
    ``budget`` caps the wall time in seconds.
    """
    if not problem.lateral.is_zero:
        raise ValueError("the minimal construction takes zero lateral data")
    if plan.mode != "interior":
        raise ValueError("construct_minimal needs an interior exhaustion plan")
    times = np.asarray(output_times, dtype=float)
    if step_times is None:
        step_times = time_grid(cfg, 0.0, times)
    probe = grid.probe_mask() if probe is None else probe
    start = time.perf_counter()
    prev = None
    table = []
    trajs = []
    for m in range(plan.count):
        if budget is not None and time.perf_counter() - start > budget:
            raise BudgetExceeded(f"exhaustion stopped after {m} of {plan.count} members")
        t0 = time.perf_counter()
        dom = exhaustion(problem.domain, plan, m)
        sub = build_grid(dom, grid.h)
        traj, ktab = k_limit(replace(problem, domain=dom), cfg, sub, times, tol=tol, step_times=step_times, k0=_next_k0(table), label=f"minimal m={m}")
        fields = [extend_by_zero(f, grid) for f in traj.snapshots]
        if prev is not None:
            for a, b in zip(prev, fields):
                _check_order(a, b, f"exhaustion member {m}")
            change = max(_rel_change(b, a, probe) for a, b in zip(prev, fields))
        else:
            change = math.inf
        table.append({"parameter": plan.values[m], "sup_change": change, "k": ktab[-1]["parameter"], "wall_time": time.perf_counter() - t0})
        trajs.append(traj)
        prev = fields
    return ConstructionResult("minimal-exhaustion", list(trajs[-1].times), prev, table, m_tol, trajs)


def phi_start(problem, cfg, grid, output_times, t0, *, step_times=None):
    """Cross-check path for blow-up data: start at ``t0 > 0`` from the constant ``phi_q(t0)``."""
    times = np.asarray(output_times, dtype=float)
    if not t0 > 0:
        raise ValueError("start time must be positive")
    if step_times is None:
        step_times = time_grid(cfg, t0, times)
    u0 = Field.constant(grid, float(phi_q(t0, problem.q)), problem.lateral.values(grid, t0))
    return evolve(u0, problem, cfg, times, t_start=t0, step_times=step_times, label="phi-start")


# ---------------------------------------------------------------------------
# lateral data


def construct_lateral(
    problem,
    cfg,
    grid,
    output_times,
    *,
    tol=1e-4,
    tau_tol=1e-3,
    agree_tol=0.02,
    compare_window=(0.1, 1.0),
    start_times=None,
    probe=None,
):
    """Large solution with lateral data ``f >= 0`` by two schedules.

    A: for start times ``τ`` decreasing by halving, take the ``k``-limit of
    runs started at ``τ``; stop when the change in ``τ`` is below ``tau_tol``
    (the ``k``-limits use ``tol``).  The change per halving is about
    ``τ / t``, hence the looser default.
    B: the ``k``-limit started at 0.  Every run restarts the step schedule at
    its start time and steps onto the output times.  The A/B discrepancy on probes at output times inside
    ``compare_window`` must be below ``agree_tol``.

    Also checks the upper barrier ``u_{k,τ,f} <= ū(·, t-τ) + v_{f,τ}`` on
    the last A member, where ``v_{f,τ}`` starts from 0 at ``τ``.
    """
    times = np.asarray(output_times, dtype=float)
    probe = grid.probe_mask() if probe is None else probe
    if problem.lateral.is_zero:
        res = construct_maximal(problem, cfg, grid, times, tol=tol, probe=probe)
        res.path = "lateral-data"
        return res
    if start_times is None:
        start_times = []
        tau = 0.25 * times[0]
        while tau >= 2 * cfg.tau0 and len(start_times) < 40:
            start_times.append(tau)
            tau /= 2
    table = []
    prev = None
    member = None
    for tau in start_times:
        t0 = time.perf_counter()
        traj, ktab = k_limit(problem, cfg, grid, times, tol=tol, probe=probe, t_start=tau, label=f"A tau={tau:g}")
        if prev is not None:
            change = max(_rel_change(b, a, probe) for a, b in zip(prev.snapshots, traj.snapshots))
        else:
            change = math.inf
        table.append({"parameter": tau, "sup_change": change, "k": ktab[-1]["parameter"], "wall_time": time.perf_counter() - t0})
        prev, member = traj, (traj, ktab[-1]["parameter"], tau)
        if change < tau_tol:
            break
    else:
        raise NoConvergence(f"start-time limit still moves by {table[-1]['sup_change']:.3e} at τ={table[-1]['parameter']:g}")
    traj_a, k_a, tau_a = member
    traj_b, _ = k_limit(problem, cfg, grid, times, tol=tol, probe=probe, label="B")
    window = [(i, t) for i, t in enumerate(traj_a.times) if compare_window[0] - 1e-12 <= t <= compare_window[1] + 1e-12]
    disc = 0.0
    for i, _ in window:
        disc = max(disc, _rel_change(traj_a.snapshots[i], traj_b.snapshots[i], probe))
    barrier = lateral_barrier_margin(problem, cfg, grid, times, tau_a, k_a)
    result = ConstructionResult(
        "lateral-data",
        list(traj_a.times),
        list(traj_a.snapshots),
        table,
        tau_tol,
        [traj_a, traj_b],
        {"discrepancy": disc, "barrier_margin": barrier, "k": k_a, "start_time": tau_a, "schedule_b": traj_b},
    )
    if disc > agree_tol:
        raise SchedulesDisagree(f"schedules A and B differ by {disc:.3e} > {agree_tol:g}")
    return result


def lateral_barrier_margin(problem, cfg, grid, output_times, tau, k):
    """Max over output times and nodes of ``u - (ū(·,t-τ) + v)`` relative to
    the barrier, where ``u`` starts from ``k`` at ``τ`` with data ``f``, ``ū``
    from ``k`` at 0 with zero data on the shifted steps, and ``v`` from 0 at
    ``τ`` with data ``f``.  On a common step sequence the inequality holds
    exactly, since ``(a+b)^q >= a^q + b^q``."""
    times = np.asarray(output_times, dtype=float)
    later = times[times > tau]
    steps = time_grid(cfg, tau, later)
    op = stencil_operator(grid)
    bvals = problem.lateral.values(grid, tau)
    u = evolve(Field.constant(grid, k, bvals), problem, cfg, later, t_start=tau, op=op, step_times=steps)
    v = evolve(Field.constant(grid, 0.0, bvals), problem, cfg, later, t_start=tau, op=op, step_times=steps)
    zero = replace(problem, lateral=LateralData())
    shifted = steps - tau
    ubar = evolve(Field.constant(grid, k), zero, cfg, later - tau, op=op, step_times=shifted)
    margin = -math.inf
    for a, b, c in zip(u.snapshots, ubar.snapshots, v.snapshots):
        bar = b.interior + c.interior
        margin = max(margin, float(np.max((a.interior - bar) / np.maximum(bar, 1e-300))))
    return margin


# ---------------------------------------------------------------------------
# initial asymptotics


@dataclass
class InitialAsymptote:
    deviation: float
    per_time: list
    decreasing: bool


def fit_initial_asymptote(result, q, probe, *, tau0, times=None):
    """Relative deviation of ``t^{1/(q-1)} u`` from ``c_q`` on ``probe``.

    ``deviation`` is taken at the smallest snapshot time; ``decreasing`` tells
    whether the deviation shrinks as ``t`` decreases across the snapshots.
    """
    cq = c_q(q)
    ts = list(result.times) if times is None else list(times)
    pairs = []
    for t in sorted(ts):
        if t <= 0:
            continue
        f = result.at(t)
        dev = float(np.max(np.abs(t ** (1.0 / (q - 1.0)) * f.flat[probe] - cq)) / cq)
        pairs.append((float(t), dev))
    if not pairs:
        raise UnresolvedLayer("no positive snapshot time")
    if pairs[0][0] < 10 * tau0 * (1 - 1e-12):
        raise UnresolvedLayer(f"smallest time {pairs[0][0]:g} is below 10 τ0 = {10 * tau0:g}")
    devs = [d for _, d in pairs]
    decreasing = all(a <= b + 1e-12 for a, b in zip(devs, devs[1:]))
    return InitialAsymptote(devs[0], pairs, decreasing)
