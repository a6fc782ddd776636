"""Time evolution by repeated resolvent steps, the discrete energy, and the
a-posteriori checks run on trajectories."""

from __future__ import annotations

import contextlib
import contextvars
import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GridIncommensurate, NewtonDivergence, UnsupportedDomain
from .geometry import INTERIOR, DomainSpec, Field, build_grid
from .operators import implicit_step, scalar_resolvent, stencil_operator


def phi_q(t, q):
    """Spatially constant solution ``((q-1) t)^{-1/(q-1)}`` blowing up at 0."""
    t = np.asarray(t, dtype=float)
    return ((q - 1.0) * t) ** (-1.0 / (q - 1.0))


def c_q(q):
    """Initial-layer amplitude ``(1/(q-1))^{1/(q-1)} = t^{1/(q-1)} phi_q(t)``."""
    return (1.0 / (q - 1.0)) ** (1.0 / (q - 1.0))


def ode_solution(t, k, q):
    """Exact solution of ``v' = -v^q``, ``v(0) = k``."""
    t = np.asarray(t, dtype=float)
    return ((q - 1.0) * t + k ** (1.0 - q)) ** (-1.0 / (q - 1.0))


def energy(u, q):
    """Discrete energy ``h^d [ 1/2 Σ_edges ((u_i-u_j)/h)^2 + Σ |u|^{q+1}/(q+1) ]``.

    Edges are the lattice links with at least one interior endpoint, so the
    gradient term is the trapezoidal rule with one-sided differences at the
    boundary, and its gradient is exactly ``-Δ_h`` at interior nodes.
    """
    g = u.grid
    v = u.values
    inter = g.mask == INTERIOR
    grad = 0.0
    for axis in range(g.dim):
        if g.periodic:
            d = np.roll(v, -1, axis=axis) - v
            grad += np.sum(d**2)
            continue
        lo = [slice(None)] * g.dim
        hi = [slice(None)] * g.dim
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        use = inter[lo] | inter[hi]
        d = (v[hi] - v[lo])[use]
        grad += np.sum(d**2)
    pot = np.sum(np.abs(v[inter]) ** (q + 1)) / (q + 1)
    return float(g.cell_volume * (0.5 * grad / g.h**2 + pot))


@dataclass
class Trajectory:
    """Snapshots at output times plus per-step diagnostic series.

    ``steps`` holds one row per step boundary, including the initial state:
    ``t, tau, energy, l2, max, dtnorm, psi, newton``.  ``psi`` is the scalar
    implicit Euler majorant started from the initial maximum.
    """

    q: float
    t_start: float
    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    steps: dict = field(default_factory=dict)
    u0_l2: float = 0.0
    zero_lateral: bool = True
    autonomous: bool = True
    label: str = ""

    def snapshot(self, t):
        """Snapshot recorded for requested time ``t`` (last step boundary <= t)."""
        times = np.asarray(self.times)
        i = np.searchsorted(times, t * (1 + 1e-12) + 1e-300, side="right") - 1
        if i < 0:
            raise KeyError(f"no snapshot at or before t={t}")
        return self.snapshots[i]

    def energy_increase(self):
        """Largest relative step-to-step energy increase (<= 0 when monotone)."""
        e = np.asarray(self.steps["energy"])
        if e.size < 2:
            return 0.0
        return float(np.max((e[1:] - e[:-1]) / np.maximum(np.abs(e[:-1]), 1e-300)))

    def write_csv(self, path):
        """Fields: one row per (snapshot, interior node)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            dim = self.snapshots[0].grid.dim if self.snapshots else 1
            w.writerow(["t"] + ["x", "y"][:dim] + ["u"])
            for t, snap in zip(self.times, self.snapshots):
                pts = snap.grid.points[snap.grid.interior_idx]
                for p, val in zip(pts, snap.interior):
                    w.writerow([repr(float(t))] + [repr(float(c)) for c in p] + [repr(float(val))])

    def write_diagnostics_csv(self, path):
        cols = ["t", "energy", "l2", "max", "dtnorm", "bound_margin"]
        s = self.steps
        t = np.asarray(s["t"])
        margin = np.full(t.size, np.nan)
        pos = t > self.t_start
        if self.zero_lateral:
            margin[pos] = np.asarray(s["max"])[pos] / phi_q(t[pos] - self.t_start, self.q) - 1.0
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in zip(t, s["energy"], s["l2"], s["max"], s["dtnorm"], margin):
                w.writerow([repr(float(v)) for v in row])


_collector = contextvars.ContextVar("parablow_trajectories", default=None)


@contextlib.contextmanager
def collect_trajectories():
    """Collect every trajectory produced by :func:`evolve` inside the block."""
    bucket = []
    token = _collector.set(bucket)
    try:
        yield bucket
    finally:
        _collector.reset(token)


def evolve(u0, problem, cfg, output_times, *, t_start=0.0, op=None, step_times=None, label=""):
    """Run implicit Euler from ``u0`` at ``t_start`` up to the last output time.

    Dirichlet data follow ``problem.lateral`` at the right end of each step.
    Snapshots are taken at the last step boundary not after each requested
    time.  ``step_times`` overrides the schedule of ``cfg`` with explicit step
    boundaries (those in ``(t_start, last output]`` are used).
    """
    if np.any(u0.interior < 0):
        raise ValueError("initial data must be nonnegative")
    req = np.asarray(output_times, dtype=float)
    if req.size == 0 or np.any(np.diff(req) <= 0):
        raise ValueError("output_times must be a nonempty increasing sequence")
    q = problem.q
    grid = u0.grid
    if op is None:
        op = stencil_operator(grid)
    lateral = problem.lateral
    if step_times is None:
        step_t = cfg.step_times(t_start, float(req[-1]))
    else:
        st = np.asarray(step_times, dtype=float)
        eps = 1e-12 * max(1.0, abs(float(req[-1])))
        step_t = st[(st > t_start + eps) & (st <= req[-1] + eps)]

    traj = Trajectory(
        q=q, t_start=t_start, u0_l2=u0.l2(), zero_lateral=lateral.is_zero, autonomous=not lateral.time_dependent, label=label
    )
    cols = {k: [] for k in ("t", "tau", "energy", "l2", "max", "dtnorm", "psi", "newton")}

    def record(t, tau, u, dtn, psi, newton):
        cols["t"].append(t)
        cols["tau"].append(tau)
        cols["energy"].append(energy(u, q))
        cols["l2"].append(u.l2())
        cols["max"].append(u.max())
        cols["dtnorm"].append(dtn)
        cols["psi"].append(psi)
        cols["newton"].append(newton)

    u = u0
    psi = u0.max()
    sup_f = lateral.sup(t_start)
    if sup_f is None:
        sup_f = float(np.max(lateral.values(grid, t_start), initial=0.0))
    psi = max(psi, sup_f)
    record(t_start, 0.0, u, 0.0, psi, 0)
    bvals = None if lateral.time_dependent else lateral.values(grid, t_start)
    step_op = op.with_boundary(bvals) if bvals is not None else op

    all_t = np.concatenate([[t_start], step_t])
    if req[0] < t_start - 1e-12 * max(1.0, abs(t_start)):
        raise ValueError("output times precede the start time")
    tol = 1e-12 * np.maximum(1.0, np.abs(req))
    wanted = set(np.searchsorted(all_t, req + tol, side="right") - 1)

    def take_snapshot(i, field_):
        if i in wanted:
            traj.times.append(float(all_t[i]))
            traj.snapshots.append(field_)

    take_snapshot(0, u)
    t_prev = t_start
    for i, t in enumerate(step_t, start=1):
        tau = t - t_prev
        if bvals is None:
            vals = lateral.values(grid, t)
            step_op = op.with_boundary(vals)
            sup_f = lateral.sup(t)
            if sup_f is None:
                sup_f = float(np.max(vals, initial=0.0))
        try:
            new, info = implicit_step(u, tau, q, step_op, cfg, time=t, return_info=True)
        except NewtonDivergence as exc:
            if exc.time is None:
                raise NewtonDivergence(str(exc), time=t, residuals=exc.residuals) from exc
            raise
        psi = max(scalar_resolvent(psi, tau, q), sup_f)
        dtn = math.sqrt(grid.cell_volume * float(np.sum((new.interior - u.interior) ** 2))) / tau
        record(t, tau, new, dtn, psi, info.iterations)
        u = new
        t_prev = t
        take_snapshot(i, u)
    traj.steps = {k: np.asarray(v) for k, v in cols.items()}
    bucket = _collector.get()
    if bucket is not None:
        bucket.append(traj)
    return traj


@dataclass
class BoundReport:
    """``continuous``: max over snapshots of ``(max u - phi_q)/phi_q``;
    ``discrete``: max over steps of ``(max u - psi)/psi``."""

    continuous: float
    discrete: float
    per_snapshot: list = field(default_factory=list)


def check_universal_bound(traj, q=None):
    q = traj.q if q is None else q
    per = []
    for t, snap in zip(traj.times, traj.snapshots):
        dt = t - traj.t_start
        if dt <= 0:
            continue
        phi = float(phi_q(dt, q))
        per.append((t, snap.max() / phi - 1.0))
    cont = max((m for _, m in per), default=-1.0)
    s = traj.steps
    umax = np.asarray(s["max"])
    psi = np.asarray(s["psi"])
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = np.where(psi > 0, (umax - psi) / np.where(psi > 0, psi, 1.0), np.where(umax > 0, np.inf, -1.0))
    return BoundReport(float(cont), float(np.max(disc)) if disc.size else -1.0, per)


@dataclass
class DerivativeReport:
    """``ratio`` = max over steps of ``||Δu/τ|| · t · √2 / ||u0||``."""

    ratio: float
    series: np.ndarray


def check_derivative_bound(traj, u0_norm=None):
    norm = traj.u0_l2 if u0_norm is None else float(u0_norm)
    s = traj.steps
    t = np.asarray(s["t"])[1:] - traj.t_start
    d = np.asarray(s["dtnorm"])[1:]
    if norm <= 0 or t.size == 0:
        return DerivativeReport(0.0, np.zeros(t.size))
    series = d * t * math.sqrt(2.0) / norm
    return DerivativeReport(float(series.max()), series)


def derivative_ratio_exact(t, k, q):
    """``|v'(t)| t √2 / k`` for the exact constant solution (whole-space
    analogue of the derivative estimate, with ``||u0||`` per unit volume)."""
    v = ode_solution(t, k, q)
    return v**q * np.asarray(t) * math.sqrt(2.0) / k


def scaled_domain(domain, lam):
    """``lam^{-1} Ω`` for domains centred at the origin."""
    p = domain.params
    if domain.kind == "interval":
        if not math.isclose(p[0], -p[1]):
            raise UnsupportedDomain("scaling needs an interval centred at 0")
        return DomainSpec.interval(p[0] / lam, p[1] / lam)
    if domain.kind == "ball":
        return DomainSpec.ball(p[0] / lam, domain.dim)
    raise UnsupportedDomain("scaling invariance is checked on intervals and balls")


@dataclass
class ScalingReport:
    deviation: float
    per_time: list
    large: object = field(default=None, repr=False)
    small: object = field(default=None, repr=False)


def check_scaling_invariance(problem, lam, h, cfg, output_times, *, h_scaled=None, probe_radius=None, tol=1e-4, scale_schedule=True):
    """Compare ``lam^{2/(q-1)} u(lam x, lam^2 t)`` on Ω with the solution on
    ``lam^{-1} Ω`` run on the scaled grid.

    With ``scale_schedule`` the small run also uses the time steps scaled by
    ``lam^-2``; the two discrete problems are then similar and the deviation
    only reflects rounding and the k-limit.  Without it the small run reuses
    ``cfg`` as is, so the deviation measures time-discretization error.

    ``output_times`` refer to the small domain.  Returns the max relative
    deviation over probe nodes of the small domain.
    """
    from .constructions import construct_maximal  # blow-up data need the k-limit

    if not lam > 0:
        raise ValueError("scale must be positive")
    h_small = h / lam if h_scaled is None else float(h_scaled)
    if not math.isclose(h_small * lam, h, rel_tol=1e-12):
        raise GridIncommensurate(f"h={h_small} on the scaled domain does not map onto h={h}")
    small_dom = scaled_domain(problem.domain, lam)
    q = problem.q
    amp = lam ** (2.0 / (q - 1.0))
    times = np.asarray(output_times, dtype=float)
    g_big = build_grid(problem.domain, h)
    g_small = build_grid(small_dom, h_small)
    cfg_small = cfg.scaled(lam**-2) if scale_schedule else cfg
    if problem.initial.mode == "constant":
        k = problem.initial.k
        big = evolve(Field.constant(g_big, k), problem, cfg, lam**2 * times)
        small_problem = replace(problem, domain=small_dom)
        small = evolve(Field.constant(g_small, amp * k), small_problem, cfg_small, times)
        big_snaps = [big.snapshot(t) for t in lam**2 * times]
        small_snaps = [small.snapshot(t) for t in times]
    else:
        big = construct_maximal(problem, cfg, g_big, lam**2 * times, tol=tol)
        small = construct_maximal(replace(problem, domain=small_dom), cfg_small, g_small, times, tol=tol)
        big_snaps, small_snaps = big.fields, small.fields
    if probe_radius is None:
        sel = g_small.probe_mask()
    else:
        sel = g_small.probe_mask(min_dist=0.0, radius=probe_radius)
    # node i*h/lam of the small grid corresponds to node i*h of the large grid
    lat = g_small.lattice[sel] - np.asarray(g_big.lo)
    idx = np.ravel_multi_index(lat.T, g_big.shape)
    if np.any(g_big.mask.ravel()[idx] != INTERIOR):
        raise GridIncommensurate("scaled probe nodes are not interior in the large grid")
    per = []
    for t, bs, ss in zip(times, big_snaps, small_snaps):
        ref = ss.flat[sel]
        dev = np.max(np.abs(amp * bs.flat[idx] - ref) / np.abs(ref))
        per.append((float(t), float(dev)))
    return ScalingReport(max(d for _, d in per), per, big, small)

