import math

import numpy as np
import pytest

from parablow.constructions import (
    ConstructionResult,
    _check_order,
    construct_lateral,
    construct_maximal,
    construct_minimal,
    elliptic_residual,
    fit_boundary_asymptote,
    fit_initial_asymptote,
    keller_osserman_constant,
    solve_elliptic,
    solve_elliptic_maximal,
    time_grid,
)
from parablow.errors import InsufficientSamples, NonMonotoneSequence, UnresolvedLayer
from parablow.geometry import DomainSpec, ExhaustionPlan, Field, build_grid, extend_by_zero
from parablow.operators import StepperConfig
from parablow.problem import LateralData, ProblemSpec
from parablow.semigroup import c_q, check_universal_bound, phi_q

LINE = DomainSpec.interval(-1, 1)
# the k-limit changes by ~tau0/log(k) per doubling, so TOL must sit well above tau0
CFG = StepperConfig(tau0=1e-5, rho=1.05, tau_max=2e-2)
TOL = 1e-3
TIMES = (0.01, 0.1, 0.5)


@pytest.fixture(scope="module")
def coarse_pair():
    g = build_grid(LINE, 1 / 16)
    probe = g.probe_mask(min_dist=0.0, radius=0.5)
    problem = ProblemSpec(2.0, LINE)
    mn = construct_minimal(problem, ExhaustionPlan.dyadic(LINE, g.h), CFG, g, TIMES, tol=TOL, probe=probe)
    mx = construct_maximal(problem, CFG, g, TIMES, tol=TOL, probe=probe, k0=mn.table[-1]["k"] / 2)
    return g, probe, mn, mx


def test_ko_constant_oracle():
    assert keller_osserman_constant(3.0) == pytest.approx(math.sqrt(2))
    assert keller_osserman_constant(2.0) == pytest.approx(6.0)


def test_ko_constant_balances_ode_symbolically():
    sp = pytest.importorskip("sympy")
    d, q = sp.symbols("d q", positive=True)
    alpha = 2 / (q - 1)
    C = (2 * (q + 1) / (q - 1) ** 2) ** (1 / (q - 1))
    w = C * d ** (-alpha)
    for qv in (2, 3, sp.Rational(5, 2)):
        res = (-sp.diff(w, d, 2) + w**q).subs(q, qv)
        assert sp.simplify(res) == 0


def test_exact_power_law_fit():
    R, q, h = 1.0, 3.0, 1 / 512
    g = build_grid(DomainSpec.ball(R), h)
    alpha, C = 2 / (q - 1), 1.7
    W = Field.from_function(g, lambda p: C * (R - np.abs(p[:, 0])) ** -alpha, boundary=False)
    fit = fit_boundary_asymptote(W, R, q)
    assert fit.exponent == pytest.approx(-alpha, abs=1e-10)
    assert fit.constant == pytest.approx(C, rel=1e-10)


def test_fit_needs_four_samples():
    g = build_grid(DomainSpec.ball(1.0), 1 / 32)
    with pytest.raises(InsufficientSamples):
        fit_boundary_asymptote(Field.constant(g, 1.0), 1.0, 3.0)


def test_elliptic_solve_and_maximal_ordering():
    g = build_grid(DomainSpec.ball(1.0), 1 / 64)
    W1, info = solve_elliptic_maximal(1.0, 3.0, g, return_info=True)
    assert elliptic_residual(W1, 3.0) <= 1e-8 * W1.max()
    lower, _ = solve_elliptic(g, 3.0, 10.0)
    assert np.all(lower.interior <= W1.interior + 1e-10)
    assert W1.min() > 0 and info["k"] >= 10.0


def test_stationary_lateral_oracle():
    g = build_grid(LINE, 1 / 64)
    w, _ = solve_elliptic(g, 2.0, 1.0)
    assert 0 < w.min() and w.max() < 1.0


def test_time_grid_contains_outputs():
    t = time_grid(CFG, 0.02, TIMES)
    assert np.all(np.isin(TIMES[1:], t)) and t[0] > 0.02 and np.all(np.diff(t) > 0)


def test_minimal_below_maximal_and_decreasing_change(coarse_pair):
    g, probe, mn, mx = coarse_pair
    for a, b in zip(mn.fields, mx.fields):
        assert np.all(a.flat <= b.flat + 1e-10 * max(b.max(), 1))
    changes = [r["sup_change"] for r in mn.table[1:]]
    assert all(x > y for x, y in zip(changes, changes[1:]))


def test_bounded_by_phi(coarse_pair):
    _, probe, mn, mx = coarse_pair
    for t, f in zip(mx.times, mx.fields):
        # backward Euler from +inf sits a few percent above phi when rho = 1.05
        assert f.flat[probe].max() <= phi_q(t, 2.0) * 1.08
    for tr in mx.trajectories + mn.trajectories:
        assert check_universal_bound(tr).discrete <= 1e-10


def test_single_member_plan_is_maximal(coarse_pair):
    g, probe, _, mx = coarse_pair
    one = construct_minimal(ProblemSpec(2.0, LINE), ExhaustionPlan("interior", (0.0,)), CFG, g, TIMES, tol=TOL, probe=probe)
    for a, b in zip(one.fields, mx.fields):
        assert np.max(np.abs(a.flat[probe] - b.flat[probe]) / b.flat[probe]) <= 2 * TOL


def test_domain_monotonicity():
    g_big = build_grid(LINE, 1 / 16)
    small = DomainSpec.interval(-0.5, 0.5)
    plan = ExhaustionPlan.dyadic(small, 1 / 16)
    p = ProblemSpec(2.0, small)
    u_small = construct_minimal(p, plan, CFG, build_grid(small, 1 / 16), TIMES, tol=TOL)
    u_big = construct_minimal(ProblemSpec(2.0, LINE), ExhaustionPlan.dyadic(LINE, 1 / 16), CFG, g_big, TIMES, tol=TOL)
    for a, b in zip(u_small.fields, u_big.fields):
        assert np.all(extend_by_zero(a, g_big).flat <= b.flat + 1e-8)


def test_initial_asymptote_exact_profile():
    g = build_grid(LINE, 1 / 16)
    times = [0.01, 0.1]
    res = ConstructionResult("exact", times, [Field.constant(g, float(phi_q(t, 3.0))) for t in times], [], 0.0)
    fit = fit_initial_asymptote(res, 3.0, g.probe_mask(), tau0=1e-5)
    assert fit.deviation == pytest.approx(0.0, abs=1e-14)
    assert c_q(3.0) == pytest.approx(2**-0.5)
    with pytest.raises(UnresolvedLayer):
        fit_initial_asymptote(res, 3.0, g.probe_mask(), tau0=1e-2)


def test_initial_asymptote_coarse_run(coarse_pair):
    g, probe, _, mx = coarse_pair
    fit = fit_initial_asymptote(mx, 2.0, probe, tau0=CFG.tau0, times=[0.01])
    assert fit.deviation <= 0.06


def test_lateral_zero_reduces_to_maximal(coarse_pair):
    g, probe, _, _ = coarse_pair
    problem = ProblemSpec(2.0, LINE, lateral=LateralData())
    lat = construct_lateral(problem, CFG, g, TIMES, tol=TOL, probe=probe)
    mx = construct_maximal(problem, CFG, g, TIMES, tol=TOL, probe=probe)
    for a, b in zip(lat.fields, mx.fields):
        assert np.max(np.abs(a.flat - b.flat)) <= 1e-8 * max(b.max(), 1.0)


def test_lateral_positive_data_schedules_agree():
    g = build_grid(LINE, 1 / 16)
    problem = ProblemSpec(2.0, LINE, lateral=LateralData.constant(1.0), T=1.0)
    res = construct_lateral(problem, CFG, g, (0.1, 0.5, 1.0), tol=TOL, tau_tol=5e-3)
    assert res.extras["discrepancy"] <= 0.02
    assert res.extras["barrier_margin"] <= 1e-8
    assert np.all(res.fields[-1].interior >= 0)


def test_exterior_truncation_continuation():
    dom = DomainSpec.exterior_of_ball(1.0, 4.0)
    g = build_grid(dom, 1 / 8)
    res = construct_maximal(ProblemSpec(2.0, dom), CFG, g, (0.05, 0.2), tol=TOL, truncation=ExhaustionPlan("truncation", (2.0, 4.0)))
    assert len(res.table) == 2 and res.table[0]["sup_change"] == math.inf
    inner = construct_minimal(ProblemSpec(2.0, dom), ExhaustionPlan.dyadic(dom, 1 / 8), CFG, g, (0.05, 0.2), tol=TOL)
    for a, b in zip(inner.fields, res.fields):
        assert np.all(a.flat <= b.flat + 1e-8 * max(b.max(), 1.0))


def test_order_check_raises():
    g = build_grid(LINE, 1 / 8)
    with pytest.raises(NonMonotoneSequence):
        _check_order(Field.constant(g, 2.0), Field.constant(g, 1.0), "test")
