import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parablow.errors import GridMismatch, NegativeInput
from parablow.geometry import DomainSpec, Field, build_grid
from parablow.operators import (
    StepperConfig,
    apply_laplacian,
    dense_solve,
    implicit_step,
    scalar_resolvent,
    solve_linear,
    stencil_operator,
)

CFG = StepperConfig()


def line(h=1 / 16):
    return build_grid(DomainSpec.interval(-1, 1), h)


def test_laplacian_of_zero():
    g = line()
    assert np.all(apply_laplacian(stencil_operator(g), Field.zeros(g)).flat == 0)


def test_laplacian_exact_on_quadratics():
    g = line()
    u = Field.from_function(g, lambda p: p[:, 0] ** 2)
    lap = apply_laplacian(stencil_operator(g), u).interior
    assert np.allclose(lap, 2.0, atol=1e-10)


def test_laplacian_sine_taylor_bound():
    h = 1 / 32
    g = line(h)
    u = Field.from_function(g, lambda p: np.sin(np.pi * p[:, 0]))
    x = g.points[g.interior_idx, 0]
    err = np.abs(apply_laplacian(stencil_operator(g), u).interior + np.pi**2 * np.sin(np.pi * x))
    assert np.all(err <= np.pi**4 / 12 * h**2)


def test_implicit_step_fixes_zero():
    g = line()
    out = implicit_step(Field.zeros(g), 0.1, 2.0, stencil_operator(g), CFG)
    assert np.all(out.flat == 0)


def test_implicit_step_golden_ratio_periodic():
    g = build_grid(DomainSpec.interval(-1, 1), 0.25, periodic=True)
    out = implicit_step(Field.constant(g, 1.0), 1.0, 2.0, stencil_operator(g), CFG)
    assert np.allclose(out.interior, (math.sqrt(5) - 1) / 2, rtol=0, atol=1e-13)


def bisect(k, tau, q):
    lo, hi = 0.0, max(k, 1e-300)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid + tau * mid**q > k:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@settings(max_examples=40, deadline=None)
@given(k=st.floats(1e-3, 1e6), tau=st.floats(1e-6, 1.0), q=st.floats(1.2, 4.0))
def test_constant_step_matches_bisection(k, tau, q):
    g = build_grid(DomainSpec.interval(-1, 1), 0.5, periodic=True)
    out = implicit_step(Field.constant(g, k), tau, q, stencil_operator(g), CFG)
    ref = bisect(k, tau, q)
    assert np.allclose(out.interior, ref, rtol=1e-10)
    assert scalar_resolvent(k, tau, q) == pytest.approx(ref, rel=1e-12)


def test_implicit_step_rejects_negative_and_bad_grid():
    g = line()
    with pytest.raises(NegativeInput):
        implicit_step(Field.constant(g, -1.0), 0.1, 2.0, stencil_operator(g), CFG)
    with pytest.raises(GridMismatch):
        implicit_step(Field.zeros(line(1 / 8)), 0.1, 2.0, stencil_operator(g), CFG)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), tau=st.floats(1e-4, 1.0))
def test_resolvent_preserves_order_and_contracts(seed, tau):
    rng = np.random.default_rng(seed)
    g = line(1 / 16)
    op = stencil_operator(g)
    a = rng.uniform(0, 5, g.n_interior)
    b = a + rng.uniform(0, 5, g.n_interior)
    ua = implicit_step(Field.from_interior(g, a), tau, 2.0, op, CFG)
    ub = implicit_step(Field.from_interior(g, b), tau, 2.0, op, CFG)
    assert np.all(ua.interior <= ub.interior + 1e-12)
    assert (ub.interior - ua.interior).max() <= (b - a).max() + 1e-12
    assert np.linalg.norm(ub.interior - ua.interior) <= np.linalg.norm(b - a) + 1e-12


def test_solve_linear_trivial_cases():
    m = stencil_operator(line()).neg_lap_ii.tocsc()
    assert np.all(solve_linear(lambda v: m @ v, np.zeros(m.shape[0]), CFG, matrix=m) == 0)
    rhs = np.arange(5.0)
    assert np.array_equal(solve_linear(lambda v: v, rhs, StepperConfig(linear_solver="cg")), rhs)


@pytest.mark.parametrize("solver", ["direct", "cg"])
def test_poisson_against_dense_oracle(solver):
    g = build_grid(DomainSpec.interval(0, 1), 1 / 18)  # 17 interior nodes
    m = stencil_operator(g).neg_lap_ii.tocsc()
    assert m.shape == (17, 17)
    rhs = np.sin(np.arange(17.0))
    x = solve_linear(lambda v: m @ v, rhs, StepperConfig(linear_solver=solver), matrix=m, diagonal=m.diagonal())
    assert np.max(np.abs(x - dense_solve(m, rhs))) <= 1e-10


def test_stepper_validation_and_schedule():
    with pytest.raises(ValueError):
        StepperConfig(rho=0.5)
    cfg = StepperConfig(tau0=1e-3, rho=1.5, tau_max=0.1)
    t = cfg.step_times(0.0, 1.0)
    assert t[-1] == 1.0 and np.all(np.diff(t) > 0)
    assert np.diff(np.concatenate([[0], t])).max() <= 0.1 + 1e-15
    fixed = StepperConfig(schedule="fixed", tau=0.25).step_times(0.0, 1.0)
    assert np.allclose(fixed, [0.25, 0.5, 0.75, 1.0])
