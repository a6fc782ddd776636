import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parablow.errors import GridIncommensurate
from parablow.geometry import DomainSpec, Field, build_grid
from parablow.operators import StepperConfig
from parablow.problem import InitialData, LateralData, ProblemSpec
from parablow.semigroup import (
    c_q,
    check_derivative_bound,
    check_scaling_invariance,
    check_universal_bound,
    collect_trajectories,
    derivative_ratio_exact,
    energy,
    evolve,
    ode_solution,
    phi_q,
)

LINE = DomainSpec.interval(-1, 1)


def periodic_ode_run(tau, k=1.0, q=2.0, T=1.0):
    g = build_grid(LINE, 0.5, periodic=True)
    problem = ProblemSpec(q, LINE, initial=InitialData("constant", k=k), T=T)
    return evolve(Field.constant(g, k), problem, StepperConfig(schedule="fixed", tau=tau), [T])


def test_phi_and_cq_values():
    assert phi_q(1.0, 2.0) == pytest.approx(1.0)
    assert phi_q(1.0, 3.0) == pytest.approx(2**-0.5, rel=1e-12)
    assert c_q(2.0) == pytest.approx(1.0)
    assert c_q(3.0) == pytest.approx(2**-0.5)


@settings(max_examples=30, deadline=None)
@given(t=st.floats(1e-6, 1e3), q=st.floats(1.1, 5.0))
def test_cq_is_scaled_phi(t, q):
    assert t ** (1 / (q - 1)) * phi_q(t, q) == pytest.approx(c_q(q), rel=1e-9)


def test_energy_of_zero_and_symmetry():
    g = build_grid(LINE, 1 / 32)
    assert energy(Field.zeros(g), 2.0) == 0.0
    u = Field.from_function(g, lambda p: np.cos(3 * p[:, 0]) * (1 - p[:, 0] ** 2), boundary=False)
    assert energy(u, 3.0) == pytest.approx(energy(Field(g, -u.values), 3.0), rel=1e-14)


def test_energy_of_hat():
    g = build_grid(DomainSpec.interval(0, 1), 1 / 256)
    hat = Field.from_function(g, lambda p: 1 - np.abs(2 * p[:, 0] - 1), boundary=False)
    assert energy(hat, 2.0) == pytest.approx(25 / 12, rel=0.02)


def test_zero_data_stays_zero():
    g = build_grid(LINE, 1 / 16)
    traj = evolve(Field.zeros(g), ProblemSpec(2.0, LINE), StepperConfig(), [0.1, 0.5])
    assert all(np.all(s.flat == 0) for s in traj.snapshots)
    assert check_universal_bound(traj).continuous == -1.0
    assert check_derivative_bound(traj).ratio == 0.0


def test_ode_first_order_convergence():
    errs = []
    for tau in (1e-2, 5e-3):
        tr = periodic_ode_run(tau)
        s = tr.steps
        errs.append(np.max(np.abs(s["max"] - ode_solution(s["t"], 1.0, 2.0))))
    assert errs[0] < 1e-2
    assert 1.8 <= errs[0] / errs[1] <= 2.2


def test_dirichlet_run_below_two_supersolutions():
    g = build_grid(LINE, 1 / 32)
    k, q = 3.0, 2.0
    times = [0.05, 0.2, 0.5]
    tr = evolve(Field.constant(g, k), ProblemSpec(q, LINE), StepperConfig(tau0=1e-4, rho=1.05), times)
    x = g.points[g.interior_idx, 0]
    for t, snap in zip(tr.times, tr.snapshots):
        ode = ode_solution(t, k, q)
        # linear heat from k on (-1,1): series in odd cosine modes
        heat = sum(
            4 * k / (math.pi * (2 * n + 1)) * (-1) ** n * np.cos((2 * n + 1) * math.pi * x / 2)
            * math.exp(-((2 * n + 1) * math.pi / 2) ** 2 * t)
            for n in range(200)
        )
        assert np.all(snap.interior <= ode * (1 + 1e-9))
        assert np.all(snap.interior <= heat + 2e-2)


def test_discrete_majorant_is_exact():
    tr = periodic_ode_run(1e-3)
    assert check_universal_bound(tr).discrete <= 1e-12


def test_collector_captures_runs():
    with collect_trajectories() as bucket:
        periodic_ode_run(0.1)
        periodic_ode_run(0.05)
    assert len(bucket) == 2
    periodic_ode_run(0.1)
    assert len(bucket) == 2


@pytest.mark.parametrize("q", [1.5, 2.0, 3.0])
def test_exact_derivative_ratio_below_one(q):
    ts = np.geomspace(1e-8, 1e4, 5001)
    for k in (0.01, 1.0, 1e4):
        r = derivative_ratio_exact(ts, k, q)
        assert r.max() <= math.sqrt(2) * q ** (-q / (q - 1)) * (1 + 1e-6) < 1


def test_discrete_derivative_ratio_on_smooth_data():
    g = build_grid(LINE, 1 / 32)
    u0 = Field.from_function(g, lambda p: np.cos(math.pi * p[:, 0] / 2), boundary=False)
    tr = evolve(u0, ProblemSpec(2.0, LINE), StepperConfig(tau0=1e-5, rho=1.05), [0.5])
    assert check_derivative_bound(tr).ratio <= 1.25


def test_lateral_data_time_table():
    f = LateralData("table", times=(0.0, 1.0), table=(0.0, 2.0))
    assert f.sup(0.5) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        LateralData("table", times=(1.0, 0.0), table=(0.0, 1.0))


def test_scaling_identity_and_incommensurate():
    problem = ProblemSpec(3.0, LINE, initial=InitialData("constant", k=2.0))
    rep = check_scaling_invariance(problem, 1.0, 1 / 16, StepperConfig(tau0=1e-4, rho=1.1), [0.05, 0.1])
    assert rep.deviation == 0.0
    with pytest.raises(GridIncommensurate):
        check_scaling_invariance(problem, 2.0, 1 / 16, StepperConfig(), [0.1], h_scaled=1 / 16)


def test_scaling_with_constant_data():
    problem = ProblemSpec(3.0, LINE, initial=InitialData("constant", k=1.0))
    rep = check_scaling_invariance(problem, 2.0, 1 / 32, StepperConfig(tau0=1e-4, rho=1.05), [0.01, 0.05])
    assert rep.deviation <= 1e-9
