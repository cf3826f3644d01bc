import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from tlroa.errors import DivergenceGuard, InputError, InvalidFaultWindow, SingularInertia
from tlroa.integrate import (Event, EventKind, EventSchedule, FaultSpec, OperatingPoint, RomSystem, SolverSettings,
                             build_schedule, flow_endpoints, integrate_forward, integrate_reverse, nominal_segment,
                             sample_grid, settle_times)
from tlroa.model import GridEquivalent, InjectionSchedule, PllParams, RomState, Segment, segment_params
from tlroa import kernels
from tlroa.roa import equilibrium_of

from conftest import grid_pu, system_pu

SYS = system_pu()
OP = OperatingPoint()
TIGHT = SolverSettings(rtol=1e-11, atol=1e-13, hmax=0.01)


def test_sample_grid_pins_breakpoints():
    g = sample_grid(0.0, 5.0, 1e-3, [1.5, 1.6, 2.35])
    for b in (0.0, 1.5, 1.6, 2.35, 5.0):
        assert b in g
    assert np.all(np.diff(g) > 0)
    assert g.size == 5001


def test_sample_grid_off_grid_break():
    g = sample_grid(0.0, 1.0, 0.1, [0.25])
    assert 0.25 in g and 0.2 in g and 0.3 in g


def test_schedule_for_bolted_fault():
    events, sched = build_schedule(FaultSpec(1.5, 1.6), 2.0, OP, SYS.grid, 0.0, 5.0)
    assert events.times == [1.5, 1.6]
    assert sched.segment_at(1.55).v_f == 0.0
    assert sched.segment_at(1.7).v_f == 1.0


def test_schedule_with_recovery_ramp():
    fault = FaultSpec(1.5, 1.6, z_f=0.05j, k_factor=2.0, i_max=1.0)
    events, sched = build_schedule(fault, 2.0, OP, SYS.grid, 0.0, 5.0)
    kinds = [e.kind for e in events.events]
    assert kinds == [EventKind.FAULT_APPLY, EventKind.FAULT_CLEAR, EventKind.RAMP_END]
    during = sched.segment_at(1.55)
    assert during.id_c < 1.0
    t_ramp = events.events[-1].time
    assert t_ramp == pytest.approx(1.6 + (1.0 - during.id_c) / 2.0)
    assert sched.segment_at(t_ramp).id_c == pytest.approx(1.0)
    mid = 0.5 * (1.6 + t_ramp)
    assert sched.segment_at(mid).at(mid)[0] == pytest.approx(0.5 * (during.id_c + 1.0))


def test_clear_before_apply_rejected():
    with pytest.raises(InvalidFaultWindow):
        build_schedule(FaultSpec(1.6, 1.5), 2.0, OP, SYS.grid)


def test_event_schedule_validation():
    with pytest.raises(InputError):
        EventSchedule((Event(1.0, EventKind.FAULT_CLEAR),))
    with pytest.raises(InputError):
        EventSchedule((Event(1.0, EventKind.FAULT_APPLY), Event(1.0, EventKind.FAULT_CLEAR)))


def test_equilibrium_is_stationary():
    eq = equilibrium_of(SYS, nominal_segment(SYS.grid, OP))
    sched = InjectionSchedule.constant(1.0, 0.0, 1.0, 0.0, 10.0)
    traj = integrate_forward(SYS, sched, eq.state, 0.0, 10.0, TIGHT)
    assert np.max(np.abs(traj.x - eq.x)) < 1e-10


def _piecewise_reference(sched, x0, t_end, breaks):
    x = np.asarray(x0, dtype=float)
    pts = {}
    for a, b in zip(breaks, breaks[1:]):
        p = segment_params(SYS.pll, SYS.grid, sched.segment_at(a))
        sol = solve_ivp(lambda t, y: kernels.rhs(p, t, y[0], y[1]), (a, b), x, method="DOP853",
                        rtol=1e-13, atol=1e-14)
        x = sol.y[:, -1]
        pts[b] = x
    return pts


@pytest.mark.parametrize("method", ["rkf45", "rk4"])
def test_fault_trajectory_matches_reference(method):
    fault = FaultSpec(1.5, 1.6, z_f=0.05j)
    events, sched = build_schedule(fault, 2.0, OP, SYS.grid, 0.0, 4.0)
    eq = equilibrium_of(SYS, nominal_segment(SYS.grid, OP))
    solver = SolverSettings(method=method, h=1e-3, rtol=1e-11, atol=1e-13)
    traj = integrate_forward(SYS, sched, eq.state, 0.0, 4.0, solver, events)
    breaks = sorted({0.0, 4.0, *sched.boundaries()[1:-1], *events.times})
    ref = _piecewise_reference(sched, eq.x, 4.0, breaks)
    for b, xr in ref.items():
        i = int(np.flatnonzero(traj.t == b)[0])
        np.testing.assert_allclose(traj.x[i], xr, atol=1e-8)


def test_trajectory_has_exact_event_rows():
    events, sched = build_schedule(FaultSpec(1.5, 1.6), 2.0, OP, SYS.grid, 0.0, 5.0)
    eq = equilibrium_of(SYS, nominal_segment(SYS.grid, OP))
    traj = integrate_forward(SYS, sched, eq.state, 0.0, 5.0, SolverSettings(), events)
    assert 1.5 in traj.t and 1.6 in traj.t
    assert traj.t[0] == 0.0 and traj.t[-1] == 5.0
    # the fault accelerates the PLL
    i = int(np.flatnonzero(traj.t == 1.6)[0])
    assert traj.x[i, 1] > 0.0


def test_trajectory_csv_deterministic(tmp_path):
    events, sched = build_schedule(FaultSpec(1.5, 1.6), 2.0, OP, SYS.grid, 0.0, 3.0)
    paths = []
    for k in range(2):
        traj = integrate_forward(SYS, sched, RomState(0.26, 0.0), 0.0, 3.0, SolverSettings(), events)
        p = tmp_path / f"t{k}.csv"
        traj.to_csv(p)
        paths.append(p.read_bytes())
    assert paths[0] == paths[1]
    assert paths[0].startswith(b"t_s,x1_rad,x2_rad_per_s,x3_rad_per_s\n")


def test_reverse_then_forward_round_trip():
    op = nominal_segment(SYS.grid, OP, 2.0)
    x0 = RomState(0.4, 0.1)
    back = integrate_reverse(SYS, op, x0, 1.5, TIGHT)
    assert back.t[0] == 2.0 and back.t[-1] == pytest.approx(0.5)
    sched = InjectionSchedule.constant(1.0, 0.0, 1.0, 0.0, 10.0)
    fwd = integrate_forward(SYS, sched, back.final, 0.0, 1.5, TIGHT)
    np.testing.assert_allclose(fwd.final.as_array(), x0.as_array(), atol=1e-8)


def test_reverse_requires_autonomous_inputs():
    with pytest.raises(InputError):
        integrate_reverse(SYS, Segment(0.0, 1.0, 0.0, 1.0, did_dt=1.0), RomState(0.2, 0.0), 1.0)


def test_singular_inertia_inside_ramp():
    sys_ = RomSystem(PllParams(1.0, 1.0), GridEquivalent(0.0, 1.0))
    sched = InjectionSchedule((Segment(0.0, 0.5, 0.0, 1.0, did_dt=1.0),), 2.0)
    with pytest.raises(SingularInertia):
        integrate_forward(sys_, sched, RomState(0.0, 0.0), 0.0, 2.0)


def test_escape_raises_divergence_guard():
    op = nominal_segment(SYS.grid, OP)
    solver = SolverSettings(escape_radius=5.0)
    with pytest.raises(DivergenceGuard):
        flow_endpoints(SYS, op, np.array([[3.0, 20.0]]), 50.0, -1.0, solver)
    Y, status = flow_endpoints(SYS, op, np.array([[3.0, 20.0]]), 50.0, -1.0, solver, raise_on_escape=False)
    assert status[0] == kernels.ESCAPED


def test_settle_times_labels():
    op = nominal_segment(SYS.grid, OP)
    eq = equilibrium_of(SYS, op)
    t = settle_times(SYS, op, np.array([eq.x + [0.05, 0.0], eq.x + [3.5, 0.0]]), eq.x, 1e-3, 0.1, 1000.0,
                     TIGHT)
    assert t[0] > 0
    assert t[1] == -1
    assert math.isfinite(t[0])
