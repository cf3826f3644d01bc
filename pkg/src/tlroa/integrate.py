"""Event-aware forward and reverse-time integration of the reduced-order model."""

from __future__ import annotations

import csv
import enum
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import (DivergenceGuard, InputError, InvalidFaultWindow, NonFiniteState, SingularInertia,
                     StepFailure)
from .model import (M_EQ_EPS, GridEquivalent, InjectionSchedule, PllParams, RomState, Segment,
                    coefficients_from_segment, fault_conditions, saturate, segment_params)


@dataclass(frozen=True)
class SolverSettings:
    method: str = "rkf45"
    h: float = 1e-4
    rtol: float = 1e-8
    atol: float = 1e-10
    h0: float = 1e-3
    hmin: float = 1e-12
    hmax: float = 0.01
    sample_dt: float = 1e-3
    escape_radius: float = 1e3
    x1_scale: float = 1.0
    x3_scale: float = 1.0

    def __post_init__(self):
        if self.method not in ("rk4", "rkf45"):
            raise InputError(f"unknown solver method {self.method!r}")
        for name in ("h", "rtol", "atol", "h0", "hmin", "hmax", "sample_dt", "escape_radius",
                     "x1_scale", "x3_scale"):
            if not getattr(self, name) > 0:
                raise InputError(f"solver setting {name} must be positive")


@dataclass(frozen=True)
class RomSystem:
    pll: PllParams
    grid: GridEquivalent


class _SaturationAudit:
    """Process-wide tally of |x2| <= x2_max checks over every produced sample."""

    def __init__(self):
        self._lock = threading.Lock()
        self.samples = 0
        self.violations = 0

    def record(self, x3: np.ndarray, x2_max: float) -> int:
        x2 = saturate(x3, x2_max)
        bad = int(np.count_nonzero(np.abs(x2) > x2_max))
        with self._lock:
            self.samples += int(np.size(x3))
            self.violations += bad
        return bad


SATURATION_AUDIT = _SaturationAudit()


class EventKind(enum.Enum):
    FAULT_APPLY = "FaultApply"
    FAULT_CLEAR = "FaultClear"
    RAMP_END = "RampEnd"


@dataclass(frozen=True)
class Event:
    time: float
    kind: EventKind
    payload: object = None


@dataclass(frozen=True)
class EventSchedule:
    events: tuple[Event, ...] = ()

    def __post_init__(self):
        ev = tuple(self.events)
        times = [e.time for e in ev]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InputError("event times must be strictly increasing")
        open_fault = False
        for e in ev:
            if e.kind is EventKind.FAULT_APPLY:
                open_fault = True
            elif e.kind is EventKind.FAULT_CLEAR:
                if not open_fault:
                    raise InputError("FaultClear without a preceding FaultApply")
                open_fault = False
        object.__setattr__(self, "events", ev)

    @property
    def times(self) -> list[float]:
        return [e.time for e in self.events]


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    direction: str
    x2_max: float
    steps: int = 0
    rejected: int = 0
    max_error: float = 0.0
    step_t: np.ndarray = field(default=None, repr=False)
    step_x: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.float64)
        x = np.asarray(self.x, dtype=np.float64).reshape(-1, 2)
        if self.direction not in ("forward", "reverse"):
            raise InputError("direction must be 'forward' or 'reverse'")
        dt = np.diff(t)
        if (self.direction == "forward" and np.any(dt <= 0)) or (self.direction == "reverse" and np.any(dt >= 0)):
            raise InputError("trajectory times are not strictly monotone")
        if not np.all(np.isfinite(x)):
            raise NonFiniteState("trajectory contains non-finite states")
        SATURATION_AUDIT.record(x[:, 1], self.x2_max)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)

    @property
    def x2(self) -> np.ndarray:
        return saturate(self.x[:, 1], self.x2_max)

    @property
    def final(self) -> RomState:
        return RomState.from_array(self.x[-1])

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("t_s", "x1_rad", "x2_rad_per_s", "x3_rad_per_s"))
            for ti, (x1, x3), x2 in zip(self.t, self.x, self.x2):
                w.writerow((repr(float(ti)), repr(float(x1)), repr(float(x2)), repr(float(x3))))


# --- helpers ----------------------------------------------------------------

def _raise_status(status: int, where: str, reverse: bool = False) -> None:
    if status == kernels.OK:
        return
    if status == kernels.STEP_FAILURE:
        raise StepFailure(f"step size underflow {where}")
    if status == kernels.NON_FINITE:
        raise NonFiniteState(f"state became non-finite {where}")
    if status == kernels.ESCAPED:
        raise DivergenceGuard(f"state left the escape radius {where}")
    raise RuntimeError(f"kernel status {status} {where}")


def _hermite(ts, xs, fs, tq):
    """Cubic Hermite dense output on accepted steps."""
    idx = np.clip(np.searchsorted(ts, tq, side="right") - 1, 0, len(ts) - 2)
    t0, t1 = ts[idx], ts[idx + 1]
    h = t1 - t0
    s = ((tq - t0) / h)[:, None]
    h = h[:, None]
    y0, y1, f0, f1 = xs[idx], xs[idx + 1], fs[idx], fs[idx + 1]
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


def sample_grid(t0: float, t1: float, dt: float, extra=()) -> np.ndarray:
    n = int(math.floor((t1 - t0) / dt + 1e-9))
    grid = np.round(t0 + np.arange(n + 1) * dt, 12)
    pinned = np.array(sorted({t0, t1, *[e for e in extra if t0 <= e <= t1]}))
    keep = np.ones(grid.size, dtype=bool)
    for e in pinned:
        keep &= np.abs(grid - e) > 1e-9
    return np.union1d(grid[keep], pinned)


def _check_inertia(system: RomSystem, seg: Segment, a: float, b: float, dwg: float) -> None:
    ca = coefficients_from_segment(system.pll, system.grid, seg, a, dwg)
    cb = coefficients_from_segment(system.pll, system.grid, seg, b, dwg) if math.isfinite(b) else ca
    if ca.M_eq * cb.M_eq <= 0:
        raise SingularInertia(f"M_eq crosses zero within [{a}, {b}]")


def _run_piece(p, a, b, x, sign, solver: SolverSettings, frozen: bool):
    if solver.method == "rk4":
        return kernels.rk4(p, a, b, x[0], x[1], sign, solver.h, solver.escape_radius,
                           solver.x1_scale, solver.x3_scale, frozen)
    return kernels.rkf45(p, a, b, x[0], x[1], sign, solver.h0, solver.rtol, solver.atol, solver.hmin,
                         solver.hmax, solver.escape_radius, solver.x1_scale, solver.x3_scale, frozen)


# --- public API ---------------------------------------------------------------

def integrate_forward(system: RomSystem, sched: InjectionSchedule, x0: RomState, t0: float, t_end: float,
                      solver: SolverSettings = SolverSettings(), events: EventSchedule | None = None) -> Trajectory:
    """Integrate from ``t0`` to ``t_end``, stopping exactly at every segment boundary and event."""
    if not t_end > t0:
        raise InputError("t_end must exceed t0")
    sched.index_at(t0)
    sched.index_at(t_end)
    event_times = list(events.times) if events else []
    breaks = sorted({t0, t_end, *[b for b in sched.boundaries()[:-1] + event_times if t0 < b < t_end]})
    samples = sample_grid(t0, t_end, solver.sample_dt, breaks)

    x = x0.as_array()
    out_t, out_x = [], []
    step_t, step_x = [], []
    n_acc = n_rej = 0
    max_err = 0.0
    for k, (a, b) in enumerate(zip(breaks, breaks[1:])):
        seg = sched.segment_at(a)
        _check_inertia(system, seg, a, b, sched.domega_g_dt)
        p = segment_params(system.pll, system.grid, seg, sched.domega_g_dt)
        ts, xs, fs, na, nr, me, status = _run_piece(p, a, b, x, 1.0, solver, False)
        _raise_status(status, f"in [{a}, {b}] near t={ts[-1]:.6g}")
        n_acc += na
        n_rej += nr
        max_err = max(max_err, me)
        q = samples[(samples >= a) & (samples <= b)]
        if k > 0:
            q = q[q > a]
        dense = _hermite(ts, xs, fs, q)
        # pin piece end points to the integrator values
        if q.size and q[-1] == b:
            dense[-1] = xs[-1]
        if k == 0 and q.size and q[0] == a:
            dense[0] = xs[0]
        out_t.append(q)
        out_x.append(dense)
        step_t.append(ts if k == 0 else ts[1:])
        step_x.append(xs if k == 0 else xs[1:])
        x = xs[-1]
    return Trajectory(np.concatenate(out_t), np.concatenate(out_x), "forward", system.pll.x2_max,
                      n_acc, n_rej, max_err, np.concatenate(step_t), np.concatenate(step_x))


def _autonomous_params(system: RomSystem, op: Segment) -> np.ndarray:
    if not op.autonomous:
        raise InputError("reverse-time integration needs constant (autonomous) inputs")
    coefficients_from_segment(system.pll, system.grid, op, op.t_start)
    return segment_params(system.pll, system.grid, op)


def integrate_reverse(system: RomSystem, op: Segment, x0: RomState, duration: float,
                      solver: SolverSettings = SolverSettings()) -> Trajectory:
    """Integrate the negated vector field for ``duration`` under frozen inputs.

    Sample times run backwards from ``op.t_start``.
    """
    if not duration > 0:
        raise InputError("duration must be positive")
    p = _autonomous_params(system, op)
    ts, xs, fs, na, nr, me, status = _run_piece(p, 0.0, duration, x0.as_array(), -1.0, solver, True)
    _raise_status(status, f"in reverse time after {ts[-1]:.6g} s", reverse=True)
    q = sample_grid(0.0, duration, solver.sample_dt)
    dense = _hermite(ts, xs, fs, q)
    dense[0], dense[-1] = xs[0], xs[-1]
    return Trajectory(op.t_start - q, dense, "reverse", system.pll.x2_max, na, nr, me,
                      op.t_start - ts, xs)


def flow_endpoints(system: RomSystem, op: Segment, X: np.ndarray, duration: float, sign: float,
                   solver: SolverSettings = SolverSettings(), raise_on_escape: bool = True):
    """Propagate many states for ``duration`` (``sign=-1`` for reverse time)."""
    p = _autonomous_params(system, op)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y, status = kernels.endpoints(p, X, float(duration), float(sign), solver.h0, solver.rtol, solver.atol,
                                  solver.hmin, solver.hmax, solver.escape_radius, solver.x1_scale,
                                  solver.x3_scale)
    if raise_on_escape:
        for st in np.unique(status):
            _raise_status(int(st), f"while propagating {int(np.count_nonzero(status == st))} states")
    ok = status == kernels.OK
    SATURATION_AUDIT.record(Y[ok, 1], system.pll.x2_max)
    return Y, status


def settle_times(system: RomSystem, op: Segment, X: np.ndarray, eq: np.ndarray, radius: float, dwell: float,
                 horizon: float, solver: SolverSettings = SolverSettings()) -> np.ndarray:
    """Entry time into the convergence ball (held for ``dwell``), or -1 when not converged."""
    p = _autonomous_params(system, op)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return kernels.settle_many(p, X, float(eq[0]), float(eq[1]), radius, dwell, horizon, solver.h0,
                               solver.rtol, solver.atol, solver.hmin, math.inf, solver.escape_radius,
                               solver.x1_scale, solver.x3_scale)


# --- fault schedules ------------------------------------------------------------

@dataclass(frozen=True)
class FaultSpec:
    t_apply: float
    t_clear: float
    z_f: complex = 0j
    k_factor: float = 2.0
    i_max: float = 1.0


@dataclass(frozen=True)
class OperatingPoint:
    id_c: float = 1.0
    iq_c: float = 0.0
    vg_dq: complex = 1 + 0j


def nominal_segment(grid: GridEquivalent, op: OperatingPoint, t0: float = 0.0) -> Segment:
    return Segment(t0, op.id_c, op.iq_c, grid.V_g)


def faulted_segment(grid: GridEquivalent, fault: FaultSpec, op: OperatingPoint, t0: float) -> Segment:
    fc = fault_conditions(grid, fault.z_f, op.vg_dq, complex(op.id_c, op.iq_c), fault.k_factor, fault.i_max)
    return Segment(t0, fc.id_c, fc.iq_c, fc.v_f)


def build_schedule(fault: FaultSpec, ramp_rate: float, pre_fault: OperatingPoint, grid: GridEquivalent,
                   t0: float = 0.0, t_end: float = math.inf) -> tuple[EventSchedule, InjectionSchedule]:
    """Pre-fault, fault and ramped recovery segments with the matching events."""
    if not fault.t_clear > fault.t_apply:
        raise InvalidFaultWindow(f"fault clears at {fault.t_clear} s, not after it is applied at {fault.t_apply} s")
    if not fault.t_apply > t0:
        raise InvalidFaultWindow("fault must be applied after the start time")
    if not ramp_rate > 0:
        raise InvalidFaultWindow("ramp rate must be positive")
    pre = nominal_segment(grid, pre_fault, t0)
    during = faulted_segment(grid, fault, pre_fault, fault.t_apply)
    gap = pre_fault.id_c - during.id_c
    segs = [pre, during]
    events = [Event(fault.t_apply, EventKind.FAULT_APPLY, fault.z_f), Event(fault.t_clear, EventKind.FAULT_CLEAR)]
    if gap != 0.0:
        ramp_time = abs(gap) / ramp_rate
        segs.append(Segment(fault.t_clear, during.id_c, pre_fault.iq_c, grid.V_g,
                            did_dt=math.copysign(ramp_rate, gap)))
        t_ramp_end = fault.t_clear + ramp_time
        segs.append(Segment(t_ramp_end, pre_fault.id_c, pre_fault.iq_c, grid.V_g))
        events.append(Event(t_ramp_end, EventKind.RAMP_END, ramp_rate))
    else:
        segs.append(Segment(fault.t_clear, pre_fault.id_c, pre_fault.iq_c, grid.V_g))
    if t_end <= segs[-1].t_start:
        raise InvalidFaultWindow("simulation window ends before the recovery completes")
    return EventSchedule(tuple(events)), InjectionSchedule(tuple(segs), t_end)


def sustained_fault_schedule(fault: FaultSpec, pre_fault: OperatingPoint, grid: GridEquivalent,
                             window: float) -> InjectionSchedule:
    return InjectionSchedule((faulted_segment(grid, fault, pre_fault, 0.0),), window)


__all__ = [
    "SolverSettings", "RomSystem", "Event", "EventKind", "EventSchedule", "Trajectory", "FaultSpec",
    "OperatingPoint", "integrate_forward", "integrate_reverse", "flow_endpoints", "settle_times",
    "build_schedule", "sustained_fault_schedule", "nominal_segment", "faulted_segment", "sample_grid",
    "SATURATION_AUDIT", "M_EQ_EPS",
]
