"""Reduced-order PLL dynamics of an aggregated wind power plant.

The state is ``(x1, x3)``: the PLL angle and its unsaturated rate. The
saturated rate ``x2 = x2_max * tanh(x3 / x2_max)`` is algebraic.

All quantities are per unit on the aggregated converter base, except angles
(rad), angular frequencies (rad/s) and inductances, which are carried as
``L / Z_base`` (seconds) so that ``omega * L`` is a per-unit reactance.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DegenerateNetwork, InputError, NonConvergent, OutOfWindow, SingularInertia

M_EQ_EPS = 1e-9


def saturate(x3, x2_max):
    """Map the raw PLL rate onto the saturated rate (works on arrays)."""
    return x2_max * np.tanh(np.asarray(x3, dtype=np.float64) / x2_max)


@dataclass(frozen=True)
class RomState:
    x1: float
    x3: float

    def __post_init__(self):
        if not (math.isfinite(self.x1) and math.isfinite(self.x3)):
            raise InputError(f"non-finite state ({self.x1}, {self.x3})")

    def x2(self, x2_max: float) -> float:
        return x2_max * math.tanh(self.x3 / x2_max)

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x3])

    @classmethod
    def from_array(cls, a) -> "RomState":
        return cls(float(a[0]), float(a[1]))


@dataclass(frozen=True)
class PllParams:
    kp: float
    ki: float
    x2_max: float = 31.4

    def __post_init__(self):
        if not (self.kp > 0 and self.ki > 0 and self.x2_max > 0):
            raise InputError(f"PLL parameters must be positive: {self}")


@dataclass(frozen=True)
class GridEquivalent:
    """Thevenin source behind a series R-L, per unit (``L_g`` in pu*s)."""

    r_Lg: float
    L_g: float
    V_g: float = 1.0
    omega_0: float = 314.0
    omega_g: float | None = None

    def __post_init__(self):
        if self.omega_g is None:
            object.__setattr__(self, "omega_g", self.omega_0)
        if self.r_Lg < 0 or self.L_g <= 0 or self.V_g <= 0 or self.omega_0 <= 0:
            raise InputError(f"invalid grid equivalent: {self}")

    @property
    def z_g(self) -> complex:
        return complex(self.r_Lg, self.omega_0 * self.L_g)

    def scaled(self, factor: float) -> "GridEquivalent":
        """Same source with the series impedance multiplied by ``factor``."""
        return GridEquivalent(self.r_Lg * factor, self.L_g * factor, self.V_g, self.omega_0, self.omega_g)


@dataclass(frozen=True)
class Segment:
    """One affine piece of the converter injection.

    Currents and the retained voltage are ``value + slope * (t - t_start)``.
    """

    t_start: float
    id_c: float
    iq_c: float
    v_f: float
    did_dt: float = 0.0
    diq_dt: float = 0.0
    dv_f_dt: float = 0.0

    def at(self, t: float) -> tuple[float, float, float]:
        dt = t - self.t_start
        return (self.id_c + self.did_dt * dt, self.iq_c + self.diq_dt * dt, self.v_f + self.dv_f_dt * dt)

    @property
    def autonomous(self) -> bool:
        return self.did_dt == 0.0 and self.diq_dt == 0.0 and self.dv_f_dt == 0.0


@dataclass(frozen=True)
class InjectionSchedule:
    segments: tuple[Segment, ...]
    t_end: float
    domega_g_dt: float = 0.0
    _starts: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise InputError("schedule needs at least one segment")
        starts = tuple(s.t_start for s in segs)
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise InputError(f"segment start times must be strictly increasing: {starts}")
        if self.t_end <= starts[-1]:
            raise InputError("schedule must end after its last segment starts")
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "_starts", starts)

    @classmethod
    def constant(cls, id_c: float, iq_c: float, v_f: float, t0: float = 0.0, t_end: float = math.inf) -> "InjectionSchedule":
        return cls((Segment(t0, id_c, iq_c, v_f),), t_end)

    @property
    def t_start(self) -> float:
        return self._starts[0]

    def index_at(self, t: float) -> int:
        if t < self._starts[0] or t > self.t_end:
            raise OutOfWindow(f"t={t} outside schedule window [{self._starts[0]}, {self.t_end}]")
        return bisect.bisect_right(self._starts, t) - 1

    def segment_at(self, t: float) -> Segment:
        return self.segments[self.index_at(t)]

    def boundaries(self) -> list[float]:
        return list(self._starts) + [self.t_end]


@dataclass(frozen=True)
class RomCoefficients:
    M_eq: float
    T_m_eq: float
    T_e_amp_ki: float
    T_e_amp_kp: float
    T_e_const: float
    D_eq_const: float
    D_eq_cos_amp: float

    def T_e(self, x1: float) -> float:
        return (self.T_e_amp_ki + self.T_e_amp_kp) * math.sin(x1) + self.T_e_const

    def D(self, x1: float) -> float:
        return self.D_eq_cos_amp * math.cos(x1) + self.D_eq_const


def coefficients_from_segment(pll: PllParams, grid: GridEquivalent, seg: Segment, t: float,
                              domega_g_dt: float = 0.0, eps: float = M_EQ_EPS) -> RomCoefficients:
    kp, ki = pll.kp, pll.ki
    r, L, wg = grid.r_Lg, grid.L_g, grid.omega_g
    id_c, iq_c, v_f = seg.at(t)
    did, diq, dvf = seg.did_dt, seg.diq_dt, seg.dv_f_dt

    m_eq = 1.0 - kp * L * id_c
    if abs(m_eq) < eps:
        raise SingularInertia(f"M_eq={m_eq:.3e} at t={t}")
    # affine pieces: second derivatives vanish
    t_m = kp * (r * diq + L * did * wg + L * id_c * domega_g_dt) + ki * (r * iq_c + L * diq + L * id_c * wg)
    return RomCoefficients(
        M_eq=m_eq,
        T_m_eq=t_m,
        T_e_amp_ki=ki * v_f,
        T_e_amp_kp=kp * dvf,
        T_e_const=m_eq * domega_g_dt,
        D_eq_const=-kp * L * did - ki * L * id_c,
        D_eq_cos_amp=kp * v_f,
    )


def compute_coefficients(pll: PllParams, grid: GridEquivalent, sched: InjectionSchedule, t: float,
                         eps: float = M_EQ_EPS) -> RomCoefficients:
    """Evaluate the equivalent inertia, torques and damping at time ``t``."""
    seg = sched.segment_at(t)
    return coefficients_from_segment(pll, grid, seg, t, sched.domega_g_dt, eps)


def rom_rhs(state: RomState, coeffs: RomCoefficients, pll: PllParams) -> tuple[float, float]:
    x1, x3 = state.x1, state.x3
    x2 = pll.x2_max * math.tanh(x3 / pll.x2_max)
    dx3 = (coeffs.T_m_eq - coeffs.T_e(x1) - coeffs.D(x1) * x2) / coeffs.M_eq
    return x2, dx3


N_PARAMS = 14


def segment_params(pll: PllParams, grid: GridEquivalent, seg: Segment, domega_g_dt: float = 0.0) -> np.ndarray:
    """Flat parameter vector consumed by the integration kernels."""
    return np.array([
        pll.kp, pll.ki, pll.x2_max,
        grid.r_Lg, grid.L_g, grid.omega_g, domega_g_dt,
        seg.t_start, seg.id_c, seg.iq_c, seg.did_dt, seg.diq_dt, seg.v_f, seg.dv_f_dt,
    ], dtype=np.float64)


# --- fault-period algebra ---------------------------------------------------

class FaultConditions(NamedTuple):
    v_f: float
    id_c: float
    iq_c: float
    iterations: int


def lvrt_currents(v_pcc: float, k_factor: float, i_max: float, iq_limit: float = 1.0) -> tuple[float, float]:
    """Reactive-priority current split during ride-through."""
    if i_max <= 0:
        raise InputError("i_max must be positive")
    iq = min(k_factor * v_pcc, iq_limit, i_max)
    iq = max(iq, -min(iq_limit, i_max))
    return math.sqrt(max(i_max * i_max - iq * iq, 0.0)), iq


def fault_conditions(grid: GridEquivalent, z_f: complex, vg_dq: complex, i_c: complex, k_factor: float,
                     i_max: float, tol: float = 1e-10, max_iter: int = 100, relax: float = 0.5) -> FaultConditions:
    """Retained voltage and injected currents during a fault at the turbine terminal.

    The retained voltage depends on the injected current and the reactive
    current depends on the retained voltage; the pair is resolved by damped
    fixed-point iteration starting from the supplied ``i_c``.
    """
    if i_max <= 0:
        raise InputError("i_max must be positive")
    z_g = grid.z_g
    z_sum = z_g + z_f
    if z_sum == 0:
        raise DegenerateNetwork("Z_g + Z_f = 0")
    divider = abs(z_f / z_sum) if math.isfinite(abs(z_f)) else 1.0

    def retained(i: complex) -> float:
        return divider * abs(vg_dq + i * z_g)

    v = retained(i_c)
    for it in range(1, max_iter + 1):
        id_c, iq_c = lvrt_currents(v, k_factor, i_max)
        v_new = retained(complex(id_c, iq_c))
        if abs(v_new - v) < tol:
            id_c, iq_c = lvrt_currents(v_new, k_factor, i_max)
            return FaultConditions(v_new, id_c, iq_c, it)
        v = v + relax * (v_new - v)
    raise NonConvergent(f"retained-voltage iteration did not converge in {max_iter} iterations")


def rom_rhs_array(X: np.ndarray, coeffs: RomCoefficients, pll: PllParams) -> np.ndarray:
    """Vectorised :func:`rom_rhs` over rows ``(x1, x3)``."""
    X = np.atleast_2d(X)
    x1, x3 = X[:, 0], X[:, 1]
    x2 = pll.x2_max * np.tanh(x3 / pll.x2_max)
    t_e = (coeffs.T_e_amp_ki + coeffs.T_e_amp_kp) * np.sin(x1) + coeffs.T_e_const
    d = coeffs.D_eq_cos_amp * np.cos(x1) + coeffs.D_eq_const
    return np.column_stack([x2, (coeffs.T_m_eq - t_e - d * x2) / coeffs.M_eq])
