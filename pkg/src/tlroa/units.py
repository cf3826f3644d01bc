"""Per-unit bases for the aggregated converter."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InputError


@dataclass(frozen=True)
class Bases:
    """Aggregated converter base.

    ``s_base`` is the three-phase rating (VA) and ``v_base`` the peak phase
    voltage (V), e.g. ``690 * sqrt(2/3)``. Currents are peak phase amperes.
    """

    s_base: float
    v_base: float
    omega_0: float = 314.0

    def __post_init__(self):
        if self.s_base <= 0 or self.v_base <= 0 or self.omega_0 <= 0:
            raise InputError(f"bases must be positive: {self}")

    @classmethod
    def from_line_voltage(cls, s_base: float, v_ll_rms: float, omega_0: float = 314.0) -> "Bases":
        return cls(s_base, v_ll_rms * math.sqrt(2.0 / 3.0), omega_0)

    @property
    def i_base(self) -> float:
        return 2.0 * self.s_base / (3.0 * self.v_base)

    @property
    def z_base(self) -> float:
        return self.v_base / self.i_base

    def r_to_pu(self, ohm: float) -> float:
        return ohm / self.z_base

    def l_to_pu(self, henry: float) -> float:
        """Inductance as ``L / Z_base`` (s), so ``omega * L`` stays per unit."""
        return henry / self.z_base

    def z_to_pu(self, z: complex) -> complex:
        return z / self.z_base

    def v_to_pu(self, volt: float) -> float:
        return volt / self.v_base
