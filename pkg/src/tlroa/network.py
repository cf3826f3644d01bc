"""Grid equivalent construction: turbine aggregation and impedance-scan fitting."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError, InsufficientData, NonPositiveSlope, ScanFormatError

SCAN_HEADER = ("f_hz", "re_ohm", "im_ohm")


@dataclass(frozen=True)
class ImpedanceScan:
    freqs: np.ndarray
    z: np.ndarray
    reference_node: str = ""

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=np.float64)
        z = np.asarray(self.z, dtype=np.complex128)
        if f.ndim != 1 or f.shape != z.shape:
            raise InputError("scan frequencies and impedances must be 1-D and equally long")
        if f.size and (np.any(f <= 0) or np.any(np.diff(f) <= 0)):
            raise InputError("scan frequencies must be positive and strictly increasing")
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "z", z)

    @classmethod
    def from_points(cls, points, reference_node: str = "") -> "ImpedanceScan":
        f, z = zip(*points) if points else ((), ())
        return cls(np.array(f, dtype=float), np.array(z, dtype=complex), reference_node)

    @classmethod
    def synthetic_rl(cls, r: float, l: float, freqs) -> "ImpedanceScan":
        f = np.asarray(freqs, dtype=float)
        return cls(f, r + 1j * 2.0 * np.pi * f * l, "synthetic R-L")


def read_scan_csv(path, reference_node: str | None = None) -> ImpedanceScan:
    """Read a ``f_hz,re_ohm,im_ohm`` scan file."""
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ScanFormatError(f"{path}:1: empty file, expected header {','.join(SCAN_HEADER)}") from None
        if tuple(h.strip() for h in header) != SCAN_HEADER:
            raise ScanFormatError(
                f"{path}:1: bad header {header!r}, expected {','.join(SCAN_HEADER)}")
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ScanFormatError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            try:
                f, re_, im = (float(c) for c in row)
            except ValueError as exc:
                raise ScanFormatError(f"{path}:{lineno}: {exc}") from None
            rows.append((f, complex(re_, im)))
    try:
        return ImpedanceScan.from_points(rows, reference_node or path.name)
    except InputError as exc:
        raise ScanFormatError(f"{path}: {exc}") from None


def write_scan_csv(scan: ImpedanceScan, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCAN_HEADER)
        for f, z in zip(scan.freqs, scan.z):
            w.writerow((repr(float(f)), repr(float(z.real)), repr(float(z.imag))))


@dataclass(frozen=True)
class PlantAggregation:
    n_turbines: int
    r_Ls: float
    L_s: float
    id_c: float
    iq_c: float

    def __post_init__(self):
        if int(self.n_turbines) != self.n_turbines or self.n_turbines < 1:
            raise InputError("n_turbines must be an integer >= 1")
        if self.r_Ls < 0 or self.L_s <= 0:
            raise InputError("transformer impedance must satisfy r >= 0, L > 0")


@dataclass(frozen=True)
class Aggregated:
    id_eq: float
    iq_eq: float
    r_Ls_eq: float
    L_s_eq: float


def aggregate(p: PlantAggregation) -> Aggregated:
    """N identical turbines in parallel: currents add, transformer impedance divides."""
    n = p.n_turbines
    return Aggregated(n * p.id_c, n * p.iq_c, p.r_Ls / n, p.L_s / n)


@dataclass(frozen=True)
class FitResult:
    r_Lg: float
    L_g: float
    f_corner: float
    slope_m: float
    window: tuple[float, float]
    residual: float
    n_points: int = 0

    def to_json_dict(self) -> dict:
        return {
            "r_lg_ohm": self.r_Lg,
            "l_g_h": self.L_g,
            "f_corner_hz": self.f_corner,
            "slope_ohm_per_hz": self.slope_m,
            "window_hz": [self.window[0], self.window[1]],
            "residual_ohm": self.residual,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


def fit_impedance(scan: ImpedanceScan, f_nominal: float = 50.0, half_window: float = 5.0) -> FitResult:
    """Fit a series R-L to the scan around the PLL nominal frequency.

    The reactance inside the window is fitted by a straight line; its slope
    gives ``L = m / (2 pi)`` and its frequency-axis intercept the corner
    frequency, at which the resistance is read off the scan.
    """
    if half_window <= 0:
        raise InputError("half_window must be positive")
    lo, hi = f_nominal - half_window, f_nominal + half_window
    mask = (scan.freqs >= lo) & (scan.freqs <= hi)
    n = int(mask.sum())
    if n < 3:
        raise InsufficientData(f"{n} scan points in [{lo}, {hi}] Hz, need at least 3")
    f = scan.freqs[mask]
    x = scan.z[mask].imag

    f_mean = f.mean()
    df = f - f_mean
    sxx = float(np.dot(df, df))
    slope = float(np.dot(df, x - x.mean()) / sxx)
    intercept = float(x.mean() - slope * f_mean)
    if not slope > 0:
        raise NonPositiveSlope(f"reactance slope {slope:.3e} ohm/Hz in [{lo}, {hi}] Hz is not inductive")
    resid = x - (intercept + slope * f)
    rms = float(np.sqrt(np.mean(resid * resid)))

    f_c = -intercept / slope
    fs, rs = scan.freqs, scan.z.real
    if f_c < fs[0] or f_c > fs[-1]:
        warnings.warn(f"corner frequency {f_c:.6g} Hz outside scan range; clamping", RuntimeWarning, stacklevel=2)
        f_c_eval = min(max(f_c, fs[0]), fs[-1])
    else:
        f_c_eval = f_c
    r = float(np.interp(f_c_eval, fs, rs))
    return FitResult(r, slope / (2.0 * math.pi), f_c, slope, (lo, hi), rms, n)


@dataclass(frozen=True)
class Referral:
    r: float
    L: float
    v: float | None = None


def referred_to_lv(fit: FitResult | Referral, turns_ratio: float) -> Referral:
    """Refer an HV-side series impedance (and optional voltage) through an ideal transformer."""
    if turns_ratio <= 0:
        raise InputError("turns_ratio must be positive")
    k2 = turns_ratio * turns_ratio
    if isinstance(fit, FitResult):
        return Referral(fit.r_Lg / k2, fit.L_g / k2)
    return Referral(fit.r / k2, fit.L / k2, None if fit.v is None else fit.v / turns_ratio)


def referred_to_hv(ref: Referral, turns_ratio: float) -> Referral:
    if turns_ratio <= 0:
        raise InputError("turns_ratio must be positive")
    k2 = turns_ratio * turns_ratio
    return Referral(ref.r * k2, ref.L * k2, None if ref.v is None else ref.v * turns_ratio)
