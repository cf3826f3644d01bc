"""Scenario files: a TOML tree with an explicit ``units = "si" | "pu"`` tag.

Everything is converted to the aggregated per-unit system once, here.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from .errors import InputError
from .integrate import FaultSpec, OperatingPoint, RomSystem, SolverSettings, nominal_segment
from .model import GridEquivalent, PllParams
from .network import PlantAggregation, aggregate, fit_impedance, read_scan_csv, referred_to_lv
from .roa import RoaSettings
from .units import Bases

DEFAULTS = {
    "plant": {
        "n_turbines": 15,
        "turbine_rating_va": 12e6,
        "v_ll_rms_v": 690.0,
        "omega_0": 314.0,
        "id_c": 1.0,
        "iq_c": 0.0,
    },
    "pll": {"kp": 0.025, "ki": 1.5},
    "grid": {"v_g_pu": 1.0, "impedance_multiplier": 1.0, "include_transformer": False},
    "fault": {"apply_s": 1.5, "clear_s": 1.6, "k_factor": 2.0, "i_max": 1.0, "ramp_pu_per_s": 2.0},
    "solver": {"method": "rkf45", "h": 1e-4, "rtol": 1e-8, "atol": 1e-10, "h0": 1e-3, "hmax": 0.01,
               "sample_dt": 1e-3, "t_end": 5.0, "escape_radius": 1e3},
    "roa": {"horizon_s": 2.25, "n_seeds": 256, "max_arc": 0.05, "max_depth": 8, "q_diag": [1.0, 1.0],
            "initial_half_width": 0.2, "max_halvings": 10, "conv_radius": 1e-3, "conv_dwell_s": 0.1,
            "conv_horizon_s": 1000.0, "rtol": 1e-10, "atol": 1e-12, "hmax": 0.05, "x3_scale": 1.0},
    "cct": {"window_s": 5.0, "resolution_s": 1e-3},
    "output": {"dir": "out"},
}

_UNIT_KEYS = {
    "si": {"plant": {"transformer_r_ohm", "transformer_l_h"},
           "grid": {"r_lg_ohm", "l_g_h"}, "fault": {"z_f_ohm"}},
    "pu": {"plant": {"transformer_r_pu", "transformer_x_pu"},
           "grid": {"r_lg_pu", "x_lg_pu"}, "fault": {"z_f_pu"}},
}
_SCAN_KEYS = {"scan_file", "f_nominal_hz", "half_window_hz", "turns_ratio"}
_TABLES = ("plant", "pll", "grid", "fault", "solver", "roa", "cct", "output")


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def sha256_of(obj) -> str:
    return hashlib.sha256(_canonical(obj).encode()).hexdigest()


@dataclass(frozen=True)
class ScenarioConfig:
    data: dict
    base_dir: Path = Path(".")

    # --- construction --------------------------------------------------------------
    @classmethod
    def from_dict(cls, raw: dict, base_dir=".") -> "ScenarioConfig":
        raw = copy.deepcopy(raw)
        units = raw.get("units")
        if units not in ("si", "pu"):
            raise InputError('config needs units = "si" or "pu"')
        unknown = set(raw) - {"units", "name", *_TABLES}
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        data = {"units": units, "name": str(raw.get("name", ""))}
        for tbl in _TABLES:
            section = raw.get(tbl, {})
            if not isinstance(section, dict):
                raise InputError(f"[{tbl}] must be a table")
            merged = {**copy.deepcopy(DEFAULTS.get(tbl, {})), **section}
            data[tbl] = merged
        cfg = cls(data, Path(base_dir))
        cfg._validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        path = str(path)
        if path.startswith("builtin:"):
            name = path.split(":", 1)[1]
            res = resources.files("tlroa") / "data" / f"{name}.toml"
            if not res.is_file():
                raise InputError(f"no built-in scenario {name!r}")
            return cls.from_dict(tomllib.loads(res.read_text()), ".")
        p = Path(path)
        if not p.is_file():
            raise InputError(f"config file {p} does not exist")
        try:
            raw = tomllib.loads(p.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise InputError(f"{p}: {exc}") from None
        return cls.from_dict(raw, p.parent)

    def dumps(self) -> str:
        return tomli_w.dumps(self.data)

    def _validate(self) -> None:
        d = self.data
        other = "pu" if d["units"] == "si" else "si"
        for tbl, keys in _UNIT_KEYS[other].items():
            clash = keys & set(d[tbl])
            if clash:
                raise InputError(f"[{tbl}] keys {sorted(clash)} do not match units = {d['units']!r}")
        g = d["grid"]
        mine = _UNIT_KEYS[d["units"]]["grid"]
        inline = mine & set(g)
        scan = _SCAN_KEYS & set(g)
        if bool(inline) == bool(scan):
            raise InputError("[grid] needs exactly one source: inline impedance or scan_file")
        if inline and inline != mine:
            raise InputError(f"[grid] inline source needs {sorted(mine)}")
        if scan:
            if "scan_file" not in g:
                raise InputError("[grid] scan settings given without scan_file")
            if not self.scan_path().is_file():
                raise InputError(f"scan file {self.scan_path()} does not exist")
        f = d["fault"]
        if not f["clear_s"] > f["apply_s"]:
            raise InputError(f"fault clear time {f['clear_s']} s must be after apply time {f['apply_s']} s")
        if not f["apply_s"] > 0 or not d["solver"]["t_end"] > f["clear_s"]:
            raise InputError("fault window must lie inside (0, t_end)")
        if not f["ramp_pu_per_s"] > 0 or not f["i_max"] > 0:
            raise InputError("ramp rate and i_max must be positive")
        if d["units"] == "si" and not (set(_UNIT_KEYS["si"]["fault"]) & set(f)):
            f.setdefault("z_f_ohm", [0.0, 0.0])
        if d["units"] == "pu":
            f.setdefault("z_f_pu", [0.0, 0.0])
        # build once so every numeric constraint is checked at load time
        self.system()
        self.solver()
        self.roa()

    # --- derived objects ------------------------------------------------------------
    def scan_path(self) -> Path:
        p = Path(self.data["grid"]["scan_file"])
        return p if p.is_absolute() else self.base_dir / p

    def bases(self) -> Bases:
        pl = self.data["plant"]
        return Bases.from_line_voltage(pl["n_turbines"] * pl["turbine_rating_va"], pl["v_ll_rms_v"], pl["omega_0"])

    def aggregation(self) -> PlantAggregation:
        pl = self.data["plant"]
        b = self.bases()
        if self.data["units"] == "si":
            r = pl.get("transformer_r_ohm", 0.0)
            L = pl.get("transformer_l_h", 1e-12)
        else:
            # per-turbine pu on the turbine base -> ohms
            z_wt = b.z_base * pl["n_turbines"]
            r = pl.get("transformer_r_pu", 0.0) * z_wt
            L = pl.get("transformer_x_pu", 1e-12) * z_wt / pl["omega_0"]
        return PlantAggregation(int(pl["n_turbines"]), r, L, pl["id_c"], pl["iq_c"])

    def operating_point(self) -> OperatingPoint:
        agg = aggregate(self.aggregation())
        n = self.data["plant"]["n_turbines"]
        # aggregated currents on the turbine base -> plant base
        return OperatingPoint(agg.id_eq / n, agg.iq_eq / n, complex(self.data["grid"]["v_g_pu"], 0.0))

    def fit(self):
        g = self.data["grid"]
        return fit_impedance(read_scan_csv(self.scan_path()), g.get("f_nominal_hz", 50.0),
                             g.get("half_window_hz", 5.0))

    def grid_ohm(self) -> tuple[float, float]:
        """Series grid impedance in SI (ohm, henry) before the multiplier."""
        g = self.data["grid"]
        b = self.bases()
        if "scan_file" in g:
            ref = referred_to_lv(self.fit(), g.get("turns_ratio", 1.0))
            return ref.r, ref.L
        if self.data["units"] == "si":
            return g["r_lg_ohm"], g["l_g_h"]
        return g["r_lg_pu"] * b.z_base, g["x_lg_pu"] * b.z_base / b.omega_0

    def grid(self) -> GridEquivalent:
        g = self.data["grid"]
        b = self.bases()
        r, L = self.grid_ohm()
        if g["include_transformer"]:
            agg = aggregate(self.aggregation())
            r, L = r + agg.r_Ls_eq, L + agg.L_s_eq
        m = g["impedance_multiplier"]
        if not m > 0:
            raise InputError("impedance_multiplier must be positive")
        return GridEquivalent(b.r_to_pu(r) * m, b.l_to_pu(L) * m, g["v_g_pu"], b.omega_0)

    def pll(self) -> PllParams:
        p = self.data["pll"]
        x2_max = p.get("x2_max", 0.1 * self.data["plant"]["omega_0"])
        return PllParams(p["kp"], p["ki"], x2_max)

    def system(self) -> RomSystem:
        return RomSystem(self.pll(), self.grid())

    def fault(self, t_apply: float | None = None, t_clear: float | None = None) -> FaultSpec:
        f = self.data["fault"]
        if self.data["units"] == "si":
            zr, zi = f["z_f_ohm"]
            z_f = self.bases().z_to_pu(complex(zr, zi))
        else:
            zr, zi = f["z_f_pu"]
            z_f = complex(zr, zi)
        return FaultSpec(f["apply_s"] if t_apply is None else t_apply, f["clear_s"] if t_clear is None else t_clear,
                         z_f, f["k_factor"], f["i_max"])

    def ramp_rate(self) -> float:
        return self.data["fault"]["ramp_pu_per_s"]

    def solver(self) -> SolverSettings:
        s = self.data["solver"]
        return SolverSettings(method=s["method"], h=s["h"], rtol=s["rtol"], atol=s["atol"], h0=s["h0"],
                              hmax=s["hmax"], sample_dt=s["sample_dt"], escape_radius=s["escape_radius"],
                              x3_scale=self.data["roa"]["x3_scale"])

    def t_end(self) -> float:
        return self.data["solver"]["t_end"]

    def roa(self) -> RoaSettings:
        r = self.data["roa"]
        s = self.data["solver"]
        solver = SolverSettings(rtol=r["rtol"], atol=r["atol"], h0=s["h0"], hmax=r["hmax"],
                                sample_dt=s["sample_dt"], escape_radius=s["escape_radius"], x3_scale=r["x3_scale"])
        return RoaSettings(horizon=r["horizon_s"], n_seeds=int(r["n_seeds"]), max_arc=r["max_arc"],
                           max_depth=int(r["max_depth"]), q_diag=tuple(r["q_diag"]),
                           initial_half_width=r["initial_half_width"], max_halvings=int(r["max_halvings"]),
                           conv_radius=r["conv_radius"], conv_dwell=r["conv_dwell_s"],
                           conv_horizon=r["conv_horizon_s"], solver=solver)

    def post_fault_segment(self):
        return nominal_segment(self.grid(), self.operating_point())

    # --- hashing -------------------------------------------------------------------
    def config_hash(self) -> str:
        return sha256_of(self.data)

    def regime_hash(self) -> str:
        """Identifies the post-disturbance regime and boundary settings a TLRoA belongs to."""
        g = self.grid()
        p = self.pll()
        op = self.operating_point()
        return sha256_of({
            "pll": [p.kp, p.ki, p.x2_max],
            "grid": [g.r_Lg, g.L_g, g.V_g, g.omega_0, g.omega_g],
            "op": [op.id_c, op.iq_c, op.vg_dq.real, op.vg_dq.imag],
            "roa": {k: v for k, v in self.data["roa"].items() if k != "horizon_s"},
        })


def finite_or_raise(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise InputError(f"{what} must be finite")
    return value
