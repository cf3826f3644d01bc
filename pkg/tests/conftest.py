from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
import pytest

from tlroa.config import ScenarioConfig
from tlroa.integrate import OperatingPoint, RomSystem, nominal_segment
from tlroa.model import GridEquivalent, PllParams
from tlroa.roa import Equilibrium, LyapunovSeed, TlroaBoundary, auto_seed, compute_tlroa, equilibrium_of
from tlroa.units import Bases

BASES = Bases.from_line_voltage(180e6, 690.0, 314.0)
FIT_R, FIT_L = 98.5e-6, 2.17e-6


def grid_pu(mult: float = 1.0) -> GridEquivalent:
    return GridEquivalent(BASES.r_to_pu(FIT_R), BASES.l_to_pu(FIT_L), 1.0, 314.0).scaled(mult)


def system_pu(mult: float = 1.0, kp: float = 0.025, ki: float = 1.5) -> RomSystem:
    return RomSystem(PllParams(kp, ki, 31.4), grid_pu(mult))


@dataclass
class Case:
    cfg: ScenarioConfig
    system: RomSystem
    op: OperatingPoint
    eq: Equilibrium
    seed: LyapunovSeed
    boundaries: dict

    def boundary(self, horizon: float) -> TlroaBoundary:
        if horizon not in self.boundaries:
            self.boundaries[horizon] = compute_tlroa(self.seed, self.eq, horizon, self.cfg.roa())
        return self.boundaries[horizon]


def _case(name: str) -> Case:
    cfg = ScenarioConfig.load(f"builtin:{name}")
    system = cfg.system()
    op = cfg.operating_point()
    eq = equilibrium_of(system, nominal_segment(system.grid, op))
    seed = auto_seed(eq, cfg.roa())
    return Case(cfg, system, op, eq, seed, {})


@pytest.fixture(scope="session")
def case1() -> Case:
    return _case("case1")


@pytest.fixture(scope="session")
def case2() -> Case:
    return _case("case2")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# --- acceptance reporting -------------------------------------------------------------

_CRITERION = re.compile(r"test_criterion_(\d+)")
_outcomes: dict[int, list[str]] = {}


def pytest_collection_modifyitems(config, items):
    """The saturation audit must see every other integration, so it runs last."""
    last = [it for it in items if it.get_closest_marker("run_last")]
    rest = [it for it in items if not it.get_closest_marker("run_last")]
    items[:] = rest + last


def pytest_configure(config):
    config.addinivalue_line("markers", "run_last: run after every other test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = _CRITERION.search(item.name)
    if m and item.module.__name__.endswith("test_acceptance"):
        if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
            _outcomes.setdefault(int(m.group(1)), []).append(rep.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_outcomes):
        res = _outcomes[k]
        ok = all(r == "passed" for r in res)
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} ({len(res)} checks)")
