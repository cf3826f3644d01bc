import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import solve_continuous_lyapunov

from tlroa import geometry
from tlroa.errors import (ImmediateExit, InputError, NoConvergence, NotHurwitz, RefinementDepthExceeded)
from tlroa.integrate import FaultSpec, OperatingPoint, nominal_segment
from tlroa.model import RomState, rom_rhs
from tlroa.roa import (CctResult, RoaSettings, TlroaBoundary, brute_force_roa, compute_tlroa,
                       critical_clearing_time, equilibrium_of, find_equilibrium, jacobian, read_boundary_csv,
                       reaches_seed, seed_level_set, solve_lyapunov)

from conftest import system_pu


def test_jacobian_matches_finite_differences(case1):
    c, pll = case1.eq.coeffs, case1.system.pll
    x = RomState(0.7, 4.0)
    J = jacobian(x, c, pll)
    h = 1e-6
    for j, dx in enumerate(([h, 0.0], [0.0, h])):
        fp = np.array(rom_rhs(RomState(x.x1 + dx[0], x.x3 + dx[1]), c, pll))
        fm = np.array(rom_rhs(RomState(x.x1 - dx[0], x.x3 - dx[1]), c, pll))
        np.testing.assert_allclose(J[:, j], (fp - fm) / (2 * h), rtol=1e-6, atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), c=st.floats(-5, 5), d=st.floats(-5, 5))
def test_lyapunov_matches_scipy(a, b, c, d):
    A = np.array([[a, b], [c, d]])
    tr, det = np.trace(A), np.linalg.det(A)
    if not (tr < 0 and det > 0):
        with pytest.raises(NotHurwitz):
            solve_lyapunov(A)
        return
    if tr > -1e-3 or det < 1e-3:
        return  # nearly marginal; P is ill-conditioned
    P = solve_lyapunov(A)
    ref = solve_continuous_lyapunov(A.T, -np.eye(2))
    np.testing.assert_allclose(P, ref, rtol=1e-6, atol=1e-9 * np.max(np.abs(ref)))


def test_equilibrium_branch_and_stability(case1):
    eq = case1.eq
    assert eq.stability == "stable"
    assert eq.branch_index == 0
    assert eq.state.x3 == 0.0
    assert eq.residual_norm < 1e-12
    assert np.all(np.real(eq.eigenvalues) < 0)


def test_saddle_is_reported_not_relabelled(case1):
    eq = case1.eq
    sad = find_equilibrium(eq.coeffs, case1.system.pll, RomState(math.pi - eq.state.x1 + 0.01, 0.0))
    assert sad.state.x1 == pytest.approx(math.pi - eq.state.x1)
    assert sad.stability == "saddle"


def test_no_equilibrium_when_torque_exceeds_coupling():
    sys_ = system_pu(mult=20.0)
    with pytest.raises(NoConvergence):
        equilibrium_of(sys_, nominal_segment(sys_.grid, OperatingPoint()))


def test_seed_points_on_level_set(case1):
    seed = case1.seed
    np.testing.assert_allclose(seed.value(seed.seed_points), seed.level_c, rtol=1e-12)
    with pytest.raises(InputError):
        seed_level_set(case1.eq, seed.P, -1.0, 16, verify=False)
    with pytest.raises(InputError):
        seed_level_set(case1.eq, seed.P, seed.level_c, 3, verify=False)


def test_seed_is_certified(case1):
    seed, eq = case1.seed, case1.eq
    f = np.array([rom_rhs(RomState(*p), eq.coeffs, case1.system.pll) for p in seed.seed_points])
    vdot = 2 * np.einsum("ij,jk,ik->i", seed.seed_points - eq.x, seed.P, f)
    assert np.all(vdot < 0)
    half_width = math.sqrt(seed.level_c * np.linalg.inv(seed.P)[0, 0])
    assert 0.0 < half_width <= 0.2


def test_zero_horizon_is_the_seed_ellipse(case1):
    b = compute_tlroa(case1.seed, case1.eq, 0.0, case1.cfg.roa())
    np.testing.assert_allclose(case1.seed.value(b.vertices), case1.seed.level_c, rtol=1e-9)
    np.testing.assert_allclose(b.vertices[: len(case1.seed.seed_points)][:1], case1.seed.seed_points[:1], atol=1e-9)


def test_boundary_properties(case1):
    b = case1.boundary(2.25)
    assert b.contains(case1.eq.state)
    assert geometry.is_simple(b.vertices)
    assert b.stats["max_gap"] <= case1.cfg.roa().max_arc
    assert b.area > geometry.area(case1.seed.seed_points)


def test_refinement_inserts_points(case1):
    st_ = RoaSettings(max_arc=0.002, solver=case1.cfg.roa().solver)
    b = compute_tlroa(case1.seed, case1.eq, 2.25, st_)
    assert b.stats["n_inserted"] > 0
    assert b.stats["max_gap"] <= 0.002
    assert np.all(np.diff(b.angles) > 0)


def test_refinement_depth_exceeded_keeps_partial(case1):
    st_ = RoaSettings(max_arc=1e-4, max_depth=1, solver=case1.cfg.roa().solver)
    with pytest.raises(RefinementDepthExceeded) as info:
        compute_tlroa(case1.seed, case1.eq, 2.25, st_)
    assert isinstance(info.value.partial, TlroaBoundary)
    assert info.value.diagnostics["max_depth"] == 1


def test_boundary_csv_closed_round_trip(case1, tmp_path):
    b = case1.boundary(2.25)
    p = tmp_path / "b.csv"
    b.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "x1_rad,x3_rad_per_s"
    assert lines[1] == lines[-1]
    np.testing.assert_array_equal(read_boundary_csv(p), b.vertices)
    side = b.sidecar()
    assert set(side) == {"horizon_s", "equilibrium", "seed_settings", "refinement_stats"}


def test_reaches_seed_oracle(case1):
    b = case1.boundary(1.25)
    assert np.all(reaches_seed(case1.seed, case1.eq, b.vertices, 1.25 + 1e-6, case1.cfg.roa(), rel_tol=1e-5))


def test_cct_never_exits_for_mild_fault(case1):
    mild = FaultSpec(0.0, 5.0, z_f=complex(1e9, 0.0), k_factor=0.0, i_max=1.0)
    res = critical_clearing_time(case1.system, case1.op, mild, case1.boundary(2.25))
    assert res.never_exits
    assert res.to_json_dict() == {"cct_s": "infinite", "exit_point": None}


def test_cct_immediate_exit(case1):
    b = case1.boundary(2.25)
    far = TlroaBoundary(b.vertices + [10.0, 0.0], 2.25, b.equilibrium, b.seed)
    with pytest.raises(ImmediateExit):
        critical_clearing_time(case1.system, case1.op, FaultSpec(0.0, 5.0), far)


def test_cct_bisection_resolution(case1):
    b = case1.boundary(2.25)
    res = critical_clearing_time(case1.system, case1.op, FaultSpec(0.0, 5.0), b, resolution=1e-3)
    assert isinstance(res, CctResult) and 0 < res.cct_s < 5
    assert geometry.edge_distance(b.vertices, np.array([res.exit_point]))[0] < 1e-2
    assert not b.contains(res.exit_point)


def test_oracle_tiny_box_all_converged(case1):
    e = case1.eq.x
    box = (e[0] - 1e-3, e[0] + 1e-3, e[1] - 1e-3, e[1] + 1e-3)
    grid = brute_force_roa(case1.eq, box, (3, 3), 200.0, case1.cfg.roa())
    assert grid.converged.all()


def test_oracle_parallel_matches_serial(case1):
    e = case1.eq.x
    box = (e[0] - 1.0, e[0] + 1.0, e[1] - 1.0, e[1] + 1.0)
    a = brute_force_roa(case1.eq, box, (5, 4), 200.0, case1.cfg.roa(), workers=1)
    b = brute_force_roa(case1.eq, box, (5, 4), 200.0, case1.cfg.roa(), workers=3)
    np.testing.assert_array_equal(a.converged, b.converged)
    np.testing.assert_array_equal(a.settle_time, b.settle_time)


@pytest.mark.parametrize("box", [(0.2, 0.2, -1.0, 1.0), (1.0, 2.0, -1.0, 1.0)], ids=["empty", "excludes-eq"])
def test_oracle_box_validation(case1, box):
    with pytest.raises(InputError):
        brute_force_roa(case1.eq, box, (3, 3), 10.0, case1.cfg.roa())
