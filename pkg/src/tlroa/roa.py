"""Time-limited regions of attraction by reverse-time propagation.

A small ellipse around the stable equilibrium, taken from the Lyapunov
function of the linearisation and certified against the nonlinear flow, is
propagated backwards in time. Its image after ``t`` seconds bounds a set of
states that reach the ellipse, and hence the equilibrium, within ``t``.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry
from .errors import (ComputationError, ImmediateExit, InputError, NoConvergence, NotHurwitz,
                     RefinementDepthExceeded, SeedNotAttracted)
from .integrate import (FaultSpec, OperatingPoint, RomSystem, SolverSettings, flow_endpoints,
                        integrate_forward, nominal_segment, settle_times, sustained_fault_schedule)
from .model import (PllParams, RomCoefficients, RomState, Segment, coefficients_from_segment, rom_rhs,
                    rom_rhs_array)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class RoaSettings:
    horizon: float = 2.25
    n_seeds: int = 256
    max_arc: float = 0.05
    max_depth: int = 8
    q_diag: tuple[float, float] = (1.0, 1.0)
    initial_half_width: float = 0.2
    max_halvings: int = 10
    conv_radius: float = 1e-3
    conv_dwell: float = 0.1
    conv_horizon: float = 1000.0
    edge_tol: float = 1e-9
    solver: SolverSettings = field(default_factory=lambda: SolverSettings(rtol=1e-10, atol=1e-12, hmax=0.05))

    def __post_init__(self):
        if self.horizon < 0:
            raise InputError("horizon must be non-negative")
        if self.n_seeds < 4:
            raise InputError("need at least 4 seed points")
        if not (self.max_arc > 0 and self.initial_half_width > 0 and self.conv_radius > 0):
            raise InputError("roa settings must be positive")


# --- equilibria -------------------------------------------------------------------

@dataclass(frozen=True)
class Equilibrium:
    state: RomState
    residual_norm: float
    branch_index: int
    stability: str
    eigenvalues: tuple[complex, complex]
    system: RomSystem | None = field(default=None, compare=False)
    op: Segment | None = field(default=None, compare=False)

    @property
    def x(self) -> np.ndarray:
        return self.state.as_array()

    @property
    def coeffs(self) -> RomCoefficients:
        return coefficients_from_segment(self.system.pll, self.system.grid, self.op, self.op.t_start)


def jacobian(at: RomState, coeffs: RomCoefficients, pll: PllParams) -> np.ndarray:
    """Analytic Jacobian of ``(dx1/dt, dx3/dt)`` with respect to ``(x1, x3)``."""
    x1, x3 = at.x1, at.x3
    u = x3 / pll.x2_max
    sech2 = 1.0 - math.tanh(u) ** 2
    x2 = pll.x2_max * math.tanh(u)
    a = coeffs.T_e_amp_ki + coeffs.T_e_amp_kp
    d = coeffs.D(x1)
    df3_dx1 = (-a * math.cos(x1) + coeffs.D_eq_cos_amp * math.sin(x1) * x2) / coeffs.M_eq
    df3_dx3 = -d * sech2 / coeffs.M_eq
    return np.array([[0.0, sech2], [df3_dx1, df3_dx3]])


def classify(eigs) -> str:
    re = np.real(eigs)
    tol = 1e-12 * max(1.0, float(np.max(np.abs(eigs))))
    if np.any(np.abs(re) <= tol):
        return "degenerate"
    if np.all(re < 0):
        return "stable"
    if np.all(re > 0):
        return "unstable"
    return "saddle"


def find_equilibrium(coeffs: RomCoefficients, pll: PllParams, guess: RomState, tol: float = 1e-9,
                     max_iter: int = 100, system: RomSystem | None = None, op: Segment | None = None) -> Equilibrium:
    """Damped Newton iteration on the vector field.

    Saddles and other non-stable points are returned with their
    classification, never relabelled.
    """
    x = guess.as_array().astype(np.float64)

    def resid(v):
        return np.array(rom_rhs(RomState(v[0], v[1]), coeffs, pll))

    r = resid(x)
    for _ in range(max_iter):
        nr = float(np.max(np.abs(r)))
        if nr <= 1e-15:
            break
        J = jacobian(RomState(x[0], x[1]), coeffs, pll)
        det = np.linalg.det(J)
        if not math.isfinite(det) or abs(det) < 1e-300:
            raise NoConvergence(f"singular Jacobian at x={x}")
        dx = np.linalg.solve(J, -r)
        lam = 1.0
        for _ in range(30):
            xn = x + lam * dx
            rn = resid(xn)
            if np.max(np.abs(rn)) < nr or lam < 1e-6:
                break
            lam *= 0.5
        if np.max(np.abs(xn - x)) <= 1e-15 * max(1.0, np.max(np.abs(x))):
            x, r = xn, rn
            break
        x, r = xn, rn
    res = float(np.max(np.abs(r)))
    if not res <= tol:
        raise NoConvergence(f"Newton iteration stalled with residual {res:.3e}")
    eigs = np.linalg.eigvals(jacobian(RomState(x[0], x[1]), coeffs, pll))
    return Equilibrium(RomState(float(x[0]), float(x[1])), res, int(round(x[0] / TWO_PI)), classify(eigs),
                       (complex(eigs[0]), complex(eigs[1])), system, op)


def equilibrium_of(system: RomSystem, op: Segment, guess: RomState | None = None, **kw) -> Equilibrium:
    """Equilibrium of the autonomous regime ``op``; the default guess is the stable sine branch."""
    coeffs = coefficients_from_segment(system.pll, system.grid, op, op.t_start)
    if guess is None:
        ratio = (coeffs.T_m_eq - coeffs.T_e_const) / (coeffs.T_e_amp_ki + coeffs.T_e_amp_kp)
        if abs(ratio) > 1:
            raise NoConvergence(f"no equilibrium: torque ratio {ratio:.4f} exceeds 1")
        guess = RomState(math.asin(ratio), 0.0)
    return find_equilibrium(coeffs, system.pll, guess, system=system, op=op, **kw)


# --- Lyapunov ----------------------------------------------------------------------

def solve_lyapunov(A: np.ndarray, Q: np.ndarray | None = None) -> np.ndarray:
    """Solve ``A^T P + P A = -Q`` for symmetric ``P`` (2x2 only)."""
    A = np.asarray(A, dtype=np.float64)
    Q = np.eye(2) if Q is None else np.asarray(Q, dtype=np.float64)
    tr, det = A[0, 0] + A[1, 1], np.linalg.det(A)
    if not (tr < 0 and det > 0):
        raise NotHurwitz(f"matrix is not Hurwitz (trace={tr:.3e}, det={det:.3e})")
    a, b, c, d = A[0, 0], A[0, 1], A[1, 0], A[1, 1]
    M = np.array([[2 * a, 2 * c, 0.0], [b, a + d, c], [0.0, 2 * b, 2 * d]])
    rhs = -np.array([Q[0, 0], 0.5 * (Q[0, 1] + Q[1, 0]), Q[1, 1]])
    p11, p12, p22 = np.linalg.solve(M, rhs)
    return np.array([[p11, p12], [p12, p22]])


@dataclass(frozen=True)
class LyapunovSeed:
    P: np.ndarray
    Q: np.ndarray
    level_c: float
    center: np.ndarray
    angles: np.ndarray
    seed_points: np.ndarray

    def points_at(self, angles) -> np.ndarray:
        return ellipse_points(self.center, self.P, self.level_c, angles)

    def value(self, X) -> np.ndarray:
        d = np.atleast_2d(X) - self.center
        return np.einsum("ij,jk,ik->i", d, self.P, d)


def ellipse_points(center, P, c, angles) -> np.ndarray:
    L = np.linalg.cholesky(P)
    u = np.vstack([np.cos(angles), np.sin(angles)])
    return np.asarray(center)[None, :] + math.sqrt(c) * np.linalg.solve(L.T, u).T


def _scale_matrix(solver: SolverSettings) -> np.ndarray:
    return np.diag([solver.x1_scale, solver.x3_scale])


def seed_q(settings: RoaSettings) -> np.ndarray:
    """Lyapunov weight: ``diag(q_diag)`` in scaled coordinates, expressed in raw ones."""
    s_inv = np.linalg.inv(_scale_matrix(settings.solver))
    return s_inv @ np.diag(settings.q_diag) @ s_inv


def seed_level_set(eq: Equilibrium, P: np.ndarray, level_c: float, n_points: int, Q: np.ndarray | None = None,
                   settings: RoaSettings = RoaSettings(), verify: bool = True) -> LyapunovSeed:
    """Seed points on ``(x - x0)^T P (x - x0) = c``, equally spaced in whitened angle.

    With ``verify`` every seed must see the vector field pointing into the
    ellipse and must converge forward to the equilibrium.
    """
    if not level_c > 0:
        raise InputError("level_c must be positive")
    if n_points < 4:
        raise InputError("need at least 4 seed points")
    angles = TWO_PI * np.arange(n_points) / n_points
    pts = ellipse_points(eq.x, P, level_c, angles)
    seed = LyapunovSeed(np.asarray(P, dtype=float), np.eye(2) if Q is None else np.asarray(Q, dtype=float),
                        float(level_c), eq.x, angles, pts)
    if verify:
        if eq.system is None:
            raise InputError("verification needs an equilibrium with its system context")
        _verify_seeds(eq, seed, pts, settings)
    return seed


def _verify_seeds(eq: Equilibrium, seed: LyapunovSeed, pts: np.ndarray, settings: RoaSettings) -> None:
    f = rom_rhs_array(pts, eq.coeffs, eq.system.pll)
    vdot = 2.0 * np.einsum("ij,jk,ik->i", pts - seed.center, seed.P, f)
    outward = int(np.count_nonzero(vdot >= 0))
    if outward:
        raise SeedNotAttracted(f"{outward} seeds see an outward-pointing vector field")
    t = settle_times(eq.system, eq.op, pts, eq.x, settings.conv_radius, settings.conv_dwell,
                     settings.conv_horizon, settings.solver)
    stuck = int(np.count_nonzero(t < 0))
    if stuck:
        raise SeedNotAttracted(f"{stuck} seeds do not converge within {settings.conv_horizon} s")


def auto_seed(eq: Equilibrium, settings: RoaSettings = RoaSettings()) -> LyapunovSeed:
    """Largest certified level set reachable by halving from the initial half-width."""
    if eq.stability != "stable":
        raise InputError(f"equilibrium is {eq.stability}, not stable")
    A = jacobian(eq.state, eq.coeffs, eq.system.pll)
    Q = seed_q(settings)
    P = solve_lyapunov(A, Q)
    c = settings.initial_half_width ** 2 / np.linalg.inv(P)[0, 0]
    last = None
    for _ in range(settings.max_halvings + 1):
        try:
            return seed_level_set(eq, P, c, settings.n_seeds, Q, settings)
        except SeedNotAttracted as exc:
            last = exc
            c *= 0.5
    raise SeedNotAttracted(f"no certified level set after {settings.max_halvings} halvings: {last}")


# --- boundary ----------------------------------------------------------------------------

@dataclass(frozen=True)
class TlroaBoundary:
    vertices: np.ndarray
    horizon_t: float
    equilibrium: Equilibrium
    seed: LyapunovSeed
    angles: np.ndarray = field(repr=False, default=None)
    stats: dict = field(default_factory=dict)

    @property
    def area(self) -> float:
        return geometry.area(self.vertices)

    def contains(self, x, edge_tol: float = 1e-9) -> bool:
        return contains(self, x, edge_tol)

    def contains_many(self, X, edge_tol: float = 1e-9) -> np.ndarray:
        return geometry.points_in_polygon(self.vertices, X, edge_tol)

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("x1_rad", "x3_rad_per_s"))
            for x1, x3 in np.vstack([self.vertices, self.vertices[:1]]):
                w.writerow((repr(float(x1)), repr(float(x3))))

    def sidecar(self) -> dict:
        eq = self.equilibrium
        return {
            "horizon_s": self.horizon_t,
            "equilibrium": {"x1_rad": eq.state.x1, "x3_rad_per_s": eq.state.x3,
                            "branch_index": eq.branch_index, "residual_norm": eq.residual_norm},
            "seed_settings": {"level_c": self.seed.level_c, "P": self.seed.P.tolist(),
                              "Q": self.seed.Q.tolist(), "n_points": int(len(self.seed.angles))},
            "refinement_stats": self.stats,
        }


def read_boundary_csv(path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != ("x1_rad", "x3_rad_per_s"):
            raise InputError(f"{path}:1: expected header x1_rad,x3_rad_per_s")
        rows = [(float(a), float(b)) for a, b in reader]
    v = np.array(rows)
    if len(v) > 1 and np.array_equal(v[0], v[-1]):
        v = v[:-1]
    return v


def compute_tlroa(seed: LyapunovSeed, eq: Equilibrium, horizon_t: float,
                  settings: RoaSettings = RoaSettings()) -> TlroaBoundary:
    """Propagate the seed ellipse backwards for ``horizon_t`` seconds.

    Adjacent images further apart than ``max_arc`` (scaled units) get a new
    seed halfway between them in angle, up to ``max_depth`` bisections.
    """
    if horizon_t < 0:
        raise InputError("horizon must be non-negative")
    solver = settings.solver
    scale = np.array([solver.x1_scale, solver.x3_scale])

    def image(angles):
        pts = seed.points_at(angles)
        if horizon_t == 0:
            return pts
        Y, _ = flow_endpoints(eq.system, eq.op, pts, horizon_t, -1.0, solver)
        return Y

    angles = np.asarray(seed.angles, dtype=np.float64)
    verts = image(angles)
    depth = np.zeros(len(angles), dtype=np.int64)
    inserted = 0
    failed = 0
    while True:
        nxt = np.roll(verts, -1, axis=0)
        gaps = np.linalg.norm((nxt - verts) / scale, axis=1)
        split = np.flatnonzero(gaps > settings.max_arc)
        if split.size == 0:
            break
        new_depth = np.maximum(depth[split], np.roll(depth, -1)[split]) + 1
        ok = new_depth <= settings.max_depth
        failed = int(np.count_nonzero(~ok))
        split, new_depth = split[ok], new_depth[ok]
        if split.size == 0:
            break
        a0 = angles[split]
        a1 = np.roll(angles, -1)[split]
        a1 = np.where(a1 <= a0, a1 + TWO_PI, a1)
        new_angles = np.mod(0.5 * (a0 + a1), TWO_PI)
        new_verts = image(new_angles)
        angles = np.concatenate([angles, new_angles])
        verts = np.vstack([verts, new_verts])
        depth = np.concatenate([depth, new_depth])
        order = np.argsort(angles, kind="stable")
        angles, verts, depth = angles[order], verts[order], depth[order]
        inserted += split.size

    nxt = np.roll(verts, -1, axis=0)
    gaps = np.linalg.norm((nxt - verts) / scale, axis=1)
    stats = {
        "n_vertices": int(len(verts)),
        "n_inserted": int(inserted),
        "max_depth": int(depth.max(initial=0)),
        "max_gap": float(gaps.max()),
        "max_arc": settings.max_arc,
        "area": geometry.area(verts),
    }
    boundary = TlroaBoundary(verts, float(horizon_t), eq, seed, angles, stats)
    if failed:
        raise RefinementDepthExceeded(f"{failed} gaps still exceed {settings.max_arc} at depth {settings.max_depth}",
                                      partial=boundary, diagnostics=stats)
    if not geometry.points_in_polygon(verts, eq.x[None, :])[0]:
        raise ComputationError("boundary does not enclose the equilibrium")
    return boundary


def contains(boundary: TlroaBoundary, x, edge_tol: float = 1e-9) -> bool:
    pt = x.as_array() if isinstance(x, RomState) else np.asarray(x, dtype=float)
    return bool(geometry.points_in_polygon(boundary.vertices, pt[None, :], edge_tol)[0])


def tlroa_for(system: RomSystem, op: Segment, settings: RoaSettings = RoaSettings(),
              horizon: float | None = None) -> TlroaBoundary:
    """Equilibrium, certified seed and boundary in one call."""
    eq = equilibrium_of(system, op)
    seed = auto_seed(eq, settings)
    return compute_tlroa(seed, eq, settings.horizon if horizon is None else horizon, settings)


def reaches_seed(seed: LyapunovSeed, eq: Equilibrium, X: np.ndarray, horizon: float,
                 settings: RoaSettings = RoaSettings(), rel_tol: float = 1e-6) -> np.ndarray:
    """Forward-time oracle: does each state land inside the seed ellipse after ``horizon``?"""
    Y, status = flow_endpoints(eq.system, eq.op, X, horizon, 1.0, settings.solver, raise_on_escape=False)
    return (status == 0) & (seed.value(Y) <= seed.level_c * (1.0 + rel_tol))


# --- critical clearing time ------------------------------------------------------------------

@dataclass(frozen=True)
class CctResult:
    cct_s: float
    exit_point: tuple[float, float] | None
    samples: int = 0

    @property
    def never_exits(self) -> bool:
        return math.isinf(self.cct_s)

    def to_json_dict(self) -> dict:
        return {"cct_s": "infinite" if self.never_exits else self.cct_s,
                "exit_point": None if self.exit_point is None else list(self.exit_point)}


def critical_clearing_time(system: RomSystem, pre_fault: OperatingPoint, fault: FaultSpec,
                           boundary: TlroaBoundary, window: float = 5.0, resolution: float = 1e-3,
                           solver: SolverSettings | None = None, edge_tol: float = 1e-9) -> CctResult:
    """First time the sustained-fault trajectory leaves the boundary.

    The trajectory starts at the pre-fault equilibrium; its angle is shifted
    by whole turns into the branch of the boundary's equilibrium.
    """
    solver = solver or SolverSettings(sample_dt=resolution)
    pre_eq = equilibrium_of(system, nominal_segment(system.grid, pre_fault))
    shift = TWO_PI * (boundary.equilibrium.branch_index - pre_eq.branch_index)
    sched = sustained_fault_schedule(fault, pre_fault, system.grid, window)
    traj = integrate_forward(system, sched, pre_eq.state, 0.0, window, solver)
    X = traj.x + np.array([shift, 0.0])
    inside = boundary.contains_many(X, edge_tol)
    if not inside[0]:
        raise ImmediateExit("pre-fault equilibrium lies outside the boundary")
    if inside.all():
        return CctResult(math.inf, None, len(X))
    i = int(np.argmin(inside))
    lo, hi = traj.t[i - 1], traj.t[i]
    xlo, xhi = X[i - 1], X[i]

    def at(t):
        w = (t - traj.t[i - 1]) / (traj.t[i] - traj.t[i - 1])
        return (1 - w) * X[i - 1] + w * X[i]

    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if boundary.contains(at(mid), edge_tol):
            lo = mid
        else:
            hi, xhi = mid, at(mid)
    return CctResult(float(hi), (float(xhi[0]), float(xhi[1])), len(X))


# --- brute-force oracle --------------------------------------------------------------------------

@dataclass(frozen=True)
class OracleGrid:
    x1: np.ndarray
    x3: np.ndarray
    converged: np.ndarray
    settle_time: np.ndarray

    def points(self) -> np.ndarray:
        g1, g3 = np.meshgrid(self.x1, self.x3)
        return np.column_stack([g1.ravel(), g3.ravel()])

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("x1_rad", "x3_rad_per_s", "converged"))
            for (a, b), c in zip(self.points(), self.converged.ravel()):
                w.writerow((repr(float(a)), repr(float(b)), int(c)))


def brute_force_roa(eq: Equilibrium, box: tuple[float, float, float, float], grid_n: tuple[int, int],
                    horizon: float, settings: RoaSettings = RoaSettings(), workers: int = 1) -> OracleGrid:
    """Label a grid of states by forward simulation (converged = enters the ball and stays)."""
    x1lo, x1hi, x3lo, x3hi = box
    nx, ny = grid_n
    if not (x1hi > x1lo and x3hi > x3lo):
        raise InputError("box must have positive extent in both coordinates")
    if nx < 1 or ny < 1:
        raise InputError("grid counts must be positive")
    e = eq.x
    if not (x1lo <= e[0] <= x1hi and x3lo <= e[1] <= x3hi):
        raise InputError("box does not contain the equilibrium")
    x1 = np.linspace(x1lo, x1hi, nx)
    x3 = np.linspace(x3lo, x3hi, ny)
    g1, g3 = np.meshgrid(x1, x3)
    pts = np.column_stack([g1.ravel(), g3.ravel()])

    def work(chunk):
        return settle_times(eq.system, eq.op, chunk, e, settings.conv_radius, settings.conv_dwell, horizon,
                            settings.solver)

    if workers > 1 and len(pts) > 1:
        chunks = np.array_split(pts, workers)
        with ThreadPoolExecutor(workers) as ex:
            t = np.concatenate(list(ex.map(work, chunks)))
    else:
        t = work(pts)
    t = t.reshape(ny, nx)
    return OracleGrid(x1, x3, t >= 0, t)


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
