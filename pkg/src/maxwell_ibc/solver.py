"""Absorbing Maxwell solves, energy balance, limiting absorption and frequency sweeps."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .assembly import (DEFAULT_ETA, TET_Q2, TET_W2, DofMap, SourceField, SystemBlocks,
                       _material_map, as_source, assemble_blocks, assemble_rhs,
                       barycentric_gradients, evaluate_edge_field, recover_H, whitney_pointwise)
from .boundary import ImpedancePatch
from .helmholtz import NodalSpace, project_div_free, reduce_source
from .linalg import DEFAULT_RTOL, Factorization, SingularSystemError
from .mesh import TetMesh


log = logging.getLogger(__name__)

BALANCE_TOL = 1e-8


class NearResonanceError(SingularSystemError):
    """The undamped system is singular to working precision."""


class EnergyBalanceError(RuntimeError):
    """The discrete energy identity is violated: an assembly inconsistency."""


@dataclass(frozen=True)
class Sources:
    f_e: SourceField = field(default_factory=SourceField.zero)
    f_h: SourceField = field(default_factory=SourceField.zero)

    def __post_init__(self):
        object.__setattr__(self, "f_e", as_source(self.f_e))
        object.__setattr__(self, "f_h", as_source(self.f_h))

    def scaled(self, c) -> "Sources":
        return Sources(self.f_e.scaled(c), self.f_h.scaled(c))


@dataclass(frozen=True)
class SolveConfig:
    omega: float
    delta: float = 0.0
    eta: float = DEFAULT_ETA
    tol: float = DEFAULT_RTOL
    delta_schedule: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        check_schedule(self.delta_schedule)


def check_schedule(schedule: Sequence[float]):
    s = list(schedule)
    if any(d <= 0 for d in s):
        raise ValueError("delta schedule entries must be positive")
    if any(b >= a for a, b in zip(s, s[1:])):
        raise ValueError("delta schedule must be strictly decreasing")


@dataclass
class EnergyReport:
    source_power: float  # -Im(E^H b)
    volume_absorbed: float  # delta E^H M0 E
    boundary_absorbed: float  # omega E^H B E
    mismatch: float

    def as_dict(self):
        return {k: float(v) for k, v in self.__dict__.items()}


@dataclass
class FieldSolution:
    E: np.ndarray  # all edges, zeros on eliminated ones
    H: np.ndarray  # (T, 3)
    residual: float
    energy: EnergyReport
    dofs: DofMap
    omega: float
    delta: float
    l2_norm: float
    chi: np.ndarray | None = None  # gradient potential removed from f_e


def compute_delta0(omega: float, eps_bound: float) -> float:
    """Positive root of ``d^2 + 2 omega^2 e d - 1 = 0``.

    Below this value ``(1 - d^2) d >= 2 d^2 omega^2 e`` and the absorbing
    form is coercive. Evaluated in the cancellation-free form.
    """
    a = omega * omega * eps_bound
    return 1.0 / (a + math.sqrt(a * a + 1.0))


def eps_bound(materials) -> float:
    return max(float(np.linalg.norm(m.eps, 2)) for m in _material_map(materials).values())


def power_balance(blocks: SystemBlocks, E, b, tol: float | None = BALANCE_TOL) -> EnergyReport:
    """Energy identity from testing the system with its own solution.

    ``-delta E^H M0 E - omega E^H B E = Im(E^H b)`` must hold for Hermitian
    coefficients; ``E`` and ``b`` are reduced vectors.
    """
    E = np.asarray(E)
    vol = np.vdot(E, blocks.M0 @ E)
    bnd = np.vdot(E, blocks.B @ E)
    rhs = np.vdot(E, b).imag
    lhs = -blocks.delta * vol - blocks.omega * bnd
    mismatch = abs(lhs - rhs) / (1.0 + abs(rhs))
    rep = EnergyReport(-rhs, blocks.delta * vol.real, blocks.omega * bnd.real, float(mismatch))
    if tol is not None and mismatch > tol:
        raise EnergyBalanceError(f"energy mismatch {mismatch:.3e} exceeds {tol:.1e}")
    return rep


def l2_norm(blocks: SystemBlocks, x) -> float:
    return float(np.sqrt(abs(np.vdot(x, blocks.M0 @ x))))


class MaxwellProblem:
    """Frequency-independent data of one cavity problem, assembled once.

    ``K``, ``M``, ``M0`` and the boundary block do not depend on omega or
    delta, so sweeps and continuation only recombine and refactor.
    """

    def __init__(self, mesh: TetMesh, materials, patches: Mapping[int, ImpedancePatch],
                 sources: Sources | None = None, eta: float = DEFAULT_ETA):
        self.mesh = mesh
        self.materials = materials
        self.patches = patches
        self.sources = sources or Sources()
        self.eta = eta
        self.blocks = assemble_blocks(mesh, materials, patches, 1.0, 0.0, eta)
        self.dofs = self.blocks.dofs
        self.space = NodalSpace(mesh, materials)

    def system(self, omega: float, delta: float) -> SystemBlocks:
        return replace(self.blocks, omega=float(omega), delta=float(delta))

    def rhs(self, omega: float, sources: Sources | None = None):
        src = sources or self.sources
        f_e, chi = reduce_source(self.mesh, self.materials, omega, src.f_e, self.space)
        b = assemble_rhs(self.mesh, self.dofs, f_e, src.f_h, self.materials, omega)
        return b, chi

    def solve(self, omega: float, delta: float = 0.0, tol: float = DEFAULT_RTOL,
              sources: Sources | None = None, check_balance: bool = True) -> FieldSolution:
        src = sources or self.sources
        blocks = self.system(omega, delta)
        b, chi = self.rhs(omega, src)
        A = blocks.A
        try:
            scale = max(abs(blocks.K).max(), blocks.omega ** 2 * abs(blocks.M).max()) if A.shape[0] else 1.0
            x = Factorization(A, scale).solve(b, tol)
        except SingularSystemError as exc:
            if delta == 0:
                raise NearResonanceError(
                    f"system singular at omega={omega:g}, delta=0 ({exc}); the frequency is "
                    "at or near a resonance: use delta > 0 or limiting-absorption continuation"
                ) from None
            raise
        res = float(np.linalg.norm(A @ x - b) / np.linalg.norm(b)) if np.any(b) else 0.0
        energy = power_balance(blocks, x, b, BALANCE_TOL if check_balance else None)
        E = self.dofs.expand(x)
        H = recover_H(self.mesh, E, src.f_h, self.materials, omega)
        return FieldSolution(E, H, res, energy, self.dofs, float(omega), float(delta),
                             l2_norm(blocks, x), chi)


def solve_maxwell(mesh: TetMesh, materials, patches, sources: Sources, config: SolveConfig) -> FieldSolution:
    """Source reduction, assembly, direct solve, H recovery and energy check."""
    prob = MaxwellProblem(mesh, materials, patches, sources, config.eta)
    return prob.solve(config.omega, config.delta, config.tol)


# --------------------------------------------------------------------------
# limiting absorption

@dataclass
class AbsorptionStep:
    delta: float
    norm: float
    step_gap: float | None  # ||E_delta - E_next|| (None for the last)
    gap_to_direct: float | None
    gradient_part: float
    coercive_certified: bool  # delta below delta0


@dataclass
class LimitingAbsorptionResult:
    solutions: list[FieldSolution]
    E0: np.ndarray  # last iterate
    direct: FieldSolution | None
    steps: list[AbsorptionStep]
    delta0: float
    resonance_suspected: bool
    gap_slope: float | None = None
    gradient_slope: float | None = None


def _loglog_slope(x, y) -> float | None:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return None
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def limiting_absorption(mesh: TetMesh, materials, patches, sources: Sources, omega: float,
                        schedule: Sequence[float], eta: float = DEFAULT_ETA,
                        tol: float = DEFAULT_RTOL, strict: bool = False,
                        problem: MaxwellProblem | None = None) -> LimitingAbsorptionResult:
    """Solve along a decreasing absorption schedule and report convergence.

    With ``strict`` every delta must lie below the coercivity bound
    ``compute_delta0``; otherwise rows carry a certification flag only (the
    discrete system is invertible for any delta > 0).
    """
    check_schedule(schedule)
    if not schedule:
        raise ValueError("empty delta schedule")
    d0 = compute_delta0(omega, eps_bound(materials))
    if strict and schedule[0] >= d0:
        raise ValueError(f"delta {schedule[0]:g} is not below delta0 = {d0:.6g}")
    prob = problem or MaxwellProblem(mesh, materials, patches, sources, eta)
    sols = [prob.solve(omega, d, tol) for d in schedule]

    direct = None
    if len(schedule) > 1:
        try:
            direct = prob.solve(omega, 0.0, tol)
        except NearResonanceError:
            log.info("direct undamped solve singular at omega=%g", omega)

    M0 = prob.space.edge_mass_identity

    def norm(v):
        return float(np.sqrt(abs(np.vdot(v, M0 @ v))))

    steps = []
    for i, (d, s) in enumerate(zip(schedule, sols)):
        nxt = norm(s.E - sols[i + 1].E) if i + 1 < len(sols) else None
        gap = norm(s.E - direct.E) if direct is not None else None
        _, psi = project_div_free(mesh, materials, s.E, prob.space)
        steps.append(AbsorptionStep(float(d), s.l2_norm, nxt, gap, prob.space.gradient_l2(psi),
                                    d < d0))
    norms = [s.norm for s in steps]
    growing = len(norms) > 1 and all(b > a for a, b in zip(norms, norms[1:])) and norms[-1] > 10 * norms[0]
    res = LimitingAbsorptionResult(sols, sols[-1].E, direct, steps, d0,
                                   resonance_suspected=bool(growing or (direct is None and len(sols) > 1)))
    if len(schedule) > 1:
        ds = [s.delta for s in steps]
        if direct is not None:
            res.gap_slope = _loglog_slope(ds, [s.gap_to_direct for s in steps])
        res.gradient_slope = _loglog_slope(ds, [s.gradient_part for s in steps])
    return res


# --------------------------------------------------------------------------
# frequency sweeps

@dataclass
class SweepReport:
    omegas: np.ndarray
    response: np.ndarray  # L2 norm of E, inf where singular
    boundary_absorption: np.ndarray
    peaks: list[float]  # refined peak frequencies
    peak_indices: list[int]


def find_peaks(x, y) -> tuple[list[int], list[float]]:
    """Strict interior local maxima, refined by a parabola through 3 samples."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    idx, refined = [], []
    for i in range(1, len(y) - 1):
        if np.isinf(y[i]):
            if np.isfinite(y[i - 1]) and np.isfinite(y[i + 1]):
                idx.append(i)
                refined.append(float(x[i]))
            continue
        if y[i] > y[i - 1] and y[i] > y[i + 1]:
            idx.append(i)
            x0, x1, x2 = x[i - 1:i + 2]
            y0, y1, y2 = y[i - 1:i + 2]
            denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
            a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
            b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom
            xv = -b / (2 * a) if a < 0 else x1
            refined.append(float(np.clip(xv, x0, x2)))
    return idx, refined


def frequency_sweep(mesh: TetMesh, materials, patches, sources: Sources, omegas,
                    delta: float = 1e-3, eta: float = DEFAULT_ETA, tol: float = DEFAULT_RTOL,
                    threads: int = 1, problem: MaxwellProblem | None = None) -> SweepReport:
    omegas = np.asarray(omegas, dtype=float).reshape(-1)
    if omegas.size == 0:
        raise ValueError("empty frequency list")
    if np.any(np.diff(omegas) <= 0):
        raise ValueError("frequencies must be strictly increasing")
    prob = problem or MaxwellProblem(mesh, materials, patches, sources, eta)

    def one(w):
        try:
            s = prob.solve(w, delta, tol)
        except SingularSystemError:
            return np.inf, np.inf
        return s.l2_norm, s.energy.boundary_absorbed

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(one, omegas))
    else:
        out = [one(w) for w in omegas]
    resp = np.array([o[0] for o in out])
    absb = np.array([o[1] for o in out])
    idx, peaks = find_peaks(omegas, resp)
    return SweepReport(omegas, resp, absb, peaks, idx)


# --------------------------------------------------------------------------
# comparing fields across meshes

def locate_points(mesh: TetMesh, points, k: int = 24):
    """Containing tet and barycentric coordinates for each point."""
    points = np.asarray(points, float).reshape(-1, 3)
    X = mesh.vertices[mesh.tets]
    J = X[:, 1:, :] - X[:, :1, :]
    Jinv = np.linalg.inv(J)
    tree = cKDTree(mesh.centroids())
    k = min(k, mesh.n_tets)
    _, cand = tree.query(points, k=k)
    cand = np.asarray(cand).reshape(len(points), k)
    owner = np.full(len(points), -1, dtype=np.int64)
    bary = np.zeros((len(points), 4))
    for j in range(k):
        todo = owner < 0
        if not todo.any():
            break
        t = cand[todo, j]
        xi = np.einsum("nab,na->nb", Jinv[t], points[todo] - X[t, 0])
        lam = np.column_stack([1 - xi.sum(1), xi])
        ok = lam.min(axis=1) >= -1e-10
        sel = np.flatnonzero(todo)[ok]
        owner[sel] = t[ok]
        bary[sel] = lam[ok]
    if np.any(owner < 0):
        raise ValueError(f"{int((owner < 0).sum())} points lie outside the mesh")
    return owner, bary


def evaluate_at_points(mesh: TetMesh, E_full, points) -> np.ndarray:
    """Edge field values at arbitrary points inside the mesh, (N, 3)."""
    owner, bary = locate_points(mesh, points)
    grads, _ = barycentric_gradients(mesh.vertices[mesh.tets[owner]])
    coef = np.asarray(E_full)[mesh.tet_edges[owner]] * mesh.tet_edge_signs[owner]
    return np.einsum("ni,nia->na", coef, whitney_pointwise(grads, bary))


def l2_distance(coarse: TetMesh, E_coarse, fine: TetMesh, E_fine) -> float:
    """L2 norm of ``E_fine - E_coarse`` integrated on the fine mesh.

    Exact when every fine tet lies inside one coarse tet (nested meshes).
    """
    pts = np.einsum("qv,tvd->tqd", TET_Q2, fine.vertices[fine.tets])
    T, Q = pts.shape[:2]
    uc = evaluate_at_points(coarse, E_coarse, pts.reshape(-1, 3)).reshape(T, Q, 3)
    uf = evaluate_edge_field(fine, E_fine, TET_Q2)
    d2 = np.einsum("t,q,tqa->", fine.volumes(), TET_W2, np.abs(uf - uc) ** 2)
    return float(np.sqrt(d2))
