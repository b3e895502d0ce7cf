"""Acceptance criteria 1-9, one test each, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v`` (the summary lines appear at the
end of the session) or ``python tests/test_acceptance.py`` for the lines alone.
"""
from __future__ import annotations

import math
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from maxwell_ibc.assembly import DofMap, SourceField, assemble_blocks, assemble_rhs, assemble_volume, \
    boundary_identity_mass, discrete_gradient
from maxwell_ibc.boundary import MaterialSpec, build_sigma_theta, kernel_decomposition, validate_sigma_theta, vacuum
from maxwell_ibc.helmholtz import NodalSpace
from maxwell_ibc.linalg import solve_linear
from maxwell_ibc.mesh import generate_box_mesh
from maxwell_ibc.oracle import analytic_cube_resonances, dense_assemble, dense_rhs, dense_solve
from maxwell_ibc.solver import MaxwellProblem, Sources, compute_delta0, frequency_sweep, l2_distance, \
    limiting_absorption
from maxwell_ibc.sources import cavity_mode, constant, gaussian

from helpers import (full_impedance, linear_sources, mixed_impedance, patches_from, pec_patches, random_admissible_lambda,
                     random_hpd, random_problem, tangent_basis)

RESULTS: list[str] = []

GAUSSIAN = dict(amplitude=[1, 1, 0], center=[0.4, 0.5, 0.6], width=0.2)
ANISOTROPIC_EPS = [[1.2, 0.2j, 0], [-0.2j, 1.0, 0.1], [0, 0.1, 1.1]]


def record(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"criterion {number} {'PASS' if passed else 'FAIL'}: {title}: {detail}"
    RESULTS.append(line)
    print(line)
    assert passed, line


# 1 ---------------------------------------------------------------------------

def test_criterion_1_boundary_algebra():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_identity = worst_coercivity = 0.0
    for _ in range(1000):
        nu = rng.standard_normal(3)
        nu /= np.linalg.norm(nu)
        lam = random_admissible_lambda(rng, nu, int(rng.integers(1, 4)))
        sigma, theta = build_sigma_theta(lam, nu)
        dec = kernel_decomposition(lam)
        pz = dec.proj_Zperp
        scale = 1 + np.linalg.norm(lam, 2)
        for lhs, rhs in [(theta @ lam, 0 * lam), (sigma @ lam, pz), (lam @ sigma, pz), (lam @ sigma @ lam, lam)]:
            worst_identity = max(worst_identity, np.abs(lhs - rhs).max() / scale)
        if dec.rank:
            lmax = np.linalg.eigvalsh(dec.Zperp_basis.conj().T @ lam @ dec.Zperp_basis).max()
            predicted = min(1.0, 1.0 / lmax)
        else:
            predicted = 1.0
        got = validate_sigma_theta(sigma, theta).coercivity
        worst_coercivity = max(worst_coercivity, abs(got - predicted))
    elapsed = time.perf_counter() - t0
    ok = worst_identity <= 1e-10 and worst_coercivity <= 1e-10 and elapsed < 5
    record(1, "boundary algebra", ok,
           f"identity err {worst_identity:.2e}, coercivity err {worst_coercivity:.2e}, {elapsed:.2f}s")


# 2 ---------------------------------------------------------------------------

def test_criterion_2_de_rham():
    t0 = time.perf_counter()
    worst = 0.0
    for n in (2, 4, 8):
        mesh = generate_box_mesh(n, n, n)
        K, _, _ = assemble_volume(mesh, vacuum(), DofMap.from_eliminated(mesh.n_edges, []))
        worst = max(worst, abs(K @ discrete_gradient(mesh)).max())
    elapsed = time.perf_counter() - t0
    record(2, "de Rham K G = 0", worst <= 1e-12 and elapsed < 10, f"max |KG| {worst:.2e}, {elapsed:.2f}s")


# 3 ---------------------------------------------------------------------------

def test_criterion_3_oracle_equivalence():
    t0 = time.perf_counter()
    worst_matrix = worst_solution = 0.0
    max_edges = 0
    for seed in range(20):
        mesh, mat, patches, omega, delta, eta = random_problem(seed)
        max_edges = max(max_edges, mesh.n_edges)
        dense = dense_assemble(mesh, mat, patches, omega, delta, eta)
        sparse = assemble_blocks(mesh, mat, patches, omega, delta, eta)
        A = sparse.A.toarray()
        worst_matrix = max(worst_matrix, np.abs(A - dense.A).max() / (1 + np.abs(dense.A).max()))
        fe, fh = linear_sources(seed)
        bd = dense_rhs(mesh, dense, fe, fh, mat, omega)
        bs = assemble_rhs(mesh, sparse.dofs, SourceField(fe), SourceField(fh), mat, omega)
        xd = dense_solve(dense, bd)
        xs = solve_linear(sparse.A, bs)
        worst_solution = max(worst_solution, np.linalg.norm(xs - xd) / np.linalg.norm(xd))
    elapsed = time.perf_counter() - t0
    ok = worst_matrix <= 1e-10 and worst_solution <= 1e-9 and elapsed < 30 and max_edges <= 200
    record(3, "oracle equivalence", ok,
           f"matrix err {worst_matrix:.2e}, solution err {worst_solution:.2e}, "
           f"max edges {max_edges}, {elapsed:.2f}s")


# 4 ---------------------------------------------------------------------------

def test_criterion_4_power_balance():
    mesh = generate_box_mesh(4, 4, 4)
    src = Sources(gaussian([1, 0.5j, 0.2], [0.4, 0.5, 0.6], 0.25, [1.0, 0.0, 2.0]), constant([0, 0.3, 1j]))
    rng = np.random.default_rng(4)

    def random_full(pid, nu):
        T = tangent_basis(nu)
        return T @ random_hpd(rng, 2) @ T.T

    boundaries = {"pec": pec_patches(mesh), "full": patches_from(mesh, full_impedance(1.0)),
                  "mixed": patches_from(mesh, mixed_impedance(2.0)), "random": patches_from(mesh, random_full)}
    materials = {"vacuum": vacuum(), "anisotropic": MaterialSpec(0, ANISOTROPIC_EPS, np.diag([1.0, 1.3, 0.9]))}
    worst, count = 0.0, 0
    for mname, mat in materials.items():
        for bname, patches in boundaries.items():
            prob = MaxwellProblem(mesh, mat, patches, src, eta=1e-5)
            for delta in (0.0, 1e-3, 0.5):
                sol = prob.solve(2.7, delta, check_balance=False)
                worst = max(worst, sol.energy.mismatch)
                count += 1
    record(4, "discrete power balance", worst <= 1e-8, f"max mismatch {worst:.2e} over {count} solves")


# 5 ---------------------------------------------------------------------------

def test_criterion_5_cube_resonance():
    t0 = time.perf_counter()
    mesh = generate_box_mesh(8, 8, 8)
    omegas = np.round(np.arange(4.0, 4.9 + 1e-9, 0.05), 12)
    rep = frequency_sweep(mesh, vacuum(), pec_patches(mesh), Sources(cavity_mode()), omegas, delta=1e-3)
    target = analytic_cube_resonances(1)[0]
    errs = [abs(p - target) / target for p in rep.peaks]
    elapsed = time.perf_counter() - t0
    ok = bool(errs) and min(errs) <= 0.05 and elapsed < 300
    best = rep.peaks[int(np.argmin(errs))] if errs else float("nan")
    record(5, "PEC cube resonance", ok,
           f"peak {best:.4f} vs {target:.4f} ({100 * min(errs, default=np.inf):.2f}%), {elapsed:.1f}s")


# 6 ---------------------------------------------------------------------------

def test_criterion_6_limiting_absorption():
    t0 = time.perf_counter()
    mesh = generate_box_mesh(6, 6, 6)
    mat = MaterialSpec(0, ANISOTROPIC_EPS, np.eye(3))
    res = limiting_absorption(mesh, mat, pec_patches(mesh), Sources(gaussian(**GAUSSIAN)), 3.0,
                              [1e-1, 1e-2, 1e-3, 1e-4])
    elapsed = time.perf_counter() - t0
    ok = (res.gap_slope is not None and res.gap_slope >= 0.9 and res.gradient_slope is not None
          and res.gradient_slope >= 0.9 and elapsed < 120)
    record(6, "limiting absorption", ok,
           f"gap slope {res.gap_slope:.4f}, gradient slope {res.gradient_slope:.4f}, {elapsed:.1f}s")


# 7 ---------------------------------------------------------------------------

def test_criterion_7_delta0():
    rng = np.random.default_rng(7)
    worst_eq, worst_ineq = 0.0, np.inf
    for _ in range(100):
        w = float(rng.uniform(0.01, 50.0))
        e = float(10 ** rng.uniform(-3, 2))
        d = compute_delta0(w, e)
        worst_eq = max(worst_eq, abs((1 - d * d) - 2 * d * w * w * e))
        h = d / 2
        worst_ineq = min(worst_ineq, (1 - h * h) * h - 2 * h * h * w * w * e)
    ok = worst_eq <= 1e-12 and worst_ineq >= 0
    record(7, "delta0 formula", ok, f"equality err {worst_eq:.2e}, min slack at delta0/2 {worst_ineq:.2e}")


# 8 ---------------------------------------------------------------------------

def test_criterion_8_impedance_limits():
    t0 = time.perf_counter()
    mesh = generate_box_mesh(8, 8, 8)
    src = Sources(gaussian(**GAUSSIAN))
    Mi = NodalSpace(mesh, vacuum()).edge_mass_identity
    BI = boundary_identity_mass(mesh, DofMap.from_eliminated(mesh.n_edges, []))

    def norm(v):
        return math.sqrt(abs(np.vdot(v, Mi @ v)))

    E_pec = MaxwellProblem(mesh, vacuum(), pec_patches(mesh), src).solve(3.0).E
    lams = [1.0, 1e-1, 1e-2, 1e-3]
    gaps, trace = [], []
    for lam in lams:
        E = MaxwellProblem(mesh, vacuum(), patches_from(mesh, full_impedance(lam)), src).solve(3.0).E
        gaps.append(norm(E - E_pec))
        trace.append(np.vdot(E, BI @ E).real)
    ok_a = all(b < a for a, b in zip(trace, trace[1:])) and gaps[-1] <= 5 * lams[-1] * gaps[0]

    etas = [1e-3, 1e-4, 1e-5, 1e-6]
    prev, steps = None, []
    for eta in etas:
        E = MaxwellProblem(mesh, vacuum(), patches_from(mesh, mixed_impedance(2.0)), src, eta=eta).solve(3.0).E
        if prev is not None:
            steps.append(norm(E - prev))
        prev = E
    ok_b = all(b < a for a, b in zip(steps, steps[1:]))
    elapsed = time.perf_counter() - t0
    record(8, "impedance limits", ok_a and ok_b and elapsed < 180,
           f"(a) gaps {', '.join(f'{g:.2e}' for g in gaps)}; trace {', '.join(f'{t:.2e}' for t in trace)}; "
           f"(b) eta steps {', '.join(f'{s:.2e}' for s in steps)}; {elapsed:.1f}s")


# 9 ---------------------------------------------------------------------------

def test_criterion_9_self_convergence():
    t0 = time.perf_counter()
    src = Sources(gaussian(**GAUSSIAN))
    sols = {}
    for n in (4, 8, 16):
        mesh = generate_box_mesh(n, n, n)
        sols[n] = (mesh, MaxwellProblem(mesh, vacuum(), pec_patches(mesh), src).solve(3.0).E)
    d1 = l2_distance(*sols[4], *sols[8])
    d2 = l2_distance(*sols[8], *sols[16])
    rate = math.log2(d1 / d2)
    elapsed = time.perf_counter() - t0
    record(9, "self-convergence", rate >= 0.8 and elapsed < 300,
           f"|E4-E8| {d1:.3e}, |E8-E16| {d2:.3e}, rate {rate:.3f}, {elapsed:.1f}s")


if __name__ == "__main__":
    failed = 0
    for name, fn in sorted((k, v) for k, v in dict(globals()).items() if k.startswith("test_criterion_")):
        try:
            fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
