"""Shared builders for the test-suite."""
from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation

from maxwell_ibc.boundary import ImpedancePatch, MaterialSpec
from maxwell_ibc.mesh import TetMesh, generate_box_mesh


def patch_normal(mesh: TetMesh, pid: int) -> np.ndarray:
    return mesh.facet_normals()[mesh.facet_patch == pid][0]


def tangent_basis(nu) -> np.ndarray:
    """3x2 real orthonormal basis of the plane orthogonal to ``nu``."""
    _, _, vh = np.linalg.svd(np.outer(nu, nu))
    return vh[1:].T


def patches_from(mesh: TetMesh, lam_of) -> dict[int, ImpedancePatch]:
    """``lam_of(pid, nu)`` returns the impedance matrix of each patch."""
    out = {}
    for pid in mesh.patches:
        nu = patch_normal(mesh, pid)
        out[pid] = ImpedancePatch.from_lambda(pid, lam_of(pid, nu), nu)
    return out


def pec_patches(mesh: TetMesh):
    return patches_from(mesh, lambda pid, nu: np.zeros((3, 3)))


def full_impedance(lam: float):
    return lambda pid, nu: lam * (np.eye(3) - np.outer(nu, nu))


def mixed_impedance(scale: float = 2.0):
    """Rank-one tangential impedance along a fixed in-plane direction."""
    def lam_of(pid, nu):
        t = np.abs(np.roll(nu, 1))
        return scale * np.outer(t, t)
    return lam_of


def random_hpd(rng, k: int = 3, shift: float | None = None) -> np.ndarray:
    A = rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))
    return A @ A.conj().T + (k if shift is None else shift) * np.eye(k)


def random_admissible_lambda(rng, nu, kernel_dim: int, hermitian: bool = True) -> np.ndarray:
    """Random Lambda whose kernel has the given dimension and contains ``nu``."""
    nu = np.asarray(nu, dtype=complex)
    nu = nu / np.linalg.norm(nu)
    # unitary completion of nu
    Q, _ = np.linalg.qr(np.column_stack([nu, rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))]))
    Q[:, 0] = nu
    rank = 3 - kernel_dim
    if rank == 0:
        return np.zeros((3, 3), dtype=complex)
    perm = rng.permutation(2)  # which tangential directions carry the impedance
    U = Q[:, 1 + perm[:rank]]
    block = random_hpd(rng, rank, shift=0.1) * rng.uniform(0.1, 10.0)
    return U @ block @ U.conj().T


def jittered_box(rng, n=(2, 2, 1), lengths=None, jitter=0.05, rotate=True) -> TetMesh:
    lengths = rng.uniform(0.6, 1.4, 3) if lengths is None else lengths
    box = generate_box_mesh(*n, lengths=lengths)
    V = box.vertices.copy()
    inner = box.interior_vertices()
    V[inner] += jitter * float(np.min(np.asarray(lengths) / np.asarray(n))) * rng.uniform(-1, 1, (len(inner), 3))
    if rotate:
        V = V @ Rotation.random(random_state=rng.integers(1 << 31)).as_matrix().T
    return TetMesh.from_arrays(V, box.tets, box.regions, box.facets, box.facet_patch, box.patches)


def random_problem(seed: int):
    """Small random cavity: mesh, material, mixed patch kinds, omega, delta, eta."""
    rng = np.random.default_rng(seed)
    n = tuple(int(v) for v in rng.integers(1, 3, 3))
    mesh = jittered_box(rng, n)

    def lam_of(pid, nu):
        kind = (pid + seed) % 3
        T = tangent_basis(nu)
        if kind == 0:
            return np.zeros((3, 3))
        if kind == 1:
            t = T[:, 0]
            return rng.uniform(0.5, 3.0) * np.outer(t, t)
        return T @ random_hpd(rng, 2) @ T.T

    patches = patches_from(mesh, lam_of)
    material = MaterialSpec(0, random_hpd(rng), random_hpd(rng))
    omega = float(rng.uniform(0.5, 3.0))
    delta = float(rng.choice([0.0, 0.05, 0.5]))
    eta = float(rng.choice([1e-2, 1e-3, 1e-4]))
    return mesh, material, patches, omega, delta, eta


def linear_sources(seed: int = 0):
    """Two affine vector fields (exactly integrated by every rule used)."""
    rng = np.random.default_rng(seed)
    C = rng.standard_normal((2, 4, 3)) + 1j * rng.standard_normal((2, 4, 3))

    def make(c):
        return lambda x: c[0][None, :] + x @ c[1:]

    return make(C[0]), make(C[1])
