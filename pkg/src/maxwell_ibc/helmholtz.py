"""Discrete Helmholtz splitting against gradients of interior P1 hat functions.

Gradients of continuous piecewise-linear functions are exactly edge fields
(through the incidence matrix G), so the eps-orthogonal splitting
``u = v + G psi`` is exact at the discrete level.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .assembly import (TET_W2, DofMap, SourceField, _coefficient_stack, as_source,
                       assemble_volume, barycentric_gradients, discrete_gradient, sample)
from .boundary import MaterialSpec
from .linalg import Factorization, SingularSystemError
from .mesh import TetMesh


def nodal_stiffness(mesh: TetMesh, coef: np.ndarray) -> sp.csr_matrix:
    """Full vertex matrix ``S[i, j] = int coef grad l_j . grad l_i``; ``coef`` is (T, 3, 3)."""
    grads, vol = barycentric_gradients(mesh.vertices[mesh.tets])
    Se = np.einsum("t,tia,tab,tjb->tij", vol, grads, coef, grads)
    rows = np.repeat(mesh.tets, 4, axis=1).ravel()
    cols = np.tile(mesh.tets, (1, 4)).ravel()
    n = mesh.n_vertices
    S = sp.coo_matrix((Se.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    S.sum_duplicates()
    return S


def gradient_moments(mesh: TetMesh, f: SourceField) -> np.ndarray:
    """``int f . grad l_i`` for every vertex, with the assembly quadrature."""
    grads, vol = barycentric_gradients(mesh.vertices[mesh.tets])
    fq = sample(mesh, f)
    local = np.einsum("t,q,tqa,tia->ti", vol, TET_W2, fq, grads)
    out = np.zeros(mesh.n_vertices, dtype=complex)
    np.add.at(out, mesh.tets.ravel(), local.ravel())
    return out


class NodalSpace:
    """Interior-vertex P1 space with an eps-weighted stiffness and its factorization."""

    def __init__(self, mesh: TetMesh, materials):
        self.mesh = mesh
        self.eps = _coefficient_stack(mesh, materials, "eps")
        self.interior = mesh.interior_vertices()
        S = nodal_stiffness(mesh, self.eps)
        self.S = S[self.interior][:, self.interior].tocsc()
        self.G = discrete_gradient(mesh)
        self.G_int = self.G[:, self.interior].tocsr()
        self._lu = Factorization(self.S) if len(self.interior) else None
        self._M_eps = None
        self._M0 = None

    def solve(self, rhs_interior, rtol: float = 1e-10) -> np.ndarray:
        """Solve on interior vertices, return a full vertex vector (zero on the boundary)."""
        full = np.zeros(self.mesh.n_vertices, dtype=complex)
        if self._lu is not None:
            full[self.interior] = self._lu.solve(rhs_interior, rtol)
        return full

    def _edge_masses(self):
        if self._M_eps is None:
            dofs = DofMap.from_eliminated(self.mesh.n_edges, [])
            mats = {}
            for r in np.unique(self.mesh.regions):
                mats[int(r)] = MaterialSpec(int(r), self.eps[self.mesh.regions == r][0], np.eye(3))
            _, self._M_eps, self._M0 = assemble_volume(self.mesh, mats, dofs)
        return self._M_eps, self._M0

    @property
    def edge_mass(self) -> sp.csr_matrix:
        """Full-edge eps-weighted mass matrix."""
        return self._edge_masses()[0]

    @property
    def edge_mass_identity(self) -> sp.csr_matrix:
        return self._edge_masses()[1]

    def orthogonality_defect(self, v_full) -> np.ndarray:
        """``<eps v, grad l_i>`` for every interior vertex i."""
        return self.G_int.T @ (self.edge_mass @ v_full)

    def gradient_l2(self, psi_full) -> float:
        """L2 norm of ``grad psi`` for a vertex vector."""
        g = self.G @ psi_full
        return float(np.sqrt(abs(np.vdot(g, self.edge_mass_identity @ g))))


def reduce_source(mesh: TetMesh, materials, omega: float, f_e, space: NodalSpace | None = None,
                  check_tol: float = 1e-10):
    """Replace ``f_e`` by its weakly divergence-free part.

    Solves ``int eps grad chi . grad psi = (i omega)^{-1} int f_e . grad psi``
    over interior hats and returns ``(f_e - i omega eps grad chi, chi)``.
    """
    if not omega > 0:
        raise ValueError("omega must be positive")
    f_e = as_source(f_e)
    space = space or NodalSpace(mesh, materials)
    if f_e.is_zero:
        return f_e, np.zeros(mesh.n_vertices, dtype=complex)
    d = gradient_moments(mesh, f_e)
    chi = space.solve(d[space.interior] / (1j * omega))
    grads, _ = barycentric_gradients(mesh.vertices[mesh.tets])
    grad_chi = np.einsum("ti,tia->ta", chi[mesh.tets], grads)
    correction = -1j * omega * np.einsum("tab,tb->ta", space.eps, grad_chi)
    reduced = f_e.plus_elementwise(correction)

    res = np.abs(gradient_moments(mesh, reduced)[space.interior])
    scale = _moment_scale(mesh, f_e)
    if res.size and res.max() > check_tol * max(scale, 1e-300):
        raise SingularSystemError(f"source reduction residual {res.max():.3e} "
                                  f"exceeds {check_tol:.1e} x {scale:.3e}")
    return reduced, chi


def _moment_scale(mesh: TetMesh, f: SourceField) -> float:
    """Largest ``int |f| |grad l_i|``, the natural size of a gradient moment."""
    grads, vol = barycentric_gradients(mesh.vertices[mesh.tets])
    fq = np.linalg.norm(sample(mesh, f), axis=2)
    local = np.einsum("t,q,tq,ti->ti", vol, TET_W2, fq, np.linalg.norm(grads, axis=2))
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.tets.ravel(), local.ravel())
    return float(out.max())


def project_div_free(mesh: TetMesh, materials, u_full, space: NodalSpace | None = None):
    """Split an edge field as ``u = v + G psi`` with v eps-orthogonal to interior gradients.

    ``u_full`` lives on all edges; returns ``(v, psi)`` with psi a full vertex vector.
    """
    space = space or NodalSpace(mesh, materials)
    u = np.asarray(u_full, dtype=complex)
    rhs = space.G_int.T @ (space.edge_mass @ u)
    psi = space.solve(rhs)
    v = u - space.G @ psi
    return v, psi
