"""Lowest-order Whitney edge elements: element/facet matrices and global assembly.

The edge basis function of edge (a, b) is ``l_a grad l_b - l_b grad l_a``,
with l the barycentric coordinates. Global edges are oriented from the lower
to the higher vertex index; per-tet signs absorb the local orientation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp

from .boundary import PEC, ImpedancePatch, MaterialSpec, regularize_lambda, validate_material
from .mesh import TET_EDGES, TetMesh

DEFAULT_ETA = 1e-6

_LOC_A = np.array([a for a, _ in TET_EDGES])
_LOC_B = np.array([b for _, b in TET_EDGES])
_TRI_EDGES = ((0, 1), (0, 2), (1, 2))
_TRI_A = np.array([a for a, _ in _TRI_EDGES])
_TRI_B = np.array([b for _, b in _TRI_EDGES])

# degree-2 rules in barycentric coordinates
_qa, _qb = 0.5854101966249685, 0.1381966011250105
TET_Q2 = np.array([[_qa, _qb, _qb, _qb], [_qb, _qa, _qb, _qb],
                   [_qb, _qb, _qa, _qb], [_qb, _qb, _qb, _qa]])
TET_W2 = np.full(4, 0.25)
TRI_Q2 = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
TRI_W2 = np.full(3, 1 / 3)


class AssemblyError(ValueError):
    pass


# --------------------------------------------------------------------------
# geometry helpers (vectorised over tets)

def barycentric_gradients(X: np.ndarray):
    """Gradients of the 4 barycentric coordinates and volumes.

    ``X`` has shape (T, 4, 3); returns grads (T, 4, 3) and volumes (T,).
    """
    J = X[:, 1:, :] - X[:, :1, :]
    det = np.linalg.det(J)
    scale = np.abs(J).max(axis=(1, 2)) ** 3
    if np.any(np.abs(det) <= 1e-14 * scale):
        raise AssemblyError("degenerate tetrahedron")
    g = np.empty_like(X)
    g[:, 1:, :] = np.linalg.inv(J).transpose(0, 2, 1)
    g[:, 0, :] = -g[:, 1:, :].sum(axis=1)
    return g, det / 6.0


def whitney_curls(grads: np.ndarray) -> np.ndarray:
    """Constant curls of the 6 local edge functions, shape (T, 6, 3)."""
    return 2.0 * np.cross(grads[:, _LOC_A, :], grads[:, _LOC_B, :])


def whitney_values(grads: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Local edge functions at barycentric points ``bary`` (Q, 4) -> (T, Q, 6, 3)."""
    la = bary[:, _LOC_A]  # (Q, 6)
    lb = bary[:, _LOC_B]
    ga = grads[:, _LOC_A, :]  # (T, 6, 3)
    gb = grads[:, _LOC_B, :]
    return la[None, :, :, None] * gb[:, None] - lb[None, :, :, None] * ga[:, None]


def whitney_pointwise(grads: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Edge functions of tet n at its own point ``bary[n]``: grads (N, 4, 3), bary (N, 4) -> (N, 6, 3)."""
    return (bary[:, _LOC_A, None] * grads[:, _LOC_B, :]
            - bary[:, _LOC_B, None] * grads[:, _LOC_A, :])


def _coefficient_stack(mesh: TetMesh, materials, attr: str) -> np.ndarray:
    mats = _material_map(materials)
    out = np.empty((mesh.n_tets, 3, 3), dtype=complex)
    for r in np.unique(mesh.regions):
        if int(r) not in mats:
            raise AssemblyError(f"no material given for region {int(r)}")
        out[mesh.regions == r] = getattr(mats[int(r)], attr)
    return out


def _material_map(materials) -> dict[int, MaterialSpec]:
    if isinstance(materials, MaterialSpec):
        return {materials.region: materials}
    if isinstance(materials, Mapping):
        return {int(k): v for k, v in materials.items()}
    return {m.region: m for m in materials}


def _batched_element_matrices(X, eps, muinv):
    grads, vol = barycentric_gradients(X)
    curls = whitney_curls(grads)
    K = np.einsum("t,tia,tab,tjb->tij", vol, curls, muinv, curls)
    phi = whitney_values(grads, TET_Q2)
    M = np.einsum("t,q,tqia,tab,tqjb->tij", vol, TET_W2, phi, eps, phi)
    return K, M


def element_matrices(tet_vertices, eps, mu, order: int = 2):
    """Curl-curl and mass matrices of one tet in local edge order.

    ``K[i, j] = int mu^{-1} curl w_j . curl w_i`` and
    ``M[i, j] = int eps w_j . w_i`` for the local edges
    (0,1), (0,2), (0,3), (1,2), (1,3), (2,3).
    """
    if order != 2:
        raise ValueError("only the exact order-2 rule is implemented")
    X = np.asarray(tet_vertices, dtype=float).reshape(1, 4, 3)
    eps = np.asarray(eps, dtype=complex).reshape(1, 3, 3)
    muinv = np.linalg.inv(np.asarray(mu, dtype=complex)).reshape(1, 3, 3)
    K, M = _batched_element_matrices(X, eps, muinv)
    return K[0], M[0]


def _facet_traces(Xf: np.ndarray, nu: np.ndarray, bary: np.ndarray):
    """Tangential traces ``nu x w`` of the 3 facet edge functions.

    ``Xf`` (F, 3, 3) facet vertices, ``nu`` (F, 3) outward normals. Returns
    traces (F, Q, 3, 3) and areas (F,).
    """
    n = np.cross(Xf[:, 1] - Xf[:, 0], Xf[:, 2] - Xf[:, 0])
    twice_area = np.linalg.norm(n, axis=1)
    if np.any(twice_area == 0):
        raise AssemblyError("degenerate boundary facet")
    n = n / twice_area[:, None]
    # surface gradient of l_i is n x (x_{i+2} - x_{i+1}) / 2A (vertex-order normal)
    g = np.stack([np.cross(n, Xf[:, (i + 2) % 3] - Xf[:, (i + 1) % 3]) for i in range(3)], axis=1)
    g /= twice_area[:, None, None]
    la = bary[:, _TRI_A]
    lb = bary[:, _TRI_B]
    w = la[None, :, :, None] * g[:, None, _TRI_B] - lb[None, :, :, None] * g[:, None, _TRI_A]
    traces = np.cross(nu[:, None, None, :], w)
    return traces, 0.5 * twice_area


def facet_sigma_matrix(facet_vertices, nu, sigma):
    """``B[i, j] = int_facet sigma (nu x w_j) . (nu x w_i)`` for edges (0,1), (0,2), (1,2).

    The ``i omega`` prefactor is applied during global assembly.
    """
    Xf = np.asarray(facet_vertices, dtype=float).reshape(1, 3, 3)
    nu = np.asarray(nu, dtype=float).reshape(1, 3)
    sigma = np.asarray(sigma, dtype=complex).reshape(1, 3, 3)
    return _batched_facet_matrices(Xf, nu, sigma)[0]


def _batched_facet_matrices(Xf, nu, sigma):
    tr, area = _facet_traces(Xf, nu, TRI_Q2)
    return np.einsum("f,q,fqia,fab,fqjb->fij", area, TRI_W2, tr, sigma, tr)


def discrete_gradient(mesh: TetMesh) -> sp.csr_matrix:
    """Edge-by-vertex incidence: ``(G p)[edge a->b] = p[b] - p[a]``."""
    ne = mesh.n_edges
    rows = np.repeat(np.arange(ne), 2)
    cols = mesh.edges.ravel()
    vals = np.tile([-1.0, 1.0], ne)
    return sp.csr_matrix((vals, (rows, cols)), shape=(ne, mesh.n_vertices))


# --------------------------------------------------------------------------
# global assembly

@dataclass(frozen=True)
class DofMap:
    n_edges: int
    free: np.ndarray  # bool mask over edges
    index: np.ndarray  # edge -> reduced index, -1 if eliminated

    @classmethod
    def from_eliminated(cls, n_edges: int, eliminated) -> "DofMap":
        free = np.ones(n_edges, dtype=bool)
        free[np.asarray(eliminated, dtype=np.int64)] = False
        index = np.full(n_edges, -1, dtype=np.int64)
        index[free] = np.arange(int(free.sum()))
        return cls(n_edges, free, index)

    @property
    def n_free(self) -> int:
        return int(self.free.sum())

    @property
    def free_edges(self) -> np.ndarray:
        return np.flatnonzero(self.free)

    @property
    def eliminated(self) -> np.ndarray:
        return np.flatnonzero(~self.free)

    def expand(self, x) -> np.ndarray:
        full = np.zeros(self.n_edges, dtype=np.result_type(x, complex))
        full[self.free] = x
        return full

    def restrict(self, full) -> np.ndarray:
        return np.asarray(full)[self.free]


def pec_dofmap(mesh: TetMesh, patches: Mapping[int, ImpedancePatch]) -> DofMap:
    """Free every edge except those lying on a facet of a PEC patch."""
    pec_ids = [pid for pid, p in patches.items() if p.kind == PEC]
    mask = np.isin(mesh.facet_patch, pec_ids)
    return DofMap.from_eliminated(mesh.n_edges, np.unique(mesh.facet_edges[mask]))


def _scatter(mesh_dofs: np.ndarray, local: np.ndarray, n: int) -> sp.csr_matrix:
    """Sum local (E, k, k) blocks into an n x n CSR matrix over global ids (E, k)."""
    k = mesh_dofs.shape[1]
    rows = np.repeat(mesh_dofs, k, axis=1).ravel()
    cols = np.tile(mesh_dofs, (1, k)).ravel()
    vals = local.reshape(len(local), -1).ravel()
    keep = (rows >= 0) & (cols >= 0)
    A = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def _check_patches(mesh: TetMesh, patches: Mapping[int, ImpedancePatch], tol: float = 1e-8):
    normals = mesh.facet_normals()
    for pid in np.unique(mesh.facet_patch):
        if int(pid) not in patches:
            raise AssemblyError(f"no impedance data for boundary patch {int(pid)}")
        p = patches[int(pid)]
        if p.kind == PEC:
            continue  # no boundary integral, the normal is irrelevant
        dev = np.abs(normals[mesh.facet_patch == pid] - p.nu).max()
        if dev > tol:
            raise AssemblyError(f"patch {int(pid)} is not planar with normal {p.nu} (deviation {dev:.2e})")


def effective_sigmas(patches: Mapping[int, ImpedancePatch], eta: float) -> dict[int, np.ndarray]:
    """Boundary coefficient used in assembly: Sigma of the eta-regularised patch."""
    out = {}
    for pid, p in patches.items():
        if p.kind == PEC:
            continue
        q = regularize_lambda(p, p.eta if p.eta > 0 else eta)
        out[int(pid)] = q.sigma
    return out


def assemble_boundary(mesh: TetMesh, dofs: DofMap, sigmas: Mapping[int, np.ndarray]) -> sp.csr_matrix:
    """``int_Gamma sigma (nu x u) . (nu x phi)`` summed over the given patches."""
    sel = np.flatnonzero(np.isin(mesh.facet_patch, list(sigmas)))
    n = dofs.n_free
    if len(sel) == 0:
        return sp.csr_matrix((n, n), dtype=complex)
    Xf = mesh.vertices[mesh.facets[sel]]
    nu = mesh.facet_normals()[sel]
    sig = np.stack([sigmas[int(p)] for p in mesh.facet_patch[sel]])
    B = _batched_facet_matrices(Xf, nu, sig)
    s = mesh.facet_edge_signs[sel]
    B = B * s[:, :, None] * s[:, None, :]
    return _scatter(dofs.index[mesh.facet_edges[sel]], B, n)


@dataclass
class SystemBlocks:
    """Reduced sparse blocks of the absorbing form.

    ``A = K - (omega^2 M + i delta M0) - i omega B``.
    """

    K: sp.csr_matrix
    M: sp.csr_matrix  # eps-weighted mass
    M0: sp.csr_matrix  # identity mass
    B: sp.csr_matrix  # boundary Sigma_eta mass
    omega: float
    delta: float
    dofs: DofMap

    @property
    def A(self) -> sp.csr_matrix:
        w = self.omega
        A = self.K - w * w * self.M - 1j * self.delta * self.M0 - 1j * w * self.B
        return A.tocsr()


def assemble_volume(mesh: TetMesh, materials, dofs: DofMap):
    """Reduced K (mu^{-1}), M (eps) and M0 (identity) matrices."""
    X = mesh.vertices[mesh.tets]
    eps = _coefficient_stack(mesh, materials, "eps")
    muinv = np.linalg.inv(_coefficient_stack(mesh, materials, "mu"))
    Ke, Me = _batched_element_matrices(X, eps, muinv)
    grads, vol = barycentric_gradients(X)
    phi = whitney_values(grads, TET_Q2)
    M0e = np.einsum("t,q,tqia,tqja->tij", vol, TET_W2, phi, phi)
    s = mesh.tet_edge_signs
    ss = s[:, :, None] * s[:, None, :]
    idx = dofs.index[mesh.tet_edges]
    n = dofs.n_free
    return _scatter(idx, Ke * ss, n), _scatter(idx, Me * ss, n), _scatter(idx, M0e * ss, n)


def validate_inputs(materials, patches):
    for m in _material_map(materials).values():
        for name in ("eps", "mu"):
            rep = validate_material(getattr(m, name))
            if not rep.passed:
                raise AssemblyError(f"region {m.region}: {name} is not coercive "
                                    f"({rep.failures()[0].detail})")


def assemble_blocks(mesh: TetMesh, materials, patches: Mapping[int, ImpedancePatch],
                    omega: float, delta: float = 0.0, eta: float = DEFAULT_ETA) -> SystemBlocks:
    if not omega > 0:
        raise ValueError("omega must be positive")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if not eta > 0:
        raise ValueError("eta must be positive")
    validate_inputs(materials, patches)
    _check_patches(mesh, patches)
    dofs = pec_dofmap(mesh, patches)
    K, M, M0 = assemble_volume(mesh, materials, dofs)
    B = assemble_boundary(mesh, dofs, effective_sigmas(patches, eta))
    return SystemBlocks(K, M, M0, B, float(omega), float(delta), dofs)


def assemble_system(mesh: TetMesh, materials, patches, omega: float, delta: float = 0.0,
                    eta: float = DEFAULT_ETA):
    blocks = assemble_blocks(mesh, materials, patches, omega, delta, eta)
    return blocks.A, blocks.dofs


def boundary_identity_mass(mesh: TetMesh, dofs: DofMap, patch_ids=None) -> sp.csr_matrix:
    """Boundary mass ``int |nu x u|^2`` over the listed (default: all) patches."""
    ids = np.unique(mesh.facet_patch) if patch_ids is None else patch_ids
    return assemble_boundary(mesh, dofs, {int(p): np.eye(3, dtype=complex) for p in ids})


# --------------------------------------------------------------------------
# sources and right-hand side

class SourceField:
    """Complex vector field on the mesh: analytic part plus per-element constants.

    ``fn`` maps points (N, 3) to values (N, 3); ``elementwise`` is (T, 3).
    """

    def __init__(self, fn: Callable | None = None, elementwise=None):
        self.fn = fn
        self.elementwise = None if elementwise is None else np.asarray(elementwise, dtype=complex)

    @classmethod
    def zero(cls):
        return cls()

    @classmethod
    def constant(cls, value):
        v = np.asarray(value, dtype=complex).reshape(3)
        return cls(lambda x: np.broadcast_to(v, (len(x), 3)))

    def __call__(self, x, tet_ids) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, 3)
        out = np.zeros((len(x), 3), dtype=complex)
        if self.fn is not None:
            out += np.asarray(self.fn(x), dtype=complex).reshape(-1, 3)
        if self.elementwise is not None:
            out += self.elementwise[np.asarray(tet_ids).reshape(-1)]
        if not np.all(np.isfinite(out)):
            raise ValueError("source field has non-finite values")
        return out

    def scaled(self, c) -> "SourceField":
        fn = None if self.fn is None else (lambda x, f=self.fn: c * np.asarray(f(x), dtype=complex))
        el = None if self.elementwise is None else c * self.elementwise
        return SourceField(fn, el)

    def plus_elementwise(self, values) -> "SourceField":
        el = np.asarray(values, dtype=complex)
        if self.elementwise is not None:
            el = el + self.elementwise
        return SourceField(self.fn, el)

    @property
    def is_zero(self) -> bool:
        return self.fn is None and (self.elementwise is None or not np.any(self.elementwise))


def as_source(f) -> SourceField:
    if f is None:
        return SourceField.zero()
    if isinstance(f, SourceField):
        return f
    if callable(f):
        return SourceField(f)
    return SourceField.constant(f)


def quadrature_points(mesh: TetMesh, bary=TET_Q2) -> np.ndarray:
    """Physical quadrature points (T, Q, 3)."""
    return np.einsum("qv,tvd->tqd", bary, mesh.vertices[mesh.tets])


def sample(mesh: TetMesh, f: SourceField, bary=TET_Q2) -> np.ndarray:
    x = quadrature_points(mesh, bary)
    T, Q = x.shape[:2]
    ids = np.repeat(np.arange(T), Q)
    return f(x.reshape(-1, 3), ids).reshape(T, Q, 3)


def assemble_rhs(mesh: TetMesh, dofs: DofMap, f_e, f_h, materials, omega: float) -> np.ndarray:
    """``b_i = int i omega f_e . w_i + mu^{-1} f_h . curl w_i`` (reduced)."""
    f_e, f_h = as_source(f_e), as_source(f_h)
    X = mesh.vertices[mesh.tets]
    grads, vol = barycentric_gradients(X)
    phi = whitney_values(grads, TET_Q2)
    local = np.zeros((mesh.n_tets, 6), dtype=complex)
    if not f_e.is_zero:
        fe = sample(mesh, f_e)
        local += 1j * omega * np.einsum("t,q,tqa,tqia->ti", vol, TET_W2, fe, phi)
    if not f_h.is_zero:
        muinv = np.linalg.inv(_coefficient_stack(mesh, materials, "mu"))
        fh = sample(mesh, f_h)
        curls = whitney_curls(grads)
        local += np.einsum("t,q,tab,tqb,tia->ti", vol, TET_W2, muinv, fh, curls)
    local *= mesh.tet_edge_signs
    b = np.zeros(mesh.n_edges, dtype=complex)
    np.add.at(b, mesh.tet_edges.ravel(), local.ravel())
    return dofs.restrict(b)


# --------------------------------------------------------------------------
# field evaluation

def element_curls(mesh: TetMesh, E_full) -> np.ndarray:
    """Per-element curl of an edge field given on all edges, (T, 3)."""
    grads, _ = barycentric_gradients(mesh.vertices[mesh.tets])
    coef = np.asarray(E_full)[mesh.tet_edges] * mesh.tet_edge_signs
    return np.einsum("ti,tia->ta", coef, whitney_curls(grads))


def evaluate_edge_field(mesh: TetMesh, E_full, bary) -> np.ndarray:
    """Edge field at barycentric points ``bary`` (Q, 4) of every tet -> (T, Q, 3)."""
    grads, _ = barycentric_gradients(mesh.vertices[mesh.tets])
    coef = np.asarray(E_full)[mesh.tet_edges] * mesh.tet_edge_signs
    return np.einsum("ti,tqia->tqa", coef, whitney_values(grads, np.atleast_2d(bary)))


def centroid_values(mesh: TetMesh, E_full) -> np.ndarray:
    return evaluate_edge_field(mesh, E_full, np.full((1, 4), 0.25))[:, 0, :]


def recover_H(mesh: TetMesh, E_full, f_h, materials, omega: float) -> np.ndarray:
    """Per-element ``H = (i omega mu)^{-1} (curl E - f_h)`` with f_h at centroids."""
    curlE = element_curls(mesh, E_full)
    fh = as_source(f_h)(mesh.centroids(), np.arange(mesh.n_tets))
    mu = _coefficient_stack(mesh, materials, "mu")
    return np.linalg.solve(mu, (curlE - fh)[..., None])[..., 0] / (1j * omega)
