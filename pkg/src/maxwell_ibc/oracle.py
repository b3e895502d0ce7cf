"""Brute-force reference assembly for small meshes.

Nothing here shares code with :mod:`maxwell_ibc.assembly`: edge functions
come from symbolic reference-element expressions pushed forward with the
covariant Piola map, integrals use collapsed Gauss-Legendre rules, the
boundary coefficient is built from the Moore-Penrose pseudo-inverse and
PEC edges are found by walking facets.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import sympy

MAX_EDGES = 200


class OracleSizeError(ValueError):
    pass


@lru_cache(maxsize=1)
def _reference_functions():
    xi, eta, zeta = sympy.symbols("xi eta zeta", real=True)
    coords = (xi, eta, zeta)
    lam = [1 - xi - eta - zeta, xi, eta, zeta]
    grad = [[sympy.diff(l, c) for c in coords] for l in lam]
    pairs = [(a, b) for a in range(4) for b in range(a + 1, 4)]
    funcs, curls = [], []
    for a, b in pairs:
        w = [lam[a] * grad[b][k] - lam[b] * grad[a][k] for k in range(3)]
        funcs.append(w)
        curls.append([sympy.diff(w[2], eta) - sympy.diff(w[1], zeta),
                      sympy.diff(w[0], zeta) - sympy.diff(w[2], xi),
                      sympy.diff(w[1], xi) - sympy.diff(w[0], eta)])
    f = sympy.lambdify(coords, funcs, "numpy")
    c = sympy.lambdify(coords, curls, "numpy")

    def values(p):
        out = np.array([[np.broadcast_to(np.asarray(v, float), (len(p),)) for v in row]
                        for row in f(p[:, 0], p[:, 1], p[:, 2])])
        return out.transpose(2, 0, 1)  # (N, 6, 3)

    def curl_values(p):
        out = np.array([[np.broadcast_to(np.asarray(v, float), (len(p),)) for v in row]
                        for row in c(p[:, 0], p[:, 1], p[:, 2])])
        return out.transpose(2, 0, 1)

    return pairs, values, curl_values


def collapsed_tet_rule(n: int = 4):
    """Gauss-Legendre product rule on the unit simplex via the Duffy map."""
    g, w = np.polynomial.legendre.leggauss(n)
    g = 0.5 * (g + 1)
    w = 0.5 * w
    pts, wts = [], []
    for (u, wu), (v, wv), (s, ws) in itertools.product(zip(g, w), repeat=3):
        pts.append([u, v * (1 - u), s * (1 - u) * (1 - v)])
        wts.append(wu * wv * ws * (1 - u) ** 2 * (1 - v))
    return np.array(pts), np.array(wts)


def collapsed_triangle_rule(n: int = 4):
    g, w = np.polynomial.legendre.leggauss(n)
    g = 0.5 * (g + 1)
    w = 0.5 * w
    pts, wts = [], []
    for (u, wu), (v, wv) in itertools.product(zip(g, w), repeat=2):
        pts.append([u, v * (1 - u)])
        wts.append(wu * wv * (1 - u))
    return np.array(pts), np.array(wts)


@dataclass
class DenseSystem:
    A: np.ndarray  # reduced
    edges: list[tuple[int, int]]  # all edges, sorted
    free: list[int]  # indices into ``edges`` kept after PEC elimination
    K: np.ndarray
    M: np.ndarray
    M0: np.ndarray
    B: np.ndarray

    def restrict(self, full):
        return np.asarray(full)[self.free]


def _edge_table(tets):
    return sorted({(min(int(t[a]), int(t[b])), max(int(t[a]), int(t[b])))
                   for t in tets for a in range(4) for b in range(a + 1, 4)})


def _tet_maps(X):
    J = np.column_stack([X[1] - X[0], X[2] - X[0], X[3] - X[0]])
    return J, np.linalg.det(J)


def _materials(materials):
    if hasattr(materials, "region"):
        return {materials.region: materials}
    if isinstance(materials, dict):
        return materials
    return {m.region: m for m in materials}


def _lambdas(patches):
    return {int(k): np.asarray(getattr(v, "lam", v), dtype=complex) for k, v in patches.items()}


def oracle_sigma(lam, nu, eta):
    """Regularised boundary coefficient from the pseudo-inverse of ``lam``."""
    pinv = np.linalg.pinv(lam, rcond=1e-9, hermitian=False)
    kernel_tangential = np.eye(3) - pinv @ lam - np.outer(nu, nu)
    return pinv + kernel_tangential / eta


def dense_assemble(mesh, materials, patches, omega, delta=0.0, eta=1e-6, n_quad=4) -> DenseSystem:
    """Dense reference system ``K - omega^2 M - i delta M0 - i omega B`` on free edges."""
    V = np.asarray(mesh.vertices, float)
    tets = [tuple(int(v) for v in t) for t in mesh.tets]
    edges = _edge_table(tets)
    if len(edges) > MAX_EDGES:
        raise OracleSizeError(f"{len(edges)} edges exceed the oracle limit of {MAX_EDGES}")
    eid = {e: i for i, e in enumerate(edges)}
    n = len(edges)
    mats = _materials(materials)
    lams = _lambdas(patches)
    pairs, ref_vals, ref_curls = _reference_functions()
    qp, qw = collapsed_tet_rule(n_quad)
    phi_hat = ref_vals(qp)  # (Q, 6, 3)
    curl_hat = ref_curls(qp)

    K = np.zeros((n, n), complex)
    M = np.zeros((n, n), complex)
    M0 = np.zeros((n, n), complex)
    for t, region in zip(tets, mesh.regions):
        X = V[list(t)]
        J, det = _tet_maps(X)
        JinvT = np.linalg.inv(J).T
        phi = np.einsum("ab,qib->qia", JinvT, phi_hat)
        curl = np.einsum("ab,qib->qia", J, curl_hat) / det
        sgn = np.array([1 if t[a] < t[b] else -1 for a, b in pairs])
        ids = [eid[(min(t[a], t[b]), max(t[a], t[b]))] for a, b in pairs]
        phi = phi * sgn[None, :, None]
        curl = curl * sgn[None, :, None]
        mat = mats[int(region)]
        eps = np.asarray(mat.eps, complex)
        muinv = np.linalg.inv(np.asarray(mat.mu, complex))
        w = qw * abs(det)
        for i in range(6):
            for j in range(6):
                K[ids[i], ids[j]] += np.sum(w * np.einsum("qa,ab,qb->q", curl[:, i], muinv, curl[:, j]))
                M[ids[i], ids[j]] += np.sum(w * np.einsum("qa,ab,qb->q", phi[:, i], eps, phi[:, j]))
                M0[ids[i], ids[j]] += np.sum(w * np.einsum("qa,qa->q", phi[:, i], phi[:, j]))

    tp, tw = collapsed_triangle_rule(n_quad)
    B = np.zeros((n, n), complex)
    pec_edges = set()
    for facet, pid in zip(mesh.facets, mesh.facet_patch):
        f = [int(v) for v in facet]
        lam = lams[int(pid)]
        fedges = [(min(a, b), max(a, b)) for a, b in itertools.combinations(f, 2)]
        if np.abs(lam).max() == 0:
            pec_edges.update(fedges)
            continue
        owner = next(t for t in tets if set(f) <= set(t))
        X = V[list(owner)]
        J, det = _tet_maps(X)
        P = V[f]
        nrm = np.cross(P[1] - P[0], P[2] - P[0])
        area = 0.5 * np.linalg.norm(nrm)
        nrm /= np.linalg.norm(nrm)
        opposite = V[[v for v in owner if v not in f][0]]
        if np.dot(nrm, P[0] - opposite) < 0:
            nrm = -nrm
        sigma = oracle_sigma(lam, nrm, eta)
        # physical facet points -> owner reference coordinates
        x = P[0] + tp[:, :1] * (P[1] - P[0]) + tp[:, 1:2] * (P[2] - P[0])
        ref = np.linalg.solve(J, (x - X[0]).T).T
        phi = np.einsum("ab,qib->qia", np.linalg.inv(J).T, ref_vals(ref))
        sgn = np.array([1 if owner[a] < owner[b] else -1 for a, b in pairs])
        ids = [eid[(min(owner[a], owner[b]), max(owner[a], owner[b]))] for a, b in pairs]
        tr = np.cross(nrm[None, None, :], phi * sgn[None, :, None])
        w = 2 * area * tw
        for i in range(6):
            for j in range(6):
                B[ids[i], ids[j]] += np.sum(w * np.einsum("qa,ab,qb->q", tr[:, i], sigma, tr[:, j]))

    free = [i for i, e in enumerate(edges) if e not in pec_edges]
    A = K - omega ** 2 * M - 1j * delta * M0 - 1j * omega * B
    sel = np.ix_(free, free)
    return DenseSystem(A[sel], edges, free, K[sel], M[sel], M0[sel], B[sel])


def dense_rhs(mesh, system: DenseSystem, f_e, f_h, materials, omega, n_quad=4) -> np.ndarray:
    """Reference load vector; ``f_e`` and ``f_h`` are callables on (N, 3) points."""
    V = np.asarray(mesh.vertices, float)
    eid = {e: i for i, e in enumerate(system.edges)}
    mats = _materials(materials)
    pairs, ref_vals, ref_curls = _reference_functions()
    qp, qw = collapsed_tet_rule(n_quad)
    b = np.zeros(len(system.edges), complex)
    for t, region in zip(mesh.tets, mesh.regions):
        t = [int(v) for v in t]
        X = V[t]
        J, det = _tet_maps(X)
        x = X[0] + qp @ J.T
        phi = np.einsum("ab,qib->qia", np.linalg.inv(J).T, ref_vals(qp))
        curl = np.einsum("ab,qib->qia", J, ref_curls(qp)) / det
        muinv = np.linalg.inv(np.asarray(mats[int(region)].mu, complex))
        fe = np.asarray(f_e(x), complex).reshape(-1, 3)
        fh = np.asarray(f_h(x), complex).reshape(-1, 3) @ muinv.T
        w = qw * abs(det)
        for i, (a, c) in enumerate(pairs):
            s = 1 if t[a] < t[c] else -1
            e = eid[(min(t[a], t[c]), max(t[a], t[c]))]
            b[e] += s * np.sum(w * (1j * omega * np.einsum("qa,qa->q", fe, phi[:, i])
                                    + np.einsum("qa,qa->q", fh, curl[:, i])))
    return system.restrict(b)


def dense_solve(system: DenseSystem, b) -> np.ndarray:
    return np.linalg.solve(system.A, b)


def cube_mode_multiplicities(max_index: int, length: float = 1.0) -> list[tuple[float, int]]:
    """PEC cube eigenfrequencies with the number of independent modes each.

    A triple with all indices nonzero carries two polarisations, a triple
    with exactly one zero index carries one.
    """
    if max_index < 1:
        return []
    counts: dict[int, int] = {}
    for m, n, p in itertools.product(range(max_index + 1), repeat=3):
        nonzero = (m > 0) + (n > 0) + (p > 0)
        if nonzero < 2:
            continue
        s = m * m + n * n + p * p
        counts[s] = counts.get(s, 0) + (2 if nonzero == 3 else 1)
    return [(math.pi * math.sqrt(s) / length, counts[s]) for s in sorted(counts)]


def analytic_cube_resonances(max_index: int, length: float = 1.0) -> list[float]:
    """Sorted distinct resonance frequencies ``pi sqrt(m^2+n^2+p^2) / L``."""
    return [w for w, _ in cube_mode_multiplicities(max_index, length)]
