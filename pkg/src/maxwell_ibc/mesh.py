"""Tetrahedral meshes with oriented global edges and tagged boundary facets."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# local edge -> (local vertex a, local vertex b)
TET_EDGES = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
# local face -> local vertices, opposite vertex is the missing one
TET_FACES = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))

BOX_PATCHES = {0: "xmin", 1: "xmax", 2: "ymin", 3: "ymax", 4: "zmin", 5: "zmax"}


class MeshError(ValueError):
    """Invalid mesh data or malformed mesh file."""


@dataclass(frozen=True)
class PatchTag:
    id: int
    name: str


def _signed_volumes(vertices, tets):
    x = vertices[tets]
    d = x[:, 1:, :] - x[:, :1, :]
    return np.linalg.det(d) / 6.0


@dataclass(eq=False)
class TetMesh:
    """Immutable tetrahedral mesh.

    Construct through :meth:`from_arrays` (or the generators/readers) which
    builds the derived edge, incidence and facet-ownership tables.
    """

    vertices: np.ndarray  # (V, 3) float
    tets: np.ndarray  # (T, 4) int, positive orientation
    regions: np.ndarray  # (T,) int
    facets: np.ndarray  # (F, 3) int
    facet_patch: np.ndarray  # (F,) int
    patches: dict[int, PatchTag]
    edges: np.ndarray = field(repr=False)  # (Ne, 2) int, a < b, lexicographic
    tet_edges: np.ndarray = field(repr=False)  # (T, 6) global edge ids
    tet_edge_signs: np.ndarray = field(repr=False)  # (T, 6) +-1
    facet_owner: np.ndarray = field(repr=False)  # (F,) owning tet
    facet_edges: np.ndarray = field(repr=False)  # (F, 3) edges (v0v1, v0v2, v1v2)
    facet_edge_signs: np.ndarray = field(repr=False)

    @classmethod
    def from_arrays(cls, vertices, tets, regions=None, facets=None, facet_patch=None,
                    patches=None) -> "TetMesh":
        vertices = np.ascontiguousarray(vertices, dtype=float)
        tets = np.ascontiguousarray(tets, dtype=np.int64).reshape(-1, 4)
        nv = len(vertices)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError("vertices must have shape (V, 3)")
        if len(tets) == 0:
            raise MeshError("mesh has no tetrahedra")
        if tets.min() < 0 or tets.max() >= nv:
            bad = int(np.flatnonzero((tets < 0).any(1) | (tets >= nv).any(1))[0])
            raise MeshError(f"tet {bad} references a vertex outside 0..{nv - 1}")
        regions = np.zeros(len(tets), dtype=np.int64) if regions is None else \
            np.asarray(regions, dtype=np.int64)
        vol = _signed_volumes(vertices, tets)
        if np.any(vol <= 0):
            bad = int(np.flatnonzero(vol <= 0)[0])
            raise MeshError(f"tet {bad} has non-positive signed volume {vol[bad]:.3e}")

        # global edges, canonical orientation a < b
        loc = np.array(TET_EDGES)
        ends = tets[:, loc]  # (T, 6, 2)
        lo = ends.min(axis=2)
        hi = ends.max(axis=2)
        keys = np.stack([lo.ravel(), hi.ravel()], axis=1)
        edges, inverse = np.unique(keys, axis=0, return_inverse=True)
        tet_edges = inverse.reshape(-1, 6)
        tet_edge_signs = np.where(ends[:, :, 0] < ends[:, :, 1], 1, -1)

        # faces: boundary faces are those owned by exactly one tet
        faces = tets[:, np.array(TET_FACES)]  # (T, 4, 3)
        fsorted = np.sort(faces.reshape(-1, 3), axis=1)
        ukeys, finv, fcount = np.unique(fsorted, axis=0, return_inverse=True,
                                        return_counts=True)
        if np.any(fcount > 2):
            raise MeshError("non-manifold mesh: a face is shared by more than two tets")
        boundary_key_owner = {}
        owners = np.repeat(np.arange(len(tets)), 4)
        for k in np.flatnonzero(fcount[finv] == 1):
            boundary_key_owner[tuple(fsorted[k])] = int(owners[k])

        if facets is None:
            facets = np.zeros((0, 3), dtype=np.int64)
            facet_patch = np.zeros(0, dtype=np.int64)
        facets = np.asarray(facets, dtype=np.int64).reshape(-1, 3)
        facet_patch = np.asarray(facet_patch, dtype=np.int64).reshape(-1)
        if len(facet_patch) != len(facets):
            raise MeshError("facet_patch length does not match facet count")
        if patches is None:
            patches = {int(p): PatchTag(int(p), f"patch{int(p)}")
                       for p in np.unique(facet_patch)}
        else:
            patches = {int(k): (v if isinstance(v, PatchTag) else PatchTag(int(k), str(v)))
                       for k, v in patches.items()}
        for i, p in enumerate(facet_patch):
            if int(p) not in patches:
                raise MeshError(f"facet {i} carries unknown patch id {int(p)}")

        owner = np.empty(len(facets), dtype=np.int64)
        seen = set()
        for i, f in enumerate(facets):
            key = tuple(sorted(int(v) for v in f))
            if key not in boundary_key_owner:
                raise MeshError(f"facet {i} {list(f)} is not a boundary face of the mesh")
            if key in seen:
                raise MeshError(f"facet {i} {list(f)} is listed twice")
            seen.add(key)
            owner[i] = boundary_key_owner[key]
        if len(facets) and len(seen) != len(boundary_key_owner):
            raise MeshError(f"{len(boundary_key_owner) - len(seen)} boundary faces carry no patch")

        # facet edges: local pairs (0,1), (0,2), (1,2) of the stored facet order
        edge_index = {(int(a), int(b)): i for i, (a, b) in enumerate(edges)}
        fe = np.empty((len(facets), 3), dtype=np.int64)
        fs = np.empty((len(facets), 3), dtype=np.int64)
        for i, f in enumerate(facets):
            for j, (p, q) in enumerate(((0, 1), (0, 2), (1, 2))):
                a, b = int(f[p]), int(f[q])
                fe[i, j] = edge_index[(min(a, b), max(a, b))]
                fs[i, j] = 1 if a < b else -1

        arrays = dict(vertices=vertices, tets=tets, regions=regions, facets=facets,
                      facet_patch=facet_patch, edges=edges, tet_edges=tet_edges,
                      tet_edge_signs=tet_edge_signs, facet_owner=owner,
                      facet_edges=fe, facet_edge_signs=fs)
        for a in arrays.values():
            a.flags.writeable = False
        return cls(patches=patches, **arrays)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_facets(self) -> int:
        return len(self.facets)

    def volumes(self) -> np.ndarray:
        return _signed_volumes(self.vertices, self.tets)

    def centroids(self) -> np.ndarray:
        return self.vertices[self.tets].mean(axis=1)

    def boundary_vertices(self) -> np.ndarray:
        """Sorted ids of vertices on the topological boundary.

        Equal to the vertices of the patch facets whenever those cover the
        boundary, which ``from_arrays`` enforces when any facet is given.
        """
        if self.n_facets:
            return np.unique(self.facets)
        faces = np.sort(self.tets[:, np.array(TET_FACES)].reshape(-1, 3), axis=1)
        keys, counts = np.unique(faces, axis=0, return_counts=True)
        return np.unique(keys[counts == 1])

    def interior_vertices(self) -> np.ndarray:
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[self.boundary_vertices()] = False
        return np.flatnonzero(mask)

    def facets_of_patch(self, patch_id: int) -> np.ndarray:
        return np.flatnonzero(self.facet_patch == patch_id)

    def facet_normals(self) -> np.ndarray:
        """Outward unit normals of all boundary facets, shape (F, 3)."""
        x = self.vertices[self.facets]
        n = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
        norm = np.linalg.norm(n, axis=1)
        if np.any(norm == 0):
            raise MeshError(f"degenerate facet {int(np.flatnonzero(norm == 0)[0])}")
        n = n / norm[:, None]
        out = x.mean(axis=1) - self.centroids()[self.facet_owner]
        return n * np.sign(np.einsum("ij,ij->i", n, out))[:, None]

    def facet_areas(self) -> np.ndarray:
        x = self.vertices[self.facets]
        return 0.5 * np.linalg.norm(np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]), axis=1)


def facet_frame(mesh: TetMesh, facet_id: int):
    """Return ``(normal, area, (t1, t2))`` for one boundary facet.

    The normal points out of the owning tet; ``t1`` runs along the first
    facet edge and ``t2 = normal x t1``.
    """
    if not 0 <= facet_id < mesh.n_facets:
        raise MeshError(f"facet {facet_id} does not exist")
    x = mesh.vertices[mesh.facets[facet_id]]
    e1 = x[1] - x[0]
    n = np.cross(e1, x[2] - x[0])
    twice_area = np.linalg.norm(n)
    scale = max(np.linalg.norm(e1), np.linalg.norm(x[2] - x[0])) ** 2
    if twice_area <= 1e-14 * scale or scale == 0:
        raise MeshError(f"facet {facet_id} is degenerate (zero area)")
    n = n / twice_area
    if np.dot(n, x.mean(axis=0) - mesh.vertices[mesh.tets[mesh.facet_owner[facet_id]]].mean(axis=0)) < 0:
        n = -n
    t1 = e1 / np.linalg.norm(e1)
    t2 = np.cross(n, t1)
    return n, 0.5 * twice_area, (t1, t2)


def generate_box_mesh(nx: int, ny: int, nz: int, lengths=(1.0, 1.0, 1.0)) -> TetMesh:
    """Structured box ``[0,Lx]x[0,Ly]x[0,Lz]``, each cell cut into 6 Kuhn tets."""
    counts = (nx, ny, nz)
    if any(int(c) != c or c < 1 for c in counts):
        raise ValueError(f"division counts must be positive integers, got {counts}")
    lengths = tuple(float(v) for v in lengths)
    if len(lengths) != 3 or any(not np.isfinite(v) or v <= 0 for v in lengths):
        raise ValueError(f"box lengths must be three positive numbers, got {lengths}")
    nx, ny, nz = (int(c) for c in counts)
    axes = [np.linspace(0.0, L, n + 1) for L, n in zip(lengths, (nx, ny, nz))]
    gz, gy, gx = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
    vertices = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])

    def vid(i, j, k):
        return i + (nx + 1) * (j + (ny + 1) * k)

    ci, cj, ck = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    ci, cj, ck = ci.ravel(), cj.ravel(), ck.ravel()
    tets = []
    for perm in itertools.permutations(range(3)):
        step = np.zeros(3, dtype=int)
        path = [vid(ci, cj, ck)]
        for axis in perm:
            step[axis] = 1
            path.append(vid(ci + step[0], cj + step[1], ck + step[2]))
        tets.append(np.stack(path, axis=1))
    # interleave so that the 6 tets of one cell are contiguous
    tets = np.stack(tets, axis=1).reshape(-1, 4)
    vol = _signed_volumes(vertices, tets)
    flip = vol < 0
    tets[flip] = tets[flip][:, [1, 0, 2, 3]]

    faces = tets[:, np.array(TET_FACES)].reshape(-1, 3)
    fs = np.sort(faces, axis=1)
    _, inv, cnt = np.unique(fs, axis=0, return_inverse=True, return_counts=True)
    bfaces = faces[cnt[inv] == 1]
    xc = vertices[bfaces].mean(axis=1)
    tol = 1e-9 * max(lengths)
    patch = np.full(len(bfaces), -1, dtype=np.int64)
    for axis in range(3):
        patch[np.abs(xc[:, axis]) < tol] = 2 * axis
        patch[np.abs(xc[:, axis] - lengths[axis]) < tol] = 2 * axis + 1
    assert np.all(patch >= 0)
    return TetMesh.from_arrays(vertices, tets, None, bfaces, patch,
                               {k: PatchTag(k, v) for k, v in BOX_PATCHES.items()})


def write_mesh(mesh: TetMesh, path) -> None:
    lines = ["tetmesh 1"]
    for pid in sorted(mesh.patches):
        lines.append(f"# patch {pid} {mesh.patches[pid].name}")
    lines.append(str(mesh.n_vertices))
    lines += [" ".join(repr(float(c)) for c in v) for v in mesh.vertices]
    lines.append(str(mesh.n_tets))
    lines += [f"{t[0]} {t[1]} {t[2]} {t[3]} {r}" for t, r in zip(mesh.tets, mesh.regions)]
    lines.append(str(mesh.n_facets))
    lines += [f"{f[0]} {f[1]} {f[2]} {p}" for f, p in zip(mesh.facets, mesh.facet_patch)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> TetMesh:
    """Parse the ASCII ``tetmesh 1`` format.

    ``# patch <id> <name>`` comment lines declare patch names; when any are
    present, facets referring to undeclared ids are rejected.
    """
    records = []  # (line number, tokens)
    patches = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        text = raw.strip()
        if text.startswith("#"):
            tok = text[1:].split()
            if len(tok) >= 3 and tok[0] == "patch":
                try:
                    pid = int(tok[1])
                except ValueError:
                    raise MeshError(f"line {lineno}: bad patch declaration") from None
                patches[pid] = PatchTag(pid, " ".join(tok[2:]))
            continue
        text = text.split("#", 1)[0].strip()
        if text:
            records.append((lineno, text.split()))

    it = iter(records)

    def take(kind):
        try:
            return next(it)
        except StopIteration:
            raise MeshError(f"unexpected end of file while reading {kind}") from None

    lineno, tok = take("header")
    if tok != ["tetmesh", "1"]:
        raise MeshError(f"line {lineno}: malformed header, expected 'tetmesh 1'")

    def block(kind, width, conv):
        lineno, tok = take(f"{kind} count")
        if len(tok) != 1:
            raise MeshError(f"line {lineno}: expected a single {kind} count")
        try:
            n = int(tok[0])
        except ValueError:
            raise MeshError(f"line {lineno}: bad {kind} count {tok[0]!r}") from None
        rows, linenos = [], []
        for _ in range(n):
            lineno, tok = take(kind)
            if len(tok) != width:
                raise MeshError(f"line {lineno}: {kind} record needs {width} fields")
            try:
                rows.append([conv(t) for t in tok])
            except ValueError:
                raise MeshError(f"line {lineno}: malformed {kind} record") from None
            linenos.append(lineno)
        return rows, linenos

    verts, _ = block("vertex", 3, float)
    tets, tet_lines = block("tet", 5, int)
    facets, facet_lines = block("facet", 4, int)
    extra = next(it, None)
    if extra is not None:
        raise MeshError(f"line {extra[0]}: trailing data after facet block")

    nv = len(verts)
    vertices = np.array(verts, dtype=float).reshape(-1, 3)
    tet_arr = np.array(tets, dtype=np.int64).reshape(-1, 5)
    fac_arr = np.array(facets, dtype=np.int64).reshape(-1, 4)
    for arr, lines, kind, width in ((tet_arr, tet_lines, "tet", 4), (fac_arr, facet_lines, "facet", 3)):
        for row, ln in zip(arr, lines):
            if np.any(row[:width] < 0) or np.any(row[:width] >= nv):
                raise MeshError(f"line {ln}: {kind} references vertex outside 0..{nv - 1}")
    if len(tet_arr):
        vol = _signed_volumes(vertices, tet_arr[:, :4])
        if np.any(vol <= 0):
            k = int(np.flatnonzero(vol <= 0)[0])
            raise MeshError(f"line {tet_lines[k]}: tet has non-positive volume {vol[k]:.3e}")
    if patches:
        for row, ln in zip(fac_arr, facet_lines):
            if int(row[3]) not in patches:
                raise MeshError(f"line {ln}: facet carries unknown patch id {int(row[3])}")
    try:
        return TetMesh.from_arrays(vertices, tet_arr[:, :4], tet_arr[:, 4], fac_arr[:, :3],
                                   fac_arr[:, 3], patches or None)
    except MeshError as exc:
        raise MeshError(f"{path}: {exc}") from None
