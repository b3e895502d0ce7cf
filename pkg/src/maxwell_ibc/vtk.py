"""Legacy ASCII VTK output of cell-wise fields."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .assembly import centroid_values
from .mesh import TetMesh

VTK_TETRA = 10


def _fmt(x: float) -> str:
    return format(float(x), ".12e")


def export_vtk(path, mesh: TetMesh, E_full, H=None, title: str = "maxwell_ibc field") -> Path:
    """Write an unstructured grid with cell vectors E_re, E_im (and H_re, H_im).

    ``E_full`` holds edge coefficients and is evaluated at tet centroids;
    ``H`` is an array of per-tet vectors, shape (T, 3).
    """
    path = Path(path)
    E = centroid_values(mesh, np.asarray(E_full))
    fields = {"E_re": E.real, "E_im": E.imag}
    if H is not None:
        H = np.asarray(H).reshape(-1, 3)
        if len(H) != len(mesh.tets):
            raise ValueError(f"H has {len(H)} rows, mesh has {len(mesh.tets)} tets")
        fields["H_re"] = H.real
        fields["H_im"] = H.imag

    nv, nt = len(mesh.vertices), len(mesh.tets)
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    lines += [" ".join(_fmt(c) for c in v) for v in mesh.vertices]
    lines.append(f"CELLS {nt} {5 * nt}")
    lines += ["4 " + " ".join(str(int(i)) for i in t) for t in mesh.tets]
    lines.append(f"CELL_TYPES {nt}")
    lines += [str(VTK_TETRA)] * nt
    lines.append(f"CELL_DATA {nt}")
    lines.append("SCALARS region int 1")
    lines.append("LOOKUP_TABLE default")
    lines += [str(int(r)) for r in mesh.regions]
    for name, vals in fields.items():
        lines.append(f"VECTORS {name} double")
        lines += [" ".join(_fmt(c) for c in row) for row in vals]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_vtk_cells(path) -> dict:
    """Minimal reader for files written by :func:`export_vtk` (used in tests)."""
    tokens = Path(path).read_text().split("\n")
    out: dict = {"header": tokens[0], "vectors": {}}
    i = 0
    while i < len(tokens):
        parts = tokens[i].split()
        if not parts:
            i += 1
            continue
        if parts[0] == "POINTS":
            n = int(parts[1])
            out["points"] = np.array([[float(v) for v in tokens[i + 1 + k].split()] for k in range(n)])
            i += n + 1
        elif parts[0] == "CELLS":
            n = int(parts[1])
            out["cells"] = np.array([[int(v) for v in tokens[i + 1 + k].split()] for k in range(n)])
            i += n + 1
        elif parts[0] == "CELL_TYPES":
            n = int(parts[1])
            out["cell_types"] = np.array([int(tokens[i + 1 + k]) for k in range(n)])
            i += n + 1
        elif parts[0] == "VECTORS":
            n = len(out["cells"])
            out["vectors"][parts[1]] = np.array(
                [[float(v) for v in tokens[i + 1 + k].split()] for k in range(n)])
            i += n + 1
        else:
            i += 1
    return out
