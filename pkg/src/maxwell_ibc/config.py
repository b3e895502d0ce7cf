"""JSON run configuration: parsing, normalisation and problem construction.

Complex numbers are written as ``[re, im]``; a bare number is accepted as
shorthand for a real value. Matrices are 3x3 nested lists of such numbers,
or a single number meaning a multiple of the identity.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from . import sources as presets
from .assembly import DEFAULT_ETA, SourceField
from .boundary import DEFAULT_TOL, ImpedancePatch, MaterialSpec
from .linalg import DEFAULT_RTOL
from .mesh import TetMesh, generate_box_mesh, read_mesh


class ConfigError(ValueError):
    """Malformed configuration; ``where`` is a JSON path or a line/column."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


def _complex(v, where) -> complex:
    if isinstance(v, bool):
        raise ConfigError(where, "expected a number or [re, im]")
    if isinstance(v, (int, float)):
        return complex(float(v), 0.0)
    if isinstance(v, list) and len(v) == 2 and all(isinstance(t, (int, float)) and not isinstance(t, bool) for t in v):
        return complex(float(v[0]), float(v[1]))
    raise ConfigError(where, "expected a number or [re, im]")


def _real(v, where, positive=False, nonneg=False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(where, "expected a real number")
    v = float(v)
    if not np.isfinite(v):
        raise ConfigError(where, "must be finite")
    if positive and v <= 0:
        raise ConfigError(where, "must be positive")
    if nonneg and v < 0:
        raise ConfigError(where, "must be nonnegative")
    return v


def _vec(v, where, cplx=True) -> np.ndarray:
    if not isinstance(v, list) or len(v) != 3:
        raise ConfigError(where, "expected a list of 3 entries")
    if cplx:
        return np.array([_complex(t, f"{where}[{i}]") for i, t in enumerate(v)])
    return np.array([_real(t, f"{where}[{i}]") for i, t in enumerate(v)])


def _mat(v, where) -> np.ndarray:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v) * np.eye(3, dtype=complex)
    if not isinstance(v, list) or len(v) != 3:
        raise ConfigError(where, "expected a 3x3 matrix")
    return np.array([_vec(row, f"{where}[{i}]") for i, row in enumerate(v)])


def _enc_complex(z: complex):
    return [float(z.real), float(z.imag)]


def _enc_mat(m) -> list:
    return [[_enc_complex(z) for z in row] for row in np.asarray(m)]


@dataclass
class SourceSpec:
    kind: str = "zero"
    params: dict = field(default_factory=dict)

    KINDS = ("zero", "constant", "gaussian", "cavity_mode", "table")

    @classmethod
    def parse(cls, doc, where) -> "SourceSpec":
        if doc is None:
            return cls()
        if not isinstance(doc, dict) or "type" not in doc:
            raise ConfigError(where, "source needs a 'type'")
        kind = doc["type"]
        if kind not in cls.KINDS:
            raise ConfigError(f"{where}.type", f"unknown source type {kind!r}")
        p = {}
        if kind == "constant":
            p["value"] = _vec(doc.get("value"), f"{where}.value")
        elif kind == "gaussian":
            p["amplitude"] = _vec(doc.get("amplitude"), f"{where}.amplitude")
            p["center"] = _vec(doc.get("center"), f"{where}.center", cplx=False)
            p["width"] = _real(doc.get("width"), f"{where}.width", positive=True)
            p["wavevector"] = _vec(doc.get("wavevector", [0, 0, 0]), f"{where}.wavevector", cplx=False)
        elif kind == "cavity_mode":
            p["amplitude"] = _complex(doc.get("amplitude", 1.0), f"{where}.amplitude")
        elif kind == "table":
            if not isinstance(doc.get("path"), str):
                raise ConfigError(f"{where}.path", "expected a file path")
            p["path"] = doc["path"]
        return cls(kind, p)

    def to_document(self):
        d: dict[str, Any] = {"type": self.kind}
        for k, v in self.params.items():
            if k in ("value", "amplitude") and np.ndim(v) == 1:
                d[k] = [_enc_complex(z) for z in v]
            elif k == "amplitude":
                d[k] = _enc_complex(v)
            elif k in ("center", "wavevector"):
                d[k] = [float(t) for t in v]
            else:
                d[k] = v
        return d

    def build(self, lengths=(1.0, 1.0, 1.0), base: Path | None = None) -> SourceField:
        p = self.params
        if self.kind == "zero":
            return SourceField.zero()
        if self.kind == "constant":
            return presets.constant(p["value"])
        if self.kind == "gaussian":
            return presets.gaussian(p["amplitude"], p["center"], p["width"], p["wavevector"])
        if self.kind == "cavity_mode":
            return presets.cavity_mode(lengths, p["amplitude"])
        path = Path(p["path"])
        if base is not None and not path.is_absolute():
            path = base / path
        return presets.load_table(path)


@dataclass
class PatchSpec:
    id: int
    lam: np.ndarray
    eta: float | None = None


@dataclass
class RunConfig:
    mesh: dict
    materials: list[MaterialSpec]
    patches: list[PatchSpec]
    f_e: SourceSpec = field(default_factory=SourceSpec)
    f_h: SourceSpec = field(default_factory=SourceSpec)
    omega: float | None = None
    omegas: list[float] | None = None
    delta: float = 0.0
    delta_schedule: list[float] | None = None
    eta: float = DEFAULT_ETA
    tol: float = DEFAULT_RTOL
    rank_tol: float = DEFAULT_TOL
    output: dict = field(default_factory=dict)
    base_dir: Path | None = None

    # -- parsing -----------------------------------------------------------
    @classmethod
    def parse(cls, doc, base_dir=None) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("$", "configuration must be a JSON object")
        known = {"mesh", "materials", "patches", "sources", "omega", "omegas", "omega_range",
                 "delta", "delta_schedule", "eta", "tol", "rank_tol", "output"}
        for k in doc:
            if k not in known:
                raise ConfigError(f"$.{k}", "unknown key")
        mesh = doc.get("mesh")
        if not isinstance(mesh, dict) or not ({"box", "path"} & set(mesh)):
            raise ConfigError("$.mesh", "expected {'box': {...}} or {'path': ...}")
        if "box" in mesh:
            box = mesh["box"]
            if not isinstance(box, dict):
                raise ConfigError("$.mesh.box", "expected an object")
            n = box.get("n")
            if not (isinstance(n, list) and len(n) == 3 and all(isinstance(t, int) and not isinstance(t, bool) for t in n)):
                raise ConfigError("$.mesh.box.n", "expected three integers")
            if any(t < 1 for t in n):
                raise ConfigError("$.mesh.box.n", "division counts must be >= 1")
            lengths = [_real(t, f"$.mesh.box.lengths[{i}]", positive=True)
                       for i, t in enumerate(box.get("lengths", [1.0, 1.0, 1.0]))]
            if len(lengths) != 3:
                raise ConfigError("$.mesh.box.lengths", "expected three lengths")
            mesh = {"box": {"n": list(n), "lengths": lengths}}
        else:
            if not isinstance(mesh["path"], str):
                raise ConfigError("$.mesh.path", "expected a file path")
            mesh = {"path": mesh["path"]}

        mats = doc.get("materials")
        if not isinstance(mats, list) or not mats:
            raise ConfigError("$.materials", "expected a non-empty list")
        materials, seen = [], set()
        for i, m in enumerate(mats):
            w = f"$.materials[{i}]"
            if not isinstance(m, dict) or not isinstance(m.get("region"), int):
                raise ConfigError(w, "expected {'region': int, 'eps': ..., 'mu': ...}")
            if m["region"] in seen:
                raise ConfigError(f"{w}.region", f"region {m['region']} listed twice")
            seen.add(m["region"])
            materials.append(MaterialSpec(m["region"], _mat(m.get("eps", 1.0), f"{w}.eps"),
                                          _mat(m.get("mu", 1.0), f"{w}.mu")))

        pats = doc.get("patches")
        if not isinstance(pats, list) or not pats:
            raise ConfigError("$.patches", "expected a non-empty list")
        patches, seen = [], set()
        for i, p in enumerate(pats):
            w = f"$.patches[{i}]"
            if not isinstance(p, dict) or not isinstance(p.get("id"), int):
                raise ConfigError(w, "expected {'id': int, 'lambda': ...}")
            if p["id"] in seen:
                raise ConfigError(f"{w}.id", f"patch {p['id']} listed twice")
            seen.add(p["id"])
            eta = None if p.get("eta") is None else _real(p["eta"], f"{w}.eta", positive=True)
            patches.append(PatchSpec(p["id"], _mat(p.get("lambda", 0.0), f"{w}.lambda"), eta))

        src = doc.get("sources", {}) or {}
        if not isinstance(src, dict):
            raise ConfigError("$.sources", "expected an object")
        cfg = cls(mesh, materials, patches,
                  SourceSpec.parse(src.get("f_e"), "$.sources.f_e"),
                  SourceSpec.parse(src.get("f_h"), "$.sources.f_h"),
                  base_dir=Path(base_dir) if base_dir else None)

        if "omega" in doc:
            cfg.omega = _real(doc["omega"], "$.omega", positive=True)
        if "omegas" in doc:
            if not isinstance(doc["omegas"], list) or not doc["omegas"]:
                raise ConfigError("$.omegas", "expected a non-empty list")
            cfg.omegas = [_real(v, f"$.omegas[{i}]", positive=True) for i, v in enumerate(doc["omegas"])]
        if "omega_range" in doc:
            r = doc["omega_range"]
            if not isinstance(r, dict):
                raise ConfigError("$.omega_range", "expected {start, stop, step}")
            a = _real(r.get("start"), "$.omega_range.start", positive=True)
            b = _real(r.get("stop"), "$.omega_range.stop", positive=True)
            h = _real(r.get("step"), "$.omega_range.step", positive=True)
            if b < a:
                raise ConfigError("$.omega_range", "stop must not be below start")
            count = int(np.floor((b - a) / h + 1e-9)) + 1
            cfg.omegas = [round(a + k * h, 12) for k in range(count)]
        if cfg.omegas is not None and any(y <= x for x, y in zip(cfg.omegas, cfg.omegas[1:])):
            raise ConfigError("$.omegas", "must be strictly increasing")
        cfg.delta = _real(doc.get("delta", 0.0), "$.delta", nonneg=True)
        if "delta_schedule" in doc:
            s = doc["delta_schedule"]
            if not isinstance(s, list) or not s:
                raise ConfigError("$.delta_schedule", "expected a non-empty list")
            cfg.delta_schedule = [_real(v, f"$.delta_schedule[{i}]", positive=True) for i, v in enumerate(s)]
            if any(y >= x for x, y in zip(cfg.delta_schedule, cfg.delta_schedule[1:])):
                raise ConfigError("$.delta_schedule", "must be strictly decreasing")
        cfg.eta = _real(doc.get("eta", DEFAULT_ETA), "$.eta", positive=True)
        cfg.tol = _real(doc.get("tol", DEFAULT_RTOL), "$.tol", positive=True)
        cfg.rank_tol = _real(doc.get("rank_tol", DEFAULT_TOL), "$.rank_tol", positive=True)
        out = doc.get("output", {}) or {}
        if not isinstance(out, dict):
            raise ConfigError("$.output", "expected an object")
        cfg.output = {k: out[k] for k in ("dir", "vtk") if k in out}
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from None
        except OSError as exc:
            raise ConfigError(str(path), exc.strerror or "cannot read file") from None
        return cls.parse(doc, base_dir=path.parent)

    def to_document(self) -> dict:
        """Normalised JSON document; ``parse(to_document())`` reproduces the config."""
        doc: dict[str, Any] = {"mesh": self.mesh}
        doc["materials"] = [{"region": m.region, "eps": _enc_mat(m.eps), "mu": _enc_mat(m.mu)}
                            for m in self.materials]
        doc["patches"] = []
        for p in self.patches:
            d = {"id": p.id, "lambda": _enc_mat(p.lam)}
            if p.eta is not None:
                d["eta"] = p.eta
            doc["patches"].append(d)
        doc["sources"] = {"f_e": self.f_e.to_document(), "f_h": self.f_h.to_document()}
        if self.omega is not None:
            doc["omega"] = self.omega
        if self.omegas is not None:
            doc["omegas"] = list(self.omegas)
        doc["delta"] = self.delta
        if self.delta_schedule is not None:
            doc["delta_schedule"] = list(self.delta_schedule)
        doc["eta"] = self.eta
        doc["tol"] = self.tol
        doc["rank_tol"] = self.rank_tol
        doc["output"] = dict(self.output)
        return doc

    # -- problem construction ---------------------------------------------
    def build_mesh(self) -> TetMesh:
        if "box" in self.mesh:
            b = self.mesh["box"]
            return generate_box_mesh(*b["n"], lengths=b["lengths"])
        path = Path(self.mesh["path"])
        if self.base_dir is not None and not path.is_absolute():
            path = self.base_dir / path
        return read_mesh(path)

    def lengths(self, mesh: TetMesh):
        return tuple(np.ptp(mesh.vertices, axis=0))

    def patch_normals(self, mesh: TetMesh) -> dict[int, np.ndarray]:
        """Outward normal of each patch.

        Impedance patches must be planar; a curved PEC patch is accepted
        (its normal never enters the boundary integral).
        """
        normals = mesh.facet_normals()
        lam = {p.id: p.lam for p in self.patches}
        out = {}
        for pid in np.unique(mesh.facet_patch):
            n = normals[mesh.facet_patch == pid]
            curved = np.abs(n - n[0]).max() > 1e-8
            if curved and np.abs(lam.get(int(pid), 0.0)).max() > 0:
                raise ConfigError(f"patch {int(pid)}", "impedance patch is not planar")
            out[int(pid)] = n[0]
        return out

    def check_coverage(self, mesh: TetMesh):
        regions = {int(r) for r in np.unique(mesh.regions)}
        given = {m.region for m in self.materials}
        if regions != given:
            raise ConfigError("$.materials", f"regions in mesh {sorted(regions)} != configured {sorted(given)}")
        pids = {int(p) for p in np.unique(mesh.facet_patch)}
        given = {p.id for p in self.patches}
        if pids != given:
            raise ConfigError("$.patches", f"patches in mesh {sorted(pids)} != configured {sorted(given)}")

    def build_patches(self, mesh: TetMesh) -> dict[int, ImpedancePatch]:
        normals = self.patch_normals(mesh)
        out = {}
        for p in self.patches:
            patch = ImpedancePatch.from_lambda(p.id, p.lam, normals[p.id], tol=self.rank_tol)
            if p.eta is not None:
                patch = replace(patch, eta=p.eta)
            out[p.id] = patch
        return out

    def build_sources(self, mesh: TetMesh):
        from .solver import Sources
        L = self.lengths(mesh)
        return Sources(self.f_e.build(L, self.base_dir), self.f_h.build(L, self.base_dir))


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True)
