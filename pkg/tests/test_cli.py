import json
import math

import numpy as np
import pytest

from maxwell_ibc.cli import main
from maxwell_ibc.config import ConfigError, RunConfig
from maxwell_ibc.mesh import generate_box_mesh, write_mesh
from maxwell_ibc.solver import MaxwellProblem, Sources
from maxwell_ibc.boundary import vacuum
from maxwell_ibc.sources import constant
from maxwell_ibc.vtk import read_vtk_cells

from helpers import pec_patches


def base_config(n=2, **extra):
    doc = {
        "mesh": {"box": {"n": [n, n, n], "lengths": [1, 1, 1]}},
        "materials": [{"region": 0, "eps": 1, "mu": 1}],
        "patches": [{"id": i, "lambda": 0} for i in range(6)],
        "omega": 3.0,
    }
    doc.update(extra)
    return doc


def write(tmp_path, doc, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_validate_all_pec(tmp_path, capsys):
    code, out, _ = run(capsys, "validate", write(tmp_path, base_config()))
    assert code == 0
    assert out.count("Theta = id") == 6
    assert out.rstrip().endswith("validation: passed")


def test_validate_normal_in_range(tmp_path, capsys):
    doc = base_config()
    doc["patches"][1]["lambda"] = 1.0  # identity: Lambda nu != 0
    code, out, _ = run(capsys, "validate", write(tmp_path, doc))
    assert code == 1
    assert "FAIL admissibility (i)" in out and "Lambda nu != 0" in out


def test_validate_non_hermitian_block(tmp_path, capsys):
    doc = base_config()
    # patch 5 is zmax with normal e3; non-Hermitian block on span{e1, e2}
    doc["patches"][5]["lambda"] = [[1, 1, 0], [0, 1, 0], [0, 0, 0]]
    code, out, _ = run(capsys, "validate", write(tmp_path, doc))
    assert code == 1
    assert "FAIL admissibility (iii)" in out
    assert "FAIL admissibility (i)" not in out


def test_validate_reports_sigma_and_coercivity(tmp_path, capsys):
    doc = base_config()
    doc["patches"][5]["lambda"] = [[2, [0, -1], 0], [[0, 1], 2, 0], [0, 0, 0]]
    code, out, _ = run(capsys, "validate", write(tmp_path, doc))
    assert code == 0
    block = out[out.index("patch 5"):]
    assert "kind=full_impedance" in block
    assert "admissibility (iii): coercive on kernel complement = 1.0000000000e+00" in block


def test_validate_bad_material(tmp_path, capsys):
    doc = base_config()
    doc["materials"][0]["eps"] = [[1, 0, 0], [0, -1, 0], [0, 0, 1]]
    code, out, _ = run(capsys, "validate", write(tmp_path, doc))
    assert code == 1 and "FAIL region 0 eps coercive" in out


def test_parse_error_reports_location(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text('{"mesh": {"box": {"n": [1, 1, 1]}},\n "materials": [}')
    code, _, err = run(capsys, "validate", str(p))
    assert code == 2 and "broken.json:2:" in err


def test_schema_error_reports_path(tmp_path, capsys):
    doc = base_config()
    doc["materials"][0]["eps"] = [[1, 0], [0, 1]]
    code, _, err = run(capsys, "validate", write(tmp_path, doc))
    assert code == 2 and "$.materials[0].eps" in err


@pytest.mark.parametrize("mutate, where", [
    (lambda d: d.pop("patches"), "$.patches"),
    (lambda d: d["patches"].pop(), "$.patches"),
    (lambda d: d["patches"].append({"id": 0, "lambda": 0}), "$.patches[6].id"),
    (lambda d: d.update(bogus=1), "$.bogus"),
    (lambda d: d.update(delta=-1), "$.delta"),
    (lambda d: d.update(delta_schedule=[1e-3, 1e-2]), "$.delta_schedule"),
    (lambda d: d.update(sources={"f_e": {"type": "gaussian", "amplitude": [1, 0, 0], "center": [0, 0, 0],
                                         "width": 0}}), "$.sources.f_e.width"),
])
def test_schema_errors(tmp_path, capsys, mutate, where):
    doc = base_config()
    mutate(doc)
    code, _, err = run(capsys, "validate", write(tmp_path, doc))
    assert code == 2 and where in err


def test_unknown_command(capsys):
    code, _, _ = run(capsys, "frobnicate", "x.json")
    assert code == 2


def test_solve_zero_source(tmp_path, capsys):
    code, out, _ = run(capsys, "solve", write(tmp_path, base_config()))
    assert code == 0 and "||E||_L2 = 0.0000000000e+00" in out


def test_solve_reports_are_bit_identical(tmp_path, capsys):
    doc = base_config(sources={"f_e": {"type": "gaussian", "amplitude": [[1, 0], [0, 1], 0],
                                       "center": [0.5, 0.5, 0.5], "width": 0.3}},
                      delta=0.01)
    doc["patches"][2]["lambda"] = [[1, 0, 0], [0, 0, 0], [0, 0, 0.5]]  # ymin, normal -e2
    cfg = write(tmp_path, doc)
    assert run(capsys, "solve", cfg, "--output", str(tmp_path / "a"))[0] == 0
    assert run(capsys, "solve", cfg, "--output", str(tmp_path / "b"))[0] == 0
    a = (tmp_path / "a" / "solve.txt").read_bytes()
    assert a == (tmp_path / "b" / "solve.txt").read_bytes()
    assert b"energy mismatch" in a


def test_solve_from_mesh_file(tmp_path, capsys):
    write_mesh(generate_box_mesh(2, 2, 2), tmp_path / "box.mesh")
    doc = base_config(sources={"f_e": {"type": "constant", "value": [1, 0, 0]}})
    doc["mesh"] = {"path": "box.mesh"}
    code, out, _ = run(capsys, "solve", write(tmp_path, doc))
    assert code == 0 and "||E||_L2 = 1.9428305115e-01" in out


def test_solve_with_table_source(tmp_path, capsys):
    mesh = generate_box_mesh(2, 2, 2)
    np.savetxt(tmp_path / "fe.txt", np.tile([1.0, 0, 0, 0, 0, 0], (mesh.n_tets, 1)))
    doc = base_config(sources={"f_e": {"type": "table", "path": "fe.txt"}})
    code, out, _ = run(capsys, "solve", write(tmp_path, doc))
    assert code == 0 and "||E||_L2 = 1.9428305115e-01" in out


def test_singular_system_exit_code(tmp_path, capsys):
    mesh = generate_box_mesh(1, 1, 1)
    prob = MaxwellProblem(mesh, vacuum(), pec_patches(mesh), Sources(constant([1, 1, 1])))
    w = math.sqrt((prob.blocks.K[0, 0] / prob.blocks.M[0, 0]).real)
    doc = base_config(n=1, omega=w, sources={"f_e": {"type": "constant", "value": [1, 1, 1]}})
    code, _, err = run(capsys, "solve", write(tmp_path, doc))
    assert code == 3 and "resonance" in err


def test_solve_refuses_invalid_config(tmp_path, capsys):
    doc = base_config()
    doc["patches"][0]["lambda"] = 1.0
    code, _, err = run(capsys, "solve", write(tmp_path, doc))
    assert code == 1 and "validation" in err


def test_sweep_finds_cube_resonance(tmp_path, capsys):
    doc = base_config(n=8, sources={"f_e": {"type": "cavity_mode"}}, delta=1e-3,
                      omega_range={"start": 4.0, "stop": 4.9, "step": 0.05})
    code, out, _ = run(capsys, "sweep", write(tmp_path, doc), "--threads", "2")
    assert code == 0
    peaks = [float(v) for v in out.split("peaks:")[1].split()]
    assert any(abs(p - math.pi * math.sqrt(2)) <= 0.05 * math.pi * math.sqrt(2) for p in peaks)
    rows = [l for l in out.splitlines() if l[:1].isdigit()]
    assert len(rows) == 19


def test_sweep_thread_independent(tmp_path, capsys):
    doc = base_config(n=3, sources={"f_e": {"type": "cavity_mode"}}, omegas=[4.0, 4.3, 4.6])
    cfg = write(tmp_path, doc)
    _, one, _ = run(capsys, "sweep", cfg, "--threads", "1")
    _, three, _ = run(capsys, "sweep", cfg, "--threads", "3")
    assert one == three


def test_la_table(tmp_path, capsys):
    doc = base_config(n=3, sources={"f_e": {"type": "constant", "value": [1, 1, 0]}},
                      delta_schedule=[1e-1, 1e-2, 1e-3])
    doc["materials"][0]["eps"] = [[1, 0, 0], [0, 1.2, 0], [0, 0, 1.4]]
    code, out, _ = run(capsys, "la", write(tmp_path, doc))
    assert code == 0
    rows = [l.split() for l in out.splitlines() if l[:1].isdigit() and len(l.split()) == 6]
    gaps = [float(r[3]) for r in rows]
    assert len(gaps) == 3 and gaps[0] > gaps[1] > gaps[2]


def test_export_writes_vtk(tmp_path, capsys):
    doc = base_config(sources={"f_e": {"type": "constant", "value": [0, 1, 0]}})
    code, _, _ = run(capsys, "export", write(tmp_path, doc), "--output", str(tmp_path / "out"))
    assert code == 0
    data = read_vtk_cells(tmp_path / "out" / "field.vtk")
    assert data["header"] == "# vtk DataFile Version 3.0"
    assert set(data["vectors"]) == {"E_re", "E_im", "H_re", "H_im"}


def test_normalized_roundtrip(tmp_path, capsys):
    doc = base_config(sources={"f_e": {"type": "gaussian", "amplitude": [1, [0, 2], 0], "center": [0.1, 0.2, 0.3],
                                       "width": 0.25, "wavevector": [1, 0, 0]},
                               "f_h": {"type": "cavity_mode", "amplitude": [0, 1]}},
                      delta_schedule=[0.1, 0.01], omega_range={"start": 1, "stop": 2, "step": 0.25})
    doc["patches"][3]["eta"] = 1e-4
    code, out, _ = run(capsys, "solve", write(tmp_path, doc), "--normalized")
    assert code == 0
    normal = json.loads(out)
    again = RunConfig.parse(normal).to_document()
    assert again == normal
    assert normal["omegas"] == [1.0, 1.25, 1.5, 1.75, 2.0]


def test_parse_shorthands():
    cfg = RunConfig.parse(base_config())
    assert np.array_equal(cfg.materials[0].eps, np.eye(3))
    assert cfg.f_e.kind == "zero"
    with pytest.raises(ConfigError):
        RunConfig.parse([])
