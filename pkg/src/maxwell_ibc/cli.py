"""Command line front end: ``maxwell-ibc {validate,solve,sweep,la,export} CONFIG``.

Exit codes: 0 success, 1 validation failure, 2 parse error, 3 singular system.
Reports use fixed formatting so identical configurations give identical output.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .boundary import PEC, build_sigma_theta, classify, kernel_decomposition, validate_lambda, validate_sigma_theta
from .config import ConfigError, RunConfig, dumps
from .linalg import SingularSystemError
from .mesh import MeshError
from .solver import (EnergyBalanceError, MaxwellProblem, compute_delta0, eps_bound, frequency_sweep,
                     limiting_absorption)
from .vtk import export_vtk

EXIT_OK, EXIT_INVALID, EXIT_PARSE, EXIT_SINGULAR = 0, 1, 2, 3

log = logging.getLogger("maxwell_ibc")


class ValidationFailure(Exception):
    pass


FAILED_CONDITION = {
    "(i)": "Lambda nu != 0",
    "(ii)": "range of Lambda not orthogonal to ker Lambda",
    "(iii)": "Lambda not Hermitian coercive on (ker Lambda)^perp",
}


def f(x) -> str:
    return format(float(x) + 0.0, ".10e")  # + 0.0 turns -0.0 into 0.0


def fc(z) -> str:
    z = complex(z)
    return f"{f(z.real)}{'+' if z.imag >= 0 else '-'}{f(abs(z.imag))}j"


def fmat(m, indent="    ") -> list[str]:
    return [indent + "[" + ", ".join(fc(z) for z in row) + "]" for row in np.asarray(m)]


def validation_lines(cfg: RunConfig, mesh) -> tuple[list[str], bool]:
    """Human-readable admissibility report and overall verdict."""
    lines = [f"mesh: {len(mesh.vertices)} vertices, {len(mesh.tets)} tets, "
             f"{len(mesh.edges)} edges, {len(mesh.facets)} boundary facets"]
    ok = True
    for m in cfg.materials:
        for name, rep in m.validate().items():
            for c in rep.checks:
                tag = "ok  " if c.passed else "FAIL"
                ok &= c.passed
                lines.append(f"{tag} region {m.region} {name} {c.name}: {c.detail} = {f(c.value)}")
    normals = cfg.patch_normals(mesh)
    names = {k: v.name for k, v in mesh.patches.items()}
    for p in cfg.patches:
        nu = normals[p.id]
        rank = kernel_decomposition(p.lam, cfg.rank_tol).rank
        kind = classify(rank)
        label = f" ({names[p.id]})" if p.id in names else ""
        lines.append(f"patch {p.id}{label}: kind={kind} rank={rank} normal=[{', '.join(f(c) for c in nu)}]")
        rep = validate_lambda(p.lam, nu, tol=cfg.rank_tol)
        for c in rep.checks:
            tag = "ok  " if c.passed else "FAIL"
            ok &= c.passed
            lines.append(f"  {tag} admissibility {c.name}: {c.detail} = {f(c.value)}")
        if not rep.passed:
            for c in rep.failures():
                lines.append(f"  failed condition {c.name}: {FAILED_CONDITION[c.name]}")
            continue
        sigma, theta = build_sigma_theta(p.lam, nu, cfg.rank_tol)
        lines.append("  Sigma =")
        lines += fmat(sigma)
        if kind == PEC:
            lines.append("  Theta = id")
        else:
            lines.append("  Theta =")
            lines += fmat(theta)
        st = validate_sigma_theta(sigma, theta, tol=cfg.rank_tol)
        for c in st.checks:
            tag = "ok  " if c.passed else "FAIL"
            ok &= c.passed
            lines.append(f"  {tag} Sigma+Theta {c.name}: {f(c.value)}")
        if p.eta is not None:
            lines.append(f"  eta = {f(p.eta)}")
    lines.append("validation: " + ("passed" if ok else "FAILED"))
    return lines, ok


def _setup(cfg: RunConfig):
    mesh = cfg.build_mesh()
    cfg.check_coverage(mesh)
    lines, ok = validation_lines(cfg, mesh)
    return mesh, lines, ok


def _emit(lines: list[str], out_dir: Path | None, name: str):
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / name).write_text(text)


def _problem(cfg: RunConfig, mesh):
    return MaxwellProblem(mesh, cfg.materials, cfg.build_patches(mesh), cfg.build_sources(mesh), cfg.eta)


def _solution_lines(sol) -> list[str]:
    e = sol.energy
    return [f"omega = {f(sol.omega)}", f"delta = {f(sol.delta)}",
            f"free dofs = {sol.dofs.n_free}",
            f"relative residual = {f(sol.residual)}",
            f"||E||_L2 = {f(sol.l2_norm)}",
            f"source power -Im(E^H b) = {f(e.source_power)}",
            f"volume absorption = {f(e.volume_absorbed)}",
            f"boundary absorption = {f(e.boundary_absorbed)}",
            f"energy mismatch = {f(e.mismatch)}"]


def cmd_validate(cfg, args, out_dir):
    mesh, lines, ok = _setup(cfg)
    _emit(lines, out_dir, "validate.txt")
    return EXIT_OK if ok else EXIT_INVALID


def _require_valid(cfg, out_dir):
    mesh, lines, ok = _setup(cfg)
    if not ok:
        _emit(lines, out_dir, "validate.txt")
        raise ValidationFailure("configuration failed validation")
    return mesh


def _need_omega(cfg):
    if cfg.omega is None:
        raise ConfigError("$.omega", "this command needs 'omega'")
    return cfg.omega


def cmd_solve(cfg, args, out_dir, force_vtk=False):
    omega = _need_omega(cfg)
    mesh = _require_valid(cfg, out_dir)
    prob = _problem(cfg, mesh)
    sol = prob.solve(omega, cfg.delta, cfg.tol)
    lines = ["command: solve"] + _solution_lines(sol)
    if force_vtk or args.vtk or cfg.output.get("vtk"):
        target = (out_dir or Path(".")) / "field.vtk"
        target.parent.mkdir(parents=True, exist_ok=True)
        export_vtk(target, mesh, sol.E, sol.H)
        lines.append(f"vtk = {target.name}")
    _emit(lines, out_dir, "solve.txt")
    if out_dir is not None:
        np.save(out_dir / "E.npy", sol.E)
    return EXIT_OK


def cmd_export(cfg, args, out_dir):
    return cmd_solve(cfg, args, out_dir, force_vtk=True)


def cmd_sweep(cfg, args, out_dir):
    if cfg.omegas is None:
        raise ConfigError("$.omegas", "sweep needs 'omegas' or 'omega_range'")
    mesh = _require_valid(cfg, out_dir)
    prob = _problem(cfg, mesh)
    delta = cfg.delta if cfg.delta > 0 else 1e-3
    rep = frequency_sweep(mesh, cfg.materials, prob.patches, prob.sources, cfg.omegas, delta,
                          cfg.eta, cfg.tol, threads=args.threads, problem=prob)
    lines = ["command: sweep", f"delta = {f(delta)}", "omega response boundary_absorption"]
    lines += [f"{f(w)} {f(r)} {f(b)}" for w, r, b in zip(rep.omegas, rep.response, rep.boundary_absorption)]
    lines.append("peaks: " + (" ".join(f(p) for p in rep.peaks) if rep.peaks else "none"))
    _emit(lines, out_dir, "sweep.txt")
    return EXIT_OK


def cmd_la(cfg, args, out_dir):
    omega = _need_omega(cfg)
    if cfg.delta_schedule is None:
        raise ConfigError("$.delta_schedule", "la needs 'delta_schedule'")
    mesh = _require_valid(cfg, out_dir)
    prob = _problem(cfg, mesh)
    res = limiting_absorption(mesh, cfg.materials, prob.patches, prob.sources, omega,
                              cfg.delta_schedule, cfg.eta, cfg.tol, problem=prob)
    d0 = compute_delta0(omega, eps_bound(cfg.materials))
    lines = ["command: la", f"omega = {f(omega)}", f"delta0 = {f(d0)}",
             "delta norm step_gap gap_to_direct gradient_part certified"]
    for s in res.steps:
        gap = "-" if s.step_gap is None else f(s.step_gap)
        direct = "-" if s.gap_to_direct is None else f(s.gap_to_direct)
        lines.append(f"{f(s.delta)} {f(s.norm)} {gap} {direct} {f(s.gradient_part)} "
                     f"{'yes' if s.coercive_certified else 'no'}")
    lines.append("gap slope = " + ("-" if res.gap_slope is None else f(res.gap_slope)))
    lines.append("gradient slope = " + ("-" if res.gradient_slope is None else f(res.gradient_slope)))
    lines.append(f"resonance suspected = {'yes' if res.resonance_suspected else 'no'}")
    _emit(lines, out_dir, "la.txt")
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "solve": cmd_solve, "sweep": cmd_sweep, "la": cmd_la,
            "export": cmd_export}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="maxwell-ibc", description="Maxwell cavity solver with impedance boundaries")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("config", help="JSON configuration file")
    p.add_argument("--output", "-o", default=None, help="directory for reports and field files")
    p.add_argument("--threads", type=int, default=1, help="worker threads for frequency sweeps")
    p.add_argument("--vtk", action="store_true", help="also write field.vtk after solve")
    p.add_argument("--normalized", action="store_true", help="print the normalised configuration and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_PARSE
    try:
        cfg = RunConfig.load(args.config)
        if args.normalized:
            sys.stdout.write(dumps(cfg.to_document()) + "\n")
            return EXIT_OK
        out_dir = Path(args.output) if args.output else (
            Path(cfg.output["dir"]) if "dir" in cfg.output else None)
        return COMMANDS[args.command](cfg, args, out_dir)
    except (ConfigError, MeshError, json.JSONDecodeError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValidationFailure as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except EnergyBalanceError as exc:
        print(f"energy check failed: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SingularSystemError as exc:
        print(f"singular system: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except (ValueError, OSError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
