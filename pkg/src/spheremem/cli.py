"""Command-line front end tying meshing, solves and flows into reproducible runs.

Every config-driven run writes a plain-text manifest (config echo, code
version, mesh checksum, wall clock, per-stage status) to the output
directory, also on failure with the failing stage identified.  Exit codes:
0 success, 1 domain error, 2 usage error.
"""
from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import __version__
from .config import POINT_PRESETS, RunConfig, load_config
from .errors import ConfigError, SphereMemError
from .mesh import build_icosphere, mesh_checksum, mesh_stats, validate_closed
from .model import ModelParams, assemble_quadratic_form
from .oracle import taylor_consistency
from .phasefield import (
    PhaseFieldParams,
    PhaseState,
    closed_form_multipliers,
    field_correlation,
    initial_state,
    run_flow,
)
from .points import (
    ConstraintSet,
    convergence_study,
    equator_points,
    icosahedron_points,
    polar_ring_points,
    solve_hard,
    solve_penalty,
)
from .vtk_io import write_vtk


class Manifest:
    """Per-run record; written to <out_dir>/manifest.txt even on failure."""

    def __init__(self, cfg: RunConfig, subcommand: str):
        self.cfg = cfg
        self.subcommand = subcommand
        self.stages: list[tuple[str, str]] = []
        self.t0 = time.perf_counter()
        self.checksum = "-"

    def stage(self, name: str, status: str = "ok"):
        self.stages.append((name, status))

    def write(self):
        os.makedirs(self.cfg.out_dir, exist_ok=True)
        path = os.path.join(self.cfg.out_dir, "manifest.txt")
        with open(path, "w") as fh:
            fh.write(f"subcommand: {self.subcommand}\n")
            fh.write(f"version: {__version__}\n")
            fh.write(f"mesh_checksum: {self.checksum}\n")
            fh.write(f"wall_clock_s: {time.perf_counter() - self.t0:.3f}\n")
            fh.write("stages:\n")
            for name, status in self.stages:
                fh.write(f"  {name}: {status}\n")
            fh.write("config:\n")
            for line in self.cfg.echo().splitlines():
                fh.write(f"  {line}\n")
        return path


def _out(cfg: RunConfig, name: str) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    return os.path.join(cfg.out_dir, name)


def _build_form(cfg: RunConfig, manifest: Manifest):
    mesh = build_icosphere(cfg.R, cfg.level)
    manifest.checksum = mesh_checksum(mesh)
    manifest.stage("mesh")
    form = assemble_quadratic_form(mesh, ModelParams(cfg.kappa, cfg.sigma, cfg.R))
    manifest.stage("assemble")
    return mesh, form


def _constraint_points(cfg: RunConfig) -> tuple[np.ndarray, np.ndarray]:
    """Resolve the [points] section to (points, heights)."""
    preset = cfg.get("points", "preset", "icosahedron", str)
    if preset not in POINT_PRESETS:
        raise ConfigError(f"[points] preset must be one of {POINT_PRESETS}, got {preset!r}")
    if preset == "icosahedron":
        pts = icosahedron_points(cfg.R)
        heights = cfg.floats("points", "heights", [1.0])
    elif preset == "equator":
        count = cfg.get("points", "count", 10, int)
        pts = equator_points(count, cfg.R)
        heights = cfg.floats("points", "heights", [1.0])
    elif preset == "polar_rings":
        angle = cfg.get("points", "ring_angle_deg", 10.0, float)
        per_ring = cfg.get("points", "points_per_ring", 6, int)
        pts, h = polar_ring_points(angle, per_ring, cfg.R)
        heights = cfg.floats("points", "heights", list(h))
    else:
        pts = cfg.point_array()
        heights = cfg.floats("points", "heights", [1.0])
    heights = np.asarray(heights, dtype=float)
    if heights.size == 1:
        heights = np.full(pts.shape[0], heights[0])
    if heights.size != pts.shape[0]:
        raise ConfigError(
            f"[points] heights has {heights.size} entries for {pts.shape[0]} points"
        )
    return pts, heights


def _write_solution(cfg: RunConfig, mesh, u: np.ndarray, stem: str):
    """Emit the field on the sphere plus a displaced surface for viewing."""
    write_vtk(_out(cfg, f"{stem}.vtk"), mesh, {"u": u})
    rho = cfg.get("points", "rho_visual", 1.0, float)
    nu = mesh.vertices / cfg.R
    from .mesh import TriangleMesh

    displaced = TriangleMesh(
        mesh.vertices + rho * u[:, None] * nu, mesh.triangles, radius_hint=None
    )
    write_vtk(_out(cfg, f"{stem}_displaced.vtk"), displaced, {"u": u})


def _report_csv(path: str, report, points: np.ndarray):
    with open(path, "w") as fh:
        fh.write("point_index [1],x [length],y [length],z [length],"
                 "value [length],residual [length]\n")
        for j, p in enumerate(points):
            fh.write(f"{j},{p[0]:.17g},{p[1]:.17g},{p[2]:.17g},"
                     f"{report.point_values[j]:.17g},{report.point_residuals[j]:.17g}\n")
        fh.write(f"# energy: {report.energy:.17g}\n")


# -- subcommands ---------------------------------------------------------------

def cmd_mesh(args) -> int:
    mesh = build_icosphere(args.R, args.level)
    validate_closed(mesh)
    write_vtk(args.out, mesh)
    stats = mesh_stats(mesh)
    print(f"wrote {args.out}: {stats.num_vertices} points, "
          f"{stats.num_triangles} triangles, h_max {stats.h_max:.4g}")
    return 0


def cmd_validate(args) -> int:
    mesh = build_icosphere(args.R, args.level)
    validate_closed(mesh)
    stats = mesh_stats(mesh)
    area_err = abs(stats.total_area - 4 * np.pi * args.R**2) / (4 * np.pi * args.R**2)
    vol_err = abs(stats.enclosed_volume - 4 / 3 * np.pi * args.R**3) / (4 / 3 * np.pi * args.R**3)
    print(f"closed oriented mesh: {stats.num_vertices} vertices")
    print(f"area relative error: {area_err:.3e}")
    print(f"volume relative error: {vol_err:.3e}")
    form = assemble_quadratic_form(mesh, ModelParams(1.0, 1.0, args.R))
    asym = abs(form.A - form.A.T).max()
    print(f"operator asymmetry: {asym:.3e}")
    ones = np.ones(mesh.num_vertices)
    a11 = form.evaluate(ones, ones)
    print(f"a(1,1) + 8 pi sigma: {a11 + 8 * np.pi:.3e}")
    modes = form.normal_modes()
    worst = max(
        float(np.linalg.norm((form.A @ modes[i]) / np.sqrt(form.m_lumped)))
        for i in range(1, 4)
    )
    print(f"normal-mode residual: {worst:.3e}")
    if area_err > 1e-1 or vol_err > 1e-1 or asym > 1e-12:
        raise SphereMemError("validation thresholds exceeded")
    print("validate: ok")
    return 0


def cmd_points(args, hard: bool) -> int:
    cfg = load_config(args.config)
    manifest = Manifest(cfg, "points-hard" if hard else "points-penalty")
    try:
        mesh, form = _build_form(cfg, manifest)
        pts, heights = _constraint_points(cfg)
        if hard:
            cs = ConstraintSet(points=pts, heights=heights, delta=None)
            u, reactions, report = solve_hard(form, cs)
        else:
            delta = cfg.get("points", "delta", 1e-4, float)
            cs = ConstraintSet(points=pts, heights=heights, delta=delta)
            u, report = solve_penalty(form, cs)
        manifest.stage("solve")
        stem = "hard" if hard else "penalty"
        _write_solution(cfg, mesh, u, stem)
        _report_csv(_out(cfg, f"{stem}_report.csv"), report, pts)
        manifest.stage("output")
        print(f"energy: {report.energy:.10g}")
        print(f"max point residual: {np.max(np.abs(report.point_residuals)):.3e}")
    except Exception:
        manifest.stage("failed", "error")
        manifest.write()
        raise
    manifest.write()
    return 0


def cmd_penalty_study(args) -> int:
    cfg = load_config(args.config)
    manifest = Manifest(cfg, "penalty-study")
    try:
        mesh, form = _build_form(cfg, manifest)
        pts, heights = _constraint_points(cfg)
        deltas = cfg.floats("penalty_study", "deltas",
                            [1e-2, 1e-3, 1e-4, 1e-5, 1e-6])
        cs = ConstraintSet(points=pts, heights=heights, delta=deltas[0])
        table = convergence_study(form, cs, deltas)
        manifest.stage("study")
        with open(_out(cfg, "penalty_rates.csv"), "w") as fh:
            fh.write(table.to_csv())
        manifest.stage("output")
        print(f"fitted rate: {table.slope:.4f}")
    except Exception:
        manifest.stage("failed", "error")
        manifest.write()
        raise
    manifest.write()
    return 0


def cmd_taylor(args) -> int:
    cfg = load_config(args.config)
    manifest = Manifest(cfg, "taylor-check")
    try:
        mesh, form = _build_form(cfg, manifest)
        field = cfg.get("taylor", "field", "xy", str)
        x = mesh.vertices / cfg.R
        harmonics = {
            "xy": x[:, 0] * x[:, 1],
            "yz": x[:, 1] * x[:, 2],
            "xz": x[:, 0] * x[:, 2],
            "z2": x[:, 2] ** 2 - 1.0 / 3.0,
        }
        if field not in harmonics:
            raise ConfigError(f"[taylor] field must be one of {sorted(harmonics)}")
        u = harmonics[field]
        mu = cfg.get("taylor", "mu", 0.5, float)
        rho_list = cfg.floats("taylor", "rho_list", [0.1, 0.05, 0.025, 0.0125])
        reconstruction = cfg.get("taylor", "reconstruction", "lumped", str)
        report = taylor_consistency(form, u, mu, rho_list=rho_list,
                                    reconstruction=reconstruction)
        manifest.stage("taylor")
        with open(_out(cfg, "taylor_residuals.csv"), "w") as fh:
            fh.write(report.to_csv())
        manifest.stage("output")
        print(f"slope: {report.slope:.4f} ({report.status}); "
              f"discretization floor {report.discretization_floor:.3e}")
    except Exception:
        manifest.stage("failed", "error")
        manifest.write()
        raise
    manifest.write()
    return 0


def _phase_params(cfg: RunConfig, coupling: float | None = None) -> PhaseFieldParams:
    t_end = cfg.get("phase", "t_end", None, float)
    stat_tol = cfg.get("phase", "stat_tol", None if t_end is not None else 1e-5, float)
    return PhaseFieldParams(
        epsilon=cfg.get("phase", "epsilon", 0.15, float),
        b=cfg.get("phase", "b", 1.0, float),
        coupling=coupling if coupling is not None else cfg.get("phase", "coupling", 1.0, float),
        alpha=cfg.get("phase", "alpha", -0.3, float),
        alpha1=cfg.get("phase", "alpha1", 1.0, float),
        alpha2=cfg.get("phase", "alpha2", 1.0, float),
        tau=cfg.get("phase", "tau", 0.01, float),
        t_end=t_end,
        stat_tol=stat_tol,
        seed=cfg.seed,
        noise_amplitude=cfg.get("phase", "noise_amplitude", 0.1, float),
    )


def cmd_phase_flow(args) -> int:
    cfg = load_config(args.config)
    manifest = Manifest(cfg, "phase-flow")
    try:
        mesh, form = _build_form(cfg, manifest)
        pf = _phase_params(cfg)
        state = initial_state(form, pf)
        final, report = run_flow(state, form, pf)
        manifest.stage("flow")
        with open(_out(cfg, "flow_energy.csv"), "w") as fh:
            fh.write(report.to_csv())
        write_vtk(_out(cfg, "flow_final.vtk"), mesh,
                  {"u": final.u, "phi": final.phi})
        manifest.stage("output")
        lam_phi, lam_u = closed_form_multipliers(final, form, pf)
        print(f"steps: {report.accepted_steps} (rejected {report.rejected_steps}), "
              f"converged: {report.converged}")
        print(f"final energy: {report.energies[-1]:.10g}")
        print(f"multipliers lambda_phi={final.lambda_phi:.6g} (closed {lam_phi:.6g}), "
              f"lambda_u={final.lambda_u:.6g} (closed {lam_u:.6g})")
    except Exception:
        manifest.stage("failed", "error")
        manifest.write()
        raise
    manifest.write()
    return 0


def cmd_lambda_sweep(args) -> int:
    cfg = load_config(args.config)
    manifest = Manifest(cfg, "lambda-sweep")
    try:
        mesh, form = _build_form(cfg, manifest)
        couplings = cfg.floats("sweep", "couplings",
                               [-10.0, -5.0, -1.0, 0.0, 1.0, 5.0, 10.0])
        rows = []
        for lam in couplings:
            pf = _phase_params(cfg, coupling=lam)
            final, report = run_flow(initial_state(form, pf), form, pf)
            corr = field_correlation(final.u, final.phi, form, pf)
            rows.append((lam, report.energies[-1], corr,
                         float(np.max(np.abs(final.u))), report.accepted_steps,
                         report.converged))
            write_vtk(_out(cfg, f"sweep_lambda_{lam:+g}.vtk"), mesh,
                      {"u": final.u, "phi": final.phi})
            manifest.stage(f"flow lambda={lam:+g}")
        with open(_out(cfg, "lambda_sweep.csv"), "w") as fh:
            fh.write("coupling [1/length],final_energy [energy],"
                     "corr_u_phi [1],max_abs_u [length],steps [1],converged [bool]\n")
            for row in rows:
                fh.write(f"{row[0]:.17g},{row[1]:.17g},{row[2]:.17g},"
                         f"{row[3]:.17g},{row[4]},{row[5]}\n")
        manifest.stage("output")
        for row in rows:
            print(f"Lambda {row[0]:+g}: energy {row[1]:.6g}, corr {row[2]:+.4f}, "
                  f"max|u| {row[3]:.3e}, steps {row[4]}")
    except Exception:
        manifest.stage("failed", "error")
        manifest.write()
        raise
    manifest.write()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spheremem",
        description="Spherical membrane deformation toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("mesh", help="build an icosphere and write it as VTK")
    p.add_argument("--R", type=float, default=1.0)
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("validate", help="run the mesh/operator invariant suite")
    p.add_argument("--R", type=float, default=1.0)
    p.add_argument("--level", type=int, default=4)
    p.set_defaults(func=cmd_validate)

    for name, hard in (("points-penalty", False), ("points-hard", True)):
        p = sub.add_parser(name, help=f"solve the {'hard' if hard else 'penalized'} "
                                      "point-constraint equilibrium")
        p.add_argument("--config", required=True)
        p.set_defaults(func=lambda a, hard=hard: cmd_points(a, hard))

    p = sub.add_parser("penalty-study", help="penalty-to-hard convergence rates")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_penalty_study)

    p = sub.add_parser("taylor-check", help="quadratic-model Taylor consistency")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_taylor)

    p = sub.add_parser("phase-flow", help="run the conserved gradient flow")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_phase_flow)

    p = sub.add_parser("lambda-sweep", help="gradient flow over a coupling sweep")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_lambda_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SphereMemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
