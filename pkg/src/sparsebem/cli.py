"""Experiment driver: flat key/value configs, file outputs, exit codes.

Commands
--------
    sparsebem solve CONFIG          one wavenumber, optional compression
    sparsebem sweep CONFIG          frequency sweep with recompression
    sparsebem correlations CONFIG   dense solve + correlation grid export

Every run writes into the configured output directory: ``metrics.txt``
(deterministic fields only), ``timings.txt``, and, when produced,
``pattern.txt``, ``windows.txt``, ``corr.txt``, ``field.txt``.
Exit codes: 0 success, 2 configuration error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from sparsebem import analysis, compression, visibility
from sparsebem.compression import (
    CompressionError,
    CorrelationConfig,
    SweepAbort,
    SweepPlan,
)
from sparsebem.discretization import assemble_matrix, assemble_rhs, discretize
from sparsebem.geometry import (
    GeometryError,
    PointSource,
    Scene,
    plane_wave,
    preset_scene,
    three_plane_waves,
    validate_wave_for_scene,
)
from sparsebem.solve import SolverError, cond_estimate, dense_solve, gmres
from sparsebem.visibility import VisibilityConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

METHODS = ("dense", "correlate", "visibility", "sweep", "block_truncate")
SOLVERS = ("direct", "gmres")
_SCENE_PARAM_KEYS = ("radius", "center", "rx", "ry", "separation", "depth",
                     "width", "ripple", "lobes", "base")
_KEYS = {
    "scene", "wave", "wave_angle", "source", "amplitude",
    "k", "k_min", "k_max", "k_rule", "k_step",
    "ppw", "degree", "xi", "T", "T_vis", "vis_polyline", "vis_grid",
    "method", "solver", "gmres_tol", "seed", "outdir",
    "field_nx", "field_ny", "dense_compare", "cond",
} | set(_SCENE_PARAM_KEYS)


class ConfigError(ValueError):
    """Bad configuration file contents."""


@dataclass
class RunConfig:
    """Parsed experiment configuration."""

    scene_name: str
    scene_params: dict
    wave_kind: str = "plane"
    wave_angle: float = 0.0
    source: tuple = (1.0, 1.0)
    amplitude: float = 1.0
    k: float | None = None
    k_min: float | None = None
    k_max: float | None = None
    k_rule: str = "double"
    k_step: float = 16.0
    ppw: float = 10.0
    degree: int = 1
    xi: float = 0.003
    T: float = 0.02
    T_vis: float = 0.15
    vis_polyline: int | None = None
    vis_grid: int = 192
    method: str = "dense"
    solver: str = "direct"
    gmres_tol: float = 1e-5
    seed: int = 0
    outdir: str = "out"
    field_nx: int = 0
    field_ny: int = 0
    dense_compare: bool = False
    cond: bool = False

    def build_scene(self) -> Scene:
        return preset_scene(self.scene_name, self.scene_params)

    def build_wave(self):
        if self.wave_kind == "plane":
            return plane_wave(self.wave_angle, self.amplitude)
        if self.wave_kind == "point":
            return PointSource(tuple(self.source), complex(self.amplitude))
        if self.wave_kind == "three_plane":
            return three_plane_waves(self.wave_angle, self.amplitude)
        raise ConfigError(f"config key 'wave': unknown kind {self.wave_kind!r}")


def _parse_pair(raw: str, key: str) -> tuple[float, float]:
    parts = raw.replace(",", " ").split()
    if len(parts) != 2:
        raise ConfigError(f"config key {key!r}: expected two floats")
    return (float(parts[0]), float(parts[1]))


def parse_config(path) -> RunConfig:
    """Read a flat key/value file; unknown keys are rejected by name."""
    raw: dict[str, str] = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" in stripped:
            key, _, val = stripped.partition("=")
        else:
            key, _, val = stripped.partition(" ")
        key, val = key.strip(), val.strip()
        if key not in _KEYS:
            raise ConfigError(f"unknown config key {key!r} (line {lineno})")
        raw[key] = val

    if "scene" not in raw:
        raise ConfigError("config key 'scene' is required")
    scene_params: dict = {}
    for key in _SCENE_PARAM_KEYS:
        if key in raw:
            if key == "center":
                scene_params[key] = _parse_pair(raw[key], key)
            elif key == "lobes":
                scene_params[key] = int(raw[key])
            else:
                scene_params[key] = float(raw[key])

    cfg = RunConfig(scene_name=raw["scene"], scene_params=scene_params)
    try:
        if "wave" in raw:
            cfg.wave_kind = raw["wave"]
        if "wave_angle" in raw:
            cfg.wave_angle = float(raw["wave_angle"])
        if "source" in raw:
            cfg.source = _parse_pair(raw["source"], "source")
        if "amplitude" in raw:
            cfg.amplitude = float(raw["amplitude"])
        for key, cast in (("k", float), ("k_min", float), ("k_max", float),
                          ("k_step", float), ("ppw", float), ("xi", float),
                          ("T", float), ("T_vis", float), ("gmres_tol", float)):
            if key in raw:
                setattr(cfg, key, cast(raw[key]))
        for key in ("degree", "seed", "field_nx", "field_ny", "vis_grid"):
            if key in raw:
                setattr(cfg, key, int(raw[key]))
        if "vis_polyline" in raw:
            cfg.vis_polyline = int(raw["vis_polyline"])
        for key in ("k_rule", "method", "solver", "outdir"):
            if key in raw:
                setattr(cfg, key, raw[key])
        for key in ("dense_compare", "cond"):
            if key in raw:
                setattr(cfg, key, raw[key].lower() in ("1", "true", "yes"))
    except ValueError as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc

    if cfg.method not in METHODS:
        raise ConfigError(f"config key 'method': must be one of {METHODS}")
    if cfg.solver not in SOLVERS:
        raise ConfigError(f"config key 'solver': must be one of {SOLVERS}")
    if cfg.wave_kind not in ("plane", "point", "three_plane"):
        raise ConfigError("config key 'wave': must be plane, point or three_plane")
    if cfg.method == "sweep":
        if cfg.k_min is None or cfg.k_max is None:
            raise ConfigError("config keys 'k_min'/'k_max' are required for sweeps")
    elif cfg.k is None:
        raise ConfigError("config key 'k' is required")
    return cfg


def _sweep_ks(cfg: RunConfig) -> tuple:
    ks = [cfg.k_min]
    if cfg.k_rule == "double":
        while ks[-1] * 2.0 <= cfg.k_max * (1 + 1e-12):
            ks.append(ks[-1] * 2.0)
    elif cfg.k_rule == "linear":
        while ks[-1] + cfg.k_step <= cfg.k_max * (1 + 1e-12):
            ks.append(ks[-1] + cfg.k_step)
    else:
        raise ConfigError("config key 'k_rule': must be double or linear")
    return tuple(ks)


def _solve_with(cfg: RunConfig, M, b):
    if cfg.solver == "gmres":
        return gmres(M, b, tol=cfg.gmres_tol)
    if isinstance(M, np.ndarray):
        return dense_solve(M, b)
    from sparsebem.solve import sparse_direct_solve
    if M.n <= compression.DENSE_SOLVER_LIMIT:
        return dense_solve(M.to_dense(), b)
    return sparse_direct_solve(M, b)


def _write_metrics(outdir: Path, records) -> None:
    with open(outdir / "metrics.txt", "w") as fh:
        fh.write("\n".join(rec.to_text(include_timings=False) for rec in records))
    with open(outdir / "timings.txt", "w") as fh:
        for rec in records:
            fh.write(f"k {rec.k!r}\n")
            for phase in sorted(rec.timings):
                fh.write(f"timing.{phase} {rec.timings[phase]!r}\n")
            fh.write("\n")


def _write_field(outdir: Path, cfg: RunConfig, disc, c) -> None:
    if cfg.field_nx <= 0 or cfg.field_ny <= 0:
        return
    x0, x1, y0, y1 = disc.scene.bounding_box()
    mx, my = 0.8 * (x1 - x0 + 1e-9), 0.8 * (y1 - y0 + 1e-9)
    x0, x1, y0, y1 = x0 - mx, x1 + mx, y0 - my, y1 + my
    xs = np.linspace(x0, x1, cfg.field_nx)
    ys = np.linspace(y0, y1, cfg.field_ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    min_elem = max(disc.quad(p).h * disc.quad(p).max_speed
                   for p in range(disc.scene.n_obstacles))
    ok = disc.scene.boundary_distance(pts) >= min_elem
    vals = np.full(len(pts), np.nan + 1j * np.nan, dtype=complex)
    if np.any(ok):
        vals[ok] = analysis.scattered_field(disc, c, pts[ok])
    with open(outdir / "field.txt", "w") as fh:
        fh.write(f"{cfg.field_nx} {cfg.field_ny} {x0!r} {x1!r} {y0!r} {y1!r}\n")
        for v in vals:
            fh.write(f"{v.real!r} {v.imag!r}\n")


def cmd_solve(cfg: RunConfig) -> analysis.MetricsRecord:
    """Dense solve at one wavenumber, optionally followed by compression."""
    scene = cfg.build_scene()
    wave = cfg.build_wave()
    validate_wave_for_scene(wave, scene)
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    disc = discretize(scene, cfg.k, cfg.ppw, cfg.degree)
    A = assemble_matrix(disc)
    b = assemble_rhs(disc, wave)
    dense_rep = _solve_with(cfg, A, b)
    rec = analysis.MetricsRecord(
        k=cfg.k, n=disc.n,
        residual_dense=analysis.boundary_residual(disc, dense_rep.solution, wave, cfg.seed),
        gmres_iterations_dense=dense_rep.iterations,
        timings={"dense_solve": dense_rep.wall_time},
    )
    if cfg.cond and disc.n <= 6000:
        rec.cond_dense = cond_estimate(A)

    c_field = dense_rep.solution
    if cfg.method in ("correlate", "block_truncate"):
        corr_cfg = CorrelationConfig(T=cfg.T, xi=cfg.xi)
        R = compression.compute_correlations(A, dense_rep.solution, disc, corr_cfg)
        ws = compression.windows_from_correlations(R, corr_cfg, disc)
        hard = cfg.method == "block_truncate"
        tilde = compression.compress(A, ws, disc, hard=hard)
        rep = _solve_with(cfg, tilde, b)
        rec.nnz_fraction = tilde.nnz_fraction()
        rec.residual_compressed = analysis.boundary_residual(disc, rep.solution, wave, cfg.seed)
        rec.coef_error = analysis.solution_error(dense_rep.solution, rep.solution)
        rec.gmres_iterations_compressed = rep.iterations
        rec.timings["compressed_solve"] = rep.wall_time
        if cfg.cond and disc.n <= 6000:
            rec.cond_compressed = cond_estimate(tilde)
        tilde.save_pattern(outdir / "pattern.txt")
        ws.save(outdir / "windows.txt")
        R.save_grid(outdir / "corr.txt")
        c_field = rep.solution
    elif cfg.method == "visibility":
        vis_cfg = VisibilityConfig(decay=cfg.T_vis, polyline_points=cfg.vis_polyline,
                                   grid_points=cfg.vis_grid)
        ws = visibility.visibility_windows(scene, wave, disc, vis_cfg)
        tilde = compression.compress(A, ws, disc)
        rep = _solve_with(cfg, tilde, b)
        rec.nnz_fraction = tilde.nnz_fraction()
        rec.residual_compressed = analysis.boundary_residual(disc, rep.solution, wave, cfg.seed)
        rec.coef_error = analysis.solution_error(dense_rep.solution, rep.solution)
        rec.gmres_iterations_compressed = rep.iterations
        rec.timings["compressed_solve"] = rep.wall_time
        if cfg.cond and disc.n <= 6000:
            rec.cond_compressed = cond_estimate(tilde)
        tilde.save_pattern(outdir / "pattern.txt")
        ws.save(outdir / "windows.txt")
        c_field = rep.solution

    _write_metrics(outdir, [rec])
    _write_field(outdir, cfg, disc, c_field)
    return rec


def cmd_sweep(cfg: RunConfig) -> list[analysis.MetricsRecord]:
    """Frequency sweep with adaptive recompression; partial output on abort."""
    scene = cfg.build_scene()
    wave = cfg.build_wave()
    validate_wave_for_scene(wave, scene)
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    plan = SweepPlan(ks=_sweep_ks(cfg), ppw=cfg.ppw, degree=cfg.degree,
                     solver=cfg.solver, gmres_tol=cfg.gmres_tol,
                     dense_compare=cfg.dense_compare, seed=cfg.seed)
    corr_cfg = CorrelationConfig(T=cfg.T, xi=cfg.xi)
    try:
        stages = compression.recompression_sweep(plan, scene, wave, corr_cfg)
    except SweepAbort as exc:
        records = [st.metrics for st in exc.results]
        if records:
            _write_metrics(outdir, records)
        raise
    records = [st.metrics for st in stages]
    _write_metrics(outdir, records)
    last = stages[-1]
    last.matrix.save_pattern(outdir / "pattern.txt")
    last.window_set.save(outdir / "windows.txt")
    for st in reversed(stages):
        if st.correlations is not None:
            st.correlations.save_grid(outdir / "corr.txt")
            break
    _write_field(outdir, cfg, last.disc, last.solution)
    return records


def cmd_correlations(cfg: RunConfig) -> analysis.MetricsRecord:
    """Dense solve plus full correlation grid export."""
    scene = cfg.build_scene()
    wave = cfg.build_wave()
    validate_wave_for_scene(wave, scene)
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    disc = discretize(scene, cfg.k, cfg.ppw, cfg.degree)
    A = assemble_matrix(disc)
    b = assemble_rhs(disc, wave)
    rep = _solve_with(cfg, A, b)
    corr_cfg = CorrelationConfig(T=cfg.T, xi=cfg.xi)
    R = compression.compute_correlations(A, rep.solution, disc, corr_cfg)
    R.save_grid(outdir / "corr.txt")
    rec = analysis.MetricsRecord(
        k=cfg.k, n=disc.n,
        residual_dense=analysis.boundary_residual(disc, rep.solution, wave, cfg.seed),
        timings={"dense_solve": rep.wall_time},
    )
    _write_metrics(outdir, [rec])
    return rec


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sparsebem",
        description="2D Helmholtz BEM solver with kernel-window sparsification")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "sweep", "correlations"):
        p = sub.add_parser(name)
        p.add_argument("config", help="flat key/value configuration file")
        p.add_argument("-o", "--outdir", default=None, help="override output directory")
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(args.config)
        if args.outdir is not None:
            cfg.outdir = args.outdir
        if args.command == "sweep" and cfg.method != "sweep":
            cfg.method = "sweep"
            if cfg.k_min is None or cfg.k_max is None:
                if cfg.k is None:
                    raise ConfigError("config keys 'k_min'/'k_max' are required for sweeps")
                cfg.k_min = cfg.k_max = cfg.k
    except (ConfigError, GeometryError, CompressionError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "solve":
            cmd_solve(cfg)
        elif args.command == "sweep":
            cmd_sweep(cfg)
        else:
            cmd_correlations(cfg)
    except (ConfigError, GeometryError, CompressionError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, SweepAbort) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
