"""Command-line driver: ``atomguide <scenario> --config run.toml --out DIR``.

Each subcommand validates its configuration completely before touching the
output directory, then writes CSV files (``#`` metadata header, ``repr``
floats, ``\\n`` line endings) and a ``manifest.json``.  Expensive per-level
propagations are cached under ``DIR/cache`` keyed by a hash of every input.
Failures are reported as JSON on stderr (and in ``DIR/error.json`` once the
directory exists) with exit codes 2 (configuration), 3 (numerical fault) and
4 (geometry, setup or convergence).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .analysis import (
    ASSIGNMENT_RULE,
    SplitterScenario,
    check_geometry,
    default_time_step_for,
    run_scenario,
    separation_time,
    sweep,
)
from .config import SCENARIOS, RunConfig, parse_config
from .eigen import fgh_bound_states
from .errors import AtomGuideError, ConfigError
from .gpe import (
    GpeParams,
    gpe_fall,
    gpe_ground_state_full,
    log_atom_grid,
    max_admissible_atoms,
    principal_axes,
    tf_chemical_potential,
)
from .potentials import crossing_time, harmonic_frequency
from .propagator import Absorber, PropagationSpec, write_snapshot_csv

log = logging.getLogger("atomguide")


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    if value is None:
        return "none"
    return str(value)


def format_csv(columns, rows, metadata):
    """CSV text with a ``# key = value`` header block."""
    lines = [f"# {k} = {_fmt(v)}" for k, v in metadata.items()]
    lines.append(",".join(columns))
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def _metadata(cfg, **extra):
    meta = {"atomguide_version": __version__}
    meta.update(cfg.echo())
    meta.update(extra)
    return meta


# ---------------------------------------------------------------- planning

class Plan:
    """Everything a run needs, built and checked before any output is written."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.scenario = None
        self.gpe = None
        self.grid2d = None
        if cfg.scenario in ("eigen", "split-run", "split-sweep", "deflect-sweep"):
            self.eigen_grid = cfg.grid.grid1d()
        if cfg.scenario in ("split-run", "split-sweep", "deflect-sweep"):
            self.scenario = self._splitter()
        if cfg.scenario.startswith("gpe"):
            self.grid2d = cfg.grid.grid2d()
            self.gpe = self._gpe_params()

    def _splitter(self):
        cfg = self.cfg
        prop, ens = cfg.propagation, cfg.ensemble
        deflector = bool(prop.switch_off_vertical)
        absorber = None
        if prop.absorber_width > 0:
            absorber = Absorber(prop.absorber_width, prop.absorber_strength)
        guides = [cfg.guide]
        if cfg.scenario == "split-sweep":
            guides = [cfg.guide.replace(depth_oblique=r * cfg.guide.depth_vertical)
                      for r in cfg.sweep_values]
        elif cfg.scenario == "deflect-sweep":
            guides = [cfg.guide.replace(angle=g) for g in cfg.sweep_values]
        t_final = prop.t_final
        for g in guides:
            tf = t_final if t_final is not None else separation_time(g, cfg.constants)
            if deflector and tf <= crossing_time(g.crossing_height, cfg.constants):
                raise ConfigError("propagation.t_final", "must exceed the crossing time for a "
                                  "deflector run")
            check_geometry(g, tf, cfg.constants)
        dt = prop.dt
        if dt is None:
            dt = min(default_time_step_for(
                g, self.eigen_grid,
                t_final if t_final is not None else separation_time(g, cfg.constants),
                absorber, cfg.constants) for g in guides)
        return SplitterScenario(
            guide=cfg.guide, temperature=ens.temperature, eigen_grid=self.eigen_grid, dt=dt,
            t_final=t_final, deflector=deflector, absorber=absorber,
            max_states=ens.max_states, constants=cfg.constants, cutoff=ens.cutoff)

    def _gpe_params(self):
        cfg, s = self.cfg, self.cfg.gpe
        omega = harmonic_frequency(cfg.guide.depth_vertical, cfg.guide.waist_vertical,
                                   cfg.constants.mass)
        omega_y = s.omega_y if s.omega_y is not None else s.omega_y_ratio * omega
        n = s.atom_number if s.atom_number is not None else 1.0
        return GpeParams(n, omega_y, cfg.guide, s.trap, cfg.constants,
                         interacting=s.interactions)


# ---------------------------------------------------------------- scenarios

def run_eigen(plan, out, cache_dir, jobs):
    cfg = plan.cfg
    c = cfg.constants
    max_states = cfg.ensemble.max_states if cfg.ensemble is not None else None
    eigen = fgh_bound_states(plan.eigen_grid, cfg.guide, max_states, c)
    rows = [(nu, e, c.to_microkelvin(e)) for nu, e in enumerate(eigen.energies.tolist())]
    text = format_csv(["nu", "energy_J", "energy_uK"], rows, _metadata(cfg))
    return {"eigen.csv": text}, {"levels": len(eigen)}


def _split_run(plan, cache_dir):
    cfg = plan.cfg
    res = run_scenario(plan.scenario, cache_dir)
    out = res.outcomes
    weights = dict(zip(res.ensemble.levels.tolist(), res.ensemble.weights.tolist()))
    rows = [(int(nu), float(res.eigen_energies[nu]), weights[int(nu)], pv, po, pl)
            for nu, pv, po, pl in zip(out["levels"].tolist(), out["p_vertical"].tolist(),
                                      out["p_oblique"].tolist(), out["p_lost"].tolist())]
    mode = "deflector" if plan.scenario.deflector else "splitter"
    meta = _metadata(cfg, mode=mode, assignment_rule=ASSIGNMENT_RULE,
                     t_final_s=plan.scenario.final_time(), dt_s=plan.scenario.dt,
                     propagation_grid=repr(out["grid"]),
                     dropped_weight=res.ensemble.dropped_weight)
    levels = format_csv(["nu", "energy_J", "weight", "p_vertical", "p_oblique", "p_lost"],
                        rows, meta)
    ratio = cfg.guide.depth_oblique / cfg.guide.depth_vertical
    eff = format_csv(["ratio", "efficiency"], [(ratio, res.efficiency)], meta)
    return {"efficiency.csv": eff, "levels.csv": levels}, {"cache_hit": bool(out["cache_hit"])}


def run_split_run(plan, out, cache_dir, jobs):
    return _split_run(plan, cache_dir)


def _curve(plan, kind, column, cache_dir, jobs):
    cfg = plan.cfg
    curve = sweep(kind, cfg.sweep_values, plan.scenario, jobs=jobs, cache_dir=cache_dir)
    convert = (lambda v: round(math.degrees(v), 12)) if kind == "gamma" else (lambda v: v)
    meta = _metadata(cfg, mode="deflector" if plan.scenario.deflector else "splitter",
                     assignment_rule=ASSIGNMENT_RULE, dt_s=plan.scenario.dt)
    for value, reason in curve.missing:
        meta[f"missing {column}={_fmt(convert(value))}"] = reason
    rows = [(convert(v), e) for v, e, _ in curve.points]
    return format_csv([column, "efficiency"], rows, meta), {"missing": len(curve.missing)}


def run_split_sweep(plan, out, cache_dir, jobs):
    text, info = _curve(plan, "ratio", "ratio", cache_dir, jobs)
    return {"splitting_efficiency.csv": text}, info


def run_deflect_sweep(plan, out, cache_dir, jobs):
    text, info = _curve(plan, "gamma", "gamma_deg", cache_dir, jobs)
    return {"deflection_efficiency.csv": text}, info


def _mu_point(args):
    grid, gp, tol, cache_dir = args
    path = None
    if cache_dir is not None:
        key = hashlib.sha256(repr((grid, gp, tol)).encode()).hexdigest()
        path = Path(cache_dir) / f"mu-{key}.json"
        if path.exists():
            return float.fromhex(json.loads(path.read_text())["mu"])
    gs = gpe_ground_state_full(grid, gp, tolerance=tol)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps({"mu": gs.chemical_potential.hex()}))
    return gs.chemical_potential


def run_gpe_mu_curve(plan, out, cache_dir, jobs):
    cfg, gp, grid = plan.cfg, plan.gpe, plan.grid2d
    s = cfg.gpe
    if s.atom_numbers is not None:
        ns = list(s.atom_numbers)
    else:
        n_max = s.atom_number_max if s.atom_number_max is not None else max_admissible_atoms(grid, gp)
        ns = log_atom_grid(max(1.0, n_max), s.n_curve_points).tolist()
    tasks = [(grid, gp.with_atoms(n), s.tolerance, cache_dir) for n in ns]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            mus = list(pool.map(_mu_point, tasks))
    else:
        mus = [_mu_point(t) for t in tasks]
    hw = cfg.constants.hbar * gp.omega
    u0 = cfg.guide.depth_vertical
    rows = [(n, mu, tf_chemical_potential(n, gp), (mu + u0) / hw) for n, mu in zip(ns, mus)]
    meta = _metadata(cfg, omega_rad_s=gp.omega, omega_y_rad_s=gp.omega_y, g2d_J_m2=gp.g2d)
    text = format_csv(["N", "mu_numeric_J", "mu_TF_J", "mu_plus_U0_over_hbar_omega"], rows, meta)
    return {"mu_curve.csv": text}, {"points": len(rows)}


def run_gpe_fall(plan, out, cache_dir, jobs):
    cfg, gp, grid = plan.cfg, plan.gpe, plan.grid2d
    prop = cfg.propagation
    gs = gpe_ground_state_full(grid, gp, tolerance=cfg.gpe.tolerance)
    t_off = crossing_time(cfg.guide.crossing_height, cfg.constants) if prop.switch_off_vertical \
        else None
    absorber = Absorber(prop.absorber_width, prop.absorber_strength) \
        if prop.absorber_width > 0 else None
    spec = PropagationSpec(dt=prop.dt, t_final=prop.t_final, switch_off_vertical_at=t_off,
                           absorber=absorber, snapshot_every=prop.snapshot_every)
    res = gpe_fall(gs.field, gp, spec)
    meta = _metadata(cfg, g2d_J_m2=gp.g2d, omega_y_rad_s=gp.omega_y,
                     ground_chemical_potential_J=gs.chemical_potential,
                     switch_off_vertical_at_s=t_off)
    files = {}
    snap_dir = Path(out) / "snapshots"
    snap_dir.mkdir(parents=True, exist_ok=True)
    for i, (t, field) in enumerate(res.snapshots):
        name = f"snapshots/snapshot_{i:05d}.csv"
        write_snapshot_csv(Path(out) / name, t, field)
        files[name] = None
    files["fall.csv"] = format_csv(["t", "mean_z", "frac_on_oblique_axis"],
                                   [tuple(d) for d in res.diagnostics], meta)
    rows = []
    for (t, field), (_, n) in zip(res.snapshots, res.norm_history):
        aspect, angle = principal_axes(field)
        rows.append((t, aspect, math.degrees(angle), n))
    files["shape.csv"] = format_csv(["t", "aspect_ratio", "long_axis_deg", "norm"], rows, meta)
    return files, {"final_norm": res.norm_history[-1][1]}


RUNNERS = {
    "eigen": run_eigen,
    "split-run": run_split_run,
    "split-sweep": run_split_sweep,
    "deflect-sweep": run_deflect_sweep,
    "gpe-mu-curve": run_gpe_mu_curve,
    "gpe-fall": run_gpe_fall,
}


# ---------------------------------------------------------------- driver

def _error_payload(exc, exit_code):
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": exit_code}
    for attr in ("key", "step", "required_points"):
        if getattr(exc, attr, None) is not None:
            payload[attr] = getattr(exc, attr)
    return payload


def _report(exc, exit_code, out=None):
    payload = _error_payload(exc, exit_code)
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    if out is not None and Path(out).is_dir():
        (Path(out) / "error.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return exit_code


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def execute(command, config_path, out, jobs=1, use_cache=True):
    """Run one subcommand; returns the process exit status."""
    try:
        cfg = parse_config(Path(config_path))
        if cfg.scenario != command:
            raise ConfigError("scenario", f"config describes '{cfg.scenario}', not '{command}'")
        if jobs < 1:
            raise ConfigError("--jobs", "must be >= 1")
        plan = Plan(cfg)
    except AtomGuideError as exc:
        return _report(exc, exc.exit_code)

    start = time.perf_counter()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    stale = out / "error.json"
    if stale.exists():
        stale.unlink()
    cache_dir = str(out / "cache") if use_cache else None
    try:
        files, info = RUNNERS[command](plan, out, cache_dir, jobs)
    except AtomGuideError as exc:
        return _report(exc, exc.exit_code, out)
    except MemoryError as exc:
        return _report(exc, 4, out)

    for name, text in files.items():
        if text is not None:
            with open(out / name, "w", newline="\n") as fh:
                fh.write(text)
    manifest = {
        "scenario": command,
        "config_sha256": hashlib.sha256(cfg.source.encode()).hexdigest(),
        "resolved_si": {k: (v if not isinstance(v, tuple) else list(v))
                        for k, v in cfg.echo().items()},
        "assignment_rule": ASSIGNMENT_RULE,
        "versions": {"atomguide": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
        "outputs": {name: _sha256(out / name) for name in sorted(files)},
        "cache": "enabled" if use_cache else "disabled",
        "jobs": jobs,
        "info": info,
        "wall_time_s": time.perf_counter() - start,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=repr) + "\n")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="atomguide", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SCENARIOS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
        p.add_argument("--no-cache", action="store_true", help="ignore and do not write the cache")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return execute(args.command, args.config, args.out, args.jobs, not args.no_cache)


if __name__ == "__main__":
    sys.exit(main())
