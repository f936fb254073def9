"""Splitter and deflector figures of merit.

Each bound level of the vertical guide is propagated through the falling
geometry; at the analysis time its density is split at the top of the
potential barrier separating the vertical and oblique wells.  Population
within a capture window of either well minimum is assigned to that guide,
everything else (including norm removed by the absorber) counts as lost.
Thermal efficiencies are Boltzmann-weighted averages of the per-level
oblique-guide probabilities.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .constants import CONSTANTS, PhysicalConstants
from .eigen import boltzmann_weights, fgh_bound_states, refine_onto
from .errors import AtomGuideError, ContractError, GeometryError
from .grid import Grid1D
from .potentials import (
    GuideParams,
    crossing_time,
    effective_potential,
    fall_height,
    oblique_axis_x,
)
from .propagator import Absorber, PropagationSpec, propagate_many

log = logging.getLogger(__name__)

CAPTURE_WINDOW_WAISTS = 4.0
ASSIGNMENT_RULE = (
    "split at the potential maximum between the vertical and oblique well minima of "
    "V_eff(x, t_final); each guide collects the population on its side of the barrier "
    "within 4*max(w0, w1) of its minimum; the remainder, including absorbed norm, is lost"
)
CACHE_VERSION = "1"


@dataclass
class GuideAssignment:
    barrier_position: float
    p_vertical: float
    p_oblique: float
    p_lost: float


@dataclass
class EfficiencyCurve:
    swept_name: str
    points: list = field(default_factory=list)
    missing: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def values(self):
        return np.array([pt[0] for pt in self.points])

    @property
    def efficiencies(self):
        return np.array([pt[1] for pt in self.points])


@dataclass(frozen=True)
class WellGeometry:
    vertical_minimum: float
    oblique_minimum: float
    barrier: float

    @property
    def oblique_side_positive(self):
        return self.oblique_minimum > self.vertical_minimum


def _local_minima(v):
    inner = (v[1:-1] < v[:-2]) & (v[1:-1] <= v[2:])
    return np.flatnonzero(inner) + 1


def well_geometry(x, p, t, constants=CONSTANTS):
    """Minima and separating barrier of V_eff(., t) sampled on ``x``.

    If one of the beams has zero depth the geometry is taken from the same
    beams with equal, unit depths, so an assignment remains defined.
    """
    if p.depth_vertical == 0 or p.depth_oblique == 0:
        p = p.replace(depth_vertical=1.0, depth_oblique=1.0)
    v = effective_potential(x, t, p, constants)
    minima = _local_minima(v)
    if minima.size < 2:
        raise GeometryError(f"V_eff has a single minimum at t={t:.6g} s: wells not separated")
    x_axis = oblique_axis_x(fall_height(t, constants), p)
    iv = minima[np.argmin(np.abs(x[minima]))]
    io = minima[np.argmin(np.abs(x[minima] - x_axis))]
    if iv == io:
        raise GeometryError(f"vertical and oblique minima coincide at t={t:.6g} s")
    lo, hi = sorted((iv, io))
    ib = lo + int(np.argmax(v[lo:hi + 1]))
    return WellGeometry(float(x[iv]), float(x[io]), float(x[ib]))


def check_geometry(p, t, constants=CONSTANTS, samples=8193):
    """Fail fast if the two wells are not separated at time ``t``."""
    xc = oblique_axis_x(fall_height(t, constants), p)
    reach = 4.0 * max(p.waist_vertical, p.oblique_waist_along_x)
    x = np.linspace(min(0.0, xc) - reach, max(0.0, xc) + reach, samples)
    return well_geometry(x, p, t, constants)


def _windows(x, p, geom):
    # closed window; the slack keeps grid points lying exactly on its edge inside
    w = CAPTURE_WINDOW_WAISTS * max(p.waist_vertical, p.waist_oblique) * (1 + 1e-9)
    if geom.oblique_side_positive:
        oblique_side = x >= geom.barrier
    else:
        oblique_side = x <= geom.barrier
    vertical = ~oblique_side & (np.abs(x - geom.vertical_minimum) <= w)
    oblique = oblique_side & (np.abs(x - geom.oblique_minimum) <= w)
    return vertical, oblique


def assign_batch(psi, grid, p, t, constants=CONSTANTS):
    """Per-state (p_vertical, p_oblique, p_lost) arrays for a stack of fields."""
    geom = well_geometry(grid.x, p, t, constants)
    vertical, oblique = _windows(grid.x, p, geom)
    density = np.abs(np.atleast_2d(psi)) ** 2 * grid.dx
    pv = density[:, vertical].sum(axis=1)
    po = density[:, oblique].sum(axis=1)
    return geom, pv, po, 1.0 - pv - po


def assign_guides(field, p, t, constants=CONSTANTS):
    """Probabilities of finding the atom in each guide at time ``t``."""
    geom, pv, po, pl = assign_batch(field.psi, field.grid, p, t, constants)
    return GuideAssignment(geom.barrier, float(pv[0]), float(po[0]), float(pl[0]))


def separation_time(p, constants=CONSTANTS, separation=None):
    """Earliest time at which the oblique axis is ``separation`` away from x = 0.

    Defaults to 3 (w0 + w1) / 2, the analysis time used when none is given.
    """
    if p.angle == 0:
        raise GeometryError("parallel beams (angle = 0) do not form a splitter")
    if separation is None:
        separation = 1.5 * (p.waist_vertical + p.waist_oblique)
    depth_below = abs(p.crossing_height) + separation / abs(math.tan(p.angle))
    return math.sqrt(2.0 * depth_below / constants.grav)


def propagation_grid(eigen_grid, p, spec, energy_max, constants=CONSTANTS, margin=4.0):
    """Aligned propagation grid covering both wells over the whole run.

    The spacing is the eigen-grid spacing divided by the smallest integer that
    represents ``margin`` times the estimated maximum kinetic energy; the
    window covers three oblique widths around the oblique axis at t = 0 and at
    t_final, the eigen window, and the absorber.
    """
    drift = constants.grav * spec.t_final * abs(math.tan(p.angle))
    relative = max(energy_max + p.depth_vertical + p.depth_oblique, 0.0)
    ke = (math.sqrt(relative) + math.sqrt(0.5 * constants.mass * drift**2)) ** 2
    r = max(1, math.ceil(math.sqrt(margin * ke / eigen_grid.max_kinetic(constants.mass,
                                                                         constants.hbar))
                         - 1e-12))
    dx = eigen_grid.dx / r
    reach = 3.0 * p.oblique_waist_along_x
    centres = [oblique_axis_x(fall_height(t, constants), p) for t in (0.0, spec.t_final)]
    pad = spec.absorber.width if spec.absorber is not None else 0.0
    lo = min([eigen_grid.x_min] + [c - reach for c in centres]) - pad
    hi = max([eigen_grid.x_max] + [c + reach for c in centres]) + pad
    j = math.ceil((eigen_grid.x_min - lo) / dx - 1e-9)
    x_min = eigen_grid.x_min - j * dx
    n = 1 << (math.ceil((hi - x_min) / dx) - 1).bit_length()
    return Grid1D(x_min, x_min + n * dx, max(n, 16))


def _cache_key(payload):
    blob = json.dumps(payload, sort_keys=True, default=repr).encode()
    return hashlib.sha256(blob).hexdigest()


def _describe(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _describe(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, float):
        return repr(obj)
    return obj


def level_outcomes(eigen, p, spec, levels=None, *, grid=None, constants=CONSTANTS,
                   cache_dir=None, chunk=64):
    """Propagate the selected levels and assign them to the guides at t_final.

    Returns a dict with arrays ``levels``, ``p_vertical``, ``p_oblique`` and
    ``p_lost`` plus the barrier position and the propagation grid used.
    Results are cached on disk under ``cache_dir`` keyed by a hash of every
    input that influences them.
    """
    levels = np.arange(len(eigen)) if levels is None else np.asarray(levels, dtype=int)
    if grid is None:
        grid = propagation_grid(eigen.grid, p, spec, float(np.max(eigen.energies[levels])),
                                constants)
    path = None
    if cache_dir is not None:
        key = _cache_key({
            "version": CACHE_VERSION,
            "guide": _describe(p),
            "spec": _describe(spec),
            "grid": _describe(grid),
            "eigen_grid": _describe(eigen.grid),
            "levels": levels.tolist(),
            "constants": _describe(constants),
        })
        path = os.path.join(cache_dir, f"levels-{key}.npz")
        if os.path.exists(path):
            with np.load(path) as data:
                log.debug("cache hit %s", path)
                return {k: data[k] for k in data.files} | {"grid": grid, "cache_hit": True}
    pv, po, pl = [], [], []
    barrier = math.nan
    for start in range(0, len(levels), chunk):
        sel = levels[start:start + chunk]
        psi = refine_onto(eigen, grid, sel)
        psi = propagate_many(psi, grid, p, spec, constants=constants)
        geom, a, b, c = assign_batch(psi, grid, p, spec.t_final, constants)
        barrier = geom.barrier
        pv.append(a)
        po.append(b)
        pl.append(c)
    out = {
        "levels": levels,
        "p_vertical": np.concatenate(pv),
        "p_oblique": np.concatenate(po),
        "p_lost": np.concatenate(pl),
        "barrier": np.array(barrier),
    }
    if path is not None:
        os.makedirs(cache_dir, exist_ok=True)
        tmp = path + ".tmp.npz"
        np.savez(tmp, **out)
        os.replace(tmp, path)
    return out | {"grid": grid, "cache_hit": False}


def _weighted_oblique(ensemble, eigen, p, spec, **kwargs):
    outcome = level_outcomes(eigen, p, spec, ensemble.levels, **kwargs)
    return float(np.dot(ensemble.weights, outcome["p_oblique"]))


def splitting_efficiency(ensemble, eigen, p, spec, **kwargs):
    """Thermally averaged probability of ending in the oblique guide."""
    if spec.switch_off_vertical_at is not None:
        raise ContractError("splitter runs keep the vertical guide on")
    if p.depth_oblique == 0:
        return 0.0
    return _weighted_oblique(ensemble, eigen, p, spec, **kwargs)


def deflection_efficiency(ensemble, eigen, p, spec, constants=CONSTANTS, **kwargs):
    """As :func:`splitting_efficiency` with the vertical guide off after the crossing time."""
    t0 = crossing_time(p.crossing_height, constants)
    if spec.switch_off_vertical_at is None or not math.isclose(
            spec.switch_off_vertical_at, t0, rel_tol=1e-9):
        raise ContractError("deflector runs need switch_off_vertical_at = crossing time")
    return _weighted_oblique(ensemble, eigen, p, spec, constants=constants, **kwargs)


@dataclass(frozen=True)
class SplitterScenario:
    """Everything needed to compute one splitting or deflection efficiency."""

    guide: GuideParams
    temperature: float
    eigen_grid: Grid1D
    dt: float
    t_final: float | None = None
    deflector: bool = False
    absorber: Absorber | None = None
    max_states: int | None = None
    constants: PhysicalConstants = CONSTANTS
    cutoff: float = 1e-6

    def final_time(self):
        if self.t_final is not None:
            return self.t_final
        return separation_time(self.guide, self.constants)

    def spec(self):
        t_off = crossing_time(self.guide.crossing_height, self.constants) if self.deflector else None
        return PropagationSpec(dt=self.dt, t_final=self.final_time(),
                               switch_off_vertical_at=t_off, absorber=self.absorber)

    def with_value(self, kind, value):
        if kind == "ratio":
            guide = self.guide.replace(depth_oblique=value * self.guide.depth_vertical)
        elif kind == "gamma":
            guide = self.guide.replace(angle=value)
        else:
            raise ContractError(f"unknown sweep kind {kind!r}")
        return dataclasses.replace(self, guide=guide)


def default_time_step_for(guide, eigen_grid, t_final, absorber=None, constants=CONSTANTS):
    """0.1 hbar / E_max on the propagation grid a scenario would use."""
    spec = PropagationSpec(dt=t_final, t_final=t_final, absorber=absorber)
    grid = propagation_grid(eigen_grid, guide, spec, 0.0, constants)
    e_max = max(guide.depth_vertical + guide.depth_oblique,
                grid.max_kinetic(constants.mass, constants.hbar))
    return 0.1 * constants.hbar / e_max


@dataclass
class ScenarioResult:
    efficiency: float
    eigen_energies: np.ndarray
    ensemble: object
    outcomes: dict


def run_scenario(scn, cache_dir=None, eigen=None):
    """Eigenstates, ensemble, propagation and weighted efficiency for one scenario."""
    c = scn.constants
    if eigen is None:
        eigen = fgh_bound_states(scn.eigen_grid, scn.guide, scn.max_states, c)
    ensemble = boltzmann_weights(eigen, scn.temperature, c, cutoff=scn.cutoff)
    spec = scn.spec()
    if scn.deflector and spec.t_final <= spec.switch_off_vertical_at:
        raise GeometryError("analysis time precedes the crossing time")
    check_geometry(scn.guide, spec.t_final, c)
    outcomes = level_outcomes(eigen, scn.guide, spec, ensemble.levels, constants=c,
                              cache_dir=cache_dir)
    if scn.guide.depth_oblique == 0:
        eff = 0.0
    else:
        eff = float(np.dot(ensemble.weights, outcomes["p_oblique"]))
    return ScenarioResult(eff, eigen.energies, ensemble, outcomes)


def _sweep_point(args):
    scn, cache_dir, eigen = args
    try:
        return run_scenario(scn, cache_dir, eigen).efficiency, None
    except AtomGuideError as exc:
        return None, f"{type(exc).__name__}: {exc}"


SWEEP_NAMES = {"ratio": "ratio", "gamma": "gamma"}


def sweep(kind, values, base, *, jobs=1, cache_dir=None):
    """Efficiency curve over U1/U0 ratios (``kind='ratio'``) or angles in radians.

    The vertical-guide eigenstates are shared by all points.  Points that
    fail numerically are reported in ``missing`` with the reason; invalid
    scenarios raise before anything is computed.
    """
    values = [float(v) for v in values]
    if kind not in SWEEP_NAMES:
        raise ContractError(f"unknown sweep kind {kind!r}")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ContractError("sweep values must be strictly ascending")
    scenarios = [base.with_value(kind, v) for v in values]
    for s in scenarios:
        s.spec()
    eigen = fgh_bound_states(base.eigen_grid, base.guide, base.max_states, base.constants)
    tasks = [(s, cache_dir, eigen) for s in scenarios]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_point, tasks))
    else:
        results = [_sweep_point(t) for t in tasks]
    curve = EfficiencyCurve(SWEEP_NAMES[kind], metadata={"assignment_rule": ASSIGNMENT_RULE})
    for v, (eff, err) in zip(values, results):
        if err is None:
            curve.points.append((v, eff, None))
        else:
            curve.missing.append((v, err))
    return curve


# Reference splitter geometry, SI units.
def reference_guide(constants=CONSTANTS, *, depth_ratio=1.0 / 3.0, angle_deg=10.0, scale=1.0):
    """Vertical 30 uK / 0.3 mm, oblique 0.45 mm, crossing 4 mm below, all lengths
    and depths divided by ``scale``."""
    u0 = constants.microkelvin(30.0) / scale
    return GuideParams(
        depth_vertical=u0,
        depth_oblique=depth_ratio * u0,
        waist_vertical=0.3e-3 / scale,
        waist_oblique=0.45e-3 / scale,
        crossing_height=-4e-3 / scale,
        angle=math.radians(angle_deg),
    )


def reduced_scenario(*, depth_ratio=1.0 / 3.0, angle_deg=10.0, deflector=False,
                     temperature_ratio=14.0 / 30.0, scale=20.0, dt=20e-6, t_final=None,
                     eigen_points=2048, max_states=None, constants=CONSTANTS):
    """Scaled-down splitter: lengths and depths / ``scale``, k_B T / U0 kept.

    Dividing lengths and depths by the same factor (and times by its square
    root) leaves the classical dynamics under gravity unchanged while the
    number of bound levels drops from ~1.8e4 to ~200 at scale 20.
    """
    guide = reference_guide(constants, depth_ratio=depth_ratio, angle_deg=angle_deg, scale=scale)
    half = 3.5 * guide.waist_vertical
    temperature = temperature_ratio * guide.depth_vertical / constants.kB
    return SplitterScenario(
        guide=guide,
        temperature=temperature,
        eigen_grid=Grid1D(-half, half, eigen_points),
        dt=dt,
        t_final=t_final,
        deflector=deflector,
        absorber=Absorber(width=20e-6 * 20.0 / scale, strength=guide.depth_vertical),
        max_states=max_states,
        constants=constants,
    )
