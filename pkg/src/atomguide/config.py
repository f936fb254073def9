"""Run configuration: TOML text with unit-suffixed keys.

Every dimensional key carries its unit as a suffix, e.g. ``U0_uK = 30``,
``w0_mm = 0.3``, ``dt_us = 20`` or ``gamma_deg = 10``; values are converted
to SI on ingestion.  Unknown keys and sections are rejected, and every value
is checked against the preconditions of the module that will consume it
before any computation starts.
"""
from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .constants import (
    ANGLE_UNITS,
    ATOMIC_MASS_UNIT,
    CONSTANTS,
    LENGTH_UNITS,
    TEMPERATURE_UNITS,
    TIME_UNITS,
    PhysicalConstants,
    TransitionParams,
)
from .errors import ConfigError, ContractError
from .grid import Grid1D, Grid2D
from .potentials import GuideParams

SCENARIOS = ("eigen", "split-run", "split-sweep", "deflect-sweep", "gpe-mu-curve", "gpe-fall")
MAX_EIGEN_POINTS = 8192

# unit families: suffix -> factor to SI; energies are given as temperatures
ENERGY = "energy"
UNIT_FAMILIES = {
    "length": LENGTH_UNITS,
    "time": TIME_UNITS,
    "angle": ANGLE_UNITS,
    "temperature": TEMPERATURE_UNITS,
    ENERGY: {**{k: v for k, v in TEMPERATURE_UNITS.items()}, "J": None},
    "mass": {"kg": 1.0, "u": ATOMIC_MASS_UNIT},
    "rate": {"rad_s": 1.0},
    "intensity": {"W_m2": 1.0, "mW_cm2": 10.0},
}


@dataclass(frozen=True)
class Key:
    family: str | None = None  # None: dimensionless, given without suffix
    kind: type = float
    default: object = None
    many: bool = False


SCHEMA = {
    "constants": {
        "hbar": Key(), "kB": Key(), "grav": Key(),
        "mass": Key("mass"), "a0": Key("length"),
    },
    "transition": {
        "linewidth": Key("rate"), "detuning": Key("rate"), "saturation_intensity": Key("intensity"),
    },
    "guide": {
        "U0": Key(ENERGY), "U1": Key(ENERGY),
        "I0": Key("intensity"), "I1": Key("intensity"),
        "w0": Key("length"), "w1": Key("length"), "z0": Key("length"), "gamma": Key("angle"),
    },
    "grid": {
        "x_min": Key("length"), "x_max": Key("length"), "n_points": Key(kind=int),
        "z_min": Key("length"), "z_max": Key("length"), "nz": Key(kind=int),
    },
    "propagation": {
        "dt": Key("time"), "t_final": Key("time"),
        "absorber_width": Key("length"), "absorber_strength": Key(ENERGY),
        "snapshot_every": Key(kind=int, default=0),
        "switch_off_vertical": Key(kind=bool),
    },
    "ensemble": {
        "T": Key("temperature"), "max_states": Key(kind=int), "cutoff": Key(default=1e-6),
    },
    "sweep": {
        "ratios": Key(many=True), "gammas": Key("angle", many=True),
    },
    "gpe": {
        "N": Key(), "omega_y": Key("rate"), "omega_y_ratio": Key(),
        "trap": Key(kind=str), "interactions": Key(kind=bool, default=True),
        "N_values": Key(many=True), "n_curve_points": Key(kind=int, default=13),
        "N_max": Key(), "tolerance": Key(default=1e-5),
    },
}

# reference splitter geometry
GUIDE_DEFAULTS = {
    "U0": 30e-6, "U1": 10e-6,  # kelvin, multiplied by kB below
    "w0": 0.3e-3, "w1": 0.45e-3, "z0": -4e-3, "gamma": math.radians(10.0),
}

REQUIRED_SECTIONS = {
    "eigen": ("grid",),
    "split-run": ("grid", "propagation", "ensemble"),
    "split-sweep": ("grid", "propagation", "ensemble", "sweep"),
    "deflect-sweep": ("grid", "propagation", "ensemble", "sweep"),
    "gpe-mu-curve": ("grid", "gpe"),
    "gpe-fall": ("grid", "propagation", "gpe"),
}


def _section_values(name, table, constants):
    """Convert one TOML table to {field: SI value}, rejecting unknown keys."""
    schema = SCHEMA[name]
    out = {}
    for key, raw in table.items():
        path = f"{name}.{key}"
        fld, unit = _match_key(name, key, schema)
        spec = schema[fld]
        if fld in out:
            raise ConfigError(path, f"'{fld}' given more than once")
        out[fld] = _convert(path, raw, spec, unit, constants)
    return out


def _match_key(section, key, schema):
    if key in schema and schema[key].family is None:
        return key, None
    for fld, spec in schema.items():
        if spec.family is None or not key.startswith(fld + "_"):
            continue
        unit = key[len(fld) + 1:]
        if unit in UNIT_FAMILIES[spec.family]:
            return fld, unit
    if key in schema:
        units = ", ".join(UNIT_FAMILIES[schema[key].family])
        raise ConfigError(f"{section}.{key}", f"missing unit suffix (one of {units})")
    raise ConfigError(f"{section}.{key}", "unknown key")


def _scalar(path, raw, spec, unit, constants):
    if spec.kind is bool:
        if not isinstance(raw, bool):
            raise ConfigError(path, "expected true or false")
        return raw
    if spec.kind is str:
        if not isinstance(raw, str):
            raise ConfigError(path, "expected a string")
        return raw
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ConfigError(path, "expected a number")
    if spec.kind is int:
        if isinstance(raw, float) and not raw.is_integer():
            raise ConfigError(path, "expected an integer")
        return int(raw)
    value = float(raw)
    if not math.isfinite(value):
        raise ConfigError(path, "expected a finite number")
    if unit is None:
        return value
    if spec.family == ENERGY:
        if unit == "J":
            return value
        return _scale(value, TEMPERATURE_UNITS[unit]) * constants.kB
    return _scale(value, UNIT_FAMILIES[spec.family][unit])


def _scale(value, factor):
    # divide by exact powers of ten so that 15 um -> 1.5e-05, not 1.4999999999999999e-05
    inverse = 1.0 / factor
    if factor < 1 and abs(inverse - round(inverse)) < 1e-9 * inverse:
        return value / round(inverse)
    return value * factor


def _convert(path, raw, spec, unit, constants):
    if spec.many:
        if not isinstance(raw, list) or not raw:
            raise ConfigError(path, "expected a non-empty list")
        return [_scalar(f"{path}[{i}]", r, spec, unit, constants) for i, r in enumerate(raw)]
    return _scalar(path, raw, spec, unit, constants)


@dataclass(frozen=True)
class GridSettings:
    x_min: float
    x_max: float
    n_points: int
    z_min: float | None = None
    z_max: float | None = None
    nz: int | None = None

    def grid1d(self):
        return Grid1D(self.x_min, self.x_max, self.n_points)

    def grid2d(self):
        return Grid2D(Grid1D(self.x_min, self.x_max, self.n_points),
                      Grid1D(self.z_min, self.z_max, self.nz))


@dataclass(frozen=True)
class PropagationSettings:
    dt: float | None
    t_final: float | None
    absorber_width: float
    absorber_strength: float
    snapshot_every: int
    switch_off_vertical: bool


@dataclass(frozen=True)
class EnsembleSettings:
    temperature: float
    max_states: int | None
    cutoff: float


@dataclass(frozen=True)
class GpeSettings:
    atom_number: float | None
    omega_y: float | None
    omega_y_ratio: float | None
    trap: str
    interactions: bool
    atom_numbers: tuple | None
    n_curve_points: int
    atom_number_max: float | None
    tolerance: float


@dataclass(frozen=True)
class RunConfig:
    """Validated run description, all values in SI units."""

    scenario: str
    constants: PhysicalConstants
    guide: GuideParams
    grid: GridSettings
    propagation: PropagationSettings | None = None
    ensemble: EnsembleSettings | None = None
    sweep_values: tuple | None = None
    gpe: GpeSettings | None = None
    source: str = field(default="", compare=False)

    def echo(self):
        """Resolved SI parameters as a flat, sorted mapping."""
        flat = {"scenario": self.scenario}
        for part in ("constants", "guide", "grid", "propagation", "ensemble", "gpe"):
            obj = getattr(self, part)
            if obj is None:
                continue
            for f in dataclasses.fields(obj):
                flat[f"{part}.{f.name}"] = getattr(obj, f.name)
        if self.sweep_values is not None:
            flat["sweep.values"] = list(self.sweep_values)
        return dict(sorted(flat.items()))


def _get(values, key, path, default=None, required=False):
    if key in values:
        return values[key]
    if required:
        raise ConfigError(path, "missing required key")
    return default


def _build_constants(values):
    kw = {}
    for name, attr in (("hbar", "hbar"), ("kB", "kB"), ("grav", "grav"), ("mass", "mass"),
                       ("a0", "scattering_length")):
        if name in values:
            kw[attr] = values[name]
    try:
        return dataclasses.replace(CONSTANTS, **kw)
    except ContractError as exc:
        raise ConfigError("constants", str(exc)) from None


def _build_guide(values, transition, constants):
    v = dict(values)
    for depth, intensity in (("U0", "I0"), ("U1", "I1")):
        if intensity in v:
            if depth in v:
                raise ConfigError(f"guide.{depth}", f"give either {depth} or {intensity}, not both")
            if transition is None:
                raise ConfigError("transition", f"needed to convert guide.{intensity} to a depth")
    gamma = v.get("gamma", GUIDE_DEFAULTS["gamma"])
    if not abs(gamma) < math.pi / 2:
        raise ConfigError("guide.gamma_deg", "must satisfy -90 < gamma < 90 degrees")
    geometry = dict(
        waist_vertical=v.get("w0", GUIDE_DEFAULTS["w0"]),
        waist_oblique=v.get("w1", GUIDE_DEFAULTS["w1"]),
        crossing_height=v.get("z0", GUIDE_DEFAULTS["z0"]),
        angle=gamma,
    )
    for key, name in (("w0", "waist_vertical"), ("w1", "waist_oblique")):
        if not geometry[name] > 0:
            raise ConfigError(f"guide.{key}", "must be > 0")
    if geometry["crossing_height"] > 0:
        raise ConfigError("guide.z0", "must be <= 0 (crossing below the release point)")
    try:
        if "I0" in v or "I1" in v:
            from .potentials import depth_from_intensity
            i0, i1 = v.get("I0"), v.get("I1")
            depths = []
            for depth, intensity in (("U0", i0), ("U1", i1)):
                if intensity is not None:
                    depths.append(depth_from_intensity(intensity, transition, constants))
                else:
                    depths.append(v.get(depth, GUIDE_DEFAULTS[depth] * constants.kB))
            u0, u1 = depths
            return GuideParams(u0, u1, intensity_vertical=i0, intensity_oblique=i1, **geometry)
        u0 = v.get("U0", GUIDE_DEFAULTS["U0"] * constants.kB)
        u1 = v.get("U1", GUIDE_DEFAULTS["U1"] * constants.kB)
        for key, val in (("U0", u0), ("U1", u1)):
            if val < 0:
                raise ConfigError(f"guide.{key}", "depth must be >= 0")
        return GuideParams(u0, u1, **geometry)
    except ContractError as exc:
        raise ConfigError("guide", str(exc)) from None


def _build_transition(values):
    if not values:
        return None
    try:
        return TransitionParams(
            _get(values, "linewidth", "transition.linewidth_rad_s", required=True),
            _get(values, "detuning", "transition.detuning_rad_s", required=True),
            _get(values, "saturation_intensity", "transition.saturation_intensity_W_m2",
                 required=True),
        )
    except ContractError as exc:
        raise ConfigError("transition", str(exc)) from None


def _power_of_two(path, n):
    if n < 16 or n & (n - 1):
        raise ConfigError(path, "must be a power of two >= 16")


def _build_grid(values, scenario, guide):
    two_d = scenario.startswith("gpe")
    x_min = _get(values, "x_min", "grid.x_min_um", required=True)
    x_max = _get(values, "x_max", "grid.x_max_um", required=True)
    n = _get(values, "n_points", "grid.n_points", required=True)
    if not x_max > x_min:
        raise ConfigError("grid.x_max", "must exceed grid.x_min")
    _power_of_two("grid.n_points", n)
    if two_d:
        z_min = _get(values, "z_min", "grid.z_min_um", required=True)
        z_max = _get(values, "z_max", "grid.z_max_um", required=True)
        nz = _get(values, "nz", "grid.nz", required=True)
        if not z_max > z_min:
            raise ConfigError("grid.z_max", "must exceed grid.z_min")
        _power_of_two("grid.nz", nz)
        return GridSettings(x_min, x_max, n, z_min, z_max, nz)
    for key in ("z_min", "z_max", "nz"):
        if key in values:
            raise ConfigError(f"grid.{key}", f"not used by the '{scenario}' scenario")
    if n > MAX_EIGEN_POINTS:
        raise ConfigError("grid.n_points", f"must be <= {MAX_EIGEN_POINTS} for the eigensolver")
    w0 = guide.waist_vertical
    if x_min > -3 * w0 or x_max - (x_max - x_min) / n < 3 * w0:
        raise ConfigError("grid", "eigen grid must span at least +/- 3 w0")
    return GridSettings(x_min, x_max, n)


def _build_propagation(values, scenario, guide):
    dt = values.get("dt")
    t_final = values.get("t_final")
    if dt is not None and not dt > 0:
        raise ConfigError("propagation.dt", "must be > 0")
    if t_final is not None and not t_final > 0:
        raise ConfigError("propagation.t_final", "must be > 0")
    if scenario == "gpe-fall":
        if dt is None:
            raise ConfigError("propagation.dt_us", "missing required key")
        if t_final is None:
            raise ConfigError("propagation.t_final_us", "missing required key")
    if dt is not None and t_final is not None and dt > t_final:
        raise ConfigError("propagation.dt", "must not exceed t_final")
    width = values.get("absorber_width", 0.0)
    if width < 0:
        raise ConfigError("propagation.absorber_width", "must be >= 0")
    strength = values.get("absorber_strength", guide.depth_vertical)
    if strength < 0:
        raise ConfigError("propagation.absorber_strength", "must be >= 0")
    snap = values.get("snapshot_every", 0)
    if snap < 0:
        raise ConfigError("propagation.snapshot_every", "must be >= 0")
    if scenario == "gpe-fall" and snap == 0:
        snap = max(1, round(t_final / dt))
    default_switch = scenario in ("deflect-sweep", "gpe-fall")
    switch = values.get("switch_off_vertical", default_switch)
    if scenario == "deflect-sweep" and not switch:
        raise ConfigError("propagation.switch_off_vertical", "deflector runs switch the vertical "
                          "guide off")
    if scenario == "split-sweep" and switch:
        raise ConfigError("propagation.switch_off_vertical", "splitter runs keep the vertical "
                          "guide on")
    return PropagationSettings(dt, t_final, width, strength, snap, switch)


def _build_ensemble(values, scenario):
    t = _get(values, "T", "ensemble.T_uK", required=scenario != "eigen")
    if t is not None and not t > 0:
        raise ConfigError("ensemble.T", "must be > 0")
    m = values.get("max_states")
    if m is not None and m < 1:
        raise ConfigError("ensemble.max_states", "must be >= 1")
    cutoff = values.get("cutoff", 1e-6)
    if not 0 <= cutoff < 1:
        raise ConfigError("ensemble.cutoff", "must be in [0, 1)")
    return EnsembleSettings(t, m, cutoff)


def _build_sweep(values, scenario, guide):
    key = "ratios" if scenario == "split-sweep" else "gammas"
    other = "gammas" if key == "ratios" else "ratios"
    label = "sweep.ratios" if key == "ratios" else "sweep.gammas_deg"
    if other in values:
        raise ConfigError(f"sweep.{other}", f"not used by the '{scenario}' scenario")
    vals = _get(values, key, label, required=True)
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError(label, "values must be strictly ascending")
    if key == "ratios":
        if min(vals) < 0:
            raise ConfigError(label, "ratios must be >= 0")
    else:
        for g in vals:
            if not 0 < abs(g) < math.pi / 2:
                raise ConfigError(label, "angles must satisfy 0 < |gamma| < 90 degrees")
        if guide.depth_oblique <= 0:
            raise ConfigError("guide.U1", "deflector sweep needs an oblique guide")
    return tuple(vals)


def _build_gpe(values, scenario):
    n = values.get("N")
    if scenario == "gpe-fall" and n is None:
        raise ConfigError("gpe.N", "missing required key")
    if n is not None and n < 1:
        raise ConfigError("gpe.N", "must be >= 1")
    omega_y = values.get("omega_y")
    ratio = values.get("omega_y_ratio")
    if omega_y is not None and ratio is not None:
        raise ConfigError("gpe.omega_y_ratio", "give either omega_y or omega_y_ratio")
    if omega_y is None and ratio is None:
        ratio = 10.0
    if omega_y is not None and not omega_y > 0:
        raise ConfigError("gpe.omega_y", "must be > 0")
    if ratio is not None and not ratio > 0:
        raise ConfigError("gpe.omega_y_ratio", "must be > 0")
    trap = values.get("trap", "spot" if scenario == "gpe-mu-curve" else "guide")
    if trap not in ("spot", "guide"):
        raise ConfigError("gpe.trap", "must be 'spot' or 'guide'")
    if scenario == "gpe-fall" and trap != "guide":
        raise ConfigError("gpe.trap", "the fall runs in the crossed guides ('guide')")
    ns = values.get("N_values")
    if ns is not None:
        if min(ns) < 1 or any(b <= a for a, b in zip(ns, ns[1:])):
            raise ConfigError("gpe.N_values", "must be >= 1 and strictly ascending")
        ns = tuple(ns)
    count = values.get("n_curve_points", 13)
    if count < 1:
        raise ConfigError("gpe.n_curve_points", "must be >= 1")
    n_max = values.get("N_max")
    if n_max is not None and n_max < 1:
        raise ConfigError("gpe.N_max", "must be >= 1")
    tol = values.get("tolerance", 1e-5)
    if not 0 < tol < 1:
        raise ConfigError("gpe.tolerance", "must be in (0, 1)")
    return GpeSettings(n, omega_y, ratio, trap, values.get("interactions", True), ns, count,
                       n_max, tol)


def parse_config(source):
    """Parse and validate a run configuration from a path or TOML text."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                    and "=" not in source):
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise ConfigError("config", f"cannot read {source}: {exc.strerror}") from None
    else:
        text = source
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"invalid TOML: {exc}") from None

    scenario = doc.pop("scenario", None)
    if scenario is None or scenario == "":
        raise ConfigError("scenario", f"missing required key (one of {', '.join(SCENARIOS)})")
    if scenario not in SCENARIOS:
        raise ConfigError("scenario", f"must be one of {', '.join(SCENARIOS)}")
    for name, table in doc.items():
        if name not in SCHEMA:
            raise ConfigError(name, "unknown key")
        if not isinstance(table, dict):
            raise ConfigError(name, "expected a [section]")
    for name in REQUIRED_SECTIONS[scenario]:
        if name not in doc:
            raise ConfigError(name, f"section required by the '{scenario}' scenario")

    # constants first: energies in temperature units need kB
    constants = _build_constants(_section_values("constants", doc.get("constants", {}), CONSTANTS))
    sections = {name: _section_values(name, doc.get(name, {}), constants) for name in SCHEMA
                if name != "constants"}
    transition = _build_transition(sections["transition"])
    guide = _build_guide(sections["guide"], transition, constants)
    grid = _build_grid(sections["grid"], scenario, guide)

    propagation = ensemble = sweep_values = gpe = None
    if scenario in ("split-run", "split-sweep", "deflect-sweep", "gpe-fall"):
        propagation = _build_propagation(sections["propagation"], scenario, guide)
    if scenario != "gpe-fall" and not scenario.startswith("gpe"):
        ensemble = _build_ensemble(sections["ensemble"], scenario)
    if scenario in ("split-sweep", "deflect-sweep"):
        sweep_values = _build_sweep(sections["sweep"], scenario, guide)
    if scenario.startswith("gpe"):
        gpe = _build_gpe(sections["gpe"], scenario)
        if gpe.trap == "spot" and guide.depth_vertical <= 0:
            raise ConfigError("guide.U0", "spot trap needs U0 > 0")
    if scenario in ("eigen", "split-run", "split-sweep", "deflect-sweep"):
        if guide.depth_vertical <= 0:
            raise ConfigError("guide.U0", "must be > 0: the vertical guide holds the initial cloud")
        if propagation is not None and propagation.t_final is None and guide.angle == 0:
            raise ConfigError("guide.gamma_deg", "must be nonzero to separate the guides")
    if propagation is not None and propagation.absorber_width > 0 and scenario == "gpe-fall":
        grid2 = grid.grid2d()
        limit = min(grid2.x_axis.length, grid2.z_axis.length) / 4
        if propagation.absorber_width >= limit:
            raise ConfigError("propagation.absorber_width", "must be below a quarter of the domain")
    return RunConfig(scenario, constants, guide, grid, propagation, ensemble, sweep_values, gpe,
                     source=text)
