"""Second-order (Strang) split-operator propagation.

One step of length dt applies

    exp(-i V dt / 2 hbar) . exp(-i T dt / hbar) . exp(-i V dt / 2 hbar)

with the kinetic factor applied in Fourier space.  Time-dependent
potentials are sampled at the step midpoint.  A mean-field term
``g |psi|^2`` is added to V in each half step, using the density available
at that moment (it is recomputed after the kinetic step).  Imaginary-time
propagation substitutes dt -> -i dt.

Arrays may carry leading batch axes; the transforms act on the trailing
grid axes only, so a stack of independent states is propagated at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .constants import CONSTANTS
from .errors import ContractError, ConvergenceError, NumericFault, SetupError
from .grid import Grid1D, Grid2D, WaveField, norm
from .potentials import effective_potential, guide_potential_2d

_FAULT_CHECK_EVERY = 256


@dataclass(frozen=True)
class Absorber:
    """Negative imaginary potential with a cos^2 ramp at the domain edges.

    The strength is reached at the outermost grid point and falls to zero
    ``width`` inside the domain.
    """

    width: float
    strength: float

    def __post_init__(self):
        if not (self.width > 0 and self.strength >= 0):
            raise ContractError("absorber needs width > 0 and strength >= 0")

    def profile(self, axis: Grid1D):
        if not self.width < axis.length / 4:
            raise ContractError("absorber width must be below a quarter of the domain")
        x = axis.x
        out = np.zeros_like(x)
        for d in (x - axis.x_min, axis.x_max - axis.dx - x):
            inside = d < self.width
            out[inside] += np.cos(0.5 * np.pi * d[inside] / self.width) ** 2
        return self.strength * out

    def on_grid(self, grid):
        if isinstance(grid, Grid1D):
            return self.profile(grid)
        return self.profile(grid.x_axis)[:, None] + self.profile(grid.z_axis)[None, :]


@dataclass(frozen=True)
class PropagationSpec:
    dt: float
    t_final: float
    switch_off_vertical_at: float | None = None
    absorber: Absorber | None = None
    snapshot_every: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ContractError("dt must be > 0")
        if not self.t_final >= self.dt * (1 - 1e-12):
            raise ContractError("t_final must be >= dt")
        t_off = self.switch_off_vertical_at
        if t_off is not None and not 0 < t_off < self.t_final:
            raise ContractError("switch-off time must lie strictly inside (0, t_final)")
        if self.snapshot_every < 0:
            raise ContractError("snapshot_every must be >= 0")

    @property
    def n_steps(self):
        return max(1, int(round(self.t_final / self.dt)))

    @property
    def step(self):
        """Actual step length; t_final is always hit exactly."""
        return self.t_final / self.n_steps


@dataclass
class PropagationResult:
    final_field: WaveField
    snapshots: list = field(default_factory=list)
    norm_history: list = field(default_factory=list)
    lost_fraction: float = 0.0
    diagnostics: list = field(default_factory=list)


def _grid_axes(grid):
    return tuple(range(-len(grid.shape), 0))


class SplitOperator:
    """Precomputed factors for repeated Strang steps of fixed length."""

    def __init__(self, grid, dt, *, constants=CONSTANTS, imaginary=False, absorber=None):
        if dt < 0:
            raise ContractError("dt must be >= 0")
        self.grid = grid
        self.dt = dt
        self.hbar = constants.hbar
        self.imaginary = imaginary
        self.axes = _grid_axes(grid)
        kin = grid.kinetic(constants.mass, constants.hbar)
        if imaginary:
            self.kinetic_factor = np.exp(-kin * dt / self.hbar)
        else:
            self.kinetic_factor = np.exp(-1j * kin * dt / self.hbar)
        self.damping = None
        if absorber is not None and absorber.strength > 0:
            self.damping = np.exp(-absorber.on_grid(grid) * dt / (2 * self.hbar))

    def half_factor(self, potential):
        arg = potential * (self.dt / (2 * self.hbar))
        out = np.exp(-arg) if self.imaginary else np.exp(-1j * arg)
        if self.damping is not None:
            out = out * self.damping
        return out

    def kinetic(self, psi):
        spec = scipy.fft.fftn(psi, axes=self.axes, overwrite_x=True)
        spec *= self.kinetic_factor
        return scipy.fft.ifftn(spec, axes=self.axes, overwrite_x=True)

    def step(self, psi, potential, nonlinear_coeff=0.0, half=None):
        """Advance ``psi`` by one step in ``potential`` (an array on the grid)."""
        if nonlinear_coeff:
            density = np.abs(psi) ** 2
            psi = psi * self.half_factor(potential + nonlinear_coeff * density)
            psi = self.kinetic(psi)
            start = density.sum(axis=self.axes, keepdims=True)
            density = np.abs(psi) ** 2
            if self.imaginary:
                # imaginary time changes the norm; the mean field sees the starting norm
                density *= start / density.sum(axis=self.axes, keepdims=True)
            psi *= self.half_factor(potential + nonlinear_coeff * density)
            return psi
        if half is None:
            half = self.half_factor(potential)
        psi = psi * half
        psi = self.kinetic(psi)
        psi *= half
        return psi


def _potential_array(potential_at, grid, t):
    if callable(potential_at):
        return np.asarray(potential_at(*grid.coords, t), dtype=float)
    return np.asarray(potential_at, dtype=float)


def strang_step(field, potential_at, t, dt, nonlinear_coeff=0.0, *, constants=CONSTANTS,
                imaginary=False, absorber=None):
    """Return ``field`` advanced from t to t + dt.

    ``potential_at`` is either a static array on the grid or a callable
    ``potential_at(*coords, t)``; it is evaluated at the midpoint t + dt/2.
    """
    if dt == 0:
        return field.copy()
    op = SplitOperator(field.grid, dt, constants=constants, imaginary=imaginary,
                       absorber=absorber)
    v = _potential_array(potential_at, field.grid, t + 0.5 * dt)
    psi = op.step(field.psi.copy(), v, nonlinear_coeff)
    if not np.all(np.isfinite(psi)):
        raise NumericFault("non-finite amplitude after Strang step", step=0)
    return WaveField(field.grid, psi)


def evolve(field0, potential_at, dt, n_steps, *, t0=0.0, nonlinear_coeff=0.0,
           constants=CONSTANTS, absorber=None, snapshot_every=0, observer=None):
    """Real-time propagation of a single field for ``n_steps`` steps.

    ``observer(t, field)`` is called at t0 and after every ``snapshot_every``
    steps (and at the end) when ``snapshot_every`` > 0; its return values
    are collected in ``PropagationResult.diagnostics``.
    """
    grid = field0.grid
    op = SplitOperator(grid, dt, constants=constants, absorber=absorber)
    static = not callable(potential_at)
    half = None
    if static and not nonlinear_coeff:
        half = op.half_factor(_potential_array(potential_at, grid, t0))
    psi = field0.psi.copy()
    dv = grid.cell_volume
    result = PropagationResult(final_field=field0)
    norm0 = float(np.sum(np.abs(psi) ** 2) * dv)
    last_valid = (t0, field0.copy())

    def record(t, psi):
        f = WaveField(grid, psi.copy())
        result.snapshots.append((t, f))
        result.norm_history.append((t, float(np.sum(np.abs(psi) ** 2) * dv)))
        if observer is not None:
            result.diagnostics.append(observer(t, f))

    if snapshot_every:
        record(t0, psi)
    for i in range(n_steps):
        t = t0 + i * dt
        v = None if half is not None else _potential_array(potential_at, grid, t + 0.5 * dt)
        psi = op.step(psi, v, nonlinear_coeff, half=half)
        done = i + 1 == n_steps
        if (i + 1) % _FAULT_CHECK_EVERY == 0 or done:
            if not np.all(np.isfinite(psi)):
                raise NumericFault("non-finite amplitude during propagation", step=i + 1,
                                   last_valid=last_valid)
            last_valid = (t + dt, WaveField(grid, psi.copy()))
        if snapshot_every and ((i + 1) % snapshot_every == 0 or done):
            record(t0 + (i + 1) * dt, psi)
    final = WaveField(grid, psi)
    result.final_field = final
    if not snapshot_every:
        result.norm_history.append((t0 + n_steps * dt, norm(final)))
    result.lost_fraction = min(1.0, max(0.0, norm0 - norm(final)))
    return result


def guide_potential_callable(p, spec=None, mode="tdse1d", constants=CONSTANTS):
    """Potential V(coords..., t) for a guided propagation run.

    ``tdse1d``: the free-fall effective potential along x.  ``gpe2d``: the
    crossed-beam potential plus gravity m g z.  In both modes the vertical
    beam is removed for t > ``spec.switch_off_vertical_at`` when set.
    """
    t_off = spec.switch_off_vertical_at if spec is not None else None
    p_off = p.replace(depth_vertical=0.0)

    def params_at(t):
        return p_off if (t_off is not None and t > t_off) else p

    if mode == "tdse1d":
        def potential(x, t):
            return effective_potential(x, t, params_at(t), constants)
    elif mode == "gpe2d":
        mg = constants.mass * constants.grav

        def potential(x, z, t):
            return guide_potential_2d(x, z, params_at(t)) + mg * z
    else:
        raise ContractError(f"unknown propagation mode {mode!r}")
    return potential


def field_energies(psi, grid, potential, constants=CONSTANTS):
    """<T> + <V> for each state of a (possibly stacked) array of fields."""
    axes = _grid_axes(grid)
    dv = grid.cell_volume
    spec = scipy.fft.fftn(psi, axes=axes)
    n = np.prod(grid.shape)
    kin = grid.kinetic(constants.mass, constants.hbar)
    e_kin = np.sum(np.abs(spec) ** 2 * kin, axis=axes) * dv / n
    e_pot = np.sum(np.abs(psi) ** 2 * potential, axis=axes) * dv
    return e_kin + e_pot


def estimate_max_kinetic(grid, psi, p, spec, mode="tdse1d", nonlinear_coeff=0.0,
                         constants=CONSTANTS):
    """Upper estimate of the kinetic energy an atom can reach during a run.

    Energy above the bottom of the combined well, converted to speed and
    added to the drift speed (the sweep speed of the oblique well in 1D,
    the free-fall speed in 2D), taken at t_final.
    """
    potential = guide_potential_callable(p, None, mode, constants)
    v0 = _potential_array(potential, grid, 0.0)
    if mode == "gpe2d":
        v0 = v0 - constants.mass * constants.grav * grid.coords[1]
    energies = np.atleast_1d(field_energies(psi, grid, v0, constants))
    relative = float(np.max(energies)) + p.depth_vertical + p.depth_oblique
    if nonlinear_coeff:
        relative += nonlinear_coeff * float(np.max(np.abs(psi) ** 2))
    relative = max(relative, 0.0)
    if mode == "tdse1d":
        drift = constants.grav * spec.t_final * abs(math.tan(p.angle))
    else:
        drift = constants.grav * spec.t_final
    drift_energy = 0.5 * constants.mass * drift**2
    return (math.sqrt(relative) + math.sqrt(drift_energy)) ** 2


def check_resolution(grid, psi, p, spec, mode="tdse1d", nonlinear_coeff=0.0,
                     constants=CONSTANTS, margin=4.0):
    """Raise SetupError unless the grid represents ``margin`` x the estimated kinetic energy."""
    needed = margin * estimate_max_kinetic(grid, psi, p, spec, mode, nonlinear_coeff, constants)
    available = grid.max_kinetic(constants.mass, constants.hbar)
    if available < needed:
        scale = math.sqrt(needed / available)
        axes = [grid] if isinstance(grid, Grid1D) else [grid.x_axis, grid.z_axis]
        points = max(int(math.ceil(a.n_points * scale)) for a in axes)
        raise SetupError(
            f"grid too coarse: representable kinetic energy {available:.3e} J "
            f"< {margin:g} x estimated maximum {needed / margin:.3e} J",
            required_points=1 << (points - 1).bit_length(),
        )


def default_time_step(grid, potential, constants=CONSTANTS):
    """Conservative dt = 0.1 hbar / Emax, Emax = max(|V|max, grid kinetic maximum)."""
    e_max = max(float(np.max(np.abs(potential))), grid.max_kinetic(constants.mass, constants.hbar))
    return 0.1 * constants.hbar / e_max


def propagate(field0, p, spec, mode="tdse1d", nonlinear_coeff=0.0, *, constants=CONSTANTS,
              observer=None, resolution_check=True):
    """Propagate a field through the guide from t = 0 to ``spec.t_final``.

    ``tdse1d`` propagates along x in the free-fall effective potential;
    ``gpe2d`` propagates the order parameter in the (x, z) plane under the
    crossed-beam potential, gravity and the mean-field term.
    """
    if mode == "tdse1d" and not isinstance(field0.grid, Grid1D):
        raise ContractError("tdse1d mode needs a 1D field")
    if mode == "gpe2d" and not isinstance(field0.grid, Grid2D):
        raise ContractError("gpe2d mode needs a 2D field")
    if mode == "tdse1d" and nonlinear_coeff:
        raise ContractError("tdse1d mode is linear")
    if resolution_check:
        check_resolution(field0.grid, field0.psi, p, spec, mode, nonlinear_coeff, constants)
    potential = guide_potential_callable(p, spec, mode, constants)
    return evolve(field0, potential, spec.step, spec.n_steps, nonlinear_coeff=nonlinear_coeff,
                  constants=constants, absorber=spec.absorber,
                  snapshot_every=spec.snapshot_every, observer=observer)


def propagate_many(psi_stack, grid, p, spec, *, constants=CONSTANTS, resolution_check=True):
    """Propagate a stack of independent 1D states (rows) through the guide.

    Returns the final stack.  Equivalent to calling :func:`propagate` on
    each row, but shares the potential evaluation and FFT calls.
    """
    psi = np.array(psi_stack, dtype=np.complex128, copy=True)
    if psi.shape[-1:] != grid.shape:
        raise ContractError("state stack does not match the grid")
    if resolution_check:
        check_resolution(grid, psi, p, spec, "tdse1d", 0.0, constants)
    potential = guide_potential_callable(p, spec, "tdse1d", constants)
    dt = spec.step
    op = SplitOperator(grid, dt, constants=constants, absorber=spec.absorber)
    x = grid.x
    for i in range(spec.n_steps):
        v = potential(x, (i + 0.5) * dt)
        psi = op.step(psi, v)
        if (i + 1) % _FAULT_CHECK_EVERY == 0 and not np.all(np.isfinite(psi)):
            raise NumericFault("non-finite amplitude during ensemble propagation", step=i + 1)
    if not np.all(np.isfinite(psi)):
        raise NumericFault("non-finite amplitude during ensemble propagation",
                           step=spec.n_steps)
    return psi


@dataclass
class Relaxation:
    """Outcome of an imaginary-time relaxation."""

    field: WaveField
    energy: float
    decay_energy: float
    steps: int
    trace: list


def relax(field0, potential, nonlinear_coeff=0.0, *, tolerance=1e-10, dt=None,
          max_steps=500_000, constants=CONSTANTS, min_steps=10):
    """Imaginary-time relaxation towards the lowest state of ``potential``.

    ``energy`` is <T + V + g|psi|^2> of the returned normalised field, i.e.
    the chemical potential for a nonlinear problem.  ``decay_energy`` is the
    same quantity read off the norm decay of the last step.
    """
    grid = field0.grid
    v = _potential_array(potential, grid, 0.0)
    if dt is None:
        dt = default_time_step(grid, v, constants)
    op = SplitOperator(grid, dt, constants=constants, imaginary=True)
    half = None if nonlinear_coeff else op.half_factor(v)
    dv = grid.cell_volume
    psi = field0.normalized().psi
    trace = []
    previous = None
    decay = math.nan
    for i in range(1, max_steps + 1):
        psi = op.step(psi, v, nonlinear_coeff, half=half)
        n2 = float(np.sum(np.abs(psi) ** 2) * dv)
        if not (np.isfinite(n2) and n2 > 0):
            raise NumericFault("relaxation lost the field", step=i)
        decay = -constants.hbar * math.log(n2) / (2 * dt)
        psi /= math.sqrt(n2)
        energy = chemical_potential(psi, grid, v, nonlinear_coeff, constants)
        trace.append(energy)
        if previous is not None and i >= min_steps:
            if abs(energy - previous) <= tolerance * abs(energy):
                return Relaxation(WaveField(grid, psi), energy, decay, i, trace)
        previous = energy
    raise ConvergenceError(f"no convergence within {max_steps} imaginary-time steps", trace)


def imaginary_time_relax(field0, potential, nonlinear_coeff=0.0, tolerance=1e-10, **kwargs):
    """Return (ground field, energy); see :func:`relax`."""
    r = relax(field0, potential, nonlinear_coeff, tolerance=tolerance, **kwargs)
    return r.field, r.energy


def chemical_potential(psi, grid, potential, nonlinear_coeff=0.0, constants=CONSTANTS):
    """<T + V + g|psi|^2> for a normalised field array."""
    e = field_energies(psi, grid, potential, constants)
    if nonlinear_coeff:
        e = e + nonlinear_coeff * np.sum(np.abs(psi) ** 4) * grid.cell_volume
    return float(e)


def gp_energy(psi, grid, potential, nonlinear_coeff=0.0, constants=CONSTANTS):
    """Gross-Pitaevskii energy functional <T + V> + (g/2) sum |psi|^4 dV."""
    e = field_energies(psi, grid, potential, constants)
    return float(e + 0.5 * nonlinear_coeff * np.sum(np.abs(psi) ** 4) * grid.cell_volume)


def residual_norm(psi, grid, potential, nonlinear_coeff, mu, constants=CONSTANTS):
    """|| (T + V + g|psi|^2 - mu) psi || in the L2 sense."""
    axes = _grid_axes(grid)
    kin = grid.kinetic(constants.mass, constants.hbar)
    h_psi = scipy.fft.ifftn(kin * scipy.fft.fftn(psi, axes=axes), axes=axes)
    h_psi += (potential + nonlinear_coeff * np.abs(psi) ** 2 - mu) * psi
    return float(np.sqrt(np.sum(np.abs(h_psi) ** 2) * grid.cell_volume))


def write_snapshot_csv(path, t, field):
    """Dump one snapshot: header ``# t=<seconds>`` then x[,z],re,im,density rows."""
    grid = field.grid
    psi = field.psi.ravel()
    cols = [c.ravel() for c in grid.coords]
    names = ["x", "z"][: len(cols)] + ["re", "im", "density"]
    data = np.column_stack(cols + [psi.real, psi.imag, np.abs(psi) ** 2])
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# t={t!r}\n")
        np.savetxt(fh, data, fmt="%.17g", delimiter=",", header=",".join(names), comments="")
