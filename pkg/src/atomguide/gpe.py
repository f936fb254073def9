"""Two-dimensional Gross-Pitaevskii model of a condensate in the guides.

The condensate is tightly confined along y (frequency ``omega_y``) and
described by a normalised order parameter in the (x, z) plane with the
reduced coupling ``N g2d``.  Two holding potentials are provided: the
crossed guides themselves (``trap='guide'``) and an isotropic Gaussian spot
of the vertical-beam depth and waist (``trap='spot'``), whose harmonic
expansion is the one used by the Thomas-Fermi formulas below.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import CONSTANTS, PhysicalConstants
from .errors import ContractError, ConvergenceError, NumericFault, SetupError
from .grid import Grid2D, WaveField, gaussian_packet
from .potentials import (
    GuideParams,
    gaussian_spot_potential,
    guide_potential_2d,
    harmonic_frequency,
    oblique_axis_x,
)
from .propagator import (
    PropagationSpec,
    SplitOperator,
    chemical_potential,
    evolve,
    guide_potential_callable,
    residual_norm,
)

TRAPS = ("guide", "spot")


def g2d_coefficient(omega_y, constants=CONSTANTS):
    """Effective 2D coupling 2 hbar a0 sqrt(2 pi hbar omega_y / m), in J m^2."""
    if not omega_y > 0:
        raise ContractError("omega_y must be > 0")
    c = constants
    return 2.0 * c.hbar * c.scattering_length * math.sqrt(2.0 * math.pi * c.hbar * omega_y / c.mass)


@dataclass(frozen=True)
class GpeParams:
    """Condensate parameters; ``omega_y`` in rad/s."""

    atom_number: float
    omega_y: float
    guide: GuideParams
    trap: str = "spot"
    constants: PhysicalConstants = CONSTANTS
    interacting: bool = True  # False: same run with N g2d = 0, for comparison

    def __post_init__(self):
        if not self.atom_number >= 1:
            raise ContractError("atom_number must be >= 1")
        if not self.omega_y > 0:
            raise ContractError("omega_y must be > 0")
        if self.trap not in TRAPS:
            raise ContractError(f"trap must be one of {TRAPS}")
        if self.guide.depth_vertical <= 0 and self.trap == "spot":
            raise ContractError("spot trap needs a positive depth")

    @property
    def g2d(self):
        return g2d_coefficient(self.omega_y, self.constants)

    @property
    def nonlinear_coeff(self):
        return self.atom_number * self.g2d if self.interacting else 0.0

    @property
    def omega(self):
        """Harmonic frequency of the vertical beam (also of the spot trap)."""
        return harmonic_frequency(self.guide.depth_vertical, self.guide.waist_vertical,
                                  self.constants.mass)

    @property
    def oscillator_length(self):
        return math.sqrt(self.constants.hbar / (self.constants.mass * self.omega))

    def with_atoms(self, n):
        return GpeParams(n, self.omega_y, self.guide, self.trap, self.constants,
                         self.interacting)

    def potential(self, x, z):
        """Holding potential (no gravity) in which the ground state is computed."""
        if self.trap == "spot":
            return gaussian_spot_potential(x, z, self.guide.depth_vertical,
                                           self.guide.waist_vertical)
        return guide_potential_2d(x, z, self.guide)


def tf_chemical_potential(n, gp):
    """Thomas-Fermi chemical potential of N atoms in the harmonic trap."""
    if n < 0:
        raise ContractError("N must be >= 0")
    u0, w0 = gp.guide.depth_vertical, gp.guide.waist_vertical
    return -u0 + (2.0 / w0) * math.sqrt(gp.g2d * u0 * n / math.pi)


def tf_radius(mu, gp):
    """Radius where the Thomas-Fermi density vanishes."""
    excess = mu + gp.guide.depth_vertical
    return math.sqrt(max(excess, 0.0) * 2.0 / (gp.constants.mass * gp.omega**2))


def tf_density(r, mu, gp):
    """Thomas-Fermi density max(0, (mu - V_H(r)) / (N g2d)), in 1/m^2."""
    r = np.asarray(r, dtype=float)
    v_h = -gp.guide.depth_vertical + 0.5 * gp.constants.mass * gp.omega**2 * np.square(r)
    return np.maximum(0.0, (mu - v_h) / (gp.atom_number * gp.g2d))


def required_span(gp):
    """Smallest grid extent accepted for a ground-state computation."""
    radius = tf_radius(tf_chemical_potential(gp.atom_number, gp), gp)
    return 4.0 * max(gp.oscillator_length, radius)


def max_admissible_atoms(grid, gp):
    """Largest N whose Thomas-Fermi radius still satisfies the span rule on ``grid``."""
    span = min(grid.x_axis.length, grid.z_axis.length)
    radius = span / 4.0
    if radius < gp.oscillator_length:
        return 0.0
    excess = 0.5 * gp.constants.mass * gp.omega**2 * radius**2
    u0, w0 = gp.guide.depth_vertical, gp.guide.waist_vertical
    return math.pi * excess**2 * w0**2 / (4.0 * gp.g2d * u0)


def _trap_centre(gp):
    if gp.trap == "spot":
        return (0.0, 0.0)
    return (0.0, gp.guide.crossing_height)


@dataclass
class GroundState:
    field: WaveField
    chemical_potential: float
    decay_energy: float
    residual: float
    steps: int
    trace: list


def gpe_ground_state_full(grid, gp, *, tolerance=1e-5, dt=None, max_steps=400_000,
                          check_every=50):
    """Imaginary-time ground state with residual control.

    Relaxes with a fixed step until the residual
    ||(T + V + N g2d |Phi|^2 - mu) Phi|| stops improving, then halves the step
    (the Strang fixed point is biased by O(dt^2)) until the residual is at
    most ``tolerance * |mu + U0|``.
    """
    if not isinstance(grid, Grid2D):
        raise ContractError("ground state needs a 2D grid")
    need = required_span(gp)
    # relative slack so N = max_admissible_atoms(grid) is accepted despite rounding
    if min(grid.x_axis.length, grid.z_axis.length) < need * (1 - 1e-9):
        radius = tf_radius(tf_chemical_potential(gp.atom_number, gp), gp)
        raise SetupError(f"grid spans less than {need:.3e} m (Thomas-Fermi radius "
                         f"{radius:.3e} m)")
    c = gp.constants
    x, z = grid.mesh
    v = gp.potential(x, z)
    g = gp.nonlinear_coeff
    if dt is None:
        dt = 0.05 / gp.omega
    psi = gaussian_packet(grid, _trap_centre(gp), gp.oscillator_length / math.sqrt(2.0)).psi
    dv = grid.cell_volume
    op = SplitOperator(grid, dt, constants=c, imaginary=True)
    trace = []
    best = math.inf
    for step in range(1, max_steps + 1):
        psi = op.step(psi, v, g)
        n2 = float(np.sum(np.abs(psi) ** 2) * dv)
        if not (np.isfinite(n2) and n2 > 0):
            raise NumericFault("relaxation lost the field", step=step)
        psi /= math.sqrt(n2)
        if step % check_every:
            continue
        mu = chemical_potential(psi, grid, v, g, c)
        res = residual_norm(psi, grid, v, g, mu, c)
        trace.append((step, op.dt, mu, res))
        if res <= tolerance * abs(mu + gp.guide.depth_vertical):
            decay = -c.hbar * math.log(n2) / (2 * op.dt)
            return GroundState(WaveField(grid, psi), mu, decay, res, step, trace)
        if res > 0.995 * best and op.dt > dt * 2.0**-20:
            op = SplitOperator(grid, 0.5 * op.dt, constants=c, imaginary=True)
            best = math.inf
        else:
            best = res
    raise ConvergenceError(f"residual above tolerance after {max_steps} steps", trace)


def gpe_ground_state(grid, gp, **kwargs):
    """Return (ground field, chemical potential)."""
    gs = gpe_ground_state_full(grid, gp, **kwargs)
    return gs.field, gs.chemical_potential


@dataclass
class MuCurve:
    points: list

    @property
    def atom_numbers(self):
        return np.array([p[0] for p in self.points])

    @property
    def mu_numeric(self):
        return np.array([p[1] for p in self.points])

    @property
    def mu_tf(self):
        return np.array([p[2] for p in self.points])


def log_atom_grid(n_max, count):
    """Logarithmically spaced atom numbers from 1 to ``n_max``."""
    if n_max < 1 or count < 1:
        raise ContractError("need n_max >= 1 and count >= 1")
    return np.unique(np.geomspace(1.0, n_max, count))


def _mu_point(args):
    grid, gp, n = args
    _, mu = gpe_ground_state(grid, gp.with_atoms(n))
    return mu


def mu_curve(grid, gp, atom_numbers, jobs=1):
    """Chemical potential versus N, with the Thomas-Fermi value alongside."""
    tasks = [(grid, gp, float(n)) for n in atom_numbers]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            mus = list(pool.map(_mu_point, tasks))
    else:
        mus = [_mu_point(t) for t in tasks]
    return MuCurve([(n, mu, tf_chemical_potential(n, gp)) for (_, _, n), mu in zip(tasks, mus)])


def fall_observer(gp):
    """Observer recording (t, <z>, fraction within 2 w1 of the oblique axis)."""
    p = gp.guide

    def observe(t, field):
        x, z = field.grid.mesh
        d = field.density * field.grid.cell_volume
        total = d.sum()
        # perpendicular distance to the line x = -(z - z0) tan(angle)
        dist = np.abs((x - oblique_axis_x(z, p)) * math.cos(p.angle))
        near = d[dist <= 2.0 * p.waist_oblique].sum()
        return (t, float((d * z).sum() / total), float(near / total))

    return observe


def gpe_fall(phi0, gp, spec, *, resolution_check=True):
    """Real-time fall of the condensate under the guides, gravity and N g2d |Phi|^2.

    Diagnostics (one per snapshot) are ``(t, mean_z, frac_on_oblique_axis)``.
    """
    if gp.trap != "guide":
        raise ContractError("the fall runs in the crossed-guide potential")
    from .propagator import propagate
    return propagate(phi0, gp.guide, spec, "gpe2d", gp.nonlinear_coeff, constants=gp.constants,
                     observer=fall_observer(gp), resolution_check=resolution_check)


def principal_axes(field):
    """Aspect ratio and long-axis direction of the density.

    Returns ``(aspect, angle)`` where ``aspect`` is the ratio of the standard
    deviations along the principal axes and ``angle`` is the angle of the
    long axis from the z axis, folded into (-pi/2, pi/2].  A positive angle
    means the axis leans towards +x when going down.
    """
    x, z = field.grid.mesh
    d = field.density
    d = d / d.sum()
    mx, mz = (d * x).sum(), (d * z).sum()
    cxx = (d * (x - mx) ** 2).sum()
    czz = (d * (z - mz) ** 2).sum()
    cxz = (d * (x - mx) * (z - mz)).sum()
    evals, evecs = np.linalg.eigh(np.array([[cxx, cxz], [cxz, czz]]))
    major = evecs[:, 1]
    if major[1] > 0:
        major = -major
    angle = math.atan2(major[0], -major[1])
    aspect = math.sqrt(evals[1] / max(evals[0], 1e-300))
    return aspect, angle


def free_fall_check(grid, t_final, dt, constants=CONSTANTS, width=None):
    """<z>(t_final) for a linear packet under gravity alone, and the exact value."""
    p = GuideParams(0.0, 0.0, 1.0, 1.0, 0.0, 0.0)
    w = width if width is not None else 0.05 * grid.z_axis.length
    field = gaussian_packet(grid, (0.0, 0.5 * (grid.z_axis.x_min + grid.z_axis.x_max)), w)
    z_start = float((field.density * grid.coords[1]).sum() * grid.cell_volume)
    spec = PropagationSpec(dt=dt, t_final=t_final)
    res = evolve(field, guide_potential_callable(p, spec, "gpe2d", constants), spec.step,
                 spec.n_steps, constants=constants)
    f = res.final_field
    z_end = float((f.density * grid.coords[1]).sum() * grid.cell_volume)
    return z_end - z_start, -0.5 * constants.grav * t_final**2
