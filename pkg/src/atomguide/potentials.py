"""Dipole-guide potentials for a vertical and an oblique Gaussian beam.

The oblique beam crosses the vertical one at height ``crossing_height`` and
is tilted by ``angle`` from the vertical.  Its transverse coordinate is
``x cos(angle) + (z - crossing_height) sin(angle)``, so below the crossing
point the oblique guide runs towards positive x for a positive angle.

Depths are stored as positive magnitudes (joules) and enter the potential
with an explicit minus sign.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .constants import CONSTANTS
from .errors import ContractError


def depth_from_intensity(intensity, transition, constants=CONSTANTS):
    """Light-shift well depth of a far-detuned beam of given intensity.

    Returns (hbar Gamma / 2) * (Gamma / 4|delta|) * (I / I_s), the magnitude
    of the attractive well for red detuning.
    """
    if intensity < 0:
        raise ContractError("intensity must be >= 0")
    if transition.detuning == 0:
        raise ContractError("detuning must be nonzero")
    gamma = transition.linewidth
    return (
        constants.hbar * gamma / 2.0
        * gamma / (4.0 * abs(transition.detuning))
        * intensity / transition.saturation_intensity
    )


@dataclass(frozen=True)
class GuideParams:
    """Geometry and depths of the crossed guide (SI units)."""

    depth_vertical: float
    depth_oblique: float
    waist_vertical: float
    waist_oblique: float
    crossing_height: float
    angle: float
    intensity_vertical: float | None = None
    intensity_oblique: float | None = None

    def __post_init__(self):
        if not (self.waist_vertical > 0 and self.waist_oblique > 0):
            raise ContractError("waists must be > 0")
        if self.depth_vertical < 0 or self.depth_oblique < 0:
            raise ContractError("depths must be >= 0")
        # negative angles are the mirror image of the device; used for parity checks
        if not abs(self.angle) < math.pi / 2:
            raise ContractError("angle must satisfy |angle| < pi/2")
        if self.crossing_height > 0:
            raise ContractError("crossing_height must be <= 0")

    @classmethod
    def from_intensities(cls, intensity_vertical, intensity_oblique, transition, *,
                         waist_vertical, waist_oblique, crossing_height, angle,
                         constants=CONSTANTS):
        return cls(
            depth_vertical=depth_from_intensity(intensity_vertical, transition, constants),
            depth_oblique=depth_from_intensity(intensity_oblique, transition, constants),
            waist_vertical=waist_vertical,
            waist_oblique=waist_oblique,
            crossing_height=crossing_height,
            angle=angle,
            intensity_vertical=intensity_vertical,
            intensity_oblique=intensity_oblique,
        )

    def replace(self, **changes):
        return replace(self, **changes)

    @property
    def oblique_waist_along_x(self):
        """Width of the oblique well measured along x at fixed z."""
        return self.waist_oblique / math.cos(self.angle)


def vertical_guide_potential(x, p):
    return -p.depth_vertical * np.exp(-2.0 * np.square(x) / p.waist_vertical**2)


def oblique_guide_potential(x, z, p):
    xr = x * math.cos(p.angle) + (z - p.crossing_height) * math.sin(p.angle)
    return -p.depth_oblique * np.exp(-2.0 * np.square(xr) / p.waist_oblique**2)


def guide_potential_2d(x, z, p):
    """Potential of the two crossed beams at (x, z)."""
    return vertical_guide_potential(x, p) + oblique_guide_potential(x, z, p)


def oblique_axis_x(z, p):
    """x position of the oblique beam axis at height z."""
    return -(z - p.crossing_height) * math.tan(p.angle)


def fall_height(t, constants=CONSTANTS):
    return -0.5 * constants.grav * np.square(t)


def crossing_time(z0, constants=CONSTANTS):
    """Time for an atom released at rest from z = 0 to fall to ``z0``."""
    if z0 > 0:
        raise ContractError("z0 must be <= 0")
    return math.sqrt(2.0 * abs(z0) / constants.grav)


def effective_potential(x, t, p, constants=CONSTANTS):
    """Guide potential seen along x by an atom in free fall, z = -g t^2 / 2."""
    if np.any(np.asarray(t) < 0):
        raise ContractError("t must be >= 0")
    return guide_potential_2d(x, fall_height(t, constants), p)


def harmonic_frequency(depth, waist, mass):
    """Small-oscillation frequency (rad/s) at the bottom of a Gaussian well."""
    if not (depth > 0 and waist > 0 and mass > 0):
        raise ContractError("depth, waist and mass must be positive")
    return 2.0 / waist * math.sqrt(depth / mass)


def harmonic_potential(r, depth, waist, mass):
    omega = harmonic_frequency(depth, waist, mass)
    return -depth + 0.5 * mass * omega**2 * np.square(r)


def gaussian_spot_potential(x, z, depth, waist):
    """Isotropic Gaussian well -U exp(-2 r^2 / w^2) in the (x, z) plane.

    Its second-order expansion is exactly :func:`harmonic_potential` in r; it
    is used as the holding trap for the condensate chemical-potential curve.
    """
    return -depth * np.exp(-2.0 * (np.square(x) + np.square(z)) / waist**2)
