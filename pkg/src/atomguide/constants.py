"""Physical constants and unit conversions.

Everything inside the package is SI.  Configuration files speak the lab's
units (microkelvin for energies, mm/um for lengths, ms/us for times and
degrees for angles); the helpers here do the conversion at the boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ContractError

ATOMIC_MASS_UNIT = 1.66053906660e-27


@dataclass(frozen=True)
class PhysicalConstants:
    """Constants used by the solvers.  All fields are SI and overridable."""

    hbar: float = 1.054571817e-34
    kB: float = 1.380649e-23
    grav: float = 9.80665
    mass: float = 1.44316e-25  # 87Rb, 86.909 u
    scattering_length: float = 5.29e-9

    def __post_init__(self):
        for name in ("hbar", "kB", "grav", "mass", "scattering_length"):
            value = getattr(self, name)
            if not value > 0:
                raise ContractError(f"{name} must be strictly positive, got {value!r}")

    def microkelvin(self, value):
        """Energy in joules of ``value`` microkelvin."""
        return value * 1e-6 * self.kB

    def to_microkelvin(self, energy):
        return energy / (1e-6 * self.kB)


CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class TransitionParams:
    """Atomic transition driving the dipole force.

    ``linewidth`` and ``detuning`` are angular frequencies (rad/s); the sign
    of ``detuning`` is kept (negative for red detuning).
    """

    linewidth: float
    detuning: float
    saturation_intensity: float

    def __post_init__(self):
        if not self.linewidth > 0:
            raise ContractError("linewidth must be > 0")
        if not self.saturation_intensity > 0:
            raise ContractError("saturation_intensity must be > 0")
        if self.detuning == 0:
            raise ContractError("detuning must be nonzero")


LENGTH_UNITS = {"m": 1.0, "mm": 1e-3, "um": 1e-6, "nm": 1e-9}
TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6}
ANGLE_UNITS = {"deg": math.pi / 180.0, "rad": 1.0}
# temperatures in kelvin; energies are obtained by multiplying with kB
TEMPERATURE_UNITS = {"K": 1.0, "mK": 1e-3, "uK": 1e-6, "nK": 1e-9}
