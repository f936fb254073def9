"""Uniform periodic grids and the wavefield container.

A :class:`Grid1D` holds ``n_points`` samples ``x_j = x_min + j*dx`` with
``dx = (x_max - x_min)/n_points``; ``x_max`` itself is the periodic image of
``x_min`` and is not a sample.  Wavenumbers follow the usual DFT ordering
(non-negative frequencies first), i.e. ``2*pi*numpy.fft.fftfreq(n, dx)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ContractError, NumericFault


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        n = self.n_points
        if int(n) != n or n < 16 or (n & (n - 1)) != 0:
            raise ContractError(f"n_points must be a power of two >= 16, got {n!r}")
        if not self.x_max > self.x_min:
            raise ContractError("x_max must exceed x_min")

    @property
    def length(self):
        return self.x_max - self.x_min

    @property
    def dx(self):
        return self.length / self.n_points

    @property
    def shape(self):
        return (self.n_points,)

    @property
    def cell_volume(self):
        return self.dx

    @cached_property
    def x(self):
        return self.x_min + self.dx * np.arange(self.n_points)

    @cached_property
    def k(self):
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, self.dx)

    @property
    def k_max(self):
        """Largest representable |k| (the Nyquist wavenumber)."""
        return np.pi / self.dx

    @property
    def coords(self):
        return (self.x,)

    def kinetic(self, mass, hbar):
        """Kinetic energy hbar^2 k^2 / 2m on the FFT-ordered k grid."""
        return hbar**2 * self.k**2 / (2.0 * mass)

    def max_kinetic(self, mass, hbar):
        return hbar**2 * self.k_max**2 / (2.0 * mass)


@dataclass(frozen=True)
class Grid2D:
    """Product of an x axis and a z axis; arrays are indexed ``[ix, iz]``."""

    x_axis: Grid1D
    z_axis: Grid1D

    @property
    def shape(self):
        return (self.x_axis.n_points, self.z_axis.n_points)

    @property
    def cell_volume(self):
        return self.x_axis.dx * self.z_axis.dx

    @cached_property
    def mesh(self):
        return np.meshgrid(self.x_axis.x, self.z_axis.x, indexing="ij")

    @property
    def coords(self):
        return tuple(self.mesh)

    def kinetic(self, mass, hbar):
        kx = self.x_axis.k[:, None]
        kz = self.z_axis.k[None, :]
        return hbar**2 * (kx**2 + kz**2) / (2.0 * mass)

    def max_kinetic(self, mass, hbar):
        """Per-axis bound: the smaller Nyquist kinetic energy of the two axes."""
        return min(self.x_axis.max_kinetic(mass, hbar), self.z_axis.max_kinetic(mass, hbar))


@dataclass
class WaveField:
    """Complex amplitudes on a grid, normalised as sum |psi|^2 * dV = 1."""

    grid: Grid1D | Grid2D
    psi: np.ndarray

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=np.complex128)
        if self.psi.shape != self.grid.shape:
            raise ContractError(
                f"amplitude shape {self.psi.shape} does not match grid {self.grid.shape}"
            )

    @property
    def density(self):
        return np.abs(self.psi) ** 2

    def copy(self):
        return WaveField(self.grid, self.psi.copy())

    def normalized(self):
        n = norm(self)
        if n == 0:
            raise ContractError("cannot normalise an all-zero field")
        return WaveField(self.grid, self.psi / np.sqrt(n))


def _check_finite(field):
    if not np.all(np.isfinite(field.psi)):
        raise NumericFault("non-finite amplitude in wavefield")


def norm(field):
    """Return sum |psi|^2 times the cell volume."""
    _check_finite(field)
    return float(np.sum(field.density) * field.grid.cell_volume)


def expectation_position(field, axis=0):
    """Mean coordinate along ``axis`` (0 = x, 1 = z) of a normalised field."""
    n = norm(field)
    if abs(n - 1.0) > 1e-6:
        raise ContractError(f"field must be normalised (norm = {n:.9g})")
    coord = field.grid.coords[axis]
    return float(np.sum(coord * field.density) * field.grid.cell_volume)


def overlap(a, b):
    """Inner product <a|b> = sum conj(a) b dV."""
    if a.grid != b.grid:
        raise ContractError("overlap requires fields on the same grid")
    _check_finite(a)
    _check_finite(b)
    return complex(np.vdot(a.psi, b.psi) * a.grid.cell_volume)


def gaussian_packet(grid, center, width, momentum=0.0):
    """Normalised Gaussian with amplitude exp(-(x-x0)^2 / 4 width^2).

    ``width`` is the standard deviation of the density.  On a 2D grid
    ``center``, ``width`` and ``momentum`` may be scalars or (x, z) pairs.
    """
    coords = grid.coords
    center = np.broadcast_to(np.asarray(center, dtype=float), (len(coords),))
    width = np.broadcast_to(np.asarray(width, dtype=float), (len(coords),))
    momentum = np.broadcast_to(np.asarray(momentum, dtype=float), (len(coords),))
    log_amp = np.zeros(grid.shape, dtype=np.complex128)
    for c, x0, s, k0 in zip(coords, center, width, momentum):
        log_amp += -((c - x0) ** 2) / (4.0 * s**2) + 1j * k0 * c
    return WaveField(grid, np.exp(log_amp)).normalized()
