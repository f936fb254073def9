"""Bound states of the vertical guide and their thermal populations.

The Hamiltonian -hbar^2/2m d^2/dx^2 - U0 exp(-2x^2/w0^2) is diagonalised on a
periodic grid with the kinetic block built spectrally (Fourier grid
Hamiltonian), which makes the kinetic operator exact on the grid's plane-wave
basis and consistent with the split-operator propagator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .constants import CONSTANTS
from .errors import ContractError, NoBoundStatesError, SetupError
from .grid import Grid1D, WaveField
from .potentials import vertical_guide_potential

MAX_FGH_DIMENSION = 8192


@dataclass
class EigenSet:
    """Bound energies (ascending, J) and unit-normalised states (rows) on ``grid``."""

    energies: np.ndarray
    states: np.ndarray
    grid: Grid1D

    def __len__(self):
        return len(self.energies)

    def field(self, nu):
        return WaveField(self.grid, self.states[nu])


@dataclass
class ThermalEnsemble:
    temperature: float
    levels: np.ndarray
    weights: np.ndarray
    dropped_weight: float = 0.0

    @property
    def members(self):
        return list(zip(self.levels.tolist(), self.weights.tolist()))


def fgh_kinetic_matrix(grid, constants=CONSTANTS):
    """Dense periodic kinetic-energy matrix, T_jl = (1/n) sum_k E(k) e^{ik(x_j - x_l)}."""
    kin = grid.kinetic(constants.mass, constants.hbar)
    column = np.fft.ifft(kin).real
    n = grid.n_points
    index = np.subtract.outer(np.arange(n), np.arange(n)) % n
    return column[index]


def _fix_signs(vectors, rel_tol=1e-6):
    # first component above rel_tol * max, scanning from x_min, made positive
    for row in vectors:
        big = np.flatnonzero(np.abs(row) > rel_tol * np.max(np.abs(row)))
        if big.size and row[big[0]] < 0:
            row *= -1.0
    return vectors


def fgh_bound_states(grid, p, max_states=None, constants=CONSTANTS):
    """Lowest bound eigenpairs of the vertical guide well on ``grid``."""
    w0, u0 = p.waist_vertical, p.depth_vertical
    if u0 <= 0:
        raise NoBoundStatesError("vertical guide has zero depth: no bound states")
    if grid.n_points > MAX_FGH_DIMENSION:
        raise SetupError(f"FGH dimension {grid.n_points} exceeds cap {MAX_FGH_DIMENSION}")
    if grid.x_min > -3 * w0 or grid.x[-1] < 3 * w0:
        raise SetupError("eigen grid must span at least +/- 3 waists of the vertical guide")
    if grid.max_kinetic(constants.mass, constants.hbar) < 2.0 * u0:
        needed = math.sqrt(2.0 * u0 / grid.max_kinetic(constants.mass, constants.hbar))
        raise SetupError("eigen grid too coarse for the well depth",
                         required_points=1 << (math.ceil(grid.n_points * needed) - 1).bit_length())
    if max_states is not None and max_states < 1:
        raise ContractError("max_states must be >= 1")

    h = fgh_kinetic_matrix(grid, constants)
    h[np.diag_indices_from(h)] += vertical_guide_potential(grid.x, p)
    if max_states is None:
        energies, vectors = scipy.linalg.eigh(h, subset_by_value=(-np.inf, 0.0), driver="evr")
    else:
        top = min(max_states, grid.n_points) - 1
        energies, vectors = scipy.linalg.eigh(h, subset_by_index=(0, top), driver="evr")
        keep = energies < 0
        energies, vectors = energies[keep], vectors[:, keep]
    if energies.size == 0:
        raise NoBoundStatesError("no bound states found on this grid")
    states = _fix_signs(np.ascontiguousarray(vectors.T)) / math.sqrt(grid.dx)
    return EigenSet(energies, states, grid)


def semiclassical_level_count(p, constants=CONSTANTS):
    """WKB estimate of the number of bound levels of the vertical guide."""
    return (math.sqrt(2 * constants.mass * p.depth_vertical) * p.waist_vertical
            * math.sqrt(math.pi) / (math.pi * constants.hbar) + 0.5)


def boltzmann_weights(eigen, temperature, constants=CONSTANTS, cutoff=1e-6):
    """Maxwell-Boltzmann populations of the bound levels at ``temperature``.

    Levels whose normalised weight falls below ``cutoff`` are dropped and the
    rest renormalised; the dropped mass is recorded.
    """
    if not temperature > 0:
        raise ContractError("temperature must be > 0")
    if len(eigen) == 0:
        raise ContractError("empty eigen set")
    e = np.asarray(eigen.energies)
    w = np.exp(-(e - e[0]) / (constants.kB * temperature))
    w /= w.sum()
    keep = w >= cutoff
    dropped = float(w[~keep].sum())
    levels = np.flatnonzero(keep)
    kept = w[keep] / w[keep].sum()
    return ThermalEnsemble(temperature, levels, kept, dropped)


def refine_onto(eigen, target, levels=None):
    """Spectrally interpolate eigenstates onto a finer, aligned propagation grid.

    ``target.dx`` must divide ``eigen.grid.dx`` and the eigen grid points must
    coincide with target grid points.  Zero padding in k space reproduces the
    band-limited interpolant exactly; outside the eigen window the states are
    set to zero (they are negligible there by construction).
    """
    src = eigen.grid
    ratio = src.dx / target.dx
    r = int(round(ratio))
    if r < 1 or abs(ratio - r) > 1e-9 * r:
        raise ContractError("target spacing must divide the eigen grid spacing")
    shift = (src.x_min - target.x_min) / target.dx
    j = int(round(shift))
    if abs(shift - j) > 1e-6 or j < 0 or j + src.n_points * r > target.n_points:
        raise ContractError("eigen grid is not aligned inside the target grid")
    states = eigen.states if levels is None else eigen.states[np.asarray(levels)]
    n = src.n_points
    out = np.zeros(states.shape[:-1] + (target.n_points,), dtype=np.complex128)
    if r == 1:
        out[..., j:j + n] = states
        return out
    half = n // 2
    spec = np.fft.fft(states, axis=-1)
    padded = np.zeros(states.shape[:-1] + (n * r,), dtype=np.complex128)
    padded[..., :half] = spec[..., :half]
    padded[..., -half + 1:] = spec[..., half + 1:]
    padded[..., half] = 0.5 * spec[..., half]
    padded[..., -half] = 0.5 * spec[..., half]
    out[..., j:j + n * r] = np.fft.ifft(padded, axis=-1) * r
    return out
