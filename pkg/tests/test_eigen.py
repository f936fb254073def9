import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from atomguide.constants import CONSTANTS
from atomguide.eigen import (
    MAX_FGH_DIMENSION,
    EigenSet,
    boltzmann_weights,
    fgh_bound_states,
    refine_onto,
    semiclassical_level_count,
)
from atomguide.errors import ContractError, NoBoundStatesError, SetupError
from atomguide.grid import Grid1D, gaussian_packet
from atomguide.potentials import harmonic_frequency
from conftest import well_with_ratio
from oracles import shooting_levels

HBAR, MASS, KB = CONSTANTS.hbar, CONSTANTS.mass, CONSTANTS.kB


@pytest.fixture(scope="module")
def deep(test_well):
    p, g = test_well
    return p, g, fgh_bound_states(g, p)


def test_harmonic_limit(deep):
    p, g, eig = deep
    hw = HBAR * harmonic_frequency(p.depth_vertical, p.waist_vertical, MASS)
    # deep well: the lowest levels sit at -U0 + hbar omega (nu + 1/2) up to small anharmonic shifts
    assert eig.energies[0] == pytest.approx(-p.depth_vertical + 0.5 * hw, abs=0.01 * hw)
    gaps = np.diff(eig.energies[:4]) / hw
    assert np.all(np.abs(gaps - 1) < 0.02)
    # the quartic term of the Gaussian is negative, so levels fall below the oscillator ladder
    assert np.all(gaps < 1)


def test_levels_match_shooting():
    p = well_with_ratio(10.0, waist=15e-6)
    g = Grid1D(-5 * p.waist_vertical, 5 * p.waist_vertical, 512)
    eig = fgh_bound_states(g, p)
    ref = shooting_levels(p.depth_vertical, p.waist_vertical, MASS, HBAR, 5)
    assert np.allclose(eig.energies[:5], ref, rtol=1e-7, atol=0)


def test_level_count_and_ordering(deep):
    p, g, eig = deep
    assert np.all(np.diff(eig.energies) > 0)
    assert np.all(eig.energies < 0) and eig.energies[0] > -p.depth_vertical
    assert abs(len(eig) - semiclassical_level_count(p)) <= 2


def test_orthonormality(deep):
    _, g, eig = deep
    gram = eig.states @ eig.states.T * g.dx
    assert np.max(np.abs(gram - np.eye(len(eig)))) < 1e-8


def test_parity_and_sign_convention(deep):
    _, g, eig = deep
    mirror = (-np.arange(g.n_points)) % g.n_points
    for nu in range(0, len(eig), 7):
        s = eig.states[nu]
        assert np.max(np.abs(s[mirror] - (-1) ** nu * s)) < 1e-6 * np.max(np.abs(s))
    # ground state is positive everywhere it is appreciable
    s0 = eig.states[0]
    assert np.all(s0[np.abs(s0) > 1e-8 * s0.max()] > 0)


def test_grid_doubling_invariance(test_well):
    p, g = test_well
    coarse = fgh_bound_states(g, p, max_states=20).energies
    fine = fgh_bound_states(Grid1D(g.x_min, g.x_max, 2 * g.n_points), p, max_states=20).energies
    assert np.allclose(coarse, fine, rtol=1e-8, atol=0)


def test_max_states_subset(deep):
    p, g, eig = deep
    few = fgh_bound_states(g, p, max_states=6)
    assert np.allclose(few.energies, eig.energies[:6], rtol=1e-12)
    assert np.allclose(few.states, eig.states[:6], atol=1e-9)


def test_completeness_for_localized_packet(deep):
    p, g, eig = deep
    ell = math.sqrt(HBAR / (MASS * harmonic_frequency(p.depth_vertical, p.waist_vertical, MASS)))
    packet = gaussian_packet(g, 0.4 * p.waist_vertical, ell / math.sqrt(2))
    amplitudes = eig.states @ packet.psi * g.dx
    assert np.sum(np.abs(amplitudes) ** 2) >= 0.999


def ladder(spacing_J, n):
    g = Grid1D(0.0, 1.0, 16)
    return EigenSet(np.arange(n) * spacing_J, np.zeros((n, 16)), g)


@given(st.floats(min_value=0.05, max_value=5.0))
def test_boltzmann_geometric_series(ratio):
    # equally spaced levels: weights are (1 - q) q^nu with q = exp(-eps / kT), truncated
    n, eps, T = 40, KB * 1e-6, 1e-6 / ratio
    q = math.exp(-eps / (KB * T))
    ens = boltzmann_weights(ladder(eps, n), T, cutoff=0.0)
    expected = (1 - q) * q ** np.arange(n) / (1 - q**n)
    assert np.allclose(ens.weights, expected, rtol=1e-12, atol=1e-300)
    assert abs(ens.weights.sum() - 1) < 1e-12
    assert ens.dropped_weight == 0.0


def test_boltzmann_cutoff_and_renormalisation():
    eps = KB * 1e-6
    ens = boltzmann_weights(ladder(eps, 40), 1e-6, cutoff=1e-6)
    q = math.exp(-1.0)
    kept = [nu for nu in range(40) if (1 - q) * q**nu / (1 - q**40) >= 1e-6]
    assert ens.levels.tolist() == kept
    assert abs(ens.weights.sum() - 1) < 1e-14
    assert ens.dropped_weight == pytest.approx(q ** len(kept) * (1 - q ** (40 - len(kept))) / (1 - q**40),
                                               rel=1e-10)
    # a very cold ensemble is the ground state alone
    cold = boltzmann_weights(ladder(eps, 40), 1e-9)
    assert cold.members == [(0, 1.0)]


def test_boltzmann_contracts():
    with pytest.raises(ContractError):
        boltzmann_weights(ladder(1e-30, 3), 0.0)
    with pytest.raises(ContractError):
        boltzmann_weights(ladder(1e-30, 0), 1e-6)


def test_refine_is_exact_for_band_limited_states():
    src = Grid1D(-1.0, 1.0, 64)
    target = Grid1D(-2.0, 2.0, 512)  # spacing ratio 4, src window starts at index 128
    kx = np.pi * np.arange(1, 6)

    def f(x):
        return np.cos(kx[:, None] * (x + 1.0)).sum(axis=0) + 0.3 * np.sin(3 * np.pi * (x + 1.0))

    eig = EigenSet(np.array([-1.0]), f(src.x)[None, :], src)
    out = refine_onto(eig, target)[0]
    inside = (target.x >= src.x_min) & (target.x < src.x_max)
    assert np.max(np.abs(out[inside] - f(target.x[inside]))) < 1e-12
    assert np.all(out[~inside] == 0)
    same = refine_onto(eig, Grid1D(-2.0, 2.0, 128))[0]
    assert np.array_equal(same[32:96], eig.states[0].astype(complex))


def test_refine_contracts():
    src = Grid1D(-1.0, 1.0, 64)
    eig = EigenSet(np.array([-1.0]), np.ones((1, 64)), src)
    with pytest.raises(ContractError):
        refine_onto(eig, Grid1D(-1.5, 1.5, 256))  # non-integer spacing ratio
    with pytest.raises(ContractError):
        refine_onto(eig, Grid1D(-2.0 + 1 / 256, 2.0 + 1 / 256, 512))  # points not aligned
    with pytest.raises(ContractError):
        refine_onto(eig, Grid1D(-0.5, 0.5, 256))


def test_errors(test_well):
    p, g = test_well
    with pytest.raises(NoBoundStatesError):
        fgh_bound_states(g, p.replace(depth_vertical=0.0))
    with pytest.raises(SetupError):
        fgh_bound_states(Grid1D(g.x_min, g.x_max, 2 * MAX_FGH_DIMENSION), p)
    with pytest.raises(SetupError):
        fgh_bound_states(Grid1D(-2 * p.waist_vertical, 2 * p.waist_vertical, 1024), p)
    with pytest.raises(SetupError) as info:
        fgh_bound_states(Grid1D(g.x_min, g.x_max, 128), p)
    assert info.value.required_points > 128
    with pytest.raises(ContractError):
        fgh_bound_states(g, p, max_states=0)
