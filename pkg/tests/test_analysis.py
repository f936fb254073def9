import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from atomguide.analysis import (
    CAPTURE_WINDOW_WAISTS,
    assign_batch,
    assign_guides,
    check_geometry,
    deflection_efficiency,
    level_outcomes,
    propagation_grid,
    reduced_scenario,
    run_scenario,
    separation_time,
    splitting_efficiency,
    sweep,
    well_geometry,
)
from atomguide.constants import CONSTANTS
from atomguide.eigen import ThermalEnsemble, fgh_bound_states, refine_onto
from atomguide.errors import ContractError, GeometryError
from atomguide.grid import Grid1D, WaveField, gaussian_packet
from atomguide.potentials import crossing_time, effective_potential, fall_height, oblique_axis_x
from atomguide.propagator import PropagationSpec, propagate
from oracles import CrankNicolson, two_window_assignment

HBAR, MASS = CONSTANTS.hbar, CONSTANTS.mass


@pytest.fixture(scope="module")
def small():
    """Reduced splitter at ratio 1 limited to its six lowest levels."""
    scn = reduced_scenario(depth_ratio=1.0, max_states=6)
    eigen = fgh_bound_states(scn.eigen_grid, scn.guide, max_states=6)
    return scn, eigen


def test_separation_time_geometry():
    scn = reduced_scenario()
    p = scn.guide
    t = separation_time(p)
    assert oblique_axis_x(fall_height(t), p) == pytest.approx(1.5 * (p.waist_vertical + p.waist_oblique),
                                                              rel=1e-12)
    assert t > crossing_time(p.crossing_height)
    with pytest.raises(GeometryError):
        separation_time(p.replace(angle=0.0))


def test_single_minimum_is_a_geometry_error():
    p = reduced_scenario().guide
    with pytest.raises(GeometryError):
        check_geometry(p, crossing_time(p.crossing_height))
    geom = check_geometry(p, separation_time(p))
    assert geom.vertical_minimum < geom.barrier < geom.oblique_minimum


def test_propagation_grid_is_aligned(small):
    scn, eigen = small
    spec = scn.spec()
    g = propagation_grid(eigen.grid, scn.guide, spec, float(eigen.energies[-1]))
    r = eigen.grid.dx / g.dx
    assert abs(r - round(r)) < 1e-9
    j = (eigen.grid.x_min - g.x_min) / g.dx
    assert abs(j - round(j)) < 1e-6
    reach = oblique_axis_x(fall_height(spec.t_final), scn.guide) + 3 * scn.guide.oblique_waist_along_x
    assert g.x_max >= reach + scn.absorber.width


def _assignment_setup():
    p = reduced_scenario(depth_ratio=1.0).guide
    t = separation_time(p)
    g = Grid1D(-80e-6, 176e-6, 4096)
    return p, t, g


@given(st.integers(min_value=0, max_value=2**31))
def test_assignment_matches_loop_oracle(seed):
    p, t, g = _assignment_setup()
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=g.n_points) + 1j * rng.normal(size=g.n_points)
    psi /= math.sqrt(np.sum(np.abs(psi) ** 2) * g.dx)
    geom, pv, po, pl = assign_batch(psi, g, p, t)
    v = effective_potential(g.x, t, p)
    x_axis = oblique_axis_x(fall_height(t), p)
    window = CAPTURE_WINDOW_WAISTS * max(p.waist_vertical, p.waist_oblique)
    barrier, ov, oo = two_window_assignment(g.x, np.abs(psi) ** 2, v, 0.0, x_axis, window)
    assert geom.barrier == barrier
    assert abs(pv[0] - ov) < 1e-10 and abs(po[0] - oo) < 1e-10
    assert abs(pv[0] + po[0] + pl[0] - 1) < 1e-12


@given(st.integers(min_value=0, max_value=2**31), st.floats(min_value=5.0, max_value=25.0))
def test_assignment_mirror_parity(seed, angle_deg):
    p = reduced_scenario(depth_ratio=1.0, angle_deg=angle_deg).guide
    t = separation_time(p)
    g = Grid1D(-256e-6, 256e-6, 4096)
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=g.n_points) + 1j * rng.normal(size=g.n_points)
    psi[0] = 0.0  # the first point has no mirror partner on the grid
    psi /= math.sqrt(np.sum(np.abs(psi) ** 2) * g.dx)
    mirror = (-np.arange(g.n_points)) % g.n_points
    a = assign_guides(WaveField(g, psi), p, t)
    b = assign_guides(WaveField(g, psi[mirror]), p.replace(angle=-p.angle), t)
    assert b.barrier_position == pytest.approx(-a.barrier_position, abs=1e-18)
    assert abs(a.p_oblique - b.p_oblique) <= 1e-12
    assert abs(a.p_vertical - b.p_vertical) <= 1e-12


def test_zero_depth_keeps_geometry():
    p, t, g = _assignment_setup()
    full = well_geometry(g.x, p, t)
    assert well_geometry(g.x, p.replace(depth_oblique=0.0), t) == full
    assert well_geometry(g.x, p.replace(depth_vertical=0.0, depth_oblique=3 * p.depth_vertical),
                         t) == full


def test_zero_oblique_depth_gives_zero_efficiency(small):
    scn, eigen = small
    p = scn.guide.replace(depth_oblique=0.0)
    ens = ThermalEnsemble(1e-6, np.array([0]), np.array([1.0]))
    assert splitting_efficiency(ens, eigen, p, scn.spec()) == 0.0


def test_efficiency_contracts(small):
    scn, eigen = small
    ens = ThermalEnsemble(1e-6, np.array([0]), np.array([1.0]))
    deflector = dataclasses.replace(scn, deflector=True)
    with pytest.raises(ContractError):
        splitting_efficiency(ens, eigen, scn.guide, deflector.spec())
    with pytest.raises(ContractError):
        deflection_efficiency(ens, eigen, scn.guide, scn.spec())
    with pytest.raises(ContractError):
        sweep("ratio", [1.0, 0.5], scn)
    with pytest.raises(ContractError):
        sweep("waist", [1.0], scn)


def test_outcomes_are_probabilities_and_single_member(small, tmp_path):
    scn, eigen = small
    spec = scn.spec()
    out = level_outcomes(eigen, scn.guide, spec, cache_dir=tmp_path)
    total = out["p_vertical"] + out["p_oblique"] + out["p_lost"]
    assert np.all(np.abs(total - 1) < 1e-9)
    for key in ("p_vertical", "p_oblique", "p_lost"):
        assert np.all(out[key] >= -1e-12) and np.all(out[key] <= 1 + 1e-12)
    # a single-member ensemble returns that level's oblique probability
    for nu in (0, 3):
        ens = ThermalEnsemble(1e-6, np.array([nu]), np.array([1.0]))
        eff = splitting_efficiency(ens, eigen, scn.guide, spec, cache_dir=tmp_path)
        assert eff == pytest.approx(out["p_oblique"][nu], abs=1e-14)
    again = level_outcomes(eigen, scn.guide, spec, cache_dir=tmp_path)
    assert again["cache_hit"] and not out["cache_hit"]
    for key in ("p_vertical", "p_oblique", "p_lost"):
        assert np.array_equal(again[key], out[key])


def test_sweep_of_one_equals_single_run(small, tmp_path):
    scn, _ = small
    single = run_scenario(scn).efficiency
    curve = sweep("ratio", [1.0], scn, cache_dir=tmp_path)
    assert curve.missing == []
    assert curve.points[0][0] == 1.0
    assert abs(curve.points[0][1] - single) < 1e-12


def test_failed_points_are_reported_missing(small):
    scn, _ = small
    # at 6 ms the atoms are still above the crossing and a 0.6 degree tilt leaves one well
    base = dataclasses.replace(scn, t_final=6e-3)
    curve = sweep("gamma", [0.01, 0.9], base)
    assert [v for v, _ in curve.missing] == [0.01]
    assert "GeometryError" in curve.missing[0][1]
    assert [v for v, *_ in curve.points] == [0.9]


def test_split_step_agrees_with_crank_nicolson():
    # vertical ground state carried past the crossing point (t = 8 ms); it stays put
    scn = reduced_scenario(depth_ratio=1.0)
    p = scn.guide
    eig = fgh_bound_states(scn.eigen_grid, p, max_states=1)
    dx = scn.eigen_grid.dx / 4
    g = Grid1D(scn.eigen_grid.x_min - 1024 * dx, scn.eigen_grid.x_min + 15360 * dx, 16384)
    start = refine_onto(eig, g)[0]
    dt, t = 0.25e-6, 8e-3
    so = propagate(WaveField(g, start), p, PropagationSpec(dt=dt, t_final=t)).final_field
    cn = CrankNicolson(g.x, dt, MASS, HBAR).run(
        start, lambda x, tt: effective_potential(x, tt, p), t)
    # both schemes carry O(dt^2) phase errors; at this step they agree to 0.3%
    assert abs(np.vdot(cn, so.psi) * g.dx) > 0.99
    a = assign_guides(so, p, t)
    b = assign_guides(WaveField(g, cn), p, t)
    assert abs(a.p_vertical - b.p_vertical) < 1e-6
    assert abs(a.p_oblique - b.p_oblique) < 1e-6


@pytest.mark.slow
def test_later_analysis_time_is_stable(reduced_eigen, tmp_path):
    scn, eigen = reduced_eigen
    t = scn.final_time()
    a = run_scenario(scn, tmp_path, eigen).efficiency
    b = run_scenario(dataclasses.replace(scn, t_final=1.2 * t), tmp_path, eigen).efficiency
    assert abs(a - b) < 0.01
