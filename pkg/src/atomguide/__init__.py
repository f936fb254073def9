"""Quantum dynamics of cold atoms in crossed optical dipole guides.

Split-operator propagation of atoms falling through a vertical guide crossed
by an oblique one, thermal splitting/deflection efficiencies, and a 2D
Gross-Pitaevskii model of a condensate in the same geometry.
"""
__version__ = "0.1.0"

from .constants import CONSTANTS, PhysicalConstants, TransitionParams
from .errors import (
    AtomGuideError,
    ConfigError,
    ContractError,
    ConvergenceError,
    GeometryError,
    NoBoundStatesError,
    NumericFault,
    SetupError,
)
from .grid import Grid1D, Grid2D, WaveField, expectation_position, gaussian_packet, norm, overlap
from .potentials import (
    GuideParams,
    crossing_time,
    depth_from_intensity,
    effective_potential,
    fall_height,
    guide_potential_2d,
    harmonic_frequency,
    harmonic_potential,
    vertical_guide_potential,
)

from .propagator import (
    Absorber,
    PropagationResult,
    PropagationSpec,
    imaginary_time_relax,
    propagate,
    propagate_many,
    relax,
    strang_step,
)
from .eigen import EigenSet, ThermalEnsemble, boltzmann_weights, fgh_bound_states, refine_onto
from .analysis import (
    ASSIGNMENT_RULE,
    EfficiencyCurve,
    GuideAssignment,
    SplitterScenario,
    assign_guides,
    deflection_efficiency,
    run_scenario,
    splitting_efficiency,
    sweep,
)
from .gpe import (
    GpeParams,
    MuCurve,
    g2d_coefficient,
    gpe_fall,
    gpe_ground_state,
    mu_curve,
    tf_chemical_potential,
    tf_density,
)
from .config import RunConfig, parse_config
