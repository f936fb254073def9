"""Bound levels of a Gaussian guide and how they depart from the harmonic ladder.

Usage: python demos/01_bound_states.py
"""
import numpy as np

from atomguide.constants import CONSTANTS
from atomguide.eigen import boltzmann_weights, fgh_bound_states
from atomguide.potentials import harmonic_frequency
from atomguide.analysis import reduced_scenario
from _plot import save_or_skip

scn = reduced_scenario()
p = scn.guide
eig = fgh_bound_states(scn.eigen_grid, p)
hw = CONSTANTS.hbar * harmonic_frequency(p.depth_vertical, p.waist_vertical, CONSTANTS.mass)
ens = boltzmann_weights(eig, scn.temperature)

print(f"U0 = {CONSTANTS.to_microkelvin(p.depth_vertical):.3f} uK, w0 = {p.waist_vertical * 1e6:.1f} um")
print(f"{len(eig)} bound levels, hbar omega = {CONSTANTS.to_microkelvin(hw) * 1e3:.3f} nK")
print(f"ensemble at T = {scn.temperature * 1e6:.3f} uK keeps {len(ens.levels)} levels")
spacing = np.diff(eig.energies) / hw
for nu in (0, 10, 50, 100, len(eig) - 2):
    print(f"  nu = {nu:4d}: spacing / hbar omega = {spacing[nu]:.4f}")


def build(plt):
    fig, (a, b) = plt.subplots(1, 2, figsize=(10, 4))
    a.plot(spacing, ".")
    a.set_xlabel("level nu")
    a.set_ylabel("(E[nu+1] - E[nu]) / hbar omega")
    b.semilogy(ens.levels, ens.weights, ".")
    b.set_xlabel("level nu")
    b.set_ylabel("Boltzmann weight")
    return fig


save_or_skip(build, "bound_states.png")
