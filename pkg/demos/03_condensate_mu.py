"""Chemical potential of a 2D condensate against atom number, with Thomas-Fermi.

The gpe-mu-curve grid (256 x 256) with five atom numbers instead of 13; about two minutes.

Usage: python demos/03_condensate_mu.py
"""
import math

import numpy as np

from atomguide.constants import CONSTANTS
from atomguide.gpe import GpeParams, log_atom_grid, max_admissible_atoms, mu_curve
from atomguide.grid import Grid1D, Grid2D
from atomguide.potentials import GuideParams, harmonic_frequency
from _plot import save_or_skip

p = GuideParams(CONSTANTS.microkelvin(10.0), 0.0, 30e-6, 30e-6, 0.0, math.radians(10.0))
omega = harmonic_frequency(p.depth_vertical, p.waist_vertical, CONSTANTS.mass)
gp = GpeParams(1.0, 10.0 * omega, p)
axis = Grid1D(-16e-6, 16e-6, 256)
grid = Grid2D(axis, axis)
n_max = max_admissible_atoms(grid, gp)
curve = mu_curve(grid, gp, log_atom_grid(n_max, 5))

hw = CONSTANTS.hbar * omega
print(f"omega = {omega:.1f} rad/s, N_max on this grid = {n_max:.4g}")
print("        N    (mu+U0)/hbar w   TF value")
for n, mu, tf in curve.points:
    print(f"{n:9.4g}   {(mu + p.depth_vertical) / hw:12.4f}   {(tf + p.depth_vertical) / hw:9.4f}")


def build(plt):
    fig, ax = plt.subplots(figsize=(5, 4))
    n = curve.atom_numbers
    ax.loglog(n, (curve.mu_numeric + p.depth_vertical) / hw, "o", label="imaginary time")
    ax.loglog(n, (curve.mu_tf + p.depth_vertical) / hw, "-", label="Thomas-Fermi")
    ax.set_xlabel("N")
    ax.set_ylabel("(mu + U0) / hbar omega")
    ax.legend()
    return fig


save_or_skip(build, "condensate_mu.png")
