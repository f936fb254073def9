"""Where individual levels of the vertical guide end up in a reduced-scale splitter.

Propagates a handful of levels through the crossing at U1/U0 = 1 and prints
the vertical, oblique and lost populations in a few seconds.

Usage: python demos/02_splitter_levels.py [ratio]
"""
import sys

import numpy as np

from atomguide.analysis import level_outcomes, reduced_scenario
from atomguide.eigen import fgh_bound_states
from _plot import save_or_skip

ratio = float(sys.argv[1]) if len(sys.argv) > 1 else 1.0
scn = reduced_scenario(depth_ratio=ratio)
levels = [0, 20, 40, 60, 80, 100, 120, 140, 160]
eig = fgh_bound_states(scn.eigen_grid, scn.guide, max_states=max(levels) + 1)
spec = scn.spec()
out = level_outcomes(eig, scn.guide, spec, levels)

print(f"U1/U0 = {ratio}, t_final = {spec.t_final * 1e3:.2f} ms, "
      f"propagation grid {out['grid'].n_points} points")
print(" nu   vertical  oblique   lost")
lost = np.clip(out["p_lost"], 0.0, None)  # 1 - p_v - p_o can round to -1e-16
for row in zip(out["levels"], out["p_vertical"], out["p_oblique"], lost):
    print("{:4d}   {:.4f}    {:.4f}   {:.4f}".format(*row))


def build(plt):
    fig, ax = plt.subplots(figsize=(6, 4))
    for key in ("p_vertical", "p_oblique", "p_lost"):
        ax.plot(out["levels"], out[key], "o-", label=key[2:])
    ax.set_xlabel("level nu")
    ax.set_ylabel("probability")
    ax.legend()
    return fig


save_or_skip(build, "splitter_levels.png")
