"""Optional matplotlib output shared by the demos."""
import sys


def save_or_skip(build, path):
    """Call ``build(plt)`` and save to ``path`` if matplotlib is importable."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed; skipping", path, file=sys.stderr)
        return
    fig = build(plt)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    print("wrote", path)
