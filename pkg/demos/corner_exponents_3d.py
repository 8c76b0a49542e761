"""Limiting exponents of the cube and Fichera vertices from spherical caps.

Run: python demos/corner_exponents_3d.py
"""

import numpy as np

from cornerreg import bundled_geometry, corner_exponent_pipeline


def main():
    for name in ("cube", "fichera"):
        g = bundled_geometry(name)
        cid = next(c.id for c in g.corners if np.allclose(c.point, 0))
        for kind in ("dirichlet", "neumann"):
            r = corner_exponent_pipeline(g, cid, kind, levels=3)
            levels = [round(lv[-1], 6) for lv in r.eigen.levels]
            print(f"{name:8s} {kind:9s} lambda = {r.value:.6f} +- {r.error:.1e}  (mu per level {levels})")


if __name__ == "__main__":
    main()
