"""Geometric corner meshes in 2D and edge-anisotropic hexahedral meshes in 3D.

Run: python demos/graded_meshes.py [output prefix]
"""

import sys

import numpy as np

from cornerreg import aniso_graded_mesh_3d, bundled_geometry, graded_mesh_2d
from cornerreg.mesher import layer_scaling_defect


def main(prefix=None):
    g = bundled_geometry("lshape")
    m = graded_mesh_2d(g, sigma=0.5, layers=5)
    worst = max(layer_scaling_defect(m, c, mu) for c in g.corners for mu in range(1, 5))
    print(f"L-shape: {m.n_cells} triangles, layer scaling defect {worst:.1e}")

    h = aniso_graded_mesh_3d(bundled_geometry("fichera"), sigma=0.5, layers=5)
    L = np.sort(h.levels, axis=1)
    for mu in range(5):
        sel = (L[:, 0] == -1) & (L[:, 1] == mu) & (L[:, 2] == mu)
        print(f"Fichera edge layer {mu}: {sel.sum():4d} cells, aspect {h.aspect[sel].max():.1f}")
    if prefix:
        m.write(prefix + "_lshape.vtk")
        h.write(prefix + "_fichera.vtk")
        print("wrote", prefix + "_lshape.vtk", prefix + "_fichera.vtk")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else None)
