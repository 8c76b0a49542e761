import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cornerreg.geometry import GeometryError, PolytopeGeometry, bundled_geometry
from cornerreg.mesher import (
    BULK,
    MeshAuditError,
    aniso_graded_mesh_3d,
    graded_mesh_2d,
    layer_scaling_defect,
)


def _polygon_area(g):
    total = 0.0
    for loop in g.loops:
        p = g.vertices[list(loop)]
        x, y = p[:, 0], p[:, 1]
        total += 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    return abs(total)


@pytest.mark.parametrize("name", ["square", "lshape", "slit_square"])
def test_2d_mesh_covers_domain(name):
    g = bundled_geometry(name)
    m = graded_mesh_2d(g, layers=4)
    m.audit()
    assert m.volumes().sum() == pytest.approx(_polygon_area(g), rel=1e-12)
    assert np.all(g.contains(m.vertices[m.cells].mean(axis=1)))


@pytest.mark.parametrize("name", ["square", "lshape"])
def test_2d_layers_scale(name):
    g = bundled_geometry(name)
    m = graded_mesh_2d(g, layers=5)
    for c in g.corners:
        for mu in range(1, 5):
            assert layer_scaling_defect(m, c, mu) < 1e-12
    with pytest.raises(ValueError):
        layer_scaling_defect(m, g.corners[0], 5)


@settings(max_examples=8, deadline=None)
@given(st.sampled_from([0.3, 0.5, 0.7]), st.integers(2, 6))
def test_2d_sigma_scaling(sigma, layers):
    g = bundled_geometry("lshape")
    m = graded_mesh_2d(g, sigma=sigma, layers=layers)
    c = g.corners[0]
    for mu in range(1, layers):
        assert layer_scaling_defect(m, c, mu) < 1e-12


def test_2d_cell_count_linear_in_layers():
    g = bundled_geometry("lshape")
    n = [graded_mesh_2d(g, layers=L).n_cells for L in (3, 4, 5, 6)]
    d = np.diff(n)
    assert np.all(d == d[0])


def test_2d_boundary_tags():
    g = bundled_geometry("lshape")
    m = graded_mesh_2d(g, layers=3)
    sides = {e for _, e, _ in m.boundary}
    assert sides == set(range(6))


def test_exports(tmp_path):
    g = bundled_geometry("square")
    m = graded_mesh_2d(g, layers=2)
    doc = json.loads(m.to_json())
    assert doc["cell_type"] == "triangle" and len(doc["cells"]) == m.n_cells
    vtk = m.to_vtk()
    assert vtk.startswith("# vtk DataFile") and f"CELL_TYPES {m.n_cells}" in vtk
    m.write(str(tmp_path / "m.vtk"))
    assert (tmp_path / "m.vtk").read_text() == vtk


def test_audit_detects_flipped_cell():
    m = graded_mesh_2d(bundled_geometry("square"), layers=2)
    m.cells[0] = m.cells[0][::-1]
    with pytest.raises(MeshAuditError):
        m.audit()


def test_bad_arguments():
    g = bundled_geometry("square")
    with pytest.raises(ValueError):
        graded_mesh_2d(g, sigma=1.2)
    with pytest.raises(GeometryError):
        graded_mesh_2d(bundled_geometry("cube"))


@pytest.mark.parametrize("name, fraction", [("cube", 1.0), ("fichera", 7 / 8)])
def test_3d_mesh_volume(name, fraction):
    g = bundled_geometry(name)
    m = aniso_graded_mesh_3d(g, layers=3)
    m.audit()
    lo, hi = g.bounding_box()
    assert m.volumes().sum() == pytest.approx(fraction * float(np.prod(hi - lo)), rel=1e-12)


def test_3d_thick_l_audits():
    m = aniso_graded_mesh_3d(bundled_geometry("thick_l"), layers=3)
    m.audit()
    assert np.all(m.volumes() > 0)


def test_3d_edge_aspect_doubles():
    m = aniso_graded_mesh_3d(bundled_geometry("cube"), layers=5)
    L = np.sort(m.levels, axis=1)
    base = None
    for mu in range(5):
        sel = (L[:, 0] == -1) & (L[:, 1] == mu) & (L[:, 2] == mu)
        a = m.aspect[sel]
        assert a.size > 0
        base = a.max() if base is None else base
        assert np.allclose(a, base * 2**mu)
    corner = (L[:, 0] >= 0)
    assert np.all(m.aspect[corner & (L[:, 0] == L[:, 2])] == pytest.approx(1.0))
    assert np.all(m.layer[(m.levels < 0).all(axis=1)] == BULK)


def test_3d_rejects_oblique_edges():
    g = PolytopeGeometry(3, [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]],
                         faces=[[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    with pytest.raises(NotImplementedError):
        aniso_graded_mesh_3d(g)
