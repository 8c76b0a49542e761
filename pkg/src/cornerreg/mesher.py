"""Geometrically graded meshes realizing dyadic corner and edge layers.

In 2D every corner gets a patch of rays at most pi/4 apart cut by the radii
``eps * sigma^mu``; layer ``mu`` is, vertex for vertex, the ``sigma``-scaling
of layer ``mu - 1`` about the corner.  The rest of the polygon is meshed
quasi-uniformly by a constrained Delaunay triangulation that keeps the patch
rings unsplit, so the two parts conform.

In 3D, axis-aligned polyhedra get a tensor-product hexahedral mesh graded
geometrically toward every vertex coordinate along each axis.  Cells next to
an edge are then thin across the edge and long along it, and cells next to a
corner are graded in all three directions.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import triangle as tr

from .geometry import GeometryError, PolytopeGeometry, segment_distance

__all__ = [
    "GradedMesh",
    "MeshAuditError",
    "graded_mesh_2d",
    "aniso_graded_mesh_3d",
    "layer_scaling_defect",
]

#: layer index of cells outside every graded patch
BULK = -1

_VTK_TYPES = {"triangle": 5, "hexahedron": 12}


class MeshAuditError(ValueError):
    """A conformity or orientation audit failed."""


@dataclass
class GradedMesh:
    """Cells of one type with per-cell layer, owner and anisotropy data.

    ``layer`` is the dyadic index (``BULK`` outside the graded zones),
    ``owner`` the corner id of 2D patch cells (-1 elsewhere) and ``aspect``
    the ratio of the largest to the smallest cell extent.  ``boundary`` lists
    boundary facets as ``(vertex ids, side or face id, condition)``.
    """

    vertices: np.ndarray
    cells: np.ndarray
    cell_type: str
    layer: np.ndarray
    owner: np.ndarray
    aspect: np.ndarray
    boundary: list = field(default_factory=list)
    levels: np.ndarray | None = None  # 3D: per-axis grading level, -1 if uniform
    params: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def cells_in_layer(self, mu: int, owner: int | None = None) -> np.ndarray:
        mask = self.layer == mu
        if owner is not None:
            mask &= self.owner == owner
        return np.flatnonzero(mask)

    def volumes(self) -> np.ndarray:
        V, C = self.vertices, self.cells
        if self.cell_type == "triangle":
            a, b, c = V[C[:, 0]], V[C[:, 1]], V[C[:, 2]]
            return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
        o = V[C[:, 0]]
        e1, e2, e3 = V[C[:, 1]] - o, V[C[:, 3]] - o, V[C[:, 4]] - o
        return np.einsum("ij,ij->i", e1, np.cross(e2, e3))

    def _facets(self):
        C = self.cells
        if self.cell_type == "triangle":
            return [tuple(sorted((int(c[i]), int(c[(i + 1) % 3])))) for c in C for i in range(3)]
        quads = ((0, 1, 2, 3), (4, 5, 6, 7), (0, 1, 5, 4), (1, 2, 6, 5), (2, 3, 7, 6), (3, 0, 4, 7))
        return [tuple(sorted(int(c[i]) for i in q)) for c in C for q in quads]

    def audit(self) -> None:
        """Positive cell measures, every facet shared by at most two cells, free facets on the boundary."""
        vol = self.volumes()
        if np.any(vol <= 0):
            raise MeshAuditError(f"{int(np.sum(vol <= 0))} cells with non-positive Jacobian")
        counts = Counter(self._facets())
        if max(counts.values()) > 2:
            raise MeshAuditError("a facet is shared by more than two cells")
        tagged = {tuple(sorted(f)) for f, _, _ in self.boundary}
        free = [f for f, k in counts.items() if k == 1]
        missing = [f for f in free if f not in tagged]
        if missing:
            raise MeshAuditError(f"{len(missing)} free facets do not lie on the domain boundary")

    # -- export ---------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "dimension": self.dim,
            "cell_type": self.cell_type,
            "vertices": self.vertices.tolist(),
            "cells": self.cells.tolist(),
            "layer": self.layer.tolist(),
            "owner": self.owner.tolist(),
            "aspect": self.aspect.tolist(),
            "boundary": [{"facet": list(map(int, f)), "entity": int(e), "bc": b} for f, e, b in self.boundary],
            "params": self.params,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_vtk(self, title: str = "graded mesh") -> str:
        """Legacy ASCII unstructured grid with the layer index as cell data."""
        V = self.vertices
        if V.shape[1] == 2:
            V = np.hstack([V, np.zeros((len(V), 1))])
        npc = self.cells.shape[1]
        lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
                 f"POINTS {len(V)} double"]
        lines += [f"{x!r} {y!r} {z!r}" for x, y, z in V.tolist()]
        lines.append(f"CELLS {self.n_cells} {self.n_cells * (npc + 1)}")
        lines += [" ".join([str(npc)] + [str(int(i)) for i in c]) for c in self.cells]
        lines.append(f"CELL_TYPES {self.n_cells}")
        lines += [str(_VTK_TYPES[self.cell_type])] * self.n_cells
        lines += [f"CELL_DATA {self.n_cells}", "SCALARS layer int 1", "LOOKUP_TABLE default"]
        lines += [str(int(v)) for v in self.layer]
        lines += ["SCALARS aspect double 1", "LOOKUP_TABLE default"]
        lines += [repr(float(v)) for v in self.aspect]
        return "\n".join(lines) + "\n"

    def write(self, path: str, fmt: str | None = None) -> None:
        fmt = fmt or ("vtk" if str(path).endswith(".vtk") else "json")
        text = self.to_vtk() if fmt == "vtk" else self.to_json()
        with open(path, "w") as fh:
            fh.write(text)


# ----------------------------------------------------------------------------
# 2D
# ----------------------------------------------------------------------------

class _Pool:
    """Vertex list that merges coordinates equal up to a small tolerance."""

    def __init__(self, tol: float):
        self.tol = tol
        self.pts: list = []
        self.index: dict = {}

    def add(self, p) -> int:
        key = tuple(np.round(np.asarray(p) / self.tol).astype(np.int64))
        hit = self.index.get(key)
        if hit is not None:
            return hit
        # neighbouring buckets catch points straddling a rounding boundary
        for dk in np.ndindex(*(3,) * len(key)):
            k2 = tuple(k + d - 1 for k, d in zip(key, dk))
            if k2 in self.index and np.linalg.norm(self.pts[self.index[k2]] - p) <= self.tol:
                self.index[key] = self.index[k2]
                return self.index[k2]
        self.pts.append(np.asarray(p, float))
        self.index[key] = len(self.pts) - 1
        return len(self.pts) - 1


def _thinness(geom: PolytopeGeometry) -> float:
    """Smallest side length or distance from a vertex to a side not through it."""
    V = geom.vertices
    best = math.inf
    for a, b in geom.sides:
        best = min(best, float(np.linalg.norm(V[b] - V[a])))
    for v in set(x for s in geom.sides for x in s):
        for a, b in geom.sides:
            if v in (a, b):
                continue
            best = min(best, float(segment_distance(V[v][None, :], V[a], V[b])[0]))
    return best


def _side_of(geom: PolytopeGeometry, p, q, tol):
    """Side containing the segment ``pq``, or ``None``."""
    V = geom.vertices
    for k, (a, b) in enumerate(geom.sides):
        d = segment_distance(np.array([p, q, 0.5 * (p + q)]), V[a], V[b])
        if d.max() <= tol:
            return k
    return None


def graded_mesh_2d(geom: PolytopeGeometry, sigma: float = 0.5, layers: int = 4, eps: float | None = None,
                   h: float | None = None, max_ray_angle: float = math.pi / 4) -> GradedMesh:
    """Triangle mesh with ``layers`` geometric layers toward every corner.

    Parameters
    ----------
    geom : PolytopeGeometry
        A 2D geometry.
    sigma : float
        Layer ratio in ``(0, 1)``; layer ``mu`` spans radii ``eps*sigma^(mu+1)``
        to ``eps*sigma^mu`` and the innermost fan (layer ``layers``) the disk
        of radius ``eps*sigma^layers``.
    eps : float, optional
        Patch radius; defaults to 0.4 times the smallest side length or
        vertex-to-side distance.
    h : float, optional
        Target size of the quasi-uniform part; defaults to the patch ring
        spacing.
    """
    if geom.dimension != 2:
        raise GeometryError("graded_mesh_2d needs a 2D geometry")
    if layers < 1:
        raise ValueError("layers must be >= 1")
    if not 0 < sigma < 1:
        raise ValueError("sigma must lie in (0, 1)")
    thin = _thinness(geom)
    if eps is None:
        eps = 0.4 * thin
    if not 0 < eps < 0.5 * thin:
        raise GeometryError(
            f"geometry too thin for eps={eps:.4g}: patches need eps < {0.5 * thin:.4g}"
        )
    V = geom.vertices
    scale = float(np.ptp(V, axis=0).max())
    pool = _Pool(1e-12 * scale)
    cells, layer, owner = [], [], []
    rings = {}
    holes = []
    ray_step = {}
    for c in geom.corners:
        n = max(2, math.ceil(c.opening / max_ray_angle - 1e-12))
        th = c.theta0 + c.opening * np.arange(n + 1) / n
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
        ray_step[c.id] = c.opening / n
        P = c.point
        # radii eps*sigma^k, k = 0..layers
        ids = [[pool.add(P + eps * sigma**k * d) for d in dirs] for k in range(layers + 1)]
        ctr = pool.add(P)
        for mu in range(layers):
            out, inn = ids[mu], ids[mu + 1]
            for j in range(n):
                cells.append((inn[j], out[j], out[j + 1]))
                cells.append((inn[j], out[j + 1], inn[j + 1]))
                layer += [mu, mu]
                owner += [c.id, c.id]
        inn = ids[layers]
        for j in range(n):
            cells.append((ctr, inn[j], inn[j + 1]))
            layer.append(layers)
            owner.append(c.id)
        rings[c.id] = ids[0]
        mid = c.theta0 + 0.5 * c.opening
        holes.append(P + 0.5 * eps * np.array([math.cos(mid), math.sin(mid)]))
    n_patch = len(pool.pts)
    if h is None:
        h = 2 * eps * math.sin(0.5 * max(ray_step.values()))
    # remainder boundary: shortened sides plus the patch rings
    segs = set()
    by_vertex_side = {}
    for c in geom.corners:
        s_out, s_in = c.sides
        by_vertex_side[(s_out, "start")] = rings[c.id][0]
        by_vertex_side[(s_in, "end")] = rings[c.id][-1]
        ring = rings[c.id]
        for a, b in zip(ring[:-1], ring[1:]):
            segs.add((min(a, b), max(a, b)))
    for k, (a, b) in enumerate(geom.sides):
        p0 = pool.pts[by_vertex_side[(k, "start")]]
        p1 = pool.pts[by_vertex_side[(k, "end")]]
        m = max(1, math.ceil(np.linalg.norm(p1 - p0) / h - 1e-9))
        chain = [pool.add(p0 + (p1 - p0) * t) for t in np.linspace(0, 1, m + 1)]
        for x, y in zip(chain[:-1], chain[1:]):
            segs.add((min(x, y), max(x, y)))
    used = sorted({i for s in segs for i in s})
    local = {g: i for i, g in enumerate(used)}
    pslg = {
        "vertices": np.array([pool.pts[i] for i in used]),
        "segments": np.array([(local[a], local[b]) for a, b in sorted(segs)]),
        "holes": np.array(holes),
    }
    area = math.sqrt(3) / 4 * h * h
    out = tr.triangulate(pslg, f"pq28YYa{area:.17g}")
    tv = out["vertices"]
    if len(tv) < len(used) or np.abs(tv[: len(used)] - pslg["vertices"]).max() > 1e-12 * scale:
        raise MeshAuditError("constrained triangulation moved input vertices")
    gid = list(used)
    for p in tv[len(used):]:
        gid.append(pool.add(p))
    for t in out["triangles"]:
        a, b, c_ = (gid[int(i)] for i in t)
        cells.append((a, b, c_))
        layer.append(BULK)
        owner.append(-1)
    verts = np.array(pool.pts)
    C = np.array(cells, dtype=int)
    # orient counter-clockwise
    a, b, c_ = verts[C[:, 0]], verts[C[:, 1]], verts[C[:, 2]]
    neg = (b[:, 0] - a[:, 0]) * (c_[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c_[:, 0] - a[:, 0]) < 0
    C[neg] = C[neg][:, [0, 2, 1]]
    aspect = _tri_aspect(verts, C)
    mesh = GradedMesh(verts, C, "triangle", np.array(layer), np.array(owner), aspect,
                      params={"sigma": sigma, "layers": layers, "eps": eps, "h": h, "n_patch_vertices": n_patch})
    mesh.boundary = _tag_boundary_2d(geom, mesh, 1e-9 * scale)
    mesh.audit()
    return mesh


def _tri_aspect(V, C) -> np.ndarray:
    e = [np.linalg.norm(V[C[:, (i + 1) % 3]] - V[C[:, i]], axis=1) for i in range(3)]
    longest = np.max(e, axis=0)
    a, b, c = V[C[:, 0]], V[C[:, 1]], V[C[:, 2]]
    area = 0.5 * np.abs((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
    # longest edge over the height onto it
    return longest**2 / (2 * area)


def _tag_boundary_2d(geom, mesh, tol):
    V = mesh.vertices
    seen = set()
    out = []
    for c in mesh.cells:
        for i in range(3):
            e = tuple(sorted((int(c[i]), int(c[(i + 1) % 3]))))
            if e in seen:
                continue
            seen.add(e)
            k = _side_of(geom, V[e[0]], V[e[1]], tol)
            if k is not None:
                out.append((e, k, geom.side_bc[k]))
    return out


def layer_scaling_defect(mesh: GradedMesh, corner, mu: int) -> float:
    """Max vertex distance between layer ``mu`` and the sigma-scaled layer ``mu - 1`` of a corner.

    ``corner`` is a :class:`~cornerreg.geometry.Corner` (its id selects the
    patch and its point is the scaling center).
    """
    if not 1 <= mu < mesh.params["layers"]:
        raise ValueError("mu must index an annulus, 1 <= mu < layers (the innermost layer is a fan)")
    sigma = mesh.params["sigma"]
    a = mesh.cells[mesh.cells_in_layer(mu, corner.id)]
    b = mesh.cells[mesh.cells_in_layer(mu - 1, corner.id)]
    P = np.asarray(corner.point)
    pa = mesh.vertices[a]
    pb = P + sigma * (mesh.vertices[b] - P)
    return float(np.abs(pa - pb).max())


# ----------------------------------------------------------------------------
# 3D
# ----------------------------------------------------------------------------

def _axis_nodes(breaks, eps, sigma, layers, h):
    """Nodes along one axis with geometric clustering at every break point.

    Returns node coordinates and, per interval, the grading level (-1 in the
    uniform middle).
    """
    nodes, level = [breaks[0]], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        L = b - a
        e = min(eps, 0.25 * L)
        left = [a + e * sigma**k for k in range(layers, -1, -1)]
        right = [b - e * sigma**k for k in range(layers + 1)]
        m = max(1, math.ceil((L - 2 * e) / h - 1e-9))
        mid = list(np.linspace(a + e, b - e, m + 1))
        seg = left + mid[1:-1] + right
        lev = [layers] + list(range(layers - 1, -1, -1)) + [-1] * m + list(range(layers)) + [layers]
        nodes += seg + [b]
        level += lev
    return np.array(nodes), np.array(level)


def aniso_graded_mesh_3d(geom: PolytopeGeometry, sigma: float = 0.5, layers: int = 4, eps: float | None = None,
                         h: float | None = None) -> GradedMesh:
    """Hexahedral tensor mesh of an axis-aligned polyhedron, graded toward edges and corners.

    Along each axis the nodes cluster geometrically (ratio ``sigma``,
    ``layers`` layers within ``eps``) at every vertex coordinate.  A cell at
    transverse level ``mu`` next to an edge has cross-section ``~ sigma^mu``
    and axial length ``~ h``; near a corner it is graded in all directions.
    """
    if geom.dimension != 3:
        raise GeometryError("aniso_graded_mesh_3d needs a 3D geometry")
    if layers < 1:
        raise ValueError("layers must be >= 1")
    if not 0 < sigma < 1:
        raise ValueError("sigma must lie in (0, 1)")
    for e in geom.edges:
        if e.axis is None:
            raise NotImplementedError("anisotropic meshing supports axis-aligned polyhedra only")
    V = geom.vertices
    breaks = [np.unique(np.round(V[:, k], 12)) for k in range(3)]
    gap = min(float(np.diff(b).min()) for b in breaks)
    if eps is None:
        eps = 0.25 * gap
    if not 0 < eps <= 0.25 * gap + 1e-15:
        raise GeometryError(f"geometry too thin for eps={eps:.4g}: need eps <= {0.25 * gap:.4g}")
    if h is None:
        h = 2 * eps
    axes = [_axis_nodes(list(b), eps, sigma, layers, h) for b in breaks]
    (X, lx), (Y, ly), (Z, lz) = axes
    nx, ny, nz = len(X), len(Y), len(Z)
    I, J, K = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), np.arange(nz - 1), indexing="ij")
    I, J, K = I.ravel(), J.ravel(), K.ravel()
    centers = np.stack([0.5 * (X[I] + X[I + 1]), 0.5 * (Y[J] + Y[J + 1]), 0.5 * (Z[K] + Z[K + 1])], axis=1)
    inside = geom.contains(centers)
    I, J, K = I[inside], J[inside], K[inside]

    def vid(i, j, k):
        return (i * ny + j) * nz + k

    C = np.stack([vid(I, J, K), vid(I + 1, J, K), vid(I + 1, J + 1, K), vid(I, J + 1, K),
                  vid(I, J, K + 1), vid(I + 1, J, K + 1), vid(I + 1, J + 1, K + 1), vid(I, J + 1, K + 1)], axis=1)
    used, inv = np.unique(C, return_inverse=True)
    C = inv.reshape(C.shape)
    ii, rem = np.divmod(used, ny * nz)
    jj, kk = np.divmod(rem, nz)
    verts = np.stack([X[ii], Y[jj], Z[kk]], axis=1)
    levels = np.stack([lx[I], ly[J], lz[K]], axis=1)
    sizes = np.stack([X[I + 1] - X[I], Y[J + 1] - Y[J], Z[K + 1] - Z[K]], axis=1)
    aspect = sizes.max(axis=1) / sizes.min(axis=1)
    layer = levels.max(axis=1)
    layer[layer < 0] = BULK
    mesh = GradedMesh(verts, C, "hexahedron", layer, -np.ones(len(C), int), aspect, levels=levels,
                      params={"sigma": sigma, "layers": layers, "eps": eps, "h": h})
    mesh.boundary = _tag_boundary_3d(geom, mesh)
    mesh.audit()
    return mesh


def _tag_boundary_3d(geom, mesh):
    counts = Counter(mesh._facets())
    V = mesh.vertices
    scale = float(np.ptp(geom.vertices, axis=0).max())
    out = []
    for f, k in counts.items():
        if k != 1:
            continue
        p = V[list(f)].mean(axis=0)
        for fid, face in enumerate(geom.faces):
            n = geom.face_normals[fid]
            q = geom.vertices[list(face)]
            if abs(np.dot(p - q[0], n)) > 1e-9 * scale:
                continue
            ax = int(np.argmax(np.abs(n)))
            keep = [i for i in range(3) if i != ax]
            if _in_polygon(p[keep], q[:, keep]):
                out.append((f, fid, geom.face_bc[fid]))
                break
    return out


def _in_polygon(p, poly) -> bool:
    inside = False
    n = len(poly)
    for i in range(n):
        (x1, y1), (x2, y2) = poly[i], poly[(i + 1) % n]
        if (y1 > p[1]) != (y2 > p[1]):
            x = x1 + (p[1] - y1) * (x2 - x1) / (y2 - y1)
            if p[0] < x:
                inside = not inside
    return inside
