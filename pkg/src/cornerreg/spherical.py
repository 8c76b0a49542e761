"""Spherical caps at polyhedral corners and their Laplace-Beltrami spectra.

The cap of a corner is the set of unit directions pointing into the domain.
It is a spherical polygon whose vertices are the directions of the incident
edges and whose sides lie on the great circles of the incident faces.  We
triangulate it by a fan from an interior direction, refine by conforming
newest-vertex bisection with midpoints pushed back to the sphere, and grade
geometrically toward the cap vertices.

Piecewise-linear elements on the flat chordal triangles give a generalized
eigenproblem ``A x = mu M x``; the corner exponent is
``lambda = -1/2 + sqrt(mu + 1/4)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .geometry import GeometryError, PolytopeGeometry

__all__ = [
    "SphericalCapMesh",
    "EigenResult",
    "EigenSolverError",
    "spherical_cap",
    "sphere_mesh",
    "refine_uniform",
    "assemble",
    "laplace_beltrami_eigs",
    "corner_limit_exponent",
    "corner_exponent_pipeline",
    "richardson",
]

DEFAULT_GRADING = 0.5
DEFAULT_LAYERS = 6
SHIFT = -0.25


class EigenSolverError(RuntimeError):
    """The sparse eigensolver hit its iteration cap; ``residual`` holds the worst residual seen."""

    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


@dataclass
class SphericalCapMesh:
    """Triangulation of a spherical cap (or the whole sphere).

    ``boundary`` maps each boundary edge ``(i, j)`` with ``i < j`` to the
    condition of the face it lies on.  The first two vertices of each
    triangle span its refinement edge, which bisection relies on.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary: dict = field(default_factory=dict)
    cap_corners: tuple = ()
    grading: dict = field(default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def boundary_vertices(self, kind: str | None = None) -> np.ndarray:
        ids = {v for e, k in self.boundary.items() if kind is None or k == kind for v in e}
        return np.array(sorted(ids), dtype=int)

    def area(self) -> float:
        """Area of the chordal triangulation (tends to the cap area under refinement)."""
        a, b, c = (self.vertices[self.triangles[:, k]] for k in range(3))
        return float(0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1).sum())

    def spherical_area(self) -> float:
        """Exact area of the union of geodesic triangles (Van Oosterom-Strackee)."""
        a, b, c = (self.vertices[self.triangles[:, k]] for k in range(3))
        num = np.einsum("ij,ij->i", a, np.cross(b, c))
        den = 1 + np.einsum("ij,ij->i", a, b) + np.einsum("ij,ij->i", b, c) + np.einsum("ij,ij->i", c, a)
        return float(np.sum(2 * np.arctan2(num, den)))

    def max_edge(self) -> float:
        V, T = self.vertices, self.triangles
        return float(max(np.linalg.norm(V[T[:, i]] - V[T[:, (i + 1) % 3]], axis=1).max() for i in range(3)))

    def check(self, tol: float = 1e-12) -> None:
        """Raise if vertices leave the sphere or a triangle is not positively oriented."""
        if np.abs(np.linalg.norm(self.vertices, axis=1) - 1).max() > tol:
            raise GeometryError("cap vertex off the unit sphere")
        a, b, c = (self.vertices[self.triangles[:, k]] for k in range(3))
        if np.any(np.einsum("ij,ij->i", a + b + c, np.cross(b - a, c - a)) <= 0):
            raise GeometryError("negatively oriented cap triangle")

    def to_dict(self) -> dict:
        return {
            "vertices": self.vertices.tolist(),
            "triangles": self.triangles.tolist(),
            "boundary": [[int(i), int(j), k] for (i, j), k in sorted(self.boundary.items())],
            "cap_corners": [int(i) for i in self.cap_corners],
            "grading": self.grading,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass
class EigenResult:
    """Eigenvalues per refinement level plus their extrapolated limits."""

    bc: str
    levels: list  # per level: list of k eigenvalues
    sizes: list  # per level: (max edge, n_vertices, n_triangles)
    extrapolated: list
    errors: list
    rates: list
    residuals: list

    @property
    def values(self) -> list:
        return self.levels[-1]

    def to_dict(self) -> dict:
        return {
            "bc": self.bc,
            "levels": self.levels,
            "sizes": self.sizes,
            "extrapolated": self.extrapolated,
            "errors": self.errors,
            "rates": self.rates,
            "residuals": self.residuals,
        }


# ----------------------------------------------------------------------------
# refinement
# ----------------------------------------------------------------------------

def _edge(i, j):
    return (i, j) if i < j else (j, i)


def _longest_first(V, tri):
    a, b, c = tri
    lens = [np.linalg.norm(V[a] - V[b]), np.linalg.norm(V[b] - V[c]), np.linalg.norm(V[c] - V[a])]
    k = int(np.argmax(lens))
    return [(a, b, c), (b, c, a), (c, a, b)][k]


def _bisect(mesh: SphericalCapMesh, marked: set) -> SphericalCapMesh:
    """Conforming newest-vertex bisection of every triangle with a marked edge.

    Closure first adds the refinement edge of each triangle touching a marked
    edge, so each triangle is split on its refinement edge and then possibly
    on the two sides inherited by its children.
    """
    T = [tuple(int(v) for v in t) for t in mesh.triangles]
    marked = set(marked)
    changed = True
    while changed:
        changed = False
        for t in T:
            ref = _edge(t[0], t[1])
            if ref not in marked and any(_edge(t[i], t[(i + 1) % 3]) in marked for i in (1, 2)):
                marked.add(ref)
                changed = True
    V = [v for v in mesh.vertices]
    mid: dict = {}

    def midpoint(e):
        if e not in mid:
            p = V[e[0]] + V[e[1]]
            V.append(p / np.linalg.norm(p))
            mid[e] = len(V) - 1
        return mid[e]

    out = []

    def split(t, depth):
        x0, x1, x2 = t
        if depth > 1 or _edge(x0, x1) not in marked:
            out.append(t)
            return
        m = midpoint(_edge(x0, x1))
        split((x2, x0, m), depth + 1)
        split((x1, x2, m), depth + 1)

    for t in T:
        split(t, 0)
    boundary = {}
    for e, kind in mesh.boundary.items():
        if e in mid:
            m = mid[e]
            boundary[_edge(e[0], m)] = kind
            boundary[_edge(m, e[1])] = kind
        else:
            boundary[e] = kind
    return SphericalCapMesh(np.array(V), np.array(out, dtype=int), boundary, mesh.cap_corners,
                            dict(mesh.grading))


def refine_uniform(mesh: SphericalCapMesh, times: int = 1) -> SphericalCapMesh:
    """Split every triangle into four (each edge bisected once), ``times`` times."""
    for _ in range(times):
        T = mesh.triangles
        marked = {_edge(int(t[i]), int(t[(i + 1) % 3])) for t in T for i in range(3)}
        mesh = _bisect(mesh, marked)
    return mesh


def _refine_to(mesh: SphericalCapMesh, h: float) -> SphericalCapMesh:
    for _ in range(60):
        if mesh.max_edge() <= h:
            return mesh
        mesh = refine_uniform(mesh)
    raise RuntimeError("uniform refinement did not reach the target size")


def _grade(mesh: SphericalCapMesh, layers: int) -> SphericalCapMesh:
    """Refine the patch of each cap vertex ``layers`` times; patch diameters halve each time."""
    for _ in range(layers):
        corners = set(mesh.cap_corners)
        marked = set()
        for t in mesh.triangles:
            if corners.intersection(int(v) for v in t):
                marked.update(_edge(int(t[i]), int(t[(i + 1) % 3])) for i in range(3))
        mesh = _bisect(mesh, marked)
    return mesh


# ----------------------------------------------------------------------------
# cap construction
# ----------------------------------------------------------------------------

def _cap_outline(geom: PolytopeGeometry, corner_id: int):
    """Cyclically ordered edge directions at a corner and the face carrying each cap side."""
    c = geom.corner(corner_id)
    if len(c.faces) < 3:
        raise GeometryError(f"corner {corner_id} has {len(c.faces)} incident faces; a cap needs three")
    dirs = {}
    for eid in c.edges:
        e = geom.edges[eid]
        other = e.b if e.vertices[0] == c.vertex else e.a
        d = other - c.point
        dirs[eid] = d / np.linalg.norm(d)
    # each face through the vertex contributes the two edges adjacent to it there
    sides = []
    for fid in c.faces:
        f = list(geom.faces[fid])
        k = f.index(c.vertex)
        nb = {f[k - 1], f[(k + 1) % len(f)]}
        es = [eid for eid in c.edges if set(geom.edges[eid].vertices) - {c.vertex} <= nb]
        if len(es) != 2:
            raise GeometryError(f"face {fid} does not bound the cap of corner {corner_id} by one arc")
        sides.append((es[0], es[1], fid))
    order = [sides[0][0], sides[0][1]]
    side_face = [sides[0][2]]
    used = {0}
    while len(used) < len(sides):
        for k, (a, b, fid) in enumerate(sides):
            if k in used:
                continue
            if a == order[-1] or b == order[-1]:
                nxt = b if a == order[-1] else a
                used.add(k)
                side_face.append(fid)
                if nxt == order[0]:
                    break
                order.append(nxt)
                break
        else:
            raise GeometryError(f"the faces at corner {corner_id} do not close up into one cap")
    if len(order) != len(sides):
        raise GeometryError(f"corner {corner_id}: cap outline is not a single cycle")
    return c, [dirs[e] for e in order], side_face


def spherical_cap(geom: PolytopeGeometry, corner_id: int, h: float = 0.3,
                  grading: float = DEFAULT_GRADING, layers: int = DEFAULT_LAYERS) -> SphericalCapMesh:
    """Mesh of the cap cut out of the unit sphere by the tangent cone at a corner.

    Parameters
    ----------
    geom : PolytopeGeometry
        A 3D geometry.
    corner_id : int
        Corner whose cap is meshed.
    h : float
        Target chord length of the uniform part, in ``(0, 1)``.
    grading, layers : float, int
        Geometric refinement toward the cap vertices.  Bisection halves patch
        diameters, so only the ratio 0.5 is realized.
    """
    if geom.dimension != 3:
        raise GeometryError("spherical caps need a 3D geometry")
    if not 0 < h < 1:
        raise ValueError("h must lie in (0, 1)")
    if not math.isclose(grading, 0.5):
        raise ValueError("bisection grading realizes the ratio 0.5 only")
    c, dirs, side_face = _cap_outline(geom, corner_id)
    n = len(dirs)
    s = np.sum(dirs, axis=0)
    t = 1e-3 * geom.diameter
    center = None
    for cand in (s, -s):
        if np.linalg.norm(cand) < 1e-9:
            continue
        d = cand / np.linalg.norm(cand)
        if geom.contains(c.point + t * d)[0]:
            center = d
            break
    if center is None:
        raise GeometryError(f"no interior fan center found for the cap of corner {corner_id}")
    V = [center] + list(dirs)
    tris = []
    for i in range(n):
        a, b = 1 + i, 1 + (i + 1) % n
        va, vb = V[a], V[b]
        vol = float(np.dot(center, np.cross(va, vb)))
        if abs(vol) < 1e-12:
            raise GeometryError(f"cap of corner {corner_id} is not star-shaped about its center")
        tris.append((0, a, b) if vol > 0 else (0, b, a))
    signs = {np.sign(np.dot(center, np.cross(V[t_[1]], V[t_[2]]))) for t_ in tris}
    V = np.array(V)
    # every fan triangle must sweep the same way around the center
    orient = [float(np.dot(center, np.cross(V[1 + i], V[1 + (i + 1) % n]))) for i in range(n)]
    if not (all(o > 0 for o in orient) or all(o < 0 for o in orient)) or len(signs) != 1:
        raise GeometryError(f"cap of corner {corner_id} is not star-shaped about its center")
    boundary = {
        _edge(1 + i, 1 + (i + 1) % n): geom.face_bc[side_face[i]] for i in range(n)
    }
    T = np.array([_longest_first(V, t_) for t_ in tris], dtype=int)
    mesh = SphericalCapMesh(V, T, boundary, tuple(range(1, n + 1)),
                            {"ratio": grading, "layers": layers, "h": h})
    mesh = _refine_to(mesh, h)
    mesh = _grade(mesh, layers)
    mesh.check()
    return mesh


def sphere_mesh(h: float = 0.1) -> SphericalCapMesh:
    """Closed unit sphere from the octahedron, refined until chords are at most ``h``."""
    V = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], float)
    T = []
    for x in (0, 1):
        for y in (2, 3):
            for z in (4, 5):
                t = (x, y, z)
                a, b, c = V[list(t)]
                T.append(t if np.dot(a + b + c, np.cross(b - a, c - a)) > 0 else (x, z, y))
    mesh = SphericalCapMesh(V, np.array([_longest_first(V, t) for t in T]), {}, (), {"h": h})
    mesh = _refine_to(mesh, h)
    mesh.check()
    return mesh


# ----------------------------------------------------------------------------
# finite elements
# ----------------------------------------------------------------------------

def assemble(mesh: SphericalCapMesh) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """P1 stiffness (cotangent form) and consistent mass on the chordal triangles."""
    V, T = mesh.vertices, mesh.triangles
    P = [V[T[:, k]] for k in range(3)]
    area = 0.5 * np.linalg.norm(np.cross(P[1] - P[0], P[2] - P[0]), axis=1)
    rows, cols, kv, mv = [], [], [], []
    for k in range(3):
        i, j, o = k, (k + 1) % 3, (k + 2) % 3
        # cot of the angle at o, opposite edge (i, j)
        u, w = P[i] - P[o], P[j] - P[o]
        cot = np.einsum("ij,ij->i", u, w) / np.linalg.norm(np.cross(u, w), axis=1)
        c = 0.5 * cot
        for a, b, val in ((i, j, -c), (j, i, -c), (i, i, c), (j, j, c)):
            rows.append(T[:, a])
            cols.append(T[:, b])
            kv.append(val)
    for a in range(3):
        for b in range(3):
            rows_m = T[:, a]
            cols_m = T[:, b]
            mv.append((rows_m, cols_m, area / (6.0 if a == b else 12.0)))
    n = len(V)
    A = sp.csr_matrix((np.concatenate(kv), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    M = sp.csr_matrix(
        (np.concatenate([m[2] for m in mv]), (np.concatenate([m[0] for m in mv]), np.concatenate([m[1] for m in mv]))),
        shape=(n, n),
    )
    return A, M


def _free_dofs(mesh: SphericalCapMesh, bc: str) -> np.ndarray:
    n = mesh.n_vertices
    if bc == "neumann":
        return np.arange(n)
    if bc == "dirichlet":
        fixed = mesh.boundary_vertices()
    elif bc == "inherit":
        fixed = mesh.boundary_vertices("dirichlet")
    else:
        raise ValueError(f"bc must be 'dirichlet', 'neumann' or 'inherit', got {bc!r}")
    keep = np.ones(n, bool)
    keep[fixed] = False
    return np.flatnonzero(keep)


def _solve(mesh: SphericalCapMesh, bc: str, k: int, maxiter: int | None = None):
    A, M = assemble(mesh)
    free = _free_dofs(mesh, bc)
    A = A[free][:, free].tocsc()
    M = M[free][:, free].tocsc()
    if k >= len(free):
        raise ValueError(f"asked for {k} eigenvalues of a problem with {len(free)} unknowns")
    v0 = np.ones(len(free)) + 0.01 * np.cos(np.arange(len(free)))
    try:
        vals, vecs = eigsh(A, k=k, M=M, sigma=SHIFT, which="LM", v0=v0, maxiter=maxiter, tol=1e-12)
    except ArpackNoConvergence as exc:
        res = None
        if exc.eigenvectors is not None and len(exc.eigenvalues):
            X = exc.eigenvectors
            R = A @ X - (M @ X) * exc.eigenvalues[None, :]
            res = float(np.abs(R).max())
        raise EigenSolverError("shift-invert iteration did not converge", res) from exc
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    rq = [float((x @ (A @ x)) / (x @ (M @ x))) for x in vecs.T]
    resid = [abs(r - v) for r, v in zip(rq, vals)]
    return np.array(rq), max(resid)


def richardson(values, ratio: float = 2.0, default_rate: float | None = None):
    """Extrapolate a sequence on meshes refined by ``ratio``; returns ``(limit, error, rate)``.

    The rate is estimated from the last three terms; when the differences do
    not shrink monotonically the ``default_rate`` is used instead.
    """
    v = [float(x) for x in values]
    if len(v) < 2:
        return v[-1], math.inf, None
    d2 = v[-1] - v[-2]
    rate = default_rate
    if len(v) >= 3:
        d1 = v[-2] - v[-3]
        if d1 != 0 and d2 != 0 and d2 / d1 > 0 and abs(d2) < abs(d1):
            rate = math.log(abs(d1 / d2)) / math.log(ratio)
    if rate is None:
        return v[-1], abs(d2), None
    lim = v[-1] + d2 / (ratio**rate - 1)
    return lim, abs(lim - v[-1]), rate


def laplace_beltrami_eigs(mesh: SphericalCapMesh, bc: str = "dirichlet", k: int = 1, levels: int = 3,
                          maxiter: int | None = None) -> EigenResult:
    """First ``k`` Laplace-Beltrami eigenvalues over ``levels`` uniformly refined meshes.

    Level ``l + 1`` bisects every edge of level ``l``, which halves all mesh
    sizes (including the graded patches), so the sequence is extrapolated in
    ``h`` with ratio 2.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if levels < 1:
        raise ValueError("levels must be >= 1")
    seq, sizes, resid = [], [], []
    m = mesh
    for lev in range(levels):
        if lev:
            m = refine_uniform(m)
        vals, r = _solve(m, bc, k, maxiter)
        if bc == "neumann":
            vals[0] = max(vals[0], 0.0) if abs(vals[0]) < 1e-8 else vals[0]
        seq.append([float(x) for x in vals])
        sizes.append([m.max_edge(), m.n_vertices, m.n_triangles])
        resid.append(float(r))
    ext, err, rates = [], [], []
    for j in range(k):
        col = [s[j] for s in seq]
        if bc == "neumann" and j == 0 and max(abs(x) for x in col) < 1e-8:
            ext.append(0.0)
            err.append(max(abs(x) for x in col))
            rates.append(None)
            continue
        lim, e, rate = richardson(col, 2.0, default_rate=2.0)
        ext.append(lim)
        err.append(e)
        rates.append(rate)
    return EigenResult(bc, seq, sizes, ext, err, rates, resid)


def corner_limit_exponent(mu: float, kind: str = "dirichlet") -> float:
    """``-1/2 + sqrt(mu + 1/4)``; for Neumann pass the second eigenvalue (the first is zero)."""
    if kind not in ("dirichlet", "neumann"):
        raise ValueError("kind must be 'dirichlet' or 'neumann'")
    if mu < 0:
        if mu > -1e-10:
            mu = 0.0
        else:
            raise ValueError(f"eigenvalue must be non-negative, got {mu}")
    return -0.5 + math.sqrt(mu + 0.25)


@dataclass
class CornerExponent:
    corner: int
    kind: str
    value: float
    error: float
    eigen: EigenResult

    def to_dict(self) -> dict:
        return {"corner": self.corner, "kind": self.kind, "lambda": self.value, "error": self.error,
                "eigen": self.eigen.to_dict()}


def corner_exponent_pipeline(geom: PolytopeGeometry, corner_id: int, kind: str = "dirichlet",
                             h: float = 0.35, levels: int = 3, layers: int = DEFAULT_LAYERS) -> CornerExponent:
    """Limiting exponent of a 3D corner with an error bar from the refinement study.

    Dirichlet uses the first cap eigenvalue, Neumann the second.  The error
    bar propagates the extrapolation error of ``mu`` through ``d lambda / d mu``.
    """
    mesh = spherical_cap(geom, corner_id, h=h, layers=layers)
    idx = 0 if kind == "dirichlet" else 1
    res = laplace_beltrami_eigs(mesh, kind, k=idx + 1, levels=levels)
    mu, dmu = res.extrapolated[idx], res.errors[idx]
    lam = corner_limit_exponent(mu, kind)
    dlam = dmu / (2 * math.sqrt(max(mu, 0.0) + 0.25))
    return CornerExponent(corner_id, kind, lam, dlam, res)
