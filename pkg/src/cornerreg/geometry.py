"""Polygons and polyhedra: openings, distance functions, neighborhoods, dyadic covers.

A geometry is read from a small JSON document::

    {"dimension": 2, "vertices": [[0, 0], [1, 0], ...], "loops": [[0, 1, ...]],
     "bc": {"0": "dirichlet", "3": "neumann"}}

    {"dimension": 3, "vertices": [[0, 0, 0], ...], "faces": [[0, 3, 2, 1], ...],
     "bc": {...}}

In 2D the ``bc`` keys index the boundary sides (side ``i`` of a loop joins
vertex ``i`` to vertex ``i+1``, sides numbered consecutively over all loops);
in 3D they index the faces.  Missing entries default to Dirichlet.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "GeometryError",
    "Corner",
    "Edge",
    "PolytopeGeometry",
    "load_geometry",
    "bundled_geometry",
    "BUNDLED",
    "corner_opening",
    "edge_opening",
    "distances",
    "segment_distance",
    "as_pi_fraction",
    "NeighborhoodDecomposition",
    "decompose_neighborhoods",
    "DyadicCell",
    "DyadicCover",
    "dyadic_cover",
]

BC_KINDS = ("dirichlet", "neumann")
BUNDLED = ("square", "lshape", "slit_square", "cube", "thick_l", "fichera")

_PLANARITY_TOL = 1e-9
_ANGLE_TOL = 1e-12


class GeometryError(ValueError):
    """Raised for invalid geometry documents or queries."""


def as_pi_fraction(angle: float, max_denominator: int = 48) -> Fraction | None:
    """Return ``q`` with ``angle == q*pi`` if ``q`` is a small rational, else None."""
    q = Fraction(angle / math.pi).limit_denominator(max_denominator)
    if abs(float(q) * math.pi - angle) <= _ANGLE_TOL * max(1.0, abs(angle)):
        return q
    return None


def segment_distance(points, a, b) -> np.ndarray:
    """Euclidean distance from each row of ``points`` to the segment [a, b]."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    a = np.asarray(a, dtype=float)
    d = np.asarray(b, dtype=float) - a
    t = np.clip((p - a) @ d / (d @ d), 0.0, 1.0)
    return np.linalg.norm(p - a - t[:, None] * d, axis=1)


@dataclass(frozen=True)
class Corner:
    """A corner of a polygon (one visit of the boundary loop) or of a polyhedron.

    For 2D corners the domain near the corner is the sector
    ``theta0 <= theta <= theta0 + opening`` and ``bc`` holds the boundary kinds of
    the side at ``theta0`` and of the side at ``theta0 + opening``.
    """

    id: int
    vertex: int
    point: np.ndarray
    opening: float | None = None
    theta0: float | None = None
    bc: tuple[str, str] | None = None
    sides: tuple[int, int] | None = None
    edges: tuple[int, ...] = ()
    faces: tuple[int, ...] = ()

    @property
    def opening_pi(self) -> Fraction | None:
        return None if self.opening is None else as_pi_fraction(self.opening)


@dataclass(frozen=True)
class Edge:
    """An edge of a polyhedron with its interior dihedral opening."""

    id: int
    vertices: tuple[int, int]
    faces: tuple[int, int]
    opening: float
    bc: tuple[str, str]
    a: np.ndarray
    b: np.ndarray
    # unit vectors spanning the transverse plane: first face direction, and the
    # direction rotated by +90 degrees about ``direction``
    frame: np.ndarray = field(repr=False)

    @property
    def direction(self) -> np.ndarray:
        d = self.b - self.a
        return d / np.linalg.norm(d)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.b - self.a))

    @property
    def axis(self) -> int | None:
        """Index of the Cartesian axis the edge is parallel to, if any."""
        d = np.abs(self.direction)
        k = int(np.argmax(d))
        return k if abs(d[k] - 1.0) < 1e-12 else None

    @property
    def opening_pi(self) -> Fraction | None:
        return as_pi_fraction(self.opening)


def _signed_area(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _newell_normal(pts: np.ndarray) -> np.ndarray:
    nxt = np.roll(pts, -1, axis=0)
    n = np.array(
        [
            np.sum((pts[:, 1] - nxt[:, 1]) * (pts[:, 2] + nxt[:, 2])),
            np.sum((pts[:, 2] - nxt[:, 2]) * (pts[:, 0] + nxt[:, 0])),
            np.sum((pts[:, 0] - nxt[:, 0]) * (pts[:, 1] + nxt[:, 1])),
        ]
    )
    return n


class PolytopeGeometry:
    """A polygon (``dimension == 2``) or polyhedron (``dimension == 3``).

    Instances are immutable after construction; use :func:`load_geometry` or
    :meth:`from_dict` to build one.  All openings, corners and edges are
    computed eagerly and validated.
    """

    def __init__(self, dimension, vertices, loops=None, faces=None, bc=None, name=None):
        self.dimension = int(dimension)
        if self.dimension not in (2, 3):
            raise GeometryError(f"dimension must be 2 or 3, got {dimension}")
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != self.dimension:
            raise GeometryError(f"vertices must be an (n, {self.dimension}) array")
        if not np.all(np.isfinite(v)):
            raise GeometryError("vertex coordinates must be finite")
        self.vertices = v
        self.vertices.setflags(write=False)
        self.name = name
        bc = {int(k): str(val).lower() for k, val in (bc or {}).items()}
        for k, val in bc.items():
            if val not in BC_KINDS:
                raise GeometryError(f"unknown boundary condition {val!r} for entity {k}")
        self._check_distinct_vertices()
        if self.dimension == 2:
            if not loops:
                raise GeometryError("2D geometry needs 'loops'")
            self._build_2d([list(map(int, lp)) for lp in loops], bc)
            self.faces = ()
            self.edges: tuple[Edge, ...] = ()
        else:
            if not faces:
                raise GeometryError("3D geometry needs 'faces'")
            self.loops = ()
            self._build_3d([list(map(int, f)) for f in faces], bc)

    # -- construction ---------------------------------------------------------

    def _check_distinct_vertices(self):
        v = self.vertices
        if len(v) < 3:
            raise GeometryError("need at least three vertices")
        diff = np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1)
        iu = np.triu_indices(len(v), 1)
        if np.any(diff[iu] < 1e-12):
            i, j = (int(k[np.argmin(diff[iu])]) for k in iu)
            raise GeometryError(f"vertices {i} and {j} coincide")

    def _build_2d(self, loops, bc):
        fixed = []
        for k, lp in enumerate(loops):
            if len(lp) < 2:
                raise GeometryError(f"loop {k} has fewer than two vertices")
            area = _signed_area(self.vertices[lp])
            # outer loop counter-clockwise, holes clockwise
            want_positive = k == 0
            if (area > 0) != want_positive and abs(area) > 0:
                lp = [lp[0]] + lp[1:][::-1]
                reversed_ = True
            else:
                reversed_ = False
            fixed.append((lp, reversed_))
        self.loops = tuple(tuple(lp) for lp, _ in fixed)

        # side numbering follows the input document
        side_bc = []
        sides = []
        offset = 0
        for (lp, rev), orig in zip(fixed, loops):
            n = len(lp)
            for i in range(n):
                if rev:
                    # side i of the reversed loop is side (n - 1 - i) of the input
                    # (the input loop was [v0, v1, ...]; reversal keeps v0 first)
                    orig_index = (n - 1 - i) % n
                else:
                    orig_index = i
                sides.append((lp[i], lp[(i + 1) % n]))
                side_bc.append(bc.get(offset + orig_index, "dirichlet"))
            offset += n
        self.sides = tuple(sides)
        self.side_bc = tuple(side_bc)
        for i, (a, b) in enumerate(self.sides):
            if np.linalg.norm(self.vertices[a] - self.vertices[b]) < 1e-12:
                raise GeometryError(f"side {i} is degenerate (zero length)")

        corners = []
        offset = 0
        for lp in self.loops:
            n = len(lp)
            for i in range(n):
                prev_v, v, next_v = lp[i - 1], lp[i], lp[(i + 1) % n]
                p = self.vertices[v]
                d_out = self.vertices[next_v] - p
                d_in = self.vertices[prev_v] - p
                a_out = math.atan2(d_out[1], d_out[0])
                a_in = math.atan2(d_in[1], d_in[0])
                omega = (a_in - a_out) % (2 * math.pi)
                if omega < 1e-12 or omega > 2 * math.pi - 1e-12:
                    omega = 2 * math.pi  # crack tip
                side_out = offset + i
                side_in = offset + (i - 1) % n
                corners.append(
                    Corner(
                        id=len(corners),
                        vertex=v,
                        point=p.copy(),
                        opening=omega,
                        theta0=a_out,
                        bc=(self.side_bc[side_out], self.side_bc[side_in]),
                        sides=(side_out, side_in),
                    )
                )
            offset += n
        for c in corners:
            if not 0.0 < c.opening <= 2 * math.pi:
                raise GeometryError(f"corner {c.id} has opening {c.opening} outside (0, 2pi]")
        self.corners = tuple(corners)

    def _build_3d(self, faces, bc):
        v = self.vertices
        for k, f in enumerate(faces):
            if len(f) < 3:
                raise GeometryError(f"face {k} has fewer than three vertices")
            pts = v[f]
            n = _newell_normal(pts)
            nn = np.linalg.norm(n)
            if nn < 1e-14:
                raise GeometryError(f"face {k} is degenerate")
            n = n / nn
            dev = np.abs((pts - pts.mean(axis=0)) @ n)
            if dev.max() > _PLANARITY_TOL * max(1.0, np.ptp(pts)):
                raise GeometryError(f"face {k} is not planar (deviation {dev.max():.3e})")
            for i in range(len(f)):
                if np.linalg.norm(pts[i] - pts[(i + 1) % len(f)]) < 1e-12:
                    raise GeometryError(f"face {k} has a degenerate (zero-length) edge")

        # consistent orientation: each directed edge once, its reverse once
        directed: dict[tuple[int, int], int] = {}
        for k, f in enumerate(faces):
            for i in range(len(f)):
                e = (f[i], f[(i + 1) % len(f)])
                if e in directed:
                    raise GeometryError(
                        f"edge {e} traversed twice in the same direction (faces "
                        f"{directed[e]} and {k}): inconsistent face normals"
                    )
                directed[e] = k
        for (a, b), k in directed.items():
            if (b, a) not in directed:
                raise GeometryError(f"edge ({a}, {b}) of face {k} is not shared by two faces")

        # outward orientation: positive signed volume
        vol = 0.0
        for f in faces:
            pts = v[f]
            vol += float(np.dot(pts[0], _newell_normal(pts))) / 6.0
        if vol < 0:
            faces = [[f[0]] + f[1:][::-1] for f in faces]
        self.faces = tuple(tuple(f) for f in faces)
        self.face_bc = tuple(bc.get(k, "dirichlet") for k in range(len(faces)))
        normals = []
        for f in self.faces:
            n = _newell_normal(v[list(f)])
            normals.append(n / np.linalg.norm(n))
        self.face_normals = np.array(normals)
        self.face_normals.setflags(write=False)

        owner: dict[tuple[int, int], int] = {}
        for k, f in enumerate(self.faces):
            for i in range(len(f)):
                owner[(f[i], f[(i + 1) % len(f)])] = k

        edges = []
        for (a, b), f1 in sorted(owner.items()):
            if a > b:
                continue
            f2 = owner[(b, a)]
            edges.append(self._make_edge(len(edges), a, b, f1, f2))
        self.edges = tuple(edges)

        corners = []
        for vi in range(len(v)):
            inc_e = tuple(e.id for e in edges if vi in e.vertices)
            inc_f = tuple(k for k, f in enumerate(self.faces) if vi in f)
            if not inc_e:
                continue
            corners.append(
                Corner(id=len(corners), vertex=vi, point=v[vi].copy(), edges=inc_e, faces=inc_f)
            )
        self.corners = tuple(corners)

    def _make_edge(self, eid, a, b, f1, f2) -> Edge:
        pa, pb = self.vertices[a], self.vertices[b]
        t = (pb - pa) / np.linalg.norm(pb - pa)
        n1, n2 = self.face_normals[f1], self.face_normals[f2]
        # f1 traverses a->b, f2 traverses b->a; inward in-face directions
        w1 = np.cross(n1, t)
        w2 = np.cross(n2, -t)
        if abs(np.dot(w1, t)) > 1e-9 or abs(np.dot(w2, t)) > 1e-9:
            raise GeometryError(f"edge {eid}: inconsistent face normals")
        c = float(np.clip(np.dot(w1, w2), -1.0, 1.0))
        side = float(np.dot(w2, n1))
        if abs(side) < 1e-12:
            omega = math.pi if c < 0 else 2 * math.pi
        elif side < 0:
            omega = math.acos(c)
        else:
            omega = 2 * math.pi - math.acos(c)
        e1 = w1 / np.linalg.norm(w1)
        e2 = np.cross(t, e1)
        # interior sweeps from e1 towards w2 by +omega about t
        ang_w2 = math.atan2(np.dot(w2, e2), np.dot(w2, e1)) % (2 * math.pi)
        if abs(ang_w2 - omega % (2 * math.pi)) > 1e-9 and not math.isclose(omega, 2 * math.pi):
            e2 = -e2
        return Edge(
            id=eid,
            vertices=(a, b),
            faces=(f1, f2),
            opening=omega,
            bc=(self.face_bc[f1], self.face_bc[f2]),
            a=pa.copy(),
            b=pb.copy(),
            frame=np.array([e1, e2]),
        )

    @classmethod
    def from_dict(cls, doc: dict, name: str | None = None) -> "PolytopeGeometry":
        if not isinstance(doc, dict):
            raise GeometryError("geometry document must be a mapping")
        for key in ("dimension", "vertices"):
            if key not in doc:
                raise GeometryError(f"geometry document is missing {key!r}")
        return cls(
            doc["dimension"],
            doc["vertices"],
            loops=doc.get("loops"),
            faces=doc.get("faces"),
            bc=doc.get("bc"),
            name=doc.get("name", name),
        )

    def to_dict(self) -> dict:
        doc = {"dimension": self.dimension, "vertices": self.vertices.tolist()}
        if self.dimension == 2:
            doc["loops"] = [list(lp) for lp in self.loops]
            doc["bc"] = {str(i): k for i, k in enumerate(self.side_bc)}
        else:
            doc["faces"] = [list(f) for f in self.faces]
            doc["bc"] = {str(i): k for i, k in enumerate(self.face_bc)}
        if self.name:
            doc["name"] = self.name
        return doc

    # -- queries --------------------------------------------------------------

    @property
    def corner_points(self) -> np.ndarray:
        return np.array([c.point for c in self.corners])

    @property
    def diameter(self) -> float:
        v = self.vertices
        return float(np.max(np.linalg.norm(v[:, None] - v[None], axis=-1)))

    def corner(self, cid: int) -> Corner:
        try:
            return self.corners[int(cid)]
        except (IndexError, ValueError, TypeError):
            raise GeometryError(f"unknown corner id {cid!r}") from None

    def edge(self, eid: int) -> Edge:
        if self.dimension != 3:
            raise GeometryError("edges exist only for 3D geometries")
        try:
            return self.edges[int(eid)]
        except (IndexError, ValueError, TypeError):
            raise GeometryError(f"unknown edge id {eid!r}") from None

    def edges_at(self, cid: int) -> tuple[Edge, ...]:
        c = self.corner(cid)
        return tuple(self.edges[e] for e in c.edges)

    def contains(self, points) -> np.ndarray:
        """Boolean mask of points strictly inside the domain (boundary undefined)."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if self.dimension == 2:
            inside = np.zeros(len(p), dtype=bool)
            for lp in self.loops:
                q = self.vertices[list(lp)]
                q2 = np.roll(q, -1, axis=0)
                for (x1, y1), (x2, y2) in zip(q, q2):
                    cond = (y1 > p[:, 1]) != (y2 > p[:, 1])
                    with np.errstate(divide="ignore", invalid="ignore"):
                        xint = x1 + (p[:, 1] - y1) * (x2 - x1) / (y2 - y1)
                    inside ^= cond & (p[:, 0] < xint)
            return inside
        return np.abs(self.winding_number(p)) > 0.5

    def winding_number(self, points) -> np.ndarray:
        """Generalized winding number of a closed polyhedral surface (3D)."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        total = np.zeros(len(p))
        for f in self.faces:
            q = self.vertices[list(f)]
            for i in range(1, len(f) - 1):
                a = q[0] - p
                b = q[i] - p
                c = q[i + 1] - p
                la, lb, lc = (np.linalg.norm(x, axis=1) for x in (a, b, c))
                num = np.einsum("ij,ij->i", a, np.cross(b, c))
                den = (
                    la * lb * lc
                    + np.einsum("ij,ij->i", a, b) * lc
                    + np.einsum("ij,ij->i", b, c) * la
                    + np.einsum("ij,ij->i", c, a) * lb
                )
                total += 2.0 * np.arctan2(num, den)
        return total / (4 * math.pi)

    def corner_distances(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return np.linalg.norm(p[:, None, :] - self.corner_points[None, :, :], axis=-1)

    def edge_distances(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if self.dimension != 3:
            return np.zeros((len(p), 0))
        return np.stack([segment_distance(p, e.a, e.b) for e in self.edges], axis=1)

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def summary(self) -> dict:
        out = {
            "name": self.name,
            "dimension": self.dimension,
            "n_vertices": len(self.vertices),
            "corners": [
                {"id": c.id, "point": c.point.tolist(), "opening": c.opening}
                if self.dimension == 2
                else {"id": c.id, "point": c.point.tolist(), "edges": list(c.edges)}
                for c in self.corners
            ],
        }
        if self.dimension == 3:
            out["edges"] = [
                {"id": e.id, "vertices": list(e.vertices), "opening": e.opening, "bc": list(e.bc)}
                for e in self.edges
            ]
        return out

    def __repr__(self):
        kind = "polygon" if self.dimension == 2 else "polyhedron"
        label = f" {self.name!r}" if self.name else ""
        return f"<PolytopeGeometry {kind}{label}: {len(self.corners)} corners, {len(self.edges)} edges>"


def bundled_geometry(name: str) -> PolytopeGeometry:
    """Load one of the bundled example geometries (see ``BUNDLED``)."""
    if name not in BUNDLED:
        raise GeometryError(f"no bundled geometry {name!r}; choose from {BUNDLED}")
    text = resources.files("cornerreg.data").joinpath(f"{name}.json").read_text()
    return PolytopeGeometry.from_dict(json.loads(text), name=name)


def load_geometry(spec) -> PolytopeGeometry:
    """Build a geometry from a mapping, a JSON string, a file path or a bundled name."""
    if isinstance(spec, PolytopeGeometry):
        return spec
    if isinstance(spec, dict):
        return PolytopeGeometry.from_dict(spec)
    if isinstance(spec, (str, Path)):
        s = str(spec)
        if s in BUNDLED:
            return bundled_geometry(s)
        if s.lstrip().startswith("{"):
            try:
                doc = json.loads(s)
            except json.JSONDecodeError as exc:
                raise GeometryError(f"invalid geometry JSON: {exc}") from None
            return PolytopeGeometry.from_dict(doc)
        path = Path(s)
        if not path.exists():
            raise GeometryError(f"geometry file {s!r} not found")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise GeometryError(f"invalid geometry JSON in {s}: {exc}") from None
        return PolytopeGeometry.from_dict(doc, name=path.stem)
    raise GeometryError(f"cannot load geometry from {type(spec).__name__}")


def corner_opening(geom: PolytopeGeometry, corner_id: int) -> float:
    """Interior angle of a polygon at a corner, in (0, 2*pi]."""
    if geom.dimension != 2:
        raise GeometryError("corner_opening is defined for 2D geometries")
    return geom.corner(corner_id).opening


def edge_opening(geom: PolytopeGeometry, edge_id: int) -> float:
    """Dihedral opening of the tangent wedge along a polyhedron edge."""
    return geom.edge(edge_id).opening


def distances(geom: PolytopeGeometry, point) -> dict:
    """Distances ``r_c``, ``r_e`` and ``rho_ce = r_e / r_c`` at a single point.

    ``rho`` is keyed by ``(corner_id, edge_id)`` for each edge incident to the
    corner; asking at a corner itself raises :class:`GeometryError`.
    """
    x = np.asarray(point, dtype=float).reshape(1, -1)
    if x.shape[1] != geom.dimension:
        raise GeometryError("point dimension does not match geometry")
    rc = geom.corner_distances(x)[0]
    out = {"r_c": {c.id: float(rc[c.id]) for c in geom.corners}}
    if geom.dimension == 3:
        re = geom.edge_distances(x)[0]
        out["r_e"] = {e.id: float(re[e.id]) for e in geom.edges}
        rho = {}
        for c in geom.corners:
            for eid in c.edges:
                if rc[c.id] == 0.0:
                    raise GeometryError(f"rho undefined at corner {c.id}")
                rho[(c.id, eid)] = float(re[eid] / rc[c.id])
        out["rho"] = rho
    return out


# -- neighborhoods -----------------------------------------------------------


@dataclass(frozen=True)
class NeighborhoodDecomposition:
    """Corner, edge and edge-vertex neighborhoods with parameters ``eps'' < eps < eps'``.

    Region labels are tuples: ``("O",)`` for the smooth part, ``("C", c)``,
    ``("E", e)`` and ``("CE", c, e)``.  Points on an interface get every label
    whose closure contains them.
    """

    geometry: PolytopeGeometry
    eps: float
    eps_large: float
    eps_small: float

    def _params(self, level: str) -> tuple[float, float]:
        # (radius parameter, lower-bound parameter) as in the nested families
        if level == "base":
            return self.eps, self.eps
        if level == "large":
            return self.eps_large, self.eps_small
        if level == "small":
            return self.eps_small, self.eps_large
        raise ValueError(f"unknown level {level!r}")

    def masks(self, points, level: str = "base", closed: bool = True) -> dict:
        """Membership masks for every region label at the given level."""
        g = self.geometry
        p = np.atleast_2d(np.asarray(points, dtype=float))
        a, b = self._params(level)
        lt = np.less_equal if closed else np.less
        gt = np.greater_equal if closed else np.greater
        rc = g.corner_distances(p)
        out = {}
        if g.dimension == 2:
            for c in g.corners:
                out[("C", c.id)] = lt(rc[:, c.id], a)
            return out
        re = g.edge_distances(p)
        with np.errstate(divide="ignore", invalid="ignore"):
            for c in g.corners:
                rho = re[:, list(c.edges)] / rc[:, [c.id]]
                rho = np.where(rc[:, [c.id]] == 0, 0.0, rho)
                near = lt(rc[:, c.id], a)
                out[("C", c.id)] = near & np.all(gt(rho, b / 2), axis=1)
                for k, eid in enumerate(c.edges):
                    out[("CE", c.id, eid)] = near & lt(rho[:, k], a)
            for e in g.edges:
                m = lt(re[:, e.id], a * a / 2)
                for cid in (self._corner_of_vertex(v) for v in e.vertices):
                    m &= gt(rc[:, cid], b / 2)
                out[("E", e.id)] = m
        return out

    def _corner_of_vertex(self, v: int) -> int:
        for c in self.geometry.corners:
            if c.vertex == v:
                return c.id
        raise GeometryError(f"vertex {v} is not a corner")

    def classify(self, points, level: str = "base") -> list[list[tuple]]:
        """Region labels of each point (a list per point, never empty)."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        m = self.masks(p, level)
        inner = self.masks(p, "small", closed=True)
        near_singular = np.zeros(len(p), dtype=bool)
        if self.geometry.dimension == 2:
            rc = self.geometry.corner_distances(p)
            near_singular = np.any(rc <= self.eps / 2, axis=1)
        else:
            for mask in inner.values():
                near_singular |= mask
        labels = [[] for _ in range(len(p))]
        for key, mask in m.items():
            for i in np.nonzero(mask)[0]:
                labels[i].append(key)
        smooth = ~near_singular
        for i in range(len(p)):
            if smooth[i] or not labels[i]:
                labels[i].insert(0, ("O",))
        return labels

    def check_disjoint(self, points, level: str = "base") -> None:
        """Raise :class:`GeometryError` naming the first pair of overlapping regions."""
        g = self.geometry
        a, _ = self._params(level)
        cp = g.corner_points
        for i in range(len(cp)):
            for j in range(i + 1, len(cp)):
                d = float(np.linalg.norm(cp[i] - cp[j]))
                if d <= 2 * a and d > 1e-14:
                    raise GeometryError(
                        f"eps too large: balls around corners {i} and {j} overlap "
                        f"(distance {d:.4g} <= 2*{a:.4g})"
                    )
        if g.dimension == 2:
            return
        m = self.masks(points, level, closed=True)
        edge_keys = [k for k in m if k[0] == "E"]
        for i, k1 in enumerate(edge_keys):
            for k2 in edge_keys[i + 1 :]:
                if np.any(m[k1] & m[k2]):
                    raise GeometryError(f"eps too large: edge neighborhoods {k1[1]} and {k2[1]} overlap")
        for c in g.corners:
            for i, e1 in enumerate(c.edges):
                for e2 in c.edges[i + 1 :]:
                    if np.any(m[("CE", c.id, e1)] & m[("CE", c.id, e2)]):
                        raise GeometryError(
                            f"eps too large: edge-vertex neighborhoods ({c.id},{e1}) and "
                            f"({c.id},{e2}) overlap"
                        )

    def sample_points(self, n: int = 4000, seed: int = 0) -> np.ndarray:
        """Random points of the domain, half of them concentrated near corners and edges."""
        g = self.geometry
        rng = np.random.default_rng(seed)
        lo, hi = g.bounding_box()
        pts = lo + (hi - lo) * rng.random((4 * n, g.dimension))
        near = []
        for c in g.corners:
            d = rng.normal(size=(n // max(1, len(g.corners)) + 1, g.dimension))
            d /= np.linalg.norm(d, axis=1)[:, None]
            r = 1.5 * self.eps_large * rng.random(len(d)) ** (1 / g.dimension)
            near.append(c.point + r[:, None] * d)
        for e in g.edges:
            k = n // max(1, len(g.edges)) + 1
            t = rng.random(k)
            d = rng.normal(size=(k, 3))
            d -= np.outer(d @ e.direction, e.direction)
            d /= np.linalg.norm(d, axis=1)[:, None]
            r = self.eps_large**2 * rng.random(k)
            near.append(e.a + t[:, None] * (e.b - e.a) + r[:, None] * d)
        allp = np.vstack([pts] + near)
        return allp[g.contains(allp)]


def decompose_neighborhoods(geom: PolytopeGeometry, eps=None, eps_large=None, eps_small=None,
                            check: bool = True, n_samples: int = 4000) -> NeighborhoodDecomposition:
    """Build the neighborhood decomposition; ``eps`` defaults to a quarter of the
    smallest corner-to-corner distance, ``eps' = 1.2 eps`` and ``eps'' = 0.8 eps``."""
    if eps is None:
        cp = geom.corner_points
        d = np.linalg.norm(cp[:, None] - cp[None], axis=-1)
        d = d[d > 1e-14]
        eps = 0.25 * float(d.min())
    eps_large = 1.2 * eps if eps_large is None else eps_large
    eps_small = 0.8 * eps if eps_small is None else eps_small
    if not 0 < eps_small < eps < eps_large:
        raise GeometryError("need 0 < eps'' < eps < eps'")
    dec = NeighborhoodDecomposition(geom, float(eps), float(eps_large), float(eps_small))
    if check:
        pts = dec.sample_points(n_samples)
        for level in ("base", "large", "small"):
            dec.check_disjoint(pts, level)
    return dec


# -- dyadic covers -----------------------------------------------------------


@dataclass(frozen=True)
class DyadicCell:
    """One cell ``2**-mu * (V_hat + shift)`` of a dyadic cover (local coordinates)."""

    mu: int
    nu: int = 0

    @property
    def scale(self) -> float:
        return 2.0 ** (-self.mu)

    @property
    def axial_shift(self) -> float:
        return self.nu / 2.0


@dataclass(frozen=True)
class DyadicCover:
    """Dyadic cover of a canonical corner sector, 3D corner cone, wedge or edge-vertex cone.

    Coordinates are local: the corner sits at the origin, the sector/wedge
    occupies ``0 < theta < omega`` in the first two coordinates and the wedge or
    edge-vertex edge runs along the last axis.  ``delta`` widens the reference
    cell to the primed (overlapping) version.
    """

    kind: str
    mu_max: int
    omega: float = 2 * math.pi
    delta: float = 0.0
    eps: float = 1.0
    cells: tuple[DyadicCell, ...] = ()

    @property
    def multiplicity_bound(self) -> int:
        return 12 if self.kind == "wedge" else 3

    def _in_reference(self, q: np.ndarray) -> np.ndarray:
        d = self.delta
        if self.kind in ("sector", "cone"):
            r = np.linalg.norm(q, axis=1)
            m = (r > 0.25 - d) & (r < 1 + d)
        elif self.kind == "wedge":
            r = np.linalg.norm(q[:, :2], axis=1)
            m = (r > 0.25 - d) & (r < 1 + d) & (np.abs(q[:, 2]) < 0.5 + d)
        elif self.kind == "edge-vertex":
            e = self.eps
            r = np.linalg.norm(q, axis=1)
            re = np.where(q[:, 2] > 0, np.linalg.norm(q[:, :2], axis=1), r)
            with np.errstate(divide="ignore", invalid="ignore"):
                rho = np.where(r > 0, re / r, 0.0)
            m = (r > e / 4 * (1 - d)) & (r < e * (1 + d)) & (rho < e * (1 + d))
        else:
            raise ValueError(self.kind)
        if self.kind in ("sector", "wedge"):
            th = np.mod(np.arctan2(q[:, 1], q[:, 0]), 2 * math.pi)
            m &= th <= self.omega
        return m

    def cell_contains(self, cell: DyadicCell, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        q = p / cell.scale
        if self.kind == "wedge":
            q = q.copy()
            q[:, 2] -= cell.axial_shift
        return self._in_reference(q)

    def multiplicity(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        count = np.zeros(len(p), dtype=int)
        for cell in self.cells:
            count += self.cell_contains(cell, p)
        return count

    def radii(self, cell: DyadicCell) -> tuple[float, float]:
        """Inner and outer radius of a (radial) cell."""
        lo, hi = (self.eps / 4, self.eps) if self.kind == "edge-vertex" else (0.25, 1.0)
        return lo * cell.scale, hi * cell.scale

    def axial_interval(self, cell: DyadicCell) -> tuple[float, float]:
        c = cell.scale * cell.axial_shift
        return c - 0.5 * cell.scale, c + 0.5 * cell.scale


def dyadic_cover(kind: str, mu_max: int, omega: float = 2 * math.pi, delta: float = 0.0,
                 eps: float = 1.0) -> DyadicCover:
    """Enumerate the dyadic cells ``2**-mu V_hat`` (wedges: ``|nu| < 2**(mu+1)``) up to ``mu_max``."""
    if mu_max < 0:
        raise ValueError("mu_max must be >= 0")
    if kind not in ("sector", "cone", "wedge", "edge-vertex"):
        raise ValueError(f"unknown dyadic region kind {kind!r}")
    cells = []
    for mu in range(mu_max + 1):
        if kind == "wedge":
            for nu in range(-(2 ** (mu + 1)) + 1, 2 ** (mu + 1)):
                cells.append(DyadicCell(mu, nu))
        else:
            cells.append(DyadicCell(mu))
    return DyadicCover(kind, mu_max, omega=omega, delta=delta, eps=eps, cells=tuple(cells))
