"""Weighted seminorms by dyadic quadrature, divergence detection and analytic fits.

Every domain is cut into apex cells: a cell is refined toward one corner
(or one edge) in dyadic layers ``2^{-mu-1} < s < 2^{-mu}``, each layer
integrated with a tensor Gauss-Legendre rule.  Layer contributions
``A_mu`` are summed until they become geometric, then the tail
``A q / (1 - q)`` is added.  A layer ratio that stays at or above
``1 - 1e-3`` for eight consecutive layers means the integral diverges.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .fields import DifferentiableField, ZeroField, multi_indices
from .geometry import PolytopeGeometry
from .weights import WeightMultiExponent, kappa

__all__ = [
    "Diverged",
    "QuadratureError",
    "Sector",
    "PolygonDomain",
    "Wedge",
    "SeminormSequence",
    "AnalyticFitReport",
    "ShiftCheckReport",
    "NormEvaluation",
    "weighted_integrals",
    "k_seminorm",
    "k_norm",
    "j_seminorm",
    "j_norm",
    "step_weighted_norm",
    "m_seminorm",
    "n_norm",
    "flagged_norm",
    "seminorm_sequence",
    "analytic_fit",
    "shift_constant_check",
    "exponent_audit",
    "is_finite",
    "SPACES",
]

GAUSS_ORDER = 12
DIVERGENCE_RATIO = 1 - 1e-3
DIVERGENCE_RUN = 8
#: refinement stops once a layer carries this many live panels
MAX_PANELS = 4096
_CHUNK = 256
MAX_LEVELS_2D = 60
MAX_LEVELS_3D = 40
SPACES = ("K", "J", "step", "M", "N", "Jflag", "Nflag")


class QuadratureError(RuntimeError):
    """The layer sums did not settle within the level cap (not a divergence verdict)."""


@dataclass(frozen=True)
class Diverged:
    """Explicit marker for an infinite weighted norm."""

    level: int
    ratio: float
    cell: int = -1

    def __repr__(self):
        return f"Diverged(level={self.level}, ratio={self.ratio:.6g})"

    def to_dict(self) -> dict:
        return {"diverged": True, "level": self.level, "ratio": self.ratio}


def is_finite(v) -> bool:
    return not isinstance(v, Diverged)


@lru_cache(maxsize=None)
def _gauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1), 0.5 * w


def _panel_rule(n_panels: int, order: int = GAUSS_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss rule on (0, 1)."""
    x, w = _gauss(order)
    k = np.arange(n_panels)[:, None]
    return ((k + x[None, :]) / n_panels).ravel(), np.tile(w / n_panels, n_panels)


# ----------------------------------------------------------------------------
# apex cells
# ----------------------------------------------------------------------------

# Gauss-Kronrod 7/15 pair on (-1, 1)
_XK = np.array([0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                0.207784955007898467600689403773245, 0.0])
_WK = np.array([0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                0.204432940075298892414161999234649, 0.209482141084727828012999174891714])
_WG = np.array([0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                0.381830050505118944950369775488975, 0.417959183673469387755102040816327])


def _kronrod01():
    x = np.concatenate([-_XK[:-1], [0.0], _XK[:-1][::-1]])
    wk = np.concatenate([_WK[:-1], [_WK[-1]], _WK[:-1][::-1]])
    wg = np.zeros(15)
    gauss_pos = [1, 3, 5, 7, 9, 11, 13]
    wg[gauss_pos] = np.concatenate([_WG[:-1], [_WG[-1]], _WG[:-1][::-1]])
    return 0.5 * (x + 1), 0.5 * wk, 0.5 * wg


_KX, _KW, _GW = _kronrod01()
_KW2 = np.outer(_KW, _KW).ravel()
_GW2 = np.outer(_GW, _GW).ravel()


@dataclass
class Layer:
    """Quadrature nodes of one dyadic layer, as offsets from ``base``."""

    offsets: np.ndarray
    base: np.ndarray
    weights: np.ndarray
    corner_dist: np.ndarray  # (n_corners, n)
    edge_dist: np.ndarray  # (n_edges, n)


class _Cell:
    """A region parametrized by ``(s, t)`` with the singular entity at ``s = 0``.

    Subclasses provide :meth:`map` (parameters to offsets, Jacobian and
    distances) and the initial number of angular panels.
    """

    max_levels = MAX_LEVELS_2D
    n_t = 1
    adaptive = True

    def s_range(self, mu: int) -> tuple[float, float]:
        lo = 2.0 ** (-mu - 1)
        return lo, 2 * lo

    def map(self, S: np.ndarray, T: np.ndarray):
        raise NotImplementedError

    def layer(self, mu: int, order: int = GAUSS_ORDER) -> Layer:
        """Fixed tensor Gauss layer (used for inspection and by non-adaptive cells)."""
        lo, hi = self.s_range(mu)
        xs, ws = _gauss(order)
        xt, wt = _panel_rule(self.n_t, order)
        S, T = np.meshgrid(lo + (hi - lo) * xs, xt, indexing="ij")
        W = np.outer((hi - lo) * ws, wt).ravel()
        off, jac, dc, de = self.map(S.ravel(), T.ravel())
        return Layer(off, self.base, W * jac, dc, de)


def _other_distances(points: np.ndarray, pts: np.ndarray) -> np.ndarray:
    if len(pts) == 0:
        return np.zeros((0, len(points)))
    return np.linalg.norm(points[None, :, :] - pts[:, None, :], axis=-1)


class _SectorCell(_Cell):
    def __init__(self, center, theta0, omega, radius, corner_index, corner_points):
        self.base = np.asarray(center, float)
        self.theta0, self.omega, self.radius = theta0, omega, radius
        self.ci = corner_index
        self.corner_points = corner_points
        self.n_t = max(1, math.ceil(omega / (math.pi / 8) - 1e-12))

    #: bisect only in ``s`` (integrand varies with the radius alone up to smooth angular factors)
    radial_only = False

    def map(self, S, T):
        R = self.radius * S
        th = self.theta0 + self.omega * T
        off = np.stack([R * np.cos(th), R * np.sin(th)], axis=1)
        jac = self.radius**2 * self.omega * S
        dc = _other_distances(self.base + off, self.corner_points)
        dc[self.ci] = R
        return off, jac, dc, np.zeros((0, len(S)))


class _TriangleCell(_Cell):
    """Duffy image ``x = A + s((1-t)(P-A) + t(Q-A))`` refined toward the apex ``A``."""

    def __init__(self, apex, p, q, corner_index, corner_points):
        self.base = np.asarray(apex, float)
        self.dp = np.asarray(p, float) - self.base
        self.dq = np.asarray(q, float) - self.base
        self.jac = abs(self.dp[0] * self.dq[1] - self.dp[1] * self.dq[0])
        ang = math.acos(np.clip(self.dp @ self.dq / (np.linalg.norm(self.dp) * np.linalg.norm(self.dq)), -1, 1))
        self.n_t = max(1, math.ceil(ang / (math.pi / 8) - 1e-12))
        self.ci = corner_index
        self.corner_points = corner_points

    def map(self, S, T):
        dirs = (1 - T)[:, None] * self.dp[None, :] + T[:, None] * self.dq[None, :]
        off = S[:, None] * dirs
        dc = _other_distances(self.base + off, self.corner_points)
        if self.ci is not None:
            dc[self.ci] = S * np.linalg.norm(dirs, axis=1)
        return off, S * self.jac, dc, np.zeros((0, len(S)))


class _WedgeCell(_Cell):
    """Sector ``{r < R, theta0 < theta < theta0 + omega}`` times ``z0 < z < z1``, refined in ``r``.

    The integrands here are products of a homogeneous transverse factor and
    an entire axial profile, so a fixed tensor rule per layer is used.
    """

    max_levels = MAX_LEVELS_3D
    adaptive = False

    def __init__(self, center, theta0, omega, radius, z0, z1, edge_index, n_edges):
        self.base = np.array([center[0], center[1], 0.0])
        self.theta0, self.omega, self.radius = theta0, omega, radius
        self.z0, self.z1 = z0, z1
        self.ei, self.n_edges = edge_index, n_edges
        n_ang = max(1, math.ceil(omega / (math.pi / 8) - 1e-12))
        self._t, self._wt = _panel_rule(n_ang, 8)
        nz = max(1, math.ceil((z1 - z0) / 0.5 - 1e-12))
        self._z, self._wz = _panel_rule(nz, 8)
        self._s, self._ws = _gauss(GAUSS_ORDER)

    def layer(self, mu, order=None):
        lo = self.radius * 2.0 ** (-mu - 1)
        r = lo + lo * self._s
        th = self.theta0 + self.omega * self._t
        L = self.z1 - self.z0
        z = self.z0 + L * self._z
        R, T, Z = np.meshgrid(r, th, z, indexing="ij")
        W = (lo * self._ws)[:, None, None] * (self.omega * self._wt)[None, :, None] * (L * self._wz)[None, None, :]
        W = (W * R).ravel()
        R, T, Z = R.ravel(), T.ravel(), Z.ravel()
        off = np.stack([R * np.cos(T), R * np.sin(T), Z], axis=1)
        de = np.ones((self.n_edges, len(R)))
        de[self.ei] = R
        return Layer(off, self.base, W, np.zeros((0, len(R))), de)


def _integrate_layer(cell: _Cell, mu: int, F, nq: int, rtol: float = 1e-8, max_depth: int = 9):
    """Integrate the per-point quantity matrix ``F(layer) -> (nq, n)`` over layer ``mu``.

    Non-adaptive cells use their fixed rule.  Otherwise tensor Gauss-Kronrod
    7/15 panels are bisected in both parameters until each panel's error
    estimate is below its share of ``rtol`` times the layer integral.
    """
    if not cell.adaptive:
        lay = cell.layer(mu)
        return F(lay) @ lay.weights, True
    lo, hi = cell.s_range(mu)
    nt = cell.n_t
    panels = np.array([[lo, hi, k / nt, (k + 1) / nt] for k in range(nt)])
    area0 = (hi - lo)
    accepted = np.zeros(nq)
    ok = True
    depth = 0
    while len(panels):
        P = len(panels)
        ds = panels[:, 1] - panels[:, 0]
        dt = panels[:, 3] - panels[:, 2]
        S = panels[:, 0, None] + ds[:, None] * _KX[None, :]
        T = panels[:, 2, None] + dt[:, None] * _KX[None, :]
        K = np.empty((nq, P))
        G = np.empty((nq, P))
        A = np.empty((nq, P))
        for c0 in range(0, P, _CHUNK):
            sl = slice(c0, min(P, c0 + _CHUNK))
            SS = np.repeat(S[sl], 15, axis=1).ravel()
            TT = np.tile(T[sl], (1, 15)).ravel()
            off, jac, dc, de = cell.map(SS, TT)
            vals = F(Layer(off, cell.base, np.ones(len(SS)), dc, de)) * jac[None, :]
            vals = vals.reshape(nq, -1, 225)
            K[:, sl] = vals @ _KW2
            G[:, sl] = vals @ _GW2
            A[:, sl] = np.abs(vals) @ _KW2
        scale = (ds * dt)[None, :]
        K *= scale
        G *= scale
        A *= scale
        raw = np.abs(K - G)
        with np.errstate(divide="ignore", invalid="ignore"):
            err = np.where(A > 0, A * np.minimum(1.0, (200 * raw / A) ** 1.5), raw)
        est = accepted + K.sum(axis=1)
        share = (ds * dt) / area0
        tol = rtol * np.abs(est)[:, None] * share[None, :] + 1e-300
        # below ~50 ulps of the panel's absolute integral the estimate is round-off
        tol = np.maximum(tol, 50 * np.finfo(float).eps * A)
        good = np.all(err <= tol, axis=0)
        if depth >= max_depth or len(panels) > MAX_PANELS:
            good[:] = True
            if not np.all(err <= tol):
                ok = False
        accepted += K[:, good].sum(axis=1)
        bad = panels[~good]
        if not len(bad):
            break
        sm = 0.5 * (bad[:, 0] + bad[:, 1])
        tm = 0.5 * (bad[:, 2] + bad[:, 3])
        if getattr(cell, "radial_only", False):
            panels = np.concatenate([
                np.stack([bad[:, 0], sm, bad[:, 2], bad[:, 3]], 1),
                np.stack([sm, bad[:, 1], bad[:, 2], bad[:, 3]], 1),
            ])
            depth += 1
            continue
        panels = np.concatenate([
            np.stack([bad[:, 0], sm, bad[:, 2], tm], 1),
            np.stack([sm, bad[:, 1], bad[:, 2], tm], 1),
            np.stack([bad[:, 0], sm, tm, bad[:, 3]], 1),
            np.stack([sm, bad[:, 1], tm, bad[:, 3]], 1),
        ])
        depth += 1
    return accepted, ok


# ----------------------------------------------------------------------------
# domains
# ----------------------------------------------------------------------------

class _Domain:
    dim: int
    corner_points: np.ndarray
    edge_axes: tuple = ()
    name: str = "domain"

    @property
    def n_corners(self) -> int:
        return len(self.corner_points)

    @property
    def n_edges(self) -> int:
        return len(self.edge_axes)

    def cells(self) -> list[_Cell]:
        raise NotImplementedError

    def bind(self, beta) -> tuple[np.ndarray, np.ndarray]:
        """Per-corner and per-edge exponent arrays from a float, sequence pair or multi-exponent."""
        if isinstance(beta, WeightMultiExponent):
            bc = np.asarray(beta.corners, float)
            be = np.asarray(beta.edges, float)
        elif isinstance(beta, (int, float)):
            bc = np.full(self.n_corners, float(beta))
            be = np.full(self.n_edges, float(beta))
        else:
            bc, be = (np.asarray(b, float) for b in beta)
        if bc.shape != (self.n_corners,) or be.shape != (self.n_edges,):
            raise ValueError(
                f"weight needs {self.n_corners} corner and {self.n_edges} edge entries for {self.name}"
            )
        return bc, be


class Sector(_Domain):
    """Plane sector ``{0 < r < radius, theta0 < theta < theta0 + omega}`` with one corner."""

    def __init__(self, omega: float, radius: float = 1.0, center=(0.0, 0.0), theta0: float = 0.0):
        if not 0 < omega <= 2 * math.pi + 1e-14:
            raise ValueError("opening must lie in (0, 2pi]")
        self.dim = 2
        self.omega, self.radius, self.theta0 = float(omega), float(radius), float(theta0)
        self.center = np.asarray(center, float)
        self.corner_points = self.center[None, :]
        self.name = f"sector(omega={self.omega:.6g}, R={self.radius:.6g})"

    def cells(self):
        return [_SectorCell(self.center, self.theta0, self.omega, self.radius, 0, self.corner_points)]

    def scaled(self, t: float) -> "Sector":
        return Sector(self.omega, self.radius * t, self.center, self.theta0)

    def area(self) -> float:
        return 0.5 * self.omega * self.radius**2


def _ear_clip(pts: np.ndarray) -> list[tuple[int, int, int]]:
    """Triangulate a counter-clockwise, possibly weakly simple, polygon."""
    idx = list(range(len(pts)))
    tris = []

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * len(pts) ** 2:
            raise ValueError("ear clipping failed; polygon is not simple")
        n = len(idx)
        clipped = False
        for k in range(n):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % n]
            a, b, c = pts[i0], pts[i1], pts[i2]
            if cross(a, b, c) <= 1e-14:
                continue
            ok = True
            for j in idx:
                p = pts[j]
                if any(np.allclose(p, v, atol=1e-14) for v in (a, b, c)):
                    continue
                if cross(a, b, p) >= -1e-14 and cross(b, c, p) >= -1e-14 and cross(c, a, p) >= -1e-14:
                    ok = False
                    break
            if ok:
                tris.append((i0, i1, i2))
                idx.pop(k)
                clipped = True
                break
        if not clipped:
            raise ValueError("ear clipping found no ear; polygon is not simple")
    tris.append(tuple(idx))
    return tris


class PolygonDomain(_Domain):
    """A polygon split into apex cells, each touching exactly one polygon vertex.

    Every ear of the loop is cut at its centroid and edge midpoints into six
    triangles, each refined toward its own vertex.  Corners that share a
    point (both visits of a slit end) carry one weight factor.
    """

    def __init__(self, geom: PolytopeGeometry):
        if geom.dimension != 2:
            raise ValueError("PolygonDomain needs a 2D geometry")
        if len(geom.loops) != 1:
            raise NotImplementedError("polygons with holes are not supported by the quadrature")
        self.geom = geom
        self.dim = 2
        self.name = geom.name or "polygon"
        loop = geom.loops[0]
        self._loop_pts = geom.vertices[list(loop)]
        # one weight point per distinct vertex
        self.vertex_ids = sorted(set(loop), key=list(loop).index)
        self.corner_points = geom.vertices[self.vertex_ids]
        self._corner_of_vertex = {v: i for i, v in enumerate(self.vertex_ids)}

    def bind(self, beta):
        if isinstance(beta, WeightMultiExponent):
            per_vertex = {}
            for c in self.geom.corners:
                b = beta.corners[c.id]
                if c.vertex in per_vertex and per_vertex[c.vertex] != b:
                    raise ValueError(f"corners at vertex {c.vertex} carry different weights")
                per_vertex[c.vertex] = b
            return np.array([per_vertex[v] for v in self.vertex_ids]), np.zeros(0)
        return super().bind(beta)

    def cells(self):
        loop = self.geom.loops[0]
        pts = self._loop_pts
        out = []
        for tri in _ear_clip(pts):
            P = pts[list(tri)]
            g = P.mean(axis=0)
            for k in range(3):
                a = P[k]
                ci = self._corner_of_vertex[loop[tri[k]]]
                for other in (P[(k + 1) % 3], P[(k - 1) % 3]):
                    mid = 0.5 * (a + other)
                    out.append(_TriangleCell(a, mid, g, ci, self.corner_points))
        return out

    def restrict(self, disk):
        """Equivalent one-cell domain for integrands supported in ``disk``, or ``self``.

        When the closed disk is centered at a vertex visited once and meets
        only the two sides there, its intersection with the polygon is the
        corner sector, which polar cells integrate with shells aligned to
        radial cutoffs.
        """
        if disk is None:
            return self
        center, rad = np.asarray(disk[0], float), float(disk[1])
        loop = list(self.geom.loops[0])
        hits = [c for c in self.geom.corners if np.allclose(c.point, center, atol=1e-14)]
        if len(hits) != 1:
            return self
        c = hits[0]
        pts = self._loop_pts
        k = loop.index(c.vertex)
        n = len(loop)
        for j in range(n):
            a, b = pts[j], pts[(j + 1) % n]
            if j in (k, (k - 1) % n):
                if np.linalg.norm(b - a) <= rad * (1 + 1e-12):
                    return self
                continue
            if _segment_distance(center, a, b) <= rad * (1 + 1e-12):
                return self
        ci = self._corner_of_vertex[c.vertex]
        return _RestrictedPolygon(self, _SectorCell(c.point, c.theta0, c.opening, rad, ci, self.corner_points))

    def area(self) -> float:
        p = self._loop_pts
        return 0.5 * float(np.sum(p[:, 0] * np.roll(p[:, 1], -1) - np.roll(p[:, 0], -1) * p[:, 1]))


def _segment_distance(p, a, b) -> float:
    d = b - a
    t = np.clip((p - a) @ d / (d @ d), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * d)))


class _RestrictedPolygon(_Domain):
    """A polygon seen through one corner sector holding the integrand's support."""

    def __init__(self, parent: PolygonDomain, cell: _SectorCell):
        self.parent = parent
        self.dim = 2
        self.corner_points = parent.corner_points
        self.name = parent.name
        cell.radial_only = True
        self._cell = cell

    def bind(self, beta):
        return self.parent.bind(beta)

    def cells(self):
        return [self._cell]


class Wedge(_Domain):
    """Model wedge ``K x (z0, z1)`` with its edge on the ``x3`` axis; the only singular entity is the edge."""

    def __init__(self, omega: float, radius: float = 1.0, z0: float = 0.0, z1: float = 1.0,
                 theta0: float = 0.0):
        self.dim = 3
        self.omega, self.radius = float(omega), float(radius)
        self.z0, self.z1, self.theta0 = float(z0), float(z1), float(theta0)
        self.corner_points = np.zeros((0, 3))
        self.edge_axes = (2,)
        self.name = f"wedge(omega={self.omega:.6g})"

    def cells(self):
        return [_WedgeCell((0.0, 0.0), self.theta0, self.omega, self.radius, self.z0, self.z1, 0, 1)]


# ----------------------------------------------------------------------------
# weight exponents per space
# ----------------------------------------------------------------------------

def _exponents(space, alpha, n, bc, be, edge_axes, flag_c, flag_e):
    a = sum(alpha)
    aperp = np.array([a - alpha[ax] for ax in edge_axes], dtype=float)
    if space == "K":
        return bc + a, be + a
    if space == "J":
        return bc + n, be + n
    if space == "step":
        return np.maximum(bc + a, 0), np.maximum(be + a, 0)
    if space == "M":
        return bc + a, be + aperp
    if space == "N":
        return np.maximum(bc + a, 0), np.maximum(be + aperp, 0)
    if space == "Jflag":
        return np.where(flag_c, bc + a, bc + n), np.where(flag_e, be + a, be + n)
    if space == "Nflag":
        return (np.where(flag_c, bc + a, np.maximum(bc + a, 0)),
                np.where(flag_e, be + aperp, np.maximum(be + aperp, 0)))
    raise ValueError(f"unknown space {space!r}; expected one of {SPACES}")


# ----------------------------------------------------------------------------
# layer summation
# ----------------------------------------------------------------------------

class _Series:
    """Running sum of layer contributions with the stopping rules."""

    def __init__(self, rtol=1e-13):
        self.terms: list[float] = []
        self.ratios: list[float] = []
        self.total = 0.0
        self.comp = 0.0
        self.done = False
        self.result = None
        self.tail = 0.0
        self.rtol = rtol
        self.zero_run = 0
        self.high_run = 0

    def _add(self, a):
        y = a - self.comp
        t = self.total + y
        self.comp = (t - self.total) - y
        self.total = t

    def push(self, a: float) -> None:
        mu = len(self.terms)
        prev = self.terms[-1] if self.terms else None
        self.terms.append(a)
        self._add(a)
        if a == 0.0:
            self.zero_run += 1
            self.high_run = 0
            if self.zero_run >= 3 and mu >= 3:
                self._finish(self.total)
            return
        self.zero_run = 0
        if prev is None or prev == 0.0:
            return
        q = a / prev
        self.ratios.append(q)
        self.high_run = self.high_run + 1 if q >= DIVERGENCE_RATIO else 0
        if self.high_run >= DIVERGENCE_RUN:
            self.done = True
            self.result = Diverged(mu, q)
            return
        if mu < 4 or len(self.ratios) < 3 or q >= DIVERGENCE_RATIO:
            return
        q1, q2 = self.ratios[-2], self.ratios[-1]
        # layers approach a geometric sequence with ratio error ~ 2^{-mu}
        q_est = 2 * q2 - q1 if abs(q2 - q1) < 0.05 else q2
        q_est = min(max(q_est, 0.0), DIVERGENCE_RATIO)
        tail = a * q_est / (1 - q_est)
        err = a * abs(q2 - q1) / (1 - q_est) ** 2 + a * 1e-16
        if err <= self.rtol * (self.total + tail):
            self.tail = tail
            self._finish(self.total + tail)

    def _finish(self, value):
        self.done = True
        self.result = value

    def close(self, strict: bool) -> float | Diverged:
        if not self.done:
            if strict:
                raise QuadratureError(
                    f"layer sums not settled after {len(self.terms)} layers (last ratios {self.ratios[-3:]})"
                )
            q = self.ratios[-1] if self.ratios else 0.0
            tail = self.terms[-1] * q / (1 - q) if 0 <= q < 1 else 0.0
            return self.total + tail
        return self.result


@dataclass
class NormEvaluation:
    """Squared weighted integrals per quantity plus layer diagnostics."""

    values: list  # float (squared) or Diverged
    levels: list[int]
    ratios: list[list[float]]
    converged: bool


def weighted_integrals(u: DifferentiableField, domain: _Domain, beta, quantities: Sequence[Sequence[tuple]],
                       space: str = "K", n: int | None = None, flagged_corners=None,
                       flagged_edges=None, strict: bool = False, rtol: float = 1e-13,
                       layer_rtol: float = 1e-8) -> NormEvaluation:
    """Squared weighted L2 integrals ``sum_{alpha in Q} int w_alpha^2 |d^alpha u|^2`` for each set ``Q``.

    The weight ``w_alpha`` is the product over corners of ``r_c^{e_c}`` and over
    edges of ``(r_e / r_C)^{e_e}``, with exponents chosen by ``space``.
    """
    if space not in SPACES:
        raise ValueError(f"unknown space {space!r}; expected one of {SPACES}")
    if u.dim != domain.dim:
        raise ValueError(f"{u.dim}D field on a {domain.dim}D domain")
    if hasattr(domain, "restrict"):
        domain = domain.restrict(u.support_disk())
    bc, be = domain.bind(beta)
    flag_c = np.zeros(domain.n_corners, bool)
    flag_e = np.zeros(domain.n_edges, bool)
    for i in flagged_corners or ():
        flag_c[i] = True
    for i in flagged_edges or ():
        flag_e[i] = True
    quantities = [list(dict.fromkeys(tuple(a) for a in q)) for q in quantities]
    all_alpha = list(dict.fromkeys(a for q in quantities for a in q))
    if n is None:
        n = max((sum(a) for a in all_alpha), default=0)
    exps = {a: _exponents(space, a, n, bc, be, domain.edge_axes, flag_c, flag_e) for a in all_alpha}
    zero = isinstance(u, ZeroField)
    totals: list = [0.0] * len(quantities)
    levels = [0] * len(quantities)
    ratios: list[list[float]] = [[] for _ in quantities]
    converged = True
    for ci, cell in enumerate(domain.cells()):
        series = [_Series(rtol) for _ in quantities]
        for mu in range(cell.max_levels):
            live = [k for k, s in enumerate(series) if not s.done]
            if not live:
                break
            need = list(dict.fromkeys(a for k in live for a in quantities[k]))

            def F(lay, live=live, need=need):
                npts = len(lay.weights)
                if zero:
                    return np.zeros((len(live), npts))
                derivs = u._derivatives(lay.offsets, need, lay.base)
                logc = np.log(lay.corner_dist) if domain.n_corners else None
                if domain.n_edges:
                    rC = lay.corner_dist.min(axis=0) if domain.n_corners else 1.0
                    loge = np.log(lay.edge_dist / rC)
                wcache = {}
                out = np.zeros((len(live), npts))
                for row, k in enumerate(live):
                    for a in quantities[k]:
                        ec, ee = exps[a]
                        key = (tuple(ec), tuple(ee))
                        if key not in wcache:
                            lw = np.zeros(npts)
                            if domain.n_corners:
                                lw += ec @ logc
                            if domain.n_edges:
                                lw += ee @ loge
                            wcache[key] = np.exp(lw)
                        v = wcache[key] * derivs[a]
                        out[row] += v * v
                return out

            vals, ok = _integrate_layer(cell, mu, F, len(live), rtol=layer_rtol)
            if not ok:
                converged = False
            for row, k in enumerate(live):
                series[k].push(float(vals[row]))
        for k, s in enumerate(series):
            if not s.done:
                converged = False
            val = s.close(strict)
            levels[k] = max(levels[k], len(s.terms))
            ratios[k] = s.ratios[-4:]
            if isinstance(totals[k], Diverged):
                continue
            if isinstance(val, Diverged):
                totals[k] = Diverged(val.level, val.ratio, ci)
            else:
                totals[k] += val
    return NormEvaluation(totals, levels, ratios, converged)


def _sqrt(v):
    return v if isinstance(v, Diverged) else math.sqrt(max(v, 0.0))


def _order_sets(dim, orders):
    return [multi_indices(dim, k) for k in orders]


def k_seminorm(u, domain, beta, m: int, **kw):
    """``|u|_{K; m, beta}``: weight ``r_c^{beta_c + |alpha|}`` (and ``(r_e/r_C)^{beta_e + |alpha|}``)."""
    _check_order(u, m)
    return _sqrt(weighted_integrals(u, domain, beta, _order_sets(domain.dim, [m]), "K", **kw).values[0])


def k_norm(u, domain, beta, m: int, **kw):
    _check_order(u, m)
    ev = weighted_integrals(u, domain, beta, _order_sets(domain.dim, range(m + 1)), "K", **kw)
    return _sum_norm(ev.values)


def j_seminorm(u, domain, beta, k: int, n: int, **kw):
    """Order-``k`` part of the ``J^n_beta`` norm: weight exponent ``beta + n`` for ``|alpha| = k``."""
    _check_order(u, k)
    return _sqrt(weighted_integrals(u, domain, beta, _order_sets(domain.dim, [k]), "J", n=n, **kw).values[0])


def j_norm(u, domain, beta, m: int, **kw):
    """``||u||_{J^m_beta}``: weight exponent ``beta + m`` for every ``|alpha| <= m``."""
    _check_order(u, m)
    q = [[a for k in range(m + 1) for a in multi_indices(domain.dim, k)]]
    return _sqrt(weighted_integrals(u, domain, beta, q, "J", n=m, **kw).values[0])


def _kappa_of(domain, beta) -> float:
    bc, be = domain.bind(beta)
    vals = list(-bc) + list(-be)
    return max(vals) if vals else -math.inf


def step_weighted_norm(u, domain, beta, m: int, anisotropic: bool = False, **kw):
    """Norm with weights ``r^{max(beta + |alpha|, 0)}`` (edge exponent uses ``|alpha_perp|`` if anisotropic).

    Equivalent to the ``J^m_beta`` norm when ``m >= kappa_beta``.
    """
    _check_order(u, m)
    kap = _kappa_of(domain, beta)
    if m < kap - 1e-12:
        raise ValueError(f"step-weighted norm needs m >= kappa_beta = {kap:g} (got m={m})")
    q = [[a for k in range(m + 1) for a in multi_indices(domain.dim, k)]]
    space = "N" if anisotropic else "step"
    return _sqrt(weighted_integrals(u, domain, beta, q, space, n=m, **kw).values[0])


def m_seminorm(u, domain, beta, m: int, **kw):
    """Anisotropic seminorm: edge weights use ``beta_e + |alpha_perp|``."""
    _check_order(u, m)
    return _sqrt(weighted_integrals(u, domain, beta, _order_sets(domain.dim, [m]), "M", **kw).values[0])


def n_norm(u, domain, beta, m: int, **kw):
    return step_weighted_norm(u, domain, beta, m, anisotropic=True, **kw)


def flagged_norm(u, domain, beta, m: int, flagged_corners=(), flagged_edges=(), kind: str = "J", **kw):
    """``J^m_beta(C0, E0)`` or ``N^m_beta(C0, E0)`` norm; flagged entities take ``|alpha|``-dependent exponents."""
    _check_order(u, m)
    if kind not in ("J", "N"):
        raise ValueError("kind must be 'J' or 'N'")
    if kind == "N":
        bc, be = domain.bind(beta)
        unflagged = [-b for i, b in enumerate(bc) if i not in set(flagged_corners)]
        unflagged += [-b for i, b in enumerate(be) if i not in set(flagged_edges)]
        if unflagged and m < max(unflagged) - 1e-12:
            raise ValueError(f"need m >= {max(unflagged):g} for the unflagged max-weights")
    q = [[a for k in range(m + 1) for a in multi_indices(domain.dim, k)]]
    return _sqrt(weighted_integrals(u, domain, beta, q, kind + "flag", n=m, flagged_corners=flagged_corners,
                                    flagged_edges=flagged_edges, **kw).values[0])


def _check_order(u, m):
    if m < 0:
        raise ValueError("order must be >= 0")
    if m > u.m_max:
        raise ValueError(f"order {m} exceeds the field's m_max={u.m_max}")


def _sum_norm(values):
    for v in values:
        if isinstance(v, Diverged):
            return v
    return math.sqrt(sum(values))


# ----------------------------------------------------------------------------
# sequences and fits
# ----------------------------------------------------------------------------

@dataclass
class SeminormSequence:
    """``s_m`` for ``m = 0..M`` in one space and weight."""

    values: list
    space: str
    beta: object
    domain: str
    levels: list[int] = field(default_factory=list)
    ratios: list = field(default_factory=list)

    @property
    def M(self) -> int:
        return len(self.values) - 1

    def finite(self) -> bool:
        return all(is_finite(v) for v in self.values)

    def to_dict(self) -> dict:
        return {
            "space": self.space,
            "beta": _beta_doc(self.beta),
            "domain": self.domain,
            "values": [v.to_dict() if isinstance(v, Diverged) else v for v in self.values],
            "levels": self.levels,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m", "s_m", "diverged"])
        for m, v in enumerate(self.values):
            if isinstance(v, Diverged):
                w.writerow([m, "", 1])
            else:
                w.writerow([m, repr(float(v)), 0])
        return buf.getvalue()


def _beta_doc(beta):
    if isinstance(beta, WeightMultiExponent):
        return beta.to_dict()
    if isinstance(beta, (int, float)):
        return float(beta)
    return [list(map(float, b)) for b in beta]


def seminorm_sequence(u, domain, beta, M: int = 12, space: str = "K", **kw) -> SeminormSequence:
    """All seminorms ``m = 0..M`` in one quadrature pass."""
    _check_order(u, M)
    if space in ("J", "Jflag", "step", "N", "Nflag"):
        raise ValueError("sequences are defined for the homogeneous spaces K and M")
    ev = weighted_integrals(u, domain, beta, _order_sets(domain.dim, range(M + 1)), space, **kw)
    return SeminormSequence([_sqrt(v) for v in ev.values], space, beta, domain.name, ev.levels, ev.ratios)


@dataclass
class AnalyticFitReport:
    """Cauchy-constant fit ``s_m <= C^{m+1} m!``."""

    C: float | None
    windows: dict
    drift: float | None
    member: bool
    per_order: list
    reason: str = ""

    def to_dict(self) -> dict:
        return {"C": self.C, "windows": {f"{a}-{b}": c for (a, b), c in self.windows.items()},
                "drift": self.drift, "member": self.member, "per_order": self.per_order,
                "reason": self.reason}


def analytic_fit(seq: SeminormSequence, windows=((4, 8), (8, 12)), drift_threshold: float = 0.10) -> AnalyticFitReport:
    """Fit ``C = max_m (s_m / m!)^{1/(m+1)}`` and compare it across windows of ``m``."""
    vals = seq.values
    if any(isinstance(v, Diverged) for v in vals):
        return AnalyticFitReport(None, {}, None, False, [], "diverged seminorm")
    if len(vals) < 6:
        raise ValueError("analytic_fit needs at least 6 seminorms")
    per = [(float(v) / math.factorial(m)) ** (1.0 / (m + 1)) if v > 0 else 0.0 for m, v in enumerate(vals)]
    wins = {}
    for a, b in windows:
        sel = [per[m] for m in range(a, min(b, len(per) - 1) + 1)]
        if sel:
            wins[(a, b)] = max(sel)
    C = max(per)
    if C == 0.0:
        return AnalyticFitReport(0.0, wins, 0.0, True, per, "zero field")
    ws = list(wins.values())
    if len(ws) >= 2 and ws[0] > 0:
        drift = abs(ws[-1] - ws[0]) / ws[0]
    else:
        drift = 0.0
    member = drift < drift_threshold
    return AnalyticFitReport(C, wins, drift, member, per, "" if member else "Cauchy constant drifts")


@dataclass
class ShiftCheckReport:
    """Smallest ``C_k`` with ``|u|_k / k! <= C_k^{k+1} (sum_{l<=k-2} |f|_l / l! + |u|_0 + |u|_1)``."""

    C: dict
    u_seminorms: list
    f_seminorms: list
    plateau_ratio: float | None
    bounded: bool

    def to_dict(self) -> dict:
        return {"C": {str(k): v for k, v in self.C.items()}, "u_seminorms": self.u_seminorms,
                "f_seminorms": self.f_seminorms, "plateau_ratio": self.plateau_ratio,
                "bounded": self.bounded}


def shift_constant_check(u, f, domain, beta, M: int = 12, plateau_at: int = 8, tol: float = 1.1,
                         **kw) -> ShiftCheckReport:
    """Evaluate the regularity-shift inequality for ``k = 2..M``; ``f`` is measured with weight ``beta + 2``."""
    su = seminorm_sequence(u, domain, beta, M, "K", **kw)
    bc, be = domain.bind(beta)
    fb = (bc + 2, be + 2)
    sf = seminorm_sequence(f, domain, fb, max(M - 2, 0), "K", **kw)
    if not (su.finite() and sf.finite()):
        raise ValueError("shift check needs finite seminorms of u and f")
    s_u = [float(v) for v in su.values]
    s_f = [float(v) for v in sf.values]
    C = {}
    for k in range(2, M + 1):
        lhs = s_u[k] / math.factorial(k)
        rhs = sum(s_f[l] / math.factorial(l) for l in range(0, k - 1)) + s_u[0] + s_u[1]
        if lhs == 0.0:
            C[k] = 0.0
        elif rhs == 0.0:
            C[k] = math.inf
        else:
            C[k] = (lhs / rhs) ** (1.0 / (k + 1))
    early = max((C[k] for k in C if k <= plateau_at), default=0.0)
    late = max(C.values(), default=0.0)
    ratio = None if early == 0.0 else late / early
    bounded = (late == 0.0) or (ratio is not None and math.isfinite(ratio) and ratio <= tol)
    return ShiftCheckReport(C, s_u, s_f, ratio, bounded)


# ----------------------------------------------------------------------------
# exponent audit
# ----------------------------------------------------------------------------

def exponent_audit(lam: float, beta: float, m: int, space: str = "K", profile: str = "sin",
                   dim: int = 3) -> bool:
    """Is the order-``m`` seminorm of ``r_e^lam phi(theta) g(x_par)`` finite near the edge?

    ``|d^alpha u| ~ r^{lam - |alpha_perp|}`` times ``g^{(|alpha_par|)}``; the weight is
    ``r^{beta + |alpha|}`` (K) or ``r^{beta + |alpha_perp|}`` (M), so the squared
    integrand against ``r dr`` is finite iff ``beta + lam + |alpha_par| > -1`` (K)
    or ``beta + lam > -1`` (M), over the multi-indices whose derivative is nonzero.
    """
    if space not in ("K", "M"):
        raise ValueError("audit covers K and M")
    if dim == 2:
        return lam + beta > -1
    for a_par in range(m + 1):
        if profile == "one" and a_par > 0:
            continue
        expo = beta + lam + (a_par if space == "K" else 0)
        if expo <= -1:
            return False
    return True
