"""Closed-form scalar fields with exact partial derivatives of every order.

Every field evaluates ``d^alpha u`` from recurrences, never from finite
differences, so seminorms of order 12 and beyond keep their factorial scale
right down to the corner.  Points are passed as an ``(n, dim)`` array; an
optional ``base`` point means the array holds offsets from ``base``, which
keeps the distance to a corner accurate at ``r ~ 1e-15``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .spectra2d import spectrum_kind

__all__ = [
    "CriticalExponentError",
    "DifferentiableField",
    "CornerSingular",
    "EdgeSingular3D",
    "AxialProfile",
    "Polynomial",
    "RadialCutoff",
    "ProductField",
    "SumField",
    "ScaledField",
    "PartialField",
    "LaplacianField",
    "ZeroField",
    "corner_singular",
    "edge_singular_3d",
    "radial_cutoff",
    "manufactured_pair",
    "membership_oracle",
    "multi_indices",
]


class CriticalExponentError(ValueError):
    """Integer singular exponent or integer weight: logarithmic case unsupported."""


@lru_cache(maxsize=None)
def multi_indices(dim: int, order: int) -> tuple[tuple[int, ...], ...]:
    """All multi-indices of length ``dim`` with ``|alpha| == order``, lexicographic descending."""
    if dim == 1:
        return ((order,),)
    out = []
    for a in range(order, -1, -1):
        for rest in multi_indices(dim - 1, order - a):
            out.append((a,) + rest)
    return tuple(out)


def _sub_indices(alpha):
    return itertools.product(*(range(a + 1) for a in alpha))


def _binom_multi(alpha, gamma) -> float:
    out = 1.0
    for a, g in zip(alpha, gamma):
        out *= math.comb(a, g)
    return out


class DifferentiableField:
    """Scalar field on R^dim exposing ``derivative(x, alpha)`` for ``|alpha| <= m_max``.

    Subclasses implement :meth:`_derivative` on absolute or offset coordinates.
    """

    dim: int = 2
    m_max: int = 64
    #: homogeneity degree about ``center`` when the field is homogeneous
    degree: float | None = None
    center: np.ndarray | None = None
    #: singular exponents carried by the field, for reports
    exponents: tuple = ()

    # -- to implement
    def _derivative(self, x: np.ndarray, alpha: tuple[int, ...], base: np.ndarray | None) -> np.ndarray:
        raise NotImplementedError

    # -- public API
    def derivative(self, x, alpha, base=None) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.dim or x.shape[1] != self.dim:
            raise ValueError(f"field is {self.dim}D, got alpha={alpha} and points of width {x.shape[1]}")
        if sum(alpha) > self.m_max:
            raise ValueError(f"derivative order {sum(alpha)} exceeds m_max={self.m_max}")
        if any(a < 0 for a in alpha):
            raise ValueError("negative multi-index")
        b = None if base is None else np.asarray(base, dtype=float)
        return self._derivative(x, alpha, b)

    def __call__(self, x, base=None) -> np.ndarray:
        return self.derivative(x, (0,) * self.dim, base)

    def jet(self, x, order: int, base=None) -> dict[tuple[int, ...], np.ndarray]:
        """All derivatives with ``|alpha| == order``."""
        return self.derivatives(x, multi_indices(self.dim, order), base)

    def derivatives(self, x, alphas: Iterable[tuple[int, ...]], base=None) -> dict:
        """Batch evaluation of several derivatives at the same points."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        b = None if base is None else np.asarray(base, dtype=float)
        alphas = [tuple(int(v) for v in a) for a in alphas]
        for a in alphas:
            if sum(a) > self.m_max:
                raise ValueError(f"derivative order {sum(a)} exceeds m_max={self.m_max}")
        return self._derivatives(x, alphas, b)

    def _derivatives(self, x, alphas, base) -> dict:
        return {a: self._derivative(x, a, base) for a in dict.fromkeys(alphas)}

    def support_disk(self):
        """``(center, radius)`` of a closed ball holding the support, or ``None``."""
        return None

    def _memo(self, x, base, alphas, compute) -> dict:
        """Derivatives of the last point batch are kept, since sums and products
        of the same factor ask for them repeatedly on identical points."""
        key = None if base is None else tuple(np.ravel(base))
        memo = self.__dict__.get("_last_batch")
        if memo is None or memo[0] is not x or memo[1] != key:
            memo = (x, key, {}, {})
            self.__dict__["_last_batch"] = memo
        store = memo[2]
        alphas = list(dict.fromkeys(alphas))
        missing = [a for a in alphas if a not in store]
        if missing:
            store.update(compute(missing, memo[3]))
        return {a: store[a] for a in alphas}

    def local(self, x, base, origin) -> np.ndarray:
        """Coordinates relative to ``origin`` from points given relative to ``base``."""
        if base is None:
            return x - origin
        shift = base - origin
        if not np.any(shift):
            return x
        return x + shift

    # -- algebra
    def __mul__(self, other):
        if isinstance(other, DifferentiableField):
            return ProductField(self, other)
        return ScaledField(self, float(other))

    __rmul__ = __mul__

    def __add__(self, other):
        return SumField([self, other])

    def __sub__(self, other):
        return SumField([self, ScaledField(other, -1.0)])


class ZeroField(DifferentiableField):
    def __init__(self, dim: int = 2):
        self.dim = dim
        self.m_max = 10**6
        self.degree = None

    def _derivative(self, x, alpha, base):
        return np.zeros(len(x))


# ----------------------------------------------------------------------------
# corner singular functions
# ----------------------------------------------------------------------------

def _falling(lam: float, n: int) -> float:
    out = 1.0
    for j in range(n):
        out *= lam - j
    return out


def _branch_angle(w: np.ndarray, omega: float) -> np.ndarray:
    """Argument of ``w`` in ``[omega/2 - pi, omega/2 + pi)``, whose cut avoids the open sector."""
    lo = omega / 2 - math.pi
    return lo + np.mod(np.angle(w) - lo, 2 * math.pi)


class CornerSingular(DifferentiableField):
    """``amp * Im`` or ``Re`` of ``(e^{-i theta0}(z - c))^lam``, i.e. ``r^lam sin(lam theta)`` or cos.

    ``part="im"`` vanishes on the side ``theta = 0``; ``part="re"`` has zero
    normal derivative there.  Harmonic away from the corner.
    """

    def __init__(self, center, omega: float, lam: float, part: str = "im", theta0: float = 0.0,
                 amplitude: float = 1.0, m_max: int = 40):
        if part not in ("im", "re"):
            raise ValueError("part must be 'im' or 're'")
        if abs(lam - round(lam)) < 1e-12:
            raise CriticalExponentError(
                f"exponent {lam} is an integer: logarithmic case unsupported"
            )
        self.dim = 2
        self.center = np.asarray(center, dtype=float)
        self.omega = float(omega)
        self.lam = float(lam)
        self.part = part
        self.theta0 = float(theta0)
        self.amplitude = float(amplitude)
        self.m_max = m_max
        self.degree = self.lam
        self.exponents = (self.lam,)

    def _derivative(self, x, alpha, base):
        y = self.local(x, base, self.center)
        w = np.exp(-1j * self.theta0) * (y[:, 0] + 1j * y[:, 1])
        n = alpha[0] + alpha[1]
        r = np.abs(w)
        phi = _branch_angle(w, self.omega)
        with np.errstate(divide="ignore", invalid="ignore"):
            pw = r ** (self.lam - n) * np.exp(1j * (self.lam - n) * phi)
        coef = self.amplitude * _falling(self.lam, n) * (1j ** alpha[1]) * np.exp(-1j * n * self.theta0)
        val = coef * pw
        return val.imag if self.part == "im" else val.real

    def _derivatives(self, x, alphas, base):
        def compute(missing, scratch):
            if "logr" not in scratch:
                y = self.local(x, base, self.center)
                w = np.exp(-1j * self.theta0) * (y[:, 0] + 1j * y[:, 1])
                scratch["logr"] = np.log(np.abs(w))
                scratch["phi"] = _branch_angle(w, self.omega)
                scratch["powers"] = {}
            powers = scratch["powers"]
            out = {}
            for alpha in missing:
                n = alpha[0] + alpha[1]
                if n not in powers:
                    e = self.lam - n
                    powers[n] = np.exp(e * scratch["logr"] + 1j * e * scratch["phi"])
                coef = self.amplitude * _falling(self.lam, n) * (1j ** alpha[1]) * np.exp(-1j * n * self.theta0)
                val = coef * powers[n]
                out[alpha] = val.imag if self.part == "im" else val.real
            return out
        return self._memo(x, base, alphas, compute)


def corner_singular(corner=None, omega: float | None = None, k: int = 1, bc="dirichlet",
                    center=None, theta0: float | None = None, amplitude: float = 1.0,
                    m_max: int = 40) -> CornerSingular:
    """k-th singular function ``r^lam phi_k(theta)`` of a 2D corner.

    ``corner`` may be a :class:`~cornerreg.geometry.Corner`, which supplies the
    position, opening, reference direction and side conditions.
    """
    if corner is not None:
        omega = corner.opening if omega is None else omega
        center = corner.point if center is None else center
        theta0 = corner.theta0 if theta0 is None else theta0
        if bc is None or bc == "corner":
            bc = corner.bc
    if omega is None:
        raise ValueError("opening required")
    if k < 1:
        raise ValueError("k must be >= 1")
    center = (0.0, 0.0) if center is None else center
    theta0 = 0.0 if theta0 is None else theta0
    if isinstance(bc, str):
        bc = (bc, bc)
    kind = spectrum_kind(bc)
    if kind == "DD":
        lam, part = k * math.pi / omega, "im"
    elif kind == "NN":
        lam, part = k * math.pi / omega, "re"
    else:
        lam = (2 * k - 1) * math.pi / (2 * omega)
        part = "im" if bc[0].lower().startswith("d") else "re"
    return CornerSingular(center, omega, lam, part, theta0, amplitude, m_max)


# ----------------------------------------------------------------------------
# polynomials
# ----------------------------------------------------------------------------

class Polynomial(DifferentiableField):
    """``sum c_beta (x - center)^beta`` from a ``{exponent tuple: coefficient}`` mapping."""

    def __init__(self, coeffs: dict, dim: int = 2, center=None):
        self.dim = dim
        self.coeffs = {tuple(int(e) for e in k): float(v) for k, v in coeffs.items() if v != 0}
        for k in self.coeffs:
            if len(k) != dim:
                raise ValueError(f"exponent {k} does not match dim={dim}")
        self.center = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
        self.m_max = 10**6
        degs = {sum(k) for k in self.coeffs}
        self.degree = float(degs.pop()) if len(degs) == 1 else None
        self.total_degree = max((sum(k) for k in self.coeffs), default=-1)
        self.min_degree = min((sum(k) for k in self.coeffs), default=None)

    @classmethod
    def constant(cls, c: float = 1.0, dim: int = 2):
        return cls({(0,) * dim: c}, dim)

    def _derivative(self, x, alpha, base):
        y = self.local(x, base, self.center)
        out = np.zeros(len(y))
        for expo, c in self.coeffs.items():
            if any(e < a for e, a in zip(expo, alpha)):
                continue
            term = np.full(len(y), c)
            for i, (e, a) in enumerate(zip(expo, alpha)):
                term *= math.perm(e, a)
                if e - a:
                    term *= y[:, i] ** (e - a)
            out += term
        return out


# ----------------------------------------------------------------------------
# smooth cutoff
# ----------------------------------------------------------------------------

def _series_exp(g: np.ndarray) -> np.ndarray:
    """Taylor coefficients of ``exp(g(eps))`` from those of ``g`` (rows = orders)."""
    n = g.shape[0]
    a = np.zeros_like(g)
    a[0] = np.exp(g[0])
    for k in range(1, n):
        acc = np.zeros_like(g[0])
        for j in range(1, k + 1):
            acc += j * g[j] * a[k - j]
        a[k] = acc / k
    return a


def _series_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    n = num.shape[0]
    q = np.zeros_like(num)
    for k in range(n):
        acc = num[k].copy()
        for j in range(1, k + 1):
            acc -= den[j] * q[k - j]
        q[k] = acc / den[0]
    return q


def smooth_step_derivatives(t: np.ndarray, order: int) -> np.ndarray:
    """``h^{(n)}(t)`` for ``n = 0..order`` where ``h = f(t) / (f(t) + f(1-t))``, ``f = exp(-1/t)``.

    Returns shape ``(order + 1, len(t))``.  ``h`` is 0 for ``t <= 0`` and 1 for
    ``t >= 1``; within 1e-3 of either end the flat value is returned (the
    neglected terms are below ``exp(-1000)``).
    """
    t = np.asarray(t, dtype=float)
    out = np.zeros((order + 1, t.size))
    out[0, t >= 1 - 1e-3] = 1.0
    mid = (t > 1e-3) & (t < 1 - 1e-3)
    if not np.any(mid):
        return out
    tm = t[mid]
    ks = np.arange(order + 1)[:, None]
    # -1/(t+e) = -1/t * sum (-e/t)^k ; -1/(1-t-e) = -1/(1-t) * sum (e/(1-t))^k
    g1 = -((-1.0) ** ks) / tm ** (ks + 1)
    s = 1 - tm
    g2 = -1.0 / s ** (ks + 1)
    # factor out the larger exponential to keep the ratio finite
    shift = np.maximum(g1[0], g2[0])
    g1 = g1.copy(); g1[0] -= shift
    g2 = g2.copy(); g2[0] -= shift
    a = _series_exp(g1)
    b = _series_exp(g2)
    q = _series_div(a, a + b)
    fact = np.array([math.factorial(k) for k in range(order + 1)], dtype=float)[:, None]
    out[:, mid] = q * fact
    return out


class RadialCutoff(DifferentiableField):
    """Smooth ``chi(|x - c|)`` equal to 1 on ``r <= r0`` and 0 on ``r >= r1``.

    The transition is ``h((r1^2 - r^2)/(r1^2 - r0^2))`` with the
    exp(-1/t) smooth step ``h``; derivatives come from the multivariate chain
    rule for ``H(|x|^2)``.
    """

    def __init__(self, r0: float, r1: float, center=None, dim: int = 2, m_max: int = 30):
        if not 0 < r0 < r1:
            raise ValueError(f"need 0 < r0 < r1, got r0={r0}, r1={r1}")
        self.r0, self.r1 = float(r0), float(r1)
        self.dim = dim
        self.center = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
        self.m_max = m_max
        self.degree = None
        self._span = self.r1**2 - self.r0**2

    def _derivative(self, x, alpha, base):
        return self._derivatives(x, [alpha], base)[alpha]

    def _derivatives(self, x, alphas, base):
        def compute(missing, scratch):
            nmax = max(sum(a) for a in missing)
            prep = scratch.get("prep")
            if prep is None or prep[0] < nmax:
                prep = scratch["prep"] = self._prepare(x, base, max(nmax, 2))
            return {a: self._chain(a, prep) for a in missing}
        return self._memo(x, base, alphas, compute)

    def support_disk(self):
        return self.center, self.r1

    def _prepare(self, x, base, nmax):
        y = self.local(x, base, self.center)
        q = np.sum(y * y, axis=1)
        t = (self.r1**2 - q) / self._span
        hd = smooth_step_derivatives(t, nmax)
        scale = (-1.0 / self._span) ** np.arange(nmax + 1)
        Hd = hd * scale[:, None]
        live = np.any(Hd[1:] != 0, axis=0) if nmax else np.zeros(len(y), bool)
        yl = 2 * y[live]
        pows = np.ones((y.shape[1], nmax + 1, len(yl)))
        for p in range(1, nmax + 1):
            pows[:, p] = pows[:, p - 1] * yl.T
        return nmax, Hd, live, pows

    @staticmethod
    def _chain(alpha, prep):
        _, Hd, live, pows = prep
        n = sum(alpha)
        if n == 0:
            return Hd[0].copy()
        out = np.zeros(Hd.shape[1])
        if not np.any(live):
            return out
        Hl = Hd[:, live]
        acc = np.zeros(Hl.shape[1])
        # d^alpha H(q) = sum_k H^{(|alpha| - |k|)} prod alpha_i! (2 y_i)^{alpha_i - 2k_i} / (k_i! (alpha_i - 2 k_i)!)
        ranges = [range(a // 2 + 1) for a in alpha]
        for ks in itertools.product(*ranges):
            c = 1.0
            coef = Hl[n - sum(ks)]
            for i, (a, k) in enumerate(zip(alpha, ks)):
                c *= math.factorial(a) / (math.factorial(k) * math.factorial(a - 2 * k))
                if a - 2 * k:
                    coef = coef * pows[i, a - 2 * k]
            acc += c * coef
        out[live] = acc
        return out


def radial_cutoff(r0: float, r1: float, center=None, dim: int = 2, m_max: int = 30) -> RadialCutoff:
    return RadialCutoff(r0, r1, center, dim, m_max)


# ----------------------------------------------------------------------------
# combinators
# ----------------------------------------------------------------------------

class ScaledField(DifferentiableField):
    def __init__(self, u: DifferentiableField, c: float):
        self.u, self.c = u, float(c)
        self.dim, self.m_max = u.dim, u.m_max
        self.degree, self.center, self.exponents = u.degree, u.center, u.exponents

    def _derivative(self, x, alpha, base):
        return self.c * self.u._derivative(x, alpha, base)

    def _derivatives(self, x, alphas, base):
        return {a: self.c * v for a, v in self.u._derivatives(x, alphas, base).items()}

    def support_disk(self):
        return self.u.support_disk()


class SumField(DifferentiableField):
    def __init__(self, terms: Sequence[DifferentiableField]):
        terms = list(terms)
        if not terms:
            raise ValueError("empty sum")
        self.terms = terms
        self.dim = terms[0].dim
        if any(t.dim != self.dim for t in terms):
            raise ValueError("dimension mismatch")
        self.m_max = min(t.m_max for t in terms)
        self.exponents = tuple(sorted({e for t in terms for e in t.exponents}))

    def _derivative(self, x, alpha, base):
        return sum(t._derivative(x, alpha, base) for t in self.terms)

    def _derivatives(self, x, alphas, base):
        parts = [t._derivatives(x, alphas, base) for t in self.terms]
        return {a: sum(p[a] for p in parts) for a in dict.fromkeys(alphas)}

    def support_disk(self):
        disks = [t.support_disk() for t in self.terms]
        if any(d is None for d in disks):
            return None
        c0, r0 = disks[0]
        if all(np.allclose(c, c0) for c, _ in disks):
            return c0, max(r for _, r in disks)
        return None


class ProductField(DifferentiableField):
    """Leibniz product ``u * v``."""

    def __init__(self, u: DifferentiableField, v: DifferentiableField):
        if u.dim != v.dim:
            raise ValueError("dimension mismatch")
        self.u, self.v = u, v
        self.dim = u.dim
        self.m_max = min(u.m_max, v.m_max)
        self.exponents = tuple(u.exponents) + tuple(v.exponents)

    def support_disk(self):
        disks = [d for d in (self.u.support_disk(), self.v.support_disk()) if d is not None]
        return min(disks, key=lambda d: d[1]) if disks else None

    def _derivative(self, x, alpha, base):
        out = np.zeros(len(x))
        cache_u = {}
        for gamma in _sub_indices(alpha):
            rest = tuple(a - g for a, g in zip(alpha, gamma))
            dv = self.v._derivative(x, rest, base)
            if not np.any(dv):
                continue
            if gamma not in cache_u:
                cache_u[gamma] = self.u._derivative(x, gamma, base)
            out += _binom_multi(alpha, gamma) * cache_u[gamma] * dv
        return out

    def _derivatives(self, x, alphas, base):
        alphas = list(dict.fromkeys(alphas))
        subs = sorted({g for a in alphas for g in _sub_indices(a)})
        du = self.u._derivatives(x, subs, base)
        dv = self.v._derivatives(x, subs, base)
        row = {g: i for i, g in enumerate(subs)}
        U = np.array([du[g] for g in subs]).reshape(len(subs), len(x))
        V = np.array([dv[g] for g in subs]).reshape(len(subs), len(x))
        nzu = np.any(U != 0, axis=1)
        nzv = np.any(V != 0, axis=1)
        out = {}
        for alpha in alphas:
            iu, iv, c = [], [], []
            for gamma in _sub_indices(alpha):
                rest = tuple(a - g for a, g in zip(alpha, gamma))
                i, j = row[gamma], row[rest]
                if nzu[i] and nzv[j]:
                    iu.append(i)
                    iv.append(j)
                    c.append(_binom_multi(alpha, gamma))
            if not c:
                out[alpha] = np.zeros(len(x))
            else:
                out[alpha] = np.einsum("k,kn,kn->n", np.array(c), U[iu], V[iv])
        return out


class PartialField(DifferentiableField):
    """``d^beta u`` for a fixed multi-index ``beta``."""

    def __init__(self, u: DifferentiableField, beta: Sequence[int]):
        self.u = u
        self.beta = tuple(int(b) for b in beta)
        self.dim = u.dim
        self.m_max = u.m_max - sum(self.beta)
        self.center = u.center
        self.degree = None if u.degree is None else u.degree - sum(self.beta)
        self.exponents = u.exponents

    def _derivative(self, x, alpha, base):
        return self.u._derivative(x, tuple(a + b for a, b in zip(alpha, self.beta)), base)

    def _derivatives(self, x, alphas, base):
        shifted = {a: tuple(p + q for p, q in zip(a, self.beta)) for a in alphas}
        d = self.u._derivatives(x, list(shifted.values()), base)
        return {a: d[s] for a, s in shifted.items()}

    def support_disk(self):
        return self.u.support_disk()


class LaplacianField(DifferentiableField):
    def __init__(self, u: DifferentiableField):
        self.u = u
        self.dim = u.dim
        self.m_max = u.m_max - 2
        self.exponents = u.exponents

    def _derivative(self, x, alpha, base):
        out = np.zeros(len(x))
        for i in range(self.dim):
            a = list(alpha)
            a[i] += 2
            out += self.u._derivative(x, tuple(a), base)
        return out

    def _derivatives(self, x, alphas, base):
        shifts = []
        for i in range(self.dim):
            e = [0] * self.dim
            e[i] = 2
            shifts.append(e)
        need = [tuple(p + q for p, q in zip(a, e)) for a in alphas for e in shifts]
        d = self.u._derivatives(x, need, base)
        return {a: sum(d[tuple(p + q for p, q in zip(a, e))] for e in shifts) for a in dict.fromkeys(alphas)}

    def support_disk(self):
        return self.u.support_disk()


# ----------------------------------------------------------------------------
# 3D edge fields
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class AxialProfile:
    """Entire profile ``g(x_par)`` with closed-form derivatives: ``one``, ``sin``, ``cos`` or ``exp``."""

    kind: str = "one"
    freq: float = 1.0

    def derivative(self, z: np.ndarray, n: int) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.kind == "one":
            return np.ones_like(z) if n == 0 else np.zeros_like(z)
        w = self.freq
        if self.kind == "sin":
            return w**n * np.sin(w * z + n * math.pi / 2)
        if self.kind == "cos":
            return w**n * np.cos(w * z + n * math.pi / 2)
        if self.kind == "exp":
            return w**n * np.exp(w * z)
        raise ValueError(f"unknown profile {self.kind!r}")


def _signed_permutation(frame: np.ndarray):
    idx, sign = [], []
    for row in frame:
        j = int(np.argmax(np.abs(row)))
        if abs(abs(row[j]) - 1) > 1e-12 or np.sum(np.abs(row) > 1e-12) != 1:
            return None
        idx.append(j)
        sign.append(float(np.sign(row[j])))
    if sorted(idx) != [0, 1, 2]:
        return None
    return idx, sign


class EdgeSingular3D(DifferentiableField):
    """``s(x_perp) g(x_par)`` near an edge, with ``s`` a 2D corner singular function.

    Local coordinates are ``(e1.(x-a), e2.(x-a), t.(x-a))``; the frame must be
    a signed permutation of the coordinate axes so that global derivatives
    split exactly into transverse and parallel ones.
    """

    def __init__(self, s: CornerSingular, profile: AxialProfile = AxialProfile(), origin=None,
                 frame=None):
        self.s = s
        self.profile = profile
        self.dim = 3
        self.m_max = s.m_max
        self.origin = np.zeros(3) if origin is None else np.asarray(origin, dtype=float)
        self.center = self.origin
        self.frame = np.eye(3) if frame is None else np.asarray(frame, dtype=float)
        perm = _signed_permutation(self.frame)
        if perm is None:
            raise NotImplementedError("edge frame must be axis aligned")
        self._idx, self._sign = perm
        self.degree = s.lam if profile.kind == "one" else None
        self.exponents = (s.lam,)

    def split(self, alpha) -> tuple[tuple[int, int], int, float]:
        """Map a global multi-index to ``(alpha_perp, alpha_par)`` and the sign from the frame."""
        loc = [alpha[j] for j in self._idx]
        sign = 1.0
        for k, j in enumerate(self._idx):
            if self._sign[k] < 0 and alpha[j] % 2:
                sign = -sign
        return (loc[0], loc[1]), loc[2], sign

    def _derivative(self, x, alpha, base):
        y = self.local(x, base, self.origin)
        yl = np.stack([self._sign[k] * y[:, j] for k, j in enumerate(self._idx)], axis=1)
        a_perp, a_par, sign = self.split(alpha)
        g = self.profile.derivative(yl[:, 2], a_par)
        if not np.any(g):
            return np.zeros(len(y))
        sv = self.s._derivative(yl[:, :2], a_perp, None)
        return sign * sv * g


def edge_singular_3d(edge=None, omega: float | None = None, k: int = 1, bc="dirichlet",
                     profile: AxialProfile | str = "one", origin=None, frame=None,
                     m_max: int = 40) -> EdgeSingular3D:
    """Edge singular field ``r_e^lam phi(theta) g(x_par)``; ``edge`` (an :class:`Edge`) supplies frame and opening."""
    if isinstance(profile, str):
        profile = AxialProfile(profile)
    if edge is not None:
        omega = edge.opening if omega is None else omega
        origin = edge.a if origin is None else origin
        if frame is None:
            e1, e2 = edge.frame
            frame = np.array([e1, e2, edge.direction])
        if bc == "edge":
            bc = edge.bc
    s = corner_singular(None, omega, k, bc, center=(0.0, 0.0), theta0=0.0, m_max=m_max)
    return EdgeSingular3D(s, profile, origin, frame)


# ----------------------------------------------------------------------------
# manufactured solutions
# ----------------------------------------------------------------------------

def manufactured_pair(u: DifferentiableField, cutoff: DifferentiableField):
    """``(chi*u, f)`` with ``f = u*Lap(chi) + 2 grad(chi).grad(u)`` (valid for harmonic ``u``)."""
    if u.m_max < 2 or cutoff.m_max < 2:
        raise ValueError("fields must expose at least second derivatives")
    ut = ProductField(cutoff, u)
    terms = [ProductField(LaplacianField(cutoff), u)]
    for i in range(u.dim):
        e = [0] * u.dim
        e[i] = 1
        terms.append(ScaledField(ProductField(PartialField(cutoff, e), PartialField(u, e)), 2.0))
    f = SumField(terms)
    return ut, f


# ----------------------------------------------------------------------------
# analytic membership oracle
# ----------------------------------------------------------------------------

def membership_oracle(lam: float, beta: float, space: str = "K", m: int = 0,
                      polynomial: bool = False) -> bool:
    """Does ``r^lam phi(theta)`` (or a homogeneous polynomial of degree ``lam``) belong to the space?

    Integrability of ``r^{2(beta+|alpha|) + 2(lam-|alpha|)}`` against ``r dr``
    gives ``lam > -beta - 1`` for ``K^m_beta`` and ``A_beta``.  For ``J^m_beta``
    a polynomial of degree ``d`` needs ``max(d, m) > -beta - 1``; every
    polynomial lies in ``B_beta``, which adds ``P_{[-beta-1]}`` to ``A_beta``.
    """
    space = space.upper()
    if space not in ("K", "J", "A", "B"):
        raise ValueError(f"unknown space {space!r}")
    if abs(beta - round(beta)) < 1e-12:
        raise CriticalExponentError(f"beta={beta} is an integer: critical case")
    thr = -beta - 1
    if not polynomial:
        if abs(lam - round(lam)) < 1e-12:
            raise CriticalExponentError(f"lambda={lam} is an integer: critical case")
        return lam > thr
    d = int(round(lam))
    if space in ("K", "A"):
        return d > thr
    if space == "J":
        return max(d, m) > thr
    return True
