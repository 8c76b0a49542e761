"""Weight multi-exponents and the admissibility / shift conditions on them."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import numpy as np

from .geometry import PolytopeGeometry
from .spectra2d import (
    MellinSpectrum,
    b_threshold,
    b_threshold_exact,
    corner_spectrum_laplace,
)

__all__ = [
    "WeightMultiExponent",
    "Verdict",
    "MissingDataError",
    "kappa",
    "admissible_2d",
    "admissible_3d",
    "shift_condition_aniso",
    "edge_closed_range_condition",
    "admissible_interval",
    "corner_spectra",
    "edge_spectra",
    "verdict_report",
]

_SLACK = 1e-12


class MissingDataError(KeyError):
    """A spectrum, exponent or weight needed for a verdict was not supplied."""

    def __str__(self):
        return str(self.args[0]) if self.args else "missing data"


@dataclass(frozen=True)
class WeightMultiExponent:
    """One weight exponent per corner and, in 3D, per edge."""

    corners: tuple[float, ...]
    edges: tuple[float, ...] = ()

    def __post_init__(self):
        vals = tuple(self.corners) + tuple(self.edges)
        if not all(math.isfinite(float(b)) for b in vals):
            raise ValueError("weight exponents must be finite")

    @classmethod
    def uniform(cls, geom: PolytopeGeometry, beta_c: float, beta_e: float | None = None):
        be = beta_c if beta_e is None else beta_e
        return cls(tuple([float(beta_c)] * len(geom.corners)), tuple([float(be)] * len(geom.edges)))

    @classmethod
    def from_dict(cls, doc: Mapping, geom: PolytopeGeometry) -> "WeightMultiExponent":
        """Read ``{"default": b, "corners": {id: b}, "edges": {id: b}}`` (lists also accepted)."""
        default = doc.get("default")
        def expand(entry, n, what):
            if isinstance(entry, (list, tuple)):
                if len(entry) != n:
                    raise MissingDataError(f"need {n} {what} weights, got {len(entry)}")
                return tuple(float(b) for b in entry)
            entry = {int(k): float(b) for k, b in (entry or {}).items()}
            out = []
            for i in range(n):
                if i in entry:
                    out.append(entry[i])
                elif doc.get(f"default_{what[:-1]}", default) is not None:
                    out.append(float(doc.get(f"default_{what[:-1]}", default)))
                else:
                    raise MissingDataError(f"no weight for {what[:-1]} {i}")
            return tuple(out)
        return cls(
            expand(doc.get("corners"), len(geom.corners), "corners"),
            expand(doc.get("edges"), len(geom.edges), "edges"),
        )

    def bind(self, geom: PolytopeGeometry) -> "WeightMultiExponent":
        if len(self.corners) != len(geom.corners) or len(self.edges) != len(geom.edges):
            raise ValueError(
                f"weight has {len(self.corners)} corner / {len(self.edges)} edge entries, geometry has "
                f"{len(geom.corners)} / {len(geom.edges)}"
            )
        return self

    def shifted(self, s: float) -> "WeightMultiExponent":
        return WeightMultiExponent(
            tuple(b + s for b in self.corners), tuple(b + s for b in self.edges)
        )

    def to_dict(self) -> dict:
        return {"corners": list(self.corners), "edges": list(self.edges)}


def kappa(beta: WeightMultiExponent) -> float:
    """Largest of ``-beta`` over all corners and edges."""
    vals = [-b for b in beta.corners] + [-b for b in beta.edges]
    return float(max(vals))


def _exact(x) -> Fraction | None:
    if isinstance(x, Fraction):
        return x
    q = Fraction(float(x)).limit_denominator(10**6)
    return q if abs(float(q) - float(x)) <= 1e-13 * max(1.0, abs(float(x))) else None


def _lt(a, b, a_exact=None, b_exact=None) -> bool:
    if a_exact is not None and b_exact is not None:
        return a_exact < b_exact
    return a < b - _SLACK * max(1.0, abs(b))


def _le(a, b, a_exact=None, b_exact=None) -> bool:
    if a_exact is not None and b_exact is not None:
        return a_exact <= b_exact
    return a <= b + _SLACK * max(1.0, abs(b))


@dataclass(frozen=True)
class Verdict:
    """Outcome of an interval condition ``lower <= value < upper`` for one corner or edge."""

    entity: str
    id: int
    value: float
    lower: float
    upper: float
    admissible: bool
    margin: float
    active_bound: str
    lower_strict: bool = False
    note: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "entity": self.entity,
            "id": self.id,
            "value": self.value,
            "lower": self.lower,
            "upper": None if math.isinf(self.upper) else self.upper,
            "admissible": self.admissible,
            "margin": None if math.isinf(self.margin) else self.margin,
            "active_bound": self.active_bound,
        }
        if self.note:
            d["note"] = self.note
        d.update(self.extra)
        return d


def _interval_verdict(entity, i, value, lower, upper, upper_name, value_exact=None,
                      lower_exact=None, upper_exact=None, note="") -> Verdict:
    ok_low = _le(lower, value, lower_exact, value_exact)
    ok_up = math.isinf(upper) or _lt(value, upper, value_exact, upper_exact)
    m_low = value - lower
    m_up = upper - value
    if m_low <= m_up:
        active = "lower"
    else:
        active = upper_name
    return Verdict(entity, int(i), float(value), float(lower), float(upper), ok_low and ok_up,
                   float(min(m_low, m_up)), active, note=note)


def corner_spectra(geom: PolytopeGeometry, window: float = 10.0) -> dict[int, MellinSpectrum]:
    """Laplace spectrum of every 2D corner from its opening and side conditions."""
    if geom.dimension != 2:
        raise ValueError("corner spectra are closed-form only in 2D; use the spherical module in 3D")
    return {c.id: corner_spectrum_laplace(c.opening, c.bc, window) for c in geom.corners}


def edge_spectra(geom: PolytopeGeometry, window: float = 10.0) -> dict[int, MellinSpectrum]:
    """Transversal Laplace spectrum of every 3D edge."""
    return {e.id: corner_spectrum_laplace(e.opening, e.bc, window) for e in geom.edges}


def admissible_2d(geom: PolytopeGeometry, beta: WeightMultiExponent,
                  spectra: Mapping[int, MellinSpectrum] | None = None,
                  space: str = "dirichlet") -> list[Verdict]:
    """Check ``0 <= -beta_c - 1 < b_c`` at every polygon corner.

    ``b_c`` is the smallest positive exponent of the corner's spectrum; the
    same inequality applies to Dirichlet, Neumann and mixed Laplace problems.
    """
    beta.bind(geom)
    if spectra is None:
        spectra = corner_spectra(geom)
    out = []
    for c in geom.corners:
        if c.id not in spectra:
            raise MissingDataError(f"missing spectrum for corner {c.id}")
        sp = spectra[c.id]
        b = b_threshold(sp)
        bq = b_threshold_exact(sp)
        bc_ = beta.corners[c.id]
        bq_c = _exact(bc_)
        val = -bc_ - 1
        val_q = None if bq_c is None else -bq_c - 1
        out.append(_interval_verdict("corner", c.id, val, 0.0, b, "b_c", val_q, Fraction(0), bq,
                                     note=f"space={space}"))
    return out


def admissible_3d(geom: PolytopeGeometry, beta: WeightMultiExponent,
                  edge_spectra_: Mapping[int, MellinSpectrum] | None,
                  corner_lambda: Mapping[int, float], problem: str = "dirichlet") -> list[Verdict]:
    """Edge conditions ``0 <= -beta_e - 1 < b_e`` and corner conditions
    ``-1/2 <= -beta_c - 3/2 < Lambda_c`` with ``Lambda_c = lambda_Dir`` (Dirichlet) or
    ``min(2, lambda_Neu)`` (Neumann: injectivity modulo polynomials).

    Mixed problems reuse the Neumann shape and are flagged as uncertified.
    """
    beta.bind(geom)
    problem = problem.lower()
    if problem not in ("dirichlet", "neumann", "mixed"):
        raise ValueError(f"unknown problem kind {problem!r}")
    if edge_spectra_ is None:
        edge_spectra_ = edge_spectra(geom)
    out = []
    for e in geom.edges:
        if e.id not in edge_spectra_:
            raise MissingDataError(f"missing spectrum for edge {e.id}")
        sp = edge_spectra_[e.id]
        b = b_threshold(sp)
        be = beta.edges[e.id]
        q = _exact(be)
        out.append(_interval_verdict("edge", e.id, -be - 1, 0.0, b, "b_e",
                                     None if q is None else -q - 1, Fraction(0), b_threshold_exact(sp)))
    for c in geom.corners:
        if c.id not in corner_lambda:
            raise MissingDataError(f"missing limiting exponent for corner {c.id}")
        lam = float(corner_lambda[c.id])
        if problem == "dirichlet":
            upper, name, note = lam, "lambda_Dir", ""
        else:
            upper, name = min(2.0, lam), ("2" if lam >= 2.0 else "lambda_Neu")
            note = "" if problem == "neumann" else "mixed 3D problem: bound not certified outside the Maz'ya-Rossmann framework"
        bcv = beta.corners[c.id]
        q = _exact(bcv)
        out.append(_interval_verdict("corner", c.id, -bcv - 1.5, -0.5, upper, name,
                                     None if q is None else -q - Fraction(3, 2), Fraction(-1, 2),
                                     _exact(upper) if upper == 2.0 else None, note=note))
    return out


def shift_condition_aniso(geom: PolytopeGeometry, beta: WeightMultiExponent,
                          edge_spectra_: Mapping[int, MellinSpectrum] | None = None) -> list[Verdict]:
    """``0 <= -beta_e - 1`` and ``-beta_e - 1 != k*pi/omega_e`` for every ``k >= 1``."""
    beta.bind(geom)
    out = []
    for e in geom.edges:
        be = beta.edges[e.id]
        val = -be - 1
        q = _exact(be)
        val_q = None if q is None else -q - 1
        step = math.pi / e.opening
        opening_q = e.opening_pi
        if not _le(0.0, val, Fraction(0), val_q):
            out.append(Verdict("edge", e.id, val, 0.0, math.inf, False, val, "lower"))
            continue
        k_hit = None
        if opening_q is not None and val_q is not None:
            ratio = val_q * opening_q  # val / (pi/omega)
            if ratio.denominator == 1 and ratio >= 1:
                k_hit = int(ratio)
        else:
            k = round(val / step)
            if k >= 1 and abs(val - k * step) <= _SLACK * max(1.0, val):
                k_hit = int(k)
        if k_hit is not None:
            out.append(Verdict("edge", e.id, val, 0.0, math.inf, False, 0.0, "resonance",
                               extra={"k": k_hit}))
        else:
            k = max(1, round(val / step))
            dist = min(abs(val - j * step) for j in (k - 1, k, k + 1) if j >= 1)
            out.append(Verdict("edge", e.id, val, 0.0, math.inf, True, min(val, dist), "resonance"))
    return out


def edge_closed_range_condition(beta_e: float, spectrum: MellinSpectrum) -> bool:
    """True iff ``-beta_e - 1`` is not a real part of the edge spectrum."""
    q = _exact(beta_e)
    x = -Fraction(q) - 1 if q is not None else -beta_e - 1
    if spectrum.exact is not None and isinstance(x, Fraction):
        return x not in spectrum.exact
    return not spectrum.contains(float(x), tol=1e-12)


def admissible_interval(b: float, kind: str = "2d") -> tuple[float, float]:
    """Endpoints ``(lo, hi)`` of the admissible weights: ``lo < beta <= hi``."""
    if kind == "2d" or kind == "edge":
        return (-1.0 - b, -1.0)
    if kind == "corner3d":
        return (-1.5 - b, -1.0)
    raise ValueError(kind)


def verdict_report(verdicts, geom: PolytopeGeometry | None = None, **meta) -> dict:
    doc = {"admissible": all(v.admissible for v in verdicts),
           "verdicts": [v.to_dict() for v in verdicts]}
    if geom is not None:
        doc["geometry"] = geom.name
    doc.update(meta)
    return doc


def load_weights(path_or_doc, geom: PolytopeGeometry) -> WeightMultiExponent:
    if isinstance(path_or_doc, Mapping):
        return WeightMultiExponent.from_dict(path_or_doc, geom)
    with open(path_or_doc) as fh:
        return WeightMultiExponent.from_dict(json.load(fh), geom)
