"""Mellin spectra of the Laplacian at plane corners (and transversally at edges).

Dirichlet-Dirichlet sides give ``{l*pi/omega : l != 0}``, Neumann-Neumann
``{l*pi/omega : l in Z}`` and mixed sides ``{(2l+1)*pi/(2*omega)}``.  When the
opening is a rational multiple of pi the exponents are also kept exactly as
fractions, so that resonance tests downstream are equality tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .geometry import as_pi_fraction

__all__ = [
    "ProblemSpec",
    "MellinSpectrum",
    "WindowTooSmallError",
    "SingularExponent",
    "corner_spectrum_laplace",
    "b_threshold",
    "singular_exponents_up_to",
    "spectrum_kind",
]


class WindowTooSmallError(ValueError):
    """The materialized spectrum window does not reach the requested quantity."""


def spectrum_kind(bc) -> str:
    """Map a pair of side conditions to ``"DD"``, ``"NN"`` or ``"DN"``."""
    if isinstance(bc, str):
        bc = (bc, bc)
    kinds = tuple(b.lower()[0] for b in bc)
    if len(kinds) != 2 or any(k not in "dn" for k in kinds):
        raise ValueError(f"need two side conditions out of dirichlet/neumann, got {bc!r}")
    if kinds == ("d", "d"):
        return "DD"
    if kinds == ("n", "n"):
        return "NN"
    return "DN"


@dataclass(frozen=True)
class ProblemSpec:
    """Laplace operator with one boundary condition per side of a corner or edge."""

    bc: tuple[str, str] = ("dirichlet", "dirichlet")
    operator: str = "laplace"

    def __post_init__(self):
        if self.operator != "laplace":
            raise ValueError("only the Laplace operator is supported")
        spectrum_kind(self.bc)

    @property
    def kind(self) -> str:
        return spectrum_kind(self.bc)


@dataclass(frozen=True)
class MellinSpectrum:
    """Sorted real exponents of a corner family inside ``[-window, window]``."""

    omega: float
    kind: str
    window: float
    values: np.ndarray
    exact: tuple[Fraction, ...] | None = None

    @property
    def center(self) -> float:
        return 0.0

    def positive(self) -> np.ndarray:
        return self.values[self.values > 0]

    def contains(self, x: float, tol: float = 1e-12) -> bool:
        """Membership of a real number, exact when both sides are rational."""
        if self.exact is not None:
            q = _as_exact(x)
            if q is not None:
                return q in self.exact
        return bool(np.any(np.abs(self.values - x) <= tol * max(1.0, abs(x))))

    def to_dict(self) -> dict:
        return {
            "omega": self.omega,
            "kind": self.kind,
            "window": self.window,
            "values": self.values.tolist(),
            "exact": None if self.exact is None else [str(q) for q in self.exact],
        }


def _as_exact(x, max_denominator: int = 10**6) -> Fraction | None:
    if isinstance(x, Fraction):
        return x
    q = Fraction(x).limit_denominator(max_denominator)
    return q if abs(float(q) - x) <= 1e-13 * max(1.0, abs(x)) else None


def corner_spectrum_laplace(omega: float, bc=("dirichlet", "dirichlet"), window: float = 10.0) -> MellinSpectrum:
    """Materialize the Laplace corner spectrum for opening ``omega`` within ``[-window, window]``."""
    if not 0 < omega <= 2 * math.pi + 1e-14:
        raise ValueError(f"opening must lie in (0, 2pi], got {omega}")
    if window <= 0:
        raise ValueError("window must be positive")
    kind = bc.kind if isinstance(bc, ProblemSpec) else spectrum_kind(bc)
    step = math.pi / omega
    if kind == "DN":
        lmax = int(math.floor(window / step)) + 1
        ells = np.arange(-lmax - 1, lmax + 1)
        vals = (2 * ells + 1) * step / 2
    else:
        lmax = int(math.floor(window / step)) + 1
        ells = np.arange(-lmax, lmax + 1)
        if kind == "DD":
            ells = ells[ells != 0]
        vals = ells * step
    keep = np.abs(vals) <= window * (1 + 1e-14)
    vals = vals[keep]
    ells = ells[keep]
    exact = None
    q = as_pi_fraction(omega)
    if q is not None:
        unit = 1 / q  # pi / omega
        if kind == "DN":
            exact = tuple((2 * int(l) + 1) * unit / 2 for l in ells)
        else:
            exact = tuple(int(l) * unit for l in ells)
        vals = np.array([float(x) for x in exact])
    order = np.argsort(vals)
    vals = vals[order]
    if exact is not None:
        exact = tuple(exact[i] for i in order)
    return MellinSpectrum(float(omega), kind, float(window), vals, exact)


def b_threshold(spectrum: MellinSpectrum) -> float:
    """Width of the spectrum-free strip ``0 < Re(lambda) < b`` (smallest positive exponent)."""
    pos = spectrum.positive()
    if pos.size == 0:
        raise WindowTooSmallError(
            f"no positive exponent within window {spectrum.window}; increase the window"
        )
    return float(pos[0])


def b_threshold_exact(spectrum: MellinSpectrum) -> Fraction | None:
    if spectrum.exact is None:
        return None
    pos = [q for q in spectrum.exact if q > 0]
    if not pos:
        raise WindowTooSmallError("no positive exponent within window; increase the window")
    return pos[0]


class SingularExponent(NamedTuple):
    value: float
    index: int
    critical: bool


def singular_exponents_up_to(omega: float, bc=("dirichlet", "dirichlet"), n: int = 0) -> list[SingularExponent]:
    """Exponents of the corner singular functions in ``(0, n+1]``.

    Integer exponents are flagged ``critical``: the corresponding singular
    function carries a logarithm and is not modeled.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    spec = corner_spectrum_laplace(omega, bc, window=n + 1 + 1e-9)
    out = []
    vals = spec.values
    exact = spec.exact
    k = 0
    for i, v in enumerate(vals):
        if v <= 0 or v > n + 1 + 1e-12:
            continue
        k += 1
        if exact is not None:
            crit = exact[i].denominator == 1
        else:
            crit = abs(v - round(v)) < 1e-12
        out.append(SingularExponent(float(v), k, bool(crit)))
    return out
