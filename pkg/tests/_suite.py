"""Shared field suites for the equivalence tests."""

import math

from cornerreg.fields import Polynomial, ProductField, ScaledField, SumField, corner_singular, radial_cutoff


def reentrant_or_first(geom):
    return max(geom.corners, key=lambda c: c.opening)


def equivalence_suite(geom):
    """Twenty fields: singular functions at the widest corner, polynomials, cut-offs and sums."""
    c = reentrant_or_first(geom)
    ks = [k for k in range(1, 12) if abs(k * math.pi / c.opening % 1) > 1e-9][:4]
    s1, s2 = corner_singular(c, k=ks[0]), corner_singular(c, k=ks[1])
    chi = radial_cutoff(0.3, 0.7, center=c.point)
    x, y = c.point
    P = lambda d: Polynomial(d, center=(x, y))
    return [
        s1, s2, corner_singular(c, k=ks[2]), corner_singular(c, k=ks[3]),
        corner_singular(c, k=ks[0], bc="neumann"), corner_singular(c, k=ks[1], bc="neumann"),
        P({(0, 0): 1}), P({(1, 0): 1}), P({(0, 1): 1}), P({(2, 0): 1}), P({(1, 1): 1}),
        P({(0, 2): 1}), P({(3, 0): 1}), P({(2, 1): 1}),
        ProductField(chi, s1), ProductField(chi, s2),
        SumField([s1, P({(1, 0): 1})]), SumField([s2, ScaledField(P({(1, 1): 1}), -1.0)]),
        SumField([s1, P({(0, 0): 1})]), P({(1, 0): 1, (0, 1): 1}),
    ]
