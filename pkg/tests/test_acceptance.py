"""Acceptance suite: one recorded pass/fail line per criterion."""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from _suite import equivalence_suite
from cornerreg.fields import Polynomial, corner_singular, edge_singular_3d, manufactured_pair, membership_oracle, radial_cutoff
from cornerreg.geometry import bundled_geometry
from cornerreg.mesher import aniso_graded_mesh_3d, graded_mesh_2d, layer_scaling_defect
from cornerreg.norms import (
    PolygonDomain,
    Sector,
    Wedge,
    analytic_fit,
    exponent_audit,
    is_finite,
    j_norm,
    k_seminorm,
    m_seminorm,
    seminorm_sequence,
    shift_constant_check,
    step_weighted_norm,
)
from cornerreg.spectra2d import b_threshold, corner_spectrum_laplace
from cornerreg.spherical import corner_exponent_pipeline
from cornerreg.weights import WeightMultiExponent, admissible_2d


def _origin(g):
    return next(c.id for c in g.corners if np.allclose(c.point, 0))


def test_1_cube_corner_exponents(criterion):
    g = bundled_geometry("cube")
    t = time.perf_counter()
    d = corner_exponent_pipeline(g, _origin(g), "dirichlet", levels=3)
    n = corner_exponent_pipeline(g, _origin(g), "neumann", levels=3)
    dt = time.perf_counter() - t
    # octant harmonics: mu = 12 (xyz) and mu = 6 (xy), lambda = -1/2 + sqrt(mu + 1/4)
    ok = abs(d.value - 3) <= 0.02 and abs(n.value - 2) <= 0.02 and dt < 60
    assert criterion(1, ok, f"cube lambda_Dir={d.value:.6f} (3), lambda_Neu={n.value:.6f} (2), {dt:.1f}s")


def test_2_fichera_corner_exponents(criterion):
    g = bundled_geometry("fichera")
    t = time.perf_counter()
    d = corner_exponent_pipeline(g, _origin(g), "dirichlet", levels=3)
    n = corner_exponent_pipeline(g, _origin(g), "neumann", levels=3)
    dt = time.perf_counter() - t
    ok = abs(d.value - 0.45418) <= 0.02 and abs(n.value - 0.84001) <= 0.02 and dt < 300
    assert criterion(2, ok, f"fichera lambda_Dir={d.value:.6f} (0.45418), "
                            f"lambda_Neu={n.value:.6f} (0.84001), {dt:.1f}s")


def test_3_spectra_and_lshape_boundary(criterion):
    errs = []
    for q in (Fraction(1, 2), Fraction(1), Fraction(3, 2), Fraction(2)):
        om = float(q) * math.pi
        errs.append(abs(b_threshold(corner_spectrum_laplace(om)) - math.pi / om))
    g = bundled_geometry("lshape")
    re = max(g.corners, key=lambda c: c.opening)
    verdicts = []
    for delta in (1e-3, -1e-3):
        beta = [-1.5] * len(g.corners)
        beta[re.id] = -1 - (2 / 3 - delta)
        verdicts.append(admissible_2d(g, WeightMultiExponent(tuple(beta)))[re.id].admissible)
    ok = max(errs) <= 1e-14 and verdicts == [True, False]
    assert criterion(3, ok, f"max |b - pi/omega| = {max(errs):.1e}; "
                            f"-beta-1 = 2/3 -+ 1e-3 admissible: {verdicts}")


LAMBDAS = [Fraction(1, 2), Fraction(2, 3), Fraction(4, 5), Fraction(4, 3), Fraction(3, 2),
           Fraction(8, 5), Fraction(5, 3), Fraction(5, 2), Fraction(8, 3), Fraction(10, 3)]
BETAS = [-0.1 - 0.37 * j for j in range(10)]


def test_4_membership_grid(criterion):
    hits = 0
    for lam in LAMBDAS:
        omega = math.pi / float(lam)  # lambda = pi/omega, k = 1
        u = corner_singular(omega=omega, k=1)
        S = Sector(omega)
        for beta in BETAS:
            hits += is_finite(k_seminorm(u, S, beta, 0)) == membership_oracle(u.lam, beta)
    assert criterion(4, hits == 100, f"{hits}/100 divergence verdicts match lambda > -beta-1")


def test_5_analytic_fit(criterion):
    om = 1.5 * math.pi
    u = corner_singular(omega=om, k=1)
    seq = seminorm_sequence(u, Sector(om), -1.5, 12)
    rep = analytic_fit(seq)
    ok = seq.finite() and rep.drift is not None and rep.drift <= 0.10
    assert criterion(5, ok, f"m=0..12 finite={seq.finite()}, C={rep.C:.4f}, window drift={rep.drift:.4f}")


SHIFT_PAIRS = [(1, 0.3, 0.7), (2, 0.2, 0.8), (4, 0.25, 0.6)]


def test_6_shift_constant_plateau(criterion):
    g = bundled_geometry("lshape")
    D = PolygonDomain(g)
    re = max(g.corners, key=lambda c: c.opening)
    ratios = []
    for k, r0, r1 in SHIFT_PAIRS:
        u = corner_singular(re, k=k)
        ut, f = manufactured_pair(u, radial_cutoff(r0, r1, center=re.point))
        rep = shift_constant_check(ut, f, D, -1.5, M=12, plateau_at=8, tol=1.1)
        ratios.append(rep.plateau_ratio)
    ok = all(r is not None and r <= 1.1 for r in ratios)
    assert criterion(6, ok, "plateau ratios " + ", ".join(f"{r:.4f}" for r in ratios) + " (<= 1.1)")


# c measured once per geometry over the 20-field suite and frozen here
FROZEN_C = {"lshape": (-1.5, 1.632899430497506), "slit_square": (-1.3, 2.5467644621682903)}


def test_7_j_step_equivalence(criterion):
    details, ok = [], True
    for name, (beta, c) in FROZEN_C.items():
        g = bundled_geometry(name)
        D = PolygonDomain(g)
        fields = equivalence_suite(g)
        assert len(fields) == 20
        R = np.array([j_norm(u, D, beta, 2) / step_weighted_norm(u, D, beta, 2) for u in fields])
        inside = bool(np.all((R >= 1 / c * (1 - 1e-12)) & (R <= c * (1 + 1e-12))))
        c_now = max(R.max(), 1 / R.min())
        drift = abs(c_now - c) / c
        ok &= inside and drift < 1e-9
        details.append(f"{name} c={c:.6f} drift={drift:.1e}")
    assert criterion(7, ok, "; ".join(details))


def _aniso_setup():
    om = 1.5 * math.pi
    return Wedge(om), edge_singular_3d(omega=om, profile="sin"), 2 / 3, -1.5


def test_8_anisotropy_discrimination(criterion):
    W, u, lam, be = _aniso_setup()
    m_finite = [is_finite(m_seminorm(u, W, be, m)) for m in range(9)]
    k_match = [is_finite(k_seminorm(u, W, be, m)) == exponent_audit(lam, be, m, "K") for m in range(9)]
    m_match = [f == exponent_audit(lam, be, m, "M") for m, f in enumerate(m_finite)]
    # converse: x_par-only field; the M weight ignores parallel derivatives
    z = Polynomial({(0, 0, 1): 1.0}, dim=3)
    conv = not is_finite(m_seminorm(z, W, be, 1)) and is_finite(k_seminorm(z, W, be, 1))
    ok = all(m_finite) and all(k_match) and all(m_match) and conv
    assert criterion(8, ok, f"M finite m=0..8: {all(m_finite)}; K and M verdicts match audit: "
                            f"{all(k_match) and all(m_match)}; converse (u=x_par) M diverges, K finite: {conv}")


@pytest.mark.xfail(strict=True, reason="K weight r^(beta+|alpha|) <= M weight for r < 1: K cannot diverge "
                                       "where M is finite (see decisions ledger)")
def test_8_literal_k_divergence():
    W, u, lam, be = _aniso_setup()
    assert any(not is_finite(k_seminorm(u, W, be, m)) for m in range(9))


def test_9_dyadic_scaling(criterion):
    worst = 0.0
    for om, beta, m in [(1.5 * math.pi, -1.5, 0), (1.5 * math.pi, -1.2, 3), (2 * math.pi, -1.3, 2),
                        (0.75 * math.pi, -0.4, 4), (1.25 * math.pi, -1.6, 5)]:
        u = corner_singular(omega=om, k=1)
        S = Sector(om)
        base = k_seminorm(u, S, beta, m)
        for mu in range(1, 5):
            v = k_seminorm(u, S.scaled(2.0**-mu), beta, m)
            pred = base * 2.0 ** (-mu * (beta + u.lam + 1))
            worst = max(worst, abs(v - pred) / pred)
    assert criterion(9, worst <= 1e-10, f"max relative dilation defect {worst:.1e} (<= 1e-10)")


def test_10_mesh_realizability(criterion):
    d2 = 0.0
    for name in ("square", "lshape", "slit_square"):
        g = bundled_geometry(name)
        m = graded_mesh_2d(g, sigma=0.5, layers=5)
        for c in g.corners:
            for mu in range(1, 5):
                d2 = max(d2, layer_scaling_defect(m, c, mu))
    growth = []
    for name in ("cube", "thick_l", "fichera"):
        m = aniso_graded_mesh_3d(bundled_geometry(name), sigma=0.5, layers=5)
        L = np.sort(m.levels, axis=1)
        a = [m.aspect[(L[:, 0] == -1) & (L[:, 1] == mu) & (L[:, 2] == mu)] for mu in range(5)]
        a0 = a[0].max()
        growth += [x.max() / (a0 * 2**mu) for mu, x in enumerate(a)] + [x.min() / (a0 * 2**mu) for mu, x in enumerate(a)]
    ok = d2 <= 1e-9 and all(0.5 <= x <= 2 for x in growth)
    assert criterion(10, ok, f"2D layer scaling defect {d2:.1e}; 3D edge aspect / 2^mu within "
                             f"[{min(growth):.3f}, {max(growth):.3f}] of layer 0")
