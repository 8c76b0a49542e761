import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cornerreg.fields import Polynomial, SumField, corner_singular, edge_singular_3d, manufactured_pair, radial_cutoff
from cornerreg.geometry import bundled_geometry
from cornerreg.norms import (
    Diverged,
    PolygonDomain,
    Sector,
    SeminormSequence,
    Wedge,
    analytic_fit,
    exponent_audit,
    flagged_norm,
    is_finite,
    j_norm,
    k_norm,
    k_seminorm,
    m_seminorm,
    n_norm,
    seminorm_sequence,
    shift_constant_check,
    step_weighted_norm,
)


def _falling(lam, m):
    out = 1.0
    for j in range(m):
        out *= lam - j
    return out


def k_seminorm_oracle(lam, omega, beta, m, R=1.0):
    """Closed form for ``Im z^lam`` on a sector: ``d_x^a d_y^b z^lam = i^b (lam)_m z^{lam-m}``."""
    c = _falling(lam, m)
    nu = lam - m
    half = math.sin(2 * nu * omega) / (4 * nu) if nu else 0.0
    im2, re2 = omega / 2 - half, omega / 2 + half
    ang = sum(im2 if b % 2 == 0 else re2 for b in range(m + 1))
    e = 2 * (beta + lam + 1)
    return math.sqrt(c * c * ang * R**e / e)


@pytest.mark.parametrize("omega, k, beta, m", [
    (1.5 * math.pi, 1, -1.5, 0), (1.5 * math.pi, 1, -1.5, 3), (1.5 * math.pi, 2, -0.7, 5),
    (2 * math.pi, 1, -1.2, 4), (0.75 * math.pi, 1, -2.1, 2), (1.5 * math.pi, 1, -1.5, 10),
])
def test_k_seminorm_closed_form(omega, k, beta, m):
    u = corner_singular(omega=omega, k=k)
    v = k_seminorm(u, Sector(omega), beta, m)
    assert v == pytest.approx(k_seminorm_oracle(u.lam, omega, beta, m), rel=1e-9)


def test_divergence_detected():
    u = corner_singular(omega=1.5 * math.pi, k=1)
    v = k_seminorm(u, Sector(1.5 * math.pi), -1.7, 2)
    assert isinstance(v, Diverged)
    assert not is_finite(v)
    assert "level" in v.to_dict()


def test_j_norm_of_constant():
    # |1|_{J^m_beta} = ||r^{beta+m}||_{L2}; step norm has weight r^0 at |alpha| = 0
    om, beta, m = 1.5 * math.pi, -1.5, 2
    one = Polynomial({(0, 0): 1.0})
    S = Sector(om)
    e = 2 * (beta + m) + 2
    assert j_norm(one, S, beta, m) == pytest.approx(math.sqrt(om / e), rel=1e-10)
    assert step_weighted_norm(one, S, beta, m) == pytest.approx(math.sqrt(om / 2), rel=1e-10)
    assert not is_finite(k_norm(one, S, beta, m))


def test_step_norm_needs_kappa():
    with pytest.raises(ValueError):
        step_weighted_norm(Polynomial({(0, 0): 1.0}), Sector(math.pi), -2.5, 1)


def test_polygon_restriction_matches_full():
    g = bundled_geometry("lshape")
    D = PolygonDomain(g)
    u = corner_singular(g.corners[0], k=1)
    chi = radial_cutoff(0.3, 0.7, center=g.corners[0].point)
    cut = chi * u
    beta = -1.5
    a = seminorm_sequence(cut, D, beta, 3)
    # adding a polynomial drops the support hint, forcing the full polygon
    b = seminorm_sequence(SumField([cut, Polynomial({(0, 0): 0.0})]), D, beta, 3)
    assert np.allclose(a.values, b.values, rtol=1e-9)


def test_sequence_and_csv():
    om = 1.5 * math.pi
    u = corner_singular(omega=om, k=1)
    seq = seminorm_sequence(u, Sector(om), -1.5, 6)
    assert seq.finite() and seq.M == 6
    for m in (0, 4, 6):
        assert seq.values[m] == pytest.approx(k_seminorm_oracle(u.lam, om, -1.5, m), rel=1e-9)
    lines = seq.to_csv().strip().splitlines()
    assert lines[0] == "m,s_m,diverged" and len(lines) == 8
    assert seq.to_dict()["space"] == "K"


@settings(max_examples=20, deadline=None)
@given(st.floats(0.2, 3.0))
def test_analytic_fit_geometric(C):
    vals = [C ** (m + 1) * math.factorial(m) for m in range(13)]
    rep = analytic_fit(SeminormSequence(vals, "K", -1.5, "synthetic"))
    assert rep.member
    assert rep.C == pytest.approx(C, rel=1e-12)
    assert rep.drift == pytest.approx(0.0, abs=1e-12)


def test_analytic_fit_rejects_gevrey():
    vals = [math.factorial(m) ** 2 for m in range(13)]
    rep = analytic_fit(SeminormSequence(vals, "K", -1.5, "synthetic"))
    assert not rep.member and rep.drift > 0.1
    rep = analytic_fit(SeminormSequence([1.0, Diverged(3, 2.0)] + [1.0] * 11, "K", -1.5, "x"))
    assert not rep.member and rep.C is None


def test_shift_check_on_sector():
    om = 1.5 * math.pi
    u = corner_singular(omega=om, k=1)
    ut, f = manufactured_pair(u, radial_cutoff(0.3, 0.7))
    rep = shift_constant_check(ut, f, Sector(om), -1.5, M=6, plateau_at=4)
    assert sorted(rep.C) == [2, 3, 4, 5, 6]
    assert all(c > 0 for c in rep.C.values())
    assert len(rep.f_seminorms) == 5
    assert "plateau_ratio" in rep.to_dict()


def test_wedge_m_vs_k_profile_one():
    # with a constant profile only transverse derivatives survive, so M = K
    W = Wedge(1.5 * math.pi)
    u = edge_singular_3d(omega=1.5 * math.pi, profile="one")
    for m in (0, 2):
        assert m_seminorm(u, W, -1.5, m) == pytest.approx(k_seminorm(u, W, -1.5, m), rel=1e-12)


def test_wedge_k_closed_form():
    # axial factor integrates to 1 over (0, 1); transverse part is the sector oracle
    W = Wedge(1.5 * math.pi)
    u = edge_singular_3d(omega=1.5 * math.pi, profile="one")
    assert k_seminorm(u, W, -1.2, 3) == pytest.approx(k_seminorm_oracle(2 / 3, 1.5 * math.pi, -1.2, 3), rel=1e-9)


def test_n_and_flagged_norms():
    W = Wedge(1.5 * math.pi)
    u = edge_singular_3d(omega=1.5 * math.pi, profile="sin")
    assert is_finite(n_norm(u, W, -1.5, 2))
    assert is_finite(flagged_norm(u, W, -1.5, 2, flagged_edges=(0,), kind="N"))
    with pytest.raises(ValueError):
        flagged_norm(u, W, -1.5, 2, kind="K")


@pytest.mark.parametrize("lam, beta, m, space, expected", [
    (2 / 3, -1.5, 8, "K", True), (2 / 3, -1.5, 8, "M", True),
    (0.4, -1.5, 0, "K", False), (0.4, -1.5, 1, "K", False), (0.4, -1.5, 3, "M", False),
])
def test_exponent_audit_table(lam, beta, m, space, expected):
    assert exponent_audit(lam, beta, m, space) is expected


def test_audit_matches_numerics_low_exponent():
    # lam = 1/2 at beta = -1.7: purely transverse derivatives diverge in both spaces
    W = Wedge(2 * math.pi)
    u = edge_singular_3d(omega=2 * math.pi, profile="sin")
    for m in range(3):
        for space, fn in (("K", k_seminorm), ("M", m_seminorm)):
            assert is_finite(fn(u, W, -1.7, m)) == exponent_audit(0.5, -1.7, m, space)
