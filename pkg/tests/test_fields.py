import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cornerreg.fields import (
    AxialProfile,
    CriticalExponentError,
    LaplacianField,
    PartialField,
    Polynomial,
    ProductField,
    SumField,
    corner_singular,
    edge_singular_3d,
    manufactured_pair,
    membership_oracle,
    multi_indices,
    radial_cutoff,
    smooth_step_derivatives,
)


def _fd_check(u, x, alpha, i, h=1e-5):
    """Central difference of the alpha-derivative in direction i against the next one."""
    e = np.zeros(u.dim)
    e[i] = h
    fd = (u.derivative(x + e, alpha) - u.derivative(x - e, alpha)) / (2 * h)
    beta = list(alpha)
    beta[i] += 1
    exact = u.derivative(x, tuple(beta))
    scale = np.maximum(1.0, np.abs(exact))
    return np.max(np.abs(fd - exact) / scale)


PTS = np.array([[0.3, 0.2], [-0.4, 0.5], [-0.2, -0.6], [0.5, -0.05]])


@pytest.mark.parametrize("k, bc", [(1, "dirichlet"), (2, "dirichlet"), (1, "neumann"), (2, "neumann"),
                                   (1, ("dirichlet", "neumann")), (3, ("neumann", "dirichlet"))])
def test_singular_derivatives_consistent(k, bc):
    u = corner_singular(omega=1.5 * math.pi, k=k, bc=bc)
    for order in range(4):
        for a in multi_indices(2, order):
            for i in range(2):
                assert _fd_check(u, PTS, a, i) < 1e-6


@pytest.mark.parametrize("order", [0, 2, 5, 9])
def test_singular_is_harmonic(order):
    u = corner_singular(omega=1.5 * math.pi, k=1)
    lap = LaplacianField(u)
    for a in multi_indices(2, order):
        d = lap.derivative(PTS, a)
        ref = np.max(np.abs(u.derivative(PTS, (a[0] + 2, a[1]))))
        assert np.max(np.abs(d)) <= 1e-10 * max(1.0, ref)


def test_singular_boundary_conditions():
    om = 1.5 * math.pi
    r = np.linspace(0.1, 0.9, 7)
    side0 = np.stack([r, 0 * r], 1)
    side1 = np.stack([r * math.cos(om), r * math.sin(om)], 1)
    ud = corner_singular(omega=om, k=1)
    assert np.allclose(ud(side0), 0, atol=1e-14)
    assert np.allclose(ud(side1), 0, atol=1e-14)
    un = corner_singular(omega=om, k=1, bc="neumann")
    # normal derivative on the side theta=0 is -d/dy
    assert np.allclose(un.derivative(side0, (0, 1)), 0, atol=1e-13)


def test_homogeneity():
    u = corner_singular(omega=1.5 * math.pi, k=1)
    assert u.degree == pytest.approx(2 / 3)
    for t in (0.5, 0.25):
        assert np.allclose(u(t * PTS), t ** (2 / 3) * u(PTS), rtol=1e-13)


def test_critical_exponent_rejected():
    with pytest.raises(CriticalExponentError):
        corner_singular(omega=math.pi / 2, k=1)


def test_polynomial_derivatives():
    p = Polynomial({(2, 1): 3.0, (0, 0): 1.0})
    x = np.array([[0.5, 2.0]])
    assert p(x)[0] == pytest.approx(3 * 0.25 * 2 + 1)
    assert p.derivative(x, (2, 1))[0] == pytest.approx(6.0)
    assert p.derivative(x, (3, 0))[0] == 0.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 12), st.floats(-0.5, 1.5))
def test_smooth_step_derivatives(n, t):
    d = smooth_step_derivatives(np.array([t]), n + 1)
    assert d.shape[0] == n + 2
    # value stays in [0, 1] and is flat outside (0, 1)
    assert -1e-15 <= d[0, 0] <= 1 + 1e-15
    if t <= 0 or t >= 1:
        assert np.all(d[1:, 0] == 0)


def test_cutoff_derivatives_consistent():
    chi = radial_cutoff(0.3, 0.7)
    x = np.array([[0.35, 0.2], [0.1, -0.5], [-0.45, 0.3]])
    for order in range(5):
        for a in multi_indices(2, order):
            for i in range(2):
                assert _fd_check(chi, x, a, i, h=1e-6) < 1e-5
    assert np.allclose(chi(np.array([[0.1, 0.1]])), 1.0)
    assert np.allclose(chi(np.array([[0.8, 0.0]])), 0.0)
    assert chi.support_disk()[1] == 0.7


def test_product_and_sum():
    u = corner_singular(omega=1.5 * math.pi, k=1)
    chi = radial_cutoff(0.3, 0.7)
    p = ProductField(chi, u)
    s = SumField([u, Polynomial({(1, 0): 1.0})])
    for a in multi_indices(2, 3):
        for i in range(2):
            assert _fd_check(p, PTS, a, i) < 1e-6
    assert np.allclose(s.derivative(PTS, (1, 0)), u.derivative(PTS, (1, 0)) + 1)


def test_manufactured_pair_matches_laplacian():
    u = corner_singular(omega=1.5 * math.pi, k=1)
    chi = radial_cutoff(0.3, 0.7)
    ut, f = manufactured_pair(u, chi)
    lap = LaplacianField(ut)
    x = np.array([[0.4, 0.3], [-0.5, 0.1], [0.1, -0.55]])
    for a in [(0, 0), (1, 0), (2, 1)]:
        assert np.allclose(lap.derivative(x, a), f.derivative(x, a), rtol=1e-10, atol=1e-10)


def test_partial_field():
    u = corner_singular(omega=1.5 * math.pi, k=2)
    d = PartialField(u, (1, 0))
    assert np.allclose(d.derivative(PTS, (0, 2)), u.derivative(PTS, (1, 2)))


def test_edge_field_factorizes():
    e = edge_singular_3d(omega=1.5 * math.pi, profile="sin")
    s = corner_singular(omega=1.5 * math.pi, k=1)
    x = np.array([[0.3, 0.2, 0.4], [-0.3, 0.4, 0.9]])
    for a in [(0, 0, 0), (1, 2, 0), (0, 1, 3)]:
        g = AxialProfile("sin").derivative(x[:, 2], a[2])
        assert np.allclose(e.derivative(x, a), s.derivative(x[:, :2], a[:2]) * g)


def test_edge_frame_must_be_axis_aligned():
    c, s = math.cos(0.3), math.sin(0.3)
    with pytest.raises(NotImplementedError):
        edge_singular_3d(omega=1.5 * math.pi, frame=[[c, s, 0], [-s, c, 0], [0, 0, 1]])


def test_derivative_validation():
    u = corner_singular(omega=1.5 * math.pi, k=1, m_max=4)
    with pytest.raises(ValueError):
        u.derivative(PTS, (5, 0))
    with pytest.raises(ValueError):
        u.derivative(PTS, (1, 0, 0))


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 4.0), st.floats(-4.0, -0.05))
def test_oracle_threshold(lam, beta):
    if abs(lam - round(lam)) < 1e-9 or abs(beta - round(beta)) < 1e-9:
        return
    assert membership_oracle(lam, beta) == (lam > -beta - 1)


def test_oracle_polynomial_j():
    # constants sit in J^2_beta for beta=-1.5 (order 2 exceeds -beta-1) but not in K
    assert not membership_oracle(0, -1.5, "K", 2, polynomial=True)
    assert membership_oracle(0, -1.5, "J", 2, polynomial=True)
    with pytest.raises(CriticalExponentError):
        membership_oracle(0.5, -1.0)
