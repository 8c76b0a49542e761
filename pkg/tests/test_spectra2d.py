import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from cornerreg.spectra2d import (
    ProblemSpec,
    WindowTooSmallError,
    b_threshold,
    b_threshold_exact,
    corner_spectrum_laplace,
    singular_exponents_up_to,
    spectrum_kind,
)


def _roots(fun, window, n=20000):
    """Sign-change bracketing of a transcendental characteristic function."""
    xs = np.linspace(-window, window, n + 1)
    ys = fun(xs)
    out = []
    for a, b, fa, fb in zip(xs[:-1], xs[1:], ys[:-1], ys[1:]):
        if fa == 0:
            out.append(a)
        elif fa * fb < 0:
            out.append(brentq(fun, a, b, xtol=1e-14))
    return np.array(out)


@pytest.mark.parametrize("omega", [0.7, math.pi / 2, 1.3 * math.pi, 3 * math.pi / 2, 2 * math.pi])
def test_dirichlet_matches_characteristic_roots(omega):
    sp = corner_spectrum_laplace(omega, window=6.0)
    # Dirichlet eigenpairs of -phi'' on (0, omega): sin(lam*omega) = 0, lam != 0
    roots = _roots(lambda x: np.sin(x * omega), 6.0)
    roots = roots[np.abs(roots) > 1e-9]
    inside = roots[np.abs(roots) < 6.0 - 1e-6]
    assert np.allclose(np.sort(inside), sp.values[np.abs(sp.values) < 6.0 - 1e-6], atol=1e-10)


@pytest.mark.parametrize("omega", [0.9, 3 * math.pi / 2])
def test_mixed_matches_characteristic_roots(omega):
    sp = corner_spectrum_laplace(omega, ("dirichlet", "neumann"), window=5.0)
    roots = _roots(lambda x: np.cos(x * omega), 5.0)
    inside = roots[np.abs(roots) < 5.0 - 1e-6]
    assert np.allclose(np.sort(inside), sp.values[np.abs(sp.values) < 5.0 - 1e-6], atol=1e-10)


def test_neumann_contains_zero():
    sp = corner_spectrum_laplace(math.pi / 2, "neumann")
    assert sp.contains(0.0)
    assert b_threshold(sp) == pytest.approx(2.0)


@pytest.mark.parametrize("q", [Fraction(1, 2), Fraction(1), Fraction(3, 2), Fraction(2)])
def test_b_threshold_exact(q):
    sp = corner_spectrum_laplace(float(q) * math.pi)
    assert abs(b_threshold(sp) - 1 / float(q)) <= 1e-14
    assert b_threshold_exact(sp) == 1 / q


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 2 * math.pi))
def test_spectrum_symmetric(omega):
    sp = corner_spectrum_laplace(omega, window=4.0)
    assert np.allclose(np.sort(-sp.values), sp.values, atol=1e-12)
    assert np.all(np.diff(sp.values) > 0)


def test_singular_exponents_flag_integers():
    ex = singular_exponents_up_to(math.pi / 2, n=3)
    assert [e.value for e in ex] == pytest.approx([2.0, 4.0])
    assert all(e.critical for e in ex)
    ex = singular_exponents_up_to(1.5 * math.pi, n=1)
    assert [e.value for e in ex] == pytest.approx([2 / 3, 4 / 3, 2.0])
    assert [e.critical for e in ex] == [False, False, True]


def test_errors():
    with pytest.raises(ValueError):
        corner_spectrum_laplace(7.0)
    with pytest.raises(ValueError):
        spectrum_kind(("dirichlet", "robin"))
    with pytest.raises(ValueError):
        ProblemSpec(operator="helmholtz")
    with pytest.raises(WindowTooSmallError):
        b_threshold(corner_spectrum_laplace(math.pi / 4, window=1.0))
