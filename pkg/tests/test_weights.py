import math

import pytest

from cornerreg.geometry import bundled_geometry
from cornerreg.weights import (
    MissingDataError,
    WeightMultiExponent,
    admissible_2d,
    admissible_3d,
    admissible_interval,
    edge_closed_range_condition,
    kappa,
    load_weights,
    shift_condition_aniso,
    verdict_report,
)
from cornerreg.spectra2d import corner_spectrum_laplace


def test_uniform_and_kappa():
    g = bundled_geometry("fichera")
    w = WeightMultiExponent.uniform(g, -1.2, -1.4)
    assert kappa(w) == pytest.approx(1.4)
    assert kappa(w.shifted(1.0)) == pytest.approx(0.4)


def test_from_dict_defaults_and_missing():
    g = bundled_geometry("lshape")
    w = load_weights({"default": -0.5, "corners": {"0": -1.5}}, g)
    assert w.corners[0] == -1.5 and w.corners[1] == -0.5
    with pytest.raises(MissingDataError):
        load_weights({"corners": {"0": -1.5}}, g)
    with pytest.raises(MissingDataError):
        load_weights({"corners": [-1.0]}, g)


@pytest.mark.parametrize("delta, ok", [(1e-3, True), (-1e-3, False)])
def test_lshape_boundary(delta, ok):
    g = bundled_geometry("lshape")
    # -beta-1 on either side of 2/3 at the re-entrant corner
    beta = -1 - (2 / 3 - delta)
    w = WeightMultiExponent.uniform(g, -1.5)
    w = WeightMultiExponent(tuple(beta if i == 0 else b for i, b in enumerate(w.corners)))
    v = admissible_2d(g, w)
    assert v[0].admissible is ok
    assert all(x.admissible for x in v[1:])


def test_exact_endpoint_is_excluded():
    from fractions import Fraction
    g = bundled_geometry("lshape")
    w = WeightMultiExponent((-Fraction(5, 3),) + (-1.5,) * 5)
    assert not admissible_2d(g, w)[0].admissible
    w = WeightMultiExponent((-1.0,) * 6)
    assert all(v.admissible for v in admissible_2d(g, w))


def test_admissible_3d_cube():
    g = bundled_geometry("cube")
    w = WeightMultiExponent.uniform(g, -2.0, -1.5)
    lam = {c.id: 3.0 for c in g.corners}
    v = admissible_3d(g, w, None, lam, "dirichlet")
    assert all(x.admissible for x in v)
    rep = verdict_report(v, g)
    assert rep["admissible"] and rep["geometry"] == "cube"
    with pytest.raises(MissingDataError):
        admissible_3d(g, w, None, {}, "dirichlet")


def test_mixed_flagged_uncertified():
    g = bundled_geometry("cube")
    w = WeightMultiExponent.uniform(g, -1.6, -1.5)
    v = admissible_3d(g, w, None, {c.id: 2.0 for c in g.corners}, "mixed")
    assert any("not certified" in x.note for x in v if x.entity == "corner")


def test_shift_condition_resonance():
    g = bundled_geometry("cube")
    # -beta_e - 1 = 2 = pi/omega for a right-angle edge
    v = shift_condition_aniso(g, WeightMultiExponent.uniform(g, -1.5, -3.0))
    assert not any(x.admissible for x in v)
    assert v[0].extra["k"] == 1
    v = shift_condition_aniso(g, WeightMultiExponent.uniform(g, -1.5, -1.5))
    assert all(x.admissible for x in v)


def test_closed_range():
    sp = corner_spectrum_laplace(1.5 * math.pi)
    assert not edge_closed_range_condition(-5 / 3, sp)
    assert edge_closed_range_condition(-1.5, sp)


def test_interval():
    assert admissible_interval(2 / 3) == pytest.approx((-5 / 3, -1.0))
    assert admissible_interval(0.5, "corner3d") == pytest.approx((-2.0, -1.0))
