"""Weighted regularity toolkit for the Laplacian in polygons and polyhedra.

Submodules: :mod:`~cornerreg.geometry`, :mod:`~cornerreg.spectra2d`,
:mod:`~cornerreg.spherical`, :mod:`~cornerreg.weights`,
:mod:`~cornerreg.fields`, :mod:`~cornerreg.norms`, :mod:`~cornerreg.mesher`
and the command line in :mod:`~cornerreg.cli`.
"""

from .geometry import (
    GeometryError,
    PolytopeGeometry,
    bundled_geometry,
    load_geometry,
)
from .spectra2d import corner_spectrum_laplace, b_threshold, singular_exponents_up_to
from .weights import WeightMultiExponent, kappa, admissible_2d, admissible_3d
from .fields import (
    CriticalExponentError,
    corner_singular,
    edge_singular_3d,
    radial_cutoff,
    manufactured_pair,
    membership_oracle,
)
from .norms import (
    Sector,
    PolygonDomain,
    Wedge,
    k_seminorm,
    j_norm,
    step_weighted_norm,
    m_seminorm,
    n_norm,
    seminorm_sequence,
    analytic_fit,
    shift_constant_check,
    exponent_audit,
)
from .spherical import spherical_cap, laplace_beltrami_eigs, corner_limit_exponent, corner_exponent_pipeline
from .mesher import graded_mesh_2d, aniso_graded_mesh_3d

__version__ = "0.1.0"
