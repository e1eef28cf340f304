"""Spectral toolkit for periodic homogenization of fourth-order operators.

Builds cell correctors and effective tensors for divergence-form operators
div div (a(x/eps) grad^2 u) with periodic coefficients, applies Steklov
smoothing and corrector operators, and measures resolvent approximation
rates on the torus.
"""

from .errors import (
    BadParameters,
    GridMismatch,
    NoConvergence,
    NonZeroMean,
    NotElliptic,
    NotSolenoidal,
    PerihomError,
    PropertyViolation,
    SolenoidalityViolation,
    SymmetryViolation,
    UnsupportedOrder,
)
from .spectral import (
    GridSpec,
    MatrixField,
    ScalarField,
    apply_D,
    apply_Dstar,
    derive,
    gradient,
    inner_product,
    inv_laplacian_power,
    pointwise_product,
    random_trig_field,
    set_fft_workers,
    sobolev_norm,
)

__all__ = [
    "BadParameters",
    "GridMismatch",
    "GridSpec",
    "MatrixField",
    "NoConvergence",
    "NonZeroMean",
    "NotElliptic",
    "NotSolenoidal",
    "PerihomError",
    "PropertyViolation",
    "ScalarField",
    "SolenoidalityViolation",
    "SymmetryViolation",
    "UnsupportedOrder",
    "apply_D",
    "apply_Dstar",
    "derive",
    "gradient",
    "inner_product",
    "inv_laplacian_power",
    "pointwise_product",
    "random_trig_field",
    "set_fft_workers",
    "sobolev_norm",
]

__version__ = "0.1.0"
