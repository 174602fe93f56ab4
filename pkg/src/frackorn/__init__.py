"""Numerical checks for fractional Korn inequalities and a nonlocal elasticity-type system.

Submodules
----------
fields          grids, sampled vector fields and test families
kernels         Poisson and matrix Poisson-type kernels and their symbols
spectral_ops    Fourier multipliers: Riesz transforms, fractional Laplacian, extensions
seminorms       Gagliardo, projected and Poisson t-integral semi-norms
verification    checks producing pass/fail reports
nonlocal_system discretized nonlocal system and its solver
cli             command-line front end

The pair-sum kernels run under numba; ``FRACKORN_BACKEND=numpy`` selects
the pure-numpy fallback.
"""

from ._accel import BACKEND
from .errors import NumericalError, ParameterError
from .fields import FracParams, GridSpec, SpectralField, VectorField, make_grid

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "FracParams",
    "GridSpec",
    "NumericalError",
    "ParameterError",
    "SpectralField",
    "VectorField",
    "make_grid",
    "__version__",
]
