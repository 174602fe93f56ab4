"""Fourier-multiplier operators on periodic grids.

Every operator here is a pointwise multiplication of the continuum-normalized
spectrum (see :mod:`frackorn.fields`) by a closed-form symbol on the lattice
``xi = k / L``:

* Riesz transform ``R_j``: ``-i xi_j / |xi|`` (zero at ``xi = 0``);
* derivative ``d/dx_j``: ``2 pi i xi_j``;
* fractional Laplacian ``(-Delta)^beta``: ``(2 pi |xi|)^(2 beta)``;
* Poisson extension: ``exp(-2 pi |xi| t)``;
* Poisson-type extension: the matrix symbol of :mod:`frackorn.kernels`.

Component indices (``axis``) are zero-based.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .errors import NumericalError, ParameterError
from .fields import GridSpec, SpectralField, VectorField, augment, lp_norm, to_spatial, to_spectral

__all__ = [
    "PoissonExtension",
    "PoissonTypeExtension",
    "apply_symbol",
    "riesz_symbol",
    "riesz_transform",
    "fractional_laplacian",
    "spatial_derivative",
    "divergence",
    "default_t_levels",
    "poisson_extend",
    "poisson_type_extend",
    "level_norms",
]


def apply_symbol(F: SpectralField, symbol) -> SpectralField:
    """Multiply a spectrum by a scalar or matrix symbol.

    Parameters
    ----------
    F : SpectralField
    symbol : ndarray or callable
        Either an array of shape ``grid.shape`` (scalar, applied to every
        component), ``grid.shape + (m_out, m)`` (matrix), or a callable taking
        the frequency array ``(N,)*d + (d,)`` and returning one of those.

    Raises
    ------
    NumericalError
        If the symbol is not finite at some lattice frequency.
    """
    g = F.grid
    sym = symbol(g.freqs()) if callable(symbol) else np.asarray(symbol)
    bad = ~np.isfinite(sym)
    if np.any(bad):
        idx = np.argwhere(bad)[0][: g.d]
        raise NumericalError(f"symbol is not finite at xi = {g.freqs()[tuple(idx)]}")
    if sym.shape == g.shape:
        return SpectralField(g, F.coeffs * sym[..., None], F.real)
    if sym.shape[: g.d] == g.shape and sym.ndim == g.d + 2:
        return SpectralField(g, np.einsum("...ij,...j->...i", sym, F.coeffs), F.real)
    raise ParameterError(f"symbol shape {sym.shape} incompatible with grid {g.shape}")


def _unit_freqs(g: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    xi = g.freqs()
    r = np.linalg.norm(xi, axis=-1)
    safe = np.where(r > 0, r, 1.0)
    return xi / safe[..., None] * (r > 0)[..., None], r


def riesz_symbol(g: GridSpec, axis: int) -> np.ndarray:
    """``-i xi_j / |xi|`` on the lattice, zero at the origin."""
    if not 0 <= axis < g.d:
        raise ParameterError(f"axis must lie in [0, {g.d})")
    u, _ = _unit_freqs(g)
    return -1j * u[..., axis]


def _apply(f: VectorField, sym: np.ndarray) -> VectorField:
    return to_spatial(apply_symbol(to_spectral(f), sym))


def riesz_transform(f: VectorField, axis: int) -> VectorField:
    """Riesz transform ``R_axis`` applied componentwise."""
    return _apply(f, riesz_symbol(f.grid, axis))


def fractional_laplacian(f: VectorField, beta: float) -> VectorField:
    """``(-Delta)^beta f`` with multiplier ``(2 pi |xi|)^(2 beta)``, ``0 < beta < 1``."""
    if not 0 < beta < 1:
        raise ParameterError("beta must lie in (0, 1)")
    r = np.linalg.norm(f.grid.freqs(), axis=-1)
    return _apply(f, (2 * np.pi * r) ** (2 * beta))


def spatial_derivative(f: VectorField, axis: int) -> VectorField:
    """Spectral derivative ``d/dx_axis`` (multiplier ``2 pi i xi_axis``)."""
    if not 0 <= axis < f.grid.d:
        raise ParameterError(f"axis must lie in [0, {f.grid.d})")
    return _apply(f, 2j * np.pi * f.grid.freqs()[..., axis])


def divergence(f: VectorField) -> VectorField:
    """Spectral divergence of a field with ``m >= d``; uses the first ``d`` components."""
    g = f.grid
    if f.m < g.d:
        raise ParameterError("divergence needs at least d components")
    Fh = to_spectral(f).coeffs
    xi = g.freqs()
    out = np.sum(2j * np.pi * xi * Fh[..., : g.d], axis=-1)
    return to_spatial(SpectralField(g, out[..., None]))


def default_t_levels(g: GridSpec, n: int = 48) -> np.ndarray:
    """``n`` geometric levels from ``h/2`` to ``L``."""
    return np.geomspace(g.h / 2, g.L, n)


@dataclass(frozen=True)
class PoissonExtension:
    """Poisson integral ``u(., t) = p_t * f`` and ``d/dt u`` on a list of levels."""

    base: VectorField
    t_levels: np.ndarray
    u_levels: list
    dt_levels: list


@dataclass(frozen=True)
class PoissonTypeExtension:
    """Poisson-type integral ``U(., t) = P_t * F`` and ``d/dt U`` on a list of levels."""

    base: VectorField
    t_levels: np.ndarray
    U_levels: list
    dt_levels: list


def _levels(t_levels) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t_levels, dtype=float))
    if t.size == 0:
        raise ParameterError("t_levels is empty")
    if np.any(t <= 0) or np.any(np.diff(t) <= 0):
        raise ParameterError("t_levels must be positive and increasing")
    return t


def poisson_extend(f: VectorField, t_levels: Sequence[float], derivative: bool = True) -> PoissonExtension:
    """Poisson extension of ``f`` computed by symbol multiplication."""
    t = _levels(t_levels)
    Fh = to_spectral(f)
    xi = f.grid.freqs()
    us, dts = [], []
    for tk in t:
        us.append(to_spatial(apply_symbol(Fh, kernels.poisson_symbol(xi, tk))))
        if derivative:
            dts.append(to_spatial(apply_symbol(Fh, kernels.dt_poisson_symbol(xi, tk))))
    return PoissonExtension(f, t, us, dts)


def poisson_type_extend(F: VectorField, t_levels: Sequence[float], derivative: bool = True) -> PoissonTypeExtension:
    """Poisson-type extension of an augmented field ``F = (f, 0)``.

    A field with ``m = d`` is augmented automatically.
    """
    g = F.grid
    if F.m == g.d:
        F = augment(F)
    if F.m != g.d + 1:
        raise ParameterError("Poisson-type extension needs m = d or d + 1 components")
    t = _levels(t_levels)
    Fh = to_spectral(F)
    xi = g.freqs()
    Us, dts = [], []
    for tk in t:
        Us.append(to_spatial(apply_symbol(Fh, kernels.poisson_type_symbol(xi, tk))))
        if derivative:
            dts.append(to_spatial(apply_symbol(Fh, kernels.dt_poisson_type_symbol(xi, tk))))
    return PoissonTypeExtension(F, t, Us, dts)


def level_norms(levels: list, p: float) -> np.ndarray:
    """``lp_norm`` of each field in a list."""
    return np.array([lp_norm(v, p) for v in levels])

