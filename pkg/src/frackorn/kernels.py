"""Poisson kernel, matrix Poisson-type kernel and their Fourier symbols.

For ``x`` in R^d and ``t > 0``

    p_t(x) = (2 / omega_d) t / (|x|^2 + t^2)^((d+1)/2),
    P_t(x) = (2 (d+1) / omega_d) t / (|x|^2 + t^2)^((d+3)/2) * (x, t) (x, t)^T,

where ``omega_d`` is the surface measure of the unit sphere in R^(d+1). Their
transforms are ``exp(-2 pi |xi| t)`` and
``exp(-2 pi |xi| t) (I + 2 pi |xi| t M(xi))`` with the nilpotent matrix

    M(xi) = [[-xi^ xi^T, -i xi^], [-i xi^T, 1]],   xi^ = xi / |xi|.

Arrays of points have shape ``(..., d)``; matrix outputs have shape
``(..., d+1, d+1)``.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import special

from .errors import ParameterError
from .fields import GridSpec

__all__ = [
    "omega",
    "poisson_kernel",
    "dt_poisson_kernel",
    "poisson_type_kernel",
    "dt_poisson_type_kernel",
    "directional_profile",
    "poisson_symbol",
    "dt_poisson_symbol",
    "nilpotent_part",
    "poisson_type_symbol",
    "dt_poisson_type_symbol",
    "kernel_mass",
    "dt_bound_constant",
]


def omega(d: int) -> float:
    """Surface measure of the unit sphere ``S^d`` in ``R^(d+1)``.

    Examples
    --------
    >>> round(omega(2) / np.pi, 12)
    4.0
    """
    return 2 * math.pi ** ((d + 1) / 2) / math.gamma((d + 1) / 2)


def _check_t(t):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ParameterError("t must be positive")
    return t


def _points(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != d:
        raise ParameterError(f"points must have trailing dimension {d}, got shape {x.shape}")
    return x


def poisson_kernel(x, t, d: int) -> np.ndarray:
    """Poisson kernel ``p_t(x)``.

    Examples
    --------
    >>> round(float(poisson_kernel([0.0, 0.0], 1.0, 2)) * 2 * np.pi, 12)
    1.0
    """
    t = _check_t(t)
    x = _points(x, d)
    r2 = np.sum(x**2, axis=-1)
    return (2 / omega(d)) * t / (r2 + t**2) ** ((d + 1) / 2)


def dt_poisson_kernel(x, t, d: int) -> np.ndarray:
    """``d/dt p_t(x)``."""
    t = _check_t(t)
    x = _points(x, d)
    q = np.sum(x**2, axis=-1) + t**2
    return (2 / omega(d)) * (q ** (-(d + 1) / 2) - (d + 1) * t**2 * q ** (-(d + 3) / 2))


def _augmented(x: np.ndarray, t) -> np.ndarray:
    t = np.broadcast_to(t, x.shape[:-1])
    return np.concatenate([x, t[..., None]], axis=-1)


def poisson_type_kernel(x, t, d: int) -> np.ndarray:
    """Matrix Poisson-type kernel ``P_t(x)``, shape ``(..., d+1, d+1)``.

    Examples
    --------
    >>> P = poisson_type_kernel([0.0, 0.0], 1.0, 2)
    >>> round(float(P[2, 2]) * 2 * np.pi / 3, 12), float(abs(P[:2]).max())
    (1.0, 0.0)
    """
    t = _check_t(t)
    x = _points(x, d)
    v = _augmented(x, t)
    q = np.sum(x**2, axis=-1) + t**2
    c = 2 * (d + 1) / omega(d) * t * q ** (-(d + 3) / 2)
    # form v v^T first so the result is exactly symmetric
    return c[..., None, None] * (v[..., :, None] * v[..., None, :])


def dt_poisson_type_kernel(x, t, d: int) -> np.ndarray:
    """Entrywise ``d/dt P_t(x)``."""
    t = _check_t(t)
    x = _points(x, d)
    tb = np.broadcast_to(t, x.shape[:-1])
    v = _augmented(x, t)
    q = np.sum(x**2, axis=-1) + tb**2
    c = 2 * (d + 1) / omega(d)
    vv = v[..., :, None] * v[..., None, :]
    # d/dt of t v_i v_j q^{-(d+3)/2}; only v_{d+1} = t depends on t
    e = np.zeros(d + 1)
    e[-1] = 1.0
    dvv = e[:, None] * v[..., None, :] + v[..., :, None] * e[None, :]
    a = q ** (-(d + 3) / 2)
    da = -(d + 3) * tb * q ** (-(d + 5) / 2)
    tt = tb[..., None, None]
    return c * (vv * a[..., None, None] + tt * dvv * a[..., None, None] + tt * vv * da[..., None, None])


def directional_profile(x, t, d: int) -> np.ndarray:
    """Vector ``Pbar(x, t)`` with ``P_t(x) (z, 0) = Pbar(x, t) (z . x/|x|)``, shape ``(..., d+1)``."""
    t = _check_t(t)
    x = _points(x, d)
    r = np.linalg.norm(x, axis=-1)
    q = r**2 + t**2
    c = 2 * (d + 1) / omega(d) * t * r * q ** (-(d + 3) / 2)
    return c[..., None] * _augmented(x, t)


# ---------------------------------------------------------------------------
# Symbols
# ---------------------------------------------------------------------------


def _freqs(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 0:
        xi = xi[None]
    return xi


def poisson_symbol(xi, t) -> np.ndarray:
    """``exp(-2 pi |xi| t)``; ``xi`` has shape ``(..., d)``."""
    xi = _freqs(xi)
    return np.exp(-2 * np.pi * np.linalg.norm(xi, axis=-1) * t)


def dt_poisson_symbol(xi, t) -> np.ndarray:
    xi = _freqs(xi)
    a = 2 * np.pi * np.linalg.norm(xi, axis=-1)
    return -a * np.exp(-a * t)


def nilpotent_part(xi) -> np.ndarray:
    """Matrix ``M(xi)``; defined as zero at ``xi = 0``."""
    xi = _freqs(xi)
    d = xi.shape[-1]
    r = np.linalg.norm(xi, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        u = np.where(r[..., None] > 0, xi / np.where(r > 0, r, 1.0)[..., None], 0.0)
    M = np.zeros(xi.shape[:-1] + (d + 1, d + 1), dtype=complex)
    M[..., :d, :d] = -u[..., :, None] * u[..., None, :]
    M[..., :d, d] = -1j * u
    M[..., d, :d] = -1j * u
    M[..., d, d] = np.where(r > 0, 1.0, 0.0)
    return M


def poisson_type_symbol(xi, t) -> np.ndarray:
    """``exp(-2 pi |xi| t) (I + 2 pi |xi| t M(xi))``; equals the identity at ``xi = 0``.

    Examples
    --------
    >>> S = poisson_type_symbol([0.3, -0.2], 0.0)
    >>> bool(np.allclose(S, np.eye(3)))
    True
    """
    xi = _freqs(xi)
    if np.any(np.asarray(t) < 0):
        raise ParameterError("t must be non-negative")
    d = xi.shape[-1]
    a = 2 * np.pi * np.linalg.norm(xi, axis=-1) * t
    eye = np.eye(d + 1)
    return np.exp(-a)[..., None, None] * (eye + a[..., None, None] * nilpotent_part(xi))


def dt_poisson_type_symbol(xi, t) -> np.ndarray:
    """``d/dt`` of :func:`poisson_type_symbol`: ``a e^{-a t} ((1 - a t) M - I)`` with ``a = 2 pi |xi|``."""
    xi = _freqs(xi)
    d = xi.shape[-1]
    a = 2 * np.pi * np.linalg.norm(xi, axis=-1)
    e = np.exp(-a * t)
    M = nilpotent_part(xi)
    return (a * e)[..., None, None] * ((1 - a * t)[..., None, None] * M - np.eye(d + 1))


# ---------------------------------------------------------------------------
# Grid integrals with analytic exterior mass
# ---------------------------------------------------------------------------


def _radial_tail(a: float, b: float, R: np.ndarray, t: float) -> np.ndarray:
    """``int_R^inf r^a (r^2 + t^2)^(-b) dr`` via the incomplete beta function."""
    alpha = b - (a + 1) / 2
    beta = (a + 1) / 2
    u = t**2 / (R**2 + t**2)
    return 0.5 * t ** (a + 1 - 2 * b) * special.betainc(alpha, beta, u) * special.beta(alpha, beta)


@lru_cache(maxsize=8)
def _face_rule(d: int, n: int):
    """Directions and solid-angle weights covering the exterior of the unit cube.

    Each face ``x_axis = sign`` is parameterized by the remaining coordinates
    ``a`` in ``[-1, 1]^(d-1)``; the direction is ``(sign e_axis + a)/|.|`` and
    the ray leaves the cube of half-side ``1`` at distance ``sqrt(1 + |a|^2)``.
    """
    if d == 1:
        return np.array([[1.0], [-1.0]]), np.ones(2), np.ones(2)
    g, gw = np.polynomial.legendre.leggauss(n)
    mesh = np.stack(np.meshgrid(*([g] * (d - 1)), indexing="ij"), -1).reshape(-1, d - 1)
    wts = np.prod(np.stack(np.meshgrid(*([gw] * (d - 1)), indexing="ij"), -1).reshape(-1, d - 1), axis=1)
    norm2 = 1 + np.sum(mesh**2, axis=1)
    dirs, weights, exits = [], [], []
    for axis in range(d):
        for sign in (1.0, -1.0):
            v = np.insert(mesh, axis, sign, axis=1)
            dirs.append(v / np.sqrt(norm2)[:, None])
            weights.append(wts * norm2 ** (-d / 2))
            exits.append(np.sqrt(norm2))
    return np.concatenate(dirs), np.concatenate(weights), np.concatenate(exits)


def _exterior_mass(kind: str, d: int, t: float, half: float, n: int = 48) -> np.ndarray:
    """Integral of the kernel over the complement of the cube ``[-half, half]^d``."""
    w, sw, ex = _face_rule(d, n)
    R = half * ex
    if kind == "poisson":
        rad = _radial_tail(d - 1, (d + 1) / 2, R, t)
        return (2 / omega(d)) * t * np.sum(sw * rad)
    c = 2 * (d + 1) / omega(d) * t
    b = (d + 3) / 2
    out = np.zeros((d + 1, d + 1))
    rxx = _radial_tail(d + 1, b, R, t)
    rxt = _radial_tail(d, b, R, t)
    rtt = _radial_tail(d - 1, b, R, t)
    out[:d, :d] = np.einsum("q,qi,qj->ij", sw * rxx, w, w)
    out[:d, d] = out[d, :d] = t * np.einsum("q,qi->i", sw * rxt, w)
    out[d, d] = t**2 * np.sum(sw * rtt)
    return c * out


def _closed_box_rule(grid: GridSpec):
    """Trapezoid nodes and weights on the closed box ``[-L/2, L/2]^d``."""
    x1 = np.linspace(-grid.L / 2, grid.L / 2, grid.N + 1)
    w1 = np.full(grid.N + 1, grid.h)
    w1[[0, -1]] = grid.h / 2
    x = np.stack(np.meshgrid(*([x1] * grid.d), indexing="ij"), -1)
    w = w1
    for _ in range(grid.d - 1):
        w = np.multiply.outer(w, w1)
    return x, w


def kernel_mass(kind: str, grid: GridSpec, t: float = 1.0, tail: bool = True):
    """Integral over R^d of ``p_t``, ``P_t`` or their ``t``-derivatives.

    The box ``[-L/2, L/2]^d`` is integrated with the trapezoid rule on the
    grid nodes (plus the closing face); with ``tail=True`` the exterior mass
    is added in closed form along rays, integrated over the cube faces with
    Gauss-Legendre quadrature.

    Parameters
    ----------
    kind : {"poisson", "poisson_type", "dt_poisson_type"}
    grid : GridSpec
        Must be centred.
    t : float

    Returns
    -------
    float or ndarray
        Scalar for ``poisson``, a ``(d+1, d+1)`` matrix otherwise.
    """
    if not grid.centered:
        raise ParameterError("kernel_mass needs a centred grid")
    x, w = _closed_box_rule(grid)
    d = grid.d
    if kind == "poisson":
        val = float(np.sum(w * poisson_kernel(x, t, d)))
        if tail:
            val += float(_exterior_mass("poisson", d, t, grid.L / 2))
        return val
    if kind == "poisson_type":
        val = np.tensordot(w, poisson_type_kernel(x, t, d), axes=d)
        if tail:
            val = val + _exterior_mass("poisson_type", d, t, grid.L / 2)
        return val
    if kind == "dt_poisson_type":
        val = np.tensordot(w, dt_poisson_type_kernel(x, t, d), axes=d)
        if tail:
            # the exterior mass of P_t is smooth in t; differentiate it centrally
            dt = 1e-4 * t
            val = val + (
                _exterior_mass("poisson_type", d, t + dt, grid.L / 2)
                - _exterior_mass("poisson_type", d, t - dt, grid.L / 2)
            ) / (2 * dt)
        return val
    raise ParameterError(f"unknown kernel kind {kind!r}")


def grid_sum(kind: str, grid: GridSpec, t: float = 1.0):
    """Plain node sum ``h^d sum_x K(x)`` over the periodic grid nodes."""
    x = grid.coords()
    if kind == "poisson":
        return float(grid.cell_volume * np.sum(poisson_kernel(x, t, grid.d)))
    if kind == "poisson_type":
        return grid.cell_volume * poisson_type_kernel(x, t, grid.d).sum(axis=tuple(range(grid.d)))
    raise ParameterError(f"unknown kernel kind {kind!r}")


@lru_cache(maxsize=4)
def dt_bound_constant(d: int) -> float:
    """Smallest ``c`` with ``|d/dt P_t^{jk}(x)| <= c min(|x|^{-d-1}, t^{-d-1})``.

    By scaling ``d/dt P_t(x) = t^{-d-1} G(x/t)``, so ``c`` is the supremum of
    ``|G^{jk}(y)| max(|y|, 1)^{d+1}``. Entries are largest along a coordinate
    axis, which is where the supremum is taken (dense radial sampling).
    """
    r = np.concatenate([np.linspace(0, 10, 20001), np.geomspace(10, 1e6, 2001)])
    y = np.zeros((r.size, d))
    y[:, 0] = r
    G = dt_poisson_type_kernel(y, 1.0, d)
    scale = np.maximum(r, 1.0) ** (d + 1)
    return float(np.max(np.abs(G) * scale[:, None, None]))
