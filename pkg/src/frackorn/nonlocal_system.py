"""Discrete strongly coupled nonlocal system and its variational solver.

Nodes ``x_i`` with weights ``w_i`` discretize a bounded domain. For a nodal
field ``u`` the projected difference is ``D_ij = (u_i - u_j).e_ij`` with
``e_ij = (x_i - x_j)/|x_i - x_j|`` and the operator acts through

    <L u, v> = sum_{i != j} W_ij |D_ij(u)|^{p-2} D_ij(u) D_ij(v),
    W_ij = w_i w_j A(x_i, x_j) k_ij,

where ``k_ij = |x_i - x_j|^{-d-sp}`` except for lattice neighbours at distance
``h``, which use the average of the kernel over the neighbour's cell. The
solution minimizes the convex energy

    E(u) = (1/p) sum_{i != j} W_ij |D_ij(u)|^p - sum_i w_i F_i.u_i

over fields vanishing on a collar of width ``2h`` along the boundary, which
removes rigid motions from the kernel of the operator.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from . import _accel
from .errors import NumericalError, ParameterError
from .fields import FracParams, GridSpec, VectorField, make_grid, smooth_window
from .seminorms import dual_norm_estimate, gagliardo_seminorm, probe_dictionary, projected_seminorm

__all__ = [
    "Coefficient",
    "constant_coefficient",
    "smooth_coefficient",
    "checkerboard_coefficient",
    "parse_coefficient",
    "NonlocalProblem",
    "SolveReport",
    "build_ball_problem",
    "scenario",
    "projected_difference",
    "apply_operator",
    "energy",
    "energy_gradient",
    "energy_change",
    "dense_matrix",
    "solve",
    "solve_dense",
    "measure_self_improvement",
    "save_problem_csv",
    "load_problem_csv",
    "save_solution_csv",
    "report_to_json",
    "SCENARIOS",
]


# ---------------------------------------------------------------------------
# coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Coefficient:
    """Symmetric coefficient rule ``A(x, y)`` with bounds ``alpha1 <= A <= alpha2``.

    ``fn`` maps coordinate arrays ``X, Y`` of shape ``(..., d)`` to values of
    shape ``(...)``. ``spec`` is the textual form accepted by
    :func:`parse_coefficient`.
    """

    spec: str
    alpha1: float
    alpha2: float
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(compare=False, repr=False)

    def __call__(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        return self.fn(np.asarray(X, dtype=float), np.asarray(Y, dtype=float))


def _check_bounds(a1: float, a2: float) -> None:
    if not 0 < a1 <= a2:
        raise ParameterError(f"coefficient bounds need 0 < alpha1 <= alpha2, got {a1}, {a2}")


def constant_coefficient(a: float = 1.0) -> Coefficient:
    """``A = a``."""
    _check_bounds(a, a)
    return Coefficient(f"constant({a:g})", a, a, lambda X, Y: np.full(np.broadcast_shapes(X.shape, Y.shape)[:-1], a))


def smooth_coefficient(a1: float = 1.0, a2: float = 2.0, scale: float = 1.0) -> Coefficient:
    """``A = a1 + (a2 - a1)(psi(x) + psi(y))/2`` with ``psi = (1 + prod_k cos(2 pi x_k/scale))/2``."""
    _check_bounds(a1, a2)
    if scale <= 0:
        raise ParameterError("scale must be positive")

    def psi(Z):
        return 0.5 * (1.0 + np.prod(np.cos(2 * np.pi * Z / scale), axis=-1))

    return Coefficient(f"smooth({a1:g},{a2:g},{scale:g})", a1, a2, lambda X, Y: a1 + (a2 - a1) * 0.5 * (psi(X) + psi(Y)))


def checkerboard_coefficient(scale: float = 0.25, a1: float = 1.0, a2: float = 10.0) -> Coefficient:
    """``A = a1 + (a2 - a1)(chi(x) + chi(y))/2`` with ``chi`` the parity of the cell of side ``scale``."""
    _check_bounds(a1, a2)
    if scale <= 0:
        raise ParameterError("scale must be positive")

    def chi(Z):
        return np.mod(np.sum(np.floor(Z / scale), axis=-1), 2.0)

    return Coefficient(f"checkerboard({scale:g},{a1:g},{a2:g})", a1, a2, lambda X, Y: a1 + (a2 - a1) * 0.5 * (chi(X) + chi(Y)))


_RULES = {"constant": constant_coefficient, "smooth": smooth_coefficient, "checkerboard": checkerboard_coefficient}


def parse_coefficient(text: str) -> Coefficient:
    """Parse ``constant(a)``, ``smooth(a1,a2,scale)`` or ``checkerboard(scale,a1,a2)``.

    A bare rule name uses its defaults.

    Examples
    --------
    >>> parse_coefficient("checkerboard(0.5,1,10)").alpha2
    10.0
    """
    m = re.fullmatch(r"\s*(\w+)\s*(?:\((.*)\))?\s*", text)
    if not m or m.group(1) not in _RULES:
        raise ParameterError(f"unknown coefficient rule {text!r}; known: {sorted(_RULES)}")
    args = [float(a) for a in m.group(2).split(",")] if m.group(2) and m.group(2).strip() else []
    try:
        return _RULES[m.group(1)](*args)
    except TypeError:
        raise ParameterError(f"wrong number of arguments in {text!r}") from None


# ---------------------------------------------------------------------------
# problem
# ---------------------------------------------------------------------------


def _cell_average_kernel(d: int, h: float, exponent: float, order: int = 12) -> float:
    """Mean of ``|y|^-exponent`` over the cell of side ``h`` centred at ``h e_1``."""
    z, wz = np.polynomial.legendre.leggauss(order)
    pts = 0.5 * h * z
    wts = 0.5 * wz
    grids = np.meshgrid(*([pts] * d), indexing="ij")
    Y = np.stack(grids, -1)
    Y[..., 0] += h
    W = np.ones_like(Y[..., 0])
    for g in np.meshgrid(*([wts] * d), indexing="ij"):
        W = W * g
    r = np.sqrt(np.sum(Y**2, axis=-1))
    return float(np.sum(W * r**-exponent))


@dataclass
class NonlocalProblem:
    """Discrete instance: nodes, weights, collar, coefficient, forcing.

    Attributes
    ----------
    nodes : ndarray (n, d)
    weights : ndarray (n,)
    collar_mask : bool ndarray (n,)
        Nodes where ``u = 0`` is imposed.
    coeff : Coefficient
    forcing : ndarray (n, d)
        Density sampled at the nodes; ``<F, v> = sum_i w_i F_i.v_i``.
    params : FracParams
        ``p >= 2``.
    h : float
        Lattice spacing; pairs at distance ``h`` use the cell-averaged kernel.
        ``None`` disables the correction.
    grid, grid_index, domain_mask : optional
        Set when the nodes are the grid nodes of a domain, so nodal fields can
        be mapped back to grid fields.
    """

    nodes: np.ndarray
    weights: np.ndarray
    collar_mask: np.ndarray
    coeff: Coefficient
    forcing: np.ndarray
    params: FracParams
    h: float | None = None
    grid: GridSpec | None = None
    grid_index: np.ndarray | None = None
    domain_mask: np.ndarray | None = None
    meta: dict = field(default_factory=dict)
    _Wt: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(self.nodes, dtype=float)
        n, d = self.nodes.shape
        self.weights = np.asarray(self.weights, dtype=float).reshape(n)
        self.collar_mask = np.asarray(self.collar_mask, dtype=bool).reshape(n)
        self.forcing = np.ascontiguousarray(np.broadcast_to(np.asarray(self.forcing, dtype=float), (n, d)))
        if self.params.d != d:
            raise ParameterError("params.d does not match the node dimension")
        if self.params.p < 2:
            raise ParameterError("the solver needs p >= 2")
        if np.any(self.weights <= 0):
            raise ParameterError("weights must be positive")
        if not self.collar_mask.any():
            raise ParameterError("collar is empty; rigid motions would not be controlled")
        if self.coeff.alpha1 <= 0:
            raise ParameterError("alpha1 must be positive")

    @property
    def n(self) -> int:
        return self.nodes.shape[0]

    @property
    def d(self) -> int:
        return self.nodes.shape[1]

    @property
    def free(self) -> np.ndarray:
        return ~self.collar_mask

    def pair_weights(self) -> np.ndarray:
        """Dense symmetric matrix ``W_ij`` with zero diagonal (cached)."""
        if self._Wt is None:
            X = self.nodes
            diff = X[:, None, :] - X[None, :, :]
            r = np.sqrt(np.sum(diff**2, axis=-1))
            if np.any(r[~np.eye(self.n, dtype=bool)] == 0):
                raise ParameterError("coincident nodes")
            expo = self.d + self.params.sp
            np.fill_diagonal(r, 1.0)
            k = r**-expo
            if self.h is not None:
                near = np.abs(r - self.h) < 1e-9 * self.h
                k[near] = _cell_average_kernel(self.d, self.h, expo)
            A = self.coeff(X[:, None, :], X[None, :, :])
            if not np.allclose(A, A.T, rtol=0, atol=1e-14 * self.coeff.alpha2):
                raise ParameterError("coefficient is not symmetric")
            W = self.weights[:, None] * self.weights[None, :] * A * k
            np.fill_diagonal(W, 0.0)
            self._Wt = np.ascontiguousarray(0.5 * (W + W.T))
        return self._Wt

    def to_grid(self, u: np.ndarray) -> VectorField:
        """Extend a nodal field by zero to the grid it was built from."""
        if self.grid is None:
            raise ParameterError("problem has no underlying grid")
        vals = np.zeros((self.grid.N**self.grid.d, self.d))
        vals[self.grid_index] = u
        return VectorField(self.grid, vals.reshape(self.grid.shape + (self.d,)))

    def grid_to_nodes(self, f: VectorField) -> np.ndarray:
        if self.grid is None:
            raise ParameterError("problem has no underlying grid")
        return f.values.reshape(-1, f.m)[self.grid_index]


def _smooth_forcing(X: np.ndarray, radius: float) -> np.ndarray:
    d = X.shape[1]
    c = np.zeros(d)
    c[0], c[-1] = 0.2 * radius, -0.1 * radius
    b = np.zeros(d)
    b[0], b[-1] = 1.0, -0.5
    g = np.exp(-np.sum((X - c) ** 2, axis=1) / (2 * (0.4 * radius) ** 2))
    return g[:, None] * b


def build_ball_problem(
    params: FracParams,
    L: float = 5.0,
    N: int = 64,
    radius: float = 1.0,
    coeff: Coefficient | str = "constant(1)",
    forcing: str | np.ndarray | Callable = "smooth",
    collar_width: float | None = None,
) -> NonlocalProblem:
    """Grid nodes of the ball ``|x| <= radius`` with weights ``h^d``.

    The collar holds the nodes with ``|x| > radius - collar_width``
    (default ``2h``). ``forcing`` is ``"smooth"``, ``"zero"``, an array of
    nodal values or a callable ``X -> (n, d)``.
    """
    g = make_grid(params.d, L, N)
    if radius >= L / 2:
        raise ParameterError("the ball must fit inside the box")
    h = g.h
    cw = 2 * h if collar_width is None else collar_width
    X = g.coords().reshape(-1, g.d)
    r = np.linalg.norm(X, axis=1)
    inside = r <= radius + 1e-12 * radius
    idx = np.flatnonzero(inside)
    nodes = X[idx]
    collar = r[idx] > radius - cw + 1e-12 * radius
    if isinstance(coeff, str):
        coeff = parse_coefficient(coeff)
    if isinstance(forcing, str):
        if forcing == "smooth":
            F = _smooth_forcing(nodes, radius)
        elif forcing == "zero":
            F = np.zeros_like(nodes)
        else:
            raise ParameterError(f"unknown forcing {forcing!r}")
    elif callable(forcing):
        F = np.asarray(forcing(nodes), dtype=float)
    else:
        F = np.asarray(forcing, dtype=float)
    meta = {"L": L, "N": N, "radius": radius, "collar_width": cw}
    return NonlocalProblem(
        nodes, np.full(len(idx), g.cell_volume), collar, coeff, F, params, h, g, idx, inside.reshape(g.shape), meta
    )


SCENARIOS = {
    "smooth": dict(coeff="constant(1)", forcing="smooth"),
    "smooth_coeff": dict(coeff="smooth(1,2,1)", forcing="smooth"),
    "checkerboard": dict(coeff="checkerboard(0.25,1,10)", forcing="smooth"),
    "zero": dict(coeff="constant(1)", forcing="zero"),
}


def scenario(name: str, params: FracParams, L: float = 5.0, N: int = 64, radius: float = 1.0) -> NonlocalProblem:
    """Builtin ball problems: ``smooth`` (A = 1), ``smooth_coeff``, ``checkerboard``, ``zero``."""
    if name not in SCENARIOS:
        raise ParameterError(f"unknown scenario {name!r}; known: {sorted(SCENARIOS)}")
    return build_ball_problem(params, L=L, N=N, radius=radius, **SCENARIOS[name])


# ---------------------------------------------------------------------------
# operator and energy
# ---------------------------------------------------------------------------


def projected_difference(u: np.ndarray, x_i: np.ndarray, x_j: np.ndarray, u_j: np.ndarray | None = None) -> float:
    """``(u(x_i) - u(x_j)).(x_i - x_j)/|x_i - x_j|``.

    ``u`` is either a callable field or the value ``u(x_i)``, in which case
    ``u_j`` must hold ``u(x_j)``.

    Examples
    --------
    >>> projected_difference(lambda x: x, np.array([0.0, 0.0]), np.array([3.0, 4.0]))
    5.0
    """
    x_i = np.asarray(x_i, dtype=float)
    x_j = np.asarray(x_j, dtype=float)
    z = x_i - x_j
    r = float(np.linalg.norm(z))
    if r == 0:
        raise ParameterError("coincident nodes")
    if callable(u):
        a, b = np.asarray(u(x_i), dtype=float), np.asarray(u(x_j), dtype=float)
    else:
        if u_j is None:
            raise ParameterError("u_j is required when u is a value")
        a, b = np.asarray(u, dtype=float), np.asarray(u_j, dtype=float)
    return float(np.dot(a - b, z) / r)


def _nodal(u, problem: NonlocalProblem) -> np.ndarray:
    if isinstance(u, VectorField):
        u = problem.grid_to_nodes(u)
    u = np.ascontiguousarray(u, dtype=float)
    if u.shape != (problem.n, problem.d):
        raise ParameterError(f"nodal field must have shape {(problem.n, problem.d)}")
    return u


def apply_operator(u, v, problem: NonlocalProblem, backend: str | None = None) -> float:
    """``<L u, v>`` as the symmetrized sum over ordered node pairs."""
    be = _accel.get_backend(backend) if backend else _accel
    return float(be.node_pairing(_nodal(u, problem), _nodal(v, problem), problem.nodes, problem.pair_weights(), float(problem.params.p)))


def _load(u: np.ndarray, problem: NonlocalProblem) -> float:
    return float(np.sum(problem.weights[:, None] * problem.forcing * u))


def energy(u, problem: NonlocalProblem, backend: str | None = None) -> float:
    """``E(u) = (1/p) sum_{i != j} W_ij |D_ij|^p - <F, u>``."""
    u = _nodal(u, problem)
    be = _accel.get_backend(backend) if backend else _accel
    e, _ = be.node_energy_grad(u, problem.nodes, problem.pair_weights(), float(problem.params.p))
    val = e - _load(u, problem)
    if not math.isfinite(val):
        raise NumericalError("energy is not finite")
    return val


def energy_gradient(u, problem: NonlocalProblem, backend: str | None = None) -> tuple[float, np.ndarray]:
    """Energy and its gradient with respect to the nodal values (collar rows zeroed)."""
    u = _nodal(u, problem)
    be = _accel.get_backend(backend) if backend else _accel
    e, g = be.node_energy_grad(u, problem.nodes, problem.pair_weights(), float(problem.params.p))
    g = g - problem.weights[:, None] * problem.forcing
    g[problem.collar_mask] = 0.0
    return float(e - _load(u, problem)), g


def energy_change(u, v, step: float, problem: NonlocalProblem, backend: str | None = None) -> float:
    """``E(u + step v) - E(u)`` evaluated pairwise, free of cancellation for small steps."""
    u, v = _nodal(u, problem), _nodal(v, problem)
    be = _accel.get_backend(backend) if backend else _accel
    dq = be.node_energy_change(u, v, problem.nodes, problem.pair_weights(), float(problem.params.p), float(step))
    return float(dq - step * _load(v, problem))


def dense_matrix(problem: NonlocalProblem) -> np.ndarray:
    """Hessian of the ``p = 2`` energy on all ``n d`` unknowns, node-major ordering."""
    if problem.params.p != 2:
        raise ParameterError("the dense matrix exists only for p = 2")
    X = problem.nodes
    n, d = X.shape
    Wt = problem.pair_weights()
    z = X[:, None, :] - X[None, :, :]
    r = np.sqrt(np.sum(z**2, axis=-1))
    np.fill_diagonal(r, 1.0)
    e = z / r[..., None]
    blocks = -2.0 * Wt[..., None, None] * e[..., :, None] * e[..., None, :]
    diag = -blocks.sum(axis=1)
    blocks[np.arange(n), np.arange(n)] = diag
    return blocks.transpose(0, 2, 1, 3).reshape(n * d, n * d)


def solve_dense(problem: NonlocalProblem) -> np.ndarray:
    """Direct symmetric solve of the ``p = 2`` system on the free nodes."""
    H = dense_matrix(problem)
    free = np.repeat(problem.free, problem.d)
    b = (problem.weights[:, None] * problem.forcing).reshape(-1)
    x = np.zeros_like(b)
    x[free] = linalg.solve(H[np.ix_(free, free)], b[free], assume_a="pos")
    return x.reshape(problem.n, problem.d)


@dataclass
class SolveReport:
    """Outcome of :func:`solve`.

    Attributes
    ----------
    solution : ndarray (n, d)
    energy_trace : list of float
        Energy of the initial guess, then after each accepted step (initial
        value plus the accumulated pairwise changes).
    grad_norm : float
        ``sqrt(sum_i |g_i|^2 / w_i)`` over free nodes, relative to
        ``sqrt(sum_i w_i |F_i|^2)`` when the forcing is nonzero.
    converged, line_search_failed : bool
    stagnated : bool
        An accepted step no longer decreased the energy in floating point
        before ``tol`` was reached.
    iterations : int
    seminorm_table : list of dict
        Filled by :func:`measure_self_improvement`.
    dual_data_norm : float
    dense_mismatch : float
        Relative L2 distance to the dense solution (p = 2 when requested).
    """

    solution: np.ndarray
    energy_trace: list
    grad_norm: float
    converged: bool
    iterations: int
    line_search_failed: bool = False
    stagnated: bool = False
    seminorm_table: list = field(default_factory=list)
    dual_data_norm: float = float("nan")
    dense_mismatch: float = float("nan")
    runtime_ms: int = 0


def _residual(g: np.ndarray, problem: NonlocalProblem, fnorm: float) -> float:
    r = math.sqrt(float(np.sum(g**2 / problem.weights[:, None])))
    return r / fnorm if fnorm > 0 else r


def solve(
    problem: NonlocalProblem,
    tol: float = 1e-8,
    max_iter: int = 20000,
    u0: np.ndarray | None = None,
    check_against_dense: bool = False,
    backend: str | None = None,
) -> SolveReport:
    """Minimize the energy by Barzilai-Borwein steps with Armijo backtracking.

    Steps are taken along ``-g_i / w_i`` (steepest descent in the weighted
    ``L^2`` metric). The Armijo test uses the energy change computed pairwise
    (:func:`energy_change`), which stays accurate when the change is far below
    the rounding level of the energy itself. Every accepted step decreases the
    energy, and ``energy_trace`` accumulates these changes.

    Parameters
    ----------
    tol : float
        Stop when the relative first-order residual is at most ``tol``.
    check_against_dense : bool
        For ``p = 2``, also solve the linear system directly and record the
        relative L2 mismatch.
    """
    import time

    if tol <= 0:
        raise ParameterError("tol must be positive")
    t0 = time.perf_counter()
    w = problem.weights[:, None]
    fnorm = math.sqrt(float(np.sum(w[problem.free] * problem.forcing[problem.free] ** 2)))
    u = np.zeros((problem.n, problem.d)) if u0 is None else _nodal(u0, problem).copy()
    u[problem.collar_mask] = 0.0
    E, g = energy_gradient(u, problem, backend)
    if not math.isfinite(E):
        raise NumericalError("initial energy is not finite")
    trace = [E]
    res = _residual(g, problem, fnorm)
    # first step from a diagonal bound of the p = 2 Hessian
    Wt = problem.pair_weights()
    alpha = 1.0 / (2.0 * float(np.max(Wt.sum(axis=1) / problem.weights)))
    failed = stagnated = False
    it = 0
    while res > tol and it < max_iter:
        dirn = -g / w
        slope = float(np.sum(g * dirn))
        step = alpha
        for _ in range(60):
            dE = energy_change(u, dirn, step, problem, backend)
            if dE <= 1e-4 * step * slope:
                break
            step *= 0.5
        else:
            failed = True
            break
        if dE >= 0:
            # the pairwise change itself is at rounding level
            stagnated = True
            break
        u_new = u + step * dirn
        _, g_new = energy_gradient(u_new, problem, backend)
        s_vec = u_new - u
        y_vec = g_new - g
        sy = float(np.sum(s_vec * y_vec))
        alpha = float(np.sum(w * s_vec**2)) / sy if sy > 0 else 2 * step
        u, g = u_new, g_new
        E = E + dE
        trace.append(E)
        res = _residual(g, problem, fnorm)
        it += 1
    rep = SolveReport(u, trace, res, res <= tol, it, failed, stagnated=stagnated)
    if check_against_dense and problem.params.p == 2:
        ud = solve_dense(problem)
        nd = math.sqrt(float(np.sum(w * ud**2)))
        rep.dense_mismatch = math.sqrt(float(np.sum(w * (u - ud) ** 2))) / nd if nd > 0 else math.sqrt(float(np.sum(w * u**2)))
    rep.runtime_ms = int(1000 * (time.perf_counter() - t0))
    return rep


# ---------------------------------------------------------------------------
# self-improvement
# ---------------------------------------------------------------------------


def default_eps0(params: FracParams) -> float:
    """``min(1 - s, s/(p - 1)) / 4``."""
    return min(1 - params.s, params.s / (params.p - 1)) / 4


def measure_self_improvement(
    report: SolveReport,
    problem: NonlocalProblem,
    eps_grid: Sequence[float],
    cutoff: VectorField | np.ndarray | None = None,
    probe_budget: int = 32,
    seed: int = 0,
) -> list[dict]:
    """Ratios ``[eta u]_{W^{s+eps,p}} / (||F||_*^{1/(p-1)} + [u]_{X^s_p(Omega)})`` per ``eps``.

    The dual norm of the forcing at index ``s - eps(p-1)`` is the probe
    lower bound of :func:`frackorn.seminorms.dual_norm_estimate` over probes
    supported in the domain ball. The default cutoff equals 1 on ``|x| <= 0.4 R``
    and vanishes beyond ``0.8 R``. Rows are also stored in
    ``report.seminorm_table``.
    """
    if problem.grid is None:
        raise ParameterError("self-improvement needs a grid-based problem")
    prm = problem.params
    eps_grid = [float(e) for e in eps_grid]
    for e in eps_grid:
        if not 0 <= e < 1 - prm.s or prm.s - e * (prm.p - 1) <= 0:
            raise ParameterError(f"eps = {e} violates 0 <= eps, s + eps < 1, s - eps (p - 1) > 0")
    g = problem.grid
    R = problem.meta.get("radius", float(np.max(np.linalg.norm(problem.nodes, axis=1))))
    if cutoff is None:
        eta = smooth_window(np.linalg.norm(g.coords(), axis=-1), 0.4 * R, 0.4 * R)
    else:
        eta = cutoff.values[..., 0] if isinstance(cutoff, VectorField) else np.asarray(cutoff, dtype=float)
    U = problem.to_grid(report.solution)
    etaU = VectorField(g, U.values * eta[..., None])
    u_norm = projected_seminorm(U, prm, problem.domain_mask).extrapolated
    dic = probe_dictionary(g, np.zeros(g.d), R, probe_budget, seed)

    def functional(phi: VectorField) -> float:
        return float(np.sum(problem.weights[:, None] * problem.forcing * problem.grid_to_nodes(phi)))

    rows = []
    for e in eps_grid:
        lhs = gagliardo_seminorm(etaU, prm.with_s(prm.s + e)).extrapolated
        dual = dual_norm_estimate(functional, FracParams(prm.s - e * (prm.p - 1), prm.p, prm.d), probe_budget, dic).value
        rhs = dual ** (1.0 / (prm.p - 1)) + u_norm
        rows.append(
            {
                "eps": e,
                "lhs": lhs,
                "dual_norm": dual,
                "u_norm": u_norm,
                "rhs": rhs,
                "ratio": lhs / rhs if rhs > 0 else float("nan"),
            }
        )
    report.seminorm_table = rows
    if rows:
        report.dual_data_norm = rows[0]["dual_norm"]
    return rows


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------


def save_problem_csv(problem: NonlocalProblem, path: str | Path) -> None:
    """Columns ``x1..xd, weight, collar_flag, F1..Fd``."""
    d = problem.d
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(d)] + ["weight", "collar_flag"] + [f"F{i + 1}" for i in range(d)])
        for x, wt, c, f in zip(problem.nodes, problem.weights, problem.collar_mask, problem.forcing):
            w.writerow([repr(float(v)) for v in x] + [repr(float(wt)), int(c)] + [repr(float(v)) for v in f])


def load_problem_csv(path: str | Path, params: FracParams, coeff: Coefficient | str = "constant(1)", h: float | None = None) -> NonlocalProblem:
    """Read a node file written by :func:`save_problem_csv`; missing ``F`` columns mean zero forcing."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ParameterError("problem file has no nodes")
    head = rows[0]
    d = sum(1 for c in head if re.fullmatch(r"x\d+", c))
    if d == 0 or "weight" not in head or "collar_flag" not in head:
        raise ParameterError("problem file needs x1..xd, weight and collar_flag columns")
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    X = data[:, :d]
    wt = data[:, head.index("weight")]
    collar = data[:, head.index("collar_flag")] != 0
    fcols = [head.index(f"F{i + 1}") for i in range(d) if f"F{i + 1}" in head]
    F = data[:, fcols] if len(fcols) == d else np.zeros_like(X)
    if isinstance(coeff, str):
        coeff = parse_coefficient(coeff)
    return NonlocalProblem(X, wt, collar, coeff, F, params, h)


def save_solution_csv(problem: NonlocalProblem, u: np.ndarray, path: str | Path) -> None:
    """Columns ``x1..xd, u1..ud``."""
    d = problem.d
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(d)] + [f"u{i + 1}" for i in range(d)])
        for x, v in zip(problem.nodes, u):
            w.writerow([repr(float(a)) for a in x] + [repr(float(a)) for a in v])


def report_to_json(report: SolveReport, timings: bool = False) -> str:
    """Key-value summary of a :class:`SolveReport` (solution values excluded)."""
    out = {
        "converged": report.converged,
        "iterations": report.iterations,
        "grad_norm": report.grad_norm,
        "line_search_failed": report.line_search_failed,
        "stagnated": report.stagnated,
        "energy_initial": report.energy_trace[0],
        "energy_final": report.energy_trace[-1],
        "dense_mismatch": None if math.isnan(report.dense_mismatch) else report.dense_mismatch,
        "dual_data_norm": None if math.isnan(report.dual_data_norm) else report.dual_data_norm,
        "seminorm_table": report.seminorm_table,
    }
    if timings:
        out["runtime_ms"] = report.runtime_ms
    return json.dumps(out, indent=2, sort_keys=True)
