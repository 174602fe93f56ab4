"""Numerical checks with pass/fail reports and CSV evidence.

Every check returns a :class:`CheckReport` whose ``passed`` flag is exactly
``residual <= threshold``. Compound checks (several sub-measures with their
own tolerances) report the largest ratio of a sub-measure to its tolerance,
with threshold 1; the individual measures are in ``estimated_constants``.

Constants are empirical maxima over seeded families; what is checked is
their stability across resolutions, not their size.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.fft as sfft
from scipy import special

from . import kernels, nonlocal_system as ns, seminorms as sn, spectral_ops as so
from .errors import ParameterError
from .fields import (
    FracParams,
    GridSpec,
    VectorField,
    augment,
    compact_family,
    lp_norm,
    make_grid,
    sample_family,
    smooth_window,
    to_spectral,
)

__all__ = [
    "CheckReport",
    "CSV_COLUMNS",
    "write_reports_csv",
    "check_kernel_normalization",
    "check_symbol_match",
    "check_semigroup",
    "check_nilpotency",
    "check_riesz_identities",
    "check_lemma_identities",
    "check_derivative_comparison",
    "check_korn_chain",
    "check_null_space",
    "check_poisson_characterization",
    "check_poincare_korn",
    "check_sobolev_embedding",
    "check_quasi_locality",
    "fractional_laplacian_constant",
    "commutator_setup",
    "estimate_commutator",
    "commutator_p2_two_ways",
    "check_solver_dense",
    "check_self_improvement",
    "CampaignConfig",
    "CHECKS",
    "run_campaign",
    "plot_report",
]


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class CheckReport:
    """Outcome of one check.

    Attributes
    ----------
    check_id : str
    params : dict
        ``d, N, L, s, p, eps`` plus a family descriptor.
    residual, threshold : float
    estimated_constants : dict
    passed : bool
        ``residual <= threshold`` (``nan`` residuals fail).
    runtime_ms : int
    seed : int
    meta : dict
        Per-field ratios and other diagnostics (not written to CSV).
    """

    check_id: str
    params: dict
    residual: float
    threshold: float
    estimated_constants: dict = field(default_factory=dict)
    passed: bool = False
    runtime_ms: int = 0
    seed: int = 0
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.residual = float(self.residual)
        self.threshold = float(self.threshold)
        self.passed = bool(self.residual <= self.threshold)


CSV_COLUMNS = ("check_id", "seed", "d", "N", "L", "s", "p", "eps", "residual", "threshold", "passed", "constants_json", "runtime_ms")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _json_safe(v):
    if isinstance(v, dict):
        return {str(k): _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def write_reports_csv(reports: Iterable[CheckReport], path: str | Path, timings: bool = False) -> None:
    """Write reports in :data:`CSV_COLUMNS` order; ``runtime_ms`` stays blank unless ``timings``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in reports:
            p = r.params
            w.writerow(
                [
                    r.check_id,
                    r.seed,
                    _fmt(p.get("d")),
                    _fmt(p.get("N")),
                    _fmt(p.get("L")),
                    _fmt(p.get("s")),
                    _fmt(p.get("p")),
                    _fmt(p.get("eps")),
                    _fmt(r.residual),
                    _fmt(r.threshold),
                    _fmt(r.passed),
                    json.dumps(_json_safe(r.estimated_constants), sort_keys=True),
                    r.runtime_ms if timings else "",
                ]
            )


class _Clock:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.ms = int(1000 * (time.perf_counter() - self.t0))


def _drift(a: float, b: float) -> float:
    """``max(a, b) / min(a, b) - 1``; infinite when either value is not positive and finite."""
    if not (math.isfinite(a) and math.isfinite(b)) or min(a, b) <= 0:
        return math.inf
    return max(a, b) / min(a, b) - 1.0


def _spread(values) -> float:
    v = np.asarray(values, dtype=float)
    if v.size == 0 or not np.all(np.isfinite(v)) or v.min() <= 0:
        return math.inf
    return float(v.max() / v.min() - 1.0)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


def check_kernel_normalization(d: int = 2, L: float = 40.0, N: int = 512, t: float = 1.0) -> list[CheckReport]:
    """Masses of ``p_t`` and ``P_t`` against 1 and ``I_{d+1}`` (thresholds 1e-3 and 5e-3)."""
    g = make_grid(d, L, N)
    prm = {"d": d, "N": N, "L": L, "t": t}
    with _Clock() as c1:
        m = kernels.kernel_mass("poisson", g, t)
    with _Clock() as c2:
        M = kernels.kernel_mass("poisson_type", g, t)
    raw_p = kernels.grid_sum("poisson", g, t)
    raw_P = kernels.grid_sum("poisson_type", g, t)
    err_P = float(np.max(np.abs(M - np.eye(d + 1))))
    return [
        CheckReport("kernels.normalization.poisson", prm, abs(m - 1.0), 1e-3, {"mass": m, "raw_grid_sum": raw_p}, runtime_ms=c1.ms),
        CheckReport(
            "kernels.normalization.poisson_type",
            prm,
            err_P,
            5e-3,
            {"max_entry_error": err_P, "raw_grid_sum_error": float(np.max(np.abs(raw_P - np.eye(d + 1))))},
            runtime_ms=c2.ms,
        ),
    ]


def _entry_transform(vals: np.ndarray, g: GridSpec) -> np.ndarray:
    """Continuum-normalized transform of one sampled scalar on a centred grid."""
    c = sfft.fftn(vals, workers=-1) * g.cell_volume
    return c * g._phase()


def check_symbol_match(d: int = 2, L: float = 320.0, N: int = 2048, t: float = 1.0) -> CheckReport:
    """Transform of sampled ``P_t`` against the closed-form matrix symbol.

    Residual: largest relative Frobenius error over lattice frequencies with
    ``|xi| <= N/(4L)``; threshold 1e-2. Entries are transformed one at a time
    to bound memory.
    """
    with _Clock() as clk:
        g = make_grid(d, L, N)
        x = g.coords()
        r2 = np.sum(x**2, axis=-1)
        base = (2 * (d + 1) / kernels.omega(d)) * t / (r2 + t * t) ** ((d + 3) / 2)
        del r2
        xi = g.freqs()
        band = np.linalg.norm(xi, axis=-1) <= N / (4 * L)
        xib = xi[band]
        S = kernels.poisson_type_symbol(xib, t)
        err2 = np.zeros(xib.shape[0])
        ref2 = np.zeros(xib.shape[0])
        ext = [x[..., j] for j in range(d)]
        for j in range(d + 1):
            for k in range(j, d + 1):
                vj = ext[j] if j < d else t
                vk = ext[k] if k < d else t
                num = _entry_transform(base * vj * vk, g)[band]
                mult = 1.0 if j == k else 2.0
                err2 += mult * np.abs(num - S[:, j, k]) ** 2
                ref2 += mult * np.abs(S[:, j, k]) ** 2
        rel = np.sqrt(err2 / ref2)
        worst = int(np.argmax(rel))
    return CheckReport(
        "kernels.symbol_match",
        {"d": d, "N": N, "L": L, "t": t},
        float(rel[worst]),
        1e-2,
        {"max_rel_frobenius": float(rel[worst]), "worst_xi": xib[worst].tolist(), "n_frequencies": int(rel.size)},
        runtime_ms=clk.ms,
    )


def _random_xi(rng, n: int, d: int) -> np.ndarray:
    return rng.standard_normal((n, d)) * rng.uniform(0.01, 3.0, (n, 1))


def check_semigroup(d: int = 2, n: int = 1000, seed: int = 0) -> CheckReport:
    """``S(xi, t1) S(xi, t2) = S(xi, t1 + t2)`` at random points; threshold 1e-12."""
    with _Clock() as clk:
        rng = np.random.default_rng(seed)
        xi = _random_xi(rng, n, d)
        t1 = rng.uniform(0.01, 2.0, n)
        t2 = rng.uniform(0.01, 2.0, n)
        A = np.stack([kernels.poisson_type_symbol(xi[i], t1[i]) for i in range(n)])
        B = np.stack([kernels.poisson_type_symbol(xi[i], t2[i]) for i in range(n)])
        C = np.stack([kernels.poisson_type_symbol(xi[i], t1[i] + t2[i]) for i in range(n)])
        err = np.max(np.abs(A @ B - C), axis=(1, 2)) / np.maximum(np.max(np.abs(C), axis=(1, 2)), 1e-300)
        sc = np.abs(kernels.poisson_symbol(xi, t1) * kernels.poisson_symbol(xi, t2) - kernels.poisson_symbol(xi, t1 + t2))
    res = float(max(err.max(), sc.max()))
    return CheckReport("kernels.semigroup", {"d": d, "n": n}, res, 1e-12, {"matrix": float(err.max()), "scalar": float(sc.max())}, runtime_ms=clk.ms, seed=seed)


def check_nilpotency(d: int = 2, n: int = 1000, seed: int = 0) -> CheckReport:
    """``M(xi)^2 = 0`` at random nonzero frequencies; threshold 1e-12."""
    with _Clock() as clk:
        rng = np.random.default_rng(seed)
        xi = _random_xi(rng, n, d)
        M = kernels.nilpotent_part(xi)
        res = float(np.max(np.abs(M @ M)))
    return CheckReport("kernels.nilpotency", {"d": d, "n": n}, res, 1e-12, {"max_entry": res}, runtime_ms=clk.ms, seed=seed)


# ---------------------------------------------------------------------------
# identities between u and U
# ---------------------------------------------------------------------------


def _rel(a: VectorField, b: VectorField) -> float:
    nb = lp_norm(b, 2)
    return lp_norm(a - b, 2) / nb if nb > 0 else lp_norm(a, 2)


def _comp(f: VectorField, i: int) -> VectorField:
    return VectorField(f.grid, f.values[..., i : i + 1])


def _sum(fields: Sequence[VectorField]) -> VectorField:
    out = fields[0]
    for f in fields[1:]:
        out = out + f
    return out


def _identity_fields(d: int, L: float, N: int, n_fields: int, seed: int) -> list[VectorField]:
    g = make_grid(d, L, N)
    return [sample_family("bandlimited_random", g, seed=seed + i, kmax=6) for i in range(n_fields)]


def _t_sample(g: GridSpec, n: int) -> np.ndarray:
    return np.geomspace(g.h, g.L / 4, n)


def check_riesz_identities(d: int = 2, L: float = 10.0, N: int = 64, n_fields: int = 20, n_levels: int = 5, seed: int = 0) -> CheckReport:
    """``d_t u = -sum_j R_j(d_j u)`` and ``d_j u = R_j(d_t u)``; threshold 1e-10 relative L2."""
    with _Clock() as clk:
        worst = 0.0
        fields = _identity_fields(d, L, N, n_fields, seed)
        t = _t_sample(fields[0].grid, n_levels)
        for f in fields:
            ext = so.poisson_extend(f, t)
            for u, du in zip(ext.u_levels, ext.dt_levels):
                dx = [so.spatial_derivative(u, j) for j in range(d)]
                lhs = _sum([so.riesz_transform(dx[j], j) for j in range(d)]).scaled(-1.0)
                worst = max(worst, _rel(lhs, du))
                for j in range(d):
                    worst = max(worst, _rel(so.riesz_transform(du, j), dx[j]))
    return CheckReport(
        "identities.riesz", {"d": d, "N": N, "L": L, "family": "bandlimited_random"}, worst, 1e-10, {"max_rel_l2": worst}, runtime_ms=clk.ms, seed=seed
    )


def check_lemma_identities(d: int = 2, L: float = 10.0, N: int = 64, n_fields: int = 20, n_levels: int = 5, seed: int = 0) -> CheckReport:
    """Relations between ``u = p_t * f`` and ``U = P_t * (f, 0)``; threshold 1e-10 relative L2.

    (i) ``U_j = u_j + R_j U_{d+1}``; (ii) ``d_t U_{d+1} = -div u - sum_j R_j d_j U_{d+1}``;
    (iii) ``d_j U_{d+1} = R_j(d_t U_{d+1} + sum_l R_l d_t u_l)``.
    """
    with _Clock() as clk:
        worst = {"i": 0.0, "ii": 0.0, "iii": 0.0}
        fields = _identity_fields(d, L, N, n_fields, seed)
        t = _t_sample(fields[0].grid, n_levels)
        for f in fields:
            ue = so.poisson_extend(f, t)
            Ue = so.poisson_type_extend(augment(f), t)
            for k in range(len(t)):
                u, du = ue.u_levels[k], ue.dt_levels[k]
                U, dU = Ue.U_levels[k], Ue.dt_levels[k]
                Ud, dUd = _comp(U, d), _comp(dU, d)
                for j in range(d):
                    worst["i"] = max(worst["i"], _rel(_comp(U, j), _comp(u, j) + so.riesz_transform(Ud, j)))
                rhs = _sum([so.riesz_transform(so.spatial_derivative(Ud, j), j) for j in range(d)])
                rhs = (so.divergence(u) + rhs).scaled(-1.0)
                worst["ii"] = max(worst["ii"], _rel(dUd, rhs))
                inner = dUd + _sum([so.riesz_transform(_comp(du, l), l) for l in range(d)])
                for j in range(d):
                    worst["iii"] = max(worst["iii"], _rel(so.spatial_derivative(Ud, j), so.riesz_transform(inner, j)))
    res = max(worst.values())
    return CheckReport("identities.u_U", {"d": d, "N": N, "L": L, "family": "bandlimited_random"}, res, 1e-10, worst, runtime_ms=clk.ms, seed=seed)


def check_derivative_comparison(
    p: float = 2.0, d: int = 2, L: float = 20.0, Ns: tuple = (128, 256), n_fields: int = 10, n_levels: int = 12, seed: int = 0
) -> CheckReport:
    """``||d_t u||_p <= C ||d_t U||_p`` (and the same for ``d_{x_k}``) per level.

    ``C`` is the largest observed ratio over fields and levels; the residual
    is its relative drift between the two resolutions (threshold 0.25).
    """
    with _Clock() as clk:
        consts = {}
        for N in Ns:
            g = make_grid(d, L, N)
            t = np.geomspace(2 * L / min(Ns), L / 4, n_levels)
            ct, cx = 0.0, 0.0
            for f in compact_family("mixed", g, n_fields, seed):
                ue = so.poisson_extend(f, t)
                Ue = so.poisson_type_extend(augment(f), t)
                for k in range(len(t)):
                    a, b = lp_norm(ue.dt_levels[k], p), lp_norm(Ue.dt_levels[k], p)
                    ct = max(ct, a / b)
                    for j in range(d):
                        a = lp_norm(so.spatial_derivative(ue.u_levels[k], j), p)
                        b = lp_norm(so.spatial_derivative(Ue.U_levels[k], j), p)
                        cx = max(cx, a / b)
            consts[N] = (ct, cx)
        n0, n1 = Ns
        dr = max(_drift(consts[n0][0], consts[n1][0]), _drift(consts[n0][1], consts[n1][1]))
    est = {f"C_t_N{N}": v[0] for N, v in consts.items()} | {f"C_x_N{N}": v[1] for N, v in consts.items()}
    return CheckReport("derivative_comparison", {"d": d, "N": Ns[-1], "L": L, "p": p, "family": "compact_mixed"}, dr, 0.25, est, runtime_ms=clk.ms, seed=seed)


# ---------------------------------------------------------------------------
# Korn chain and related inequalities
# ---------------------------------------------------------------------------


def _chain_quantities(f: VectorField, params: FracParams) -> dict:
    pair = sn.pair_seminorms(f, params)
    W, X = pair["gagliardo"], pair["projected"]
    Ps = sn.poisson_char_seminorm(f, params, variant="scalar_poisson")
    Pm = sn.poisson_char_seminorm(f, params, variant="matrix_poisson")
    return {
        "W": W.extrapolated,
        "X": X.extrapolated,
        "W_raw": W.value,
        "X_raw": X.value,
        "Ps": Ps.value,
        "Pm": Pm.value,
        "truncation": bool(Ps.meta.get("truncation") or Pm.meta.get("truncation")),
    }


def check_korn_chain(
    family: str = "mixed",
    params: FracParams = FracParams(0.5, 2.0, 2),
    n_fields: int = 50,
    Ns: tuple = (64, 128),
    L: float = 10.0,
    seed: int = 0,
) -> CheckReport:
    """Chain ``W <= C1 Ps <= C2 Pm <= C3 X`` and ``K = max W/X`` over a compact family.

    ``Ps`` and ``Pm`` are the scalar and matrix Poisson t-integrals. Sub-measures
    and tolerances: domination ``X <= W`` on raw lattice sums (tolerance 0),
    drift of every constant between the two resolutions (0.25) and, for
    ``p = 2``, the distance of ``K^2`` outside the symbol eigenvalue range
    (0.10, relative). Residual is the largest measure/tolerance ratio
    (domination violations give ``inf``); threshold 1.
    """
    d = params.d
    with _Clock() as clk:
        per_N = {}
        ratios = {}
        trunc = False
        for N in Ns:
            g = make_grid(d, L, N)
            rows = [_chain_quantities(f, params) for f in compact_family(family, g, n_fields, seed)]
            trunc |= any(r["truncation"] for r in rows)
            dom = max((r["X_raw"] - r["W_raw"]) / r["W_raw"] for r in rows if r["W_raw"] > 0)
            C = {
                "C1": max(r["W"] / r["Ps"] for r in rows),
                "C2": max(r["Ps"] / r["Pm"] for r in rows),
                "C3": max(r["Pm"] / r["X"] for r in rows),
                "K": max(r["W"] / r["X"] for r in rows),
            }
            per_N[N] = (C, dom)
            ratios[N] = [r["W"] / r["X"] for r in rows]
        n0, n1 = Ns[0], Ns[-1]
        drifts = {k: _drift(per_N[n0][0][k], per_N[n1][0][k]) for k in ("C1", "C2", "C3", "K")}
        dom = max(v[1] for v in per_N.values())
        est = {f"{k}_N{N}": v for N in Ns for k, v in per_N[N][0].items()}
        est.update({f"drift_{k}": v for k, v in drifts.items()})
        est["domination_excess"] = dom
        measures = [max(drifts.values()) / 0.25]
        if dom > 0:
            measures.append(math.inf)
        if params.p == 2:
            lo, hi = sn.korn_symbol_bounds(d, params.s)
            K2 = max(per_N[N][0]["K"] for N in Ns) ** 2
            K2min = min(min(ratios[N]) for N in Ns) ** 2
            excess = max(0.0, K2 / hi - 1.0, 1.0 - K2min / lo)
            est.update({"K2": K2, "K2_min": K2min, "eig_low": lo, "eig_high": hi, "eig_excess": excess})
            measures.append(excess / 0.10)
        est["truncation"] = trunc
    prm = {"d": d, "N": n1, "L": L, "s": params.s, "p": params.p, "family": family, "n_fields": n_fields}
    return CheckReport("korn_chain", prm, max(measures), 1.0, est, runtime_ms=clk.ms, seed=seed, meta={"ratios": ratios})


def check_null_space(params: FracParams = FracParams(0.5, 2.0, 2), L: float = 8.0, N: int = 64, radius: float = 1.0, seed: int = 0) -> CheckReport:
    """Projected semi-norm on a ball: skew-affine fields vanish, symmetric-affine ones do not.

    Scale: the Gagliardo semi-norm of the same field on the ball. Measures:
    skew ratio / 1e-10 and 1e-3 / symmetric ratio; threshold 1.
    """
    d = params.d
    with _Clock() as clk:
        g = make_grid(d, L, N)
        mask = np.linalg.norm(g.coords(), axis=-1) <= radius
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((d, d))
        Wsk = A - A.T
        Ssym = A + A.T
        b = rng.standard_normal(d)
        fs = sample_family("windowed_skew_affine", g, W=Wsk, b=b, radius=radius, width=radius)
        fa = sample_family("windowed_affine", g, matrix=Ssym, offset=b, radius=radius, width=radius)
        ps = sn.pair_seminorms(fs, params, mask)
        pa = sn.pair_seminorms(fa, params, mask)
        skew = ps["projected"].value / ps["gagliardo"].value
        sym = pa["projected"].value / pa["gagliardo"].value
    est = {"skew_ratio": skew, "symmetric_ratio": sym}
    res = max(skew / 1e-10, 1e-3 / sym if sym > 0 else math.inf)
    return CheckReport("null_space", {"d": d, "N": N, "L": L, "s": params.s, "p": params.p}, res, 1.0, est, runtime_ms=clk.ms, seed=seed)


def check_poisson_characterization(
    params: FracParams = FracParams(0.5, 2.0, 2), n_fields: int = 50, N: int = 64, L: float = 10.0, family: str = "mixed", seed: int = 0
) -> CheckReport:
    """Ratio of the scalar Poisson t-integral to the Gagliardo semi-norm over a family.

    The bracket ``[c1, c2]`` spans the observed ratios; residual is
    ``c2/c1 - 1`` (threshold 0.25). For ``p = 2`` the exact constant is
    reported alongside.
    """
    with _Clock() as clk:
        g = make_grid(params.d, L, N)
        ratios = []
        for f in compact_family(family, g, n_fields, seed):
            W = sn.gagliardo_seminorm(f, params).extrapolated
            P = sn.poisson_char_seminorm(f, params).value
            ratios.append(P / W)
        c1, c2 = min(ratios), max(ratios)
    est = {"c1": c1, "c2": c2}
    if params.p == 2:
        est["exact"] = math.sqrt(sn.poisson_p2_constant(params.d, params.s))
    prm = {"d": params.d, "N": N, "L": L, "s": params.s, "p": params.p, "family": family, "n_fields": n_fields}
    return CheckReport("poisson_characterization", prm, _spread(ratios), 0.25, est, runtime_ms=clk.ms, seed=seed, meta={"ratios": ratios})


def _ball_fields(g: GridSpec, radius: float, n: int, seed: int) -> list[VectorField]:
    win = smooth_window(np.linalg.norm(g.coords(), axis=-1), 0.5 * radius, 0.5 * radius)
    return [VectorField(g, f.values * win[..., None]) for f in compact_family("mixed", g, n, seed, scale=radius * 8 / g.L)]


def _ratio_check(check_id, numer: Callable, params, radius, n_fields, Ns, L, seed) -> CheckReport:
    with _Clock() as clk:
        consts = {}
        for N in Ns:
            g = make_grid(params.d, L, N)
            best = 0.0
            for f in _ball_fields(g, radius, n_fields, seed):
                X = sn.projected_seminorm(f, params).extrapolated
                if X == 0:
                    continue
                best = max(best, numer(f) / X**params.p)
            consts[N] = best
        dr = _drift(consts[Ns[0]], consts[Ns[-1]])
    est = {f"C_N{N}": v for N, v in consts.items()}
    prm = {"d": params.d, "N": Ns[-1], "L": L, "s": params.s, "p": params.p, "radius": radius}
    return CheckReport(check_id, prm, dr, 0.25, est, runtime_ms=clk.ms, seed=seed)


def check_poincare_korn(
    params: FracParams = FracParams(0.5, 2.0, 2), ball_radius: float = 1.0, n_fields: int = 10, Ns: tuple = (64, 128), L: float = 8.0, seed: int = 0
) -> CheckReport:
    """``C = max ||f||_p^p / [f]_X^p`` over fields supported in a ball; drift across resolutions (threshold 0.25)."""
    return _ratio_check("poincare_korn", lambda f: lp_norm(f, params.p) ** params.p, params, ball_radius, n_fields, Ns, L, seed)


def check_sobolev_embedding(
    params: FracParams = FracParams(0.5, 2.0, 2), n_fields: int = 10, Ns: tuple = (64, 128), L: float = 8.0, radius: float = 1.0, seed: int = 0
) -> CheckReport:
    """``C = max ||f||_{p*}^p / [f]_X^p`` with ``p* = dp/(d - sp)``; drift across resolutions (threshold 0.25)."""
    q = params.sobolev_exponent()
    rep = _ratio_check("sobolev_embedding", lambda f: lp_norm(f, q) ** params.p, params, radius, n_fields, Ns, L, seed)
    rep.estimated_constants["p_star"] = q
    return rep


# ---------------------------------------------------------------------------
# quasi-locality
# ---------------------------------------------------------------------------


def fractional_laplacian_constant(d: int, s: float) -> float:
    """``C_{d,s} = 4^s Gamma(d/2 + s) / (pi^{d/2} |Gamma(-s)|)``.

    With it, ``(-Delta)^s g(x) = C_{d,s} p.v. int (g(x) - g(y)) |x - y|^{-d-2s} dy``
    has multiplier ``(2 pi |xi|)^{2s}``.
    """
    return 4**s * special.gamma(d / 2 + s) / (math.pi ** (d / 2) * abs(special.gamma(-s)))


def _ball_nodes(center, radius: float, h: float) -> np.ndarray:
    center = np.asarray(center, dtype=float)
    d = center.size
    m = int(math.ceil(radius / h))
    ax = h * np.arange(-m, m + 1)
    pts = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), -1).reshape(-1, d)
    pts = pts[np.linalg.norm(pts, axis=1) < radius]
    return pts + center


def _quasi_local_sides(phi, s, p, q, X1, X2, h):
    d = X1.shape[1]
    vol = h**d
    vals = np.atleast_2d(np.asarray(phi(X2), dtype=float).reshape(len(X2), -1))
    z = X1[:, None, :] - X2[None, :, :]
    k = np.sum(z**2, axis=-1) ** (-(d + 2 * s) / 2)
    # target points lie outside supp(phi chi): the principal value reduces to a plain sum
    lap = -fractional_laplacian_constant(d, s) * vol * (k @ vals)
    mag = np.linalg.norm(lap, axis=1)
    lhs = (vol * np.sum(mag**p)) ** (1 / p) if math.isfinite(p) else mag.max()
    rho = math.sqrt(float(np.min(np.sum(z**2, axis=-1))))
    phin = np.linalg.norm(vals, axis=1)
    phiq = (vol * np.sum(phin**q)) ** (1 / q) if math.isfinite(q) else phin.max()
    a1, a2 = len(X1) * vol, len(X2) * vol
    rhs = rho ** (-d - 2 * s) * a1 ** (1 / p) * a2 ** (1 - 1 / q) * phiq
    return lhs, rhs, rho


def check_quasi_locality(
    phi: Callable | None = None,
    s: float = 0.5,
    p: float = 2.0,
    q: float = 2.0,
    rho: float = 4.0,
    radius: float = 1.0,
    h: float = 0.05,
    d: int = 2,
    rho_sweep: Sequence[float] = (2.0, 4.0, 8.0, 16.0),
) -> CheckReport:
    """``||(-Delta)^s(phi chi_2)||_{L^p(O1)} <= rho^{-d-2s} |O1|^{1/p} |O2|^{1-1/q} ||phi||_{L^q(O2)}``.

    ``O1, O2`` are lattice balls of radius ``radius`` whose closest nodes are
    ``rho`` apart. The left side is a direct quadrature of the singular
    integral (non-singular here since the sets are disjoint). Residual is
    the ratio left/right; threshold 1.1 (10% discretization slack). The
    log-log slope of the left side over ``rho_sweep`` is reported.
    """
    if phi is None:

        def phi(X):
            return np.stack([np.cos(X[:, 0]) + 0.5, np.sin(X[:, -1]) * np.exp(-np.sum(X**2, axis=1) / 4)], 1)[:, :d]

    with _Clock() as clk:
        X2 = _ball_nodes(np.zeros(d), radius, h)

        def sides(r):
            c1 = np.zeros(d)
            c1[0] = 2 * radius + r
            X1 = _ball_nodes(c1, radius, h)
            # shift so that the closest node pair is exactly r apart
            gap = math.sqrt(float(np.min(np.sum((X1[:, None, :] - X2[None, :, :]) ** 2, axis=-1))))
            X1[:, 0] += r - gap
            return _quasi_local_sides(phi, s, p, q, X1, X2, h)

        lhs, rhs, rho_d = sides(rho)
        sweep = [sides(r)[0] for r in rho_sweep]
        slope = float(np.polyfit(np.log(rho_sweep), np.log(sweep), 1)[0]) if len(rho_sweep) > 1 and min(sweep) > 0 else float("nan")
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
    est = {"lhs": lhs, "rhs": rhs, "rho": rho_d, "slope": slope, "C_ds": fractional_laplacian_constant(d, s)}
    return CheckReport("quasi_locality", {"d": d, "s": s, "p": p, "q": q, "rho": rho, "h": h}, ratio, 1.1, est, runtime_ms=clk.ms)


# ---------------------------------------------------------------------------
# commutator
# ---------------------------------------------------------------------------


def estimate_commutator(
    u_field: VectorField,
    phi_family: Sequence[VectorField],
    params: FracParams,
    eps_list: Sequence[float] = (0.08, 0.04, 0.02, 0.01),
    domain_mask: np.ndarray | None = None,
) -> CheckReport:
    """Decay of ``R_eps = <L^{s+eps} u, phi> - c <L^s u, (-Delta)^{eps p/2} phi>``.

    Pairings are restricted to ``domain_mask`` (a ball). Each commutator is
    normalized by ``[u]_{X^{s+eps}(B)}^{p-1} [phi]_{X^{s+eps}}``. The constant
    ``c`` depends on ``eps``; it is fitted by least squares over the probe
    family at each ``eps`` and ``R_eps`` is the largest normalized ``|R|``.
    The fit residuals, and the decay obtained when ``c`` is frozen at the
    smallest ``eps``, are reported as diagnostics. The check fits ``log R`` against ``log eps`` and requires
    slope >= 0.8 with ``C_eps = R_eps/eps`` non-decreasing in ``eps``:
    residual ``max(0.8 - slope, largest relative decrease of C_eps)``,
    threshold 0.
    """
    eps = sorted(float(e) for e in eps_list)
    if len(eps) < 3:
        raise ParameterError("need at least three eps values for the decay fit")
    s, p, d = params.s, params.p, params.d
    lim = min(1 - s, s / (p - 1)) / 2
    if eps[0] <= 0 or eps[-1] >= lim:
        raise ParameterError(f"eps values must lie in (0, {lim:g})")
    with _Clock() as clk:
        base = FracParams(s, p, d)
        rows = []
        for e in eps:
            pe = FracParams(s + e, p, d)
            un = sn.projected_seminorm(u_field, pe, domain_mask).extrapolated
            a, b, n = [], [], []
            for phi in phi_family:
                psi = so.fractional_laplacian(phi, e * p / 2)
                a.append(sn.pairing(u_field, phi, pe, domain_mask))
                b.append(sn.pairing(u_field, psi, base, domain_mask))
                n.append(un ** (p - 1) * sn.projected_seminorm(phi, pe).extrapolated)
            an, bn = np.asarray(a) / np.asarray(n), np.asarray(b) / np.asarray(n)
            c = float(np.dot(an, bn) / np.dot(bn, bn))
            rows.append({"eps": e, "an": an, "bn": bn, "c": c, "fit_residual": float(np.linalg.norm(an - c * bn) / np.linalg.norm(an))})
        Rv = np.array([np.max(np.abs(r["an"] - r["c"] * r["bn"])) for r in rows])
        slope = float(np.polyfit(np.log(eps), np.log(Rv), 1)[0])
        c0 = rows[0]["c"]
        R0 = np.array([np.max(np.abs(r["an"] - c0 * r["bn"])) for r in rows])
        Ce = Rv / np.array(eps)
        dec = float(np.max(np.maximum(Ce[:-1] - Ce[1:], 0.0) / Ce[1:]))
    est = {
        "slope": slope,
        "C_eps": Ce.tolist(),
        "R": Rv.tolist(),
        "c": [r["c"] for r in rows],
        "fit_residual": [r["fit_residual"] for r in rows],
        "frozen_c_slope": float(np.polyfit(np.log(eps), np.log(R0), 1)[0]),
        "frozen_c_C_eps": (R0 / np.array(eps)).tolist(),
    }
    g = u_field.grid
    prm = {"d": d, "N": g.N, "L": g.L, "s": s, "p": p, "eps": ";".join(f"{e:g}" for e in eps), "n_probes": len(phi_family)}
    return CheckReport("commutator", prm, max(0.8 - slope, dec), 0.0, est, runtime_ms=clk.ms, meta={"rows": rows})


def _p2_pairing_spectral(u: VectorField, v: VectorField, s: float) -> float:
    g = u.grid
    U = to_spectral(u).coeffs
    V = to_spectral(v).coeffs
    xi = g.freqs()
    r = np.linalg.norm(xi, axis=-1)
    e = xi / np.where(r > 0, r, 1.0)[..., None]
    k = sn.symbol_constants(g.d, s)
    dens = k["l1"] * np.sum(U * V.conj(), axis=-1) + k["l2"] * np.sum(e * U, axis=-1) * np.sum(e * V, axis=-1).conj()
    return float(np.real(np.sum((2 * np.pi * r) ** (2 * s) * dens)) / g.L**g.d)


def commutator_p2_two_ways(u: VectorField, phi: VectorField, s: float, eps: float, c: float = 1.0) -> tuple[float, float]:
    """Whole-space ``p = 2`` commutator from two spectral routes.

    First route: the two pairings separately, with ``(-Delta)^eps phi``
    formed as a spatial field. Second route: one combined multiplier
    ``(2 pi |xi|)^{2s+2eps} (S_{s+eps}(xi) - c S_s(xi))``.
    """
    g = u.grid
    first = _p2_pairing_spectral(u, phi, s + eps) - c * _p2_pairing_spectral(u, so.fractional_laplacian(phi, eps) if eps > 0 else phi, s)
    U = to_spectral(u).coeffs
    V = to_spectral(phi).coeffs
    xi = g.freqs()
    r = np.linalg.norm(xi, axis=-1)
    e = xi / np.where(r > 0, r, 1.0)[..., None]
    k1 = sn.symbol_constants(g.d, s + eps)
    k0 = sn.symbol_constants(g.d, s)
    m = (2 * np.pi * r) ** (2 * s + 2 * eps)
    if eps > 0:
        m0 = m
    else:
        m0 = (2 * np.pi * r) ** (2 * s)
    dens = (k1["l1"] * m - c * k0["l1"] * m0) * np.sum(U * V.conj(), axis=-1) + (k1["l2"] * m - c * k0["l2"] * m0) * (
        np.sum(e * U, axis=-1) * np.sum(e * V, axis=-1).conj()
    )
    second = float(np.real(np.sum(dens)) / g.L**g.d)
    return first, second


# ---------------------------------------------------------------------------
# nonlocal system
# ---------------------------------------------------------------------------


def check_solver_dense(params: FracParams = FracParams(0.5, 2.0, 2), N: int = 64, L: float = 5.0, radius: float = 1.0, tol: float = 1e-8) -> CheckReport:
    """Descent solution against the dense solve (``p = 2``, ``A = 1``); threshold 1e-6 relative L2.

    A non-monotone energy trace gives an infinite residual.
    """
    with _Clock() as clk:
        pb = ns.scenario("smooth", params, L=L, N=N, radius=radius)
        rep = ns.solve(pb, tol=tol, check_against_dense=True)
        mono = bool(np.all(np.diff(rep.energy_trace) <= 0))
    est = {"n_nodes": pb.n, "iterations": rep.iterations, "grad_norm": rep.grad_norm, "dense_mismatch": rep.dense_mismatch, "monotone": mono}
    res = rep.dense_mismatch if mono else math.inf
    return CheckReport("solver_dense", {"d": params.d, "N": N, "L": L, "s": params.s, "p": params.p}, res, 1e-6, est, runtime_ms=clk.ms)


def check_self_improvement(
    params: FracParams = FracParams(0.5, 2.0, 2),
    coeff: str = "smooth(1,2,1)",
    eps_grid: Sequence[float] = (0.01, 0.02, 0.04),
    Ns: tuple = (64, 128),
    L: float = 8.0,
    radius: float = 1.0,
    probe_budget: int = 32,
    seed: int = 0,
) -> CheckReport:
    """Ratio ``[eta u]_{W^{s+eps}} / (||F||_*^{1/(p-1)} + [u]_{X^s(Omega)})`` across ``eps`` and resolutions.

    Residual is ``max/min - 1`` over all ratios (threshold 0.25).
    """
    with _Clock() as clk:
        ratios = {}
        tables = {}
        for N in Ns:
            pb = ns.build_ball_problem(params, L=L, N=N, radius=radius, coeff=coeff)
            rep = ns.solve(pb, tol=1e-8 if params.p == 2 else 1e-6)
            rows = ns.measure_self_improvement(rep, pb, eps_grid, probe_budget=probe_budget, seed=seed)
            ratios[N] = [r["ratio"] for r in rows]
            tables[N] = rows
        allr = [x for v in ratios.values() for x in v]
    est = {f"ratios_N{N}": v for N, v in ratios.items()}
    est["max_ratio"] = max(allr)
    prm = {"d": params.d, "N": Ns[-1], "L": L, "s": params.s, "p": params.p, "eps": ";".join(f"{e:g}" for e in eps_grid), "coeff": coeff}
    return CheckReport("self_improvement", prm, _spread(allr), 0.25, est, runtime_ms=clk.ms, seed=seed, meta={"tables": tables})


# ---------------------------------------------------------------------------
# campaign
# ---------------------------------------------------------------------------


@dataclass
class CampaignConfig:
    """Checks to run and their parameter grids.

    Attributes
    ----------
    checks : list of str
        Keys of :data:`CHECKS`.
    seeds : list of int
    d, N, L : grid used by the field-based checks (``N`` is the finer resolution)
    s_list, p_list, eps_list : parameter grids
    n_fields : int
        Family size for the Korn and Poisson checks.
    """

    checks: list = field(default_factory=list)
    seeds: list = field(default_factory=lambda: [0])
    d: int = 2
    N: int = 128
    L: float = 10.0
    s_list: list = field(default_factory=lambda: [0.5])
    p_list: list = field(default_factory=lambda: [2.0])
    eps_list: list = field(default_factory=lambda: [0.01, 0.02, 0.04, 0.08])
    n_fields: int = 10


def commutator_setup(d: int = 2, N: int = 64, L: float = 8.0, n_probes: int = 8, seed: int = 0):
    """Smooth ``u``, a probe family and the unit-ball mask used by the commutator check."""
    g = make_grid(d, L, N)
    x = g.coords()
    mask = np.linalg.norm(x, axis=-1) <= 1.0
    u = np.stack(
        [np.exp(-((x[..., 0] - 0.2) ** 2 + x[..., -1] ** 2) / 0.3), np.sin(2 * x[..., 0]) * np.cos(x[..., -1]), np.cos(x[..., 0])], -1
    )[..., :d]
    dic = sn.probe_dictionary(g, np.zeros(d), 1.0, n_probes, seed=seed + 1)
    return VectorField(g, u), dic.probes, mask


def _commutator_default(cfg: CampaignConfig, s: float, p: float, seed: int) -> list[CheckReport]:
    u, probes, mask = commutator_setup(cfg.d, max(cfg.N // 2, 32), 8.0, 8, seed)
    lim = min(1 - s, s / (p - 1)) / 2
    eps = [e for e in cfg.eps_list if e < lim]
    return [estimate_commutator(u, probes, FracParams(s, p, cfg.d), eps, mask)]


def _sp(cfg):
    for s in cfg.s_list:
        for p in cfg.p_list:
            yield s, p


CHECKS: dict[str, Callable[[CampaignConfig, float, float, int], list[CheckReport]]] = {
    "kernels.normalization": lambda c, s, p, seed: check_kernel_normalization(c.d),
    "kernels.symbol_match": lambda c, s, p, seed: [check_symbol_match(c.d)],
    "kernels.semigroup": lambda c, s, p, seed: [check_semigroup(c.d, seed=seed)],
    "kernels.nilpotency": lambda c, s, p, seed: [check_nilpotency(c.d, seed=seed)],
    "identities.riesz": lambda c, s, p, seed: [check_riesz_identities(c.d, seed=seed)],
    "identities.u_U": lambda c, s, p, seed: [check_lemma_identities(c.d, seed=seed)],
    "derivative_comparison": lambda c, s, p, seed: [check_derivative_comparison(p, c.d, Ns=(c.N, 2 * c.N), n_fields=c.n_fields, seed=seed)],
    "korn_chain": lambda c, s, p, seed: [check_korn_chain("mixed", FracParams(s, p, c.d), c.n_fields, (c.N // 2, c.N), c.L, seed)],
    "null_space": lambda c, s, p, seed: [check_null_space(FracParams(s, p, c.d), seed=seed)],
    "poisson_characterization": lambda c, s, p, seed: [check_poisson_characterization(FracParams(s, p, c.d), c.n_fields, c.N // 2, c.L, seed=seed)],
    "poincare_korn": lambda c, s, p, seed: [check_poincare_korn(FracParams(s, p, c.d), 1.0, c.n_fields, (c.N // 2, c.N), seed=seed)],
    "sobolev_embedding": lambda c, s, p, seed: [check_sobolev_embedding(FracParams(s, p, c.d), c.n_fields, (c.N // 2, c.N), seed=seed)]
    if s * p < c.d
    else [],
    "quasi_locality": lambda c, s, p, seed: [check_quasi_locality(s=s, p=p, d=c.d)],
    "commutator": _commutator_default,
    "solver_dense": lambda c, s, p, seed: [check_solver_dense(FracParams(s, 2.0, c.d))] if p == 2 else [],
    "self_improvement": lambda c, s, p, seed: [check_self_improvement(FracParams(s, p, c.d), seed=seed)] if p >= 2 else [],
}

# checks whose result does not depend on (s, p)
_PARAM_FREE = {"kernels.normalization", "kernels.symbol_match", "kernels.semigroup", "kernels.nilpotency", "identities.riesz", "identities.u_U"}


def run_campaign(config: CampaignConfig, progress: Callable[[CheckReport], None] | None = None) -> list[CheckReport]:
    """Run the configured checks in declared order.

    Raises
    ------
    ParameterError
        For an unknown check id.
    """
    unknown = [c for c in config.checks if c not in CHECKS]
    if unknown:
        raise ParameterError(f"unknown check id(s) {unknown}; known: {sorted(CHECKS)}")
    reports: list[CheckReport] = []
    for cid in config.checks:
        for seed in config.seeds:
            combos = [(config.s_list[0], config.p_list[0])] if cid in _PARAM_FREE else list(_sp(config))
            for s, p in combos:
                for r in CHECKS[cid](config, s, p, seed):
                    r.seed = seed
                    reports.append(r)
                    if progress is not None:
                        progress(r)
    return reports


def plot_report(report: CheckReport, path: str | Path) -> bool:
    """Histogram of per-field ratios stored in ``report.meta``; returns False if nothing was drawn."""
    data = report.meta.get("ratios")
    if not data:
        return False
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return False
    fig, ax = plt.subplots(figsize=(5, 3.5))
    series = data.items() if isinstance(data, dict) else [("", data)]
    for label, vals in series:
        ax.hist(vals, bins=20, alpha=0.6, label=f"N={label}" if label != "" else None)
    ax.set_xlabel("ratio")
    ax.set_ylabel("count")
    ax.set_title(report.check_id)
    if isinstance(data, dict):
        ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return True
