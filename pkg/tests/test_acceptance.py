"""Acceptance criteria at their pinned tolerances and runtime budgets.

Each test prints one line ``criterion <n> PASS|FAIL <details>`` to the
terminal (outside pytest's capture) and asserts the same condition.
Runtime budgets are wall-clock seconds on a single core.
"""

import math
import time

import numpy as np
import pytest

from frackorn import nonlocal_system as ns
from frackorn import verification as vf
from frackorn.fields import FracParams

pytestmark = pytest.mark.slow


def announce(capsys, n, ok, text):
    with capsys.disabled():
        print(f"\ncriterion {n:>2} {'PASS' if ok else 'FAIL'}  {text}", flush=True)


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def test_criterion_01_kernel_normalization(capsys):
    (rp, rP), sec = timed(vf.check_kernel_normalization, 2, 40.0, 512, 1.0)
    ok = rp.residual < 1e-3 and rP.residual < 5e-3 and sec < 5.0
    announce(
        capsys,
        1,
        ok,
        f"kernel normalization d=2 L=40 N=512: |int p1 - 1| = {rp.residual:.2e} (< 1e-3), "
        f"max|int P1 - I3| = {rP.residual:.2e} (< 5e-3), {sec:.1f} s (< 5 s)",
    )
    assert ok


def test_criterion_02_symbol_exactness(capsys):
    t0 = time.perf_counter()
    sm = vf.check_symbol_match(2)
    sg = vf.check_semigroup(2, 1000, seed=0)
    nl = vf.check_nilpotency(2, 1000, seed=0)
    sec = time.perf_counter() - t0
    ok = sm.residual < 1e-2 and sg.residual < 1e-12 and nl.residual < 1e-12 and sec < 30.0
    announce(
        capsys,
        2,
        ok,
        f"symbol match (L=320, N=2048, |xi| <= N/4L) rel Frobenius {sm.residual:.2e} (< 1e-2), "
        f"semigroup {sg.residual:.1e} and M^2 {nl.residual:.1e} at 1000 xi (< 1e-12), {sec:.1f} s (< 30 s)",
    )
    assert ok


def test_criterion_03_identities(capsys):
    t0 = time.perf_counter()
    rz = vf.check_riesz_identities(2, n_fields=20, n_levels=5, seed=0)
    lm = vf.check_lemma_identities(2, n_fields=20, n_levels=5, seed=0)
    sec = time.perf_counter() - t0
    ok = rz.residual < 1e-10 and lm.residual < 1e-10 and sec < 60.0
    announce(
        capsys,
        3,
        ok,
        f"Riesz exchange {rz.residual:.1e} and u/U identities {lm.residual:.1e} rel L2 over 20 fields x 5 levels (< 1e-10), "
        f"{sec:.1f} s (< 60 s)",
    )
    assert ok


def test_criterion_04_derivative_comparison(capsys):
    reps = {p: vf.check_derivative_comparison(p, 2, Ns=(128, 256)) for p in (2.0, 3.0)}
    ok = all(r.residual < 0.25 for r in reps.values())
    parts = [
        f"p={p:g}: C_t {r.estimated_constants['C_t_N128']:.4f}->{r.estimated_constants['C_t_N256']:.4f}, "
        f"C_x {r.estimated_constants['C_x_N128']:.4f}->{r.estimated_constants['C_x_N256']:.4f}, drift {r.residual:.1e}"
        for p, r in reps.items()
    ]
    announce(capsys, 4, ok, "derivative comparison N=128->256 (drift < 0.25): " + "; ".join(parts))
    assert ok


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_criterion_05_korn_chain(capsys, p):
    r, sec = timed(vf.check_korn_chain, "mixed", FracParams(0.5, p, 2), 50, (64, 128), 10.0, 0)
    e = r.estimated_constants
    drift = max(e[f"drift_{k}"] for k in ("C1", "C2", "C3", "K"))
    dominated = e["domination_excess"] <= 0
    finite = math.isfinite(e["K_N128"])
    ok = dominated and finite and drift < 0.25 and sec < 600
    text = (
        f"Korn chain s=0.5 p={p:g}, 50 fields: X <= W pairwise ({'yes' if dominated else 'no'}), "
        f"K = {e['K_N64']:.4f} (N=64) / {e['K_N128']:.4f} (N=128), max drift {drift:.1e} (< 0.25)"
    )
    if p == 2:
        inside = e["eig_excess"] <= 0.10
        ok = ok and inside
        text += f", K^2 in [{e['K2_min']:.3f}, {e['K2']:.3f}] vs symbol bounds [{e['eig_low']:.3f}, {e['eig_high']:.3f}] +-10%"
    announce(capsys, 5, ok, text + f", {sec:.0f} s (< 600 s)")
    assert ok


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_criterion_06_null_space(capsys, p):
    r = vf.check_null_space(FracParams(0.5, p, 2))
    e = r.estimated_constants
    ok = e["skew_ratio"] < 1e-10 and e["symmetric_ratio"] > 1e-3
    announce(
        capsys, 6, ok, f"null space p={p:g}: skew-affine {e['skew_ratio']:.1e} x scale (< 1e-10), symmetric-affine {e['symmetric_ratio']:.3f} x scale (> 1e-3)"
    )
    assert ok


def test_criterion_07_poisson_characterization(capsys):
    parts, ok = [], True
    for s in (0.3, 0.5, 0.7):
        for p in (2.0, 3.0):
            r = vf.check_poisson_characterization(FracParams(s, p, 2), n_fields=50)
            ok &= r.residual < 0.25
            parts.append(f"({s:g},{p:g}) [{r.estimated_constants['c1']:.4f}, {r.estimated_constants['c2']:.4f}] width {r.residual:.3f}")
    announce(capsys, 7, ok, "Poisson characterization, 50 fields, bracket c2/c1 - 1 < 0.25: " + "; ".join(parts))
    assert ok


def _nine_node_oracle():
    ax = np.array([-0.5, 0.0, 0.5])
    X = np.stack(np.meshgrid(ax, ax, indexing="ij"), -1).reshape(-1, 2)
    ring = np.max(np.abs(X), axis=1) > 0.25
    rng = np.random.default_rng(7)
    pb = ns.NonlocalProblem(X, np.full(9, 0.25), ring, ns.constant_coefficient(1.0), 0.0, FracParams(0.5, 2.0, 2))
    u, v = rng.standard_normal((9, 2)), rng.standard_normal((9, 2))
    ref = 0.0
    for i in range(9):
        for j in range(9):
            if i != j:
                z = X[i] - X[j]
                r = math.hypot(z[0], z[1])
                Du = ((u[i, 0] - u[j, 0]) * z[0] + (u[i, 1] - u[j, 1]) * z[1]) / r
                Dv = ((v[i, 0] - v[j, 0]) * z[0] + (v[i, 1] - v[j, 1]) * z[1]) / r
                ref += 0.25 * 0.25 * r ** (-3.0) * Du * Dv
    return abs(ns.apply_operator(u, v, pb) - ref) / abs(ref)


def test_criterion_08_solver(capsys):
    t0 = time.perf_counter()
    r = vf.check_solver_dense(FracParams(0.5, 2.0, 2), N=64, L=5.0, radius=1.0)
    brute = _nine_node_oracle()
    sec = time.perf_counter() - t0
    e = r.estimated_constants
    ok = r.residual < 1e-6 and e["monotone"] and brute < 1e-14 and 450 <= e["n_nodes"] <= 550 and sec < 60
    announce(
        capsys,
        8,
        ok,
        f"solver p=2 A=1 d=2, {e['n_nodes']} nodes: descent vs dense rel L2 {r.residual:.1e} (< 1e-6), "
        f"energy monotone {'yes' if e['monotone'] else 'no'}, 9-node brute force {brute:.1e} (< 1e-14), {sec:.1f} s (< 60 s)",
    )
    assert ok


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_criterion_09_commutator(capsys, p):
    u, probes, mask = vf.commutator_setup(2, 64, 8.0, 8, 0)
    r = vf.estimate_commutator(u, probes, FracParams(0.5, p, 2), (0.01, 0.02, 0.04, 0.08), mask)
    e = r.estimated_constants
    ce = e["C_eps"]
    monotone = all(b >= a for a, b in zip(ce, ce[1:]))
    ok = e["slope"] >= 0.8 and monotone
    announce(
        capsys,
        9,
        ok,
        f"commutator s=0.5 p={p:g}, eps 0.01..0.08: slope {e['slope']:.3f} (>= 0.8), "
        f"C_eps {', '.join(f'{c:.4f}' for c in ce)} non-decreasing ({'yes' if monotone else 'no'})",
    )
    assert ok


def _fmt(values):
    return ", ".join(f"{x:.4f}" for x in values)


@pytest.mark.parametrize("coeff", ["smooth(1,2,1)", "checkerboard(0.25,1,10)"])
@pytest.mark.parametrize("p", [2.0, 3.0])
def test_criterion_10_self_improvement(capsys, p, coeff):
    r = vf.check_self_improvement(FracParams(0.5, p, 2), coeff, (0.01, 0.02, 0.04), (64, 128))
    e = r.estimated_constants
    ok = r.residual < 0.25
    announce(
        capsys,
        10,
        ok,
        f"self-improvement p={p:g} A={coeff}: ratios N=64 [{_fmt(e['ratios_N64'])}], N=128 [{_fmt(e['ratios_N128'])}], "
        f"drift {r.residual:.3f} (< 0.25)",
    )
    assert ok
