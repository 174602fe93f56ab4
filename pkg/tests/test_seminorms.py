import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from frackorn import seminorms as sn
from frackorn.errors import ParameterError
from frackorn.fields import FracParams, VectorField, make_grid, sample_family, smooth_window


def ball_mask(g, radius):
    return np.linalg.norm(g.coords(), axis=-1) <= radius


def affine_field(g, M, radius=None):
    x = g.coords()
    vals = x @ np.asarray(M, dtype=float).T
    if radius is not None:
        vals = vals * smooth_window(np.linalg.norm(x, axis=-1), radius, radius)[..., None]
    return VectorField(g, vals)


def brute_masked(f, mask, s, p):
    """Ordered-pair double loop over the masked nodes."""
    g = f.grid
    X = g.coords()[mask]
    V = f.values[mask]
    z = X[:, None, :] - X[None, :, :]
    r = np.linalg.norm(z, axis=-1)
    off = r > 0.5 * g.h
    r_safe = np.where(off, r, 1.0)
    dv = V[:, None, :] - V[None, :, :]
    W = np.linalg.norm(dv, axis=-1) ** p
    D = np.abs(np.sum(dv * z, axis=-1) / r_safe) ** p
    k = np.where(off, r_safe ** (-g.d - s * p), 0.0)
    vol = g.h ** (2 * g.d)
    return (vol * np.sum(W * k)) ** (1 / p), (vol * np.sum(D * k)) ** (1 / p)


class TestEstimate:
    def test_bracket_contains_value(self):
        g = make_grid(2, 8.0, 32)
        f = sample_family("gaussian_bump", g, sigma=0.7)
        for est in sn.pair_seminorms(f, FracParams(0.5, 2.0, 2)).values():
            assert est.low <= est.value <= est.high
            assert est.low <= est.extrapolated <= est.high
            assert est.method == "pair_sum"

    def test_zero_field(self):
        g = make_grid(2, 8.0, 16)
        est = sn.gagliardo_seminorm(VectorField(g, np.zeros(g.shape + (2,))), FracParams(0.5, 2.0, 2))
        assert est.value == 0.0 and est.error_bracket == (0.0, 0.0)

    def test_empty_mask(self):
        g = make_grid(2, 8.0, 16)
        f = sample_family("gaussian_bump", g)
        with pytest.raises(ParameterError):
            sn.projected_seminorm(f, FracParams(0.5, 2.0, 2), np.zeros(g.shape, dtype=bool))


class TestMasked:
    @pytest.mark.parametrize("p", [2.0, 3.0])
    def test_identity_map_closed_form(self, p):
        # D(x)(x, y) = |x - y|, so the projected and full sums coincide with a direct double sum
        g = make_grid(2, 4.0, 16)
        mask = ball_mask(g, 1.0)
        f = affine_field(g, np.eye(2))
        prm = FracParams(0.5, p, 2)
        res = sn.pair_seminorms(f, prm, mask)
        W_ref, X_ref = brute_masked(f, mask, 0.5, p)
        assert res["projected"].value == pytest.approx(X_ref, rel=1e-12)
        assert res["gagliardo"].value == pytest.approx(W_ref, rel=1e-12)
        assert res["projected"].value == pytest.approx(res["gagliardo"].value, rel=1e-12)

    def test_generic_field_matches_brute_force(self, rng):
        g = make_grid(2, 4.0, 16)
        mask = ball_mask(g, 1.2)
        f = VectorField(g, rng.standard_normal(g.shape + (2,)))
        res = sn.pair_seminorms(f, FracParams(0.3, 3.0, 2), mask)
        W_ref, X_ref = brute_masked(f, mask, 0.3, 3.0)
        assert res["gagliardo"].value == pytest.approx(W_ref, rel=1e-12)
        assert res["projected"].value == pytest.approx(X_ref, rel=1e-12)

    @pytest.mark.parametrize("seed", range(4))
    def test_skew_affine_null(self, seed):
        r = np.random.default_rng(seed)
        a = r.standard_normal()
        g = make_grid(2, 8.0, 32)
        mask = ball_mask(g, 1.5)
        f = affine_field(g, [[0.0, a], [-a, 0.0]])
        f = VectorField(g, f.values + r.standard_normal(2))
        prm = FracParams(0.5, 2.0, 2)
        scale = sn.gagliardo_seminorm(f, prm, mask).value
        assert sn.projected_seminorm(f, prm, mask).value < 1e-10 * scale

    def test_symmetric_affine_positive(self):
        g = make_grid(2, 8.0, 32)
        mask = ball_mask(g, 1.5)
        f = affine_field(g, [[1.0, 0.3], [0.3, -0.5]])
        prm = FracParams(0.5, 2.0, 2)
        scale = sn.gagliardo_seminorm(f, prm, mask).value
        assert sn.projected_seminorm(f, prm, mask).value > 1e-3 * scale

    def test_constant_field(self):
        g = make_grid(2, 8.0, 16)
        mask = ball_mask(g, 2.0)
        f = VectorField(g, np.broadcast_to([1.5, -2.0], g.shape + (2,)).copy())
        assert sn.gagliardo_seminorm(f, FracParams(0.5, 2.0, 2), mask).value == 0.0


class TestWholeSpace:
    @pytest.mark.parametrize("kind", ["gagliardo", "projected"])
    def test_gaussian_p2_symbol_oracle(self, kind):
        g = make_grid(2, 12.0, 64)
        f = sample_family("gaussian_bump", g, sigma=0.8, amplitude=[1.0, -0.5])
        est = sn.pair_seminorms(f, FracParams(0.5, 2.0, 2))[kind]
        exact = sn.spectral_seminorm_p2(f, 0.5, kind)
        assert est.low <= exact <= est.high
        assert est.extrapolated == pytest.approx(exact, rel=5e-3)

    @pytest.mark.parametrize("seed", range(20))
    def test_bandlimited_p2_oracle(self, seed):
        g = make_grid(2, 8.0, 32)
        f = sample_family("windowed_bandlimited", g, seed=seed, kmax=3, window=1.2)
        res = sn.pair_seminorms(f, FracParams(0.5, 2.0, 2))
        for kind in ("gagliardo", "projected"):
            exact = sn.spectral_seminorm_p2(f, 0.5, kind)
            assert res[kind].low <= exact <= res[kind].high

    def test_pairwise_domination(self, rng):
        g = make_grid(2, 8.0, 32)
        for p in (2.0, 3.0):
            f = sample_family("windowed_bandlimited", g, seed=int(rng.integers(1000)), kmax=4, window=1.2)
            res = sn.pair_seminorms(f, FracParams(0.4, p, 2))
            assert res["projected"].value <= res["gagliardo"].value

    def test_translation_invariance(self):
        g = make_grid(2, 8.0, 32)
        f = sample_family("gaussian_bump", g, sigma=0.5, center=[-0.5, 0.25])
        moved = VectorField(g, np.roll(f.values, (3, -5), axis=(0, 1)))
        prm = FracParams(0.5, 3.0, 2)
        a, b = sn.pair_seminorms(f, prm), sn.pair_seminorms(moved, prm)
        for kind in a:
            assert b[kind].value == pytest.approx(a[kind].value, rel=1e-12)

    def test_rotation_invariance(self):
        # rotate the domain by 90 degrees and the vector components with it
        g = make_grid(2, 8.0, 32)
        f = sample_family("windowed_bandlimited", g, seed=3, kmax=3, window=1.0, center=[0.3, -0.2])
        Q = np.array([[0.0, -1.0], [1.0, 0.0]])
        rot = np.rot90(f.values, k=1, axes=(0, 1)) @ Q.T
        prm = FracParams(0.5, 2.0, 2)
        a, b = sn.pair_seminorms(f, prm), sn.pair_seminorms(VectorField(g, rot), prm)
        for kind in a:
            assert b[kind].value == pytest.approx(a[kind].value, rel=1e-12)

    @given(alpha=st.floats(-50, 50).filter(lambda a: abs(a) > 1e-3))
    def test_amplitude_homogeneity(self, alpha):
        g = make_grid(2, 8.0, 16)
        f = sample_family("gaussian_bump", g, sigma=0.6)
        prm = FracParams(0.5, 3.0, 2)
        a, b = sn.pair_seminorms(f, prm), sn.pair_seminorms(f.scaled(alpha), prm)
        for kind in a:
            assert b[kind].value == pytest.approx(abs(alpha) * a[kind].value, rel=1e-12)

    @pytest.mark.parametrize("p", [2.0, 3.0])
    def test_backends_agree(self, p):
        pytest.importorskip("numba")
        g = make_grid(2, 8.0, 32)
        f = sample_family("windowed_bandlimited", g, seed=1, kmax=3, window=1.2)
        prm = FracParams(0.5, p, 2)
        a = sn.pair_seminorms(f, prm, backend="numba")
        b = sn.pair_seminorms(f, prm, backend="numpy")
        for kind in a:
            assert a[kind].value == pytest.approx(b[kind].value, rel=1e-12)


class TestPoissonIntegral:
    def test_zero_field(self):
        g = make_grid(2, 8.0, 16)
        est = sn.poisson_char_seminorm(VectorField(g, np.zeros(g.shape + (2,))), FracParams(0.5, 2.0, 2))
        assert est.value == 0.0

    @pytest.mark.parametrize("variant", ["scalar_poisson", "matrix_poisson"])
    @given(alpha=st.floats(-20, 20).filter(lambda a: abs(a) > 1e-3))
    def test_homogeneity(self, variant, alpha):
        g = make_grid(2, 8.0, 16)
        f = sample_family("gaussian_bump", g, sigma=0.6)
        prm = FracParams(0.5, 3.0, 2)
        a = sn.poisson_char_seminorm(f, prm, variant=variant).value
        b = sn.poisson_char_seminorm(f.scaled(alpha), prm, variant=variant).value
        assert b == pytest.approx(abs(alpha) * a, rel=1e-10)

    @pytest.mark.parametrize("s", [0.3, 0.5, 0.7])
    def test_p2_constant(self, s):
        # at p = 2 the t-integral over [f]_W^2 is a fixed symbol constant
        g = make_grid(2, 10.0, 64)
        f = sample_family("gaussian_bump", g, sigma=0.8)
        ratio = sn.poisson_char_seminorm(f, FracParams(s, 2.0, 2)).value / sn.spectral_seminorm_p2(f, s)
        assert ratio**2 == pytest.approx(sn.poisson_p2_constant(2, s), rel=2e-3)

    def test_gaussian_ratio_bracket(self):
        g = make_grid(2, 10.0, 64)
        prm = FracParams(0.5, 2.0, 2)
        ratios = []
        for sigma in (0.5, 0.7, 1.0):
            f = sample_family("gaussian_bump", g, sigma=sigma)
            ratios.append(sn.poisson_char_seminorm(f, prm).value / sn.gagliardo_seminorm(f, prm).extrapolated)
        assert max(ratios) / min(ratios) - 1 < 0.05

    def test_level_validation(self):
        g = make_grid(2, 8.0, 16)
        f = sample_family("gaussian_bump", g)
        prm = FracParams(0.5, 2.0, 2)
        with pytest.raises(ParameterError):
            sn.poisson_char_seminorm(f, prm, t_levels=[1.0, 0.5, 2.0])
        with pytest.raises(ParameterError):
            sn.poisson_char_seminorm(f, prm, variant="heat")


class TestSymbolConstants:
    def test_p2_rotation_average(self):
        # trace of int (w w^T) |e.w|^(2s) = a I + b e e^T
        k = sn.symbol_constants(2, 0.5)
        assert k["a"] * 2 + k["b"] == pytest.approx(k["T"], rel=1e-12)

    def test_sphere_moment_d3(self):
        # int_S |e.w|^q = 4 pi / (q + 1) in d = 3
        for q in (1.0, 2.0, 3.4):
            assert sn._sphere_moment(3, q) == pytest.approx(4 * math.pi / (q + 1), rel=1e-10)

    def test_bounds_order(self):
        for d in (1, 2, 3):
            lo, hi = sn.korn_symbol_bounds(d, 0.5)
            assert 1.0 <= lo <= hi


class TestDualNorm:
    @pytest.fixture(scope="class")
    @staticmethod
    def dictionary():
        g = make_grid(2, 8.0, 32)
        return sn.probe_dictionary(g, radius=1.5, budget=64, seed=2)

    def test_zero_functional(self, dictionary):
        est = sn.dual_norm_estimate(lambda phi: 0.0, FracParams(0.5, 2.0, 2), 32, dictionary)
        assert est.value == 0.0

    def test_member_attains_pairing(self, dictionary):
        gprobe = dictionary.probes[5]
        h2 = dictionary.grid.cell_volume
        prm = FracParams(0.5, 2.0, 2)
        est = sn.dual_norm_estimate(lambda phi: h2 * float(np.sum(gprobe.values * phi.values)), prm, 32, dictionary)
        own = h2 * float(np.sum(gprobe.values**2)) / dictionary.norms(0.5, 2.0)[5]
        assert est.value >= own * (1 - 1e-12)

    def test_budget_monotone(self, dictionary, rng):
        w = rng.standard_normal(dictionary.grid.shape + (2,))
        prm = FracParams(0.5, 3.0, 2)
        a = sn.dual_norm_estimate(lambda phi: float(np.sum(w * phi.values)), prm, 32, dictionary)
        b = sn.dual_norm_estimate(lambda phi: float(np.sum(w * phi.values)), prm, 64, dictionary)
        assert b.value >= a.value

    def test_prefix_stability(self):
        g = make_grid(2, 8.0, 16)
        a = sn.probe_dictionary(g, budget=4, seed=1)
        b = sn.probe_dictionary(g, budget=8, seed=1)
        for x, y in zip(a.probes, b.probes):
            np.testing.assert_array_equal(x.values, y.values)

    def test_budget_minimum(self, dictionary):
        with pytest.raises(ParameterError):
            sn.dual_norm_estimate(lambda phi: 1.0, FracParams(0.5, 2.0, 2), 16, dictionary)


class TestCsv:
    def test_columns(self, tmp_path):
        g = make_grid(2, 8.0, 16)
        f = sample_family("gaussian_bump", g)
        est = sn.gagliardo_seminorm(f, FracParams(0.5, 2.0, 2))
        path = tmp_path / "est.csv"
        sn.write_estimates_csv([sn.estimate_row(est, g, "gaussian_bump", 0)], path)
        head, row = path.read_text().splitlines()
        assert head == "family,seed,d,s,p,method,value,low,high,N,L"
        assert row.startswith("gaussian_bump,0,2,0.5,2,pair_sum,")
