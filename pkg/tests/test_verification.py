import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from frackorn import seminorms as sn
from frackorn import verification as vf
from frackorn.errors import ParameterError
from frackorn.fields import FracParams, lp_norm, make_grid, sample_family


class TestCheckReport:
    @given(residual=st.floats(allow_nan=True, allow_infinity=True), threshold=st.floats(0, 10))
    def test_passed_iff_within_threshold(self, residual, threshold):
        r = vf.CheckReport("x", {}, residual, threshold)
        assert r.passed == (residual <= threshold)

    def test_nan_fails(self):
        assert not vf.CheckReport("x", {}, math.nan, 1.0).passed

    def test_csv_schema(self, tmp_path):
        r = vf.CheckReport("x", {"d": 2, "N": 64, "L": 8.0, "s": 0.5, "p": 2.0}, 0.1, 1.0, {"C": np.float64(1.5), "bad": math.inf}, runtime_ms=17)
        path = tmp_path / "r.csv"
        vf.write_reports_csv([r], path)
        rows = list(csv.DictReader(path.open()))
        assert tuple(rows[0]) == vf.CSV_COLUMNS
        assert rows[0]["passed"] == "true" and rows[0]["runtime_ms"] == "" and rows[0]["eps"] == ""
        assert json.loads(rows[0]["constants_json"]) == {"C": 1.5, "bad": "inf"}
        vf.write_reports_csv([r], path, timings=True)
        assert next(csv.DictReader(path.open()))["runtime_ms"] == "17"


class TestSymbolChecks:
    def test_semigroup_and_nilpotency(self):
        for rep in (vf.check_semigroup(seed=3), vf.check_nilpotency(seed=3)):
            assert rep.passed and rep.threshold == 1e-12

    @pytest.mark.parametrize("d", [1, 3])
    def test_other_dimensions(self, d):
        assert vf.check_semigroup(d, n=200).passed
        assert vf.check_nilpotency(d, n=200).passed

    def test_identities(self):
        for rep in (vf.check_riesz_identities(n_fields=4), vf.check_lemma_identities(n_fields=4)):
            assert rep.passed and rep.residual < 1e-12


class TestFieldChecks:
    @pytest.mark.parametrize("p", [2.0, 3.0])
    def test_null_space(self, p):
        rep = vf.check_null_space(FracParams(0.5, p, 2), N=32)
        assert rep.passed
        assert rep.estimated_constants["skew_ratio"] < 1e-10
        assert rep.estimated_constants["symmetric_ratio"] > 1e-3

    def test_windowed_skew_chain_ordering(self):
        # near the null space the chain stays ordered and the projected part is the smaller one
        g = make_grid(2, 10.0, 64)
        prm = FracParams(0.5, 2.0, 2)
        skew = vf._chain_quantities(sample_family("windowed_skew_affine", g, radius=1.0, width=1.0), prm)
        sym = vf._chain_quantities(sample_family("windowed_affine", g, matrix=np.eye(2), radius=1.0, width=1.0), prm)
        assert skew["X_raw"] <= skew["W_raw"]
        assert all(np.isfinite(v) for k, v in skew.items() if k != "truncation")
        assert skew["X"] / skew["W"] < sym["X"] / sym["W"]

    def test_poincare_ratio_homogeneous(self):
        g = make_grid(2, 8.0, 32)
        f = vf._ball_fields(g, 1.0, 1, 0)[0]
        prm = FracParams(0.5, 3.0, 2)

        def ratio(h):
            return lp_norm(h, 3.0) ** 3 / sn.projected_seminorm(h, prm).extrapolated ** 3

        assert ratio(f.scaled(-7.5)) == pytest.approx(ratio(f), rel=1e-10)

    def test_sobolev_exponent(self):
        assert FracParams(0.5, 2.0, 2).sobolev_exponent() == 4.0

    def test_sobolev_embedding_small(self):
        rep = vf.check_sobolev_embedding(n_fields=3, Ns=(32, 64))
        assert rep.estimated_constants["p_star"] == 4.0
        assert rep.passed

    def test_solver_dense(self):
        rep = vf.check_solver_dense(N=32)
        assert rep.passed and rep.estimated_constants["monotone"]


class TestQuasiLocality:
    def test_zero_probe(self):
        rep = vf.check_quasi_locality(phi=lambda X: np.zeros_like(X), h=0.1, rho_sweep=())
        assert rep.estimated_constants["lhs"] == 0.0 and rep.estimated_constants["rhs"] == 0.0
        assert rep.residual == 0.0 and rep.passed

    def test_default_probe(self):
        rep = vf.check_quasi_locality(h=0.1)
        assert rep.passed
        # the far field of (-Delta)^s decays like rho^(-d-2s) = rho^-3
        assert rep.estimated_constants["slope"] < -2.0

    def test_constant_value(self):
        # C_{1,1/2} = 1/pi for the multiplier 2 pi |xi|
        assert vf.fractional_laplacian_constant(1, 0.5) == pytest.approx(1 / math.pi, rel=1e-14)


class TestCommutator:
    @pytest.fixture(scope="class")
    @staticmethod
    def fields():
        g = make_grid(2, 12.0, 64)
        u = sample_family("windowed_bandlimited", g, seed=1, kmax=4, window=1.5)
        phi = sample_family("gaussian_bump", g, sigma=0.8, center=[0.3, 0.0], amplitude=[1.0, 0.5])
        return u, phi

    @pytest.mark.parametrize("eps", [0.01, 0.05, 0.1])
    def test_p2_two_ways(self, fields, eps):
        u, phi = fields
        first, second = vf.commutator_p2_two_ways(u, phi, 0.5, eps, c=0.9)
        assert first == pytest.approx(second, rel=1e-6)

    def test_eps_zero_vanishes(self, fields):
        u, phi = fields
        assert vf.commutator_p2_two_ways(u, phi, 0.5, 0.0, c=1.0) == (0.0, 0.0)

    def test_p2_pairing_matches_pair_sum(self, fields):
        u, phi = fields
        prm = FracParams(0.5, 2.0, 2)
        direct = sn.pairing(u, phi, prm)
        assert direct == pytest.approx(vf._p2_pairing_spectral(u, phi, 0.5), rel=5e-3)

    def test_eps_validation(self):
        u, probes, mask = vf.commutator_setup(N=32, n_probes=2)
        prm = FracParams(0.5, 2.0, 2)
        with pytest.raises(ParameterError):
            vf.estimate_commutator(u, probes, prm, (0.01, 0.02), mask)
        with pytest.raises(ParameterError):
            vf.estimate_commutator(u, probes, prm, (0.01, 0.02, 0.3), mask)
        with pytest.raises(ParameterError):
            vf.estimate_commutator(u, probes, prm, (0.0, 0.01, 0.02), mask)


class TestCampaign:
    def test_empty(self):
        assert vf.run_campaign(vf.CampaignConfig(checks=[])) == []

    def test_unknown_id(self):
        with pytest.raises(ParameterError):
            vf.run_campaign(vf.CampaignConfig(checks=["kernels.semigroup", "korn_chian"]))

    def test_byte_identical_csv(self, tmp_path):
        cfg = vf.CampaignConfig(checks=["kernels.semigroup", "kernels.nilpotency", "null_space"], seeds=[0, 1], N=32)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        vf.write_reports_csv(vf.run_campaign(cfg), a)
        vf.write_reports_csv(vf.run_campaign(cfg), b)
        assert a.read_bytes() == b.read_bytes()
        assert len(a.read_text().splitlines()) == 1 + 6

    def test_parameter_grid(self):
        cfg = vf.CampaignConfig(checks=["null_space", "kernels.semigroup"], s_list=[0.3, 0.7], p_list=[2.0, 3.0], N=32)
        seen = []
        reps = vf.run_campaign(cfg, progress=seen.append)
        assert [r.check_id for r in reps] == ["null_space"] * 4 + ["kernels.semigroup"]
        assert seen == reps
        assert all(r.passed for r in reps)

    def test_every_check_registered(self):
        assert set(vf._PARAM_FREE) <= set(vf.CHECKS)


class TestPlot:
    def test_histogram(self, tmp_path):
        pytest.importorskip("matplotlib")
        rep = vf.CheckReport("demo", {}, 0.0, 1.0, meta={"ratios": {64: [1.0, 1.1, 1.2], 128: [1.05, 1.1]}})
        path = tmp_path / "demo.png"
        assert vf.plot_report(rep, path)
        assert path.stat().st_size > 0

    def test_nothing_to_draw(self, tmp_path):
        assert not vf.plot_report(vf.CheckReport("x", {}, 0.0, 1.0), tmp_path / "x.png")
