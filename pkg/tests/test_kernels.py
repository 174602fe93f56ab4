import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from frackorn import kernels as K
from frackorn.errors import ParameterError
from frackorn.fields import make_grid

coord = st.floats(-5.0, 5.0, allow_nan=False)
tval = st.floats(0.05, 5.0)


def point(d):
    return arrays(np.float64, (d,), elements=coord)


class TestKernelValues:
    def test_poisson_origin(self):
        # 2 / omega_2 with omega_2 = 4 pi
        assert float(K.poisson_kernel([0.0, 0.0], 1.0, 2)) == pytest.approx(1 / (2 * np.pi), rel=1e-15)

    def test_poisson_type_origin(self):
        P = K.poisson_type_kernel([0.0, 0.0], 1.0, 2)
        expected = np.zeros((3, 3))
        expected[2, 2] = 3 / (2 * np.pi)
        assert np.allclose(P, expected, rtol=1e-15, atol=0)

    @pytest.mark.parametrize("d,value", [(1, 2 * np.pi), (2, 4 * np.pi), (3, 2 * np.pi**2)])
    def test_omega(self, d, value):
        assert K.omega(d) == pytest.approx(value, rel=1e-15)

    def test_rejects_nonpositive_t(self):
        with pytest.raises(ParameterError):
            K.poisson_kernel([0.0], 0.0, 1)

    def test_rejects_wrong_point_shape(self):
        with pytest.raises(ParameterError):
            K.poisson_type_kernel([0.0, 0.0, 0.0], 1.0, 2)

    @given(x=point(2), t=tval)
    def test_poisson_even(self, x, t):
        assert K.poisson_kernel(x, t, 2) == K.poisson_kernel(-x, t, 2)

    @given(x=point(3), t=tval)
    def test_matrix_symmetric(self, x, t):
        P = K.poisson_type_kernel(x, t, 3)
        assert np.array_equal(P, P.T)

    @given(x=point(2), t=tval)
    def test_rank_one(self, x, t):
        if np.linalg.norm(x) == 0:
            return
        d = 2
        P = K.poisson_type_kernel(x, 1.0, d)
        R = P * K.omega(d) * (x @ x + 1) ** ((d + 3) / 2) / (2 * (d + 1))
        v = np.append(x, 1.0)
        assert np.allclose(R, np.outer(v, v), rtol=1e-12, atol=1e-12)
        sv = np.linalg.svd(R, compute_uv=False)
        assert sv[1] <= 1e-10 * sv[0]

    @given(x=point(2), t=tval)
    def test_scaling_law(self, x, t):
        lhs = K.poisson_type_kernel(x, t, 2)
        rhs = t**-2 * K.poisson_type_kernel(x / t, 1.0, 2)
        assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-14 * np.abs(lhs).max())

    @given(x=point(2), z=point(2), t=tval)
    def test_directional_factorization(self, x, z, t):
        r = np.linalg.norm(x)
        if r < 1e-3:
            return
        lhs = K.poisson_type_kernel(x, t, 2) @ np.append(z, 0.0)
        rhs = K.directional_profile(x, t, 2) * (z @ x / r)
        assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * np.abs(lhs).max(initial=1e-300))


class TestDerivatives:
    def test_central_difference(self, rng):
        x = rng.uniform(-3, 3, (100, 2))
        t = rng.uniform(0.3, 3.0, 100)
        errs = []
        for delta in (1e-3, 5e-4):
            fd = np.stack([(K.poisson_type_kernel(x[i], t[i] + delta, 2) - K.poisson_type_kernel(x[i], t[i] - delta, 2)) / (2 * delta) for i in range(100)])
            ex = np.stack([K.dt_poisson_type_kernel(x[i], t[i], 2) for i in range(100)])
            errs.append(np.max(np.abs(fd - ex)))
        assert errs[0] < 1e-5
        # second order: halving delta divides the error by about four
        assert errs[1] < errs[0] / 3

    def test_scalar_derivative(self, rng):
        x = rng.uniform(-3, 3, (50, 3))
        t = 0.7
        d = 1e-5
        fd = (K.poisson_kernel(x, t + d, 3) - K.poisson_kernel(x, t - d, 3)) / (2 * d)
        assert np.allclose(fd, K.dt_poisson_kernel(x, t, 3), rtol=1e-7, atol=1e-10)

    def test_pointwise_bound_at_two(self, rng):
        d = 2
        c = K.dt_bound_constant(d)
        th = rng.uniform(0, 2 * np.pi, 200)
        x = 2 * np.stack([np.cos(th), np.sin(th)], 1)
        G = K.dt_poisson_type_kernel(x, 1.0, d)
        assert np.abs(G).max() <= c * 2.0 ** -(d + 1) * (1 + 1e-12)

    @given(x=point(2), t=tval)
    def test_pointwise_bound(self, x, t):
        d = 2
        c = K.dt_bound_constant(d)
        r = np.linalg.norm(x)
        bound = c * min(r ** -(d + 1) if r > 1e-100 else math.inf, t ** -(d + 1))
        assert np.abs(K.dt_poisson_type_kernel(x, t, d)).max() <= bound * (1 + 1e-9)

    def test_derivative_mass_vanishes(self):
        g = make_grid(2, 40.0, 512)
        assert np.abs(K.kernel_mass("dt_poisson_type", g, 1.0)).max() < 5e-3


class TestSymbols:
    def test_identity_at_zero_time(self, rng):
        xi = rng.standard_normal((20, 2))
        assert np.allclose(K.poisson_type_symbol(xi, 0.0), np.eye(3))

    def test_identity_at_zero_frequency(self):
        assert np.allclose(K.poisson_type_symbol(np.zeros(2), 2.0), np.eye(3))

    def test_one_dimensional_nilpotent(self):
        M = K.nilpotent_part(np.array([1.0]))
        assert np.allclose(M, np.array([[-1, -1j], [-1j, 1]]))
        assert np.allclose(M @ M, 0)

    @given(xi=point(3))
    def test_nilpotent(self, xi):
        M = K.nilpotent_part(xi)
        assert np.abs(M @ M).max() <= 1e-12

    @given(xi=point(2), t1=tval, t2=tval)
    def test_semigroup(self, xi, t1, t2):
        A = K.poisson_type_symbol(xi, t1) @ K.poisson_type_symbol(xi, t2)
        assert np.allclose(A, K.poisson_type_symbol(xi, t1 + t2), rtol=0, atol=1e-12)

    @given(xi=point(2), t=tval)
    def test_symbol_derivative(self, xi, t):
        d = 1e-6
        fd = (K.poisson_type_symbol(xi, t + d) - K.poisson_type_symbol(xi, t - d)) / (2 * d)
        assert np.allclose(fd, K.dt_poisson_type_symbol(xi, t), rtol=1e-6, atol=1e-7)

    def test_scalar_symbol(self):
        assert float(K.poisson_symbol(np.array([0.3, 0.4]), 2.0)) == pytest.approx(np.exp(-2 * np.pi * 0.5 * 2.0), rel=1e-15)


class TestMass:
    def test_scalar_normalization(self):
        g = make_grid(2, 40.0, 512)
        assert abs(K.kernel_mass("poisson", g, 1.0) - 1.0) < 1e-3

    def test_matrix_normalization(self):
        g = make_grid(2, 40.0, 512)
        assert np.abs(K.kernel_mass("poisson_type", g, 1.0) - np.eye(3)).max() < 5e-3

    def test_raw_sum_misses_tail(self):
        # without the exterior mass the box loses a few percent
        g = make_grid(2, 40.0, 256)
        assert 0.9 < K.grid_sum("poisson", g, 1.0) < 0.99

    @pytest.mark.parametrize("d,N", [(1, 4096), (3, 64)])
    def test_other_dimensions(self, d, N):
        g = make_grid(d, 40.0, N)
        assert abs(K.kernel_mass("poisson", g, 1.0) - 1.0) < 1e-3

    def test_unknown_kind(self):
        with pytest.raises(ParameterError):
            K.kernel_mass("heat", make_grid(1, 1.0, 8))
