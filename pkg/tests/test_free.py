import cmath
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from hsaw import free
from hsaw.errors import Divergence, PoleProximity
from hsaw.lattice import shell_count

B = 15 / 16

# regression fixtures fitted on the grids below
F_SANDWICH = (0.655, 3.317)
P0_SANDWICH = (0.394, 3.317)
G0_SANDWICH = (0.966, 6.378)
DBETA_ENVELOPE = (14.0, 2.98)  # x != 0, x = 0
F_PERIOD_RATIO = {0.5: 1.001064312817836, 1.0: 1.0005020671880105, 1.5: 1.0001670096254387}

GRID_36 = [(r * cmath.exp(1j * a), N) for r in (0.1, 1.0, 10.0)
           for a in (0.0, math.pi / 3, -math.pi / 3) for N in range(4)]

sector_beta = st.builds(lambda r, a: r * cmath.exp(1j * a),
                        st.floats(1e-3, 1e3), st.floats(-3 * math.pi / 4 + 0.1, 3 * math.pi / 4 - 0.1))


def shell_total(values_by_level):
    return values_by_level[0] + sum(shell_count(N) * v for N, v in enumerate(values_by_level) if N)


class TestGreen0:
    def test_origin_at_zero_beta(self):
        assert free.green0(0.0, 0) == pytest.approx(1.25, abs=1e-10)

    @pytest.mark.parametrize("N", range(1, 6))
    def test_levels_at_zero_beta(self, N):
        assert free.green0(0.0, N) == pytest.approx(4.0**-N, abs=1e-10)

    def test_partial_sum_oracle(self):
        direct = sum(2.0 ** (-2 * k) * B / (1 + 4.0**k) for k in range(200))
        assert free.green0(1.0, 0) == pytest.approx(direct, rel=1e-12)

    @pytest.mark.parametrize("beta,N", GRID_36)
    def test_alt_representation(self, beta, N):
        a, b = free.green0(beta, N), free.green0_alt(beta, N)
        assert abs(a - b) <= 1e-10 * abs(b)

    @given(sector_beta, st.integers(0, 6))
    def test_alt_representation_sector(self, beta, N):
        a, b = free.green0(beta, N), free.green0_alt(beta, N)
        assert abs(a - b) <= 1e-10 * abs(b)

    @given(sector_beta, st.integers(0, 5))
    def test_conjugate_symmetry(self, beta, N):
        assert free.green0(beta.conjugate(), N) == pytest.approx(complex(free.green0(beta, N)).conjugate(),
                                                                 rel=1e-13)

    def test_alt_at_zero(self):
        assert free.green0_alt(0.0, 0) == pytest.approx(1.25, abs=1e-10)

    def test_large_beta_origin(self):
        # every shell term is ~ L^{-4k} B / beta, so beta G0(beta, 0) -> 1, of which k = 0 gives B
        beta = 1e7
        assert beta * free.green0_alt(beta, 0) == pytest.approx(1.0, rel=1e-6)
        assert beta * B / (1 + beta) == pytest.approx(B, rel=1e-6)

    def test_array_input(self):
        b = np.array([[0.1, 1.0], [2.0 + 1j, 10.0]])
        out = free.green0(b, 2)
        assert out.shape == (2, 2)
        assert out[1, 0] == pytest.approx(free.green0(2.0 + 1j, 2), rel=1e-14)

    @pytest.mark.parametrize("beta", [0.1, 1.0, 10.0])
    def test_total_mass(self, beta):
        vals = [free.green0(beta, N) for N in range(80)]
        assert shell_total(vals) == pytest.approx(1 / beta, rel=1e-8)

    def test_sandwich(self):
        vals = []
        for a in np.linspace(-(3 * np.pi / 4 - 0.1), 3 * np.pi / 4 - 0.1, 15):
            r = np.logspace(-3, 3, 25)
            b = r * np.exp(1j * a)
            for N in range(1, 6):
                x2 = 4.0**N
                vals.append(np.abs(free.green0(b, N)) * x2 * (1 + r * x2) ** 2)
        vals = np.concatenate(vals)
        assert G0_SANDWICH[0] <= vals.min() and vals.max() <= G0_SANDWICH[1]

    def test_pole(self):
        with pytest.raises(PoleProximity):
            free.green0(-0.25, 1)


class TestDerivative:
    def test_finite_difference(self):
        b = 0.5
        h = 1e-6 * b
        fd = (free.green0(b + h, 2) - free.green0(b - h, 2)) / (2 * h)
        assert free.green0_dbeta(b, 2) == pytest.approx(fd, rel=1e-6)

    def test_random_points(self):
        rng = np.random.default_rng(20)
        for _ in range(20):
            b = 10 ** rng.uniform(-2, 2) * cmath.exp(1j * rng.uniform(-2, 2))
            N = int(rng.integers(0, 5))
            h = 1e-5 * abs(b)
            fd = (free.green0(b + h, N) - free.green0(b - h, N)) / (2 * h)
            assert abs(free.green0_dbeta(b, N) - fd) <= 1e-6 * abs(fd)

    @pytest.mark.parametrize("beta", [0.01, 1.0, 50.0])
    @pytest.mark.parametrize("N", [1, 3])
    def test_real_negative(self, beta, N):
        d = free.green0_dbeta(beta, N)
        assert np.isreal(d) and d < 0

    def test_envelope(self):
        c, c0 = 0.0, 0.0
        for a in np.linspace(-(3 * np.pi / 4 - 0.1), 3 * np.pi / 4 - 0.1, 13):
            r = np.logspace(-3, 3, 19)
            b = r * np.exp(1j * a)
            v = r
            d0 = np.abs(b * free.green0_dbeta(b, 0))
            c0 = max(c0, np.max(d0 / (v * (1 + np.log(1 + 1 / v)) / (1 + v) ** 2)))
            for N in range(1, 6):
                x2 = 4.0**N
                u = r * x2
                d = np.abs(b * free.green0_dbeta(b, N))
                c = max(c, np.max(d / (u * (1 + np.log(1 + 1 / u)) / (x2 * (1 + u) ** 3))))
        assert c <= DBETA_ENVELOPE[0] and c0 <= DBETA_ENVELOPE[1]

    def test_diverges_at_zero(self):
        with pytest.raises(Divergence):
            free.green0_dbeta(0.0, 1)


class TestShape:
    def test_small_t_slope(self):
        slope = sum(2.0 ** (-4 * j) * B * (4 - 2.0 ** (-2 * j)) for j in range(60))
        assert free.f_shape(1e-9) / 1e-9 == pytest.approx(slope, rel=1e-7)

    @given(st.floats(1e-6, 1e6))
    def test_positive(self, t):
        assert free.f_shape(t) > 0

    def test_sandwich(self):
        t = np.logspace(-3, 3, 121)
        v = free.f_shape(t) * t**2 * (1 + 1 / t) ** 3
        assert F_SANDWICH[0] <= v.min() and v.max() <= F_SANDWICH[1]

    def test_negative_time(self):
        with pytest.raises(Divergence):
            free.f_shape(-1.0)

    def test_complex_continuation_matches_series(self):
        t = 2.0 * cmath.exp(0.4j)
        direct = sum(2.0 ** (-4 * j) * B * (cmath.exp(-(4.0**-j) * t) - cmath.exp(-4 * t)) for j in range(80))
        assert free.f_shape(t) == pytest.approx(direct, rel=1e-12)


class TestKernel:
    @pytest.mark.parametrize("T", [0.25, 1.0, 4.0, 16.0])
    def test_normalisation_and_positivity(self, T):
        vals = [free.p0(T, N) for N in range(80)]
        assert min(vals) >= 0
        assert shell_total(vals) == pytest.approx(1.0, abs=1e-8)

    def test_level_one_plumbing(self):
        assert free.p0(1.0, 1) == pytest.approx(free.f_shape(0.25) / 16, rel=1e-14)

    @pytest.mark.parametrize("beta,N", [(1.0, 1), (0.1, 0), (10.0, 2)])
    def test_laplace_transform(self, beta, N):
        val, _ = integrate.quad(lambda T: math.exp(-beta * T) * free.p0(T, N), 0, np.inf,
                                epsabs=0, epsrel=1e-12, limit=400)
        assert val == pytest.approx(free.green0(beta, N), rel=1e-8)

    def test_sandwich(self):
        vals = []
        for N in range(6):
            x2 = 0.0 if N == 0 else 4.0**N
            T = np.logspace(0, 3, 61)
            vals.append(free.p0(T, N) * T**2 * (1 + x2 / T) ** 3)
        vals = np.concatenate(vals)
        assert P0_SANDWICH[0] <= vals.min() and vals.max() <= P0_SANDWICH[1]
        assert P0_SANDWICH[1] / P0_SANDWICH[0] < 50


class TestEndToEnd:
    def test_monotone(self):
        T = np.logspace(0, 3, 80)
        e = [free.endtoend_free(t, 1.0) for t in T]
        assert np.all(np.diff(e) > 0)

    def test_scaling_ratio(self):
        prev = None
        for m in (2, 5, 10):
            T = 1.3 * 4.0**m
            err = abs(free.endtoend_free(4 * T, 1.0) / free.endtoend_free(T, 1.0) - 2)
            if prev is not None:
                assert err < prev
            prev = err
        assert prev < 1e-10

    def test_small_alpha(self):
        # the alpha -> 0 moment is P(omega(T) != 0)
        assert free.endtoend_free(4.0, 1e-6) == pytest.approx(1 - free.p0(4.0, 0), abs=1e-5)
        assert free.endtoend_free(4.0, 1e-6) <= 1

    @pytest.mark.parametrize("alpha", [0.0, 2.0])
    def test_bad_alpha(self, alpha):
        with pytest.raises(ValueError):
            free.endtoend_free(4.0, alpha)


class TestLogPeriodic:
    @pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
    def test_period(self, alpha):
        assert abs(free.F_alpha(5.2, alpha) - free.F_alpha(1.3, alpha)) < 1e-10

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
    def test_non_constant_and_positive(self, alpha):
        F = np.array([free.F_alpha(T, alpha) for T in np.linspace(1, 4, 401)])
        assert np.all(F > 0)
        assert F.max() / F.min() == pytest.approx(F_PERIOD_RATIO[alpha], rel=1e-9)
        assert F.max() / F.min() > 1

    @pytest.mark.parametrize("alpha", [0.5, 1.0])
    def test_finite_scale_limit(self, alpha):
        T = 1.3 * 4.0**12
        lhs = free.endtoend_free(T, alpha) ** (1 / alpha) / math.sqrt(T)
        assert lhs == pytest.approx(free.F_alpha(1.3, alpha), rel=1e-9)


class TestJumpConstant:
    def test_value(self):
        assert free.derive_jump_constant(2) == pytest.approx(64 / 21, abs=1e-6)

    @pytest.mark.parametrize("N", [1, 2, 3])
    def test_probe_independent(self, N):
        assert free.derive_jump_constant(2, level=N) == pytest.approx(free.derive_jump_constant(2), abs=1e-6)

    @pytest.mark.parametrize("L", [2, 3, 4])
    def test_matches_closed_form(self, L):
        assert free.derive_jump_constant(L) == pytest.approx(free.jump_constant_exact(L), rel=1e-6)
        assert free.jump_constant_exact(L) > 0
