import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy.special import erfcx

from subdiff.errors import InversionError, NumericsError
from subdiff.fraccalc import (
    FracOrder,
    LaplaceFunction,
    SampledFunction,
    caputo_l1,
    laplace_forward,
    laplace_inverse,
    mittag_leffler,
    riemann_liouville_integral,
)

from oracles import caputo_quadrature

GRID = np.linspace(0.0, 2.0, 1201)


def test_sampled_function_validation():
    with pytest.raises(ValueError):
        SampledFunction(np.array([0.1, 0.2]), np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        SampledFunction(np.array([0.0, 0.0, 1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        SampledFunction(np.array([0.0, 1.0]), np.array([np.inf, 0.0]))


def test_frac_order_ranges():
    with pytest.raises(ValueError):
        FracOrder(beta=1.2)
    with pytest.raises(ValueError):
        FracOrder(alpha=0.0)


class TestCaputo:
    def test_linear_half_order(self):
        # D^{1/2} t = t^{1/2} / Gamma(3/2); frozen at t = 1 and t = 2
        d = caputo_l1(SampledFunction(GRID, GRID), 0.5)
        i1 = np.argmin(np.abs(GRID - 1.0))
        assert_allclose(d.values[i1], 1.1283791670955126, rtol=1e-6)
        assert_allclose(d.values[-1], 1.595769121605731, rtol=1e-6)

    def test_against_quadrature_oracle(self):
        # independent evaluation of the defining integral for g = t^2;
        # the L1 scheme is order 2 - beta, ~ 2e-4 at this grid
        d = caputo_l1(SampledFunction(GRID, GRID**2), 0.7)
        for t in (0.5, 1.0, 1.8):
            want = caputo_quadrature(lambda u: 2.0 * u, t, 0.7)
            i = np.argmin(np.abs(GRID - t))
            assert_allclose(d.values[i], want, rtol=1e-3)

    def test_constant_is_zero(self):
        d = caputo_l1(SampledFunction(GRID, np.full_like(GRID, 3.7)), 0.6)
        assert np.all(d.values == 0.0)

    def test_beta_one_is_derivative(self):
        d = caputo_l1(SampledFunction(GRID, GRID**2), 1.0)
        assert_allclose(d.values, 2.0 * GRID, atol=1e-10)

    def test_power_law_convergence_order(self):
        # pointwise error against Gamma(a+1)/Gamma(a-b+1) t^{a-b} at t = 1
        # shrinks at the scheme's order 2 - beta (the t -> 0 corner cell is
        # first-order and excluded)
        a, b = 1.5, 0.5
        errs = []
        for n in (200, 400, 800):
            t = np.linspace(0.0, 1.0, n + 1)
            d = caputo_l1(SampledFunction(t, t**a), b)
            want = math.gamma(a + 1.0) / math.gamma(a - b + 1.0)
            errs.append(abs(d.values[-1] - want))
        order = np.log2(errs[0] / errs[1]), np.log2(errs[1] / errs[2])
        assert min(order) > 2.0 - b - 0.25

    @settings(max_examples=20, deadline=None)
    @given(
        a=st.floats(-3.0, 3.0),
        b=st.floats(-3.0, 3.0),
        beta=st.floats(0.1, 0.95),
    )
    def test_linearity(self, a, b, beta):
        t = np.linspace(0.0, 1.0, 65)
        g = np.sin(t)
        h = t**2
        lhs = caputo_l1(SampledFunction(t, a * g + b * h), beta).values
        rhs = a * caputo_l1(SampledFunction(t, g), beta).values + (
            b * caputo_l1(SampledFunction(t, h), beta).values
        )
        assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


class TestRiemannLiouville:
    def test_plain_integral(self):
        r = riemann_liouville_integral(
            SampledFunction(GRID, np.ones_like(GRID)), 1.0
        )
        assert_allclose(r.values, GRID, atol=1e-12)

    def test_half_integral_of_one(self):
        r = riemann_liouville_integral(
            SampledFunction(GRID, np.ones_like(GRID)), 0.5
        )
        i1 = np.argmin(np.abs(GRID - 1.0))
        assert_allclose(r.values[i1], 1.1283791670955126, rtol=1e-10)

    def test_composition_recovers_caputo(self):
        # J^{1-b} dg/dt agrees with the L1 Caputo output for g = t^2
        dg = np.gradient(GRID**2, GRID, edge_order=2)
        comp = riemann_liouville_integral(SampledFunction(GRID, dg), 0.5)
        cap = caputo_l1(SampledFunction(GRID, GRID**2), 0.5)
        assert_allclose(comp.values, cap.values, atol=5e-5)

    def test_semigroup(self):
        ra = riemann_liouville_integral(
            riemann_liouville_integral(SampledFunction(GRID, GRID), 0.4), 0.8
        )
        rb = riemann_liouville_integral(SampledFunction(GRID, GRID), 1.2)
        assert_allclose(ra.values, rb.values, atol=2e-6)

    def test_rejects_bad_alpha(self):
        with pytest.raises(ValueError):
            riemann_liouville_integral(SampledFunction(GRID, GRID), -0.5)


class TestMittagLeffler:
    def test_reduces_to_exp(self):
        assert_allclose(mittag_leffler(1.0, 1.0), math.e, rtol=1e-14)
        assert_allclose(mittag_leffler(1.0, -2.5), math.exp(-2.5), rtol=1e-14)

    def test_at_zero(self):
        for a in (0.2, 0.5, 0.9, 1.0):
            assert mittag_leffler(a, 0.0) == 1.0

    def test_half_order_identity(self):
        # E_{1/2}(-x) = exp(x^2) erfc(x), evaluated independently
        assert_allclose(mittag_leffler(0.5, -1.0), 0.427583576155807,
                        rtol=1e-10)
        for x in (0.3, 2.0, 5.0, 8.0, 40.0, 300.0):
            assert_allclose(mittag_leffler(0.5, -x), erfcx(x), rtol=1e-10)

    def test_small_alpha_negative(self):
        # series would overflow; the spectral route must take over
        v = mittag_leffler(0.1, -3.0)
        assert 0.0 < v < 1.0

    def test_complete_monotonicity(self):
        for a in (0.3, 0.6, 0.9):
            xs = np.linspace(0.0, 30.0, 121)
            vals = np.array([mittag_leffler(a, -x) for x in xs])
            assert np.all(vals > 0.0)
            assert np.all(np.diff(vals) < 0.0)

    def test_unrepresentable_reported(self):
        with pytest.raises(NumericsError):
            mittag_leffler(0.5, 40.0)  # exp(1600) scale

    def test_alpha_range(self):
        with pytest.raises(ValueError):
            mittag_leffler(1.3, -1.0)


class TestLaplaceForward:
    def test_constant(self):
        v, err = laplace_forward(lambda t: 1.0, 2.0)
        assert_allclose(v, 0.5, rtol=1e-9)
        assert err < 1e-6

    def test_exponential(self):
        v, _ = laplace_forward(lambda t: math.exp(-t), 1.0)
        assert_allclose(v, 0.5, rtol=1e-9)

    def test_ou_variance_derivative(self):
        # R'(t) = sigma^2 e^{-2 alpha t} transforms to sigma^2/(s+2alpha)
        alpha, sigma, s = 1.0, math.sqrt(2.0), 1.5
        v, _ = laplace_forward(lambda t: sigma**2 * math.exp(-2 * alpha * t), s)
        assert_allclose(v, sigma**2 / (s + 2 * alpha), rtol=1e-9)

    def test_sampled(self):
        t = np.linspace(0.0, 40.0, 8001)
        v, err = laplace_forward(SampledFunction(t, np.exp(-t)), 1.0)
        assert_allclose(v.real, 0.5, atol=5e-6)
        assert abs(v.real - 0.5) < 5 * max(err, 1e-12)

    def test_abscissa_guard(self):
        with pytest.raises(ValueError):
            laplace_forward(lambda t: 1.0, -1.0)


class TestLaplaceInverse:
    def test_constant_pair(self):
        assert_allclose(laplace_inverse(lambda s: 1.0 / s, 3.0), 1.0,
                        rtol=1e-8)

    def test_ramp_pair(self):
        assert_allclose(laplace_inverse(lambda s: 1.0 / s**2, 2.5), 2.5,
                        rtol=1e-8)

    def test_clock_transform_pair(self):
        # frozen from the closed form pi^{-1/2} exp(-1/4)
        F = LaplaceFunction(
            lambda s: s**-0.5 * np.exp(-np.sqrt(s)),
            log_evaluator=lambda s: -0.5 * np.log(s) - np.sqrt(s),
        )
        assert_allclose(laplace_inverse(F, 1.0), 0.4393912894677224,
                        rtol=1e-8)

    def test_round_trip(self):
        # forward then inverse returns the function to 1e-6 relative; the
        # numeric forward transform only exists right of the abscissa, so
        # the inversion cross-checks two Fourier contours instead of Talbot
        def F(s):
            return np.array(
                [laplace_forward(lambda u: math.exp(-u), sv).value
                 for sv in np.atleast_1d(s)]
            )

        lf = LaplaceFunction(F, right_plane_only=True)
        for t in (0.1, 0.7, 2.0, 10.0):
            got = laplace_inverse(lf, t)
            assert_allclose(got, math.exp(-t), rtol=1e-6)

    def test_disagreement_raises(self):
        # a transform with a singularity right of every contour: both
        # methods produce garbage and must refuse to agree
        def F(s):
            return 1.0 / (s - 60.0)

        with pytest.raises(InversionError):
            laplace_inverse(F, 1.0)

    def test_t_positive(self):
        with pytest.raises(ValueError):
            laplace_inverse(lambda s: 1.0 / s, 0.0)
