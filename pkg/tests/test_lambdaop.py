import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from subdiff.errors import NumericsError
from subdiff.fraccalc import (
    SampledFunction,
    caputo_l1,
    riemann_liouville_integral,
)
from subdiff.gaussian import (
    Brownian,
    FractionalBrownian,
    GaussianSpec,
    OrnsteinUhlenbeck,
    VariableHurst,
    MobiusHurst,
)
from subdiff.lambdaop import (
    AnalyticTransform,
    ContourConfig,
    GOperator,
    LambdaOperator,
    constant_transform,
    eval_G,
    eval_G_grid,
    eval_Lambda,
    eval_Lambda_grid,
    exp_transform,
    fbm_fpke_residual,
    power_transform,
)
from subdiff.subordinators import SubordinatorSpec, inverse_time_moment
from subdiff.timechange import GridDensity, TimeChangedSpec, subordinated_density

ONE = constant_transform(1.0)


def g_of_one(beta, gamma, t):
    """Scalar oracle for the operator on the constant input: the memory
    derivative of the second moment of the time-changed power process must
    equal the operator value (checked independently in the moment tests)."""
    return math.gamma(gamma + 1.0) * t ** (gamma * beta) / math.gamma(
        gamma * beta + 1.0
    )


class TestGOperator:
    def test_gamma_zero_is_identity(self):
        # required so the H = 1/2 equations match the Brownian pair
        for t in (0.5, 1.0, 2.0):
            assert_allclose(eval_G(GOperator(0.5, 0.0), ONE, t).value, 1.0,
                            atol=1e-3)
            assert_allclose(eval_G(GOperator(0.5, 0.0),
                                   power_transform(1.0), t).value, t,
                            rtol=1e-3)

    def test_constant_input_against_moment_identity(self):
        # D^beta applied to Var(X_{E_t}) (power model, H from gamma) must
        # equal 2H G[1]; Var comes from the inverse-clock moment
        beta, gamma = 0.6, 0.4
        H = (gamma + 1.0) / 2.0
        tg = np.linspace(0.0, 1.1, 2201)
        var = np.array([
            inverse_time_moment(SubordinatorSpec.pure(beta), t, 2.0 * H)
            if t > 0 else 0.0 for t in tg
        ])
        dvar = caputo_l1(SampledFunction(tg, var), beta)
        i = np.argmin(np.abs(tg - 1.0))
        got = eval_G(GOperator(beta, gamma), ONE, 1.0).value
        assert_allclose(2.0 * H * got, dvar.values[i], rtol=1e-3)
        # frozen closed-form value for the same point
        assert_allclose(got, 0.9766023686058249, rtol=1e-3)

    def test_near_unit_beta_contract(self):
        got = eval_G(GOperator(0.999, 0.4), ONE, 1.0).value
        want = g_of_one(0.999, 0.4, 1.0)
        assert_allclose(got, want, rtol=1e-2)

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            GOperator(1.0, 0.5)
        with pytest.raises(ValueError):
            GOperator(0.5, 1.0)
        with pytest.raises(ValueError):
            eval_G(GOperator(0.5, 0.4), ONE, 0.0)

    def test_linearity(self):
        op = GOperator(0.5, 0.4)
        ga = eval_G(op, ONE, 1.0).value
        gb = eval_G(op, exp_transform(1.0), 1.0).value
        comb = AnalyticTransform(lambda z: 2.0 / z + 3.0 / (z + 1.0),
                                 max_singularity_real=-1.0)
        gc = eval_G(op, comb, 1.0).value
        assert_allclose(gc, 2.0 * ga + 3.0 * gb, rtol=1e-8, atol=1e-8)

    def test_contour_invariance(self):
        base = eval_G(GOperator(0.5, 0.4), ONE, 1.0)
        for cc in (ContourConfig(offset_ratio=0.3),
                   ContourConfig(offset_ratio=0.7),
                   ContourConfig(node_spacing=0.025)):
            v = eval_G(GOperator(0.5, 0.4, cc), ONE, 1.0)
            assert abs(v.value - base.value) <= 10 * (
                base.error + v.error
            ) + 1e-7

    def test_semigroup_spot_check(self):
        # composed operators close within the family: the composition on
        # the constant input reproduces the summed-index value
        g1, g2, beta = 0.3, 0.2, 0.5
        for t in (0.5, 1.0, 2.0):
            n = 700
            window = 1.4 * t
            tau = np.concatenate([[0.0],
                                  window * np.geomspace(1e-6, 1.0, n)])
            inner = np.zeros(n + 1)
            inner[1:], _ = eval_G_grid(GOperator(beta, g2), ONE, tau[1:])
            outer = eval_G(GOperator(beta, g1),
                           SampledFunction(tau, inner), t)
            want = g_of_one(beta, g1 + g2, t)
            assert_allclose(outer.value, want, rtol=5e-3)

    def test_singularity_guard(self):
        # transform singularity on the wrong side of the line is refused
        bad = AnalyticTransform(lambda z: 1.0 / (z - 50.0),
                                max_singularity_real=50.0)
        with pytest.raises(NumericsError):
            eval_G(GOperator(0.5, 0.2), bad, 1.0)


class TestLambdaOperator:
    def test_bm_moment_identity(self):
        # d/dt Var(B_{E_t}) = 2 Lambda[1] with Var = t^b/Gamma(1+b)
        beta = 0.5
        lam = LambdaOperator(SubordinatorSpec.pure(beta), Brownian())
        for t in (0.5, 1.0, 2.0):
            want = t ** (beta - 1.0) / (2.0 * math.gamma(beta))
            assert_allclose(eval_Lambda(lam, ONE, t).value, want, rtol=1e-3)

    def test_correspondence_with_g_family(self):
        # J^{1-b} Lambda (power model) equals H G_{2H-1} on two inputs
        beta, H = 0.5, 0.7
        lam = LambdaOperator(SubordinatorSpec.pure(beta),
                             FractionalBrownian(H))
        for g in (ONE, exp_transform(1.0)):
            for t in (0.5, 1.0, 2.0):
                n = 500
                tau = t * (np.arange(n + 1) / n) ** 3
                lv = np.zeros(n + 1)
                lv[1:], _ = eval_Lambda_grid(lam, g, tau[1:])
                J = riemann_liouville_integral(SampledFunction(tau, lv),
                                               1.0 - beta)
                rhs = H * eval_G(GOperator(beta, 2 * H - 1), g, t).value
                assert_allclose(J.values[-1], rhs, rtol=1e-3)

    def test_singleton_mixture_equals_pure(self):
        lam_p = LambdaOperator(SubordinatorSpec.pure(0.5), Brownian())
        lam_m = LambdaOperator(SubordinatorSpec(((0.5, 1.0),)), Brownian())
        a = eval_Lambda(lam_p, ONE, 1.0).value
        b = eval_Lambda(lam_m, ONE, 1.0).value
        assert abs(a - b) < 1e-8

    def test_mixture_moment_identity(self):
        # d/dt E[E^mu_t] = 2 Lambda^mu_BM[1] via the mixture moment
        spec = SubordinatorSpec(((0.4, 0.5), (0.8, 0.5)))
        lam = LambdaOperator(spec, Brownian())
        h = 5e-4
        for t in (0.5, 1.0):
            m_plus = inverse_time_moment(spec, t + h, 1.0)
            m_minus = inverse_time_moment(spec, t - h, 1.0)
            want = (m_plus - m_minus) / (2.0 * h)
            got = 2.0 * eval_Lambda(lam, ONE, t).value
            assert_allclose(got, want, rtol=2e-3)

    def test_ou_runs_and_is_positive(self):
        lam = LambdaOperator(SubordinatorSpec.pure(0.7),
                             OrnsteinUhlenbeck(1.0, 1.0))
        v = eval_Lambda(lam, ONE, 1.0)
        assert v.value > 0.0 and v.error < 1e-4

    def test_numeric_only_model_rejected(self):
        vh = VariableHurst(MobiusHurst(0.6, 0.2), horizon=2.0)
        with pytest.raises(ValueError):
            LambdaOperator(SubordinatorSpec.pure(0.5), vh)


class TestFieldResidual:
    @pytest.fixture(scope="class")
    def bm_half_density(self):
        spec = TimeChangedSpec(GaussianSpec.univariate(Brownian()),
                               SubordinatorSpec.pure(0.5))
        tg = np.linspace(0.0, 1.2, 241)
        xg = np.linspace(-7.0, 7.0, 281)
        rows = [np.zeros_like(xg)]
        for t in tg[1:]:
            rows.append(subordinated_density(spec, float(t), xg))
        return GridDensity(tg, xg, np.array(rows), np.zeros(len(tg)))

    def test_brownian_reduction(self, bm_half_density):
        # H = 1/2: the equation collapses to the Brownian pair; the cusp
        # ray at the origin is excluded (second differences are not
        # classical across it)
        rep = fbm_fpke_residual(0.5, SubordinatorSpec.pure(0.5),
                                bm_half_density, x_exclude=0.3)
        assert rep.overall_linf < 5e-3

    def test_moment_projection(self, bm_half_density):
        # x^2-projection of the H = 0.7 residual is the moment identity
        H, beta = 0.7, 0.5
        spec = TimeChangedSpec(
            GaussianSpec.univariate(FractionalBrownian(H)),
            SubordinatorSpec.pure(beta),
        )
        tg = np.linspace(0.0, 1.1, 221)
        # x^2-weighted integrals feel the heavy subdiffusive tails: the
        # domain reaches out to ~12 deviations
        xg = np.linspace(-14.0, 14.0, 451)
        rows = [np.zeros_like(xg)]
        for t in tg[1:]:
            rows.append(subordinated_density(spec, float(t), xg))
        var_g = np.trapezoid(np.array(rows) * xg**2, xg, axis=1)
        dvar = caputo_l1(SampledFunction(tg, var_g), beta).values
        for t in (0.5, 0.7, 0.9):
            i = np.argmin(np.abs(tg - t))
            rhs = 2.0 * H * eval_G(GOperator(beta, 2 * H - 1), ONE,
                                   float(tg[i])).value
            assert_allclose(dvar[i], rhs, rtol=1e-3)

    def test_report_serializes(self, bm_half_density):
        import json

        rep = fbm_fpke_residual(0.5, SubordinatorSpec.pure(0.5),
                                bm_half_density, x_exclude=0.3)
        blob = rep.to_json()
        assert "contour" in blob and "linf_per_x" in blob
        json.dumps(blob)

    def test_zero_density(self):
        tg = np.linspace(0.0, 1.0, 81)
        xg = np.linspace(-4.0, 4.0, 101)
        dens = GridDensity(tg, xg, np.zeros((81, 101)), np.zeros(81))
        rep = fbm_fpke_residual(0.5, SubordinatorSpec.pure(0.5), dens)
        assert rep.overall_linf < 1e-12

    def test_requires_zero_start(self):
        tg = np.linspace(0.1, 1.0, 81)
        xg = np.linspace(-4.0, 4.0, 101)
        dens = GridDensity(tg, xg, np.zeros((81, 101)), np.zeros(81))
        with pytest.raises(ValueError):
            fbm_fpke_residual(0.5, SubordinatorSpec.pure(0.5), dens)

    def test_requires_pure_clock(self):
        tg = np.linspace(0.0, 1.0, 81)
        xg = np.linspace(-4.0, 4.0, 101)
        dens = GridDensity(tg, xg, np.zeros((81, 101)), np.zeros(81))
        with pytest.raises(ValueError):
            fbm_fpke_residual(0.5, SubordinatorSpec(((0.4, 0.5), (0.8, 0.5))),
                              dens)
