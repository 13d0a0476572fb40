import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, special

from besselvar.errors import EvaluationError, InvalidArgumentError, TruncationError
from besselvar.measure import MeasureContext
from besselvar.oracles import sine_integral_gamma
from besselvar.quadrature import (
    HalfLineRule,
    gauss_jacobi,
    integrate_halfline,
    integrate_theta,
    sine_power_integral,
    theta_rule,
)


@pytest.mark.parametrize("order", [2, 8, 32])
def test_total_weight_lam1(order):
    assert theta_rule(MeasureContext(1.0), order).total_weight == pytest.approx(2.0, rel=1e-13)


def test_total_weight_lam_half():
    assert theta_rule(MeasureContext(0.5), 16).total_weight == pytest.approx(math.pi, rel=1e-13)


def test_total_weight_against_adaptive_reference():
    ref, _ = integrate.quad(lambda th: math.sin(th) ** 4, 0, math.pi, epsabs=0, epsrel=1e-13)
    rule = theta_rule(MeasureContext(2.5), 16)
    assert rule.total_weight == pytest.approx(ref, rel=1e-12)
    assert ref == pytest.approx(math.gamma(2.5) * math.sqrt(math.pi) / math.gamma(3), rel=1e-12)


@pytest.mark.parametrize("lam", [0.3, 0.5, 1.0, 2.5, 7.0])
def test_sine_identity(lam):
    got = integrate_theta(theta_rule(MeasureContext(lam)), lambda s: 1.0).value
    assert got == pytest.approx(sine_integral_gamma(lam), rel=1e-10)
    assert sine_power_integral(lam) == pytest.approx(sine_integral_gamma(lam), rel=1e-13)


@pytest.mark.parametrize("n,a", [(5, -0.4), (12, 0.0), (20, 1.5)])
def test_gauss_jacobi_matches_scipy(n, a):
    x, w = gauss_jacobi(n, a, a)
    xs, ws = special.roots_jacobi(n, a, a)
    np.testing.assert_allclose(np.sort(x), np.sort(xs), atol=1e-13)
    np.testing.assert_allclose(w[np.argsort(x)], ws[np.argsort(xs)], rtol=1e-11)


@given(lam=st.sampled_from([0.3, 0.5, 1.0, 2.5]), k=st.integers(0, 15))
def test_polynomial_exactness(lam, k):
    # int_{-1}^{1} s^(2j) (1 - s^2)^(lam - 1) ds = B(j + 1/2, lam)
    rule = theta_rule(MeasureContext(lam), 8)
    got = np.sum(rule.weights * rule.nodes**k)
    expect = 0.0 if k % 2 else special.beta(k / 2 + 0.5, lam)
    assert got == pytest.approx(expect, rel=1e-12, abs=1e-14)


@pytest.mark.parametrize("t,x,y", [(1, 1, 1), (0.3, 2, 5), (2, 0.1, 0.2)])
def test_inverse_square(t, x, y):
    a = x * x + y * y + t * t
    b = 2 * x * y
    got = integrate_theta(theta_rule(MeasureContext(1.0)), lambda s: (a - b * s) ** -2.0)
    assert got.value == pytest.approx(2 / (a * a - b * b), rel=1e-12)


def test_odd_integrand_vanishes():
    assert abs(integrate_theta(theta_rule(MeasureContext(1.0)), lambda s: s).value) < 1e-15


def test_peaked_integrand_uses_composite_rule():
    # concentrated near s = 1 with width 1e-6
    a, b = 1.0 + 1e-6, 1.0
    got = integrate_theta(theta_rule(MeasureContext(1.0)), lambda s: (a - b * s) ** -2.0, peak=1e-6)
    assert got.value == pytest.approx(2 / (a * a - b * b), rel=1e-9)


def test_theta_rejects():
    with pytest.raises(InvalidArgumentError):
        theta_rule(MeasureContext(1.0), 1)
    with pytest.raises(EvaluationError) as info:
        integrate_theta(theta_rule(MeasureContext(1.0)), lambda s: np.where(s > 0, np.nan, 1.0))
    assert info.value.node > 0


def test_halfline_exponential():
    ctx = MeasureContext(1.0)
    rule = HalfLineRule(np.geomspace(1e-3, 10, 30))
    got = integrate_halfline(ctx, lambda y: np.exp(-y) * y**-2.0, rule, majorant=lambda y: np.exp(-y))
    assert got.value == pytest.approx(1.0, rel=1e-8)


def test_halfline_indicator():
    ctx = MeasureContext(1.0)
    got = integrate_halfline(ctx, lambda y: ((y > 1) & (y < 3)).astype(float), HalfLineRule(np.array([1.0, 3.0, 4.0])))
    assert got.value == pytest.approx(26 / 3, rel=1e-12)


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.5])
def test_halfline_against_scipy(lam):
    ctx = MeasureContext(lam)

    def f(y):
        return 1.0 / (1.0 + y * y) ** (lam + 1)

    ref, _ = integrate.quad(lambda y: f(y) * y ** (2 * lam), 0, np.inf, epsrel=1e-12)
    got = integrate_halfline(ctx, f, HalfLineRule(np.geomspace(1e-2, 1e2, 40)), majorant=lambda y: y**-2.0)
    assert got.value == pytest.approx(ref, rel=1e-7)


def test_halfline_truncation_error():
    ctx = MeasureContext(1.0)
    with pytest.raises(TruncationError):
        integrate_halfline(ctx, lambda y: np.exp(-y), HalfLineRule(np.array([1.0, 2.0])), majorant=lambda y: y)
