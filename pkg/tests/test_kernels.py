import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from besselvar.errors import InvalidArgumentError
from besselvar.kernels import (
    BoundKind,
    KernelPoint,
    bound_envelope,
    fit_bound_constant,
    heat_eval,
    heat_kernel,
    poisson_eval,
    poisson_kernel,
    poisson_kernel_dt,
    poisson_kernel_dx,
    poisson_kernel_dydt,
    sample_cloud,
)
from besselvar.measure import MeasureContext
from besselvar.oracles import fd_derivative, heat_lam_half, poisson_lam1, poisson_lam1_derivs
from besselvar.semigroup import kernel_values, table_kernel_values

pos = st.floats(1e-2, 1e2)
lams = st.sampled_from([0.3, 0.5, 1.0, 2.5])


def test_reference_point(ctx1):
    assert poisson_kernel(ctx1, KernelPoint(1, 1, 1)) == pytest.approx(4 / (5 * math.pi), rel=1e-12)


def test_point_rejects_nonpositive():
    with pytest.raises(InvalidArgumentError):
        KernelPoint(0, 1, 1)


def test_closed_form_lam1(ctx1, rng):
    t, x, y = np.exp(rng.uniform(np.log(1e-3), np.log(1e3), size=(3, 2000)))
    got = poisson_eval(ctx1, "p", t, x, y).value
    np.testing.assert_allclose(got, poisson_lam1(t, x, y), rtol=1e-9)


def test_against_adaptive_theta_integral():
    # independent evaluation with scipy quad in theta at a non-closed-form lambda
    lam = 0.7
    t, x, y = 0.3, 1.2, 0.9

    def g(th):
        return math.sin(th) ** (2 * lam - 1) / (x * x + y * y + t * t - 2 * x * y * math.cos(th)) ** (lam + 1)

    ref = 2 * lam * t / math.pi * integrate.quad(g, 0, math.pi, epsrel=1e-13, limit=200)[0]
    assert poisson_kernel(MeasureContext(lam), KernelPoint(t, x, y)) == pytest.approx(ref, rel=1e-9)


@given(lam=lams, t=pos, x=pos, y=pos)
def test_symmetry_and_positivity(lam, t, x, y):
    ctx = MeasureContext(lam)
    p = poisson_eval(ctx, "p", [t, t], [x, y], [y, x]).value
    assert p[0] > 0
    assert p[0] == pytest.approx(p[1], rel=1e-12)
    w = heat_eval(ctx, [t, t], [x, y], [y, x]).value
    assert w[0] >= 0
    assert w[0] == pytest.approx(w[1], rel=1e-12, abs=1e-300)


@given(lam=lams, t=st.floats(0.1, 10), x=st.floats(0.1, 10), y=st.floats(0.1, 10))
def test_heat_scaling(lam, t, x, y):
    ctx = MeasureContext(lam)
    w1 = heat_kernel(ctx, KernelPoint(t, x, y))
    w2 = heat_kernel(ctx, KernelPoint(4 * t, 2 * x, 2 * y))
    assert w2 == pytest.approx(2.0 ** -(2 * lam + 1) * w1, rel=1e-10, abs=1e-300)


def test_heat_lam_half_oracle(rng):
    ctx = MeasureContext(0.5)
    t, x, y = np.exp(rng.uniform(np.log(1e-2), np.log(1e2), size=(3, 500)))
    keep = x * y / t < 600
    t, x, y = t[keep], x[keep], y[keep]
    ref = heat_lam_half(t, x, y)
    got = heat_eval(ctx, t, x, y).value
    big = ref > 1e-250
    np.testing.assert_allclose(got[big], ref[big], rtol=1e-9)


def test_derivatives_closed_form(ctx1, rng):
    t, x, y = np.exp(rng.uniform(np.log(1e-2), np.log(1e2), size=(3, 500)))
    dt, dx, dy = poisson_lam1_derivs(t, x, y)
    for which, ref in (("dt", dt), ("dx", dx), ("dy", dy)):
        got = poisson_eval(ctx1, which, t, x, y).value
        scale = poisson_lam1(t, x, y) / np.minimum(t, np.sqrt((x - y) ** 2 + t * t))
        assert np.max(np.abs(got - ref) / np.maximum(np.abs(ref), scale)) < 1e-8, which


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.5])
@pytest.mark.parametrize("which", ["dt", "dx", "dy", "dxdt", "dydt"])
def test_derivatives_finite_differences(lam, which, rng):
    ctx = MeasureContext(lam)
    t, x, y = np.exp(rng.uniform(np.log(1e-1), np.log(1e1), size=(3, 40)))
    got = poisson_eval(ctx, which, t, x, y).value
    ref = fd_derivative(ctx, which, t, x, y)
    scale = poisson_eval(ctx, "p", t, x, y).value / t ** (2 if len(which) == 4 else 1)
    assert np.max(np.abs(got - ref) / np.maximum(np.abs(ref), scale)) < 1e-6


def test_mixed_derivative_reference_point(ctx1):
    got = poisson_kernel_dydt(ctx1, KernelPoint(1, 1, 2))
    ref = fd_derivative(ctx1, "dydt", 1.0, 1.0, 2.0)[0]
    assert got == pytest.approx(ref, rel=1e-7)


def test_dt_negative_on_diagonal_small_t():
    for lam in (0.5, 1.0, 2.5):
        ctx = MeasureContext(lam)
        for x in (0.1, 1.0, 10.0):
            assert poisson_kernel_dt(ctx, KernelPoint(1e-3 * x, x, x)) < 0


def test_dx_scalar_wrapper(ctx1):
    assert poisson_kernel_dx(ctx1, KernelPoint(0.5, 1, 2)) == pytest.approx(
        float(poisson_lam1_derivs(0.5, 1, 2)[1]), rel=1e-10
    )


def test_envelope_examples(ctx1):
    assert bound_envelope(ctx1, "P_t1", 1, 1, 2) == pytest.approx(0.25)
    assert bound_envelope(ctx1, "P_t2", 1, 1, 2) == pytest.approx(0.25)
    assert bound_envelope(ctx1, BoundKind.MEASURE_FORM, 1, 4, 1) == pytest.approx(1 / ((64 / 3) * 16))
    assert np.isinf(bound_envelope(ctx1, "measure_form", 1, 2, 2))
    with pytest.raises(InvalidArgumentError):
        BoundKind.parse("nope")


def test_fit_constant_scale_invariant(ctx1):
    cloud = sample_cloud(np.random.default_rng(3), 500)
    c1 = fit_bound_constant(ctx1, "P_t1", cloud)
    c10 = fit_bound_constant(ctx1, "P_t1", cloud.scaled(10.0))
    assert np.isfinite(c1)
    assert c10 == pytest.approx(c1, rel=1e-9)


def test_sample_cloud_near_diagonal():
    cloud = sample_cloud(np.random.default_rng(0), 400, near_fraction=0.25)
    gap = np.abs(cloud.x[:100] - cloud.y[:100]) / np.minimum(cloud.x[:100], cloud.y[:100])
    assert np.all(gap < 1e-2) and np.all(gap > 0)


@pytest.mark.parametrize("kind", ["poisson", "heat"])
@pytest.mark.parametrize("lam", [0.3, 1.0, 2.5])
def test_table_matches_direct(kind, lam, rng):
    ctx = MeasureContext(lam)
    t, x, y = np.exp(rng.uniform(np.log(1e-3), np.log(1e3), size=(3, 3000)))
    direct = kernel_values(ctx, kind, t, x, y)
    table = table_kernel_values(ctx, kind, t, x, y)
    ok = direct > 1e-250
    np.testing.assert_allclose(table[ok], direct[ok], rtol=1e-9)
