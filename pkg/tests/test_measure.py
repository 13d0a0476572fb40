import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from besselvar.errors import CoverageError, InvalidArgumentError
from besselvar.measure import (
    GridFunction,
    GridSpec,
    Interval,
    MeasureContext,
    build_grid,
    constant_function,
    interval_dilate,
    interval_normalize,
    mean_on_interval,
    mean_oscillation,
    measure_of_interval,
)

pos = st.floats(1e-3, 1e3)
lams = st.sampled_from([0.25, 0.5, 1.0, 2.5])


def test_normalize_small_center():
    iv = interval_normalize(0.5, 1)
    assert (iv.center, iv.radius, iv.left, iv.right) == (0.75, 0.75, 0.0, 1.5)


def test_normalize_keeps_regular_interval():
    iv = interval_normalize(2, 1)
    assert (iv.center, iv.radius, iv.left, iv.right) == (2, 1, 1, 3)
    iv = interval_normalize(1, 1)
    assert (iv.left, iv.right) == (0, 2)


@pytest.mark.parametrize("x,r", [(0, 1), (1, 0), (-1, 1), (np.inf, 1)])
def test_normalize_rejects(x, r):
    with pytest.raises(InvalidArgumentError):
        interval_normalize(x, r)


def test_dilate():
    iv = interval_dilate(Interval(2, 1), 3)
    assert (iv.center, iv.radius, iv.left, iv.right) == (2.5, 2.5, 0.0, 5.0)
    assert interval_dilate(Interval(10, 1), 2) == Interval(10, 2)
    assert interval_dilate(Interval(2, 1), 1) == Interval(2, 1)
    with pytest.raises(InvalidArgumentError):
        interval_dilate(Interval(2, 1), 0)


def test_measure_examples(ctx1):
    assert measure_of_interval(ctx1, Interval(2, 1)) == pytest.approx(26 / 3, rel=1e-14)
    half = MeasureContext(0.5)
    assert measure_of_interval(half, interval_normalize(0.5, 1)) == pytest.approx(1.125, rel=1e-14)


def test_context_rejects_bad_lambda():
    for lam in (0, -1, np.nan):
        with pytest.raises(InvalidArgumentError):
            MeasureContext(lam)


@given(lam=lams, x=pos, r=pos)
def test_measure_comparable_to_proxy(lam, x, r):
    ctx = MeasureContext(lam)
    iv = interval_normalize(x, r)
    m = measure_of_interval(ctx, interval_normalize(x, r))
    proxy = float(ctx.volume_proxy(iv.center, iv.radius))
    # m(I(x, r)) ~ x^(2 lam) r + r^(2 lam + 1) with constants depending on lam only
    c = 2.0 ** (2 * lam + 2)
    assert proxy / c <= m <= c * proxy


@given(lam=lams, x=pos, r=pos)
def test_doubling(lam, x, r):
    ctx = MeasureContext(lam)
    iv = interval_normalize(x, r)
    m1 = measure_of_interval(ctx, iv)
    m2 = measure_of_interval(ctx, interval_dilate(iv, 2))
    assert m1 <= m2 <= 2.0 ** (2 * lam + 1) * m1 * (1 + 1e-12)


def _linear_function(ctx, lo, hi, n=201):
    grid = build_grid(ctx, GridSpec(lo, hi, n, "linear"))
    return GridFunction(grid, grid.nodes.copy(), (0.0, 0.0))


def test_mean_examples(ctx1):
    grid = build_grid(ctx1, GridSpec(0.5, 4, 50))
    assert mean_on_interval(ctx1, constant_function(grid, 5.0), Interval(2, 1)) == 5.0
    f = _linear_function(ctx1, 0.0, 4.0)
    assert mean_on_interval(ctx1, f, Interval(2, 1)) == pytest.approx(30 / 13, rel=1e-12)


def test_mean_needs_coverage(ctx1):
    grid = build_grid(ctx1, GridSpec(1.5, 4, 20))
    f = GridFunction(grid, np.ones(20), None)
    with pytest.raises(CoverageError) as info:
        mean_on_interval(ctx1, f, Interval(2, 1))
    assert info.value.gap is not None


def test_mean_oscillation_of_linear(ctx1):
    # f = y on (1, 3): avg 30/13, int |y - c| y^2 dy in closed form
    f = _linear_function(ctx1, 0.0, 4.0, 401)
    c = 30 / 13

    def prim(y):
        return y**4 / 4 - c * y**3 / 3

    expect = ((prim(3) - prim(c)) - (prim(c) - prim(1))) / (26 / 3)
    assert mean_oscillation(ctx1, f, Interval(2, 1)) == pytest.approx(expect, rel=1e-12)


def test_build_grid_examples(ctx1):
    g = build_grid(ctx1, GridSpec(1, 100, 3))
    np.testing.assert_allclose(g.nodes, [1, 10, 100], rtol=1e-14)
    g = build_grid(ctx1, GridSpec(0, 2, 3, "linear"))
    assert g.weights.sum() == pytest.approx(8 / 3, rel=1e-14)


def test_build_grid_refinement_halves_spacing(ctx1):
    base = build_grid(ctx1, GridSpec(0, 8, 9, "linear"))
    fine = build_grid(ctx1, GridSpec(0, 8, 9, "linear", [(2, 4)]))
    h = np.diff(fine.nodes)
    inside = (fine.nodes[:-1] >= 2) & (fine.nodes[1:] <= 4)
    np.testing.assert_allclose(h[inside], 0.5)
    assert len(fine) == len(base) + 2


def test_grid_spec_from_dict():
    spec = GridSpec.from_dict({"range": [1, 10], "count": 5})
    assert (spec.lo, spec.hi, spec.count, spec.law) == (1.0, 10.0, 5, "log")
    with pytest.raises(InvalidArgumentError):
        GridSpec.from_dict({"count": 5})


@pytest.mark.parametrize(
    "spec", [GridSpec(2, 1, 5), GridSpec(1, 2, 1), GridSpec(0, 2, 5, "log"), GridSpec(1, 2, 5, "cubic")]
)
def test_build_grid_rejects(ctx1, spec):
    with pytest.raises(InvalidArgumentError):
        build_grid(ctx1, spec)


@given(lam=lams, lo=st.floats(1e-3, 1.0), span=st.floats(1.5, 1e3), n=st.integers(3, 60))
def test_weights_integrate_measure(lam, lo, span, n):
    ctx = MeasureContext(lam)
    g = build_grid(ctx, GridSpec(lo, lo * span, n))
    expect = float(ctx.mass(g.lo, g.hi))
    assert g.weights.sum() == pytest.approx(expect, rel=1e-11)
    assert np.all(g.weights > 0)
