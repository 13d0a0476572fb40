import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from besselvar.errors import InvalidArgumentError
from besselvar.measure import GridFunction, GridSpec, Interval, build_grid, constant_function
from besselvar.oscvar import (
    TimeGrid,
    mp_defect,
    operator_values,
    oscillation_of_path,
    oscillation_operator,
    rho_variation_bruteforce,
    rho_variation_of_sequence,
    variation_of_paths,
    variation_operator,
)
from besselvar.spaces import make_atom

seqs = st.lists(st.floats(-10, 10, allow_nan=False), min_size=0, max_size=12)
rhos = st.sampled_from([1.5, 2.1, 3.0, 6.0])


def test_variation_example():
    r = rho_variation_of_sequence([0, 1, 0.5], 2)
    assert r.value == pytest.approx(1.118034, abs=1e-6)
    assert list(r.optimal_subsequence) == [0, 1, 2]


def test_monotone_uses_endpoints():
    r = rho_variation_of_sequence(np.linspace(0, 3, 9) ** 2, 2.5)
    assert r.value == pytest.approx(9.0)
    assert list(r.optimal_subsequence) == [0, 8]


def test_constant_and_short():
    assert rho_variation_of_sequence([2.0] * 5, 3).value == 0.0
    r = rho_variation_of_sequence([1.0], 3)
    assert r.value == 0.0 and r.optimal_subsequence.size == 0
    assert rho_variation_of_sequence([], 3).value == 0.0


def test_bruteforce_examples():
    assert rho_variation_bruteforce([0, 1], 3).value == 1.0
    assert rho_variation_bruteforce([1, 0, 1, 0], 2.5).value == pytest.approx(3**0.4, rel=1e-14)
    with pytest.raises(InvalidArgumentError):
        rho_variation_bruteforce(np.zeros(15), 3)


def test_rho_must_exceed_one():
    with pytest.raises(InvalidArgumentError):
        rho_variation_of_sequence([0, 1], 1.0)


@given(values=seqs, rho=rhos)
def test_dp_matches_bruteforce(values, rho):
    fast = rho_variation_of_sequence(values, rho)
    full = rho_variation_of_sequence(values, rho, reduce=False)
    slow = rho_variation_bruteforce(values, rho)
    assert fast.value == pytest.approx(slow.value, rel=1e-12, abs=1e-300)
    assert full.value == pytest.approx(slow.value, rel=1e-12, abs=1e-300)


@given(values=seqs.filter(lambda v: len(v) >= 2), r1=rhos, r2=rhos)
def test_variation_monotone_in_rho(values, r1, r2):
    lo, hi = sorted((r1, r2))
    assert rho_variation_of_sequence(values, hi).value <= rho_variation_of_sequence(values, lo).value * (1 + 1e-12)


@given(values=seqs.filter(lambda v: len(v) >= 2), rho=rhos)
def test_variation_dominates_range(values, rho):
    a = np.asarray(values)
    v = rho_variation_of_sequence(a, rho).value
    assert v >= abs(a[-1] - a[0]) * (1 - 1e-12)
    assert v <= (len(a) - 1) ** (1 / rho) * (a.max() - a.min()) * (1 + 1e-12) + 1e-300


def test_oscillation_single_slot():
    assert oscillation_of_path(np.array([0.3, 0.7, 0.2]), 2) == pytest.approx(0.5)


def test_time_grid_structure():
    g = TimeGrid.dyadic(8.0, slots=5, refine=4)
    t = g.times
    assert t.size == 21 and t[0] == 8.0 and t[-1] == 0.25
    assert np.all(np.diff(t) < 0)
    np.testing.assert_array_equal(t[::4], g.anchors)
    fine = g.refined(2)
    np.testing.assert_allclose(fine.times[fine.coarse_mask(2)], t, rtol=1e-15)
    with pytest.raises(InvalidArgumentError):
        TimeGrid(np.array([1.0, 2.0]))
    with pytest.raises(InvalidArgumentError):
        TimeGrid.dyadic(1.0, refine=1)
    with pytest.raises(InvalidArgumentError):
        g.coarse_mask(3)


@given(seed=st.integers(0, 2**31), m=st.sampled_from([2, 4]))
def test_refinement_monotone_on_paths(seed, m):
    # a path sampled on the refined grid dominates its restriction to the coarse one
    rng = np.random.default_rng(seed)
    path = rng.normal(size=5 * 2 * m + 1)
    coarse = path[:: 2]
    assert oscillation_of_path(path, 2 * m) >= oscillation_of_path(coarse, m) - 1e-15
    assert variation_of_paths(path, 3.0) >= variation_of_paths(coarse, 3.0) * (1 - 1e-12)


@pytest.fixture(scope="module")
def atom_setup():
    from besselvar.measure import MeasureContext

    ctx = MeasureContext(1.0)
    grid = build_grid(ctx, GridSpec(1e-3, 1e2, 161))
    atom = make_atom(ctx, Interval(1.5, 0.5), "haar", grid=grid)
    return ctx, grid, atom.profile, TimeGrid.dyadic(20.0, 24, 8)


def test_constant_gives_zero(atom_setup):
    ctx, grid, _, tg = atom_setup
    one = constant_function(grid, 1.0)
    assert variation_operator(ctx, "poisson", one, 1.0, tg) == 0.0
    assert oscillation_operator(ctx, "heat", one, 1.0, tg) == 0.0
    d = mp_defect(ctx, one, [0.5, 2.0], grid=tg)
    np.testing.assert_array_equal(d.defect, 0.0)


def test_variation_operator_needs_rho_above_two(atom_setup):
    ctx, _, f, tg = atom_setup
    with pytest.raises(InvalidArgumentError):
        variation_operator(ctx, "poisson", f, 1.0, tg, rho=2.0)


def test_operators_homogeneous_and_subadditive(atom_setup):
    ctx, grid, f, tg = atom_setup
    g = GridFunction(grid, np.exp(-((grid.nodes - 3) ** 2)), (0.0, 0.0))
    xs = np.array([0.5, 1.2, 4.0])
    ops = operator_values(ctx, "poisson", [f, g, f.scaled(-4.0), f.with_values(f.values + g.values)], xs, tg)
    np.testing.assert_array_equal(ops.oscillation[2], 4.0 * ops.oscillation[0])
    np.testing.assert_allclose(ops.variation[2], 4.0 * ops.variation[0], rtol=1e-12)
    for q in (ops.oscillation, ops.variation):
        assert np.all(q[3] <= (q[0] + q[1]) * (1 + 1e-12))
    assert np.all(ops.oscillation_gap >= -1e-15)


def test_mp_defect_scales(atom_setup):
    ctx, _, f, tg = atom_setup
    xs = np.linspace(0.6, 2.4, 7)
    d1 = mp_defect(ctx, f, xs, grid=tg)
    d2 = mp_defect(ctx, f.scaled(2.0), xs, grid=tg)
    np.testing.assert_allclose(d2.defect, 2 * d1.defect, rtol=1e-12, atol=1e-15)
    assert np.all(d1.defect - d1.slack <= 1e-8)
