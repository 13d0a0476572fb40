import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from besselvar.errors import CoverageError, InvalidArgumentError, InvalidAtomError, ResolutionError
from besselvar.measure import (
    Grid,
    GridFunction,
    GridSpec,
    Interval,
    MeasureContext,
    build_grid,
    constant_function,
    interval_dilate,
    interval_normalize,
    mean_on_interval,
)
from besselvar.spaces import (
    SHAPES,
    Atom,
    AtomicDecomposition,
    atomic_norm_upper,
    bmo_family,
    bmo_norm,
    cell_l1,
    cz_decompose,
    cz_good_bound,
    lp_norm,
    make_atom,
    random_atom_family,
    validate_atom,
    weak_l1,
)


def _indicator(ctx, a, b, h=1.0, eps=1e-12):
    nodes = np.array([0.5, a - eps, a, b, b + eps, 4.0])
    v = np.array([0, 0, h, h, 0, 0], float)
    return GridFunction(Grid.from_nodes(ctx, nodes), v, (0.0, 0.0))


def test_lp_examples(ctx1):
    f = _indicator(ctx1, 1, 3)
    assert lp_norm(ctx1, f, 1) == pytest.approx(26 / 3, rel=1e-9)
    g = GridFunction(Grid.from_nodes(ctx1, [1.0, 2.0]), [-2.0, 1.0], (0.0, 0.0))
    assert lp_norm(ctx1, g, np.inf) == 2.0
    with pytest.raises(InvalidArgumentError):
        lp_norm(ctx1, g, 0.5)


def test_lp_outside_values(ctx1):
    grid = build_grid(ctx1, GridSpec(1.0, 2.0, 5))
    assert lp_norm(ctx1, GridFunction(grid, np.ones(5), (0.0, 1.0)), 2) == math.inf
    left = GridFunction(grid, np.ones(5), (1.0, 0.0))
    assert lp_norm(ctx1, left, 1) == pytest.approx(8 / 3, rel=1e-12)


@given(c=st.floats(-1e3, 1e3), p=st.sampled_from([1.0, 1.5, 2.0, 4.0, np.inf]))
def test_lp_homogeneous(c, p):
    ctx = MeasureContext(1.0)
    grid = build_grid(ctx, GridSpec(0.1, 10, 40))
    f = GridFunction(grid, np.sin(grid.nodes), (0.0, 0.0))
    assert lp_norm(ctx, f.scaled(c), p) == pytest.approx(abs(c) * lp_norm(ctx, f, p), rel=1e-12, abs=1e-300)


def test_weak_l1_examples(ctx1):
    f = _indicator(ctx1, 1, 3, h=2.5)
    assert weak_l1(ctx1, f) == pytest.approx(2.5 * 26 / 3, rel=1e-9)
    assert weak_l1(ctx1, f.scaled(0.0)) == 0.0


@given(seed=st.integers(0, 2**31))
def test_weak_l1_below_l1(seed):
    ctx = MeasureContext(1.0)
    grid = build_grid(ctx, GridSpec(0.1, 10, 30))
    v = np.random.default_rng(seed).normal(size=30)
    f = GridFunction(grid, v, (0.0, 0.0))
    # node masses are the hat weights, which integrate |f| exactly only on sign-constant cells
    assert weak_l1(ctx, f) <= float(grid.weights @ np.abs(v)) * (1 + 1e-12)


def _piece_values(atom):
    lo, hi = atom.interval.left, atom.interval.right
    mid = 0.5 * (lo + hi)
    f = atom.profile
    return float(f(0.5 * (lo + mid))), float(f(0.5 * (mid + hi)))


def test_haar_ratio_lam1(ctx1):
    a = make_atom(ctx1, Interval(2, 1), "haar")
    left, right = _piece_values(a)
    assert right / left == pytest.approx(-7 / 19, rel=1e-7)
    assert validate_atom(ctx1, a).passed


def test_haar_ratio_lam_half():
    ctx = MeasureContext(0.5)
    a = make_atom(ctx, Interval(1, 1), "haar")
    left, right = _piece_values(a)
    assert right / left == pytest.approx(-1 / 3, rel=1e-7)


def test_atom_mean_zero(ctx1):
    a = make_atom(ctx1, Interval(2, 1), "bump-pair")
    assert abs(mean_on_interval(ctx1, a.profile, a.interval)) < 1e-12


def test_random_atoms_validate():
    rng = np.random.default_rng(7)
    for lam in (0.3, 1.0, 2.5):
        ctx = MeasureContext(lam)
        for _ in range(100):
            r = float(np.exp(rng.uniform(np.log(1e-3), np.log(1e3))))
            x = float(np.exp(rng.uniform(np.log(1e-3), np.log(1e3))))
            shape = SHAPES[rng.integers(3)]
            a = make_atom(ctx, interval_normalize(x, r), shape, rng=rng)
            report = validate_atom(ctx, a)
            assert report.passed, (lam, x, r, shape, report)


def test_shared_grid_atoms_validate(ctx1):
    grid = build_grid(ctx1, GridSpec(1e-3, 1e3, 193))
    atoms = random_atom_family(ctx1, grid, 50, np.random.default_rng(1))
    assert all(validate_atom(ctx1, a).passed for a in atoms)


def test_validate_detects_failures(ctx1):
    a = make_atom(ctx1, Interval(2, 1), "haar")
    big = Atom(a.interval, a.profile.scaled(2.0), a.shape)
    report = validate_atom(ctx1, big)
    assert report.support_ok and report.mean_ok and not report.size_ok
    moved = Atom(Interval(10, 1), a.profile, a.shape)
    assert not validate_atom(ctx1, moved).support_ok


def test_atom_resolution_and_shape(ctx1):
    grid = build_grid(ctx1, GridSpec(1e-3, 1e3, 25))
    with pytest.raises(ResolutionError):
        make_atom(ctx1, Interval(2.0, 0.1), "haar", grid=grid)
    with pytest.raises(InvalidArgumentError):
        make_atom(ctx1, Interval(2, 1), "triangle")


def test_atomic_norm(ctx1):
    a = make_atom(ctx1, Interval(2, 1), "haar")
    b = make_atom(ctx1, Interval(0.3, 0.1), "random", rng=np.random.default_rng(0))
    assert atomic_norm_upper(ctx1, AtomicDecomposition([1.0], [a])) == 1.0
    assert atomic_norm_upper(ctx1, AtomicDecomposition([], [])) == 0.0
    d = AtomicDecomposition([0.5, -1.5], [a, b])
    assert atomic_norm_upper(ctx1, d) == 2.0
    f = d.evaluate(ctx1)
    assert lp_norm(ctx1, f, 1) <= 2.0 * (1 + 1e-9)
    bad = AtomicDecomposition([1.0, 1.0], [a, Atom(a.interval, a.profile.scaled(3.0))])
    with pytest.raises(InvalidAtomError) as info:
        atomic_norm_upper(ctx1, bad)
    assert info.value.index == 1


@pytest.fixture(scope="module")
def log_grid():
    ctx = MeasureContext(1.0)
    grid = build_grid(ctx, GridSpec(1e-3, 1e3, 193))
    f = GridFunction(grid, np.log(grid.nodes), (math.log(1e-3), math.log(1e3)))
    return ctx, grid, f


def test_bmo_constant_is_zero(log_grid):
    ctx, grid, _ = log_grid
    assert bmo_norm(ctx, constant_function(grid, 3.0), bmo_family(grid)) == 0.0


def test_bmo_log_stable_and_monotone(log_grid):
    ctx, grid, f = log_grid
    values = [bmo_norm(ctx, f, bmo_family(grid, level=k)) for k in range(3)]
    assert all(np.isfinite(values))
    assert values[0] <= values[1] <= values[2]
    assert values[2] <= 1.1 * values[1]


def test_bmo_family_nested(log_grid):
    _, grid, _ = log_grid
    small = set(bmo_family(grid, level=0))
    assert small <= set(bmo_family(grid, level=1))


def test_bmo_coverage(log_grid):
    ctx, grid, f = log_grid
    with pytest.raises(CoverageError):
        bmo_norm(ctx, f, [Interval(900.0, 200.0)])
    with pytest.raises(InvalidArgumentError):
        bmo_norm(ctx, f, [])


def test_mean_regularity(log_grid):
    ctx, grid, f = log_grid
    b = bmo_norm(ctx, f, bmo_family(grid, level=1))
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        r = float(np.exp(rng.uniform(np.log(1e-2), np.log(1.0))))
        iv = interval_normalize(float(np.exp(rng.uniform(np.log(1e-2), np.log(5.0)))), r)
        for k in range(1, 7):
            big = interval_dilate(iv, 2.0**k)
            if big.right > grid.hi:
                break
            gap = abs(mean_on_interval(ctx, f, iv) - mean_on_interval(ctx, f, big))
            worst = max(worst, gap / (k * b))
    assert worst < 10.0


def _cz_grid(ctx, n=256, delta=1 / 64):
    return Grid.from_nodes(ctx, delta * np.arange(n))


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.5])
def test_cz_properties(lam):
    ctx = MeasureContext(lam)
    grid = _cz_grid(ctx)
    rng = np.random.default_rng(5)
    for _ in range(30):
        v = np.zeros(len(grid))
        k = rng.integers(1, 6)
        for c in rng.integers(0, 128, size=k):
            w = rng.integers(1, 16)
            v[c : c + w] += rng.normal() * 10.0 ** rng.uniform(-1, 2)
        f = GridFunction(grid, v, (0.0, 0.0))
        l1 = cell_l1(ctx, f)
        mass_total = float(ctx.mass(0, 256 / 64))
        eta = l1 / mass_total * 10.0 ** rng.uniform(0, 2)
        out = cz_decompose(ctx, f, eta)
        c = out.constants
        assert c["reconstruction_error"] <= 4 * np.finfo(float).eps
        assert c["good_sup_over_eta"] <= cz_good_bound(ctx) * (1 + 1e-12)
        assert c["mass_times_eta_over_l1"] <= 1.0 + 1e-12
        assert c["bad_l1_over_l1"] <= 2.0 + 1e-12
        assert c["mean_zero_error"] <= 1e-12
        assert c["overlap"] <= 1 and c["support_ok"]


def test_cz_large_threshold_keeps_f(ctx1):
    grid = _cz_grid(ctx1)
    f = GridFunction(grid, np.sin(grid.nodes), (0.0, 0.0))
    out = cz_decompose(ctx1, f, 10.0)
    assert out.bad_parts == []
    np.testing.assert_array_equal(out.good.values, f.values)


def test_cz_errors(ctx1):
    grid = _cz_grid(ctx1)
    f = GridFunction(grid, np.ones(len(grid)), (0.0, 0.0))
    for eta in (0.0, -1.0, np.nan):
        with pytest.raises(InvalidArgumentError):
            cz_decompose(ctx1, f, eta)
    with pytest.raises(ResolutionError):
        cz_decompose(ctx1, f, 0.5)
    uneven = GridFunction(build_grid(ctx1, GridSpec(1, 2, 8)), np.ones(8), (0.0, 0.0))
    with pytest.raises(InvalidArgumentError):
        cz_decompose(ctx1, uneven, 1.0)
