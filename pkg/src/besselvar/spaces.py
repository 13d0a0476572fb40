"""Norms in dm, H^1 atoms, BMO and the Calderon-Zygmund decomposition."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import CoverageError, InvalidArgumentError, InvalidAtomError, ResolutionError
from .measure import (
    Grid,
    GridFunction,
    Interval,
    MeasureContext,
    integrate_grid_function,
    interval_normalize,
    mean_oscillation,
    measure_of_interval,
)

ATOM_TOL = 1e-10


def lp_norm(ctx: MeasureContext, f: GridFunction, p: float) -> float:
    """(sum w |v|^p)^(1/p) with the grid weights; p = inf gives max |v|.

    A nonzero constant left of the grid adds m((0, lo)) |c|^p; a nonzero
    constant right of the grid makes every finite-p norm infinite.
    """
    p = float(p)
    if not p >= 1:
        raise InvalidArgumentError(f"p must be >= 1, got {p}")
    out = f.outside or (0.0, 0.0)
    if np.isinf(p):
        extra = [abs(out[0])] if f.grid.lo > 0 else []
        return float(max([np.max(np.abs(f.values))] + extra + [abs(out[1])]))
    if out[1] != 0.0:
        return math.inf
    # factor out the sup so |v|^p neither underflows nor overflows
    top = max(float(np.max(np.abs(f.values))), abs(out[0]))
    if top == 0.0:
        return 0.0
    total = float(np.sum(f.grid.weights * (np.abs(f.values) / top) ** p))
    if out[0] != 0.0:
        total += float(ctx.mass(0.0, f.grid.lo)) * (abs(out[0]) / top) ** p
    return top * total ** (1.0 / p)


def weak_l1(ctx: MeasureContext, f: GridFunction) -> float:
    """sup over levels eta of eta * m({|f| > eta}), with node masses from the weights."""
    v = np.abs(f.values)
    w = f.grid.weights
    out = f.outside or (0.0, 0.0)
    if out[1] != 0.0:
        return math.inf
    if out[0] != 0.0:
        v = np.append(v, abs(out[0]))
        w = np.append(w, float(ctx.mass(0.0, f.grid.lo)))
    if not np.any(v > 0):
        return 0.0
    order = np.argsort(-v, kind="stable")
    vs, ws = v[order], w[order]
    # level sets {|f| >= v_k} are prefixes of the sorted order; ties share a level
    mass = np.cumsum(ws)
    last = np.r_[vs[1:] != vs[:-1], True]
    return float(np.max(vs[last] * mass[last]))


# --------------------------------------------------------------------- atoms


@dataclass(frozen=True)
class Atom:
    interval: Interval
    profile: GridFunction
    shape: str = ""


@dataclass(frozen=True)
class AtomReport:
    support_ok: bool
    size_ok: bool
    mean_ok: bool
    support_slack: float  # largest |value| outside the interval
    size_slack: float  # sup |a| * m(I) - 1
    mean_slack: float  # |int a dm| / (m(I) sup |a|)

    @property
    def passed(self) -> bool:
        return self.support_ok and self.size_ok and self.mean_ok


SHAPES = ("haar", "bump-pair", "random")


def _local_nodes(interval: Interval, shape: str, eps: float, per_piece: int):
    lo, hi = interval.left, interval.right
    mid = 0.5 * (lo + hi)
    if shape == "haar":
        return np.array([lo, lo + eps, mid - eps, mid, mid + eps, hi - eps, hi])
    left = np.linspace(lo, mid, per_piece + 1)
    right = np.linspace(mid, hi, per_piece + 1)
    return np.unique(np.concatenate((left, right)))


def make_atom(
    ctx: MeasureContext,
    interval: Interval,
    shape: str = "haar",
    rng: Optional[np.random.Generator] = None,
    grid: Optional[Grid] = None,
    per_piece: int = 16,
) -> Atom:
    """An H^1 atom supported in ``interval``.

    The profile is piecewise linear.  On its own grid (``grid`` None) the
    haar shape has ramps of width 1e-9 |I| at the ends and the split; with
    a shared ``grid`` the nodes inside the interval carry the profile and
    the ramps are one cell wide.  A positive and a negative piece are
    balanced with the exact dm-integrals of the hat functions, then the
    profile is scaled so that sup |a| = 1/m(I).
    """
    if shape not in SHAPES:
        raise InvalidArgumentError(f"unknown atom shape {shape!r}; valid: {', '.join(SHAPES)}")
    lo, hi = interval.left, interval.right
    if not hi - lo > 1e-12 * hi:
        raise ResolutionError(f"interval ({lo:g}, {hi:g}) too short to resolve")
    if grid is None:
        nodes = _local_nodes(interval, shape, 1e-9 * (hi - lo), per_piece)
        grid = Grid.from_nodes(ctx, nodes)
    nodes = grid.nodes
    inside = np.flatnonzero((nodes > lo) & (nodes < hi))
    if inside.size < 4:
        raise ResolutionError(
            f"grid has {inside.size} nodes inside ({lo:g}, {hi:g}); at least 4 are needed"
        )
    mid = 0.5 * (lo + hi)
    split = inside[np.argmin(np.abs(nodes[inside] - mid))]
    left_idx = inside[inside < split]
    right_idx = inside[inside > split]
    if left_idx.size == 0 or right_idx.size == 0:
        raise ResolutionError("interval too coarse to split")
    pos = np.zeros(nodes.size)
    neg = np.zeros(nodes.size)
    if shape == "haar":
        pos[left_idx] = 1.0
        neg[right_idx] = 1.0
    elif shape == "bump-pair":
        a, b = nodes[left_idx[0] - 1], nodes[split]
        pos[left_idx] = np.sin(np.pi * (nodes[left_idx] - a) / (b - a)) ** 2
        a, b = nodes[split], nodes[right_idx[-1] + 1]
        neg[right_idx] = np.sin(np.pi * (nodes[right_idx] - a) / (b - a)) ** 2
    else:
        rng = rng or np.random.default_rng()
        pos[inside] = rng.uniform(-1.0, 1.0, inside.size)
        neg[inside] = 1.0
    w = grid.weights
    wp, wn = float(w @ pos), float(w @ neg)
    if wn <= 0:
        raise ResolutionError("degenerate balancing piece")
    values = pos - (wp / wn) * neg
    values /= np.max(np.abs(values))
    values /= measure_of_interval(ctx, interval)
    return Atom(interval, GridFunction(grid, values, (0.0, 0.0), f"atom:{shape}"), shape)


def validate_atom(ctx: MeasureContext, atom: Atom, tol: float = ATOM_TOL) -> AtomReport:
    f = atom.profile
    interval = atom.interval
    m = measure_of_interval(ctx, interval)
    nodes = f.grid.nodes
    outside_nodes = (nodes < interval.left) | (nodes > interval.right)
    # an endpoint node with a nonzero value makes the interpolant leak out
    edge = (nodes == interval.left) | (nodes == interval.right)
    leak = np.abs(f.values[outside_nodes | edge])
    out = f.outside or (math.nan, math.nan)
    support_slack = float(max(np.max(leak, initial=0.0), abs(out[0]), abs(out[1])))
    sup = float(np.max(np.abs(f.values)))
    size_slack = sup * m - 1.0
    integral = integrate_grid_function(ctx, f, max(f.grid.lo, 0.0), f.grid.hi)
    mean_slack = abs(integral) / (m * sup) if sup > 0 else 0.0
    return AtomReport(
        support_ok=bool(support_slack == 0.0),
        size_ok=bool(size_slack <= tol),
        mean_ok=bool(mean_slack <= tol),
        support_slack=support_slack,
        size_slack=float(size_slack),
        mean_slack=float(mean_slack),
    )


@dataclass(frozen=True)
class AtomicDecomposition:
    coefficients: np.ndarray
    atoms: Sequence[Atom]

    def __post_init__(self):
        c = np.asarray(self.coefficients, float)
        if c.size != len(self.atoms):
            raise InvalidArgumentError(f"{c.size} coefficients for {len(self.atoms)} atoms")
        object.__setattr__(self, "coefficients", c)

    def evaluate(self, ctx: MeasureContext, grid: Optional[Grid] = None) -> GridFunction:
        """The sum of alpha_j a_j on ``grid`` (default: union of atom grids)."""
        if grid is None:
            if not self.atoms:
                raise InvalidArgumentError("an empty decomposition needs an explicit grid")
            nodes = np.unique(np.concatenate([a.profile.grid.nodes for a in self.atoms]))
            grid = Grid.from_nodes(ctx, nodes)
        total = np.zeros(grid.nodes.size)
        for c, a in zip(self.coefficients, self.atoms):
            if a.profile.grid is grid or np.array_equal(a.profile.grid.nodes, grid.nodes):
                total += c * a.profile.values
            else:
                total += c * a.profile(grid.nodes)
        return GridFunction(grid, total, (0.0, 0.0), "atom-sum")


def atomic_norm_upper(ctx: MeasureContext, d: AtomicDecomposition, tol: float = ATOM_TOL) -> float:
    """sum |alpha_j|, an upper bound for the H^1 norm of the sum."""
    for i, a in enumerate(d.atoms):
        report = validate_atom(ctx, a, tol)
        if not report.passed:
            raise InvalidAtomError(f"atom {i} fails validation: {report}", index=i)
    return float(np.sum(np.abs(d.coefficients)))


def random_atom_family(
    ctx: MeasureContext,
    grid: Grid,
    n: int,
    rng: np.random.Generator,
    radius_range=(1e-2, 1e2),
    offset_range=(1.0, 4.0),
    shapes=SHAPES,
) -> List[Atom]:
    """Atoms on a shared grid with log-uniform radius and center/radius ratio."""
    atoms = []
    lr = np.log(radius_range)
    lo_off = np.log(offset_range)
    while len(atoms) < n:
        r = float(np.exp(rng.uniform(*lr)))
        x0 = r * float(np.exp(rng.uniform(*lo_off)))
        shape = shapes[int(rng.integers(len(shapes)))]
        atoms.append(make_atom(ctx, interval_normalize(x0, r), shape, rng=rng, grid=grid))
    return atoms


# ----------------------------------------------------------------------- BMO


def bmo_family(grid: Grid, r_range=None, level: int = 0, max_level: int = 2) -> List[Interval]:
    """Intervals I(x, r) with dyadic radii and grid-node centers.

    Radii step by 2^(1/2^level) over ``r_range`` (default three decades
    from ten times the first positive node); centers are every
    2^(max_level - level)-th grid node with the interval inside the grid.
    Families are nested: level k is contained in level k + 1.
    """
    if not 0 <= level <= max_level:
        raise InvalidArgumentError(f"level must be in [0, {max_level}]")
    nodes = grid.nodes[grid.nodes > 0]
    if r_range is None:
        r0 = 10.0 * nodes[0]
        r_range = (r0, min(1e3 * r0, 0.25 * grid.hi))
    r0, r1 = map(float, r_range)
    k = np.arange(0, int(math.floor(math.log2(r1 / r0) * 2**level + 1e-9)) + 1)
    radii = r0 * 2.0 ** (k / 2**level)
    centers = nodes[:: 2 ** (max_level - level)]
    family = []
    for r in radii:
        for x in centers:
            iv = interval_normalize(x, r)
            if iv.right <= grid.hi:
                family.append(iv)
    if not family:
        raise InvalidArgumentError("empty BMO family: radii do not fit inside the grid")
    return family


def bmo_norm(ctx: MeasureContext, f: GridFunction, family: Sequence[Interval]) -> float:
    """Largest mean oscillation over the family, a lower bound for the BMO norm.

    Intervals must end inside the grid; on (0, first node) f takes its
    left outside value.
    """
    if not family:
        raise InvalidArgumentError("BMO family must be nonempty")
    right = max(iv.right for iv in family)
    if right > f.grid.hi * (1 + 1e-12):
        raise CoverageError(
            f"family reaches {right:g}, beyond the grid end {f.grid.hi:g}", gap=(f.grid.hi, right)
        )
    if f.is_constant():
        return 0.0
    return float(max(mean_oscillation(ctx, f, iv) for iv in family))


# ------------------------------------------------------------------------ CZ


@dataclass
class CZOutput:
    """f = good + sum of bad parts on the grid cells.

    The grid is read as cells [y_i, y_i + delta) carrying the node values;
    intervals are dyadic unions of cells.
    """

    good: GridFunction
    bad_parts: List[tuple]  # (GridFunction b_j, Interval I_j)
    threshold: float
    cells: List[tuple] = field(default_factory=list)  # (first, last) cell index per part
    constants: dict = field(default_factory=dict)


def _uniform_step(grid: Grid) -> float:
    nodes = grid.nodes
    delta = nodes[1] - nodes[0]
    k = nodes / delta
    if nodes[0] != 0.0 or np.max(np.abs(k - np.round(k))) > 1e-9:
        raise InvalidArgumentError("CZ decomposition needs a uniform grid of nodes k*delta from 0")
    n = nodes.size
    if n & (n - 1):
        raise InvalidArgumentError(f"CZ decomposition needs a power-of-two number of cells, got {n}")
    return float(delta)


def cell_masses(ctx: MeasureContext, grid: Grid) -> np.ndarray:
    delta = _uniform_step(grid)
    return ctx.mass(grid.nodes, grid.nodes + delta)


def cell_l1(ctx: MeasureContext, f: GridFunction) -> float:
    return float(cell_masses(ctx, f.grid) @ np.abs(f.values))


def cz_decompose(ctx: MeasureContext, f: GridFunction, eta: float) -> CZOutput:
    """Stopping-time Calderon-Zygmund decomposition at height eta.

    Selects the maximal dyadic intervals [k 2^j delta, (k+1) 2^j delta)
    whose dm-average of |f| exceeds eta.  Selected intervals are
    disjoint, b_j = (f - f_I) on I_j and g = f - sum b_j.  The root
    interval (the whole grid) must have average at most eta.
    """
    if not (np.isfinite(eta) and eta > 0):
        raise InvalidArgumentError(f"eta must be positive, got {eta}")
    grid = f.grid
    delta = _uniform_step(grid)
    mass = cell_masses(ctx, grid)
    v = f.values
    absf = np.abs(v)
    n = v.size
    if float(mass @ absf) > eta * float(np.sum(mass)):
        raise ResolutionError("average of |f| over the whole grid exceeds eta; extend the grid")
    # sums over dyadic blocks, level 0 = cells
    levels = [(absf * mass, mass)]
    while levels[-1][0].size > 1:
        a, m = levels[-1]
        levels.append((a[0::2] + a[1::2], m[0::2] + m[1::2]))
    selected = []
    covered = np.zeros(n, dtype=bool)
    for j in range(len(levels) - 1, -1, -1):
        a, m = levels[j]
        big = np.flatnonzero(a > eta * m)
        width = 1 << j
        for k in big:
            lo = k * width
            if covered[lo]:
                continue
            selected.append((lo, lo + width - 1))
            covered[lo : lo + width] = True
    selected.sort()
    good = v.copy()
    parts = []
    for lo, hi in selected:
        sl = slice(lo, hi + 1)
        avg = float(mass[sl] @ v[sl]) / float(np.sum(mass[sl]))
        b = np.zeros(n)
        b[sl] = v[sl] - avg
        good[sl] = v[sl] - b[sl]
        left, right = lo * delta, (hi + 1) * delta
        iv = interval_normalize(0.5 * (left + right), 0.5 * (right - left))
        parts.append((GridFunction(grid, b, (0.0, 0.0), f"b[{lo}:{hi + 1}]"), iv))
    out = CZOutput(GridFunction(grid, good, (0.0, 0.0), "good"), parts, float(eta), selected)
    out.constants = cz_constants(ctx, f, out)
    return out


def cz_constants(ctx: MeasureContext, f: GridFunction, cz: CZOutput) -> dict:
    """Measured constants of the decomposition properties."""
    mass = cell_masses(ctx, f.grid)
    l1 = float(mass @ np.abs(f.values))
    eta = cz.threshold
    overlap = np.zeros(f.values.size, dtype=int)
    recon = cz.good.values.copy()
    mean_err = 0.0
    bad_l1 = 0.0
    support_ok = True
    total_mass = 0.0
    for (b, iv), (lo, hi) in zip(cz.bad_parts, cz.cells):
        overlap[lo : hi + 1] += 1
        recon = recon + b.values
        m_i = float(np.sum(mass[lo : hi + 1]))
        total_mass += m_i
        # relative to the local L1 mass of f: b can be pure roundoff when f is flat on I_j
        scale = float(mass[lo : hi + 1] @ np.abs(f.values[lo : hi + 1])) or 1.0
        mean_err = max(mean_err, abs(float(mass @ b.values)) / scale)
        bad_l1 += float(mass @ np.abs(b.values))
        outside = np.ones(b.values.size, dtype=bool)
        outside[lo : hi + 1] = False
        support_ok &= bool(np.all(b.values[outside] == 0.0))
    scale = max(float(np.max(np.abs(f.values))), 1e-300)
    return {
        "reconstruction_error": float(np.max(np.abs(recon - f.values))) / scale,
        "good_sup_over_eta": float(np.max(np.abs(cz.good.values))) / eta,
        "mass_times_eta_over_l1": total_mass * eta / l1 if l1 > 0 else 0.0,
        "bad_l1_over_l1": bad_l1 / l1 if l1 > 0 else 0.0,
        "mean_zero_error": mean_err,
        "overlap": int(np.max(overlap, initial=0)),
        "support_ok": support_ok,
        "parts": len(cz.bad_parts),
    }


def cz_good_bound(ctx: MeasureContext) -> float:
    """sup |g| <= 2^(2 lam + 1) eta: a child holds at least 2^-(2 lam + 1) of its parent's mass."""
    return 2.0 ** (2.0 * ctx.lam + 1.0)
