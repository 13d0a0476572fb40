"""Oscillation and rho-variation operators of a semigroup, sampled on a
discrete time grid.

Both operators are computed from the values t -> T_t f(x) on a refined
time grid: the oscillation sums squared ranges over the slots between
consecutive anchors, the variation maximizes over all subsequences of
the refined times.  Values on a finite grid are lower bounds for the
continuum quantities; the difference against the grid with half the
refinement is reported as a stability gap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _engine
from .errors import InvalidArgumentError
from .measure import GridFunction, MeasureContext
from .semigroup import SemigroupKind, semigroup_values

DEFAULT_RHO = 3.0
DEFAULT_SLOTS = 40
DEFAULT_REFINE = 8
BRUTEFORCE_MAX = 14


@dataclass(frozen=True)
class TimeGrid:
    """Decreasing anchors t_0 > t_1 > ... with ``refine`` sub-steps per slot.

    Sub-steps are geometric inside each slot, so the grid with refinement
    2m contains the grid with refinement m exactly.
    """

    anchors: np.ndarray
    refine: int = DEFAULT_REFINE

    def __post_init__(self):
        a = np.asarray(self.anchors, float)
        if a.ndim != 1 or a.size < 2:
            raise InvalidArgumentError("a time grid needs at least two anchors")
        if not np.all(np.diff(a) < 0) or a[-1] <= 0:
            raise InvalidArgumentError("anchors must be positive and strictly decreasing")
        if int(self.refine) < 2:
            raise InvalidArgumentError(f"refinement must be >= 2, got {self.refine}")
        object.__setattr__(self, "anchors", a)
        object.__setattr__(self, "refine", int(self.refine))

    @classmethod
    def dyadic(cls, t_max: float, slots: int = DEFAULT_SLOTS, refine: int = DEFAULT_REFINE) -> "TimeGrid":
        if not t_max > 0:
            raise InvalidArgumentError(f"t_max must be positive, got {t_max}")
        return cls(t_max * 2.0 ** -np.arange(slots + 1, dtype=float), refine)

    @property
    def slots(self) -> int:
        return self.anchors.size - 1

    @property
    def times(self) -> np.ndarray:
        """All sample times, decreasing; slot j is times[j*m : (j+1)*m + 1]."""
        m = self.refine
        a = self.anchors
        frac = np.arange(1, m) / m
        inner = a[:-1, None] * (a[1:, None] / a[:-1, None]) ** frac[None, :]
        out = np.empty(self.slots * m + 1)
        out[::m] = a
        for k in range(1, m):
            out[k::m][: self.slots] = inner[:, k - 1]
        return out

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.anchors, self.refine * factor)

    def coarse_mask(self, factor: int = 2) -> np.ndarray:
        """Positions in ``times`` that belong to the grid refined m/factor times."""
        if self.refine % factor:
            raise InvalidArgumentError("refinement not divisible by factor")
        mask = np.zeros(self.slots * self.refine + 1, dtype=bool)
        mask[::factor] = True
        return mask

    def describe(self) -> str:
        return f"anchors {self.anchors[0]:.6g}..{self.anchors[-1]:.6g} ({self.slots} slots), refine {self.refine}"


def default_time_grid(f: GridFunction, kind=SemigroupKind.POISSON, slots=DEFAULT_SLOTS, refine=DEFAULT_REFINE):
    """Dyadic anchors from 10 diam(supp f) (squared for the heat semigroup)."""
    lo, hi = f.support()
    diam = hi - lo if np.isfinite(hi) and hi > lo else f.grid.hi - f.grid.lo
    t_max = 10.0 * diam
    if SemigroupKind.parse(kind) is SemigroupKind.HEAT:
        t_max = t_max**2
    return TimeGrid.dyadic(t_max, slots, refine)


@dataclass(frozen=True)
class VariationResult:
    value: float
    optimal_subsequence: np.ndarray
    rho: float


def _check_rho(rho):
    if not (np.isfinite(rho) and rho > 1):
        raise InvalidArgumentError(f"rho must exceed 1, got {rho}")


def rho_variation_of_sequence(values, rho: float = DEFAULT_RHO, reduce: bool = True) -> VariationResult:
    """Exact maximum over subsequences of (sum |a_{i_{k+1}} - a_{i_k}|^rho)^(1/rho).

    The dynamic program runs over the endpoints and weak local extrema
    when ``reduce`` is set (an optimal subsequence exists among them for
    rho >= 1), otherwise over all indices.  Sequences shorter than two
    give 0 with an empty subsequence.
    """
    _check_rho(rho)
    a = np.ascontiguousarray(values, dtype=float)
    if a.ndim != 1 or not np.all(np.isfinite(a)):
        raise InvalidArgumentError("values must be a finite one-dimensional sequence")
    if a.size < 2:
        return VariationResult(0.0, np.zeros(0, dtype=np.int64), float(rho))
    a, scale = _rescaled(a)
    idx = _engine.extrema_indices(a) if reduce else np.arange(a.size)
    path = idx[_engine.variation_dp(a[idx], float(rho))]
    if path.size < 2:
        path = np.array([0, a.size - 1], dtype=np.int64)
    value = scale * _engine.subsequence_sum(a, path, float(rho)) ** (1.0 / rho)
    return VariationResult(float(value), path, float(rho))


def _rescaled(a):
    """Divide by the range when |d|^rho could under- or overflow."""
    span = float(np.max(a) - np.min(a))
    if span == 0 or 1e-100 <= span <= 1e100:
        return a, 1.0
    return np.ascontiguousarray(a / span), span


_MASK_CACHE: dict = {}


def _consecutive_pairs(n):
    """Incidence of consecutive index pairs (i, j) in every subset of range(n)."""
    if n not in _MASK_CACHE:
        masks = np.arange(1 << n)
        bits = ((masks[:, None] >> np.arange(n)[None, :]) & 1).astype(bool)
        inc = np.zeros((masks.size, n * n))
        for m in range(masks.size):
            sel = np.flatnonzero(bits[m])
            if sel.size >= 2:
                inc[m, sel[:-1] * n + sel[1:]] = 1.0
        _MASK_CACHE[n] = (bits, inc)
    return _MASK_CACHE[n]


def rho_variation_bruteforce(values, rho: float = DEFAULT_RHO) -> VariationResult:
    """Exhaustive search over all 2^n subsets; refuses n > 14."""
    return rho_variation_bruteforce_many(np.atleast_2d(np.asarray(values, float)), rho)[0]


def rho_variation_bruteforce_many(seqs, rho: float = DEFAULT_RHO):
    """Brute force for a batch of equal-length sequences (rows)."""
    _check_rho(rho)
    seqs = np.asarray(seqs, float)
    n = seqs.shape[1]
    if n > BRUTEFORCE_MAX:
        raise InvalidArgumentError(f"brute force refuses sequences longer than {BRUTEFORCE_MAX} (got {n})")
    if n < 2:
        return [VariationResult(0.0, np.zeros(0, dtype=np.int64), float(rho)) for _ in seqs]
    rows = [_rescaled(np.ascontiguousarray(row)) for row in seqs]
    seqs = np.array([row for row, _ in rows])
    scales = [scale for _, scale in rows]
    bits, inc = _consecutive_pairs(n)
    d = np.abs(seqs[:, None, :] - seqs[:, :, None]) ** rho  # d[r, i, j] = |a_j - a_i|^rho
    sums = d.reshape(seqs.shape[0], -1) @ inc.T
    best = np.argmax(sums, axis=1)
    out = []
    for r, m in enumerate(best):
        path = np.flatnonzero(bits[m]).astype(np.int64)
        if path.size < 2:
            path = np.array([0, n - 1], dtype=np.int64)
        value = scales[r] * _engine.subsequence_sum(seqs[r], path, float(rho)) ** (1.0 / rho)
        out.append(VariationResult(float(value), path, float(rho)))
    return out


# ----------------------------------------------------------- path operators


def oscillation_of_path(path: np.ndarray, refine: int) -> np.ndarray:
    """Oscillation from sampled paths (last axis = refined times)."""
    path = np.asarray(path, float)
    slots = (path.shape[-1] - 1) // refine
    total = np.zeros(path.shape[:-1])
    for j in range(slots):
        seg = path[..., j * refine : (j + 1) * refine + 1]
        total += (seg.max(axis=-1) - seg.min(axis=-1)) ** 2
    return np.sqrt(total)


def variation_of_paths(path: np.ndarray, rho: float) -> np.ndarray:
    _check_rho(rho)
    path = np.asarray(path, float)
    flat = np.ascontiguousarray(path.reshape(-1, path.shape[-1]))
    return _engine.variation_many(flat, float(rho)).reshape(path.shape[:-1])


@dataclass
class OperatorValues:
    """Operator values at sample points with refinement-stability gaps."""

    xs: np.ndarray
    oscillation: np.ndarray
    oscillation_gap: np.ndarray
    variation: np.ndarray
    variation_gap: np.ndarray
    maximal: np.ndarray
    rho: float
    grid: TimeGrid
    paths: np.ndarray = field(repr=False, default=None)


def sample_paths(ctx: MeasureContext, kind, fs: Sequence[GridFunction], xs, grid: TimeGrid) -> np.ndarray:
    """T_t f(x) on the refined times; shape (len(fs), len(xs), len(times))."""
    vals = semigroup_values(ctx, kind, fs, grid.times, xs)
    return np.ascontiguousarray(np.transpose(vals, (1, 2, 0)))


def operators_from_paths(paths, grid: TimeGrid, rho: float = DEFAULT_RHO, xs=None) -> OperatorValues:
    paths = np.asarray(paths, float)
    osc = oscillation_of_path(paths, grid.refine)
    var = variation_of_paths(paths, rho)
    if grid.refine % 2 == 0:
        coarse = paths[..., grid.coarse_mask(2)]
        osc_gap = osc - oscillation_of_path(coarse, grid.refine // 2)
        var_gap = var - variation_of_paths(coarse, rho)
    else:
        osc_gap = np.full_like(osc, np.nan)
        var_gap = np.full_like(var, np.nan)
    mx = np.max(np.abs(paths), axis=-1)
    return OperatorValues(
        np.asarray(xs, float) if xs is not None else None, osc, osc_gap, var, var_gap, mx, float(rho), grid, paths
    )


def operator_values(ctx: MeasureContext, kind, fs, xs, grid: TimeGrid, rho: float = DEFAULT_RHO) -> OperatorValues:
    """Oscillation, variation and maximal function for several functions at once."""
    _check_rho(rho)
    fs = [fs] if isinstance(fs, GridFunction) else list(fs)
    xs = np.atleast_1d(np.asarray(xs, float))
    return operators_from_paths(sample_paths(ctx, kind, fs, xs, grid), grid, rho, xs)


def variation_operator(ctx: MeasureContext, kind, f: GridFunction, x: float, grid: TimeGrid = None, rho: float = DEFAULT_RHO) -> float:
    if not rho > 2:
        raise InvalidArgumentError(f"the variation operator needs rho > 2, got {rho}")
    grid = grid or default_time_grid(f, kind)
    return float(operator_values(ctx, kind, [f], [x], grid, rho).variation[0, 0])


def oscillation_operator(ctx: MeasureContext, kind, f: GridFunction, x: float, grid: TimeGrid = None) -> float:
    grid = grid or default_time_grid(f, kind)
    path = sample_paths(ctx, kind, [f], [x], grid)
    return float(oscillation_of_path(path, grid.refine)[0, 0])


@dataclass(frozen=True)
class MPDefect:
    """maximal - variation - |f(x)| together with the small-time slack."""

    defect: np.ndarray
    slack: np.ndarray
    maximal: np.ndarray
    variation: np.ndarray
    fx: np.ndarray


def mp_defect(ctx: MeasureContext, f: GridFunction, x, rho: float = DEFAULT_RHO, grid: TimeGrid = None, kind=SemigroupKind.POISSON) -> MPDefect:
    """Pointwise comparison of the maximal function with variation plus |f|.

    On a common time grid, |T_t f(x)| <= |T_t f - T_tmin f| + |T_tmin f(x) - f(x)| + |f(x)|,
    so the defect is at most the slack |T_tmin f(x) - f(x)|.
    """
    grid = grid or default_time_grid(f, kind)
    xs = np.atleast_1d(np.asarray(x, float))
    path = sample_paths(ctx, kind, [f], xs, grid)[0]
    return mp_defect_from_path(path, f(xs), rho)


def mp_defect_from_path(path, fx, rho: float = DEFAULT_RHO) -> MPDefect:
    """The defect for precomputed paths (rows: points, columns: decreasing times)."""
    path = np.atleast_2d(np.asarray(path, float))
    fx = np.asarray(fx, float)
    mx = np.max(np.abs(path), axis=-1)
    var = variation_of_paths(path, rho)
    slack = np.abs(path[:, -1] - fx)
    return MPDefect(mx - var - np.abs(fx), slack, mx, var, np.abs(fx))
