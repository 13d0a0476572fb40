"""Geometry of the weighted half-line (0, inf) with dm(y) = y**(2*lam) dy.

Functions sampled on a grid are read as their piecewise-linear
interpolant between nodes, extended by constants (``outside``) to the
left of the first node and to the right of the last one.  All integrals
of such functions against dm are computed in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import CoverageError, InvalidArgumentError

# Gauss-Legendre rule on [0, 1] for short cells where closed forms cancel.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


@dataclass(frozen=True)
class MeasureContext:
    lam: float

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam <= 0:
            raise InvalidArgumentError(f"lambda must be positive, got {self.lam!r}")

    @property
    def power(self) -> float:
        """Exponent of the density, 2*lam."""
        return 2.0 * self.lam

    def density(self, y):
        return np.asarray(y, dtype=float) ** self.power

    def mass(self, a, b):
        """m((a, b)) for arrays of endpoints 0 <= a <= b."""
        return _power_diff(np.asarray(a, float), np.asarray(b, float), self.power + 1.0) / (
            self.power + 1.0
        )

    def volume_proxy(self, x, r):
        """x^(2 lam) r + r^(2 lam + 1), comparable to m(I(x, r))."""
        x = np.asarray(x, float)
        r = np.asarray(r, float)
        return x**self.power * r + r ** (self.power + 1.0)


def _power_diff(a, b, q):
    """b**q - a**q without cancellation when b is close to a."""
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    out = b**q - a**q
    close = (a > 0) & ((b - a) < 0.5 * a)
    if np.any(close):
        ac, bc = a[close], b[close]
        out = np.array(out, dtype=float)
        out[close] = ac**q * np.expm1(q * np.log1p((bc - ac) / ac))
    return out


def _moments(p, u, v):
    """Return (M0, K) with M0 = int_u^v y^p dy and K = int_u^v (y-u) y^p dy."""
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    h = v - u
    m0 = _power_diff(u, v, p + 1.0) / (p + 1.0)
    k = _power_diff(u, v, p + 2.0) / (p + 2.0) - u * m0
    short = (h < 1e-2 * v) & (h > 0)
    if np.any(short):
        us, hs = u[short], h[short]
        y = us[:, None] + hs[:, None] * _GL_X[None, :]
        yp = y**p
        m0 = np.array(m0, dtype=float)
        k = np.array(k, dtype=float)
        m0[short] = hs * (yp @ _GL_W)
        k[short] = hs * ((yp * (y - us[:, None])) @ _GL_W)
    return m0, k


@dataclass(frozen=True)
class Interval:
    """The set (center - radius, center + radius) intersected with (0, inf)."""

    center: float
    radius: float

    @property
    def left(self) -> float:
        return max(self.center - self.radius, 0.0)

    @property
    def right(self) -> float:
        return self.center + self.radius

    @property
    def length(self) -> float:
        return self.right - self.left

    def contains(self, y):
        y = np.asarray(y, float)
        return (y > self.left) & (y < self.right)


def interval_normalize(x: float, r: float) -> Interval:
    """Canonical form of I(x, r) with center >= radius.

    When x < r the set is (0, x + r), which is rewritten as
    I((x + r)/2, (x + r)/2).
    """
    x = float(x)
    r = float(r)
    if not (x > 0 and r > 0) or not (np.isfinite(x) and np.isfinite(r)):
        raise InvalidArgumentError(f"interval needs x > 0 and r > 0, got x={x}, r={r}")
    if x < r:
        half = 0.5 * (x + r)
        return Interval(half, half)
    return Interval(x, r)


def interval_dilate(interval: Interval, k: float) -> Interval:
    if not k > 0:
        raise InvalidArgumentError(f"dilation factor must be positive, got {k}")
    return interval_normalize(interval.center, k * interval.radius)


def measure_of_interval(ctx: MeasureContext, interval: Interval) -> float:
    return float(ctx.mass(interval.left, interval.right))


@dataclass(frozen=True)
class Grid:
    """Strictly increasing nodes with hat-function weights for dm."""

    nodes: np.ndarray
    weights: np.ndarray
    support_hint: Optional[Interval] = None

    def __post_init__(self):
        nodes = _check_nodes(self.nodes)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", np.asarray(self.weights, float))

    def __len__(self):
        return self.nodes.size

    @property
    def lo(self) -> float:
        return float(self.nodes[0])

    @property
    def hi(self) -> float:
        return float(self.nodes[-1])

    @classmethod
    def from_nodes(cls, ctx: MeasureContext, nodes, support_hint=None) -> "Grid":
        nodes = _check_nodes(nodes)
        return cls(nodes, hat_weights(ctx, nodes), support_hint)


def _check_nodes(nodes) -> np.ndarray:
    nodes = np.asarray(nodes, float)
    if nodes.ndim != 1 or nodes.size < 2:
        raise InvalidArgumentError("a grid needs at least two nodes")
    if np.any(np.diff(nodes) <= 0) or nodes[0] < 0:
        raise InvalidArgumentError("grid nodes must be nonnegative and strictly increasing")
    return nodes


def hat_weights(ctx: MeasureContext, nodes) -> np.ndarray:
    """Integrals of the piecewise-linear hat functions against dm."""
    nodes = np.asarray(nodes, float)
    u, v = nodes[:-1], nodes[1:]
    m0, k = _moments(ctx.power, u, v)
    right_part = k / (v - u)  # integral of (y - u)/(v - u)
    left_part = m0 - right_part
    w = np.zeros_like(nodes)
    w[:-1] += left_part
    w[1:] += right_part
    return w


@dataclass(frozen=True)
class GridFunction:
    """Node values of a piecewise-linear function on a grid.

    ``outside`` holds the constant values taken on (0, lo) and (hi, inf);
    ``None`` means the function is unknown beyond the grid.
    """

    grid: Grid
    values: np.ndarray
    outside: Optional[tuple] = (0.0, 0.0)
    label: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, float)
        if values.shape != self.grid.nodes.shape:
            raise InvalidArgumentError(
                f"{values.size} values for a grid of {self.grid.nodes.size} nodes"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError("grid function values must be finite")
        object.__setattr__(self, "values", values)
        if self.outside is not None:
            object.__setattr__(self, "outside", (float(self.outside[0]), float(self.outside[1])))

    @property
    def nodes(self):
        return self.grid.nodes

    def __call__(self, y):
        y = np.asarray(y, float)
        if self.outside is None:
            left = right = np.nan
        else:
            left, right = self.outside
        return np.interp(y, self.grid.nodes, self.values, left=left, right=right)

    def with_values(self, values, outside="same", label=None) -> "GridFunction":
        return GridFunction(
            self.grid,
            values,
            self.outside if outside == "same" else outside,
            self.label if label is None else label,
        )

    def scaled(self, c: float) -> "GridFunction":
        out = None if self.outside is None else (c * self.outside[0], c * self.outside[1])
        return GridFunction(self.grid, c * self.values, out, self.label)

    def is_constant(self) -> bool:
        if self.outside is None:
            return False
        c = self.values[0]
        return bool(np.all(self.values == c) and self.outside[0] == c and self.outside[1] == c)

    def support(self) -> tuple:
        """Closed hull of the region where the interpolant is nonzero."""
        if self.outside is None or self.outside != (0.0, 0.0):
            return (0.0, np.inf)
        nz = np.flatnonzero(self.values)
        if nz.size == 0:
            return (self.grid.lo, self.grid.lo)
        nodes = self.grid.nodes
        i0 = max(nz[0] - 1, 0)
        i1 = min(nz[-1] + 1, nodes.size - 1)
        return (float(nodes[i0]), float(nodes[i1]))


def constant_function(grid: Grid, c: float, label="constant") -> GridFunction:
    return GridFunction(grid, np.full(grid.nodes.size, float(c)), (float(c), float(c)), label)


def _pieces(f: GridFunction, lo: float, hi: float):
    """Split (lo, hi) into pieces on which f is linear.

    Returns (u, v, fu, slope) arrays, f(y) = fu + slope*(y - u) on (u, v).
    """
    nodes = f.grid.nodes
    inner = nodes[(nodes > lo) & (nodes < hi)]
    br = np.concatenate(([lo], inner, [hi]))
    u, v = br[:-1], br[1:]
    mid = 0.5 * (u + v)
    inside = (mid > nodes[0]) & (mid < nodes[-1])
    if f.outside is None:
        if not np.all(inside):
            gap = (lo, nodes[0]) if lo < nodes[0] else (nodes[-1], hi)
            raise CoverageError(
                f"grid [{nodes[0]:g}, {nodes[-1]:g}] does not cover ({lo:g}, {hi:g})", gap=gap
            )
        left_c = right_c = 0.0
    else:
        left_c, right_c = f.outside
    fu = np.interp(u, nodes, f.values)
    fv = np.interp(v, nodes, f.values)
    slope = np.where(v > u, (fv - fu) / np.where(v > u, v - u, 1.0), 0.0)
    left = mid <= nodes[0]
    right = mid >= nodes[-1]
    fu = np.where(left, left_c, np.where(right, right_c, fu))
    slope = np.where(inside, slope, 0.0)
    return u, v, fu, slope


def integrate_grid_function(
    ctx: MeasureContext, f: GridFunction, lo: float, hi: float, shift: float = 0.0, absolute=False
) -> float:
    """Exact value of int_lo^hi (f - shift) dm, or of |f - shift| if ``absolute``."""
    if hi <= lo:
        return 0.0
    if not np.isfinite(hi):
        raise CoverageError("integration range must be bounded", gap=(lo, hi))
    u, v, fu, slope = _pieces(f, lo, hi)
    fu = fu - shift
    if absolute:
        fv = fu + slope * (v - u)
        cross = (fu * fv < 0) & (slope != 0)
        if np.any(cross):
            root = u[cross] - fu[cross] / slope[cross]
            # split crossing pieces at the root
            u = np.concatenate((u[~cross], u[cross], root))
            v_new = np.concatenate((v[~cross], root, v[cross]))
            fu = np.concatenate((fu[~cross], fu[cross], np.zeros(root.size)))
            slope = np.concatenate((slope[~cross], slope[cross], slope[cross]))
            v = v_new
        m0, k = _moments(ctx.power, u, v)
        mid = fu + 0.5 * slope * (v - u)
        sign = np.sign(mid)
        return float(np.sum(sign * (fu * m0 + slope * k)))
    m0, k = _moments(ctx.power, u, v)
    return float(np.sum(fu * m0 + slope * k))


def mean_on_interval(ctx: MeasureContext, f: GridFunction, interval: Interval) -> float:
    """The dm-average of f over the interval."""
    if f.is_constant():
        return float(f.values[0])
    m = measure_of_interval(ctx, interval)
    return integrate_grid_function(ctx, f, interval.left, interval.right) / m


def mean_oscillation(ctx: MeasureContext, f: GridFunction, interval: Interval) -> float:
    """(1/m(I)) int_I |f - f_I| dm."""
    if f.is_constant():
        return 0.0
    m = measure_of_interval(ctx, interval)
    avg = integrate_grid_function(ctx, f, interval.left, interval.right) / m
    return integrate_grid_function(ctx, f, interval.left, interval.right, avg, absolute=True) / m


@dataclass
class GridSpec:
    lo: float
    hi: float
    count: int
    law: str = "log"
    refine: Sequence = field(default_factory=list)

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        try:
            lo, hi = d["range"]
            return cls(float(lo), float(hi), int(d["count"]), d.get("law", "log"), d.get("refine", []))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidArgumentError(f"bad grid spec {d!r}: {exc}") from exc


def build_grid(ctx: MeasureContext, spec: GridSpec) -> Grid:
    """Nodes from the spacing law, then each refinement window halves local spacing.

    A refinement window is ``(a, b)`` or ``(a, b, levels)``; every cell
    meeting the window is bisected ``levels`` times (default 1) and the
    window endpoints become nodes.
    """
    if not spec.hi > spec.lo:
        raise InvalidArgumentError(f"empty grid range [{spec.lo}, {spec.hi}]")
    if spec.count < 2:
        raise InvalidArgumentError(f"grid needs at least 2 nodes, got {spec.count}")
    if spec.law == "log":
        if spec.lo <= 0:
            raise InvalidArgumentError("log-uniform grids need a positive lower end")
        nodes = np.geomspace(spec.lo, spec.hi, spec.count)
    elif spec.law == "linear":
        if spec.lo < 0:
            raise InvalidArgumentError("grid range must lie in [0, inf)")
        nodes = np.linspace(spec.lo, spec.hi, spec.count)
    else:
        raise InvalidArgumentError(f"unknown spacing law {spec.law!r}")
    for window in spec.refine:
        a, b = float(window[0]), float(window[1])
        levels = int(window[2]) if len(window) > 2 else 1
        extra = [x for x in (a, b) if spec.lo < x < spec.hi]
        nodes = np.union1d(nodes, extra)
        for _ in range(levels):
            u, v = nodes[:-1], nodes[1:]
            hit = (v > a) & (u < b)
            nodes = np.union1d(nodes, 0.5 * (u[hit] + v[hit]))
    return Grid.from_nodes(ctx, nodes)
