"""Application of the Poisson and heat semigroups to grid functions.

The production path integrates the kernel against the piecewise-linear
interpolant of f exactly in f: for each time t it assembles a transfer
matrix whose rows map the basis coefficients of f (left constant, node
hat functions, right constant) to values of T_t f at the output nodes.
Kernel values come from a Chebyshev table of the angular factor that is
checked against direct angular quadrature in the test suite.  A direct
path (``apply_direct``) uses the half-line integrator with certified
tails and serves as an independent check.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _engine
from .errors import InvalidArgumentError, TruncationError, UndefinedRatioError
from .kernels import heat_eval, kernel_table, poisson_eval
from .measure import Grid, GridFunction, MeasureContext, constant_function
from .quadrature import HalfLineRule, gauss_legendre01, integrate_halfline, sine_power_integral

# mass of the Poisson kernel dropped beyond the truncation radius
TAIL_TOL = 1e-12
PANEL_POINTS = {"poisson": 8, "heat": 10}
LOW_PANEL_POINTS = 5


class SemigroupKind(str, enum.Enum):
    POISSON = "poisson"
    HEAT = "heat"

    @classmethod
    def parse(cls, kind) -> "SemigroupKind":
        try:
            return cls(kind.value if isinstance(kind, cls) else str(kind).lower())
        except ValueError:
            raise InvalidArgumentError(f"unknown semigroup kind {kind!r}; use poisson or heat") from None


def _log_prefactor(kind: SemigroupKind, lam: float) -> float:
    if kind is SemigroupKind.POISSON:
        return math.log(2.0 * lam / math.pi)
    return (0.5 - lam) * math.log(2.0) - math.lgamma(lam) - 0.5 * math.log(math.pi)


def poisson_tail_constant(lam: float) -> float:
    """C with int_R^inf P_t(x, y) dm(y) <= C t / R for R >= 2x."""
    return 2.0 * lam / math.pi * sine_power_integral(lam) * 4.0 ** (lam + 1.0)


def kernel_values(ctx: MeasureContext, kind, t, x, y):
    """Direct angular quadrature of the kernel (vectorized)."""
    kind = SemigroupKind.parse(kind)
    if kind is SemigroupKind.POISSON:
        return poisson_eval(ctx, "p", t, x, y).value
    return heat_eval(ctx, t, x, y).value


def table_kernel_values(ctx: MeasureContext, kind, t, x, y):
    """Kernel values from the Chebyshev table used by the transfer engine."""
    kind = SemigroupKind.parse(kind)
    tb = kernel_table(kind.value, ctx.lam)
    t, x, y = np.broadcast_arrays(*(np.asarray(a, float) for a in (t, x, y)))
    lk = _engine.log_kernel_many(
        0 if kind is SemigroupKind.POISSON else 1,
        ctx.lam,
        _log_prefactor(kind, ctx.lam),
        t.ravel().copy(),
        x.ravel().copy(),
        y.ravel().copy(),
        tb.coeffs,
        tb.zmin,
        tb.width,
        tb.asym,
    )
    return np.exp(lk).reshape(t.shape)


def transfer_matrix(ctx: MeasureContext, kind, t: float, xs, nodes) -> np.ndarray:
    """Matrix A with (T_t f)(xs) = A @ basis_coefficients(f) for f on ``nodes``."""
    kind = SemigroupKind.parse(kind)
    if not t > 0:
        raise InvalidArgumentError(f"time must be positive, got {t}")
    xs = np.ascontiguousarray(xs, dtype=float)
    nodes = np.ascontiguousarray(nodes, dtype=float)
    if np.any(xs <= 0):
        raise InvalidArgumentError("output points must be positive")
    tb = kernel_table(kind.value, ctx.lam)
    gx, gw = gauss_legendre01(PANEL_POINTS[kind.value])
    lx, lw = gauss_legendre01(LOW_PANEL_POINTS)
    upper = max(
        2.0 * max(float(np.max(xs)), float(nodes[-1])),
        poisson_tail_constant(ctx.lam) * t / TAIL_TOL,
    )
    out = np.zeros((xs.size, nodes.size + 2))
    _engine.transfer_rows(
        0 if kind is SemigroupKind.POISSON else 1,
        float(ctx.lam),
        _log_prefactor(kind, ctx.lam),
        float(t),
        xs,
        nodes,
        upper,
        tb.coeffs,
        tb.zmin,
        tb.width,
        tb.asym,
        np.ascontiguousarray(gx),
        np.ascontiguousarray(gw),
        np.ascontiguousarray(lx),
        np.ascontiguousarray(lw),
        out,
    )
    return out


def basis_coefficients(f: GridFunction) -> np.ndarray:
    if f.outside is None:
        raise InvalidArgumentError("semigroups need f defined on all of (0, inf); set outside")
    return np.concatenate(([f.outside[0]], f.values, [f.outside[1]]))


def semigroup_values(ctx: MeasureContext, kind, fs: Sequence[GridFunction], times, xs) -> np.ndarray:
    """Values T_t f(x) for many functions sharing one grid.

    Returns an array of shape (len(times), len(fs), len(xs)).  Constant
    functions are returned exactly (conservation).
    """
    kind = SemigroupKind.parse(kind)
    fs = list(fs)
    if not fs:
        raise InvalidArgumentError("no functions given")
    grid = fs[0].grid
    for f in fs[1:]:
        if f.grid is not grid and not np.array_equal(f.grid.nodes, grid.nodes):
            raise InvalidArgumentError("all functions must share one grid")
    times = np.atleast_1d(np.asarray(times, float))
    xs = np.atleast_1d(np.asarray(xs, float))
    coef = np.stack([basis_coefficients(f) for f in fs], axis=1)  # (n + 2, nf)
    const = np.array([f.is_constant() for f in fs])
    out = np.empty((times.size, len(fs), xs.size))
    for k, t in enumerate(times):
        if np.all(const):
            out[k] = 0.0
        else:
            a = transfer_matrix(ctx, kind, t, xs, grid.nodes)
            out[k] = (a @ coef).T
        for i in np.flatnonzero(const):
            out[k, i] = fs[i].values[0]
    return out


def default_out_grid(ctx: MeasureContext, grid: Grid, per_decade: int = 16) -> Grid:
    """The grid extended by one decade on each side with log spacing."""
    lo, hi = grid.lo, grid.hi
    nodes = list(grid.nodes)
    if lo > 0:
        nodes += list(np.geomspace(lo / 10.0, lo, per_decade + 1)[:-1])
    nodes += list(np.geomspace(hi, 10.0 * hi, per_decade + 1)[1:])
    return Grid.from_nodes(ctx, np.unique(np.asarray(nodes)[np.asarray(nodes) > 0]))


def _output_function(f: GridFunction, grid: Grid, values, label) -> GridFunction:
    # T_t f tends to a constant at 0; on the right it keeps f's limit
    right = float(values[-1]) if f.outside[1] != 0.0 else 0.0
    return GridFunction(grid, values, (float(values[0]), right), label)


def apply(ctx: MeasureContext, kind, f: GridFunction, t: float, out_grid: Optional[Grid] = None) -> GridFunction:
    """T_t f sampled on ``out_grid`` (default: f's grid plus a decade each side)."""
    kind = SemigroupKind.parse(kind)
    if out_grid is None:
        out_grid = default_out_grid(ctx, f.grid)
    if f.is_constant():
        return constant_function(out_grid, f.values[0], label=f.label)
    vals = semigroup_values(ctx, kind, [f], [t], out_grid.nodes)[0, 0]
    return _output_function(f, out_grid, vals, f"{kind.value}[t={t:g}]{f.label}")


# ------------------------------------------------------------ direct path


def _halfline_setup(ctx, kind, t, x, f: GridFunction, sup_f):
    w = t if kind is SemigroupKind.POISSON else math.sqrt(t)
    step = 2.0 if kind is SemigroupKind.POISSON else math.sqrt(2.0)
    d = w / 16.0 * step ** np.arange(0, 200)
    d = d[d < 40.0 * max(x, w)]
    pts = np.concatenate((x + d, x - d, [x, 2.0 * x + 40.0 * w], f.grid.nodes))
    pts = pts[pts > 0]
    if kind is SemigroupKind.POISSON:
        c = poisson_tail_constant(ctx.lam) * t * sup_f

        def majorant(y):
            return c / (y * y)
    else:
        logc = _log_prefactor(kind, ctx.lam) + math.log(sine_power_integral(ctx.lam))

        def majorant(y):
            return sup_f * math.exp(
                logc - (ctx.lam + 0.5) * math.log(t) - (y - x) ** 2 / (2.0 * t) + ctx.power * math.log(y)
            )
    return HalfLineRule(np.unique(pts), order=10), majorant


def apply_direct(ctx: MeasureContext, kind, f: GridFunction, t: float, xs) -> tuple:
    """T_t f(x) by half-line quadrature of the directly evaluated kernel.

    Returns (values, error estimates).  The right outside constant of f
    must be zero so that the tail majorant applies.
    """
    kind = SemigroupKind.parse(kind)
    if f.outside is None:
        raise InvalidArgumentError("f must be defined on all of (0, inf)")
    sup_f = max(float(np.max(np.abs(f.values))), abs(f.outside[0]), abs(f.outside[1]), 1e-300)
    vals, errs = [], []
    for x in np.atleast_1d(np.asarray(xs, float)):
        rule, majorant = _halfline_setup(ctx, kind, t, float(x), f, sup_f)

        def integrand(y, x=float(x)):
            return kernel_values(ctx, kind, t, x, y) * f(y)

        try:
            r = integrate_halfline(ctx, integrand, rule, majorant)
        except TruncationError as exc:
            raise TruncationError(f"{exc} (x={x:g})") from exc
        vals.append(r.value)
        errs.append(r.error)
    return np.array(vals), np.array(errs)


def kernel_mass(ctx: MeasureContext, kind, t: float, x: float):
    """int_0^inf K_t(x, y) dm(y) by direct quadrature, with error estimate."""
    kind = SemigroupKind.parse(kind)
    dummy = GridFunction(Grid.from_nodes(ctx, [x, 2.0 * x]), [1.0, 1.0], (1.0, 1.0))
    rule, majorant = _halfline_setup(ctx, kind, t, x, dummy, 1.0)
    return integrate_halfline(ctx, lambda y: kernel_values(ctx, kind, t, x, y), rule, majorant)


# --------------------------------------------------------- maximal & axioms


@dataclass(frozen=True)
class MaximalResult:
    value: float
    gap: float  # value minus the value on every other time
    t_argmax: float


def default_maximal_times(f: GridFunction, kind=SemigroupKind.POISSON, q=0.8, count=60, t_max=None):
    kind = SemigroupKind.parse(kind)
    if t_max is None:
        lo, hi = f.support()
        diam = hi - lo if np.isfinite(hi) and hi > lo else f.grid.hi - f.grid.lo
        t_max = 10.0 * diam
        if kind is SemigroupKind.HEAT:
            t_max = t_max**2
    return t_max * q ** np.arange(count)


def maximal(ctx: MeasureContext, kind, f: GridFunction, x, times=None) -> MaximalResult:
    """Max over a time grid of |T_t f(x)|, a lower bound for the supremum."""
    if times is None:
        times = default_maximal_times(f, kind)
    times = np.asarray(getattr(times, "times", times), float)
    v = np.abs(semigroup_values(ctx, kind, [f], times, [x])[:, 0, 0])
    k = int(np.argmax(v))
    coarse = float(np.max(v[::2]))
    return MaximalResult(float(v[k]), float(v[k] - coarse), float(times[k]))


def semigroup_defect(ctx: MeasureContext, kind, f: GridFunction, s: float, t: float, out_grid=None) -> float:
    """sup over the output grid of |T_t T_s f - T_(s+t) f|."""
    if out_grid is None:
        out_grid = default_out_grid(ctx, f.grid)
    inner = apply(ctx, kind, f, s, out_grid)
    twice = apply(ctx, kind, inner, t, out_grid)
    once = apply(ctx, kind, f, s + t, out_grid)
    return float(np.max(np.abs(twice.values - once.values)))


def contraction_check(ctx: MeasureContext, kind, f: GridFunction, t: float, p: float, out_grid=None) -> float:
    """||T_t f||_p / ||f||_p."""
    from .spaces import lp_norm

    base = lp_norm(ctx, f, p)
    if base == 0:
        raise UndefinedRatioError("f has zero norm")
    return lp_norm(ctx, apply(ctx, kind, f, t, out_grid), p) / base
