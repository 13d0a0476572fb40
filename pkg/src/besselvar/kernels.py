"""Poisson and heat kernels of the Bessel operator, their derivatives and
the envelopes that bound them.

Every kernel is an angular integral in s = cos(theta) against the weight
(1 - s^2)^(lam - 1).  With u = 1 - s the denominator of the Poisson
integrand is

    a - b s = c + b u = c (1 + u / sigma),   c = (x - y)^2 + t^2, b = 2xy,

so sigma = c / b measures how strongly the integrand concentrates at
s = 1.  Derivatives are taken under the integral sign.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import AccuracyError, InvalidArgumentError
from .measure import MeasureContext
from .quadrature import (
    PEAK_THRESHOLD,
    THETA_RTOL,
    ThetaRule,
    sine_power_integral,
    theta_nodes,
    theta_rule,
)

_CHUNK = 256


@dataclass(frozen=True)
class KernelPoint:
    t: float
    x: float
    y: float

    def __post_init__(self):
        for name in ("t", "x", "y"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise InvalidArgumentError(f"kernel point needs {name} > 0, got {v!r}")

    def swapped(self) -> "KernelPoint":
        return KernelPoint(self.t, self.y, self.x)


@dataclass(frozen=True)
class KernelEval:
    """Arrays of values, error estimates and integrand scales."""

    value: np.ndarray
    error: np.ndarray
    scale: np.ndarray


# quantities computed by the vectorized evaluator
POISSON_QUANTITIES = ("p", "dt", "dx", "dy", "dxdt", "dydt")


def _rule_for(ctx: MeasureContext, rule: Optional[ThetaRule]) -> ThetaRule:
    if rule is None:
        return _default_rule(ctx.lam)
    if rule.lam != ctx.lam:
        raise InvalidArgumentError(f"rule built for lambda={rule.lam}, context has {ctx.lam}")
    return rule


@lru_cache(maxsize=32)
def _default_rule(lam: float) -> ThetaRule:
    return theta_rule(MeasureContext(lam), 32)


def _as_arrays(t, x, y):
    t, x, y = np.broadcast_arrays(
        np.asarray(t, float), np.asarray(x, float), np.asarray(y, float)
    )
    if not (np.all(t > 0) and np.all(x > 0) and np.all(y > 0)):
        raise InvalidArgumentError("kernel arguments must be strictly positive")
    return t.ravel(), x.ravel(), y.ravel(), t.shape


def _poisson_integrand(lam, which, u, r, x, y, tau):
    """Angular integrand (without prefactor) at nodes u, r = u/sigma."""
    e = 1.0 + r
    if which == "p":
        return e ** (-(lam + 1.0))
    if which == "dt":
        return e ** (-(lam + 1.0)) * (1.0 - 2.0 * (lam + 1.0) * tau / e)
    if which in ("dx", "dxdt"):
        d = 2.0 * (x - y) + 2.0 * y * u
    else:
        d = 2.0 * (y - x) + 2.0 * x * u
    g = d * e ** (-(lam + 2.0))
    if which in ("dxdt", "dydt"):
        g = g * (1.0 - 2.0 * (lam + 2.0) * tau / e)
    return g


def _poisson_prefactor(lam, which, t, c):
    k = 2.0 * lam / math.pi
    if which == "p":
        return k * t * c ** (-(lam + 1.0))
    if which == "dt":
        return k * c ** (-(lam + 1.0))
    if which in ("dx", "dy"):
        return -k * t * (lam + 1.0) * c ** (-(lam + 2.0))
    return -k * (lam + 1.0) * c ** (-(lam + 2.0))


def _integrate_rows(rule, sigma, profile, integrand):
    """Full and half order sums of integrand(u, r, rows) plus the L1 scale.

    Rows with sigma >= PEAK_THRESHOLD share the global rule; the rest are
    sorted by sigma and handled in chunks by the composite rule.
    """
    n = sigma.size
    full = np.empty(n)
    half = np.empty(n)
    scale = np.empty(n)
    smooth = sigma >= PEAK_THRESHOLD
    idx = np.flatnonzero(smooth)
    if idx.size:
        for h, out in ((False, full), (True, half)):
            xs, ws = (rule.half_nodes, rule.half_weights) if h else (rule.nodes, rule.weights)
            u = (1.0 - xs)[None, :]
            g = integrand(u, u / sigma[idx, None], idx)
            out[idx] = g @ ws
            if not h:
                scale[idx] = np.abs(g) @ ws
    peaked = np.flatnonzero(~smooth)
    peaked = peaked[np.argsort(sigma[peaked])]
    for start in range(0, peaked.size, _CHUNK):
        rows = peaked[start : start + _CHUNK]
        for h, out in ((False, full), (True, half)):
            u, r, w = theta_nodes(rule, sigma[rows], profile, half=h)
            g = integrand(u, r, rows)
            g = np.where(w > 0, g, 0.0)
            out[rows] = np.sum(g * w, axis=1)
            if not h:
                scale[rows] = np.sum(np.abs(g) * w, axis=1)
    return full, half, scale


def poisson_eval(ctx: MeasureContext, which: str, t, x, y, rule=None, check=True) -> KernelEval:
    """Vectorized Poisson kernel or one of its derivatives.

    ``which`` is one of p, dt, dx, dy, dxdt, dydt.  With ``check`` an
    AccuracyError is raised where the error estimate exceeds the angular
    tolerance relative to the integrand scale.
    """
    if which not in POISSON_QUANTITIES:
        raise InvalidArgumentError(f"unknown kernel quantity {which!r}")
    rule = _rule_for(ctx, rule)
    lam = ctx.lam
    t, x, y, shape = _as_arrays(t, x, y)
    c = (x - y) ** 2 + t * t
    sigma = c / (2.0 * x * y)
    tau = t * t / c

    def integrand(u, r, rows):
        return _poisson_integrand(
            lam, which, u, r, x[rows, None], y[rows, None], tau[rows, None]
        )

    full, half, scale = _integrate_rows(rule, sigma, "algebraic", integrand)
    pre = _poisson_prefactor(lam, which, t, c)
    out = KernelEval(
        (pre * full).reshape(shape),
        np.abs(pre * (full - half)).reshape(shape),
        np.abs(pre * scale).reshape(shape),
    )
    if check:
        _check_accuracy(out, (t, x, y), which)
    return out


def _heat_log_prefactor(lam, t, x, y):
    log_a = (0.5 - lam) * math.log(2.0) - math.lgamma(lam) - 0.5 * math.log(math.pi)
    return log_a - (lam + 0.5) * np.log(t) - (x - y) ** 2 / (2.0 * t)


def heat_eval(ctx: MeasureContext, t, x, y, rule=None, check=True) -> KernelEval:
    """Vectorized heat kernel W_t(x, y).

    The exponent -(x^2 + y^2 - 2xys)/(2t) is split as
    -(x - y)^2/(2t) - (xy/t) u, and the angular integral runs over
    exp(-(xy/t) u), which concentrates at u = 0 on the scale t/(xy).
    """
    rule = _rule_for(ctx, rule)
    t, x, y, shape = _as_arrays(t, x, y)
    sigma = t / (x * y)

    def integrand(u, r, rows):
        return np.exp(-r)

    full, half, scale = _integrate_rows(rule, sigma, "gaussian", integrand)
    pre = np.exp(_heat_log_prefactor(ctx.lam, t, x, y))
    out = KernelEval(
        (pre * full).reshape(shape),
        np.abs(pre * (full - half)).reshape(shape),
        (pre * scale).reshape(shape),
    )
    if check:
        _check_accuracy(out, (t, x, y), "heat")
    return out


def _check_accuracy(out: KernelEval, args, name):
    bad = out.error > THETA_RTOL * out.scale + 1e-300
    if np.any(bad):
        i = int(np.flatnonzero(bad.ravel())[0])
        t, x, y = (a[i] for a in args)
        est = float(out.error.ravel()[i])
        raise AccuracyError(
            f"{name} kernel error estimate {est:.3g} above tolerance at (t={t:g}, x={x:g}, y={y:g})",
            estimate=est,
            where=(float(t), float(x), float(y)),
        )


def _point_eval(ctx, which, p: KernelPoint, rule):
    if which == "heat":
        return float(heat_eval(ctx, p.t, p.x, p.y, rule).value[()])
    return float(poisson_eval(ctx, which, p.t, p.x, p.y, rule).value[()])


def poisson_kernel(ctx: MeasureContext, p: KernelPoint, rule: Optional[ThetaRule] = None) -> float:
    return _point_eval(ctx, "p", p, rule)


def heat_kernel(ctx: MeasureContext, p: KernelPoint, rule: Optional[ThetaRule] = None) -> float:
    return _point_eval(ctx, "heat", p, rule)


def poisson_kernel_dt(ctx, p: KernelPoint, rule=None) -> float:
    return _point_eval(ctx, "dt", p, rule)


def poisson_kernel_dx(ctx, p: KernelPoint, rule=None) -> float:
    return _point_eval(ctx, "dx", p, rule)


def poisson_kernel_dy(ctx, p: KernelPoint, rule=None) -> float:
    return _point_eval(ctx, "dy", p, rule)


def poisson_kernel_dxdt(ctx, p: KernelPoint, rule=None) -> float:
    return _point_eval(ctx, "dxdt", p, rule)


def poisson_kernel_dydt(ctx, p: KernelPoint, rule=None) -> float:
    return _point_eval(ctx, "dydt", p, rule)


# ---------------------------------------------------------------- envelopes


class BoundKind(str, enum.Enum):
    P_T1 = "P_t1"
    P_T2 = "P_t2"
    DX_1 = "dx_1"
    DX_2 = "dx_2"
    DT_1 = "dt_1"
    DT_2 = "dt_2"
    DXDT_1 = "dxdt_1"
    DXDT_2 = "dxdt_2"
    MEASURE_FORM = "measure_form"

    @classmethod
    def parse(cls, name) -> "BoundKind":
        if isinstance(name, cls):
            return name
        for k in cls:
            if k.value == name or k.name == str(name).upper():
                return k
        raise InvalidArgumentError(
            f"unknown bound kind {name!r}; valid: {', '.join(k.value for k in cls)}"
        )


def bound_envelope(ctx: MeasureContext, kind, t, x, y):
    """Right-hand side of the kernel bound without its constant.

    Works on scalars or arrays.  The measure form is infinite on the
    diagonal x = y, where the interval I(y, |x - y|) is empty.
    """
    kind = BoundKind.parse(kind)
    t, x, y = (np.asarray(a, float) for a in (t, x, y))
    lam = ctx.lam
    c = (x - y) ** 2 + t * t
    xy = (x * y) ** lam
    if kind is BoundKind.P_T1:
        out = t / c ** (lam + 1.0)
    elif kind is BoundKind.P_T2:
        out = t / (xy * c)
    elif kind is BoundKind.DX_1:
        out = t / c ** (lam + 1.5)
    elif kind is BoundKind.DX_2:
        out = t / (xy * c**1.5)
    elif kind is BoundKind.DT_1:
        out = 1.0 / c ** (lam + 1.0)
    elif kind is BoundKind.DT_2:
        out = 1.0 / (xy * c)
    elif kind is BoundKind.DXDT_1:
        out = 1.0 / c ** (lam + 1.5)
    elif kind is BoundKind.DXDT_2:
        out = 1.0 / (xy * c**1.5)
    else:
        d = np.abs(x - y)
        lo = np.maximum(y - d, 0.0)
        hi = y + d
        with np.errstate(divide="ignore"):
            out = np.where(d > 0, 1.0 / (ctx.mass(lo, hi) * (d + t) ** 2), np.inf)
    return out[()] if out.ndim == 0 else out


def kernel_side(ctx: MeasureContext, kind, t, x, y, rule=None):
    """The bounded kernel quantity matching a bound kind, with error estimates."""
    kind = BoundKind.parse(kind)
    if kind in (BoundKind.P_T1, BoundKind.P_T2):
        e = poisson_eval(ctx, "p", t, x, y, rule)
        return np.abs(e.value), e.error
    if kind in (BoundKind.DX_1, BoundKind.DX_2):
        e = poisson_eval(ctx, "dx", t, x, y, rule)
        return np.abs(e.value), e.error
    if kind in (BoundKind.DT_1, BoundKind.DT_2):
        e = poisson_eval(ctx, "dt", t, x, y, rule)
        return np.abs(e.value), e.error
    ey = poisson_eval(ctx, "dydt", t, x, y, rule)
    if kind is BoundKind.MEASURE_FORM:
        return np.abs(ey.value), ey.error
    ex = poisson_eval(ctx, "dxdt", t, x, y, rule)
    return np.abs(ey.value) + np.abs(ex.value), ey.error + ex.error


@dataclass(frozen=True)
class KernelCloud:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def __len__(self):
        return self.t.size

    def scaled(self, c: float) -> "KernelCloud":
        return KernelCloud(c * self.t, c * self.x, c * self.y)

    def concat(self, other: "KernelCloud") -> "KernelCloud":
        return KernelCloud(*(np.concatenate((a, b)) for a, b in zip(
            (self.t, self.x, self.y), (other.t, other.x, other.y))))


def sample_cloud(rng: np.random.Generator, n: int, lo=1e-2, hi=1e2, near_fraction=0.25) -> KernelCloud:
    """Log-uniform points in [lo, hi]^3, a fraction forced near the diagonal.

    Near-diagonal points have |x - y| < 1e-2 min(x, y), with the relative
    gap itself log-uniform in [1e-8, 1e-2].
    """
    if n < 1:
        raise InvalidArgumentError("cloud must be nonempty")
    a, b = math.log(lo), math.log(hi)
    t, x, y = np.exp(rng.uniform(a, b, size=(3, n)))
    k = int(round(near_fraction * n))
    if k:
        rel = np.exp(rng.uniform(math.log(1e-8), math.log(1e-2), size=k))
        sign = rng.choice([-1.0, 1.0], size=k)
        base = np.minimum(x[:k], y[:k])
        # y is placed relative to the smaller coordinate so the gap bound holds
        x[:k] = base
        y[:k] = base * (1.0 + sign * rel * 0.999)
    return KernelCloud(t, x, y)


def bound_ratios(ctx: MeasureContext, kind, cloud: KernelCloud, rule=None) -> np.ndarray:
    q, _ = kernel_side(ctx, kind, cloud.t, cloud.x, cloud.y, rule)
    env = bound_envelope(ctx, kind, cloud.t, cloud.x, cloud.y)
    return q / env


def fit_bound_constant(ctx: MeasureContext, kind, cloud: KernelCloud, rule=None) -> float:
    """Largest ratio of the kernel quantity to its envelope over the cloud."""
    if len(cloud) == 0:
        raise InvalidArgumentError("cloud must be nonempty")
    return float(np.max(bound_ratios(ctx, kind, cloud, rule)))


# ------------------------------------------------------------ kernel table


def _cheb_nodes(deg):
    k = np.arange(deg + 1)
    return np.cos(np.pi * (k + 0.5) / (deg + 1))


def _cheb_coeffs(vals):
    """Chebyshev coefficients from values at first-kind nodes (last axis)."""
    n = vals.shape[-1]
    k = np.arange(n)
    m = np.cos(np.pi * np.outer(k, k + 0.5) / n)
    c = (2.0 / n) * vals @ m.T
    c[..., 0] *= 0.5
    return c


@dataclass(frozen=True)
class KernelTable:
    """Piecewise Chebyshev table of the log angular factor of a kernel.

    For the Poisson kernel the tabulated function is
    log G(sigma) = log int w(s) (1 + (1 - s)/sigma)^(-(lam + 1)) ds
    in z = log sigma; for the heat kernel it is
    log H(kappa) = log int w(s) exp(-kappa (1 - s)) ds in z = log kappa.
    Outside [zmin, zmax] the leading asymptotic terms
    c0 + c1 z + c2 exp(d z) are used (left and right rows of ``asym``).
    """

    kind: str
    lam: float
    zmin: float
    width: float
    coeffs: np.ndarray  # (pieces, degree + 1)
    asym: np.ndarray  # (2, 4)

    @property
    def zmax(self) -> float:
        return self.zmin + self.width * self.coeffs.shape[0]

    def log_factor(self, z):
        z = np.asarray(z, float)
        out = np.empty_like(z)
        lo = z < self.zmin
        hi = z >= self.zmax
        mid = ~(lo | hi)
        for mask, row in ((lo, self.asym[0]), (hi, self.asym[1])):
            if np.any(mask):
                zz = z[mask]
                out[mask] = row[0] + row[1] * zz + row[2] * np.exp(row[3] * zz)
        if np.any(mid):
            zz = z[mid]
            k = np.minimum(((zz - self.zmin) / self.width).astype(int), self.coeffs.shape[0] - 1)
            s = 2.0 * (zz - self.zmin - k * self.width) / self.width - 1.0
            out[mid] = _clenshaw(self.coeffs[k], s)
        return out

    def log_kernel(self, t, x, y):
        t, x, y = (np.asarray(a, float) for a in (t, x, y))
        lam = self.lam
        if self.kind == "poisson":
            c = (x - y) ** 2 + t * t
            lc = np.log(c)
            z = lc - math.log(2.0) - np.log(x) - np.log(y)
            return math.log(2.0 * lam / math.pi) + np.log(t) - (lam + 1.0) * lc + self.log_factor(z)
        z = np.log(x) + np.log(y) - np.log(t)
        return _heat_log_prefactor(lam, t, x, y) + self.log_factor(z)

    def kernel(self, t, x, y):
        return np.exp(self.log_kernel(t, x, y))


def _clenshaw(c, s):
    b1 = np.zeros_like(s)
    b2 = np.zeros_like(s)
    for j in range(c.shape[1] - 1, 0, -1):
        b1, b2 = 2.0 * s * b1 - b2 + c[:, j], b1
    return s * b1 - b2 + c[:, 0]


def _table_asymptotics(kind, lam):
    log_b0 = math.log(sine_power_integral(lam))
    if kind == "poisson":
        left = (math.log(2.0 ** (lam - 1.0) / lam), lam, 0.0, 0.0)
        right = (log_b0, 0.0, -(lam + 1.0), -1.0)
    else:
        left = (log_b0, 0.0, -1.0, 1.0)
        right = (math.log(2.0 ** (lam - 1.0)) + math.lgamma(lam), -lam, 0.0, 0.0)
    return np.array([left, right])


@lru_cache(maxsize=16)
def kernel_table(kind: str, lam: float, zmin=-37.0, zmax=37.0, width=1.0, degree=16) -> KernelTable:
    """Build the table by direct angular quadrature at Chebyshev points."""
    if kind not in ("poisson", "heat"):
        raise InvalidArgumentError(f"unknown kernel kind {kind!r}")
    rule = _default_rule(lam)
    pieces = int(round((zmax - zmin) / width))
    s = _cheb_nodes(degree)
    z = zmin + width * (np.arange(pieces)[:, None] + 0.5 * (s[None, :] + 1.0))
    zf = z.ravel()
    if kind == "poisson":
        sigma = np.exp(zf)
        full, half, _ = _integrate_rows(
            rule, sigma, "algebraic", lambda u, r, rows: (1.0 + r) ** (-(lam + 1.0))
        )
    else:
        sigma = np.exp(-zf)
        full, half, _ = _integrate_rows(rule, sigma, "gaussian", lambda u, r, rows: np.exp(-r))
    vals = np.log(full).reshape(z.shape)
    coeffs = _cheb_coeffs(vals)
    coeffs.setflags(write=False)
    return KernelTable(kind, float(lam), float(zmin), float(width), coeffs, _table_asymptotics(kind, lam))
