"""Quadrature backends: Gauss-Jacobi rules for the angular integral and
composite Gauss-Legendre panels for integrals over the half-line.

The angular integral int_0^pi (sin th)^(2 lam - 1) g(cos th) dth is taken
in s = cos th, where it becomes int_{-1}^{1} (1 - s^2)^(lam - 1) g(s) ds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .errors import (
    EvaluationError,
    InvalidArgumentError,
    NumericRangeError,
    TruncationError,
)
from .measure import MeasureContext

THETA_RTOL = 1e-10
HALFLINE_RTOL = 1e-8
PANEL_ORDER = 20
# composite rule is used when the peak scale in 1 - s is below this
PEAK_THRESHOLD = 1.0
# length of the Jacobi end panel of the composite rule, in units of the peak width
END_PANEL = 0.5


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float

    def __float__(self):
        return float(self.value)


def jacobi_eval(n: int, alpha: float, beta: float, x):
    """P_n^(alpha, beta)(x) by the three-term recurrence."""
    x = np.asarray(x, dtype=float)
    p0 = np.ones_like(x)
    if n == 0:
        return p0
    p1 = (alpha + 1.0) + 0.5 * (alpha + beta + 2.0) * (x - 1.0)
    ab = alpha + beta
    for k in range(2, n + 1):
        c = 2.0 * k + ab
        a1 = 2.0 * k * (k + ab) * (c - 2.0)
        a2 = (c - 1.0) * (alpha * alpha - beta * beta)
        a3 = (c - 2.0) * (c - 1.0) * c
        a4 = 2.0 * (k + alpha - 1.0) * (k + beta - 1.0) * c
        p0, p1 = p1, ((a2 + a3 * x) * p1 - a4 * p0) / a1
    return p1


def jacobi_deriv(n: int, alpha: float, beta: float, x):
    if n == 0:
        return np.zeros_like(np.asarray(x, float))
    return 0.5 * (n + alpha + beta + 1.0) * jacobi_eval(n - 1, alpha + 1.0, beta + 1.0, x)


@lru_cache(maxsize=None)
def gauss_jacobi(n: int, alpha: float, beta: float):
    """Nodes and weights of the n-point Gauss rule for (1-x)^alpha (1+x)^beta.

    Roots are found by simultaneous Newton iteration with deflation
    (each correction accounts for the other current root estimates),
    started from Chebyshev-like asymptotic guesses.
    """
    if n < 1:
        raise InvalidArgumentError("rule order must be positive")
    if alpha <= -1 or beta <= -1:
        raise InvalidArgumentError("Jacobi parameters must exceed -1")
    k = np.arange(1, n + 1)
    x = np.cos(np.pi * (k - 0.25 + 0.5 * alpha) / (n + 0.5 * (alpha + beta + 1.0)))
    x = np.clip(x, -1 + 1e-15, 1 - 1e-15)
    for _ in range(100):
        f = jacobi_eval(n, alpha, beta, x)
        fp = jacobi_deriv(n, alpha, beta, x)
        diff = x[:, None] - x[None, :]
        np.fill_diagonal(diff, np.inf)
        s = np.sum(1.0 / diff, axis=1)
        delta = f / (fp - f * s)
        x = x - delta
        if np.max(np.abs(delta)) < 1e-15:
            break
    # two polishing steps of plain Newton
    for _ in range(2):
        x = x - jacobi_eval(n, alpha, beta, x) / jacobi_deriv(n, alpha, beta, x)
    x = np.sort(x)
    if np.any(np.diff(x) <= 0) or np.any(np.abs(x) >= 1):
        raise NumericRangeError(f"Gauss-Jacobi root finding failed for n={n}, a={alpha}, b={beta}")
    log_c = (
        math.lgamma(n + alpha + 1.0)
        + math.lgamma(n + beta + 1.0)
        - math.lgamma(n + alpha + beta + 1.0)
        - math.lgamma(n + 1.0)
        + (alpha + beta + 1.0) * math.log(2.0)
    )
    fp = jacobi_deriv(n, alpha, beta, x)
    with np.errstate(over="ignore", divide="ignore"):
        w = np.exp(log_c - np.log1p(-x * x) - 2.0 * np.log(np.abs(fp)))
    if not np.all(np.isfinite(w)) or not np.all(w > 0):
        raise NumericRangeError(f"weight normalization overflow for a={alpha}, b={beta}")
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=None)
def gauss_legendre01(n: int):
    """n-point Gauss-Legendre rule on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=None)
def gauss_jacobi_end01(n: int, lam: float):
    """Rule on [0, 1] for the weight v^(lam - 1)."""
    z, w = gauss_jacobi(n, 0.0, lam - 1.0)
    v = 0.5 * (1.0 + z)
    wv = w * 2.0 ** (-lam)
    return v, wv


def sine_power_integral(lam: float) -> float:
    """int_0^pi (sin th)^(2 lam - 1) dth = Gamma(lam) sqrt(pi) / Gamma(lam + 1/2)."""
    return math.exp(math.lgamma(lam) - math.lgamma(lam + 0.5)) * math.sqrt(math.pi)


@dataclass(frozen=True)
class ThetaRule:
    lam: float
    order: int
    nodes: np.ndarray
    weights: np.ndarray
    half_nodes: np.ndarray
    half_weights: np.ndarray
    panel_order: int = PANEL_ORDER

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.weights))


def theta_rule(ctx: MeasureContext, order: int = 32, panel_order: int = PANEL_ORDER) -> ThetaRule:
    if order < 2:
        raise InvalidArgumentError(f"theta rule order must be >= 2, got {order}")
    a = ctx.lam - 1.0
    x, w = gauss_jacobi(int(order), a, a)
    xh, wh = gauss_jacobi(max(int(order) // 2, 1), a, a)
    return ThetaRule(ctx.lam, int(order), x, w, xh, wh, int(panel_order))


def _edges(sigma, profile):
    """Panel edges in units of sigma on [END_PANEL, 1/sigma] for each row."""
    inv = 1.0 / sigma
    if profile == "algebraic":
        kmax = int(np.ceil(np.log2(np.max(inv)))) if np.max(inv) > 1 else 0
        base = 2.0 ** np.arange(-1, kmax + 1)
    elif profile == "gaussian":
        # e^(-64) is below double resolution relative to the peak
        cap = min(float(np.max(inv)), 64.0)
        base = [END_PANEL, 1.0, 2.0, 4.0, 8.0]
        while base[-1] < cap:
            base.append(base[-1] + 8.0)
        top = float(np.max(inv))
        while base[-1] < top:
            base.append(2.0 * base[-1])
        base = np.array(base)
    else:
        raise InvalidArgumentError(f"unknown profile {profile!r}")
    e = np.minimum(base[None, :], inv[:, None])
    return np.concatenate((e, inv[:, None]), axis=1)


def theta_nodes(rule: ThetaRule, sigma=None, profile="algebraic", half=False):
    """Nodes in u = 1 - s, scaled nodes u/sigma, and weights.

    With ``sigma`` None (or every entry >= 1) the global Gauss-Jacobi rule
    is returned.  Otherwise a graded composite rule on [0, 2] resolves an
    integrand concentrated at u ~ sigma: a Jacobi end panel [0, sigma/2],
    geometric (algebraic) or linear (gaussian) panels up to u = 1, and a
    Jacobi end panel for s in [-1, 0].
    Returns arrays of shape (N, M): u, r = u/sigma, W.
    """
    lam = rule.lam
    xs, ws = (rule.half_nodes, rule.half_weights) if half else (rule.nodes, rule.weights)
    if sigma is None:
        u = 1.0 - xs
        return u[None, :], None, ws[None, :]
    sigma = np.atleast_1d(np.asarray(sigma, float))
    if np.all(sigma >= PEAK_THRESHOLD):
        u = np.broadcast_to(1.0 - xs, (sigma.size, xs.size))
        return u, u / sigma[:, None], np.broadcast_to(ws, u.shape)
    p = rule.panel_order // 2 if half else rule.panel_order
    ev, ew = gauss_jacobi_end01(p, lam)
    gx, gw = gauss_legendre01(p)
    sig = np.minimum(sigma, 1.0)
    s_ = sig[:, None]
    # end panel [0, END_PANEL * sigma]
    r0 = np.broadcast_to(END_PANEL * ev, (sig.size, p))
    u0 = s_ * r0
    w0 = (END_PANEL * s_) ** lam * ew[None, :] * (2.0 - u0) ** (lam - 1.0)
    # interior panels
    e = _edges(sig, profile)
    a, b = e[:, :-1], e[:, 1:]
    r1 = a[:, :, None] + (b - a)[:, :, None] * gx[None, None, :]
    u1 = s_[:, :, None] * r1
    with np.errstate(invalid="ignore", divide="ignore"):
        w1 = (
            s_[:, :, None]
            * (b - a)[:, :, None]
            * gw[None, None, :]
            * u1 ** (lam - 1.0)
            * (2.0 - u1) ** (lam - 1.0)
        )
    w1 = np.where((b - a)[:, :, None] > 0, w1, 0.0)
    r1 = r1.reshape(sig.size, -1)
    u1 = u1.reshape(sig.size, -1)
    w1 = w1.reshape(sig.size, -1)
    # s in [-1, 0]: v = 1 + s, u = 2 - v
    u2 = np.broadcast_to(2.0 - ev, (sig.size, p))
    w2 = np.broadcast_to(ew * (2.0 - ev) ** (lam - 1.0), (sig.size, p))
    r2 = u2 / s_
    u = np.concatenate((u0, u1, u2), axis=1)
    r = np.concatenate((r0, r1, r2), axis=1)
    w = np.concatenate((w0, w1, w2), axis=1)
    return u, r, w


def integrate_theta(rule: ThetaRule, g: Callable, peak: Optional[float] = None, profile="algebraic"):
    """int_0^pi (sin th)^(2 lam - 1) g(cos th) dth with an error estimate.

    The estimate is the difference against the rule of half the order.
    ``peak`` is the width, in 1 - s, of a concentration of g at s = 1.
    """
    results = []
    for half in (False, True):
        u, _, w = theta_nodes(rule, None if peak is None else [peak], profile, half)
        s = 1.0 - u[0]
        vals = np.asarray(g(s), dtype=float) * np.ones_like(s)
        bad = ~np.isfinite(vals) & (w[0] > 0)
        if np.any(bad):
            node = float(s[np.flatnonzero(bad)[0]])
            raise EvaluationError(f"integrand is not finite at s={node!r}", node=node)
        results.append(float(np.sum(np.where(w[0] > 0, vals, 0.0) * w[0])))
    return QuadResult(results[0], abs(results[0] - results[1]))


@dataclass(frozen=True)
class HalfLineRule:
    """Panels between ``breakpoints`` plus geometric tail extension."""

    breakpoints: np.ndarray
    order: int = 10
    tol: float = HALFLINE_RTOL
    max_doublings: int = 200

    @classmethod
    def from_grid(cls, grid, **kw):
        return cls(np.asarray(grid.nodes, float), **kw)


def _panel_sum(f, br, q):
    x, w = gauss_legendre01(q)
    a, b = br[:-1], br[1:]
    y = a[:, None] + (b - a)[:, None] * x[None, :]
    vals = np.asarray(f(y.ravel()), float).reshape(y.shape)
    if not np.all(np.isfinite(vals)):
        i = np.flatnonzero(~np.isfinite(vals.ravel()))[0]
        raise EvaluationError(f"integrand is not finite at y={y.ravel()[i]!r}", node=y.ravel()[i])
    return float(np.sum((b - a)[:, None] * w[None, :] * vals))


def integrate_halfline(
    ctx: MeasureContext,
    f: Callable,
    rule: HalfLineRule,
    majorant: Optional[Callable] = None,
) -> QuadResult:
    """int_0^inf f(y) y^(2 lam) dy.

    ``majorant(y)`` must bound |f(y)| y^(2 lam) beyond the last breakpoint
    and decrease there; the tail past the truncation radius R is bounded
    by R M(R) / (a - 1), with a the local decay exponent of M.  Without
    a majorant, f is taken to vanish past the last breakpoint.
    """
    br = np.unique(np.asarray(rule.breakpoints, float))
    br = br[br > 0]
    if br.size == 0:
        raise InvalidArgumentError("half-line rule needs a positive breakpoint")
    near0 = br[0] * 2.0 ** -np.arange(40, 0, -1)
    br = np.concatenate(([0.0], near0, br))
    q = rule.order

    def g(y):
        return np.asarray(f(y), float) * y ** ctx.power

    hi = _panel_sum(g, br, q)
    lo = _panel_sum(g, br, max(q // 2, 2))
    tail = 0.0
    if majorant is not None:
        radius = br[-1]
        for _ in range(rule.max_doublings):
            m1 = float(majorant(radius))
            m2 = float(majorant(2.0 * radius))
            if not (m2 < m1) and m1 > 0:
                raise TruncationError(f"tail majorant not decreasing at R={radius:g}")
            if m1 == 0:
                tail = 0.0
                break
            decay = math.log2(m1 / m2) if m2 > 0 else np.inf
            tail = radius * m1 / (decay - 1.0) if decay > 1 else np.inf
            if tail <= rule.tol * max(abs(hi), 1e-300):
                break
            seg = np.array([radius, 2.0 * radius])
            hi += _panel_sum(g, seg, q)
            lo += _panel_sum(g, seg, max(q // 2, 2))
            radius *= 2.0
        else:
            raise TruncationError(f"tail bound {tail:g} still above tolerance at R={radius:g}")
    return QuadResult(hi, abs(hi - lo) + tail)
