"""Independent reference values used by the acceptance suite and tests.

Nothing here is on a production path: closed forms at lam = 1, the
gamma-function value of the sine integral, and Richardson-extrapolated
finite differences of the kernel.
"""

from __future__ import annotations

import math

import numpy as np

from .kernels import poisson_eval
from .measure import MeasureContext


def sine_integral_gamma(lam: float) -> float:
    """int_0^pi sin^(2 lam - 1) = Gamma(lam) sqrt(pi) / Gamma(lam + 1/2), via math.gamma."""
    return math.gamma(lam) * math.sqrt(math.pi) / math.gamma(lam + 0.5)


def poisson_lam1(t, x, y):
    """Closed form of the lam = 1 Poisson kernel."""
    t, x, y = (np.asarray(a, float) for a in (t, x, y))
    return (4.0 * t / math.pi) / (((x - y) ** 2 + t * t) * ((x + y) ** 2 + t * t))


def poisson_lam1_derivs(t, x, y):
    """dt, dx, dy of the lam = 1 closed form, differentiated by hand."""
    t, x, y = (np.asarray(a, float) for a in (t, x, y))
    a = (x - y) ** 2 + t * t
    b = (x + y) ** 2 + t * t
    k = 4.0 / math.pi
    dt = k / (a * b) - k * t * (2 * t * b + 2 * t * a) / (a * b) ** 2
    dx = -k * t * (2 * (x - y) * b + 2 * (x + y) * a) / (a * b) ** 2
    dy = -k * t * (-2 * (x - y) * b + 2 * (x + y) * a) / (a * b) ** 2
    return dt, dx, dy


def heat_lam_half(t, x, y):
    """lam = 1/2 heat kernel (1/t) exp(-(x - y)^2 / 2t) e^(-z) I_0(z), z = xy/t.

    The Jacobi weight is flat at lam = 1/2, so the theta integral is
    pi I_0(z).  np.i0 overflows past z ~ 700; callers stay below that.
    """
    t, x, y = (np.asarray(a, float) for a in (t, x, y))
    z = x * y / t
    return np.exp(-((x - y) ** 2) / (2 * t) - z) * np.i0(z) / t


def _richardson(d1, d2, d3):
    r1 = (4.0 * d2 - d1) / 3.0
    r2 = (4.0 * d3 - d2) / 3.0
    return (16.0 * r2 - r1) / 15.0


def fd_steps(t, x, y):
    """Base steps (ht, hx, hy): relative in t, the kernel width in space.

    The kernel is an even analytic function of x and of y, so spatial
    stencils may cross zero: points x - h < 0 are evaluated at |x - h|.
    """
    t, x, y = (np.asarray(a, float) for a in (t, x, y))
    w = np.sqrt((x - y) ** 2 + t * t)
    h = 1e-2 * w
    # keep every stencil point (down to h/4) away from zero
    hx = np.where(np.abs(np.abs(x / h) - np.array([[1.0], [0.5], [0.25]])).min(axis=0) < 1e-3, 1.1 * h, h)
    hy = np.where(np.abs(np.abs(y / h) - np.array([[1.0], [0.5], [0.25]])).min(axis=0) < 1e-3, 1.1 * h, h)
    return 1e-2 * t, hx, hy


def fd_derivative(ctx: MeasureContext, which: str, t, x, y):
    """Central differences of the kernel with two Richardson levels.

    ``which`` is one of dt, dx, dy, dxdt, dydt; mixed derivatives use the
    four-point stencil in (t, space) with both steps halved together.
    """
    t, x, y = (np.atleast_1d(np.asarray(a, float)) for a in (t, x, y))
    ht, hx, hy = fd_steps(t, x, y)

    def p(tt, xx, yy):
        return poisson_eval(ctx, "p", tt, np.abs(xx), np.abs(yy), check=False).value

    levels = []
    for k in range(3):
        s = 0.5**k
        if which == "dt":
            h = ht * s
            d = (p(t + h, x, y) - p(t - h, x, y)) / (2 * h)
        elif which == "dx":
            h = hx * s
            d = (p(t, x + h, y) - p(t, x - h, y)) / (2 * h)
        elif which == "dy":
            h = hy * s
            d = (p(t, x, y + h) - p(t, x, y - h)) / (2 * h)
        elif which in ("dxdt", "dydt"):
            k_ = ht * s
            if which == "dxdt":
                h = hx * s
                pp = p(t + k_, x + h, y) - p(t + k_, x - h, y) - p(t - k_, x + h, y) + p(t - k_, x - h, y)
            else:
                h = hy * s
                pp = p(t + k_, x, y + h) - p(t + k_, x, y - h) - p(t - k_, x, y + h) + p(t - k_, x, y - h)
            d = pp / (4 * h * k_)
        else:
            raise ValueError(f"unknown derivative {which!r}")
        levels.append(d)
    return _richardson(*levels)
