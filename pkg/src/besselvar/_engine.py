"""Compiled hot loops: transfer matrices of the semigroups and the
rho-variation dynamic program."""

from __future__ import annotations

import math

import numpy as np
from numba import njit

POISSON = 0
HEAT = 1
# heat kernel integrand is below exp(-700) past this many sqrt(t)
HEAT_CUTOFF = 38.0
# geometric levels added toward y = 0
ZERO_LEVELS = 60


@njit(cache=True)
def _log_factor(z, coeffs, zmin, width, asym):
    npieces = coeffs.shape[0]
    if z < zmin:
        return asym[0, 0] + asym[0, 1] * z + asym[0, 2] * math.exp(asym[0, 3] * z)
    if z >= zmin + width * npieces:
        return asym[1, 0] + asym[1, 1] * z + asym[1, 2] * math.exp(asym[1, 3] * z)
    k = int((z - zmin) / width)
    if k >= npieces:
        k = npieces - 1
    s = 2.0 * (z - zmin - k * width) / width - 1.0
    b1 = 0.0
    b2 = 0.0
    for j in range(coeffs.shape[1] - 1, 0, -1):
        b1, b2 = 2.0 * s * b1 - b2 + coeffs[k, j], b1
    return s * b1 - b2 + coeffs[k, 0]


@njit(cache=True)
def log_kernel(kind, lam, log_c0, t, x, y, coeffs, zmin, width, asym):
    """log of the kernel at (t, x, y); log_c0 is the constant prefactor."""
    if kind == POISSON:
        c = (x - y) * (x - y) + t * t
        lc = math.log(c)
        z = lc - math.log(2.0 * x * y)
        return log_c0 + math.log(t) - (lam + 1.0) * lc + _log_factor(z, coeffs, zmin, width, asym)
    z = math.log(x * y / t)
    return (
        log_c0
        - (lam + 0.5) * math.log(t)
        - (x - y) * (x - y) / (2.0 * t)
        + _log_factor(z, coeffs, zmin, width, asym)
    )


@njit(cache=True)
def log_kernel_many(kind, lam, log_c0, t, x, y, coeffs, zmin, width, asym):
    out = np.empty(t.size)
    for i in range(t.size):
        out[i] = log_kernel(kind, lam, log_c0, t[i], x[i], y[i], coeffs, zmin, width, asym)
    return out


@njit(cache=True)
def _breakpoints(kind, t, x, nodes, upper):
    """Panel edges for integrating the kernel at (t, x) against hat functions."""
    n0 = nodes[0]
    if kind == POISSON:
        w = t
        step = 2.0
        lo_cut = 0.0
        hi_cut = upper
    else:
        w = math.sqrt(t)
        step = math.sqrt(2.0)
        lo_cut = max(0.0, x - HEAT_CUTOFF * w)
        hi_cut = x + HEAT_CUTOFF * w
    buf = np.empty(nodes.size + 2 * 400 + ZERO_LEVELS + 4)
    m = 0
    for i in range(nodes.size):
        if nodes[i] > lo_cut and nodes[i] < hi_cut:
            buf[m] = nodes[i]
            m += 1
    d = w / 16.0
    for _ in range(400):
        if x + d < hi_cut:
            buf[m] = x + d
            m += 1
        if x - d > lo_cut:
            buf[m] = x - d
            m += 1
        if x + d >= hi_cut and x - d <= lo_cut:
            break
        d *= step
    g = min(n0, x)
    if lo_cut == 0.0:
        for k in range(1, ZERO_LEVELS + 1):
            buf[m] = g * 2.0 ** (-k)
            m += 1
    buf[m] = x
    m += 1
    buf[m] = lo_cut
    m += 1
    buf[m] = hi_cut
    m += 1
    out = np.sort(buf[:m])
    # drop duplicates
    keep = np.empty(m, dtype=np.bool_)
    keep[0] = True
    for i in range(1, m):
        keep[i] = out[i] > out[i - 1]
    return out[keep]


@njit(cache=True)
def transfer_rows(kind, lam, log_c0, t, xs, nodes, upper, coeffs, zmin, width, asym, gx, gw, lx, lw, out):
    """Accumulate int K_t(x, y) phi_j(y) y^(2 lam) dy into out[ix, j].

    Column 0 is the constant extension left of the first node, columns
    1..n the hat functions of the nodes, column n + 1 the constant
    extension right of the last node.  Poisson panels that are short
    compared with their distance to the peak and to y = 0 use the low
    order rule (lx, lw).
    """
    nn = nodes.size
    p = 2.0 * lam
    for ix in range(xs.size):
        x = xs[ix]
        br = _breakpoints(kind, t, x, nodes, upper)
        cell = 0
        for ib in range(br.size - 1):
            a = br[ib]
            b = br[ib + 1]
            h = b - a
            rx, rw = gx, gw
            if kind == POISSON:
                dist = max(a - x, x - b, t)
                if h <= 0.25 * min(dist, a):
                    rx, rw = lx, lw
            for q in range(rx.size):
                y = a + h * rx[q]
                if y <= 0.0:
                    continue
                val = math.exp(
                    log_kernel(kind, lam, log_c0, t, x, y, coeffs, zmin, width, asym)
                    + p * math.log(y)
                ) * (h * rw[q])
                if y < nodes[0]:
                    out[ix, 0] += val
                elif y > nodes[nn - 1]:
                    out[ix, nn + 1] += val
                else:
                    while cell < nn - 2 and nodes[cell + 1] < y:
                        cell += 1
                    theta = (y - nodes[cell]) / (nodes[cell + 1] - nodes[cell])
                    out[ix, cell + 1] += (1.0 - theta) * val
                    out[ix, cell + 2] += theta * val


@njit(cache=True)
def _pow_diff(a, b, rho):
    return abs(b - a) ** rho


@njit(cache=True)
def extrema_indices(a):
    """Endpoints plus weak local extrema of a sequence.

    For rho >= 1 some optimal subsequence of the rho-variation uses only
    these indices.
    """
    n = a.size
    keep = np.zeros(n, dtype=np.bool_)
    keep[0] = True
    keep[n - 1] = True
    for i in range(1, n - 1):
        lo = a[i] <= a[i - 1] and a[i] <= a[i + 1]
        hi = a[i] >= a[i - 1] and a[i] >= a[i + 1]
        keep[i] = lo or hi
    return np.flatnonzero(keep)


@njit(cache=True)
def variation_dp(a, rho):
    """Optimal subsequence for best(i) = max_{j>i} |a_j - a_i|^rho + best(j).

    best(0) >= best(j) for every j, so the path starts at index 0.
    """
    n = a.size
    best = np.zeros(n)
    nxt = -np.ones(n, dtype=np.int64)
    for i in range(n - 2, -1, -1):
        bi = 0.0
        ni = -1
        for j in range(i + 1, n):
            v = _pow_diff(a[i], a[j], rho) + best[j]
            if v > bi:
                bi = v
                ni = j
        best[i] = bi
        nxt[i] = ni
    start = 0
    path = np.empty(n, dtype=np.int64)
    m = 0
    i = start
    while i >= 0:
        path[m] = i
        m += 1
        i = nxt[i]
    return path[:m]


@njit(cache=True)
def subsequence_sum(a, idx, rho):
    s = 0.0
    for k in range(idx.size - 1):
        s += _pow_diff(a[idx[k]], a[idx[k + 1]], rho)
    return s


@njit(cache=True)
def variation_many(seqs, rho):
    """rho-variation of each row (extrema-reduced DP)."""
    out = np.empty(seqs.shape[0])
    for r in range(seqs.shape[0]):
        a = seqs[r]
        ext = extrema_indices(a)
        b = a[ext]
        path = variation_dp(b, rho)
        out[r] = subsequence_sum(b, path, rho) ** (1.0 / rho)
    return out
