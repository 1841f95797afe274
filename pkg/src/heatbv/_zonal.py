"""Ring engine for zonal fields on the unit sphere.

For ``f(x) = g(<a, x>)`` the inner integral ``int |f(x) - f(y)|^p w(d(x,y)) dmu(y)``
depends on ``x`` only through ``z = <a, x>``.  In geodesic polar coordinates
about ``x`` it becomes ``int w(r) sin(r) Psi(z, r) dr`` where ``Psi`` integrates
over the geodesic circle of radius ``r``.  On that circle
``z_y = z cos r + sqrt(1 - z^2) sin r cos(psi)``.
"""

from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi


def _cos_rule(n: int):
    """Gauss-Legendre in ``beta`` for ``r = a + (b-a)(1 - cos beta)/2``."""
    x, w = np.polynomial.legendre.leggauss(n)
    beta = 0.5 * np.pi * (x + 1.0)
    wb = 0.5 * np.pi * w
    return 0.5 * (1.0 - np.cos(beta)), 0.5 * np.sin(beta) * wb


def _circle_measure_above(u, A, B):
    """Measure of ``psi in [0, 2pi)`` with ``A + B cos(psi) > u``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(B > 0, (u - A) / np.where(B > 0, B, 1.0), np.where(A > u, -2.0, 2.0))
    return 2.0 * np.arccos(np.clip(q, -1.0, 1.0))


def _psi_steps(prof, z, A, B, p):
    steps = sorted(prof.steps)
    us = [u for u, _ in steps]
    gx = float(prof(z))
    # value on each piece of the z-line cut at the thresholds
    vals = [prof.const]
    for _, c in steps:
        vals.append(vals[-1] + c)
    mu = [np.full_like(A, TWO_PI)] + [_circle_measure_above(u, A, B) for u in us] + [np.zeros_like(A)]
    out = np.zeros_like(A)
    for j, v in enumerate(vals):
        d = abs(gx - v)
        if d != 0.0:
            out += d ** p * (mu[j] - mu[j + 1])
    return out


def _psi_linear(slope, alpha, beta, p, n=32):
    """``|slope|^p int_0^{2pi} |alpha - beta cos psi|^p dpsi``."""
    a, b = np.abs(alpha), beta
    inside = a < b
    with np.errstate(divide="ignore", invalid="ignore"):
        star = np.arccos(np.clip(np.where(b > 0, alpha / np.where(b > 0, b, 1.0), 0.0), -1, 1))
    if p == 1.0:
        val = np.where(inside, 2.0 * (2.0 * b * np.sin(star) + alpha * (np.pi - 2.0 * star)),
                       TWO_PI * a)
    elif p == 2.0:
        val = TWO_PI * (alpha * alpha + 0.5 * b * b)
    else:
        x, w = np.polynomial.legendre.leggauss(n)
        val = np.zeros_like(alpha)
        lo = np.where(inside, star, np.pi)
        for s, e in ((np.zeros_like(lo), lo), (lo, np.full_like(lo, np.pi))):
            psi = 0.5 * (s + e)[:, None] + 0.5 * (e - s)[:, None] * x
            f = np.abs(alpha[:, None] - b[:, None] * np.cos(psi)) ** p
            val += (0.5 * (e - s)) * (f @ w)
        val *= 2.0
    return abs(slope) ** p * val


def _psi_general(prof, z, A, B, p, n=256):
    x, w = np.polynomial.legendre.leggauss(n)
    psi = 0.5 * np.pi * (x + 1.0)
    zy = A[:, None] + B[:, None] * np.cos(psi)
    f = np.abs(float(prof(z)) - prof(zy)) ** p
    return np.pi * (f @ w)


def critical_radii(prof, z):
    s = np.sqrt(max(0.0, 1.0 - z * z))
    th = np.arccos(np.clip(z, -1, 1))
    out = []
    for u, _ in prof.steps:
        tu = np.arccos(np.clip(u, -1, 1))
        out += [abs(th - tu), min(th + tu, TWO_PI - th - tu)]
    if prof.slope != 0.0:
        out.append(2.0 * np.arctan2(s, abs(z)))
    return out


def ring_integrals(prof, zs, weight, r_lo: float, r_hi: float, p: float,
                   breaks=(), n_seg: int = 48) -> np.ndarray:
    """``I(z) = int_{r_lo}^{r_hi} weight(r) sin(r) Psi(z, r) dr`` for each ring ``z``."""
    frac, wfrac = _cos_rule(n_seg)
    out = np.empty(len(zs))
    for i, z in enumerate(zs):
        s = np.sqrt(max(0.0, 1.0 - z * z))
        cuts = [c for c in list(critical_radii(prof, z)) + list(breaks) if r_lo < c < r_hi]
        edges = np.unique(np.concatenate([[r_lo], cuts, [r_hi]]))
        a, b = edges[:-1, None], edges[1:, None]
        r = (a + (b - a) * frac).ravel()
        wr = ((b - a) * wfrac).ravel()
        A = z * np.cos(r)
        B = s * np.sin(r)
        if prof.slope == 0.0:
            psi = _psi_steps(prof, z, A, B, p)
        elif not prof.steps:
            psi = _psi_linear(prof.slope, z - A, B, p)
        else:
            psi = _psi_general(prof, z, A, B, p)
        out[i] = np.sum(wr * weight(r) * np.sin(r) * psi)
    return out
