"""Independent reference computations used by the tests.

Nothing here imports heatbv.  Each oracle takes a different route from the
library code it checks (high-precision series, spectral identities instead
of double integrals, brute force over lattice images, explicit rotations).
Values printed by these functions at the parameters used in the tests are
also frozen in ``FROZEN`` so a regression in either side is caught.
"""

from __future__ import annotations

import itertools
import math

import mpmath as mp
import numpy as np

# computed once with mpmath at 40 digits, see the functions below
FROZEN = {
    "sphere_kernel_diag_t0.5": 0.18862541759216445342,
    "sphere_kernel_t0.05_d1": 0.011890901584370892813,
    "circle_kernel_t0.1_d0.3": 0.71232602151386319799,
    "arc_F_t0.01": 2.2567583341910251478,
    "hemisphere_F_t0.01": 7.0779812220945460313,
    "hemisphere_F_t0.001": 7.0886335903789214817,
    "defect_cos_t0.01": 0.39800665003327785704,
}


def sphere_kernel(t, d, dps=30, L=400):
    with mp.workdps(dps):
        t = mp.mpf(t)
        c = mp.cos(mp.mpf(d))
        return float(mp.fsum((2 * l + 1) / (4 * mp.pi) * mp.e ** (-l * (l + 1) * t) * mp.legendre(l, c)
                             for l in range(L)))


def wrapped_gaussian(t, s, period=2 * math.pi, M=20):
    with mp.workdps(30):
        t, s, P = mp.mpf(t), mp.mpf(s), mp.mpf(period)
        return float(mp.fsum((4 * mp.pi * t) ** -0.5 * mp.e ** (-(s + m * P) ** 2 / (4 * t))
                             for m in range(-M, M + 1)))


def arc_functional(t, length=math.pi, J=4000):
    """``t^-1/2 * 2 int_A int_{A^c} p_t`` for an arc, via Fourier coefficients.

    ``2 int_A int_{A^c} p_t = 2 (|A| - <1_A, P_t 1_A>)`` and
    ``<1_A, P_t 1_A> = 2 pi sum_j exp(-j^2 t) |c_j|^2``.
    """
    with mp.workdps(30):
        t, L = mp.mpf(t), mp.mpf(length)
        s = mp.fsum(mp.e ** (-j * j * t) * (2 - 2 * mp.cos(j * L)) / (2 * mp.pi * j) ** 2
                    for j in range(1, J))
        return float(2 * (L - (L * L / (2 * mp.pi) + 4 * mp.pi * s)) / mp.sqrt(t))


def cap_functional(t, height=0.0, L=800):
    """Same identity on the sphere with the Legendre expansion of a cap."""
    with mp.workdps(30):
        t, c = mp.mpf(t), mp.mpf(height)
        P = [mp.legendre(l, c) for l in range(L + 2)]
        A = [(1 - c) / 2] + [(P[l - 1] - P[l + 1]) / 2 for l in range(1, L + 1)]
        s = mp.fsum(mp.e ** (-l * (l + 1) * t) * A[l] ** 2 * 4 * mp.pi / (2 * l + 1)
                    for l in range(L + 1))
        return float(2 * (2 * mp.pi * (1 - c) - s) / mp.sqrt(t))


def torus_distance_bruteforce(x, y, periods):
    """Minimum over the ``3^n`` nearest lattice translates."""
    x, y, P = (np.asarray(v, dtype=float) for v in (x, y, periods))
    best = np.inf
    for shift in itertools.product((-1, 0, 1), repeat=len(P)):
        d = np.linalg.norm(y + np.asarray(shift) * P - x)
        best = min(best, d)
    return best


def rodrigues(axis, angle, v):
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    v = np.asarray(v, dtype=float)
    return v * math.cos(angle) + np.cross(k, v) * math.sin(angle) + k * np.dot(k, v) * (1 - math.cos(angle))


def walk_mean_factor(h):
    """``E cos(sqrt(h) R)`` for Rayleigh ``R``: one step of the sphere walk on ``z``."""
    with mp.workdps(30):
        a = mp.sqrt(mp.mpf(h))
        return float(mp.quad(lambda r: mp.cos(a * r) * r * mp.e ** (-r * r / 2), [0, mp.inf]))


def wrapped_normal_cdf(x, var, period=2 * math.pi, M=12):
    """CDF on ``[0, period)`` of ``N(0, var)`` wrapped onto the circle."""
    from scipy.stats import norm
    x = np.asarray(x, dtype=float)
    sd = math.sqrt(var)
    out = np.zeros_like(x)
    for m in range(-M, M + 1):
        out += norm.cdf((x + m * period) / sd) - norm.cdf(m * period / sd)
    return out
