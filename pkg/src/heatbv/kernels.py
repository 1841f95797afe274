"""Heat kernels of the model manifolds and the heat semigroup on grids.

The kernel is that of ``P_t = exp(t * Laplacian)``.  On flat manifolds it is
evaluated either from its Fourier series or from the wrapped-Gaussian image
sum (the two are Poisson duals of each other); on the unit sphere from the
Legendre series ``sum_l (2l+1)/(4 pi) exp(-l(l+1) t) P_l(cos d)``.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import erf

from .errors import DomainError, ProfileError, TruncationNotReached
from .manifolds import (
    Kind,
    ManifoldDescriptor,
    QuadratureGrid,
    distance,
)

__all__ = [
    "TruncationPolicy",
    "SpectralKernel",
    "KernelProfile",
    "KernelComparisonReport",
    "eval_heat_kernel",
    "eval_gaussian_kernel",
    "gaussian_radial",
    "apply_semigroup",
    "semigroup_defect",
    "compare_kernels",
    "legendre_table",
    "cutoff_radius",
]

# exp(-45) ~ 3e-20: beyond this many kernel widths nothing is representable
# relative to the peak value.
_GAUSS_LOG_CUT = 45.0


@dataclass(frozen=True)
class TruncationPolicy:
    tau_cut: float = 1e-15
    l_max: int = 100_000


def cutoff_radius(t: float, log_cut: float = _GAUSS_LOG_CUT) -> float:
    """Distance beyond which ``exp(-d^2/4t)`` drops below ``exp(-log_cut)``."""
    return float(np.sqrt(4.0 * t * log_cut))


def gaussian_radial(t: float, d, n: int) -> np.ndarray:
    """The Gaussian surrogate ``(4 pi t)^(-n/2) exp(-d^2 / 4t)``."""
    d = np.asarray(d, dtype=float)
    return (4.0 * np.pi * t) ** (-0.5 * n) * np.exp(-(d * d) / (4.0 * t))


def legendre_table(c, L: int) -> np.ndarray:
    """Rows ``P_0(c) .. P_L(c)`` by the three-term recurrence."""
    c = np.asarray(c, dtype=float)
    out = np.empty((L + 1,) + c.shape)
    out[0] = 1.0
    if L >= 1:
        out[1] = c
    for l in range(1, L):
        out[l + 1] = ((2 * l + 1) * c * out[l] - l * out[l - 1]) / (l + 1)
    return out


def _first_below(terms: np.ndarray, tau: float) -> int | None:
    """First index whose term is below ``tau`` times the running sum."""
    partial = np.cumsum(terms)
    hit = np.nonzero(terms < tau * partial)[0]
    return int(hit[0]) if hit.size else None


class KernelProfile:
    """Cubic-spline table of a radial kernel ``d -> p_t(d)``.

    The table covers ``[0, d_max]`` where ``d_max`` is the smaller of the
    manifold diameter and the Gaussian cutoff radius; beyond it values come
    from direct series evaluation.  Construction validates the interpolant
    at every cell midpoint against direct evaluation.
    """

    def __init__(self, kernel: "SpectralKernel", t: float, samples: int = 4096,
                 budget: float = 1e-9):
        m = kernel.manifold
        if m.kind is Kind.FLAT_TORUS:
            raise DomainError("torus kernels are not radial; use displacement()")
        self.t = float(t)
        self._kernel = kernel
        diam = m.diameter
        self.d_max = min(diam, cutoff_radius(t))
        self.distances = np.linspace(0.0, self.d_max, samples)
        self.values = kernel.radial(t, self.distances)
        right = (1, 0.0) if self.d_max >= diam else "not-a-knot"
        self._spline = CubicSpline(self.distances, self.values, bc_type=((1, 0.0), right))
        mid = 0.5 * (self.distances[1:] + self.distances[:-1])
        err = np.max(np.abs(self._spline(mid) - kernel.radial(t, mid)))
        self.max_interp_error = float(err / self.values[0])
        if self.max_interp_error > budget:
            raise ProfileError(
                f"profile interpolation error {self.max_interp_error:.3g} exceeds {budget:.1g}")

    def __call__(self, d) -> np.ndarray:
        d = np.asarray(d, dtype=float)
        out = self._spline(np.minimum(d, self.d_max))
        far = d > self.d_max
        if np.any(far):
            out = np.where(far, 0.0, out)
            out[far] = self._kernel.radial(self.t, d[far])
        return out

    def derivative(self, d) -> np.ndarray:
        return self._spline(np.asarray(d, dtype=float), 1)


class SpectralKernel:
    """Exact heat kernel of a model manifold with an explicit truncation policy.

    Parameters
    ----------
    manifold : ManifoldDescriptor
    truncation : TruncationPolicy
        Relative term cutoff and hard cap on the number of series terms.
    t_switch : float, optional
        Flat manifolds only: below this time (scaled by ``(period/2pi)^2``
        per axis) the wrapped-Gaussian image sum replaces the Fourier series.
    """

    def __init__(self, manifold: ManifoldDescriptor,
                 truncation: TruncationPolicy = TruncationPolicy(),
                 t_switch: float = 0.15, profile_samples: int = 4096,
                 profile_budget: float = 1e-9):
        self.manifold = manifold
        self.truncation = truncation
        self.t_switch = t_switch
        self.profile_samples = profile_samples
        self.profile_budget = profile_budget
        self._profiles: dict[float, KernelProfile] = {}
        self._lock = threading.Lock()

    # -- series lengths -------------------------------------------------
    def n_terms(self, t: float, period: float = 2 * np.pi) -> int:
        """Highest retained frequency (flat) or Legendre degree (sphere)."""
        tau, cap = self.truncation.tau_cut, self.truncation.l_max
        if t <= 0:
            raise DomainError("t must be positive")
        if self.manifold.kind is Kind.SPHERE2:
            bound = int(np.sqrt(np.log(1.0 / tau) / t)) + 2
            ls = np.arange(min(bound, cap) + 1)
            terms = (2 * ls + 1) * np.exp(-ls * (ls + 1.0) * t)
        else:
            w1 = (2 * np.pi / period) ** 2
            bound = int(np.sqrt(np.log(1.0 / tau) / (w1 * t))) + 2
            js = np.arange(min(bound, cap) + 1)
            terms = np.exp(-w1 * js * js * t)
            terms[1:] *= 2.0
        hit = _first_below(terms, tau)
        if hit is None:
            raise TruncationNotReached(
                f"series needs more than {cap} terms at t={t:g}; use the image sum")
        return hit

    def series_diagnostics(self, t: float) -> dict:
        """Which series evaluates the kernel at ``t`` and how many terms it keeps."""
        m = self.manifold
        if not m.is_flat:
            return {"series": "legendre", "terms": self.n_terms(t)}
        P = max(m.periods)
        if self._use_images(t, P, "auto"):
            M = int(np.ceil(0.5 + np.sqrt(4 * t * _GAUSS_LOG_CUT) / P))
            return {"series": "images", "terms": 2 * M + 1}
        return {"series": "spectral", "terms": self.n_terms(t, P)}

    # -- flat manifolds ---------------------------------------------------
    def _use_images(self, t: float, period: float, method: str) -> bool:
        if method == "spectral":
            return False
        if method == "images":
            return True
        if method != "auto":
            raise ValueError(f"unknown method {method!r}")
        return t < self.t_switch * (period / (2 * np.pi)) ** 2

    def axis_kernel(self, t: float, s, period: float = 2 * np.pi,
                    method: str = "auto") -> np.ndarray:
        """One-dimensional periodic heat kernel at displacement ``s``."""
        s = np.asarray(s, dtype=float)
        if t <= 0:
            raise DomainError("t must be positive")
        s = s - period * np.round(s / period)
        if self._use_images(t, period, method):
            M = int(np.ceil(0.5 + np.sqrt(4 * t * _GAUSS_LOG_CUT) / period))
            out = np.zeros_like(s)
            for mm in range(-M, M + 1):
                u = s + mm * period
                out += np.exp(-(u * u) / (4 * t))
            return out / np.sqrt(4 * np.pi * t)
        J = self.n_terms(t, period)
        out = np.ones_like(s)
        for j in range(1, J + 1):
            w = 2 * np.pi * j / period
            out += 2.0 * np.exp(-w * w * t) * np.cos(w * s)
        return out / period

    def axis_interval_mass(self, t: float, x, start: float, length: float,
                           period: float = 2 * np.pi, method: str = "auto") -> np.ndarray:
        """``int_start^{start+length} k_t(x - y) dy`` on a circle of given period."""
        x = np.asarray(x, dtype=float)
        if length >= period:
            return np.ones_like(x)
        u = np.mod(x - start, period)
        if self._use_images(t, period, method):
            M = int(np.ceil(0.5 + np.sqrt(4 * t * _GAUSS_LOG_CUT) / period)) + 1
            rt = np.sqrt(4 * t)
            out = np.zeros_like(u)
            for mm in range(-M, M + 1):
                out += erf((u + mm * period) / rt) - erf((u - length + mm * period) / rt)
            return 0.5 * out
        J = self.n_terms(t, period)
        out = np.full_like(u, length / period)
        for j in range(1, J + 1):
            w = 2 * np.pi * j / period
            out += (2.0 / (period * w)) * np.exp(-w * w * t) * (np.sin(w * u) - np.sin(w * (u - length)))
        return out

    def displacement(self, t: float, s, method: str = "auto") -> np.ndarray:
        """Flat kernel at displacement vectors ``s`` of shape ``(..., dim)``."""
        m = self.manifold
        s = np.asarray(s, dtype=float)
        out = np.ones(s.shape[:-1])
        for i, P in enumerate(m.periods):
            out = out * self.axis_kernel(t, s[..., i], P, method)
        return out

    # -- radial (circle and sphere) ---------------------------------------
    def radial(self, t: float, d, method: str = "auto") -> np.ndarray:
        """Kernel as a function of geodesic distance (circle and sphere)."""
        m = self.manifold
        d = np.asarray(d, dtype=float)
        if m.kind is Kind.CIRCLE:
            return self.axis_kernel(t, d, m.periods[0], method)
        if m.kind is Kind.FLAT_TORUS:
            raise DomainError("torus kernel is not a function of distance alone")
        L = self.n_terms(t)
        c = np.cos(d)
        p_prev = np.ones_like(c)
        out = np.ones_like(c)  # l = 0 term times 4 pi
        if L >= 1:
            p_cur = c.copy()
            out = out + 3.0 * np.exp(-2.0 * t) * p_cur
            for l in range(1, L):
                p_next = ((2 * l + 1) * c * p_cur - l * p_prev) / (l + 1)
                p_prev, p_cur = p_cur, p_next
                ll = l + 1
                out = out + (2 * ll + 1) * np.exp(-ll * (ll + 1.0) * t) * p_cur
        return out / (4 * np.pi)

    def __call__(self, t: float, x, y, method: str = "auto") -> np.ndarray:
        if t <= 0:
            raise DomainError("t must be positive")
        m = self.manifold
        if m.kind is Kind.FLAT_TORUS:
            return self.displacement(t, np.asarray(y, float) - np.asarray(x, float), method)
        if m.kind is Kind.CIRCLE:
            s = (np.asarray(y, float) - np.asarray(x, float))[..., 0]
            return self.axis_kernel(t, s, m.periods[0], method)
        return self.radial(t, distance(m, x, y), method)

    def diagonal(self, t: float) -> float:
        m = self.manifold
        if m.kind is Kind.SPHERE2:
            return float(self.radial(t, 0.0))
        return float(self.displacement(t, np.zeros(m.dim)))

    def profile(self, t: float) -> KernelProfile:
        """Distance-profile table for ``t``, built once and then shared."""
        t = float(t)
        prof = self._profiles.get(t)
        if prof is None:
            with self._lock:
                prof = self._profiles.get(t)
                if prof is None:
                    prof = KernelProfile(self, t, self.profile_samples, self.profile_budget)
                    self._profiles[t] = prof
        return prof


def eval_heat_kernel(k: SpectralKernel, t: float, x, y, method: str = "auto") -> np.ndarray:
    return k(t, x, y, method)


def eval_gaussian_kernel(m: ManifoldDescriptor, t: float, x, y) -> np.ndarray:
    """``(4 pi t)^(-n/2) exp(-d(x,y)^2 / 4t)`` with the geodesic distance."""
    if t <= 0:
        raise DomainError("t must be positive")
    return gaussian_radial(t, distance(m, x, y), m.dim)


# -- semigroup on grids -------------------------------------------------------

def _kernel_quadrature(k: SpectralKernel, t: float, values: np.ndarray,
                       grid: QuadratureGrid, chunk: int = 512) -> np.ndarray:
    m = grid.manifold
    if m.is_flat:
        # circulant structure: circular convolution with the sampled kernel
        shape = grid.shape
        offs = [np.fft.fftfreq(n, 1.0 / n) * (P / n) for n, P in zip(shape, m.periods)]
        mesh = np.meshgrid(*offs, indexing="ij")
        disp = np.stack(mesh, axis=-1)
        kern = k.displacement(t, disp) * grid.weights[0]
        f = values.reshape(shape)
        out = np.fft.ifftn(np.fft.fftn(kern) * np.fft.fftn(f)).real
        return out.ravel()
    prof = k.profile(t)
    wf = grid.weights * values
    out = np.empty(grid.size)
    for s in range(0, grid.size, chunk):
        xs = grid.nodes[s:s + chunk]
        d = distance(m, xs[:, None, :], grid.nodes[None, :, :])
        out[s:s + chunk] = prof(d) @ wf
    return out


def apply_semigroup(k: SpectralKernel, t: float, f, grid: QuadratureGrid) -> np.ndarray:
    """Values of ``P_t f`` on the grid nodes.

    Eigen-components of ``f`` decay exactly by ``exp(-lambda t)``; indicator
    components are smoothed by kernel quadrature on the grid.
    """
    if t <= 0:
        raise DomainError("t must be positive")
    out = np.zeros(grid.size)
    for coef, part in f.linear_parts():
        evolved = part.heat_evolved(t)
        if evolved is not None:
            out += coef * evolved(grid.nodes)
        else:
            out += coef * _kernel_quadrature(k, t, part(grid.nodes), grid)
    return out


def semigroup_defect(k: SpectralKernel, t: float, f, grid: QuadratureGrid) -> float:
    """``t^(-1/2) * ||P_t f - f||_{L^1}`` on the grid."""
    diff = apply_semigroup(k, t, f, grid) - f(grid.nodes)
    return grid.integrate(np.abs(diff)) / np.sqrt(t)


@dataclass(frozen=True)
class KernelComparisonReport:
    """Exact kernel versus the ball-restricted Gaussian surrogate at one ``t``.

    ``on_diag_ratio`` is ``(4 pi t)^(n/2) p_t(x, x)``; the manifolds are
    homogeneous so it does not depend on ``x``.  ``weighted_error`` is the
    scaled double integral of ``|f(x)-f(y)| |p_t - 1_B p~_t|`` for the field
    named in ``field_id``.
    """

    t: float
    ball_radius: float
    sup_abs_error: float
    weighted_error: float
    on_diag_ratio: float
    field_id: str = ""

    def as_dict(self) -> dict:
        return dict(t=self.t, ball_radius=self.ball_radius, sup_abs_error=self.sup_abs_error,
                    weighted_error=self.weighted_error, on_diag_ratio=self.on_diag_ratio,
                    field_id=self.field_id)


def compare_kernels(k: SpectralKernel, t: float, eps: float, grid: QuadratureGrid,
                    f=None, n_sources: int = 16) -> KernelComparisonReport:
    m = k.manifold
    if not 0 < eps < m.injectivity_radius:
        raise DomainError("ball radius must lie in (0, injectivity radius)")
    idx = np.linspace(0, grid.size - 1, min(n_sources, grid.size)).astype(int)
    sup = 0.0
    for i in idx:
        x = grid.nodes[i]
        d = distance(m, x[None, :], grid.nodes)
        near = d <= eps
        if m.is_flat:
            exact = k(t, x[None, :], grid.nodes[near])
        else:
            exact = k.profile(t)(d[near])
        sup = max(sup, float(np.max(np.abs(exact - gaussian_radial(t, d[near], m.dim)))))
    ratio = (4 * np.pi * t) ** (0.5 * m.dim) * k.diagonal(t)

    from .fields import canonical_field
    from .functionals import kernel_difference_functional

    if f is None:
        f = canonical_field(m)
    weighted = kernel_difference_functional(k, f, t, eps, grid)
    return KernelComparisonReport(float(t), float(eps), sup, float(weighted), float(ratio), f.id)
