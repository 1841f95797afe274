"""Heat-semigroup functionals and their small-time limits.

The central quantity is

    F_p(t) = t^(-p/2) * int int |f(x) - f(y)|^p p_t(x, y) dmu(y) dmu(x),

which for ``p = 1`` tends to ``(2/sqrt(pi)) * ||Df||(M)`` and for ``p > 1``
to ``c_p * int |grad f|^p`` with ``c_p = 2^p Gamma((1+p)/2) / sqrt(pi)``.

Flat manifolds use the circulant structure of uniform grids (see ``_flat``);
the sphere integrates zonal fields ring by ring (see ``_zonal``) and falls back
to per-node polar quadrature for anything else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate

from . import _flat, _zonal
from .errors import (ConfigError, DomainError, IllConditionedFit, ResolutionTooCoarse,
                     UnsupportedField)
from .fields import (
    Constant,
    ScalarField,
    VariationReference,
    _cell_quadrature,
    total_variation_reference,
)
from .kernels import SpectralKernel, cutoff_radius, gaussian_radial
from .manifolds import (
    Kind,
    ManifoldDescriptor,
    QuadratureGrid,
    build_quadrature,
    exp_map,
    tangent_frame,
)

__all__ = [
    "MAX_NODES",
    "sobolev_constant",
    "sphere_average_abs_moment",
    "gaussian_polar_moment",
    "required_resolution",
    "check_resolution",
    "bv_functional",
    "bv_functional_gaussian_ball",
    "tail_contribution",
    "kernel_difference_functional",
    "degiorgi_functional",
    "ExtrapolationResult",
    "extrapolate_limit",
    "FunctionalConfig",
    "ConvergenceRow",
    "ConvergenceReport",
    "default_t_grid",
    "run_convergence",
    "PIPELINES",
]

MAX_NODES = 1 << 22
# far-tail radius: exp(-745) is the smallest positive double
_TAIL_LOG_CUT = 745.0
PIPELINES = ("exact-kernel", "gaussian-ball", "degiorgi", "monte-carlo", "sobolev")


# -- constants ----------------------------------------------------------------

def sobolev_constant(p: float) -> float:
    """``c_p = 2^p Gamma((1+p)/2) / sqrt(pi)``; ``c_1 = 2/sqrt(pi)``."""
    if p < 1:
        raise ValueError("p must be at least 1")
    return math.exp(p * math.log(2.0) + math.lgamma((1.0 + p) / 2.0) - 0.5 * math.log(math.pi))


def sphere_average_abs_moment(p: float, n: int) -> float:
    """Average of ``|<e, v>|^p`` over the unit sphere ``S^(n-1)`` in R^n.

    Computed by 1-D quadrature over the angle between ``v`` and ``e``.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    dens = lambda th: np.sin(th) ** (n - 2)
    num = sum(integrate.quad(lambda th: abs(np.cos(th)) ** p * dens(th), a, b,
                             epsabs=0, epsrel=2e-14, limit=200)[0]
              for a, b in ((0, np.pi / 2), (np.pi / 2, np.pi)))
    den = integrate.quad(dens, 0, np.pi, epsabs=0, epsrel=2e-14, limit=200)[0]
    return num / den


def gaussian_polar_moment(p: float, n: int) -> float:
    """``E|Z|^p`` for ``Z`` with density ``(4 pi)^(-n/2) exp(-|z|^2/4)`` on R^n.

    The radial factor of the small-time limit in polar coordinates; times
    :func:`sphere_average_abs_moment` it reproduces :func:`sobolev_constant`.
    """
    area = 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)
    f = lambda r: r ** (p + n - 1) * math.exp(-r * r / 4.0)
    val = integrate.quad(f, 0, np.inf, epsabs=0, epsrel=2e-14, limit=200)[0]
    return area * val / (4.0 * math.pi) ** (n / 2)


# -- resolution rule ------------------------------------------------------------

def required_resolution(m: ManifoldDescriptor, t: float, spacing_factor: float = 4.0,
                        max_nodes: int = MAX_NODES) -> int:
    """Smallest even per-dimension resolution with spacing ``<= sqrt(t)/spacing_factor``."""
    if spacing_factor < 4.0:
        raise ConfigError("spacing factor below 4 violates the resolution rule")
    h = math.sqrt(t) / spacing_factor
    span = max(m.periods) if m.is_flat else math.pi
    n = max(4, math.ceil(span / h * (1 - 1e-12)))
    n += n % 2
    total = n ** m.dim if m.is_flat else 2 * n * n
    if total > max_nodes:
        raise ResolutionTooCoarse(
            f"t={t:g} needs {total} nodes, above the cap of {max_nodes}")
    return n


def check_resolution(grid: QuadratureGrid, t: float) -> None:
    limit = math.sqrt(t) / 4.0
    if grid.spacing > limit * (1 + 1e-12):
        raise ResolutionTooCoarse(
            f"grid spacing {grid.spacing:.4g} exceeds sqrt(t)/4 = {limit:.4g}")


def _validate(t, p, grid):
    if t <= 0:
        raise DomainError("t must be positive")
    if p < 1:
        raise ValueError("p must be at least 1")
    check_resolution(grid, t)


def _ring_data(grid: QuadratureGrid):
    """Outer rule in ``z`` for zonal integrands: 8-point Gauss-Legendre per grid z-cell.

    Snapped cap boundaries sit on cell edges, so the kink of the inner
    integral at the boundary never falls inside a cell.
    """
    xi, wi = np.polynomial.legendre.leggauss(8)
    e = grid.edges[0]
    lo, hi = e[:-1, None], e[1:, None]
    z = (0.5 * (lo + hi) + 0.5 * (hi - lo) * xi).ravel()
    w = (0.5 * (hi - lo) * wi).ravel()
    return z, w * (2.0 * np.pi)


# -- generic engines ----------------------------------------------------------

def _pair_integral(f: ScalarField, grid: QuadratureGrid, p: float, *,
                   disp_weight, radial_weight, r_lo: float, r_hi: float | None,
                   breaks=(), symmetric=True, method="auto") -> float:
    """``int int |f(x)-f(y)|^p w(x, y)`` for a kernel-like weight ``w``.

    ``disp_weight`` maps flat displacement vectors to weights; ``radial_weight``
    maps sphere distances to weights.  Only pairs with ``r_lo <= d <= r_hi``
    can carry weight (the weights themselves enforce any sharper cut).
    """
    m = grid.manifold
    f = f.snapped(grid)
    if m.is_flat:
        h = [P / n for P, n in zip(m.periods, grid.shape)]
        vals = f(grid.nodes).reshape(grid.shape)
        return _flat.pair_sum(vals, h, disp_weight, p, r_hi, symmetric, method)
    hi = math.pi if r_hi is None else min(math.pi, r_hi)
    if hi <= r_lo:
        return 0.0
    zprof = f.zonal()
    if zprof is not None:
        zs, wring = _ring_data(grid)
        I = _zonal.ring_integrals(zprof, zs, radial_weight, r_lo, hi, p, breaks)
        return float(np.sum(wring * I))
    return _polar_fallback(f, grid, radial_weight, r_lo, hi, p, breaks)


def _polar_fallback(f, grid, radial_weight, r_lo, r_hi, p, breaks=(), n_r=48, n_psi=64,
                    chunk=256) -> float:
    """Per-node inner integral in geodesic polar coordinates (any field)."""
    m = grid.manifold
    frac, wfrac = _zonal._cos_rule(n_r)
    edges = np.unique(np.concatenate([[r_lo], [b for b in breaks if r_lo < b < r_hi], [r_hi]]))
    a, b = edges[:-1, None], edges[1:, None]
    r = (a + (b - a) * frac).ravel()
    wr = ((b - a) * wfrac).ravel() * radial_weight(r) * np.sin(r)
    psi = 2.0 * np.pi * np.arange(n_psi) / n_psi
    wpsi = 2.0 * np.pi / n_psi
    cps, sps = np.cos(psi), np.sin(psi)
    inner = np.empty(grid.size)
    for s in range(0, grid.size, chunk):
        x = grid.nodes[s:s + chunk]
        fr = tangent_frame(m, x)
        dirs = cps[None, :, None] * fr[:, None, 0, :] + sps[None, :, None] * fr[:, None, 1, :]
        v = r[None, :, None, None] * dirs[:, None, :, :]
        y = exp_map(m, x[:, None, None, :], v)
        diff = np.abs(f(x)[:, None, None] - f(y)) ** p
        inner[s:s + chunk] = wpsi * np.einsum("krj,r->k", diff, wr)
    return grid.integrate(inner)


# -- the functionals ----------------------------------------------------------

def bv_functional(k: SpectralKernel, f: ScalarField, t: float, grid: QuadratureGrid,
                  p: float = 1.0, *, symmetric: bool = True, method: str = "auto") -> float:
    """``t^(-p/2) int int |f(x) - f(y)|^p p_t(x, y)`` with the exact kernel.

    ``symmetric`` sums each unordered pair of grid offsets once with weight
    two instead of visiting both orders.
    """
    _validate(t, p, grid)
    R = cutoff_radius(t)
    if grid.manifold.is_flat:
        weight = lambda s: k.displacement(t, s)
        rad = None
    else:
        prof = k.profile(t)
        weight, rad = None, prof
    val = _pair_integral(f, grid, p, disp_weight=weight, radial_weight=rad, r_lo=0.0, r_hi=R,
                         symmetric=symmetric, method=method)
    return val / t ** (p / 2)


def bv_functional_gaussian_ball(m: ManifoldDescriptor, f: ScalarField, t: float, eps: float,
                                grid: QuadratureGrid, p: float = 1.0) -> float:
    """Same as :func:`bv_functional` with ``1_{d <= eps} * p~_t`` as kernel."""
    if not 0 < eps < m.injectivity_radius:
        raise DomainError("ball radius must lie in (0, injectivity radius)")
    _validate(t, p, grid)
    R = min(eps, cutoff_radius(t))
    n = m.dim

    def disp_weight(s):
        d = np.sqrt(np.sum(s * s, axis=-1))
        return np.where(d <= eps, gaussian_radial(t, d, n), 0.0)

    val = _pair_integral(f, grid, p, disp_weight=disp_weight,
                         radial_weight=lambda r: gaussian_radial(t, r, n),
                         r_lo=0.0, r_hi=R)
    return val / t ** (p / 2)


def tail_contribution(k: SpectralKernel, f: ScalarField, t: float, eps: float,
                      grid: QuadratureGrid, p: float = 1.0) -> float:
    """``t^(-p/2) int int_{d > eps} |f(x) - f(y)|^p p_t(x, y)``.

    Pairs farther apart than ``sqrt(4 * 745 * t)`` are dropped: the kernel
    there is below the smallest positive double.
    """
    m = k.manifold
    if not 0 < eps < m.injectivity_radius:
        raise DomainError("ball radius must lie in (0, injectivity radius)")
    _validate(t, p, grid)
    R = cutoff_radius(t, _TAIL_LOG_CUT)
    if R <= eps:
        return 0.0

    def disp_weight(s):
        d = np.sqrt(np.sum(s * s, axis=-1))
        return np.where(d > eps, k.displacement(t, s), 0.0)

    val = _pair_integral(f, grid, p, disp_weight=disp_weight,
                         radial_weight=lambda r: k.radial(t, r),
                         r_lo=eps, r_hi=R)
    return val / t ** (p / 2)


def kernel_difference_functional(k: SpectralKernel, f: ScalarField, t: float, eps: float,
                                 grid: QuadratureGrid, p: float = 1.0) -> float:
    """``t^(-p/2) int int |f(x)-f(y)|^p |p_t(x,y) - 1_{d<=eps} p~_t(x,y)|``."""
    m = k.manifold
    n = m.dim
    R = cutoff_radius(t)

    def disp_weight(s):
        d = np.sqrt(np.sum(s * s, axis=-1))
        return np.abs(k.displacement(t, s) - np.where(d <= eps, gaussian_radial(t, d, n), 0.0))

    def radial_weight(r):
        return np.abs(k.radial(t, r) - np.where(r <= eps, gaussian_radial(t, r, n), 0.0))

    val = _pair_integral(f, grid, p, disp_weight=disp_weight, radial_weight=radial_weight,
                         r_lo=0.0, r_hi=R, breaks=(eps,))
    return val / t ** (p / 2)


def degiorgi_functional(k: SpectralKernel, f: ScalarField, t: float,
                        grid: QuadratureGrid) -> float:
    """``int |grad P_t f| dmu``.

    Smooth fields decay mode by mode and are integrated cell by cell (so the
    kinks of ``|grad|`` on cell edges cost nothing); indicators are smoothed
    analytically and integrated on the grid nodes, or ring by ring on the
    sphere when the field is zonal.
    """
    if t <= 0:
        raise DomainError("t must be positive")
    m = grid.manifold
    f = f.snapped(grid)
    norm = lambda x: np.linalg.norm(f.heat_gradient(k, t, x), axis=-1)
    if f.smooth:
        return _cell_quadrature(grid, norm)
    if not m.is_flat:
        zprof = f.zonal()
        if zprof is not None:
            a = np.asarray(zprof.axis)
            zs, wring = _ring_data(grid)
            # one representative point per ring of constant <a, x>
            perp = np.cross(a, [1.0, 0.0, 0.0] if abs(a[0]) < 0.9 else [0.0, 1.0, 0.0])
            perp /= np.linalg.norm(perp)
            pts = zs[:, None] * a + np.sqrt(1 - zs * zs)[:, None] * perp
            return float(np.sum(wring * norm(pts)))
    out = 0.0
    for s in range(0, grid.size, 1 << 16):
        out += float(np.dot(grid.weights[s:s + (1 << 16)], norm(grid.nodes[s:s + (1 << 16)])))
    return out


# -- extrapolation ------------------------------------------------------------

class ExtrapolationResult(NamedTuple):
    limit: float
    a: float
    b: float
    f_tmin: float
    t_min: float
    condition: float


def extrapolate_limit(rows, n_fit: int = 6, max_condition: float = 1e12) -> ExtrapolationResult:
    """Least-squares fit of ``F(t) = L + a sqrt(t) + b t`` on the smallest ``n_fit`` times."""
    rows = sorted(((float(t), float(v)) for t, v in rows), key=lambda r: r[0])
    if len(rows) < 4:
        raise ValueError("need at least four rows")
    use = rows[:n_fit]
    t = np.array([r[0] for r in use])
    F = np.array([r[1] for r in use])
    X = np.column_stack([np.ones_like(t), np.sqrt(t), t])
    cond = float(np.linalg.cond(X.T @ X))
    if not np.isfinite(cond) or cond > max_condition:
        raise IllConditionedFit(f"normal equations have condition number {cond:.3g}")
    coef = np.linalg.lstsq(X, F, rcond=None)[0]
    return ExtrapolationResult(float(coef[0]), float(coef[1]), float(coef[2]),
                               rows[0][1], rows[0][0], cond)


# -- convergence runs ---------------------------------------------------------

def default_t_grid(m: ManifoldDescriptor, n: int = 12) -> tuple[float, ...]:
    """Geometric grid from 0.1 down to 1e-4 (circle), 1e-3 (torus and sphere)."""
    t_min = 1e-4 if m.kind is Kind.CIRCLE else 1e-3
    return tuple(float(v) for v in np.geomspace(0.1, t_min, n))


@dataclass(frozen=True)
class FunctionalConfig:
    """What to compute along a decreasing grid of times."""

    t_grid: tuple = ()
    p: float = 1.0
    ball_radius: float | None = None
    spacing_factor: float = 4.0
    max_nodes: int = MAX_NODES
    n_fit: int = 6
    mc: object = None
    seed: int = 0

    def __post_init__(self):
        tg = tuple(float(v) for v in self.t_grid)
        object.__setattr__(self, "t_grid", tg)
        if any(v <= 0 for v in tg):
            raise ConfigError("t_grid: times must be positive")
        if any(b >= a for a, b in zip(tg, tg[1:])):
            raise ConfigError("t_grid: times must be strictly decreasing")
        if self.p < 1:
            raise ConfigError("p: must be at least 1")
        if self.spacing_factor < 4.0:
            raise ConfigError("spacing_factor: must be at least 4")

    def resolution(self, m: ManifoldDescriptor, t: float) -> int:
        return required_resolution(m, t, self.spacing_factor, self.max_nodes)


@dataclass
class ConvergenceRow:
    t: float
    value: float
    resolution: int
    diag: dict = field(default_factory=dict)


@dataclass
class ConvergenceReport:
    manifold_id: str
    field_id: str
    pipeline: str
    p: float
    rows: list
    extrapolated_limit: float
    fit_coefficients: tuple
    reference: VariationReference
    reference_scaled: float
    relative_error: float
    f_tmin: float
    relative_error_tmin: float
    fit_condition: float = float("nan")

    def as_dict(self) -> dict:
        return dict(
            manifold=self.manifold_id, field=self.field_id, pipeline=self.pipeline, p=self.p,
            limit=self.extrapolated_limit,
            fit=dict(a=self.fit_coefficients[0], b=self.fit_coefficients[1],
                     condition=self.fit_condition),
            reference=dict(value=self.reference.value,
                           provenance=self.reference.provenance.value,
                           scaled=self.reference_scaled),
            rel_error=self.relative_error, F_t_min=self.f_tmin,
            rel_error_t_min=self.relative_error_tmin,
        )


def _rel(a, b):
    return abs(a - b) / abs(b) if b != 0 else abs(a - b)


def _reference_grid(m: ManifoldDescriptor) -> QuadratureGrid:
    return build_quadrature(m, 64 if m.kind is Kind.SPHERE2 else 256)


def run_convergence(m: ManifoldDescriptor, f: ScalarField, pipeline: str = "exact-kernel",
                    config: FunctionalConfig | None = None, kernel: SpectralKernel | None = None,
                    log=None) -> ConvergenceReport:
    """Evaluate one pipeline along the t grid and extrapolate to ``t -> 0``."""
    if pipeline not in PIPELINES:
        raise ConfigError(f"pipeline: unknown value {pipeline!r}")
    config = config or FunctionalConfig(default_t_grid(m))
    if not config.t_grid:
        config = FunctionalConfig(default_t_grid(m), **{k: getattr(config, k) for k in (
            "p", "ball_radius", "spacing_factor", "max_nodes", "n_fit", "mc", "seed")})
    if f.manifold != m:
        raise ConfigError("field: lives on a different manifold")
    if len({part.smooth for c, part in f.linear_parts()
            if c != 0.0 and not isinstance(part, Constant)}) > 1:
        raise UnsupportedField(f"{f.id} mixes smooth and indicator parts")
    p = config.p
    if pipeline == "gaussian-ball" and config.ball_radius is None:
        raise ConfigError("ball_radius: required by the gaussian-ball pipeline")
    if pipeline == "monte-carlo" and config.mc is None:
        raise ConfigError("mc: required by the monte-carlo pipeline")
    if pipeline != "sobolev" and p != 1.0 and pipeline in ("degiorgi", "monte-carlo"):
        raise ConfigError(f"p: the {pipeline} pipeline is defined for p = 1 only")
    k = kernel or SpectralKernel(m)

    rows = []
    grids: dict[int, QuadratureGrid] = {}
    for t in config.t_grid:
        n = config.resolution(m, t)
        grid = grids.setdefault(n, build_quadrature(m, n))
        fs = f.snapped(grid)
        diag = {}
        if pipeline in ("exact-kernel", "sobolev"):
            val = bv_functional(k, fs, t, grid, p)
            diag.update(k.series_diagnostics(t))
        elif pipeline == "gaussian-ball":
            val = bv_functional_gaussian_ball(m, fs, t, config.ball_radius, grid, p)
        elif pipeline == "degiorgi":
            val = degiorgi_functional(k, fs, t, grid)
        else:
            from .stochastic import mc_bv_estimate
            est = mc_bv_estimate(m, fs, t, config.mc, config.seed)
            val = est.mean
            diag["stderr"] = est.stderr
        tv = fs.closed_form_variation()
        if tv is not None and not fs.smooth:
            diag["snapped_tv"] = tv
        rows.append(ConvergenceRow(t, float(val), n, diag))
        if log is not None:
            log(f"t={t:.3e} N={n} F={val:.10g}")
        grids = {n: grid}

    fit = extrapolate_limit([(r.t, r.value) for r in rows], config.n_fit)
    finest = build_quadrature(m, rows[-1].resolution) if not f.smooth else None
    ref_field = f.snapped(finest) if finest is not None else f
    ref = total_variation_reference(ref_field, _reference_grid(m), powers=(1.0, p))
    if pipeline == "degiorgi":
        scaled = ref.value
    else:
        if p != 1.0 and p not in ref.p_energy:
            raise ConfigError("p: indicators have no p-energy for p > 1")
        scaled = ref.scaled(p)
    return ConvergenceReport(
        manifold_id=m.id, field_id=f.id, pipeline=pipeline, p=p, rows=rows,
        extrapolated_limit=fit.limit, fit_coefficients=(fit.a, fit.b), reference=ref,
        reference_scaled=scaled, relative_error=_rel(fit.limit, scaled), f_tmin=fit.f_tmin,
        relative_error_tmin=_rel(fit.f_tmin, scaled), fit_condition=fit.condition)
