"""Geometry of the model manifolds: circle, flat torus and unit 2-sphere.

Points are plain numpy arrays.  On the circle and the torus a point is a
vector of angles, one per dimension, reduced into ``[0, period)``; on the
sphere it is a unit 3-vector.  Tangent vectors are arrays of intrinsic
components (flat cases) or ambient 3-vectors orthogonal to the base point.
Every function broadcasts over leading axes, so a batch of ``k`` points is an
array of shape ``(k, d)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NonUniqueGeodesic

__all__ = [
    "Kind",
    "ManifoldDescriptor",
    "GridScheme",
    "QuadratureGrid",
    "circle",
    "flat_torus",
    "sphere2",
    "manifold_from_id",
    "make_point",
    "make_tangent",
    "distance",
    "exp_map",
    "log_map",
    "parallel_transport",
    "polar_jacobian",
    "tangent_frame",
    "build_quadrature",
    "sample_uniform",
]

TWO_PI = 2.0 * np.pi


class Kind(str, enum.Enum):
    CIRCLE = "circle"
    FLAT_TORUS = "torus"
    SPHERE2 = "sphere"


@dataclass(frozen=True)
class ManifoldDescriptor:
    """Which model manifold, its dimension and its curvature constant.

    ``periods`` is only meaningful for the flat cases (the circle is the
    torus of dimension one with period ``2*pi``).  ``curvature_bound`` is the
    constant sectional curvature: 0 for the flat cases and 1 for the unit
    sphere.
    """

    kind: Kind
    dim: int
    periods: tuple[float, ...] = ()
    curvature_bound: float = 0.0

    def __post_init__(self):
        if self.kind is Kind.CIRCLE and self.dim != 1:
            raise ValueError("circle has dimension 1")
        if self.kind is Kind.SPHERE2 and self.dim != 2:
            raise ValueError("sphere2 has dimension 2")
        if self.kind is not Kind.SPHERE2:
            if len(self.periods) != self.dim:
                raise ValueError("need one period per dimension")
            if any(p <= 0 for p in self.periods):
                raise ValueError("periods must be positive")

    @property
    def is_flat(self) -> bool:
        return self.kind is not Kind.SPHERE2

    @property
    def ambient_dim(self) -> int:
        return 3 if self.kind is Kind.SPHERE2 else self.dim

    @property
    def injectivity_radius(self) -> float:
        if self.kind is Kind.SPHERE2:
            return np.pi
        return min(self.periods) / 2.0

    @property
    def diameter(self) -> float:
        if self.kind is Kind.SPHERE2:
            return np.pi
        return 0.5 * float(np.linalg.norm(self.periods))

    @property
    def volume(self) -> float:
        if self.kind is Kind.SPHERE2:
            return 4.0 * np.pi
        return float(np.prod(self.periods))

    @property
    def ricci_constant(self) -> float:
        """Ricci curvature as a multiple of the metric (constant curvature)."""
        return (self.dim - 1) * self.curvature_bound

    @property
    def id(self) -> str:
        if self.kind is Kind.FLAT_TORUS:
            if all(np.isclose(p, TWO_PI) for p in self.periods) and self.dim == 2:
                return "torus"
            return "torus:" + ",".join(repr(float(p)) for p in self.periods)
        return self.kind.value


def circle() -> ManifoldDescriptor:
    return ManifoldDescriptor(Kind.CIRCLE, 1, (TWO_PI,), 0.0)


def flat_torus(periods=(TWO_PI, TWO_PI)) -> ManifoldDescriptor:
    periods = tuple(float(p) for p in periods)
    return ManifoldDescriptor(Kind.FLAT_TORUS, len(periods), periods, 0.0)


def sphere2() -> ManifoldDescriptor:
    return ManifoldDescriptor(Kind.SPHERE2, 2, (), 1.0)


def manifold_from_id(text: str) -> ManifoldDescriptor:
    """Parse ``circle``, ``sphere``, ``torus`` or ``torus:P1,P2,...``."""
    name, _, rest = text.strip().partition(":")
    if name == "circle" and not rest:
        return circle()
    if name == "sphere" and not rest:
        return sphere2()
    if name == "torus":
        if not rest:
            return flat_torus()
        try:
            periods = [float(p) for p in rest.split(",")]
        except ValueError:
            raise ValueError(f"bad torus periods in {text!r}") from None
        return flat_torus(periods)
    raise ValueError(f"unknown manifold id {text!r}")


def _periods(m: ManifoldDescriptor) -> np.ndarray:
    return np.asarray(m.periods, dtype=float)


def _wrap(m: ManifoldDescriptor, x: np.ndarray) -> np.ndarray:
    P = _periods(m)
    x = np.mod(x, P)
    # np.mod can round a tiny negative angle up to exactly P
    return np.where(x >= P, 0.0, x)


def _min_image(m: ManifoldDescriptor, d: np.ndarray) -> np.ndarray:
    P = _periods(m)
    return d - P * np.round(d / P)


def make_point(m: ManifoldDescriptor, coords) -> np.ndarray:
    """Canonical point array: angles reduced modulo periods, sphere normalized."""
    x = np.asarray(coords, dtype=float)
    if x.ndim == 0:
        x = x[None]
    if x.shape[-1] != m.ambient_dim:
        raise ValueError(f"expected trailing dimension {m.ambient_dim}, got {x.shape}")
    if m.is_flat:
        return _wrap(m, x)
    nrm = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(nrm == 0):
        raise ValueError("zero vector is not a sphere point")
    return x / nrm


def make_tangent(m: ManifoldDescriptor, x: np.ndarray, components) -> np.ndarray:
    """Tangent vector at ``x``; on the sphere the normal part is projected out."""
    v = np.asarray(components, dtype=float)
    if v.ndim == 0:
        v = v[None]
    if m.is_flat:
        return v
    return v - np.sum(v * x, axis=-1, keepdims=True) * x


def distance(m: ManifoldDescriptor, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Geodesic distance, broadcasting over leading axes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if m.is_flat:
        d = _min_image(m, y - x)
        if m.dim == 1:
            return np.abs(d[..., 0])
        return np.sqrt(np.sum(d * d, axis=-1))
    cross = np.linalg.norm(np.cross(x, y), axis=-1)
    return np.arctan2(cross, np.sum(x * y, axis=-1))


def exp_map(m: ManifoldDescriptor, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if m.is_flat:
        return _wrap(m, x + v)
    r = np.linalg.norm(v, axis=-1, keepdims=True)
    # sin(r)/r written through np.sinc to stay exact at r = 0
    y = np.cos(r) * x + np.sinc(r / np.pi) * v
    return y / np.linalg.norm(y, axis=-1, keepdims=True)


def log_map(m: ManifoldDescriptor, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Inverse of :func:`exp_map` inside the injectivity radius."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if m.is_flat:
        return _min_image(m, y - x)
    w = y - np.sum(x * y, axis=-1, keepdims=True) * x
    nw = np.linalg.norm(w, axis=-1, keepdims=True)
    d = distance(m, x, y)[..., None]
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(nw > 0, d * w / nw, 0.0)
    return out


def parallel_transport(m: ManifoldDescriptor, x, y, v) -> np.ndarray:
    """Transport ``v`` from ``x`` to ``y`` along the minimizing geodesic.

    On the sphere this is the rotation taking ``x`` to ``y`` inside their
    common plane; the direction normal to that plane is left fixed.

    Raises
    ------
    NonUniqueGeodesic
        If ``d(x, y)`` reaches the injectivity radius.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    d = distance(m, x, y)
    if np.any(d >= m.injectivity_radius * (1 - 1e-15)):
        raise NonUniqueGeodesic("points are at or beyond the injectivity radius")
    if m.is_flat:
        return np.broadcast_to(v, np.broadcast_shapes(v.shape, y.shape)).copy()
    w = y - np.sum(x * y, axis=-1, keepdims=True) * x
    nw = np.linalg.norm(w, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        u = np.where(nw > 0, w / nw, 0.0)
    d = d[..., None]
    vu = np.sum(v * u, axis=-1, keepdims=True)
    return v + vu * ((np.cos(d) - 1.0) * u - np.sin(d) * x)


def polar_jacobian(m: ManifoldDescriptor, x=None, r=0.0, u=None):
    """Volume density of exponential polar coordinates at radius ``r``.

    All model manifolds are homogeneous and isotropic, so ``x`` and ``u`` do
    not influence the value; they are accepted for symmetry with the general
    formula.  Circle: 1, flat torus: ``r**(n-1)``, unit sphere: ``sin r``.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(r >= m.injectivity_radius):
        raise DomainError("polar Jacobian needs 0 <= r < injectivity radius")
    if m.kind is Kind.CIRCLE:
        return np.ones_like(r)
    if m.kind is Kind.FLAT_TORUS:
        return r ** (m.dim - 1)
    return np.sin(r)


def tangent_frame(m: ManifoldDescriptor, x: np.ndarray) -> np.ndarray:
    """Orthonormal tangent frame at ``x`` with shape ``(..., dim, ambient)``."""
    x = np.asarray(x, dtype=float)
    if m.is_flat:
        return np.broadcast_to(np.eye(m.dim), x.shape[:-1] + (m.dim, m.dim)).copy()
    # pick the coordinate axis least aligned with x as a seed
    seed = np.zeros_like(x)
    idx = np.argmin(np.abs(x), axis=-1)
    np.put_along_axis(seed, idx[..., None], 1.0, axis=-1)
    e1 = seed - np.sum(seed * x, axis=-1, keepdims=True) * x
    e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = np.cross(x, e1)
    return np.stack([e1, e2], axis=-2)


class GridScheme(str, enum.Enum):
    UNIFORM_PERIODIC = "UniformPeriodic"
    GAUSS_LEGENDRE_AZIMUTHAL = "ProductGaussLegendreAzimuthal"


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Product quadrature rule on a model manifold.

    ``axes``/``axis_weights`` hold the 1-D factors (per-dimension angles for
    the flat cases, ``(z nodes, azimuths)`` on the sphere) and ``edges`` the
    matching cell boundaries.  Nodes are stored flattened in C order of the
    product shape ``shape``.
    """

    manifold: ManifoldDescriptor
    nodes: np.ndarray
    weights: np.ndarray
    scheme: GridScheme
    resolution: int
    axes: tuple
    axis_weights: tuple
    edges: tuple

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.axes)

    @property
    def size(self) -> int:
        return int(self.weights.size)

    @property
    def spacing(self) -> float:
        """Nominal node spacing in arc length (largest over dimensions)."""
        if self.manifold.is_flat:
            return max(p / n for p, n in zip(self.manifold.periods, self.shape))
        return np.pi / self.resolution

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, np.asarray(values, dtype=float)))


def build_quadrature(m: ManifoldDescriptor, resolution: int) -> QuadratureGrid:
    """Quadrature grid with ``resolution`` nodes per dimension.

    Flat cases use cell-centred uniform nodes (cell edges at multiples of the
    spacing) with weight equal to the cell volume.  The sphere uses
    Gauss-Legendre nodes in ``z = cos(polar angle)`` times ``2*resolution``
    uniform azimuths.
    """
    resolution = int(resolution)
    if resolution < 4:
        raise ValueError("resolution must be at least 4")
    if m.is_flat:
        axes, aw, edges = [], [], []
        for P in m.periods:
            h = P / resolution
            axes.append((np.arange(resolution) + 0.5) * h)
            aw.append(np.full(resolution, h))
            edges.append(np.arange(resolution + 1) * h)
        mesh = np.meshgrid(*axes, indexing="ij")
        nodes = np.stack([g.ravel() for g in mesh], axis=-1)
        wmesh = np.meshgrid(*aw, indexing="ij")
        weights = np.prod(np.stack([g.ravel() for g in wmesh], axis=-1), axis=-1)
        return QuadratureGrid(m, nodes, weights, GridScheme.UNIFORM_PERIODIC,
                              resolution, tuple(axes), tuple(aw), tuple(edges))

    z, wz = np.polynomial.legendre.leggauss(resolution)
    n_phi = 2 * resolution
    dphi = TWO_PI / n_phi
    phi = (np.arange(n_phi) + 0.5) * dphi
    s = np.sqrt(1.0 - z * z)
    nodes = np.stack([
        np.outer(s, np.cos(phi)).ravel(),
        np.outer(s, np.sin(phi)).ravel(),
        np.repeat(z, n_phi),
    ], axis=-1)
    weights = np.outer(wz, np.full(n_phi, dphi)).ravel()
    z_edges = np.concatenate([[-1.0], -1.0 + np.cumsum(wz)])
    z_edges[-1] = 1.0
    if resolution % 2 == 0:
        z_edges[resolution // 2] = 0.0
    phi_edges = np.arange(n_phi + 1) * dphi
    return QuadratureGrid(m, nodes, weights, GridScheme.GAUSS_LEGENDRE_AZIMUTHAL,
                          resolution, (z, phi), (wz, np.full(n_phi, dphi)),
                          (z_edges, phi_edges))


def sample_uniform(m: ManifoldDescriptor, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw points from the normalized Riemannian volume."""
    shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
    if m.is_flat:
        return _wrap(m, rng.uniform(0.0, 1.0, shape + (m.dim,)) * _periods(m))
    g = rng.standard_normal(shape + (3,))
    return g / np.linalg.norm(g, axis=-1, keepdims=True)
