"""Test-function registry and ground-truth total variation.

Fields are small immutable objects that evaluate on batches of points,
report closed-form gradients where they exist, and know their total
variation (``int |grad f|`` for smooth fields, perimeter for indicators).

String ids form the registry namespace used by the command line::

    circle:cos            circle:cos:3         circle:sin
    circle:arc:0:pi       torus:cos:1,0        torus:box:0,pi:0,pi
    sphere:z              sphere:x             sphere:cap:pi/2[:ax,ay,az]

Composites are written ``2*circle:cos+circle:arc:0:1``.
"""

from __future__ import annotations

import ast
import enum
import math
import operator
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NotDifferentiable, UnsupportedField
from .manifolds import Kind, ManifoldDescriptor, QuadratureGrid, manifold_from_id
from .kernels import legendre_table

__all__ = [
    "ScalarField",
    "Constant",
    "TrigMode",
    "SphereLinear",
    "IndicatorArc",
    "IndicatorBox",
    "IndicatorCap",
    "Sum",
    "Scale",
    "ZonalProfile",
    "Provenance",
    "VariationReference",
    "complement",
    "parse_field",
    "canonical_field",
    "registry_ids",
    "total_variation_reference",
    "gradient_norm_field",
    "sobolev_p_energy",
    "abs_sin_moment",
]

TWO_PI = 2.0 * np.pi
_GL8 = np.polynomial.legendre.leggauss(8)


def abs_sin_moment(p: float) -> float:
    """Mean of ``|sin s|^p`` over a period."""
    return math.exp(math.lgamma((p + 1) / 2) - math.lgamma(p / 2 + 1)) / math.sqrt(math.pi)


@dataclass(frozen=True)
class ZonalProfile:
    """``g(z) = const + slope*z + sum_k c_k 1[z > u_k]`` with ``z = <axis, x>``."""

    axis: tuple
    const: float = 0.0
    slope: float = 0.0
    steps: tuple = ()

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        out = self.const + self.slope * z
        for u, c in self.steps:
            out = out + c * (z > u)
        return out

    @property
    def piecewise_constant(self) -> bool:
        return self.slope == 0.0

    def flipped(self) -> "ZonalProfile":
        """Same function written against ``-axis``."""
        const = self.const + sum(c for _, c in self.steps)
        steps = tuple((-u, -c) for u, c in self.steps)
        return ZonalProfile(tuple(-a for a in self.axis), const, -self.slope, steps)

    def merged(self, other: "ZonalProfile", coef: float = 1.0) -> "ZonalProfile":
        return ZonalProfile(self.axis, self.const + coef * other.const,
                            self.slope + coef * other.slope,
                            self.steps + tuple((u, coef * c) for u, c in other.steps))


class ScalarField:
    """Base class; subclasses override what applies to them."""

    manifold: ManifoldDescriptor
    smooth: bool = True
    is_indicator: bool = False

    @property
    def id(self) -> str:
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {self.id}>"

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:
        raise NotDifferentiable(f"{self.id} has no pointwise gradient")

    def gradient_norm(self, x) -> np.ndarray:
        return np.linalg.norm(self.gradient(x), axis=-1)

    def linear_parts(self) -> list:
        return [(1.0, self)]

    def heat_evolved(self, t: float):
        """``P_t f`` as a field when it is a finite eigen-expansion, else None."""
        return None

    def heat_gradient(self, kernel, t: float, x) -> np.ndarray:
        out = None
        for coef, part in self.linear_parts():
            g = coef * part._heat_gradient_atom(kernel, t, np.asarray(x, dtype=float))
            out = g if out is None else out + g
        return out

    def _heat_gradient_atom(self, kernel, t, x):
        return self.heat_evolved(t).gradient(x)

    def closed_form_variation(self):
        return None

    def closed_form_p_energy(self, p: float):
        return None

    def snapped(self, grid: QuadratureGrid) -> "ScalarField":
        return self

    def zonal(self):
        return None

    def __mul__(self, c):
        return Scale(float(c), self)

    __rmul__ = __mul__

    def __add__(self, other):
        return Sum((self, other))


# -- smooth atoms -------------------------------------------------------------

@dataclass(frozen=True, repr=False)
class Constant(ScalarField):
    manifold: ManifoldDescriptor
    value: float = 1.0

    @property
    def id(self):
        return f"{self.manifold.kind.value}:const:{self.value!r}"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], self.value)

    def gradient(self, x):
        return np.zeros(np.shape(x)[:-1] + (self.manifold.ambient_dim,))

    def heat_evolved(self, t):
        return self

    def closed_form_variation(self):
        return 0.0

    def closed_form_p_energy(self, p):
        return 0.0

    def zonal(self):
        return ZonalProfile((0.0, 0.0, 1.0), self.value) if not self.manifold.is_flat else None


@dataclass(frozen=True, repr=False)
class TrigMode(ScalarField):
    """``amplitude * cos(<omega, x> + phase)`` with ``omega_i = 2 pi j_i / P_i``."""

    manifold: ManifoldDescriptor
    freq: tuple
    amplitude: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if not self.manifold.is_flat:
            raise ConfigError("trigonometric modes live on the circle or torus")
        if len(self.freq) != self.manifold.dim:
            raise ConfigError("need one integer frequency per dimension")

    @property
    def omega(self) -> np.ndarray:
        return np.array([2 * np.pi * j / P for j, P in zip(self.freq, self.manifold.periods)])

    @property
    def eigenvalue(self) -> float:
        return float(np.sum(self.omega ** 2))

    @property
    def id(self):
        name = "cos" if self.phase == 0.0 else "sin" if self.phase == -np.pi / 2 else f"cos@{self.phase!r}"
        freq = ",".join(str(j) for j in self.freq)
        head = f"{self.manifold.kind.value}:{name}:{freq}"
        return head if self.amplitude == 1.0 else f"{self.amplitude!r}*{head}"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.amplitude * np.cos(x @ self.omega + self.phase)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        s = -self.amplitude * np.sin(x @ self.omega + self.phase)
        return s[..., None] * self.omega

    def heat_evolved(self, t):
        return TrigMode(self.manifold, self.freq,
                        self.amplitude * math.exp(-self.eigenvalue * t), self.phase)

    def closed_form_variation(self):
        return self.closed_form_p_energy(1.0)

    def closed_form_p_energy(self, p):
        w = math.sqrt(self.eigenvalue)
        if w == 0.0:
            return 0.0
        return self.manifold.volume * (abs(self.amplitude) * w) ** p * abs_sin_moment(p)


@dataclass(frozen=True, repr=False)
class SphereLinear(ScalarField):
    """Degree-one harmonic ``amplitude * <axis, x>`` on the unit sphere."""

    manifold: ManifoldDescriptor
    axis: tuple = (0.0, 0.0, 1.0)
    amplitude: float = 1.0

    def __post_init__(self):
        if self.manifold.kind is not Kind.SPHERE2:
            raise ConfigError("linear harmonics live on the sphere")
        a = np.asarray(self.axis, dtype=float)
        object.__setattr__(self, "axis", tuple(a / np.linalg.norm(a)))

    @property
    def id(self):
        names = {(1.0, 0.0, 0.0): "x", (0.0, 1.0, 0.0): "y", (0.0, 0.0, 1.0): "z"}
        name = names.get(self.axis, "lin:" + ",".join(repr(a) for a in self.axis))
        head = f"sphere:{name}"
        return head if self.amplitude == 1.0 else f"{self.amplitude!r}*{head}"

    def __call__(self, x):
        return self.amplitude * (np.asarray(x, dtype=float) @ np.asarray(self.axis))

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        a = np.asarray(self.axis)
        return self.amplitude * (a - (x @ a)[..., None] * x)

    def heat_evolved(self, t):
        return SphereLinear(self.manifold, self.axis, self.amplitude * math.exp(-2.0 * t))

    def closed_form_variation(self):
        return self.closed_form_p_energy(1.0)

    def closed_form_p_energy(self, p):
        # 2 pi |A|^p int_{-1}^{1} (1 - z^2)^{p/2} dz
        beta = math.exp(math.lgamma(0.5) + math.lgamma(p / 2 + 1) - math.lgamma(p / 2 + 1.5))
        return TWO_PI * abs(self.amplitude) ** p * beta

    def zonal(self):
        return ZonalProfile(self.axis, 0.0, self.amplitude)


# -- indicators ---------------------------------------------------------------

def _circle_overlap(a0, la, b0, lb, P) -> float:
    """Length of the intersection of two arcs on a circle of period ``P``."""
    if la >= P or lb >= P:
        return min(la, lb)
    total = 0.0
    for shift in (-P, 0.0, P):
        s = b0 - a0 + shift
        s = s - P * math.floor(s / P) if shift == 0.0 else s
        lo, hi = max(0.0, s), min(la, s + lb)
        total += max(0.0, hi - lo)
    return total


def _same_angle(a, b, P, tol=1e-12) -> bool:
    d = (a - b) % P
    return min(d, P - d) <= tol


@dataclass(frozen=True, repr=False)
class IndicatorBox(ScalarField):
    """Product of arcs ``[start_i, start_i + length_i)`` on a flat torus.

    A side equal to the full period means the box wraps that direction and
    has no faces normal to it.  On the circle this is the arc indicator.
    """

    manifold: ManifoldDescriptor
    starts: tuple
    lengths: tuple
    smooth = False
    is_indicator = True

    def __post_init__(self):
        m = self.manifold
        if not m.is_flat:
            raise ConfigError("boxes and arcs live on the circle or torus")
        if len(self.starts) != m.dim or len(self.lengths) != m.dim:
            raise ConfigError("need one interval per dimension")
        for L, P in zip(self.lengths, m.periods):
            if not 0.0 < L <= P:
                raise ConfigError("box sides must be positive and at most one period")
        if all(L >= P for L, P in zip(self.lengths, m.periods)):
            raise ConfigError("box covers the whole torus")
        object.__setattr__(self, "starts",
                           tuple(float(s % P) for s, P in zip(self.starts, m.periods)))
        object.__setattr__(self, "lengths", tuple(float(L) for L in self.lengths))

    @property
    def id(self):
        if self.manifold.kind is Kind.CIRCLE:
            return f"circle:arc:{self.starts[0]!r}:{self.starts[0] + self.lengths[0]!r}"
        sides = ":".join(f"{s!r},{s + L!r}" for s, L in zip(self.starts, self.lengths))
        return f"torus:box:{sides}"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        inside = np.ones(x.shape[:-1], dtype=bool)
        for i, (s, L, P) in enumerate(zip(self.starts, self.lengths, self.manifold.periods)):
            if L < P:
                inside &= np.mod(x[..., i] - s, P) < L
        return inside.astype(float)

    def _heat_gradient_atom(self, kernel, t, x):
        m = self.manifold
        mass, dmass = [], []
        for i, (s, L, P) in enumerate(zip(self.starts, self.lengths, m.periods)):
            xi = x[..., i]
            mass.append(kernel.axis_interval_mass(t, xi, s, L, P))
            if L >= P:
                dmass.append(np.zeros_like(xi))
            else:
                dmass.append(kernel.axis_kernel(t, xi - s, P) - kernel.axis_kernel(t, xi - s - L, P))
        out = np.empty(x.shape)
        for i in range(m.dim):
            g = dmass[i]
            for j in range(m.dim):
                if j != i:
                    g = g * mass[j]
            out[..., i] = g
        return out

    def faces(self):
        """``(normal dim, coordinate)`` of every boundary face."""
        out = []
        for i, (s, L, P) in enumerate(zip(self.starts, self.lengths, self.manifold.periods)):
            if L < P:
                out += [(i, s), (i, (s + L) % P)]
        return out

    def closed_form_variation(self):
        per = 0.0
        for i, (L, P) in enumerate(zip(self.lengths, self.manifold.periods)):
            if L < P:
                per += 2.0 * math.prod(self.lengths[j] for j in range(len(self.lengths)) if j != i)
        return per

    def snapped(self, grid):
        starts, lengths = [], []
        for s, L, P, e in zip(self.starts, self.lengths, self.manifold.periods, grid.edges):
            h = P / (len(e) - 1)
            if L >= P:
                starts.append(s)
                lengths.append(P)
                continue
            a = round(s / h)
            b = max(round((s + L) / h), a + 1)
            starts.append(a * h)
            lengths.append(min((b - a) * h, P))
        if tuple(starts) == self.starts and tuple(lengths) == self.lengths:
            return self
        return IndicatorBox(self.manifold, tuple(starts), tuple(lengths))


def IndicatorArc(manifold: ManifoldDescriptor, a: float, b: float) -> IndicatorBox:
    """Indicator of the counter-clockwise arc from ``a`` to ``b``."""
    if manifold.kind is not Kind.CIRCLE:
        raise ConfigError("arcs live on the circle")
    P = manifold.periods[0]
    L = (b - a) % P
    if L == 0.0:
        raise ConfigError("degenerate arc")
    return IndicatorBox(manifold, (a,), (L,))


@dataclass(frozen=True, repr=False)
class IndicatorCap(ScalarField):
    """Indicator of ``{x : <axis, x> > height}``, the cap of polar radius ``arccos(height)``."""

    manifold: ManifoldDescriptor
    axis: tuple
    height: float
    smooth = False
    is_indicator = True

    def __post_init__(self):
        if self.manifold.kind is not Kind.SPHERE2:
            raise ConfigError("caps live on the sphere")
        if not -1.0 < self.height < 1.0:
            raise ConfigError("cap polar angle must lie strictly between 0 and pi")
        a = np.asarray(self.axis, dtype=float)
        object.__setattr__(self, "axis", tuple(a / np.linalg.norm(a)))

    @classmethod
    def from_angle(cls, m, alpha: float, axis=(0.0, 0.0, 1.0)):
        if not 0.0 < alpha < np.pi:
            raise ConfigError("cap polar angle must lie strictly between 0 and pi")
        return cls(m, tuple(axis), math.cos(alpha))

    @property
    def alpha(self) -> float:
        return math.acos(self.height)

    @property
    def id(self):
        tail = "" if self.axis == (0.0, 0.0, 1.0) else ":" + ",".join(repr(a) for a in self.axis)
        return f"sphere:cap:{self.alpha!r}{tail}"

    def __call__(self, x):
        return ((np.asarray(x, dtype=float) @ np.asarray(self.axis)) > self.height).astype(float)

    def legendre_coefficients(self, L: int) -> np.ndarray:
        """``A_l`` in ``1_cap = sum_l A_l P_l(<axis, x>)``."""
        c = self.height
        P = legendre_table(c, L + 1)
        A = np.empty(L + 1)
        A[0] = 0.5 * (1.0 - c)
        A[1:] = 0.5 * (P[0:L] - P[2:L + 2])
        return A

    def _heat_gradient_atom(self, kernel, t, x):
        a = np.asarray(self.axis)
        z = x @ a
        L = kernel.n_terms(t) + 16
        ls = np.arange(L + 1)
        coef = self.legendre_coefficients(L) * np.exp(-ls * (ls + 1.0) * t)
        flat = z.ravel()
        acc = np.zeros_like(flat)
        p_prev = np.ones_like(flat)
        p_cur = flat.copy()
        for l in range(1, L + 1):
            # (1 - z^2) P_l'(z) = l (P_{l-1} - z P_l)
            acc += coef[l] * l * (p_prev - flat * p_cur)
            p_prev, p_cur = p_cur, ((2 * l + 1) * flat * p_cur - l * p_prev) / (l + 1)
        s2 = 1.0 - flat * flat
        with np.errstate(invalid="ignore", divide="ignore"):
            scal = np.where(s2 > 1e-28, acc / s2, 0.0).reshape(z.shape)
        return scal[..., None] * (a - z[..., None] * x)

    def closed_form_variation(self):
        return TWO_PI * math.sqrt(1.0 - self.height * self.height)

    def snapped(self, grid):
        a = np.asarray(self.axis)
        if abs(abs(a[2]) - 1.0) > 0.0:
            return self
        edges = grid.edges[0][1:-1]
        target = self.height if a[2] > 0 else -self.height
        e = float(edges[np.argmin(np.abs(edges - target))])
        h = e if a[2] > 0 else -e
        return self if h == self.height else IndicatorCap(self.manifold, self.axis, h)

    def zonal(self):
        return ZonalProfile(self.axis, 0.0, 0.0, ((self.height, 1.0),))


# -- composites ---------------------------------------------------------------

def _boundaries_overlap(f: ScalarField, g: ScalarField) -> bool:
    if isinstance(f, IndicatorCap):
        a, b = np.asarray(f.axis), np.asarray(g.axis)
        same = np.allclose(a, b, atol=1e-12) and abs(f.height - g.height) <= 1e-12
        anti = np.allclose(a, -b, atol=1e-12) and abs(f.height + g.height) <= 1e-12
        return bool(same or anti)
    m = f.manifold
    for i, c in f.faces():
        for j, d in g.faces():
            if i != j or not _same_angle(c, d, m.periods[i]):
                continue
            area = 1.0
            for k in range(m.dim):
                if k != i:
                    area *= _circle_overlap(f.starts[k], f.lengths[k], g.starts[k],
                                            g.lengths[k], m.periods[k])
            if area > 0.0:
                return True
    return False


@dataclass(frozen=True, repr=False)
class Scale(ScalarField):
    coef: float
    inner: ScalarField

    @property
    def manifold(self):
        return self.inner.manifold

    @property
    def smooth(self):
        return self.inner.smooth

    @property
    def id(self):
        return f"{self.coef!r}*{self.inner.id}"

    def __call__(self, x):
        return self.coef * self.inner(x)

    def gradient(self, x):
        return self.coef * self.inner.gradient(x)

    def linear_parts(self):
        return [(self.coef * c, p) for c, p in self.inner.linear_parts()]

    def heat_evolved(self, t):
        ev = self.inner.heat_evolved(t)
        return None if ev is None else Scale(self.coef, ev)

    def closed_form_variation(self):
        v = self.inner.closed_form_variation()
        return None if v is None else abs(self.coef) * v

    def closed_form_p_energy(self, p):
        v = self.inner.closed_form_p_energy(p)
        return None if v is None else abs(self.coef) ** p * v

    def snapped(self, grid):
        s = self.inner.snapped(grid)
        return self if s is self.inner else Scale(self.coef, s)

    def zonal(self):
        z = self.inner.zonal()
        if z is None:
            return None
        return ZonalProfile(z.axis, self.coef * z.const, self.coef * z.slope,
                            tuple((u, self.coef * c) for u, c in z.steps))


@dataclass(frozen=True, repr=False)
class Sum(ScalarField):
    """Finite sum of fields; indicator parts must have disjoint boundaries."""

    parts: tuple

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise ConfigError("empty sum")
        m = parts[0].manifold
        if any(p.manifold != m for p in parts):
            raise ConfigError("all summands must live on the same manifold")
        object.__setattr__(self, "parts", parts)
        ind = [p for c, p in self.linear_parts() if p.is_indicator and c != 0.0]
        for i in range(len(ind)):
            for j in range(i):
                if _boundaries_overlap(ind[i], ind[j]):
                    raise ConfigError(
                        f"indicator boundaries of {ind[i].id} and {ind[j].id} overlap")

    @property
    def manifold(self):
        return self.parts[0].manifold

    @property
    def smooth(self):
        return all(p.smooth for p in self.parts)

    @property
    def id(self):
        return "+".join(p.id for p in self.parts)

    def __call__(self, x):
        return sum(p(x) for p in self.parts)

    def gradient(self, x):
        return sum(p.gradient(x) for p in self.parts)

    def linear_parts(self):
        return [cp for p in self.parts for cp in p.linear_parts()]

    def heat_evolved(self, t):
        evs = [p.heat_evolved(t) for p in self.parts]
        return None if any(e is None for e in evs) else Sum(tuple(evs))

    def _active(self):
        return [(c, p) for c, p in self.linear_parts()
                if c != 0.0 and not isinstance(p, Constant)]

    def closed_form_variation(self):
        active = self._active()
        if not active:
            return 0.0
        if all(p.is_indicator for _, p in active):
            return sum(abs(c) * p.closed_form_variation() for c, p in active)
        if len(active) == 1:
            c, p = active[0]
            v = p.closed_form_variation()
            return None if v is None else abs(c) * v
        return None

    def closed_form_p_energy(self, p):
        active = self._active()
        if not active:
            return 0.0
        if len(active) == 1 and active[0][1].smooth:
            c, q = active[0]
            return abs(c) ** p * q.closed_form_p_energy(p)
        return None

    def snapped(self, grid):
        new = tuple(p.snapped(grid) for p in self.parts)
        return self if all(a is b for a, b in zip(new, self.parts)) else Sum(new)

    def zonal(self):
        out = None
        for coef, part in self.linear_parts():
            z = part.zonal()
            if z is None:
                return None
            if isinstance(part, Constant):
                z = ZonalProfile(out.axis if out else z.axis, z.const)
            if out is None:
                out = ZonalProfile(z.axis, coef * z.const, coef * z.slope,
                                   tuple((u, coef * c) for u, c in z.steps))
                continue
            a, b = np.asarray(out.axis), np.asarray(z.axis)
            if np.allclose(a, -b, atol=1e-14):
                z = z.flipped()
            elif not np.allclose(a, b, atol=1e-14):
                return None
            out = out.merged(z, coef)
        return out


def complement(f: ScalarField) -> ScalarField:
    """``1 - f``; for an indicator this is the indicator of the complement."""
    return Sum((Constant(f.manifold, 1.0), Scale(-1.0, f)))


# -- registry -----------------------------------------------------------------

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.USub: operator.neg, ast.UAdd: operator.pos}


def _num(text: str) -> float:
    """Evaluate a small arithmetic expression that may use ``pi``."""
    def ev(node):
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ValueError
    try:
        return ev(ast.parse(text.strip(), mode="eval").body)
    except (SyntaxError, ValueError, ZeroDivisionError):
        raise ConfigError(f"cannot read number {text!r}") from None


def _split_terms(text: str) -> list[str]:
    # '+' separates summands except inside an exponent such as 1e+3
    out, cur = [], ""
    for i, ch in enumerate(text):
        if ch == "+" and cur and not (cur[-1] in "eE" and cur[-2:-1].isdigit()):
            out.append(cur)
            cur = ""
        else:
            cur += ch
    out.append(cur)
    return [s.strip() for s in out if s.strip()]


def _parse_atom(m: ManifoldDescriptor, text: str) -> ScalarField:
    parts = text.split(":")
    kind = parts[0]
    if kind in ("circle", "torus", "sphere"):
        if (kind == "torus") != (m.kind is Kind.FLAT_TORUS) or \
                (kind == "circle") != (m.kind is Kind.CIRCLE):
            raise ConfigError(f"field {text!r} does not live on {m.id}")
        parts = parts[1:]
    if not parts:
        raise ConfigError(f"empty field id {text!r}")
    name, args = parts[0], parts[1:]
    try:
        if m.is_flat and name in ("cos", "sin"):
            phase = 0.0 if name == "cos" else -np.pi / 2
            if args:
                freq = tuple(int(v) for v in args[0].split(","))
            else:
                freq = (1,) + (0,) * (m.dim - 1)
            return TrigMode(m, freq, 1.0, phase)
        if m.kind is Kind.CIRCLE and name == "arc" and len(args) == 2:
            return IndicatorArc(m, _num(args[0]), _num(args[1]))
        if m.kind is Kind.FLAT_TORUS and name == "box" and len(args) == m.dim:
            ab = [tuple(_num(v) for v in a.split(",")) for a in args]
            if any(len(p) != 2 for p in ab):
                raise ConfigError("box sides are written a,b")
            lengths = []
            for (a, b), P in zip(ab, m.periods):
                L = b - a
                lengths.append(P if L >= P else L % P)
            return IndicatorBox(m, tuple(a for a, _ in ab), tuple(lengths))
        if m.kind is Kind.SPHERE2 and name in ("x", "y", "z") and not args:
            axis = tuple(float(name == c) for c in "xyz")
            return SphereLinear(m, axis)
        if m.kind is Kind.SPHERE2 and name == "cap" and len(args) in (1, 2):
            axis = (0.0, 0.0, 1.0)
            if len(args) == 2:
                axis = tuple(_num(v) for v in args[1].split(","))
                if len(axis) != 3:
                    raise ConfigError("cap axis needs three components")
            return IndicatorCap.from_angle(m, _num(args[0]), axis)
        if name == "const" and len(args) == 1:
            return Constant(m, _num(args[0]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad field id {text!r}: {exc}") from None
    raise ConfigError(f"unknown field id {text!r} on {m.id}")


def parse_field(m: ManifoldDescriptor | str, text: str) -> ScalarField:
    """Build a field from its registry id.

    A bare name such as ``cos`` is read relative to the manifold ``m``.
    """
    if isinstance(m, str):
        m = manifold_from_id(m)
    terms = []
    for term in _split_terms(text):
        coef = 1.0
        star = term.find("*")
        if star >= 0 and ":" not in term[:star]:
            coef, term = _num(term[:star]), term[star + 1:]
        atom = _parse_atom(m, term.strip())
        terms.append(atom if coef == 1.0 else Scale(coef, atom))
    if not terms:
        raise ConfigError("empty field id")
    return terms[0] if len(terms) == 1 else Sum(tuple(terms))


_REGISTRY = {
    Kind.CIRCLE: ("circle:cos", "circle:arc:0:pi"),
    Kind.FLAT_TORUS: ("torus:cos:1,0", "torus:cos:0,2", "torus:box:0,pi:0,pi"),
    Kind.SPHERE2: ("sphere:z", "sphere:cap:pi/2"),
}


def registry_ids(m: ManifoldDescriptor) -> tuple[str, ...]:
    """Standard test fields of a manifold."""
    return _REGISTRY[m.kind]


def canonical_field(m: ManifoldDescriptor) -> ScalarField:
    return parse_field(m, _REGISTRY[m.kind][0])


# -- total variation ----------------------------------------------------------

class Provenance(str, enum.Enum):
    CLOSED_FORM = "ClosedForm"
    QUADRATURE = "QuadratureOfGradient"


@dataclass(frozen=True)
class VariationReference:
    value: float
    provenance: Provenance
    p_energy: dict = field(default_factory=dict)

    def scaled(self, p: float = 1.0) -> float:
        """Limit predicted for the p-functional: ``c_p`` times the p-energy."""
        from .functionals import sobolev_constant
        base = self.value if p == 1.0 else self.p_energy[p]
        return sobolev_constant(p) * base


def _cell_quadrature(grid: QuadratureGrid, integrand, chunk: int = 1 << 18) -> float:
    """Composite 8-point Gauss-Legendre rule on every grid cell.

    Cells are those of ``grid`` in native coordinates (angles on the flat
    manifolds, polar/azimuthal angle on the sphere), so integrands whose
    kinks sit on cell edges are integrated to full accuracy.
    """
    xi, wi = _GL8
    m = grid.manifold
    if m.is_flat:
        pts, wts = [], []
        for e in grid.edges:
            lo, hi = e[:-1, None], e[1:, None]
            pts.append((0.5 * (lo + hi) + 0.5 * (hi - lo) * xi).ravel())
            wts.append((0.5 * (hi - lo) * wi).ravel())
        if m.dim == 1:
            return float(np.sum(wts[0] * integrand(pts[0][:, None])))
        total = 0.0
        rest_pts = np.stack([g.ravel() for g in np.meshgrid(*pts[1:], indexing="ij")], -1)
        rest_w = np.prod(np.stack([g.ravel() for g in np.meshgrid(*wts[1:], indexing="ij")], -1), -1)
        for a, wa in zip(pts[0], wts[0]):
            x = np.concatenate([np.full((len(rest_pts), 1), a), rest_pts], axis=1)
            total += wa * float(np.sum(rest_w * integrand(x)))
        return total
    z_edges, phi_edges = grid.edges
    th_edges = np.arccos(np.clip(z_edges, -1, 1))[::-1]
    lo, hi = th_edges[:-1, None], th_edges[1:, None]
    th = (0.5 * (lo + hi) + 0.5 * (hi - lo) * xi).ravel()
    wth = (0.5 * (hi - lo) * wi).ravel() * np.sin(th)
    lo, hi = phi_edges[:-1, None], phi_edges[1:, None]
    ph = (0.5 * (lo + hi) + 0.5 * (hi - lo) * xi).ravel()
    wph = (0.5 * (hi - lo) * wi).ravel()
    total = 0.0
    cph, sph = np.cos(ph), np.sin(ph)
    for t_, w_ in zip(th, wth):
        x = np.stack([np.sin(t_) * cph, np.sin(t_) * sph, np.full_like(ph, np.cos(t_))], -1)
        total += w_ * float(np.sum(wph * integrand(x)))
    return total


def gradient_norm_field(f: ScalarField):
    """Pointwise ``|grad f|`` as a callable on points."""
    if not f.smooth:
        raise NotDifferentiable(f"{f.id} is not differentiable")
    return f.gradient_norm


def sobolev_p_energy(f: ScalarField, p: float, grid: QuadratureGrid) -> float:
    """``int |grad f|^p`` by cell quadrature of the closed-form gradient."""
    if p < 1:
        raise ValueError("p must be at least 1")
    if not f.smooth:
        if p > 1:
            raise NotDifferentiable(f"{f.id} is not in W^(1,p) for p > 1")
        return total_variation_reference(f, grid).value
    g = gradient_norm_field(f)
    return _cell_quadrature(grid, lambda x: g(x) ** p)


def total_variation_reference(f: ScalarField, grid: QuadratureGrid,
                              powers=(1.0, 2.0)) -> VariationReference:
    """Ground-truth ``||Df||(M)`` for a registry field.

    Smooth fields integrate the closed-form gradient norm on ``grid``;
    indicator fields (and disjoint-boundary sums of them) use perimeters.
    """
    active = [(c, p) for c, p in f.linear_parts() if c != 0.0 and not isinstance(p, Constant)]
    kinds = {p.smooth for _, p in active}
    if len(kinds) > 1:
        raise UnsupportedField(f"{f.id} mixes smooth and indicator parts")
    if not active:
        return VariationReference(0.0, Provenance.CLOSED_FORM, {q: 0.0 for q in powers})
    if not f.smooth:
        return VariationReference(float(f.closed_form_variation()), Provenance.CLOSED_FORM)
    energies = {float(q): sobolev_p_energy(f, q, grid) for q in powers}
    value = energies.get(1.0)
    if value is None:
        value = sobolev_p_energy(f, 1.0, grid)
    return VariationReference(value, Provenance.QUADRATURE, energies)
