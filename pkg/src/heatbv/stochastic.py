"""Brownian motion on the model manifolds and Monte Carlo functionals.

Brownian motion here is generated by ``Delta/2``, so ``P_t = exp(t Delta)``
acts like the Brownian transition at time ``2t``.  On flat manifolds paths
are sampled exactly; on the sphere by the geodesic random walk
``x -> exp_x(sqrt(h) * xi)`` with an orthonormal frame carried along by
parallel transport.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .manifolds import (
    ManifoldDescriptor,
    exp_map,
    make_point,
    sample_uniform,
    sphere2,
    tangent_frame,
)
from .rng import as_seed, blocks, stream

__all__ = [
    "RandomWalkConfig",
    "BrownianPath",
    "MCEstimate",
    "OneFormEstimate",
    "sample_path",
    "walk",
    "coarsen_increments",
    "mc_bv_estimate",
    "gaussian_absmoment_check",
    "feynman_kac_oneform",
    "brownian_expectation",
]


@dataclass(frozen=True)
class RandomWalkConfig:
    """Monte Carlo settings.

    ``step_size`` is the Brownian time step of the sphere walk; ``None`` means
    one fiftieth of the semigroup time being estimated.
    """

    step_size: float | None = None
    n_paths: int = 100_000
    seed: int = 0
    antithetic: bool = True
    block_size: int = 16384
    threads: int = 1

    def __post_init__(self):
        if self.n_paths < 100:
            raise ConfigError("n_paths: need at least 100 paths")
        if self.step_size is not None and self.step_size <= 0:
            raise ConfigError("step_size: must be positive")
        if self.block_size < 2 or self.block_size % 2:
            raise ConfigError("block_size: must be a positive even number")
        if self.antithetic and self.n_paths % 2:
            raise ConfigError("n_paths: must be even with antithetic pairs")

    def step_for(self, t: float) -> float:
        h = t / 50.0 if self.step_size is None else self.step_size
        if h > t / 20.0 * (1 + 1e-12):
            raise ConfigError(f"step_size: {h:g} exceeds t/20 = {t / 20:g}")
        return h


@dataclass
class BrownianPath:
    times: np.ndarray
    points: np.ndarray
    frames: np.ndarray


@dataclass(frozen=True)
class MCEstimate:
    """Sample mean with its standard error.

    With antithetic pairs the sampling unit is the pair: ``stderr`` is the
    standard deviation of pair means over ``sqrt(n/2)``.
    """

    mean: float
    stderr: float
    n: int


@dataclass(frozen=True)
class OneFormEstimate:
    mean: np.ndarray
    stderr: np.ndarray
    n: int
    target: np.ndarray

    @property
    def relative_gap(self) -> float:
        return float(np.linalg.norm(self.mean - self.target) / np.linalg.norm(self.target))


# -- walking ------------------------------------------------------------------

def _step_sphere(x, frame, xi, sqrt_h):
    """One geodesic step with frame transport; ``xi`` has shape ``(n, 2)``."""
    v = sqrt_h * (xi[:, 0:1] * frame[:, 0] + xi[:, 1:2] * frame[:, 1])
    r = np.linalg.norm(v, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        u = np.where(r > 0, v / r, 0.0)
    cr, sr = np.cos(r), np.sin(r)
    x_new = cr * x + sr * u
    x_new /= np.linalg.norm(x_new, axis=-1, keepdims=True)
    # E' = E + <E,u>((cos r - 1) u - sin r x): rotation in span(x, u)
    push = ((cr - 1.0) * u - sr * x)[:, None, :]
    eu = np.einsum("nkj,nj->nk", frame, u)[:, :, None]
    return x_new, frame + eu * push


def walk(m: ManifoldDescriptor, x0, t_end: float, h: float, increments: np.ndarray,
         frame0=None, record: bool = False):
    """Advance a batch of walkers with given standard-normal increments.

    ``increments`` has shape ``(n_steps, n, dim)``; the step count fixes the
    actual step ``t_end / n_steps`` and ``h`` is only used for flat manifolds
    where a single exact step is taken.  Returns final points and frames
    (and every intermediate state if ``record``).
    """
    x = np.array(x0, dtype=float)
    n_steps = increments.shape[0]
    dt = t_end / n_steps
    frame = tangent_frame(m, x) if frame0 is None else np.array(frame0, dtype=float)
    hist = [(x.copy(), frame.copy())] if record else None
    if m.is_flat:
        for i in range(n_steps):
            x = exp_map(m, x, math.sqrt(dt) * increments[i])
            if record:
                hist.append((x.copy(), frame.copy()))
        return (x, frame, hist) if record else (x, frame)
    sq = math.sqrt(dt)
    for i in range(n_steps):
        x, frame = _step_sphere(x, frame, increments[i], sq)
        if record:
            hist.append((x.copy(), frame.copy()))
    return (x, frame, hist) if record else (x, frame)


def coarsen_increments(xi: np.ndarray) -> np.ndarray:
    """Pair consecutive fine increments into the increments of a walk with twice the step.

    Both walks then follow the same anti-development, which is what makes
    step-size comparisons low-variance.
    """
    if xi.shape[0] % 2:
        raise ValueError("need an even number of fine steps")
    return (xi[0::2] + xi[1::2]) / math.sqrt(2.0)


def _n_steps(m, t_end, h):
    if m.is_flat:
        return 1
    return max(1, int(round(t_end / h)))


def sample_path(m: ManifoldDescriptor, x0, t_end: float, cfg: RandomWalkConfig,
                rng=None) -> BrownianPath:
    """One Brownian path up to time ``t_end`` (generator ``Delta/2``).

    Flat manifolds are sampled exactly on the step grid; the sphere uses the
    geodesic random walk.
    """
    if t_end <= 0:
        raise DomainError("t_end must be positive")
    gen = rng if isinstance(rng, np.random.Generator) else stream(as_seed(rng if rng is not None else cfg.seed))
    h = cfg.step_size if cfg.step_size is not None else t_end
    n = max(1, int(round(t_end / h)))
    xi = gen.standard_normal((n, 1, m.dim))
    x0 = make_point(m, x0)[None, :]
    if m.is_flat:
        x = x0.copy()
        pts, fr = [x[0].copy()], [np.eye(m.dim)]
        for i in range(n):
            x = exp_map(m, x, math.sqrt(t_end / n) * xi[i])
            pts.append(x[0].copy())
            fr.append(np.eye(m.dim))
        return BrownianPath(np.linspace(0, t_end, n + 1), np.array(pts), np.array(fr))
    _, _, hist = walk(m, x0, t_end, h, xi, record=True)
    return BrownianPath(np.linspace(0, t_end, n + 1),
                        np.array([p[0] for p, _ in hist]), np.array([f[0] for _, f in hist]))


# -- Monte Carlo ----------------------------------------------------------------

def _block_increments(gen, n_steps, n, dim, antithetic):
    if antithetic:
        half = gen.standard_normal((n_steps, n // 2, dim))
        return np.concatenate([half, -half], axis=1)
    return gen.standard_normal((n_steps, n, dim))


def _pair_reduce(samples: np.ndarray, antithetic: bool) -> MCEstimate:
    n = samples.size
    if antithetic:
        half = n // 2
        units = 0.5 * (samples[:half] + samples[half:])
    else:
        units = samples
    mean = float(np.mean(samples))
    stderr = float(np.std(units, ddof=1) / math.sqrt(units.size))
    return MCEstimate(mean, stderr, int(n))


def _run_blocks(cfg: RandomWalkConfig, seed: int, fn):
    """Evaluate ``fn(gen, n)`` per block and return per-sample values in block order.

    Antithetic partners are interleaved block-wise as ``[first half, second
    half]``; the result is rearranged so that sample ``i`` and ``i + n/2`` form a
    pair.
    """
    plan = blocks(cfg.n_paths, cfg.block_size)
    work = lambda b: fn(stream(seed, b[0]), b[2] - b[1])
    if cfg.threads > 1 and len(plan) > 1:
        with ThreadPoolExecutor(cfg.threads) as ex:
            outs = list(ex.map(work, plan))
    else:
        outs = [work(b) for b in plan]
    if cfg.antithetic:
        firsts = [o[: o.shape[0] // 2] for o in outs]
        seconds = [o[o.shape[0] // 2:] for o in outs]
        return np.concatenate(firsts + seconds)
    return np.concatenate(outs)


def brownian_expectation(m: ManifoldDescriptor, f, x0, t_end: float, cfg: RandomWalkConfig,
                         rng=None, h: float | None = None) -> MCEstimate:
    """``E f(X_t_end)`` for Brownian motion started at ``x0``."""
    seed = as_seed(rng if rng is not None else cfg.seed)
    h = h if h is not None else (cfg.step_size or t_end / 50.0)
    x0 = make_point(m, x0)
    steps = _n_steps(m, t_end, h)

    def block(gen, n):
        xi = _block_increments(gen, steps, n, m.dim, cfg.antithetic)
        x, _ = walk(m, np.broadcast_to(x0, (n, x0.size)), t_end, h, xi)
        return f(x)

    return _pair_reduce(_run_blocks(cfg, seed, block), cfg.antithetic)


def mc_bv_estimate(m: ManifoldDescriptor, f, t: float, cfg: RandomWalkConfig,
                   rng=None) -> MCEstimate:
    """Monte Carlo estimate of ``t^(-1/2) int E_x|f(X_2t) - f(x)| dmu(x)``.

    Starting points are uniform on ``M``; the result is scaled by the volume
    so it estimates the same quantity as the exact-kernel functional.
    """
    if t <= 0:
        raise DomainError("t must be positive")
    seed = as_seed(rng if rng is not None else cfg.seed)
    T = 2.0 * t
    h = cfg.step_for(t)
    steps = _n_steps(m, T, h)
    scale = m.volume / math.sqrt(t)

    def block(gen, n):
        k = n // 2 if cfg.antithetic else n
        x0 = sample_uniform(m, gen, k)
        if cfg.antithetic:
            x0 = np.concatenate([x0, x0])
        xi = _block_increments(gen, steps, n, m.dim, cfg.antithetic)
        x, _ = walk(m, x0, T, h, xi)
        return scale * np.abs(f(x) - f(x0))

    return _pair_reduce(_run_blocks(cfg, seed, block), cfg.antithetic)


def gaussian_absmoment_check(rng, n: int, antithetic: bool = False,
                             block_size: int = 1 << 18) -> MCEstimate:
    """Sample mean of ``|N|`` for standard normal ``N`` (target ``sqrt(2/pi)``)."""
    if n < 10_000:
        raise ConfigError("n: need at least 1e4 samples")
    cfg = RandomWalkConfig(n_paths=n, seed=as_seed(rng), antithetic=antithetic,
                           block_size=block_size)

    def block(gen, k):
        if antithetic:
            g = gen.standard_normal(k // 2)
            return np.abs(np.concatenate([g, -g]))
        return np.abs(gen.standard_normal(k))

    return _pair_reduce(_run_blocks(cfg, cfg.seed, block), antithetic)


def feynman_kac_oneform(x, t: float, cfg: RandomWalkConfig, rng=None, *,
                        m: ManifoldDescriptor | None = None, field=None,
                        ricci_factor: bool = True) -> OneFormEstimate:
    """Estimate ``Q_t df(x)``, the heat semigroup on 1-forms applied to ``df``.

    Along each walk ``X`` (run to Brownian time ``2t``) the covector
    ``df(X_2t)`` is read in the transported frame, carried back to ``x`` and
    damped by the Ricci factor ``exp(-Ric * t)`` (``exp(-t)`` on the unit
    sphere, 1 on flat manifolds).  The target is ``d P_t f(x)``.  Vectors are
    returned in ambient coordinates.
    """
    m = m or sphere2()
    if t <= 0:
        raise DomainError("t must be positive")
    if field is None:
        from .fields import canonical_field
        field = canonical_field(m)
    if not field.smooth:
        raise ConfigError("field: needs a smooth field")
    seed = as_seed(rng if rng is not None else cfg.seed)
    x = make_point(m, x)
    T = 2.0 * t
    h = cfg.step_for(t)
    steps = _n_steps(m, T, h)
    frame0 = tangent_frame(m, x)
    damp = math.exp(-m.ricci_constant * t) if ricci_factor else 1.0

    def block(gen, n):
        xi = _block_increments(gen, steps, n, m.dim, cfg.antithetic)
        xs, frames = walk(m, np.broadcast_to(x, (n, x.size)), T, h, xi,
                          frame0=np.broadcast_to(frame0, (n,) + frame0.shape))
        comps = np.einsum("nkj,nj->nk", frames, field.gradient(xs))
        return damp * comps @ frame0

    vals = _run_blocks(cfg, seed, block)
    ests = [_pair_reduce(vals[:, j], cfg.antithetic) for j in range(vals.shape[1])]
    target = field.heat_evolved(t).gradient(x[None])[0]
    return OneFormEstimate(np.array([e.mean for e in ests]), np.array([e.stderr for e in ests]),
                           ests[0].n, target)
