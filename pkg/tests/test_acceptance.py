"""Acceptance criteria 1-10.

Each test records its outcome; at module teardown one PASS/FAIL line per
criterion is written to the terminal.  Tolerances are the contract values
and are not relaxed where a target is unattainable: criterion 3 and the
literal form of 9b fail by design, and a corrected check runs next to each
so the underlying computation is still verified.
"""

import functools
import math
import time
from collections import OrderedDict

import numpy as np
import pytest

from heatbv import (RandomWalkConfig, SpectralKernel, build_quadrature, bv_functional,
                    bv_functional_gaussian_ball, circle, eval_heat_kernel, feynman_kac_oneform,
                    flat_torus, gaussian_absmoment_check, mc_bv_estimate, parallel_transport,
                    parse_field, registry_ids, run_convergence, semigroup_defect,
                    sobolev_constant, sphere2, tail_contribution)
from heatbv.functionals import (FunctionalConfig, gaussian_polar_moment, required_resolution,
                                sphere_average_abs_moment)
from heatbv.manifolds import make_tangent, sample_uniform
from heatbv.rng import stream
from heatbv.stochastic import coarsen_increments, walk

C1, T2, S2 = circle(), flat_torus(), sphere2()
SQPI = math.sqrt(math.pi)

RESULTS: "OrderedDict[str, list]" = OrderedDict((str(i), []) for i in range(1, 11))
EXTRA: list = []


def record(crit, name, ok, detail):
    (RESULTS[crit] if crit in RESULTS else EXTRA).append((name, bool(ok), detail))
    return ok


@pytest.fixture(scope="module", autouse=True)
def report(request):
    import numba
    numba.set_num_threads(1)
    yield
    tr = request.config.pluginmanager.getplugin("terminalreporter")
    write = tr.write_line if tr is not None else print
    write("")
    write("=" * 30 + " acceptance criteria " + "=" * 30)
    for crit, items in RESULTS.items():
        if not items:
            write(f"criterion {crit:>2}: NOT RUN")
            continue
        ok = all(i[1] for i in items)
        parts = "; ".join(f"{n}: {'ok' if o else 'FAIL'} ({d})" for n, o, d in items)
        write(f"criterion {crit:>2}: {'PASS' if ok else 'FAIL'} | {parts}")
    for n, o, d in EXTRA:
        write(f"supplementary {n}: {'PASS' if o else 'FAIL'} | {d}")


@functools.lru_cache(maxsize=None)
def converge(mid, fid, pipeline="exact-kernel", p=1.0):
    m = {"circle": C1, "torus": T2, "sphere": S2}[mid]
    from heatbv.functionals import default_t_grid
    cfg = FunctionalConfig(default_t_grid(m), p=p)
    t0 = time.perf_counter()
    rep = run_convergence(m, parse_field(m, fid), pipeline, cfg)
    return rep, time.perf_counter() - t0


def rel(a, b):
    return abs(a - b) / abs(b)


# -- 1 ------------------------------------------------------------------------

def test_c1_circle_cos():
    rep, secs = converge("circle", "circle:cos")
    target = 8 / SQPI
    assert rep.rows[-1].t == pytest.approx(1e-4)
    e = rel(rep.extrapolated_limit, target)
    ok = record("1", "limit", e <= 0.01, f"L={rep.extrapolated_limit:.7f} vs {target:.6f}, rel {e:.2e}")
    ok &= record("1", "runtime", secs <= 10, f"{secs:.2f} s <= 10 s")
    assert ok


# -- 2 ------------------------------------------------------------------------

def test_c2_bv_indicators():
    t0 = time.perf_counter()
    arc, _ = converge("circle", "circle:arc:0:pi")
    cap, _ = converge("sphere", "sphere:cap:pi/2")
    secs = time.perf_counter() - t0
    e1 = rel(arc.extrapolated_limit, 4 / SQPI)
    e2 = rel(cap.extrapolated_limit, 4 * SQPI)
    ok = record("2", "arc", e1 <= 0.01, f"L={arc.extrapolated_limit:.7f} vs {4 / SQPI:.6f}, rel {e1:.2e}")
    ok &= record("2", "hemisphere", e2 <= 0.02 and cap.rows[-1].t == pytest.approx(1e-3),
                 f"L={cap.extrapolated_limit:.7f} vs {4 * SQPI:.6f}, rel {e2:.2e}, t_min={cap.rows[-1].t:g}")
    ok &= record("2", "runtime", secs <= 300, f"{secs:.1f} s <= 300 s")
    assert ok


# -- 3 ------------------------------------------------------------------------

def test_c3_sphere_z_literal():
    """Literal target (2/sqrt(pi)) * 8 pi/3.  ||D z|| = pi^2, so this cannot hold."""
    rep, _ = converge("sphere", "sphere:z")
    target = 16 * SQPI / 3
    e = rel(rep.extrapolated_limit, target)
    ok = record("3", "limit vs 16 sqrt(pi)/3", e <= 0.015,
                f"L={rep.extrapolated_limit:.7f} vs {target:.6f}, rel {e:.2e}")
    assert ok


def test_c3_sphere_z_corrected():
    rep, _ = converge("sphere", "sphere:z")
    target = 2 * math.pi ** 1.5
    e = rel(rep.extrapolated_limit, target)
    ok = record("3-corrected", "sphere z vs (2/sqrt(pi)) pi^2 = 2 pi^1.5 (tol 1.5%)", e <= 0.015,
                f"L={rep.extrapolated_limit:.7f} vs {target:.6f}, rel {e:.2e}")
    assert ok


# -- 4 ------------------------------------------------------------------------

def test_c4_gaussian_ball_and_tail():
    k = SpectralKernel(C1)
    f = parse_field(C1, "cos")
    t = 1e-4
    g = build_quadrature(C1, required_resolution(C1, t))
    a = bv_functional(k, f, t, g)
    b = bv_functional_gaussian_ball(C1, f, t, 1.0, g)
    d = abs(a - b) / a
    ok = record("4", "ball vs exact", d <= 0.005, f"|diff|/F = {d:.2e} <= 5e-3")
    t = 1e-3
    g = build_quadrature(C1, required_resolution(C1, t))
    tail = tail_contribution(k, f, t, 0.5, g)
    ok &= record("4", "tail", tail <= 1e-6, f"tail(1e-3, 0.5) = {tail:.3e} <= 1e-6")
    assert ok


# -- 5 ------------------------------------------------------------------------

def test_c5_semigroup_defect():
    k = SpectralKernel(C1)
    f = parse_field(C1, "cos")
    g = build_quadrature(C1, 1 << 16)
    vals, worst = [], 0.0
    for t in (1e-2, 1e-3, 1e-4):
        v = semigroup_defect(k, t, f, g)
        worst = max(worst, abs(v - 4 * (1 - math.exp(-t)) / math.sqrt(t)))
        vals.append(v)
    ok = record("5", "analytic", worst <= 1e-9, f"max error {worst:.2e} <= 1e-9")
    ok &= record("5", "to zero", vals[0] > vals[1] > vals[2],
                 "decreasing: " + ", ".join(f"{v:.4g}" for v in vals))
    assert ok


# -- 6 ------------------------------------------------------------------------

FIELDS = [(mid, fid) for mid, m in (("circle", C1), ("torus", T2), ("sphere", S2))
          for fid in registry_ids(m)]


@pytest.mark.parametrize("mid,fid", FIELDS)
def test_c6_degiorgi_vs_bv(mid, fid):
    bv, _ = converge(mid, fid)
    dg, _ = converge(mid, fid, "degiorgi")
    target = bv.extrapolated_limit / (2 / SQPI)
    e = rel(dg.extrapolated_limit, target)
    ok = record("6", fid, e <= 0.01, f"rel {e:.2e}")
    assert ok


# -- 7 ------------------------------------------------------------------------

def test_c7_mc_circle():
    t = 0.01
    f = parse_field(C1, "cos")
    est = mc_bv_estimate(C1, f, t, RandomWalkConfig(n_paths=100_000, seed=7))
    g = build_quadrature(C1, required_resolution(C1, t, 16))
    q = bv_functional(SpectralKernel(C1), f, t, g)
    tol = max(3 * est.stderr, 0.02 * q)
    ok = record("7", "circle cos", abs(est.mean - q) <= tol,
                f"{est.mean:.5f} +- {est.stderr:.4f} vs {q:.5f}")
    assert ok


def test_c7_mc_hemisphere():
    t = 0.01
    f = parse_field(S2, "cap:pi/2")
    g = build_quadrature(S2, required_resolution(S2, t))
    fs = f.snapped(g)
    est = mc_bv_estimate(S2, fs, t, RandomWalkConfig(step_size=2e-4, n_paths=100_000, seed=7))
    q = bv_functional(SpectralKernel(S2), fs, t, g)
    tol = max(3 * est.stderr, 0.02 * q)
    ok = record("7", "hemisphere", abs(est.mean - q) <= tol,
                f"{est.mean:.4f} +- {est.stderr:.4f} vs {q:.4f} (rel {rel(est.mean, q):.2%})")
    assert ok


def test_c7_absmoment():
    est = gaussian_absmoment_check(stream(2024), 1_000_000)
    target = 2 / math.sqrt(2 * math.pi)
    ok = record("7", "E|N|", abs(est.mean - target) <= 3 * est.stderr,
                f"{est.mean:.6f} +- {est.stderr:.6f} vs {target:.6f}")
    assert ok


# -- 8 ------------------------------------------------------------------------

def test_c8_feynman_kac():
    x = np.array([1.0, 0.0, 0.0])
    cfg = RandomWalkConfig(step_size=1e-4, n_paths=100_000, seed=8)
    t = 0.05
    est = feynman_kac_oneform(x, t, cfg)
    gap = np.abs(est.mean - est.target)
    tol = np.maximum(3 * est.stderr, 0.02 * np.linalg.norm(est.target))
    ok = record("8", "with Ricci factor", bool(np.all(gap <= tol)),
                f"rel gap {est.relative_gap:.2e}")
    bad = feynman_kac_oneform(x, t, cfg, ricci_factor=False)
    broke = bool(np.any(np.abs(bad.mean - bad.target) > tol))
    ratio = float(np.linalg.norm(bad.mean) / np.linalg.norm(est.mean))
    ok &= record("8", "negative control", broke and abs(ratio - math.exp(t)) < 0.01,
                 f"without factor rel gap {bad.relative_gap:.2%}, ratio {ratio:.4f} ~ e^t = {math.exp(t):.4f}")
    assert ok


# -- 9 ------------------------------------------------------------------------

def test_c9a_sobolev_p2():
    rep, _ = converge("circle", "circle:cos", "sobolev", 2.0)
    e = rel(rep.extrapolated_limit, 2 * math.pi)
    ok = record("9", "p=2 limit", e <= 0.01,
                f"L={rep.extrapolated_limit:.7f} vs 2 pi, rel {e:.2e}")
    assert ok


def test_c9b_sphere_average_literal():
    """c_p against the plain sphere average of |<e, v>|^p (n = 2, the sphere's dimension)."""
    worst = max(abs(sobolev_constant(p) - sphere_average_abs_moment(p, 2))
                for p in (1, 1.5, 2, 3))
    ok = record("9", "c_p = sphere average (literal)", worst <= 1e-10, f"max |diff| = {worst:.3g}")
    assert ok


def test_c9b_sphere_average_corrected():
    worst = 0.0
    for n in (2, 3):
        for p in (1, 1.5, 2, 3):
            v = sphere_average_abs_moment(p, n) * gaussian_polar_moment(p, n)
            worst = max(worst, abs(v - sobolev_constant(p)))
    ok = record("9b-corrected", "c_p = sphere average x Gaussian radial moment, n=2,3",
                worst <= 1e-10, f"max |diff| = {worst:.2e}")
    assert ok


# -- 10 -----------------------------------------------------------------------

def test_c10_chapman_kolmogorov():
    worst = 0.0
    for m, n in ((C1, 64), (T2, 48), (S2, 48)):
        k, g = SpectralKernel(m), build_quadrature(m, n)
        x, y = g.nodes[1], g.nodes[g.size // 3]
        lhs = g.integrate(eval_heat_kernel(k, 0.05, x[None], g.nodes)
                          * eval_heat_kernel(k, 0.05, g.nodes, y[None]))
        worst = max(worst, abs(lhs - float(eval_heat_kernel(k, 0.1, x, y))))
    assert record("10", "Chapman-Kolmogorov", worst <= 1e-8, f"{worst:.1e}")


def test_c10_poisson_duality():
    k = SpectralKernel(C1)
    s = np.linspace(0, 2 * math.pi, 101)
    worst = 0.0
    for t in np.geomspace(1e-4, 1, 13):
        a = k.axis_kernel(t, s, method="spectral")
        b = k.axis_kernel(t, s, method="images")
        worst = max(worst, float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b)))))
    assert record("10", "Poisson duality", worst <= 1e-12, f"{worst:.1e}")


def test_c10_kernel_mass():
    worst = 0.0
    for m, n in ((C1, 64), (T2, 64), (S2, 48)):
        k, g = SpectralKernel(m), build_quadrature(m, n)
        for t in (0.05, 0.5):
            worst = max(worst, abs(g.integrate(eval_heat_kernel(k, t, g.nodes[2][None], g.nodes)) - 1))
    assert record("10", "kernel mass", worst <= 1e-10, f"{worst:.1e}")


def test_c10_transport_isometry():
    rng = np.random.default_rng(10)
    x = sample_uniform(S2, rng, 2000)
    y = sample_uniform(S2, rng, 2000)
    keep = np.einsum("ij,ij->i", x, y) > -0.999
    v = make_tangent(S2, x, rng.standard_normal((2000, 3)))
    w = parallel_transport(S2, x[keep], y[keep], v[keep])
    worst = float(np.max(np.abs(np.linalg.norm(w, axis=1) - np.linalg.norm(v[keep], axis=1))))
    assert record("10", "transport isometry", worst <= 1e-12, f"{worst:.1e}")


def test_c10_walk_bias_halves():
    T, h, n = 1.0, 0.05, 20_000
    xi = stream(1010).standard_normal((int(round(4 * T / h)), n, 2))
    levels = [coarsen_increments(coarsen_increments(xi)), coarsen_increments(xi), xi]
    start = np.broadcast_to(np.array([0.0, 0.0, 1.0]), (n, 3))
    z = [walk(S2, start, T, None, inc)[0][:, 2] for inc in levels]
    d1, d2 = z[0] - z[1], z[1] - z[2]
    ratio = d1.mean() / d2.mean()
    se = abs(ratio) * math.hypot(d1.std() / d1.mean(), d2.std() / d2.mean()) / math.sqrt(n)
    ok = abs(ratio - 2.0) <= max(4 * se, 0.25)
    assert record("10", "walk bias halves", ok, f"gap ratio {ratio:.3f} +- {se:.3f}")
