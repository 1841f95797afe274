import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatbv import (ConfigError, DomainError, FunctionalConfig, IllConditionedFit,
                    ResolutionTooCoarse, SpectralKernel, build_quadrature, bv_functional,
                    bv_functional_gaussian_ball, circle, degiorgi_functional, extrapolate_limit,
                    flat_torus, parse_field, run_convergence, sobolev_constant, sphere2,
                    tail_contribution)
from heatbv.fields import Constant, Scale
from heatbv.functionals import (gaussian_polar_moment, required_resolution,
                                sphere_average_abs_moment)

import oracles

C1, T2, S2 = circle(), flat_torus(), sphere2()
KC, KT, KS = SpectralKernel(C1), SpectralKernel(T2), SpectralKernel(S2)
COS = parse_field(C1, "cos")
ARC = parse_field(C1, "arc:0:pi")
Z = parse_field(S2, "z")
CAP = parse_field(S2, "cap:pi/2")


def grid_for(m, t, factor=4.0):
    return build_quadrature(m, required_resolution(m, t, factor))


# -- exact-kernel functional --------------------------------------------------

@pytest.mark.parametrize("m,k", [(C1, KC), (T2, KT), (S2, KS)])
def test_constant_gives_zero(m, k):
    g = grid_for(m, 0.01)
    c = Constant(m, 2.5)
    assert bv_functional(k, c, 0.01, g) == 0.0
    assert bv_functional_gaussian_ball(m, c, 0.01, 1.0, g) == 0.0
    assert tail_contribution(k, c, 0.01, 1.0, g) == 0.0
    assert degiorgi_functional(k, c, 0.01, g) == 0.0


def test_arc_matches_spectral_oracle():
    g = build_quadrature(C1, 32768)
    v = bv_functional(KC, ARC.snapped(g), 0.01, g)
    assert v == pytest.approx(oracles.FROZEN["arc_F_t0.01"], abs=1e-6)


@pytest.mark.parametrize("t", [0.01, 0.001])
def test_hemisphere_matches_legendre_oracle(t):
    g = grid_for(S2, t)
    v = bv_functional(KS, CAP.snapped(g), t, g)
    assert v == pytest.approx(oracles.FROZEN[f"hemisphere_F_t{t:g}"], rel=1e-9)


def test_circle_cos_small_t():
    t = 1e-4
    v = bv_functional(KC, COS, t, grid_for(C1, t))
    assert v == pytest.approx(8 / math.sqrt(math.pi), rel=0.01)


def test_resolution_rule_enforced():
    with pytest.raises(ResolutionTooCoarse):
        bv_functional(KC, COS, 1e-4, build_quadrature(C1, 64))


def test_resolution_cap():
    with pytest.raises(ResolutionTooCoarse):
        required_resolution(T2, 1e-5)
    assert required_resolution(C1, 1e-4) % 2 == 0


@given(st.floats(-5, 5).filter(lambda c: abs(c) > 1e-3), st.sampled_from([1.0, 2.0, 3.0]))
@settings(max_examples=15)
def test_homogeneity(c, p):
    g = grid_for(C1, 0.01)
    a = bv_functional(KC, Scale(c, COS), 0.01, g, p)
    b = bv_functional(KC, COS, 0.01, g, p)
    assert a == pytest.approx(abs(c) ** p * b, rel=1e-12)


@pytest.mark.parametrize("m,k,fid", [(C1, KC, "cos"), (C1, KC, "arc:0:pi"),
                                     (T2, KT, "torus:cos:0,2")])
def test_symmetric_vs_ordered_pairs(m, k, fid):
    t = 0.02
    g = grid_for(m, t)
    f = parse_field(m, fid).snapped(g)
    a = bv_functional(k, f, t, g, symmetric=True, method="direct")
    b = bv_functional(k, f, t, g, symmetric=False, method="direct")
    assert a == pytest.approx(b, rel=1e-13)


def test_fft_and_direct_agree_on_indicator():
    g = grid_for(T2, 0.05)
    f = parse_field(T2, "torus:box:0,pi:0,pi").snapped(g)
    a = bv_functional(KT, f, 0.05, g, method="direct")
    b = bv_functional(KT, f, 0.05, g, method="fft")
    assert a == pytest.approx(b, rel=1e-12)


def test_sphere_zonal_matches_polar_fallback():
    """Rotate z to a tilted axis so the ring shortcut is not available."""
    t = 0.05
    g = grid_for(S2, t)
    tilted = parse_field(S2, "x")
    a = bv_functional(KS, Z, t, g)
    b = bv_functional(KS, tilted, t, g)
    assert b == pytest.approx(a, rel=1e-5)


# -- Gaussian ball and tail ---------------------------------------------------

def test_gaussian_ball_close_to_exact():
    t = 1e-4
    g = grid_for(C1, t)
    a = bv_functional(KC, COS, t, g)
    b = bv_functional_gaussian_ball(C1, COS, t, 1.0, g)
    assert b == pytest.approx(8 / math.sqrt(math.pi), rel=0.01)
    assert abs(a - b) <= 0.005 * a


def test_gaussian_ball_radius_validated():
    with pytest.raises(DomainError):
        bv_functional_gaussian_ball(C1, COS, 0.01, 3.5, grid_for(C1, 0.01))


def test_tail_small_and_decreasing():
    vals = []
    for t in (1e-2, 1e-3, 1e-4):
        vals.append(tail_contribution(KC, COS, t, 0.5, grid_for(C1, t)))
    assert vals[1] <= 1e-6
    assert vals[0] > vals[1] > vals[2] >= 0
    # oracle: 2 int_{0.5}^{pi} |f(x)-f(x+s)| p_t(s) ds over x, bounded by
    # vol * 2 * 2 * int_{0.5} p_t <= 8 pi erfc(0.5/(2 sqrt t)) / sqrt t
    bound = 8 * math.pi * math.erfc(0.5 / (2 * math.sqrt(1e-3))) / math.sqrt(1e-3)
    assert vals[1] <= bound


def test_tail_plus_ball_equals_total_for_exact_kernel():
    t = 0.02
    g = grid_for(C1, t)
    eps = 0.4
    from heatbv.functionals import kernel_difference_functional
    total = bv_functional(KC, COS, t, g)
    tail = tail_contribution(KC, COS, t, eps, g)
    diff = kernel_difference_functional(KC, COS, t, eps, g)
    ball = bv_functional_gaussian_ball(C1, COS, t, eps, g)
    # |exact - ball| <= diff, and the tail is part of diff
    assert abs(total - ball) <= diff + 1e-12
    assert tail <= diff + 1e-12


# -- De Giorgi ----------------------------------------------------------------

def test_degiorgi_circle_cos():
    assert degiorgi_functional(KC, COS, 0.01, build_quadrature(C1, 64)) == pytest.approx(
        4 * math.exp(-0.01), abs=1e-12)


def test_degiorgi_sphere_z():
    # |grad P_t z| = e^{-2t} sin(theta), integral pi^2 e^{-2t}
    v = degiorgi_functional(KS, Z, 0.05, build_quadrature(S2, 32))
    assert v == pytest.approx(math.pi ** 2 * math.exp(-0.1), abs=1e-10)


def test_degiorgi_arc_closed_form():
    # P_t 1_arc has |gradient| = sum of two wrapped Gaussians; total mass 2 minus
    # overlap: int |p_t(s) - p_t(s - pi)| ds over the circle
    t = 0.01
    g = grid_for(C1, t, 16)
    v = degiorgi_functional(KC, ARC, t, g)
    s = g.nodes[:, 0]
    dens = KC.axis_kernel(t, s) - KC.axis_kernel(t, s - math.pi)
    assert v == pytest.approx(float(np.sum(np.abs(dens)) * g.spacing), rel=1e-10)
    assert v == pytest.approx(2.0, rel=1e-6)


def test_degiorgi_hemisphere_near_perimeter():
    v = degiorgi_functional(KS, CAP, 1e-3, grid_for(S2, 1e-3))
    assert v == pytest.approx(2 * math.pi, rel=2e-3)


# -- extrapolation ------------------------------------------------------------

T = np.geomspace(0.1, 1e-4, 12)


def test_extrapolate_exact_models():
    r = extrapolate_limit([(t, 7 + 2 * math.sqrt(t)) for t in T])
    assert r.limit == pytest.approx(7, abs=1e-10)
    r = extrapolate_limit([(t, 7.0) for t in T])
    assert r.limit == pytest.approx(7, abs=1e-10)
    assert abs(r.a) < 1e-10 and abs(r.b) < 1e-10
    assert r.t_min == pytest.approx(1e-4) and r.f_tmin == 7.0


def test_extrapolate_errors():
    with pytest.raises(ValueError):
        extrapolate_limit([(0.1, 1), (0.01, 1), (0.001, 1)])
    with pytest.raises(IllConditionedFit):
        extrapolate_limit([(1e-3 * (1 + 1e-6 * i), 1.0) for i in range(6)])


def test_extrapolate_arc_rows():
    ts = np.geomspace(0.1, 1e-4, 12)
    rows = []
    for t in ts:
        g = grid_for(C1, t)
        rows.append((t, bv_functional(KC, ARC.snapped(g), t, g)))
    assert extrapolate_limit(rows).limit == pytest.approx(4 / math.sqrt(math.pi), rel=0.005)


# -- constants ----------------------------------------------------------------

def test_sobolev_constant_values():
    assert sobolev_constant(1) == pytest.approx(2 / math.sqrt(math.pi), rel=1e-15)
    assert sobolev_constant(1) == pytest.approx(1.128379, abs=5e-7)
    assert sobolev_constant(2) == pytest.approx(2.0, rel=1e-15)
    with pytest.raises(ValueError):
        sobolev_constant(0.5)


@pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 3.0])
@pytest.mark.parametrize("n", [2, 3, 4])
def test_sobolev_constant_polar_identity(p, n):
    v = sphere_average_abs_moment(p, n) * gaussian_polar_moment(p, n)
    assert v == pytest.approx(sobolev_constant(p), rel=1e-10)


def test_sphere_average_low_p_closed_form():
    # n = 3: average of |cos|^p is 1/(p+1)
    assert sphere_average_abs_moment(2.0, 3) == pytest.approx(1 / 3, rel=1e-13)


# -- convergence driver -------------------------------------------------------

def test_run_convergence_circle_cos():
    rep = run_convergence(C1, COS)
    assert rep.relative_error < 0.01
    assert len(rep.rows) == 12
    assert rep.reference.value == pytest.approx(4.0)
    d = rep.as_dict()
    assert set(d) >= {"limit", "fit", "reference", "rel_error", "F_t_min"}
    # F(t) approaches the reference monotonically along the tail
    err = [abs(r.value - rep.reference_scaled) for r in rep.rows]
    assert all(a > b for a, b in zip(err[-6:], err[-5:]))


def test_run_convergence_sobolev_p2():
    cfg = FunctionalConfig(np.geomspace(0.1, 1e-4, 12), p=2.0)
    rep = run_convergence(C1, COS, "sobolev", cfg)
    assert rep.extrapolated_limit == pytest.approx(2 * math.pi, rel=0.01)


@pytest.mark.parametrize("kw", [dict(t_grid=(0.1, 0.2)), dict(t_grid=(0.1, -1)),
                                dict(t_grid=(0.1,), p=0.5), dict(t_grid=(0.1,), spacing_factor=2)])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        FunctionalConfig(**kw)


def test_run_convergence_validation():
    with pytest.raises(ConfigError):
        run_convergence(C1, COS, "gaussian-ball")
    with pytest.raises(ConfigError):
        run_convergence(C1, COS, "monte-carlo")
    with pytest.raises(ConfigError):
        run_convergence(C1, COS, "bogus")
    with pytest.raises(ConfigError):
        run_convergence(S2, COS)
