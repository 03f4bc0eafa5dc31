import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from ietmix import LogRoof, Suspension, golden_iet, new_iet, rotation
from ietmix.correlation import (
    BUMP_MASS,
    BumpObservable,
    CorrelationSeries,
    XBumps,
    boundary,
    bump,
    bump_from_config,
    correlate,
    decay_fit,
    fiber_integral,
    fiber_integral_dx,
    one_sided_limits,
    pi_hat,
)
from ietmix.errors import ConstructionError, PreconditionError
from ietmix.presets import DELTA_SUPP, default_observables, golden_asym

from conftest import irreducible_perms


def test_bump_mass():
    assert quad(lambda s: float(bump(s)), -1, 1)[0] == pytest.approx(BUMP_MASS, rel=1e-12)
    g = BumpObservable.single(2.0, 0.5, 0.1, 1.0, 0.3)
    assert g.integral() == pytest.approx(2.0 * 0.1 * 0.3 * BUMP_MASS**2)
    assert g.box() == pytest.approx((0.4, 0.6, 0.7, 1.3))


def test_partial_derivatives():
    g = BumpObservable.single(1.5, 0.5, 0.1, 1.0, 0.3) + BumpObservable.single(-0.5, 0.55, 0.05, 1.1, 0.2)
    h = 1e-7
    for x, y in ((0.47, 0.9), (0.53, 1.15), (0.58, 1.05)):
        assert g.dx(x, y) == pytest.approx((g(x + h, y) - g(x - h, y)) / (2 * h), rel=1e-5, abs=1e-8)
        assert g.dy(x, y) == pytest.approx((g(x, y + h) - g(x, y - h)) / (2 * h), rel=1e-5, abs=1e-8)


def test_zero_mean_and_config_round_trip():
    g, h = default_observables()
    assert abs(g.integral()) < 1e-15
    assert bump_from_config(g.to_config()) == g
    with pytest.raises(PreconditionError):
        bump_from_config({"amp": [1.0]})
    with pytest.raises(PreconditionError):
        BumpObservable.single(1, 0.5, 0.0, 1, 1)


def test_validate_support():
    susp = golden_asym()
    g, h = default_observables()
    h.validate(susp.roof, DELTA_SUPP)
    g.validate(susp.roof, DELTA_SUPP)
    a = float(susp.roof.singularities[0])
    with pytest.raises(PreconditionError):
        BumpObservable.single(1, a + 0.05, 0.04, 1.5, 0.5).validate(susp.roof, DELTA_SUPP)
    with pytest.raises(PreconditionError):
        BumpObservable.single(1, 0.7, 0.1, 0.3, 0.29).validate(susp.roof, DELTA_SUPP)
    with pytest.raises(PreconditionError):
        BumpObservable.single(1, 0.7, 0.1, 4.0, 0.9).validate(susp.roof, DELTA_SUPP)


def test_fiber_integrals_against_closed_form():
    susp = golden_asym()
    g, _ = default_observables()
    ig = fiber_integral(susp.roof, g)
    dig = fiber_integral_dx(susp.roof, g)
    for x in (0.05, 0.2, 0.6, 0.75, 0.95):
        assert ig(x) == pytest.approx(g.fiber_integral_exact(x), abs=1e-10)
        assert dig(x) == pytest.approx(g.fiber_integral_dx_exact(x), abs=1e-9)


def test_xbump_sums_match_loop():
    T = golden_iet(30)
    xb = XBumps.from_fiber_integral(default_observables()[0])
    sums = xb.birkhoff_sums(T, 0.123, [10, 1000])
    x, ref = 0.123, []
    acc = 0.0
    for i in range(1000):
        if i == 10:
            ref.append(acc)
        acc += xb(x)
        x = T(x)
    ref.append(acc)
    assert np.allclose(sums, ref, rtol=1e-12, atol=1e-12)
    assert xb.integral == pytest.approx(default_observables()[0].integral(), abs=1e-15)


# -- boundary operator -------------------------------------------------------


def test_pi_hat_rotation():
    bd = pi_hat((2, 1))
    assert bd.cycles == (((1, "L"), (2, "R"), (1, "R"), (2, "L")),)


def test_pi_hat_three_reversal():
    # (1,R)->(2,L), (2,R)->(3,L), (3,R)->(1,R), (1,L)->(2,R), (2,L)->(3,R), (3,L)->(1,L)
    bd = pi_hat((3, 2, 1))
    assert bd.mapping == {
        (1, "R"): (2, "L"), (2, "R"): (3, "L"), (3, "R"): (1, "R"),
        (1, "L"): (2, "R"), (2, "L"): (3, "R"), (3, "L"): (1, "L"),
    }
    assert len(bd.cycles) == 2


def test_pi_hat_reducible_rejected():
    with pytest.raises(PreconditionError):
        pi_hat((1, 2))


@given(irreducible_perms(max_d=8))
def test_pi_hat_is_bijection_with_even_genus_count(pi):
    bd = pi_hat(pi)
    verts = [v for cyc in bd.cycles for v in cyc]
    assert sorted(verts) == sorted(bd.mapping) and len(verts) == 2 * pi.d
    # d = 2g + s - 1 with s the number of cycles
    g2 = pi.d + 1 - len(bd.cycles)
    assert g2 >= 2 and g2 % 2 == 0


@given(irreducible_perms(max_d=8), st.floats(-5, 5))
def test_boundary_of_constant(pi, c):
    bd = pi_hat(pi)
    lim = {v: c for v in bd.mapping}
    vals = boundary(bd, lim)
    for cyc, b in zip(bd.cycles, vals):
        nr = sum(1 for v in cyc if v[1] == "R")
        assert b == pytest.approx(c * (nr - (len(cyc) - nr)), abs=1e-12)
    assert math.fsum(vals) == pytest.approx(0.0, abs=1e-12)


def test_boundary_of_piecewise_linear():
    T = new_iet((3, 2, 1), [F(2, 7), F(3, 7), F(2, 7)])
    lim = one_sided_limits(T, lambda x: x)
    assert lim[(1, "L")] == pytest.approx(0.0, abs=1e-9)
    assert lim[(3, "R")] == pytest.approx(1.0, abs=1e-9)
    vals = boundary(pi_hat(T.pi), lim)
    # cycles (1L, 2R, 3L) and (1R, 2L, 3R): -0 + 5/7 - 5/7 and 2/7 - 2/7 + 1
    assert vals == pytest.approx([0.0, 1.0], abs=1e-8)


def test_one_sided_limit_divergence():
    T = rotation(F(1, 3))
    with pytest.raises(ConstructionError):
        one_sided_limits(T, lambda x: math.log(abs(x - 2 / 3)))


# -- correlations --------------------------------------------------------------


def linear_torus():
    # constant roof: the flow is a linear flow on the torus
    T = golden_iet(30)
    return Suspension(T, LogRoof((), (), (), 1.0))


def linear_torus_correlation(g, h, alpha, n):
    """Exact ``int g(x + n alpha, y) h(x, y)`` for product bumps."""
    tot = 0.0
    for ag, xg, wxg, yg, wyg in zip(g.amp, g.xc, g.wx, g.yc, g.wy):
        for ah, xh, wxh, yh, wyh in zip(h.amp, h.xc, h.wx, h.yc, h.wy):
            fx = lambda x: float(bump(((x + n * alpha) % 1.0 - xg) / wxg) * bump((x - xh) / wxh))  # noqa: E731
            fy = lambda y: float(bump((y - yg) / wyg) * bump((y - yh) / wyh))  # noqa: E731
            ix = quad(fx, xh - wxh, xh + wxh, limit=200, points=[xh])[0]
            iy = quad(fy, yh - wyh, yh + wyh, limit=200)[0]
            tot += ag * ah * ix * iy
    return tot


def test_correlation_oracle_linear_flow():
    susp = linear_torus()
    alpha = float(susp.iet.length(2))
    h = BumpObservable.single(1.0, 0.5, 0.2, 0.5, 0.3)
    g = BumpObservable.single(1.0, 0.3, 0.2, 0.5, 0.3).with_zero_mean(BumpObservable.single(1.0, 0.75, 0.1, 0.5, 0.3))
    times = [0.0, 1.0, 2.0, 5.0]
    ser = correlate(susp, g, h, times, 200_000, seed=4)
    for t, est, se in ser.rows():
        exact = linear_torus_correlation(g, h, alpha, int(t))
        assert abs(est - exact) < 4 * se + 1e-12
    assert ser.discarded == 0


def test_correlation_is_seed_deterministic():
    susp = golden_asym()
    g, h = default_observables()
    a = correlate(susp, g, h, [10.0, 100.0], 3000, seed=7, batch=1000)
    b = correlate(susp, g, h, [10.0, 100.0], 3000, seed=7, batch=1000)
    c = correlate(susp, g, h, [10.0, 100.0], 3000, seed=8, batch=1000)
    assert np.array_equal(a.estimates, b.estimates) and np.array_equal(a.stderr, b.stderr)
    assert not np.array_equal(a.estimates, c.estimates)


def test_correlation_preconditions():
    susp = golden_asym()
    g, h = default_observables()
    with pytest.raises(PreconditionError):
        correlate(susp, h, h, [1.0], 10, 0)
    with pytest.raises(PreconditionError):
        correlate(susp, g, BumpObservable.single(1, 0.7, 0.1, 4.0, 1.0), [1.0], 10, 0)
    with pytest.raises(PreconditionError):
        correlate(susp, g, h, [10.0, 1.0], 10, 0)
    with pytest.raises(PreconditionError):
        correlate(susp, g, h, [1.0], 0, 0)


def _series(est, se, times):
    return CorrelationSeries(np.asarray(times, float), np.asarray(est, float), np.asarray(se, float), 1, 0, 0)


def test_decay_fit_exact_power_of_log():
    times = np.logspace(1, 6, 11)
    est = 0.8 * np.log(times) ** -0.5
    fit = decay_fit(_series(est, est * 1e-3, times))
    assert fit["status"] == "ok"
    assert fit["gamma"] == pytest.approx(0.5, abs=1e-12)
    assert fit["C"] == pytest.approx(0.8, rel=1e-12)
    assert fit["r_squared"] == pytest.approx(1.0)


def test_decay_fit_noisy_replicates():
    rng = np.random.default_rng(2)
    times = np.logspace(1, 6, 11)
    gammas = []
    for _ in range(20):
        est = 0.8 * np.log(times) ** -0.5 * (1 + 0.05 * rng.standard_normal(len(times)))
        gammas.append(decay_fit(_series(est, 0.01 * np.abs(est), times))["gamma"])
    assert np.mean(gammas) == pytest.approx(0.5, abs=0.05)
    assert max(abs(gm - 0.5) for gm in gammas) < 0.2


def test_decay_fit_noise_floor():
    times = np.logspace(1, 4, 7)
    fit = decay_fit(_series(np.full(7, 1e-4), np.full(7, 1e-3), times))
    assert fit["status"] == "noise floor reached" and fit["gamma"] is None
