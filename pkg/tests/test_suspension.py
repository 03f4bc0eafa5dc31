import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from ietmix import LogRoof, Suspension, SuspensionPoint, dc_diagnostics, iterate_until, new_iet
from ietmix.errors import ConstructionError, PreconditionError, SingularityHitError
from ietmix.presets import golden_asym, golden_sym
from ietmix.suspension import shear_profile, sigma_level, sigma_set_member


@pytest.fixture(scope="module")
def asym():
    return golden_asym()


def three_iet_suspension():
    T = new_iet((3, 2, 1), [F(2, 7), F(3, 7), F(2, 7)])
    roof = LogRoof(T.breakpoints[1:-1], (1.0, 0.5), (2.0, 1.5), 0.5, (0.2,), ())
    return Suspension(T, roof)


def naive_roof_sum(susp, x, r):
    s = 0.0
    for _ in range(r):
        s += susp.roof.f(x)
        x = float(susp.iet.apply(x))
    return s, x


def test_birkhoff_matches_python_loop(asym):
    for x in (0.05, 0.4, 0.77):
        row = asym.birkhoff(x, 500)
        ref, _ = naive_roof_sum(asym, x, 500)
        assert row["S_f"] == pytest.approx(ref, rel=1e-12)


def test_return_count_brackets(asym):
    for x in (0.05, 0.4, 0.77):
        for t in (10.0, 333.3, 4000.0):
            r = asym.return_count(x, t)
            assert naive_roof_sum(asym, x, r)[0] <= t < naive_roof_sum(asym, x, r + 1)[0]


def test_flow_lands_below_roof(asym):
    x, y, r = asym.flow_with_count(SuspensionPoint(0.3, 0.5), 100.0)
    assert 0 <= y < asym.roof.f(x)
    s, xr = naive_roof_sum(asym, 0.3, r)
    assert xr == pytest.approx(x, abs=1e-12)
    assert 0.5 + 100.0 - s == pytest.approx(y, abs=1e-9)


@given(st.floats(0.0, 0.999), st.floats(0.0, 1.0), st.floats(0.0, 300.0), st.floats(0.0, 300.0))
def test_flow_group_property(x, yfrac, s, t):
    susp = three_iet_suspension()
    try:
        y = yfrac * 0.999 * susp.roof.f(x)
        p = SuspensionPoint(x, y)
        a = susp.flow(susp.flow(p, s), t)
        b = susp.flow(p, s + t)
        back = susp.flow(susp.flow(p, t), -t)
    except SingularityHitError:
        return
    if abs(a.x - b.x) > 1e-6:
        # the two routes may straddle the gluing when y sits at the roof
        assert min(abs(a.y), abs(b.y)) < 1e-6 or min(abs(a.y - susp.roof.f(a.x)), abs(b.y - susp.roof.f(b.x))) < 1e-6
        return
    assert a.y == pytest.approx(b.y, abs=1e-6)
    assert back.x == pytest.approx(p.x, abs=1e-9)
    assert back.y == pytest.approx(p.y, abs=1e-6)


def test_cumulative_area_matches_quadrature():
    susp = three_iet_suspension()
    pts = [float(a) for a in susp.roof.singularities]
    for x in (0.1, 2 / 7 + 0.01, 0.6, 0.95, 1.0):
        val, _ = quad(susp.roof.f, 0, x, points=[p for p in pts if p < x], limit=400)
        assert float(susp.cumulative_area(x)) == pytest.approx(val, rel=1e-9)
    assert float(susp.cumulative_area(1.0)) == pytest.approx(susp.area(), rel=1e-12)


def test_uniform_sampling_moments():
    susp = three_iet_suspension()
    xs, ys = susp.sample_uniform(np.random.default_rng(3), 200_000)
    assert np.all(ys >= 0) and np.all(ys < susp.roof.f(xs))
    pts = [float(a) for a in susp.roof.singularities]
    mean_x = quad(lambda x: x * susp.roof.f(x), 0, 1, points=pts, limit=400)[0] / susp.area()
    mean_y = quad(lambda x: 0.5 * susp.roof.f(x) ** 2, 0, 1, points=pts, limit=400)[0] / susp.area()
    assert xs.mean() == pytest.approx(mean_x, abs=4 * xs.std() / math.sqrt(len(xs)))
    assert ys.mean() == pytest.approx(mean_y, abs=4 * ys.std() / math.sqrt(len(ys)))


def test_sampling_is_seeded():
    susp = three_iet_suspension()
    a = susp.sample_uniform(np.random.default_rng(11), 100)
    b = susp.sample_uniform(np.random.default_rng(11), 100)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_misaligned_roof_rejected():
    T = new_iet((2, 1), [F(1, 3), F(2, 3)])
    with pytest.raises(PreconditionError):
        Suspension(T, LogRoof((F(1, 2),), (1.0,), (1.0,)))


def test_orbit_hitting_singularity():
    susp = golden_asym()
    with pytest.raises(SingularityHitError):
        susp.birkhoff(float(susp.roof.singularities[0]), 10)


def test_sigma_sets(asym):
    traj = iterate_until(asym.iet, 100)
    dc = dc_diagnostics(traj, min_spacing=2)
    l = sigma_level(traj, dc, 1000)
    assert traj.max_height(dc.times[l]) <= 1000 < traj.max_height(dc.times[l + 1])
    hits = [sigma_set_member(traj, dc, asym.roof, x, l) for x in np.linspace(0.001, 0.999, 200)]
    # a small but nonzero exceptional set
    assert 0 < sum(hits) < 200
    with pytest.raises(PreconditionError):
        sigma_level(traj, dc, 10**12)


def test_shear_direction_asymmetric(asym):
    prof = shear_profile(asym, (0.1, 0.101), 3000.0)
    assert prof.counts == [500, 499]
    assert prof.direction == prof.expected_direction == -1
    assert prof.delta_f > 0
    assert len(prof.rows()) == prof.n_jumps + 1


def test_shear_symmetric_expectation():
    prof = shear_profile(golden_sym(), (0.1, 0.1001), 100.0)
    assert prof.expected_direction == 0


def test_shear_non_monotone(asym):
    with pytest.raises(ConstructionError):
        shear_profile(asym, (0.5, 0.502), 1000.0)


def test_uniform_sampling_fiber_and_rectangle():
    susp = golden_asym()
    n = 1_000_000
    xs, ys = susp.sample_uniform(np.random.default_rng(5), n)
    u = ys / susp.roof.f(xs)
    assert abs(u.mean() - 0.5) < 3 * u.std() / math.sqrt(n)
    inside = ((xs >= 0.2) & (xs < 0.3) & (ys < 0.5)).astype(float)
    target = 0.1 * 0.5 / susp.area()
    assert abs(inside.mean() - target) < 4 * math.sqrt(target * (1 - target) / n)


def test_constant_roof_sampling_is_uniform_square():
    T = new_iet((2, 1), [F(1, 3), F(2, 3)])
    susp = Suspension(T, LogRoof((), (), (), 1.0))
    xs, ys = susp.sample_uniform(np.random.default_rng(0), 10_000)
    assert np.all(ys < 1.0)
    assert xs.mean() == pytest.approx(0.5, abs=0.02)
