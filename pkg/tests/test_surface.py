import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import fsolve

from ietmix.errors import PreconditionError
from ietmix.presets import GOLDEN_RATIO, arnold_segment, arnold_torus
from ietmix.surface import (
    SectionData,
    Segment,
    TorusHamiltonianFlow,
    TrigPoly,
    fit_log_singularity,
    flow_from_config,
)

CX, CY = 0.1, 0.1 * GOLDEN_RATIO


def linear_flow():
    return TorusHamiltonianFlow(CX, CY, TrigPoly(), TrigPoly((), 1.0))


@pytest.fixture(scope="module")
def arnold():
    return arnold_torus()


def test_trig_poly_derivatives():
    p = TrigPoly(((1, 0, 0.3, 0.1), (1, -2, 0.05, 0.2)), 0.4)
    h = 1e-6
    for x, y in ((0.1, 0.2), (0.7, 0.45)):
        gx, gy = p.grad(x, y)
        assert gx == pytest.approx((p(x + h, y) - p(x - h, y)) / (2 * h), rel=1e-6)
        assert gy == pytest.approx((p(x, y + h) - p(x, y - h)) / (2 * h), rel=1e-6)
        hs = p.hessian(x, y)
        assert hs[0, 1] == pytest.approx((p.grad(x, y + h)[0] - p.grad(x, y - h)[0]) / (2 * h), rel=1e-5)


def test_linear_flow_returns_exactly():
    flow = linear_flow()
    seg = Segment(0.5, 0.0, 0.5, 1.0)
    assert flow.critical_points() == []
    assert flow.check_transverse(seg) == 1
    data = flow.sample_returns(seg, [0.1, 0.4, 0.9])
    assert np.allclose(data.return_times, 1 / CY, rtol=1e-9)
    assert np.allclose(data.images, np.mod(data.positions - CX / CY, 1.0), atol=1e-8)
    assert np.all(data.crossing_counts == 1)
    assert data.branches() == 1


def test_linear_flow_eta_is_arc_length():
    flow = linear_flow()
    seg = Segment(0.5, 0.0, 0.5, 1.0)
    s = np.linspace(0, 1, 11)
    assert np.allclose(flow.eta_coordinate(seg, s), s)


@given(st.floats(0.0, 0.99))
def test_poincare_orbit_is_a_rotation(start):
    flow = linear_flow()
    seg = Segment(0.5, 0.0, 0.5, 1.0)
    data = flow.poincare_section(seg, 3, start=start)
    shifts = np.mod(data.eta_images - data.eta_positions, 1.0)
    assert np.allclose(np.minimum(shifts, 1 - shifts), min(math.fmod(CX / CY, 1), 1 - math.fmod(CX / CY, 1)), atol=1e-8)


def test_cosine_hamiltonian_critical_points():
    # P = (cos 2 pi x - cos 2 pi y) / (4 pi^2): saddles at (0,0), (1/2,1/2), centres elsewhere
    c = 1 / (4 * math.pi**2)
    flow = TorusHamiltonianFlow(0.0, 0.0, TrigPoly(((1, 0, c, 0.0), (0, 1, -c, 0.0))), TrigPoly((), 1.0))
    pts = flow.critical_points()
    kinds = sorted((round(p.x, 6) % 1, round(p.y, 6) % 1, p.kind) for p in pts)
    assert kinds == [(0.0, 0.0, "saddle"), (0.0, 0.5, "centre"), (0.5, 0.0, "centre"), (0.5, 0.5, "saddle")]
    for p in pts:
        assert abs(p.hessian_det) == pytest.approx(1.0, rel=1e-9)
        if p.kind == "saddle":
            assert p.transit_slope == pytest.approx(1.0)


def test_segment_validation():
    with pytest.raises(PreconditionError):
        Segment(0.0, 0.0, 0.5, 0.5)
    with pytest.raises(PreconditionError):
        Segment(0.5, 0.0, 0.5, 1.5)
    seg = Segment(0.2, 0.9, 0.2, 0.4)
    assert seg.point(0.25) == (0.2, 0.65)
    assert seg.position((0.2, 0.65)) == pytest.approx(0.25)
    assert seg.position((0.2, 0.95)) is None


def test_nonpositive_density_rejected():
    with pytest.raises(PreconditionError):
        TorusHamiltonianFlow(CX, CY, TrigPoly(), TrigPoly(((1, 0, 1.0, 0.0),), 0.5))


def test_non_transverse_segment():
    # the flow (CY, 0) runs along horizontal lines
    flow = TorusHamiltonianFlow(0.0, CY, TrigPoly(), TrigPoly((), 1.0))
    with pytest.raises(PreconditionError):
        flow.check_transverse(Segment(0.0, 0.3, 1.0, 0.3))


def test_config_round_trip(arnold):
    again = flow_from_config(arnold.to_config())
    assert again.to_config() == arnold.to_config()
    with pytest.raises(PreconditionError):
        flow_from_config({"P": {}})


def test_arnold_critical_points(arnold):
    pts = arnold.critical_points()
    assert sorted(p.kind for p in pts) == ["centre", "saddle"]
    sad = arnold.saddles()[0]
    # independent root of grad H by finite differences
    def grad(p):
        h = 1e-7
        return [(arnold.H(p[0] + h, p[1]) - arnold.H(p[0] - h, p[1])) / (2 * h),
                (arnold.H(p[0], p[1] + h) - arnold.H(p[0], p[1] - h)) / (2 * h)]
    ref = fsolve(grad, [0.33, 0.39], xtol=1e-12)
    assert (sad.x, sad.y) == pytest.approx(tuple(ref), abs=1e-6)
    assert (sad.x, sad.y) == pytest.approx((0.32831, 0.38721), abs=1e-5)
    assert sad.hessian_det == pytest.approx(-2.485, abs=1e-3)
    assert sad.density == pytest.approx(1.1884, abs=1e-4)
    assert sad.transit_slope == pytest.approx(0.75387, abs=1e-4)


def test_arnold_energy_conservation(arnold):
    traj = arnold.integrate(arnold_segment().point(0.1), 100.0)
    assert traj.energy_drift_rate <= 1e-8


def test_arnold_saddle_pullback(arnold):
    hits = arnold.saddle_pullback(arnold_segment(), arnold.saddles()[0])
    assert hits[0] == pytest.approx(0.958015, abs=1e-5)


def test_log_fit_on_synthetic_section():
    rng = np.random.default_rng(0)
    s_star = 0.4
    offs = 10.0 ** -np.linspace(2.05, 7, 24)
    pos = np.sort(np.concatenate([s_star - offs, s_star + offs]))
    d = pos - s_star
    times = np.where(d < 0, 3.0 - 1.5 * np.log(np.abs(d)), 5.0 - 0.75 * np.log(np.abs(d)))
    times = times * (1 + 1e-3 * rng.standard_normal(len(times)))
    seg = Segment(0.5, 0.0, 0.5, 1.0)
    z = np.zeros_like(pos)
    fit = fit_log_singularity(SectionData(seg, pos, times, z, z, z, z), s_star)
    assert fit["C_left"] == pytest.approx(1.5, rel=0.02)
    assert fit["C_right"] == pytest.approx(0.75, rel=0.02)
    assert fit["n_left"] == fit["n_right"] == 24


def test_arnold_return_map_is_rotation_in_eta(arnold):
    # the flux of dH through x = 1/2 is cy and the y-period of H is cx, so the
    # return map in eta coordinates rotates by -cx/cy mod 1
    data = arnold.sample_returns(arnold_segment(), np.linspace(0.02, 0.9, 12))
    shifts = np.mod(data.eta_images - data.eta_positions, 1.0)
    assert np.allclose(shifts, (-CX / CY) % 1.0, atol=1e-6)
    assert data.branches() == 1


def test_arnold_area_preservation(arnold):
    p, t, h = np.array([0.2, 0.7]), 5.0, 1e-6

    def phi(q):
        return arnold.integrate(q, t).points[-1]

    jac = np.column_stack([(phi(p + [h, 0]) - phi(p - [h, 0])) / (2 * h),
                           (phi(p + [0, h]) - phi(p - [0, h])) / (2 * h)])
    q = phi(p)
    assert np.linalg.det(jac) * arnold.V(*q) / arnold.V(*p) == pytest.approx(1.0, abs=1e-4)


def test_energy_drift_shrinks_with_tolerance(arnold):
    p = (0.2, 0.7)
    drifts = [arnold.integrate(p, 100.0, rtol=r, atol=r * 1e-2).energy_drift_rate for r in (1e-6, 1e-8, 1e-10)]
    assert drifts[0] > drifts[1] > drifts[2]
    assert drifts[2] <= 1e-8
