import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from ietmix import LogRoof, SingularityHitError, check_asymmetric, golden_iet, new_iet
from ietmix.errors import InvalidIetError, PreconditionError
from ietmix.presets import golden_roof
from ietmix.roof import roof_from_config


def test_single_singularity_closed_forms():
    roof = golden_roof(1.0, 2.0)
    # f = 3 - log s - 2 log(1 - s) with s the distance to the right of a; min at s = 1/3
    assert roof.min_f == pytest.approx(3 + math.log(3) + 2 * math.log(1.5), abs=1e-8)
    assert roof.integral() == 6.0
    assert roof.asymmetry_constant() == {"C": 1.0, "C_plus": 1.0, "C_minus": 2.0}
    sym = golden_roof(1.0, 1.0)
    assert sym.min_f == pytest.approx(2 + 2 * math.log(2), abs=1e-8)
    assert sym.C == 0.0


def test_integral_against_quadrature():
    roof = LogRoof((F(1, 3), F(3, 4)), (0.5, 1.5), (2.0, 0.25), 0.7, (0.3,), (0.0, -0.2))
    pts = [1 / 3, 3 / 4]
    val, _ = quad(roof.f, 0, 1, points=pts, limit=400)
    assert roof.integral() == pytest.approx(val, rel=1e-9)


def test_derivatives_by_finite_differences():
    roof = LogRoof((F(2, 5),), (1.3,), (0.6,), 1.0, (0.2,), (0.1,))
    for x in (0.05, 0.3, 0.55, 0.9):
        h = 1e-6
        assert roof.f1(x) == pytest.approx((roof.f(x + h) - roof.f(x - h)) / (2 * h), rel=1e-6)
        assert roof.f2(x) == pytest.approx((roof.f1(x + h) - roof.f1(x - h)) / (2 * h), rel=1e-5)


def test_auxiliary_functions():
    roof = LogRoof((F(1, 4),), (1.0,), (1.0,))
    assert roof.u(0, 0.5) == pytest.approx(1 - math.log(0.25))
    assert roof.v(0, 0.5) == pytest.approx(1 - math.log(0.75))
    # distances wrap around the circle
    assert roof.v(0, 0.9) == pytest.approx(1 - math.log(0.35))
    assert roof.u_tilde(0, 0.5) == pytest.approx(4.0)
    assert roof.v_tilde(0, 0.125) == pytest.approx(8.0)


def test_singularity_hit():
    roof = golden_roof(1.0, 2.0)
    with pytest.raises(SingularityHitError):
        roof.f(float(roof.singularities[0]))


@pytest.mark.parametrize(
    "args",
    [
        ((F(1, 2),), (0.0,), (1.0,)),
        ((F(1, 2),), (1.0,), (1.0, 2.0)),
        ((F(3, 2),), (1.0,), (1.0,)),
        ((F(1, 2), F(1, 4)), (1.0, 1.0), (1.0, 1.0)),
    ],
)
def test_invalid_roofs(args):
    with pytest.raises(InvalidIetError):
        LogRoof(*args)


def test_nonpositive_roof_rejected():
    roof = LogRoof((F(1, 2),), (1.0,), (1.0,), -10.0)
    with pytest.raises(InvalidIetError):
        roof.min_f


def test_config_pins_to_breakpoints():
    T = golden_iet(20)
    roof = roof_from_config({"C_plus": [1], "C_minus": [2]}, T)
    assert roof.singularities == (T.breakpoints[1],)
    assert roof_from_config(roof.to_config(), T) == roof
    with pytest.raises(PreconditionError):
        roof_from_config({"singularities": ["1/2"], "C_plus": [1], "C_minus": [2]}, T)


def test_alignment_multiple():
    T = new_iet((4, 3, 2, 1), [F(1, 5), F(3, 10), F(1, 4), F(1, 4)])
    LogRoof(T.breakpoints[1:-1], (1, 1, 1), (2, 1, 1)).check_alignment(T)


def test_check_asymmetric():
    assert check_asymmetric([1.0, 2.0, 4.0]) == (True, None)
    ok, w = check_asymmetric([1.0, 2.0, 3.0])
    assert not ok and w[0] == 1
    assert sum(s * c for s, c in zip(w, [1.0, 2.0, 3.0])) == 0
    assert check_asymmetric([0.0]) == (False, (1,))
    with pytest.raises(PreconditionError):
        check_asymmetric([1.0] * 21)


@given(st.lists(st.integers(1, 50), min_size=1, max_size=6))
def test_asymmetry_witness_is_genuine(ints):
    ok, w = check_asymmetric([float(v) for v in ints])
    if not ok:
        assert any(w) and sum(s * v for s, v in zip(w, ints)) == 0


@given(st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0.001, 0.999))
def test_roof_positive_and_symmetric_split(cp, cm, x):
    roof = LogRoof((F(1, 2),), (cp,), (cm,))
    if abs(x - 0.5) < 1e-9:
        return
    sp, sm = (x - 0.5) % 1.0, (0.5 - x) % 1.0
    assert roof.f(x) == pytest.approx(cp * (1 - math.log(sp)) + cm * (1 - math.log(sm)))
    assert roof.f(x) >= roof.min_f - 1e-9


def test_vectorised_evaluation():
    roof = golden_roof(1.0, 2.0)
    xs = np.linspace(0.01, 0.99, 7)
    assert np.allclose(roof.f(xs), [roof.f(float(x)) for x in xs])


def test_value_with_wraparound():
    roof = LogRoof((F(1, 2),), (1.0,), (2.0,))
    expected = (1 - math.log(1 / 4)) + 2 * (1 - math.log(3 / 4))
    assert roof.f(0.75) == pytest.approx(expected, rel=1e-14)
