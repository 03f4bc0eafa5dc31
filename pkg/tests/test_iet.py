from fractions import Fraction as F

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ietmix import (
    ExceptionalPointError,
    InvalidIetError,
    Observable,
    OutOfDomainError,
    Permutation,
    birkhoff_sum,
    golden_iet,
    new_iet,
    rotation,
)
from ietmix.iet import fibonacci, iet_from_config, parse_rational

from conftest import naive_apply, rational_iets


def test_rotation_values():
    T = rotation(F(1, 4))
    assert T(F(1, 2)) == F(3, 4)
    assert T(F(7, 8)) == F(1, 8)
    assert T.interval_index(0) == 1
    assert T.interval_index(F(3, 4)) == 2


def test_rotation_float_input_stays_float():
    T = rotation(0.25)
    assert T(0.5) == pytest.approx(0.75, abs=1e-15)
    assert isinstance(T(0.5), float)


def test_birkhoff_identity_on_rotation():
    T = rotation(F(1, 4))
    # 0 + 1/4 + 1/2 + 3/4
    assert birkhoff_sum(T, lambda x: x, F(0), 4) == F(3, 2)


def test_three_interval_reversal():
    T = new_iet((3, 2, 1), [F(1, 2), F(1, 4), F(1, 4)])
    assert T.breakpoints == (0, F(1, 2), F(3, 4), 1)
    assert T.image_breakpoints == (0, F(1, 4), F(1, 2), 1)
    assert T.interval_index(F(6, 10)) == 2
    # image order is 3, 2, 1 so interval 1 starts at 1/4 + 1/4
    assert T(F(0)) == F(1, 2)
    assert T(F(1, 2)) == F(1, 4)
    assert T(F(3, 4)) == 0


def test_breakpoint_belongs_to_right_interval():
    T = new_iet((3, 2, 1), [F(1, 2), F(1, 4), F(1, 4)])
    assert T.interval_index(F(1, 2)) == 2
    assert T.interval_index(F(3, 4)) == 3


def test_normalisation_and_snapping():
    T = new_iet((2, 1), [0.1, 0.2])
    assert T.lengths == (F(1, 3), F(2, 3))
    assert T.snapped == (1, 2)
    assert parse_rational(0.75) == (F(3, 4), False)
    assert parse_rational("2/7") == (F(2, 7), False)
    assert parse_rational(1 / 3) == (F(1, 3), True)


@pytest.mark.parametrize(
    "pi, lengths",
    [
        ((1, 3), [1, 1]),
        ((2, 1), [1, 0]),
        ((2, 1), [1, -1]),
        ((2, 1), [1, 1, 1]),
        ((), []),
    ],
)
def test_invalid_construction(pi, lengths):
    with pytest.raises(InvalidIetError):
        new_iet(pi, lengths)


def test_invalid_length_types():
    with pytest.raises(InvalidIetError):
        parse_rational(float("nan"))
    with pytest.raises(InvalidIetError):
        parse_rational("one half")
    with pytest.raises(InvalidIetError):
        parse_rational(True)


def test_out_of_domain():
    T = rotation(F(1, 3))
    for x in (F(-1, 10), F(1), 1.0, -0.0 - 1e-18 - 1e-3):
        with pytest.raises(OutOfDomainError):
            T(x)


def test_irreducibility():
    assert Permutation((2, 1)).is_irreducible()
    assert Permutation((4, 3, 2, 1)).is_irreducible()
    assert not Permutation((1, 2)).is_irreducible()
    assert not Permutation((2, 1, 3)).is_irreducible()
    assert Permutation((3, 1, 2)).is_irreducible()


def test_golden_preset():
    T = golden_iet(40)
    assert fibonacci(40) == 102334155
    assert T.lengths[0] == F(fibonacci(38), fibonacci(40))
    assert float(T.breakpoints[1]) == pytest.approx(0.381966, abs=1e-6)


def test_connections():
    # rational rotation: the image breakpoint 1/4 hits the breakpoint 3/4 after 2 steps
    assert rotation(F(1, 4)).find_connections(10) == [(1, 1, 2)]
    assert golden_iet(12).find_connections(20) == []


def test_config_round_trip():
    T = new_iet((3, 1, 2), [F(1, 5), F(3, 10), F(1, 2)])
    assert iet_from_config(T.to_config()) == T
    Tinv = T.inverse()
    assert iet_from_config(Tinv.to_config()) == Tinv


def test_exceptional_point_reports_orbit_index():
    T = rotation(F(1, 4))
    g = Observable(lambda x: 1, exceptional=(F(1, 2),), name="g")
    with pytest.raises(ExceptionalPointError) as info:
        birkhoff_sum(T, g, F(0), 5)
    assert info.value.index == 2


@given(rational_iets(), st.data())
def test_matches_naive_formula(T, data):
    num = data.draw(st.integers(0, 10**6 - 1))
    x = F(num, 10**6)
    pi = list(T.pi.images)
    assert T(x) == naive_apply(pi, list(T.lengths), x)


@given(rational_iets(), st.data())
def test_inverse_round_trip(T, data):
    x = F(data.draw(st.integers(0, 9999)), 10000)
    assert T.apply_inverse(T(x)) == x
    assert T(T.apply_inverse(x)) == x


@given(rational_iets())
def test_images_of_intervals_tile(T):
    # every interval is translated onto its slot in the image partition
    for lab in range(1, T.d + 1):
        a = T.left_endpoint(lab)
        assert T(a) == T.image_left_endpoint(lab)
    assert T.image_breakpoints[-1] == T.total == 1


@given(rational_iets(), st.integers(1, 40), st.integers(1, 40), st.data())
def test_birkhoff_cocycle(T, m, n, data):
    x = F(data.draw(st.integers(0, 999)), 1000)
    g = lambda y: y * y  # noqa: E731
    lhs = birkhoff_sum(T, g, x, m + n)
    rhs = birkhoff_sum(T, g, x, m) + birkhoff_sum(T, g, T.iterate(x, m), n)
    assert lhs == rhs


@given(rational_iets(), st.data())
def test_float_and_exact_agree(T, data):
    x = F(data.draw(st.integers(0, 10**6 - 1)), 10**6)
    # skip points within rounding distance of a breakpoint
    if min(abs(x - a) for a in T.breakpoints) < F(1, 10**9):
        return
    assert T(float(x)) == pytest.approx(float(T(x)), abs=1e-12)
