from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given

from ietmix import RauzyConnectionError, dc_diagnostics, golden_iet, iterate, iterate_until, new_iet, tower_partition
from ietmix.errors import PreconditionError
from ietmix.iet import fibonacci
from ietmix.rauzy import (
    cocycle_window,
    hilbert_distance,
    int_det,
    projective_diameter,
    rv_step,
    visit_count_oracle,
)

from conftest import rational_iets


def test_single_step_top():
    T = new_iet((3, 2, 1), [F(1, 2), F(1, 4), F(1, 4)])
    # rightmost top is 3 (1/4), rightmost bottom is 1 (1/2): bottom wins
    st = rv_step(T)
    assert (st.kind, st.winner, st.loser) == ("bottom", 1, 3)
    assert st.iet.lengths == (F(1, 4), F(1, 4), F(1, 4))
    assert st.iet.top == (1, 3, 2)
    assert st.iet.bottom == T.bottom
    assert st.matrix[0, 2] == 1 and int_det(st.matrix) == 1


def test_tie_raises_with_partial_trajectory():
    T = new_iet((4, 3, 2, 1), [F(1, 5), F(3, 10), F(1, 4), F(1, 4)])
    with pytest.raises(RauzyConnectionError) as info:
        iterate(T, 10)
    assert info.value.step == 2
    assert info.value.trajectory.n_steps == 2


def test_golden_heights_are_fibonacci():
    traj = iterate_until(golden_iet(40), 100)
    assert traj.n_steps == 37
    for n in range(traj.n_steps + 1):
        assert sorted(traj.heights(n)) == [fibonacci(n + 1), fibonacci(n + 2)]
    assert [s.kind for s in traj.steps[:4]] == ["top", "bottom", "top", "bottom"]


def test_golden_connection_at_final_step():
    with pytest.raises(RauzyConnectionError) as info:
        iterate(golden_iet(40), 38)
    assert info.value.step == 37


def test_dc_diagnostics_golden():
    traj = iterate_until(golden_iet(40), 100)
    rep = dc_diagnostics(traj, min_spacing=2)
    assert rep.status == "ok"
    assert rep.times[:5] == [1, 3, 5, 7, 9]
    assert rep.kappa_max == pytest.approx(2.0)
    # window [[1,1],[1,2]]-type matrices: tanh(diam/4) = 3 - 2 sqrt 2
    assert rep.D == pytest.approx(3 - 2 * np.sqrt(2), rel=1e-9)
    assert all(not w.max_ratio_violation for w in rep.windows)


def test_dc_rejects_bad_exponents():
    traj = iterate_until(golden_iet(20), 10)
    with pytest.raises(PreconditionError):
        dc_diagnostics(traj, tau=2.5, tau_prime=0.9)


def test_hilbert_metric():
    assert hilbert_distance([1, 2], [1, 2]) == 0
    assert hilbert_distance([1, 2], [2, 4]) == pytest.approx(0.0)
    assert hilbert_distance([1, 2], [2, 1]) == pytest.approx(2 * np.log(2))
    a = np.array([[1, 1], [1, 2]], dtype=object)
    # columns (1,1), (1,2): distance log 2
    assert projective_diameter(a) == pytest.approx(np.log(2))


@given(rational_iets(max_weight=10**4))
def test_length_recursion_and_kac(T):
    traj = iterate_until(T, 25)
    for n in range(traj.n_steps + 1):
        a = traj.matrix(n)
        lam_n = traj.induced_lengths(n)
        lam = [sum(a[i, j] * lam_n[j] for j in range(T.d)) for i in range(T.d)]
        assert tuple(lam) == T.lengths
        kac = sum(h * l for h, l in zip(traj.heights(n), lam_n))
        assert kac == T.total
        assert abs(int_det(a)) == 1


@given(rational_iets(max_weight=10**4))
def test_cocycle_windows_compose(T):
    traj = iterate_until(T, 12)
    n = traj.n_steps
    if n < 3:
        return
    m = n // 2
    prod = cocycle_window(traj, 0, m).dot(cocycle_window(traj, m, n))
    assert (prod == traj.matrix(n)).all()


@given(rational_iets(max_d=4, max_weight=200))
def test_visit_counts_match_matrix(T):
    traj = iterate_until(T, 8)
    n = traj.n_steps
    a = traj.matrix(n)
    for i in range(1, T.d + 1):
        for j in range(1, T.d + 1):
            assert visit_count_oracle(T, traj, n, i, j) == a[i - 1, j - 1]


@given(rational_iets(max_d=4, max_weight=200))
def test_towers_partition_the_interval(T):
    traj = iterate_until(T, 8)
    part = tower_partition(T, traj, traj.n_steps)
    assert part.total_measure() == 1
    floors = sorted((a, b) for a, b, _, _ in part.all_floors())
    for (a0, b0), (a1, b1) in zip(floors, floors[1:]):
        assert b0 <= a1
    assert floors[0][0] == 0 and floors[-1][1] == 1
    # floors are continuity intervals of T except the top ones
    for j, tower in enumerate(part.floors, start=1):
        for a, b in tower[:-1]:
            assert not any(a < c < b for c in T.breakpoints)
