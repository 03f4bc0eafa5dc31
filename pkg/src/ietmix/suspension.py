"""Suspension flow under a logarithmic roof.

Points are ``(x, y)`` with ``0 <= y < f(x)``; the flow moves ``y`` up at
unit speed and glues ``(x, f(x))`` to ``(T x, 0)``.  Orbits are computed in
binary64 by the kernels in :mod:`ietmix._kernels`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from . import _kernels as K
from .errors import ConstructionError, PreconditionError, SingularityHitError
from .iet import Iet
from .rauzy import DcReport, RvTrajectory
from .roof import LogRoof

FLOW_GUARD = 1e-13
JUMP_TOL = 1e-12


@dataclass(frozen=True)
class SuspensionPoint:
    x: float
    y: float


def _G(z):
    """Antiderivative ``z (2 - log z)`` of ``1 - log z`` with ``G(0) = 0``."""
    z = np.asarray(z, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = z * (2.0 - np.log(z))
    return np.where(z > 0, out, 0.0)


class Suspension:
    """The special flow over ``iet`` under ``roof``."""

    def __init__(self, iet: Iet, roof: LogRoof, guard: float = FLOW_GUARD, check_alignment: bool = True):
        if check_alignment:
            roof.check_alignment(iet)
        self.iet = iet
        self.roof = roof
        self.guard = guard
        left, shift, total = iet.float_tables
        ileft, ishift, itotal = iet.inverse().float_tables
        self._fwd = (left, shift, np.array([total]))
        self._bwd = (ileft, ishift, np.array([itotal]))
        self._rp = roof.kernel_params

    # -- orbit primitives --------------------------------------------------

    def step(self, x: float) -> float:
        return K.iet_step(float(x), self._fwd[0], self._fwd[1], self._fwd[2][0])

    def orbit_statistics(self, x: float, checkpoints) -> np.ndarray:
        """Rows ``[S f, S f', S f'', U~, V~, max|log dist|, min dist]`` at each checkpoint."""
        cps = np.asarray(sorted(int(c) for c in checkpoints), dtype=np.int64)
        out, status = K.orbit_statistics(float(x), cps, *self._fwd[:2], self._fwd[2][0], *self._rp, self.guard)
        if status >= 0:
            raise SingularityHitError(
                f"orbit of x = {x!r} enters the singular guard at index {status}", point=x, index=int(status)
            )
        return out

    def birkhoff(self, x: float, r: int) -> dict:
        row = self.orbit_statistics(x, [r])[0]
        keys = ("S_f", "S_f1", "S_f2", "U_tilde", "V_tilde", "max_log_dist", "min_dist")
        return dict(zip(keys, (float(v) for v in row)))

    # -- flow --------------------------------------------------------------

    def flow(self, p: SuspensionPoint, t: float) -> SuspensionPoint:
        x, y, r = self.flow_with_count(p, t)
        return SuspensionPoint(x, y)

    def flow_with_count(self, p: SuspensionPoint, t: float) -> tuple[float, float, int]:
        if not 0.0 <= p.y:
            raise PreconditionError(f"height {p.y} below the base")
        x, y, r, status = K.flow_point(float(p.x), float(p.y), float(t), self._fwd, self._bwd, *self._rp, self.guard)
        if status >= 0:
            raise SingularityHitError(f"flow of {p} hits the singular guard after {status} crossings", point=x, index=int(status))
        return float(x), float(y), int(r)

    def return_count(self, x: float, t: float) -> int:
        """``r(x, t)``: the largest ``r >= 0`` with ``S_r(f)(x) <= t``."""
        if t < 0:
            raise PreconditionError("return count needs t >= 0")
        return self.flow_with_count(SuspensionPoint(x, 0.0), t)[2]

    def return_counts(self, xs, t: float) -> np.ndarray:
        out = K.return_counts(np.asarray(xs, dtype=np.float64), float(t), *self._fwd[:2], self._fwd[2][0], *self._rp, self.guard)
        if np.any(out < 0):
            bad = int(np.argmax(out < 0))
            raise SingularityHitError(f"return count at x = {xs[bad]} hits the singular guard", point=xs[bad])
        return out

    # -- invariant measure -------------------------------------------------

    def area(self) -> float:
        return self.roof.integral()

    def cumulative_area(self, x) -> np.ndarray:
        """``F(x) = int_0^x f`` in closed form."""
        x = np.asarray(x, dtype=np.float64)
        roof = self.roof
        out = roof.constant * x
        for m, (cc, ss) in enumerate(zip(roof.cos, roof.sin), start=1):
            w = 2 * math.pi * m
            out = out + cc * np.sin(w * x) / w + ss * (1 - np.cos(w * x)) / w
        for ak, cp, cm in zip(roof.a, roof.c_plus, roof.c_minus):
            below = x <= ak
            iu = np.where(below, _G(x - ak + 1) - _G(1 - ak), 2.0 - _G(1 - ak) + _G(x - ak))
            iv = np.where(below, _G(ak) - _G(ak - x), _G(ak) + 2.0 - _G(1 + ak - x))
            out = out + cp * iu + cm * iv
        return out

    def sample_uniform(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        """``n`` points uniform under the graph of ``f``.

        ``x`` is drawn by inverting the closed-form cumulative area with
        vectorised bisection; ``y`` is uniform in ``[0, f(x))``.
        """
        if n < 1:
            raise ValueError("n must be positive")
        target = rng.random(n) * self.area()
        lo = np.zeros(n)
        hi = np.ones(n)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            below = self.cumulative_area(mid) < target
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        xs = 0.5 * (lo + hi)
        # a draw landing on a singular fiber has probability zero; resample it anyway
        bad = np.array([K.nearest_singularity(x, self.roof.a) <= self.guard for x in xs], dtype=bool)
        if np.any(bad):
            xs[bad], _ = self.sample_uniform(rng, int(bad.sum()))
        ys = rng.random(n) * self.roof.f(xs)
        return xs, ys


# -- singular-avoidance sets -------------------------------------------------


def sigma_set_member(traj: RvTrajectory, dc: DcReport, roof: LogRoof, x: float, l: int) -> bool:
    """Membership of ``x`` in ``Sigma_l``.

    True iff some ``T^i x`` with ``i <= floor(sigma_l h^(n_{l+1}))`` lies
    within ``sigma_l lambda^(n_l)`` of a singularity.
    """
    if l + 1 >= len(dc.times) or l >= len(dc.sigma):
        raise PreconditionError(f"DC report has no candidate times through l + 1 = {l + 1}")
    sigma = dc.sigma[l]
    if sigma <= 0:
        return False
    radius = sigma * float(traj.induced_interval_length(dc.times[l]))
    n = math.floor(sigma * traj.max_height(dc.times[l + 1]))
    left, shift, total = traj.iet.float_tables
    i, _ = K.first_close_visit(float(x), n, left, shift, total, roof.a, radius)
    return i >= 0


def sigma_level(traj: RvTrajectory, dc: DcReport, r: int) -> int:
    """Index ``l`` with ``h^(n_l) <= r < h^(n_{l+1})``."""
    for l in range(len(dc.times) - 1):
        if traj.max_height(dc.times[l]) <= r < traj.max_height(dc.times[l + 1]):
            return l
    raise PreconditionError(f"r = {r} is not bracketed by the candidate heights")


# -- shearing ----------------------------------------------------------------


@dataclass
class ShearProfile:
    interval: tuple[float, float]
    t: float
    jumps: list[float]
    counts: list[int]
    delta_f: float
    delta_f_cumulative: list[float]
    delta_t: list[float]
    direction: int
    expected_direction: int
    n_jumps: int = field(init=False)

    def __post_init__(self):
        self.n_jumps = len(self.jumps)

    def rows(self) -> list[tuple[float, int, float]]:
        """``(u_i, r_i, cumulative Delta f)`` with ``u_0`` the left endpoint."""
        us = [self.interval[0]] + self.jumps
        return list(zip(us, self.counts, self.delta_f_cumulative))


def shear_profile(susp: Suspension, J: tuple[float, float], t: float, n_grid: int = 64) -> ShearProfile:
    """Locate the jumps of ``r(., t)`` on ``J`` and measure the shear.

    Raises :class:`ConstructionError` if ``r(., t)`` is not monotone on
    the sampling grid.
    """
    a, b = float(J[0]), float(J[1])
    if not 0 <= a < b <= 1:
        raise PreconditionError(f"bad interval {J}")
    grid = np.linspace(a, b, n_grid + 1)[:-1]
    grid = np.append(grid, np.nextafter(b, a))
    rs = susp.return_counts(grid, t)
    diffs = np.diff(rs)
    if np.all(diffs >= 0):
        direction = 1
    elif np.all(diffs <= 0):
        direction = -1
    else:
        raise ConstructionError(f"r(., {t}) is not monotone on [{a}, {b})")
    if np.all(diffs == 0):
        direction = 0
    jumps = []
    for q in range(len(grid) - 1):
        r0, r1 = int(rs[q]), int(rs[q + 1])
        lo_base = grid[q]
        for level in range(1, abs(r1 - r0) + 1):
            lo, hi = lo_base, grid[q + 1]
            while hi - lo > JUMP_TOL:
                mid = 0.5 * (lo + hi)
                rm = susp.return_count(mid, t)
                if abs(rm - r0) >= level:
                    hi = mid
                else:
                    lo = mid
            jumps.append(hi)
            lo_base = lo
    counts = [int(rs[0])]
    for u in jumps:
        counts.append(susp.return_count(u, t))
    for c0, c1 in zip(counts, counts[1:]):
        if (c1 - c0) * direction < 0:
            raise ConstructionError(f"r(., {t}) is not monotone on [{a}, {b})")

    def slope(s, r):
        return abs(susp.birkhoff(s, r)["S_f1"]) if r > 0 else 0.0

    edges = [a] + jumps + [b]
    cumulative = [0.0]
    for (u0, u1), r in zip(zip(edges, edges[1:]), counts):
        val = 0.0
        if r > 0 and u1 > u0:
            val, _ = quad(slope, u0, u1, args=(r,), epsrel=1e-8, limit=200)
        cumulative.append(cumulative[-1] + val)
    delta_t = []
    for u, r in zip(jumps, counts[1:]):
        delta_t.append(susp.birkhoff(a, r)["S_f"] - susp.birkhoff(u, r)["S_f"])
    expected = 0 if susp.roof.C == 0 else (1 if susp.roof.C < 0 else -1)
    return ShearProfile((a, b), float(t), jumps, counts, cumulative[-1], cumulative, delta_t, direction, expected)
