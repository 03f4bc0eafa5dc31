"""Right Rauzy-Veech induction, the lengths cocycle and tower partitions.

Lengths are never rescaled: ``T^(n)`` lives on ``[0, |lambda^(n)|)``
with absolute rational lengths.  Matrices are numpy ``object`` arrays of
Python integers so products and inverses stay exact.

Convention: ``lambda^(n) = A_n lambda^(n+1)`` and
``A^(n) = A_0 ... A_{n-1}``, so that ``lambda = A^(n) lambda^(n)`` and the
column sums of ``A^(n)`` are the return times ``h^(n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import InvalidIetError, PreconditionError, RauzyConnectionError
from .iet import Iet

TOP = "top"
BOTTOM = "bottom"


# -- exact integer matrices --------------------------------------------------


def int_identity(d: int) -> np.ndarray:
    m = np.zeros((d, d), dtype=object)
    for i in range(d):
        m[i, i] = 1
    return m


def int_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n, k = a.shape
    k2, m = b.shape
    if k != k2:
        raise ValueError("shape mismatch")
    out = np.empty((n, m), dtype=object)
    for i in range(n):
        for j in range(m):
            out[i, j] = sum(int(a[i, s]) * int(b[s, j]) for s in range(k))
    return out


def int_det(a: np.ndarray) -> int:
    """Exact determinant by fraction-free Bareiss elimination."""
    m = [[int(v) for v in row] for row in a]
    n = len(m)
    sign, prev = 1, 1
    for k in range(n - 1):
        if m[k][k] == 0:
            swap = next((r for r in range(k + 1, n) if m[r][k] != 0), None)
            if swap is None:
                return 0
            m[k], m[swap] = m[swap], m[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
        prev = m[k][k]
    return sign * m[n - 1][n - 1]


def exact_solve(a: np.ndarray, b: Sequence) -> list[Fraction]:
    """Solve ``a x = b`` exactly (Gauss-Jordan over the rationals)."""
    n = a.shape[0]
    m = [[Fraction(int(v)) for v in row] + [Fraction(b[i])] for i, row in enumerate(a)]
    for col in range(n):
        piv = next((r for r in range(col, n) if m[r][col] != 0), None)
        if piv is None:
            raise ZeroDivisionError("singular matrix")
        m[col], m[piv] = m[piv], m[col]
        p = m[col][col]
        m[col] = [v / p for v in m[col]]
        for r in range(n):
            if r != col and m[r][col] != 0:
                factor = m[r][col]
                m[r] = [vr - factor * vc for vr, vc in zip(m[r], m[col])]
    return [row[n] for row in m]


def max_entry(a: np.ndarray) -> int:
    return max(abs(int(v)) for v in a.flat)


# -- induction ---------------------------------------------------------------


@dataclass(frozen=True)
class RvStep:
    """One step ``T^(n) -> T^(n+1)``.

    Attributes
    ----------
    kind : {"top", "bottom"}
        Which rightmost interval was longer.
    winner, loser : int
        Labels of the longer and the shorter rightmost interval.
    matrix : ndarray of object
        Elementary matrix ``I + E_{winner, loser}``.
    iet : Iet
        The induced map ``T^(n+1)``.
    """

    kind: str
    winner: int
    loser: int
    matrix: np.ndarray = field(repr=False)
    iet: Iet = field(repr=False)


def rv_step(iet: Iet, step_index: int = 0) -> RvStep:
    """Perform one right Rauzy-Veech step."""
    alpha, beta = iet.top[-1], iet.bottom[-1]
    la, lb = iet.length(alpha), iet.length(beta)
    if la == lb:
        raise RauzyConnectionError(
            f"tie between intervals {alpha} and {beta} (length {la}) at step {step_index}",
            step=step_index,
        )
    lengths = list(iet.lengths)
    if la > lb:
        kind, winner, loser = TOP, alpha, beta
        lengths[alpha - 1] = la - lb
        rest = [lab for lab in iet.bottom if lab != beta]
        k = rest.index(alpha)
        bottom = tuple(rest[: k + 1] + [beta] + rest[k + 1:])
        top = iet.top
    else:
        kind, winner, loser = BOTTOM, beta, alpha
        lengths[beta - 1] = lb - la
        rest = [lab for lab in iet.top if lab != alpha]
        k = rest.index(beta)
        top = tuple(rest[: k + 1] + [alpha] + rest[k + 1:])
        bottom = iet.bottom
    mat = int_identity(iet.d)
    mat[winner - 1, loser - 1] = 1
    return RvStep(kind, winner, loser, mat, Iet(top, bottom, tuple(lengths)))


@dataclass
class RvTrajectory:
    """Append-only record of an induction run.

    ``iets[n]`` is ``T^(n)`` and ``cumulative[n]`` is ``A^(n)``; both lists
    have ``len(steps) + 1`` entries.
    """

    iet: Iet
    steps: list[RvStep] = field(default_factory=list)
    iets: list[Iet] = field(default_factory=list)
    cumulative: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.iets:
            self.iets = [self.iet]
            self.cumulative = [int_identity(self.iet.d)]

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def _check(self, n: int):
        if not 0 <= n <= self.n_steps:
            raise IndexError(f"step {n} outside 0..{self.n_steps}")

    def extend(self, n: int) -> "RvTrajectory":
        for _ in range(n):
            st = rv_step(self.iets[-1], self.n_steps)
            self.steps.append(st)
            self.iets.append(st.iet)
            self.cumulative.append(int_matmul(self.cumulative[-1], st.matrix))
        return self

    def matrix(self, n: int) -> np.ndarray:
        self._check(n)
        return self.cumulative[n]

    def induced_lengths(self, n: int) -> tuple[Fraction, ...]:
        self._check(n)
        return self.iets[n].lengths

    def induced_interval_length(self, n: int) -> Fraction:
        self._check(n)
        return self.iets[n].total

    def heights(self, n: int) -> tuple[int, ...]:
        a = self.matrix(n)
        d = a.shape[0]
        return tuple(sum(int(a[i, j]) for i in range(d)) for j in range(d))

    def max_height(self, n: int) -> int:
        return max(self.heights(n))

    def min_height(self, n: int) -> int:
        return min(self.heights(n))

    def base_interval(self, n: int, j: int) -> tuple[Fraction, Fraction]:
        """``I_j^(n)`` as ``(left, right)``."""
        t = self.iets[n]
        left = t.left_endpoint(j)
        return left, left + t.length(j)


def iterate(iet: Iet, n: int) -> RvTrajectory:
    """Run ``n`` Rauzy-Veech steps.

    A connection raises :class:`RauzyConnectionError` whose ``trajectory``
    attribute holds the steps completed so far.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    traj = RvTrajectory(iet)
    try:
        traj.extend(n)
    except RauzyConnectionError as exc:
        exc.trajectory = traj
        raise
    return traj


def iterate_until(iet: Iet, max_steps: int) -> RvTrajectory:
    """Run up to ``max_steps`` steps, stopping quietly at a connection."""
    traj = RvTrajectory(iet)
    for _ in range(max_steps):
        try:
            traj.extend(1)
        except RauzyConnectionError:
            break
    return traj


def cocycle_window(traj: RvTrajectory, m: int, n: int) -> np.ndarray:
    """``A^(m,n) = A_m ... A_{n-1}`` by direct multiplication."""
    if not 0 <= m < n <= traj.n_steps:
        raise IndexError(f"need 0 <= m < n <= {traj.n_steps}, got ({m}, {n})")
    out = traj.steps[m].matrix.copy()
    for k in range(m + 1, n):
        out = int_matmul(out, traj.steps[k].matrix)
    return out


def visit_count_oracle(iet: Iet, traj: RvTrajectory, n: int, i: int, j: int) -> int:
    """Count visits to ``I_i`` of the midpoint of ``I_j^(n)`` during one return."""
    left, right = traj.base_interval(n, j)
    x = (left + right) / 2
    h = traj.heights(n)[j - 1]
    count = 0
    for _ in range(h):
        if iet.interval_index(x) == i:
            count += 1
        x = iet.apply(x)
    if not 0 <= x < traj.induced_interval_length(n):
        raise PreconditionError("orbit did not return to the inducing interval")
    return count


# -- towers ------------------------------------------------------------------


@dataclass(frozen=True)
class TowerPartition:
    """Floors ``T^r(I_j^(n))``; ``floors[j-1][r] = (left, right)``."""

    n: int
    floors: tuple[tuple[tuple[Fraction, Fraction], ...], ...]

    def all_floors(self) -> list[tuple[Fraction, Fraction, int, int]]:
        out = []
        for j, tower in enumerate(self.floors, start=1):
            for r, (a, b) in enumerate(tower):
                out.append((a, b, j, r))
        return out

    def total_measure(self) -> Fraction:
        return sum((b - a for a, b, _, _ in self.all_floors()), Fraction(0))

    def boundary_points(self) -> set[Fraction]:
        pts = set()
        for a, b, _, _ in self.all_floors():
            pts.add(a)
            pts.add(b)
        return pts


def push_interval(iet: Iet, a: Fraction, b: Fraction) -> tuple[Fraction, Fraction]:
    """Image of ``[a, b)`` when ``T`` is a single translation on it."""
    if iet.interval_index(a) != iet.interval_index(b - (b - a) / 2) or any(
        a < c < b for c in iet.breakpoints
    ):
        raise PreconditionError(f"T is discontinuous on [{a}, {b})")
    ta = iet.apply(a)
    return ta, ta + (b - a)


def tower_partition(iet: Iet, traj: RvTrajectory, n: int) -> TowerPartition:
    traj._check(n)
    heights = traj.heights(n)
    towers = []
    for j in range(1, iet.d + 1):
        a, b = traj.base_interval(n, j)
        tower = []
        for _ in range(heights[j - 1]):
            tower.append((a, b))
            a, b = push_interval(iet, a, b)
        towers.append(tuple(tower))
    return TowerPartition(n, tuple(towers))


# -- Hilbert metric and diagnostics -----------------------------------------


def hilbert_distance(a, b) -> float:
    """Projective Hilbert distance between two positive vectors."""
    a = [Fraction(v) if not isinstance(v, float) else v for v in a]
    b = [Fraction(v) if not isinstance(v, float) else v for v in b]
    if len(a) != len(b):
        raise ValueError("dimension mismatch")
    if any(v <= 0 for v in a) or any(v <= 0 for v in b):
        raise InvalidIetError("Hilbert distance needs strictly positive vectors")
    ratios = [x / y for x, y in zip(a, b)]
    return math.log(max(ratios) / min(ratios)) if max(ratios) != min(ratios) else 0.0


def projective_diameter(a: np.ndarray) -> float:
    """Hilbert diameter of ``A(R_+^d)``; finite iff ``A`` is strictly positive."""
    m = np.array(a, dtype=float)
    if np.any(m <= 0):
        return math.inf
    d = m.shape[1]
    best = 0.0
    for k in range(d):
        for l in range(d):
            best = max(best, float(np.max(np.log(m[:, k] / m[:, l])) - np.min(np.log(m[:, k] / m[:, l]))))
    return best


def balance(traj: RvTrajectory, n: int) -> tuple[float, float]:
    """``(nu_n, kappa_n)``: max/min ratios of induced lengths and heights."""
    lam = traj.induced_lengths(n)
    h = traj.heights(n)
    return float(max(lam) / min(lam)), max(h) / min(h)


@dataclass
class WindowReport:
    start: int
    end: int
    positive: bool
    birkhoff_factor: float | None
    diameter: float | None
    empirical_factor: float | None
    max_ratio_violation: bool


@dataclass
class DcReport:
    """Balanced times and cocycle diagnostics along a trajectory.

    ``D`` is the Birkhoff contraction coefficient ``tanh(diam/4)`` of the
    window matrices and ``D_prime`` the largest projective diameter; both
    are empirical report fields.
    """

    times: list[int]
    nu: list[float]
    kappa: list[float]
    norms: list[int]
    sigma: list[float]
    windows: list[WindowReport]
    nu_cap: float
    kappa_cap: float
    lbar: int
    tau: float
    tau_prime: float
    status: str = "ok"

    @property
    def kappa_max(self) -> float:
        return max(self.kappa) if self.kappa else math.nan

    @property
    def D(self) -> float | None:
        vals = [w.birkhoff_factor for w in self.windows if w.birkhoff_factor is not None]
        return max(vals) if vals else None

    @property
    def D_prime(self) -> float | None:
        vals = [w.diameter for w in self.windows if w.diameter is not None]
        return max(vals) if vals else None

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "times": self.times,
            "nu": self.nu,
            "kappa": self.kappa,
            "norms": self.norms,
            "sigma": self.sigma,
            "D": self.D,
            "D_prime": self.D_prime,
            "nu_cap": self.nu_cap,
            "kappa_cap": self.kappa_cap,
            "lbar": self.lbar,
            "tau": self.tau,
            "tau_prime": self.tau_prime,
            "windows": [w.__dict__ for w in self.windows],
        }


def dc_diagnostics(
    traj: RvTrajectory,
    nu_cap: float = 3.0,
    kappa_cap: float = 3.0,
    lbar: int = 1,
    tau_prime: float = 0.9,
    tau: float = 1.5,
    min_spacing: int = 1,
    n_pairs: int = 64,
    seed: int = 0,
) -> DcReport:
    """Search balanced times and report cocycle growth and contraction.

    Parameters
    ----------
    nu_cap, kappa_cap : float
        A step ``n`` is a candidate when its length and height ratios are
        below these caps and ``max h^(n) >= 2``.
    lbar : int
        Window length (in candidate times) for the positivity and
        contraction check.
    min_spacing : int
        Minimal gap in induction steps between consecutive candidates.
    n_pairs : int
        Number of random positive vector pairs for the empirical ratio.
    """
    if not tau / 2 < tau_prime < 1:
        raise PreconditionError(f"need tau/2 < tau' < 1, got tau={tau}, tau'={tau_prime}")
    times, nus, kappas = [], [], []
    for n in range(traj.n_steps + 1):
        nu, kap = balance(traj, n)
        if nu <= nu_cap and kap <= kappa_cap and traj.max_height(n) >= 2:
            if times and n - times[-1] < min_spacing:
                continue
            times.append(n)
            nus.append(nu)
            kappas.append(kap)
    rep = DcReport(times, nus, kappas, [], [], [], nu_cap, kappa_cap, lbar, tau, tau_prime)
    if len(times) < 2:
        rep.status = "no candidate times" if not times else "single candidate time"
        return rep
    for l in range(len(times) - 1):
        a = cocycle_window(traj, times[l], times[l + 1])
        norm = max_entry(a)
        rep.norms.append(norm)
        hl = traj.max_height(times[l])
        rep.sigma.append((math.log(norm) / math.log(hl)) ** tau_prime)
    rng = np.random.default_rng(seed)
    for l in range(len(times) - lbar):
        a = cocycle_window(traj, times[l], times[l + lbar])
        diam = projective_diameter(a)
        if not math.isfinite(diam):
            rep.windows.append(WindowReport(times[l], times[l + lbar], False, None, None, None, False))
            continue
        af = np.array(a, dtype=float)
        worst, violated = 0.0, False
        d = af.shape[0]
        for _ in range(n_pairs):
            u = rng.uniform(0.05, 1.0, d)
            v = rng.uniform(0.05, 1.0, d)
            d0 = hilbert_distance(u, v)
            if d0 == 0.0:
                continue
            ratio = hilbert_distance(af @ u, af @ v) / d0
            worst = max(worst, ratio)
            violated |= ratio > 1.0 + 1e-12
        rep.windows.append(
            WindowReport(times[l], times[l + lbar], True, math.tanh(diam / 4), diam, worst, violated)
        )
    return rep
