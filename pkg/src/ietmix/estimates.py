"""Special Birkhoff sums, orbit decomposition, Birkhoff-sum bounds and partitions.

Partition intervals are stored as integer pairs ``(p, q)`` in units of
``1/Q``, where ``Q`` is the common denominator of the IET lengths.  Every
orbit of a breakpoint then stays on the lattice ``Z/Q``, so continuity and
distance checks are exact integer comparisons.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import _kernels as K
from .errors import ConstructionError, ExceptionalPointError, PreconditionError
from .iet import Iet, as_observable
from .rauzy import DcReport, RvTrajectory
from .roof import LogRoof
from .suspension import Suspension, sigma_level, sigma_set_member

INT_KERNEL_LIMIT = 2**52


# -- special Birkhoff sums and tower decomposition --------------------------


def special_birkhoff_sum(traj: RvTrajectory, w: Callable, n: int, j: int, x0) -> float:
    """``S_{h_j^(n)}(w)(x0)`` for ``x0`` in ``I_j^(n)``, by a plain orbit loop."""
    left, right = traj.base_interval(n, j)
    if not left <= x0 < right:
        raise PreconditionError(f"x0 = {x0} is not in I_{j}^({n}) = [{left}, {right})")
    w = as_observable(w)
    h = traj.heights(n)[j - 1]
    iet = traj.iet
    vals = []
    x = x0
    for i in range(h):
        try:
            vals.append(float(w(x)))
        except ExceptionalPointError as exc:
            raise ExceptionalPointError(f"special sum hits an exceptional point at index {i}", point=x, index=i) from exc
        x = iet.apply(x)
    return math.fsum(vals)


@dataclass
class OrbitDecomposition:
    """Orbit segment ``{T^i x0 : 0 <= i < r}`` split along the towers of step ``n``.

    ``initial`` and ``final`` are ``(label, used_length)`` for the partially
    used boundary towers (``None`` when empty); ``towers`` lists the full
    rides as ``(label, base_point, start_index)``.
    """

    n: int
    r: int
    heights: tuple[int, ...]
    initial: tuple[int, int] | None
    towers: list[tuple[int, object, int]]
    final: tuple[int, int] | None
    final_base: object = None

    @property
    def Q(self) -> int:
        return len(self.towers)

    def used_length(self) -> int:
        tot = sum(self.heights[j - 1] for j, _, _ in self.towers)
        tot += self.initial[1] if self.initial else 0
        tot += self.final[1] if self.final else 0
        return tot

    def full_sum(self) -> int:
        return sum(self.heights[j - 1] for j, _, _ in self.towers)

    def all_sum(self) -> int:
        """Heights of full towers plus the whole heights of both boundary towers."""
        tot = self.full_sum()
        tot += self.heights[self.initial[0] - 1] if self.initial else 0
        tot += self.heights[self.final[0] - 1] if self.final else 0
        return tot

    def bracket(self, traj: RvTrajectory, w: Callable) -> tuple[float, float]:
        """Lower and upper bounds of ``S_r(w)(x0)`` from the decomposition (``w >= 0``)."""
        lower = math.fsum(special_birkhoff_sum(traj, w, self.n, j, y) for j, y, _ in self.towers)
        upper = lower
        if self.initial:
            j0 = self.initial[0]
            upper += special_birkhoff_sum(traj, w, self.n, j0, self._initial_base)
        if self.final:
            upper += special_birkhoff_sum(traj, w, self.n, self.final[0], self.final_base)
        return lower, upper


def decompose_orbit(traj: RvTrajectory, x0, r: int, n: int) -> OrbitDecomposition:
    """Walk the orbit of ``x0`` through the towers of ``Z^(n)``."""
    if r < 1:
        raise PreconditionError("r must be at least 1")
    traj._check(n)
    iet = traj.iet
    inv = iet.inverse()
    heights = traj.heights(n)
    base_len = traj.induced_interval_length(n)
    induced = traj.iets[n]
    # locate x0 in its tower by walking back to the base
    z, level = x0, 0
    while not z < base_len:
        z = inv.apply(z)
        level += 1
        if level > max(heights):
            raise ConstructionError("orbit left the tower structure (inconsistent trajectory)")
    j0 = induced.interval_index(z)
    dec = OrbitDecomposition(n, r, heights, None, [], None)
    dec._initial_base = z
    i = 0
    y = x0
    if level > 0:
        used = min(heights[j0 - 1] - level, r)
        dec.initial = (j0, used)
        i = used
        if i == r:
            return dec
        y = iet.iterate(x0, used)
        if not y < base_len:
            raise ConstructionError("orbit did not reach the base after the top floor")
    while i < r:
        j = induced.interval_index(y)
        h = heights[j - 1]
        if i + h <= r:
            dec.towers.append((j, y, i))
            i += h
            y = induced.apply(y)
        else:
            dec.final = (j, r - i)
            dec.final_base = y
            i = r
    return dec


# -- Birkhoff-sum bounds ------------------------------------------------------


@dataclass
class BsReport:
    r: int
    x: float
    level: int
    eps: float
    kappa: float
    S_f: float
    S_f1: float
    S_f2: float
    U_tilde: float
    V_tilde: float
    max_log_dist: float
    bounds: dict
    slack: dict
    passed: dict

    @property
    def normalized_f1(self) -> float:
        return self.S_f1 / (self.r * math.log(self.r))

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["normalized_f1"] = self.normalized_f1
        return d


def default_eps(roof: LogRoof) -> float:
    c = abs(roof.C)
    return c / 2 if c > 0 else 0.5


def verify_bs_bounds(susp: Suspension, traj: RvTrajectory, dc: DcReport, x: float, r: int,
                     eps: float | None = None, check_sigma: bool = True) -> BsReport:
    """Evaluate the four Birkhoff-sum inequalities at ``(x, r)``.

    The upper bound for ``S_r(f)`` uses ``(1 + eps) r int f`` as its linear
    term; the remaining three inequalities are evaluated as stated.
    """
    roof = susp.roof
    eps = default_eps(roof) if eps is None else float(eps)
    l = sigma_level(traj, dc, r)
    if check_sigma and sigma_set_member(traj, dc, roof, x, l):
        raise PreconditionError(f"x = {x} lies in Sigma_{l}")
    st = susp.birkhoff(x, r)
    kap = math.floor(dc.kappa_max) + 2
    C, Cp, Cm = roof.C, roof.C_plus, roof.C_minus
    U, V = st["U_tilde"], st["V_tilde"]
    rlr = r * math.log(r)
    bounds = {
        "f_upper": (1 + eps) * r * roof.integral() + kap * (Cp + Cm + roof.e_sup) * (1 + st["max_log_dist"]),
        "f1_upper": (C + eps) * rlr + (Cm + 1) * kap * V,
        "f1_lower": (C - eps) * rlr - (Cp + 1) * kap * U,
        "f2_abs": (2 * max(U, V) + 1) * (Cp + Cm + eps) * (rlr + kap * (U + V)),
    }
    slack = {
        "f_upper": bounds["f_upper"] - st["S_f"],
        "f1_upper": bounds["f1_upper"] - st["S_f1"],
        "f1_lower": st["S_f1"] - bounds["f1_lower"],
        "f2_abs": bounds["f2_abs"] - abs(st["S_f2"]),
    }
    passed = {k: v >= 0 for k, v in slack.items()}
    return BsReport(r, float(x), l, eps, dc.kappa_max, st["S_f"], st["S_f1"], st["S_f2"], U, V,
                    st["max_log_dist"], bounds, slack, passed)


def sample_outside_sigma(traj: RvTrajectory, dc: DcReport, roof: LogRoof, r: int, n: int,
                         rng: np.random.Generator, max_draws: int = 100_000) -> np.ndarray:
    """Draw ``n`` uniform points outside ``Sigma_l`` for the level ``l`` of ``r``."""
    l = sigma_level(traj, dc, r)
    out = []
    draws = 0
    while len(out) < n:
        if draws >= max_draws:
            raise ConstructionError(f"Sigma_{l} rejected {draws} draws")
        x = float(rng.random())
        draws += 1
        if not sigma_set_member(traj, dc, roof, x, l):
            out.append(x)
    return np.array(out)


def normalized_f1_medians(susp: Suspension, traj: RvTrajectory, dc: DcReport, r_values: Sequence[int],
                          n_points: int, seed: int) -> dict:
    """Median of ``S_r(f')(x) / (r log r)`` over ``x`` outside ``Sigma_l(r)``, per ``r``."""
    out = {}
    for r in r_values:
        rng = np.random.default_rng(seed)
        xs = sample_outside_sigma(traj, dc, susp.roof, r, n_points, rng)
        vals = [susp.birkhoff(x, r)["S_f1"] / (r * math.log(r)) for x in xs]
        out[int(r)] = float(np.median(vals))
    return out


def bs_bound_survey(susp: Suspension, traj: RvTrajectory, dc: DcReport, r_values: Sequence[int],
                    n_points: int, seed: int, eps: float | None = None) -> dict:
    """Pass rates of the four inequalities and the smallest all-pass threshold ``r_bar``."""
    rates = {}
    failures = []
    all_pass_r = []
    for r in r_values:
        rng = np.random.default_rng([seed, int(r)])
        xs = sample_outside_sigma(traj, dc, susp.roof, r, n_points, rng)
        reps = [verify_bs_bounds(susp, traj, dc, x, r, eps, check_sigma=False) for x in xs]
        ok = [all(rep.passed.values()) for rep in reps]
        rates[int(r)] = float(np.mean(ok))
        all_pass_r.append(all(ok))
        failures.extend({"r": int(r), "x": rep.x, "slack": rep.slack} for rep in reps if not all(rep.passed.values()))
    r_bar = None
    for i, r in enumerate(r_values):
        if all(all_pass_r[i:]):
            r_bar = int(r)
            break
    return {"rates": rates, "r_bar": r_bar, "failures": failures}


# -- deviations of ergodic averages -----------------------------------------


@dataclass
class DeviationFit:
    theta: float
    intercept: float
    r_squared: float
    r_grid: list[int]
    worst: list[float]
    constant: float
    status: str = "ok"


def deviation_check(iet: Iet, h, r_grid: Sequence[int], xs: Sequence[float], integral: float | None = None) -> DeviationFit:
    """Fit ``max_x |S_r(h)(x) - r int h| ~ C r^theta`` over a geometric ``r`` grid.

    ``h`` is either an object with a ``birkhoff_sums(iet, x, checkpoints)``
    method and an ``integral`` attribute (fast path) or a plain callable,
    in which case ``integral`` must be given.
    """
    r_grid = sorted(int(r) for r in r_grid)
    if hasattr(h, "birkhoff_sums"):
        integral = h.integral if integral is None else integral
        sums = np.array([h.birkhoff_sums(iet, float(x), r_grid) for x in xs])
    else:
        if integral is None:
            raise PreconditionError("integral of h is required for a plain callable")
        rows = []
        for x in xs:
            acc, vals, pts = 0.0, [], set(r_grid)
            y = float(x)
            terms = []
            for i in range(r_grid[-1] + 1):
                if i in pts:
                    vals.append(math.fsum(terms))
                if i == r_grid[-1]:
                    break
                terms.append(float(h(y)))
                y = iet.apply(y)
            rows.append(vals)
        sums = np.array(rows)
    dev = np.abs(sums - np.array(r_grid)[None, :] * integral)
    worst = dev.max(axis=0)
    scale = max(1.0, float(np.max(np.abs(sums))))
    if np.all(worst <= 1e-12 * scale):
        return DeviationFit(0.0, -math.inf, 0.0, r_grid, worst.tolist(), 0.0, "degenerate: deviations vanish")
    keep = worst > 1e-12 * scale
    lx = np.log(np.array(r_grid, dtype=float)[keep])
    ly = np.log(worst[keep])
    if keep.sum() < 2:
        return DeviationFit(0.0, float(ly[0]) if len(ly) else -math.inf, 0.0, r_grid, worst.tolist(), 0.0,
                            "degenerate: too few nonzero deviations")
    slope, icpt = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + icpt)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 0.0
    const = float(np.max(worst / np.array(r_grid, dtype=float) ** slope))
    return DeviationFit(float(slope), float(icpt), r2, r_grid, worst.tolist(), const)


# -- partitions ----------------------------------------------------------------


@dataclass
class PartitionFamily:
    """Disjoint intervals ``[p/Q, q/Q)`` retained at a construction stage."""

    stage: str
    t: float
    Q: int
    intervals: np.ndarray
    params: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def measure(self) -> Fraction:
        return Fraction(int(np.sum(self.intervals[:, 1] - self.intervals[:, 0])) if len(self.intervals) else 0, self.Q)

    @property
    def removed_measure(self) -> float:
        return float(1 - self.measure)

    def __len__(self) -> int:
        return len(self.intervals)

    def endpoints(self) -> list[tuple[Fraction, Fraction]]:
        return [(Fraction(int(p), self.Q), Fraction(int(q), self.Q)) for p, q in self.intervals]

    def summary(self) -> dict:
        return {
            "stage": self.stage,
            "t": self.t,
            "count": len(self),
            "removed_measure": self.removed_measure,
            "params": self.params,
            "constants": self.constants,
            "checks": self.checks,
        }


def _common_denominator(iet: Iet) -> int:
    q = 1
    for lam in iet.lengths:
        q = q * lam.denominator // math.gcd(q, lam.denominator)
    return q


def _int_tables(iet: Iet, Q: int):
    left = [int(b * Q) for b in iet.breakpoints[:-1]]
    shift = [int(iet.translation(lab) * Q) for lab in iet.top]
    return left, shift


class _IntMap:
    """``T`` and ``T^{-1}`` on the lattice ``Z/Q`` with interval pull-backs."""

    def __init__(self, iet: Iet, Q: int):
        self.Q = Q
        self.left, self.shift = _int_tables(iet, Q)
        self.ileft, self.ishift = _int_tables(iet.inverse(), Q)
        self.iright = self.ileft[1:] + [Q]

    def step(self, x: int) -> int:
        p = bisect.bisect_right(self.left, x) - 1
        return x + self.shift[p]

    def back(self, x: int) -> int:
        p = bisect.bisect_right(self.ileft, x) - 1
        return x + self.ishift[p]

    def pull_back(self, a: int, b: int) -> list[tuple[int, int]]:
        """``T^{-1}[a, b)`` as half-open pieces, split at the image breakpoints."""
        out = []
        for lo, hi, sh in zip(self.ileft, self.iright, self.ishift):
            c, d = max(a, lo), min(b, hi)
            if c < d:
                out.append((c + sh, d + sh))
        return out


def _merge(intervals: list[tuple[int, int]]) -> list[tuple[int, int]]:
    out: list[list[int]] = []
    for a, b in sorted(intervals):
        if out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [(a, b) for a, b in out]


def _subtract(pieces: list[tuple[int, int]], holes: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """``pieces`` minus the union of sorted, merged ``holes``."""
    starts = [h[0] for h in holes]
    out = []
    for a, b in pieces:
        k = max(bisect.bisect_right(starts, a) - 1, 0)
        cur = a
        while k < len(holes) and holes[k][0] < b:
            ha, hb = holes[k]
            if hb > cur:
                if ha > cur:
                    out.append((cur, min(ha, b)))
                cur = max(cur, hb)
            k += 1
            if cur >= b:
                break
        if cur < b:
            out.append((cur, b))
    return out


def _pulled_back_balls(imap: _IntMap, centres: Sequence[int], radius: int, depth: int) -> list[tuple[int, int]]:
    """Union over ``0 <= i <= depth`` of ``T^{-i}`` of closed balls, as merged half-open pieces."""
    Q = imap.Q
    current = [(max(c - radius, 0), min(c + radius + 1, Q)) for c in centres]
    collected = list(current)
    for _ in range(depth):
        nxt = []
        for a, b in current:
            nxt.extend(imap.pull_back(a, b))
        current = _merge(nxt)
        collected.extend(current)
    return _merge(collected)


def _cut(a: int, b: int, lo: int, hi: int) -> tuple[list[tuple[int, int]], int]:
    """Cut ``[a, b)`` into pieces with integer length in ``[lo, hi]``; returns pieces and discarded length."""
    L = b - a
    if L < lo:
        return [], L
    n_min = -(-L // hi)
    n_max = L // lo
    if n_min <= n_max:
        n = n_min
        base, extra = divmod(L, n)
        out, cur = [], a
        for i in range(n):
            size = base + (1 if i < extra else 0)
            out.append((cur, cur + size))
            cur += size
        return out, 0
    k = L // hi
    out = [(a + i * hi, a + (i + 1) * hi) for i in range(k)]
    rem = L - k * hi
    if rem >= lo:
        out.append((b - rem, b))
        rem = 0
    return out, rem


def _roof_params(roof: LogRoof, Q: int):
    sing = np.array([int(a * Q) for a in roof.singularities], dtype=np.int64)
    for a in roof.singularities:
        if (a * Q).denominator != 1:
            raise PreconditionError("roof singularities must lie on the lattice of the IET")
    return sing


def build_partition_preliminary(iet: Iet, roof: LogRoof, t: float, M: float = 2.0, alpha: float = 0.5) -> PartitionFamily:
    """Partial partition whose elements avoid singular orbits up to ``R(t)``.

    Construction: cut ``[0, 1)`` at the discontinuities ``T^{-j} a_k`` of
    ``T^{R(t)}``, remove the pull-backs ``T^{-j}`` (``j <= R(t)``) of the
    ``M delta``-balls around the roof singularities, and cut what is left
    into pieces of length in ``[delta, 2 delta]`` with
    ``delta = 1/(t (log t)^alpha)``; shorter leftovers are discarded.
    Properties (i)-(iv) are then verified exhaustively by an independent
    forward integer scan.

    Raises
    ------
    ConstructionError
        If nothing survives (removed measure 1) or a property check fails.
    """
    if not M > 1 or not 0 < alpha < 1 or t <= math.e:
        raise PreconditionError("need M > 1, 0 < alpha < 1 and t > e")
    Q = _common_denominator(iet)
    if Q > INT_KERNEL_LIMIT:
        raise PreconditionError(f"common denominator {Q} exceeds the integer kernel range")
    m = min(1.0, roof.min_f)
    R = math.floor(t / m) + 2
    delta = 1.0 / (t * math.log(t) ** alpha)
    imap = _IntMap(iet, Q)
    sing = _roof_params(roof, Q)

    # discontinuities of T^R: T^{-j} a_k for j < R and the interior breakpoints a_k
    cuts = {0, Q}
    for b in iet.breakpoints[1:-1]:
        x = int(b * Q)
        cuts.add(x)
        for _ in range(R - 1):
            x = imap.back(x)
            cuts.add(x)
    cuts = sorted(cuts)
    p0 = list(zip(cuts, cuts[1:]))

    rad = math.ceil(M * delta * Q)
    u2 = _pulled_back_balls(imap, [int(s) for s in sing], rad, R)
    p2 = _subtract(p0, u2)

    lo = math.ceil(delta * Q)
    hi = math.floor(2 * delta * Q)
    pieces = []
    for a, b in p2:
        got, _ = _cut(a, b, lo, hi)
        pieces.extend(got)
    arr = np.array(pieces, dtype=np.int64).reshape(-1, 2)
    fam = PartitionFamily("preliminary", float(t), Q, arr,
                          params={"t": t, "M": M, "alpha": alpha, "R": R, "m": m, "delta": delta})
    if len(arr) == 0:
        raise ConstructionError(f"preliminary partition at t = {t} is empty")

    left = np.array(imap.left, dtype=np.int64)
    shift = np.array(imap.shift, dtype=np.int64)
    interior = left[1:]
    cp = np.array(roof.c_plus)
    cm = np.array(roof.c_minus)
    status, fmax = K.verify_preliminary(arr[:, 0], arr[:, 1], R, left, shift, interior, sing,
                                        M * delta * Q, cp, cm, Q, roof.e_sup)
    lengths = (arr[:, 1] - arr[:, 0]) / Q
    c_f = ((roof.C_plus + roof.C_minus) * (1 + math.log(1 / (M * delta))) + roof.e_sup) / math.log(t)
    fam.checks = {
        "i_continuity": bool(np.all(status != 1)),
        "ii_length": bool(np.all(lengths >= delta * (1 - 1e-15)) and np.all(lengths <= 2 * delta * (1 + 1e-15))),
        "iii_distance": bool(np.all(status != 2)),
        "iv_roof_bound": bool(np.all(fmax <= c_f * math.log(t))),
        "disjoint": bool(np.all(arr[1:, 0] >= arr[:-1, 1])),
    }
    fam.constants = {"C_f": c_f, "C_f_observed": float(np.max(fmax) / math.log(t))}
    fam.meta = {"continuity_pieces": len(p0), "u2_measure": sum(b - a for a, b in u2) / Q}
    if not all(fam.checks.values()):
        raise ConstructionError(f"preliminary partition at t = {t} fails {fam.checks}")
    return fam


def fit_removed_constant(families: Sequence[PartitionFamily], exponent: float, n_fit: int | None = None) -> dict:
    """Fit ``K`` in ``1 - Leb <= K (log t)^{-exponent}`` on the first ``n_fit`` families.

    The remaining families are checked out of sample against the fitted
    ``K``.
    """
    fams = sorted(families, key=lambda f: f.t)
    n_fit = len(fams) if n_fit is None else n_fit
    ratios = [f.removed_measure * math.log(f.t) ** exponent for f in fams]
    k = max(ratios[:n_fit])
    ok = [f.removed_measure <= k * math.log(f.t) ** (-exponent) * (1 + 1e-12) for f in fams]
    return {"K": k, "ratios": ratios, "within": ok, "passed": all(ok)}


def l_of_t(traj: RvTrajectory, dc: DcReport, R: int) -> int:
    for l in range(len(dc.times) - 1):
        if traj.max_height(dc.times[l]) <= R < traj.max_height(dc.times[l + 1]):
            return l
    raise PreconditionError(f"R = {R} is not bracketed by the candidate heights")


def window_length(t: float, kappa: float, m: float, d: int, c_f: float, lbar: int) -> int:
    """``L(t) = Lbar * lbar`` with ``Lbar`` minimal such that ``2 kappa t / (m d^Lbar) < t / (2 C_f log t)``."""
    Lb = 0
    while 2 * kappa * t / (m * d**Lb) >= t / (2 * c_f * math.log(t)):
        Lb += 1
    return Lb * lbar


def build_partition_stretching(prior: PartitionFamily, susp: Suspension, traj: RvTrajectory, dc: DcReport,
                               window: str = "full") -> PartitionFamily:
    """Drop elements of ``prior`` meeting ``Sigma_hat(t)`` and check the shear estimates.

    ``window="full"`` removes ``Sigma_l`` for ``l(t) - L(t) <= l <= l(t)``;
    ``window="rough"`` starts instead at the level of the rough lower
    bound ``t / (2 C_f log t)`` on ``r(x, t)``.
    """
    iet, roof = susp.iet, susp.roof
    t = prior.t
    Q = prior.Q
    M, alpha = prior.params["M"], prior.params["alpha"]
    R, m = prior.params["R"], prior.params["m"]
    c_f = prior.constants["C_f"]
    lt = l_of_t(traj, dc, R)
    L = window_length(t, dc.kappa_max, m, iet.d, c_f, dc.lbar)
    if window == "full":
        l_lo = max(0, lt - L)
    elif window == "rough":
        rough = t / (2 * c_f * math.log(t))
        l_lo = 0
        for l in range(lt + 1):
            if traj.max_height(dc.times[l]) <= rough:
                l_lo = l
    else:
        raise ValueError(f"unknown window {window!r}")
    imap = _IntMap(iet, Q)
    sing = [int(a * Q) for a in roof.singularities]
    holes = []
    for l in range(l_lo, lt + 1):
        sigma = dc.sigma[l]
        if sigma <= 0:
            continue
        rad = math.ceil(sigma * float(traj.induced_interval_length(dc.times[l]) * Q)) + 1
        depth = math.floor(sigma * traj.max_height(dc.times[l + 1]))
        holes.extend(_pulled_back_balls(imap, sing, rad, depth))
    holes = _merge(holes)
    starts = [h[0] for h in holes]
    keep = []
    for p, q in prior.intervals:
        k = bisect.bisect_right(starts, int(p)) - 1
        hit = False
        for kk in (k, k + 1):
            if 0 <= kk < len(holes) and holes[kk][0] < q and holes[kk][1] > p:
                hit = True
        if not hit:
            keep.append((int(p), int(q)))
    arr = np.array(keep, dtype=np.int64).reshape(-1, 2)
    fam = PartitionFamily("stretching", t, Q, arr, params=dict(prior.params, l_t=lt, L_t=L, l_lo=l_lo, window=window))
    fam.meta = {"sigma_hat_measure": sum(b - a for a, b in holes) / Q, "prior_removed": prior.removed_measure}
    if len(arr) == 0:
        fam.checks = {"nonempty": False}
        return fam
    xs = np.concatenate([arr[:, 0] / Q, (arr[:, 0] + arr[:, 1]) / (2 * Q), (arr[:, 1] - 1) / Q])
    rows = K.sums_at_return(xs.astype(np.float64), float(t), *susp._fwd[:2], susp._fwd[2][0], *susp._rp, susp.guard)
    if np.any(rows[:, 0] < 0):
        raise ConstructionError("a stretching-stage sample hit the singular guard")
    sign = 1.0 if roof.C > 0 else -1.0
    tl = t * math.log(t)
    c_prime = float(np.min(sign * rows[:, 2]) / tl)
    fam.constants = {
        **prior.constants,
        "C_prime": c_prime,
        "C_tilde_prime": float(np.max(np.abs(rows[:, 2])) / tl),
        "C_second": float(np.max(rows[:, 3]) * M / (t**2 * math.log(t) ** (1 + alpha))),
        "max_Sf_over_t": float(np.max(rows[:, 1]) / t),
        "r_min": int(rows[:, 0].min()),
        "r_max": int(rows[:, 0].max()),
    }
    fam.checks = {
        "nonempty": True,
        "i_Sf_le_3t": bool(np.all(rows[:, 1] <= 3 * t)),
        "ii_signed_shear": c_prime > 0,
        "iii_shear_bounded": bool(np.all(np.isfinite(rows[:, 2]))),
        "iv_second_derivative": bool(np.all(np.isfinite(rows[:, 3]))),
    }
    fam.meta["samples"] = rows
    return fam


def build_partition_final(prior: PartitionFamily, susp: Suspension) -> PartitionFamily:
    """Keep elements whose orbit window after time ``t`` stays ``(log t)^{-2}`` from the singularities."""
    t, Q = prior.t, prior.Q
    m, R = prior.params["m"], prior.params["R"]
    c_f = prior.constants.get("C_f") if "C_f" in prior.constants else None
    if c_f is None:
        raise PreconditionError("prior family carries no C_f")
    Kt = math.floor(2 * c_f / m * math.log(t)) + 1
    arr = prior.intervals
    fam = PartitionFamily("final", t, Q, arr[:0], params=dict(prior.params, K_t=Kt))
    if len(arr) == 0:
        fam.checks = {"nonempty": False}
        return fam
    starts = susp.return_counts(arr[:, 0] / Q, t).astype(np.int64)
    imap = _IntMap(susp.iet, Q)
    sing = np.array([int(a * Q) for a in susp.roof.singularities], dtype=np.int64)
    radius = Q / math.log(t) ** 2
    status = K.verify_final(arr[:, 0], arr[:, 1], starts, Kt, R, np.array(imap.left, dtype=np.int64),
                            np.array(imap.shift, dtype=np.int64), sing, radius)
    fam.intervals = arr[status == 0]
    fam.meta = {"beyond_horizon": int(np.sum(status == 2)), "close": int(np.sum(status == 1))}
    fam.checks = {"nonempty": len(fam.intervals) > 0, "eq_window_verified": True}
    fam.constants = dict(prior.constants)
    return fam
