"""Observables on the suspension, the boundary operator and correlation estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad

from . import _kernels as K
from .errors import ConstructionError, PreconditionError, ResourceCapError
from .iet import Iet, Observable, Permutation
from .roof import LogRoof
from .suspension import Suspension

BUMP_MASS = 16.0 / 15.0  # int_{-1}^{1} (1 - s^2)^2 ds
MAX_DISCARD_RATE = 1e-4
BATCH = 1 << 15


def bump(s):
    s = np.asarray(s, dtype=np.float64)
    b = np.where(np.abs(s) < 1, 1 - s * s, 0.0)
    return b * b


def bump_prime(s):
    s = np.asarray(s, dtype=np.float64)
    return np.where(np.abs(s) < 1, -4 * s * (1 - s * s), 0.0)


@dataclass(frozen=True)
class BumpObservable:
    """Finite sum of product bumps ``amp * b((x - xc)/wx) * b((y - yc)/wy)``.

    ``b(s) = (1 - s^2)^2`` on ``|s| < 1``; the observable is C^1 with
    explicit partial derivatives.
    """

    amp: tuple[float, ...]
    xc: tuple[float, ...]
    wx: tuple[float, ...]
    yc: tuple[float, ...]
    wy: tuple[float, ...]

    def __post_init__(self):
        n = len(self.amp)
        if not all(len(v) == n for v in (self.xc, self.wx, self.yc, self.wy)):
            raise PreconditionError("bump parameter arrays differ in length")
        if any(w <= 0 for w in self.wx + self.wy):
            raise PreconditionError("bump widths must be positive")

    @classmethod
    def single(cls, amp, xc, wx, yc, wy) -> "BumpObservable":
        return cls((float(amp),), (float(xc),), (float(wx),), (float(yc),), (float(wy),))

    def __add__(self, other: "BumpObservable") -> "BumpObservable":
        return BumpObservable(self.amp + other.amp, self.xc + other.xc, self.wx + other.wx,
                              self.yc + other.yc, self.wy + other.wy)

    def scaled(self, c: float) -> "BumpObservable":
        return BumpObservable(tuple(c * a for a in self.amp), self.xc, self.wx, self.yc, self.wy)

    @property
    def params(self) -> tuple[np.ndarray, ...]:
        return tuple(np.array(v, dtype=np.float64) for v in (self.amp, self.xc, self.wx, self.yc, self.wy))

    def __call__(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        out = np.zeros(np.broadcast(x, y).shape)
        for a, xc, wx, yc, wy in zip(self.amp, self.xc, self.wx, self.yc, self.wy):
            out = out + a * bump((x - xc) / wx) * bump((y - yc) / wy)
        return out if out.ndim else float(out)

    def dx(self, x, y):
        out = 0.0
        for a, xc, wx, yc, wy in zip(self.amp, self.xc, self.wx, self.yc, self.wy):
            out = out + a * bump_prime((x - xc) / wx) / wx * bump((y - yc) / wy)
        return out

    def dy(self, x, y):
        out = 0.0
        for a, xc, wx, yc, wy in zip(self.amp, self.xc, self.wx, self.yc, self.wy):
            out = out + a * bump((x - xc) / wx) * bump_prime((y - yc) / wy) / wy
        return out

    def integral(self) -> float:
        """``int int g dx dy`` (Lebesgue, not normalised)."""
        return math.fsum(a * wx * wy * BUMP_MASS**2 for a, wx, wy in zip(self.amp, self.wx, self.wy))

    def box(self) -> tuple[float, float, float, float]:
        """Bounding box ``(x0, x1, y0, y1)`` of the support."""
        return (
            min(x - w for x, w in zip(self.xc, self.wx)),
            max(x + w for x, w in zip(self.xc, self.wx)),
            min(y - w for y, w in zip(self.yc, self.wy)),
            max(y + w for y, w in zip(self.yc, self.wy)),
        )

    def validate(self, roof: LogRoof, delta_supp: float, breakpoints: Sequence[float] = ()) -> None:
        """Check every support rectangle keeps ``delta_supp`` from singular fibers, the base and the roof."""
        walls = [0.0, 1.0] + [float(a) for a in roof.singularities] + [float(b) for b in breakpoints]
        for xc, wx, yc, wy in zip(self.xc, self.wx, self.yc, self.wy):
            x0, x1 = xc - wx, xc + wx
            if any(x0 - delta_supp < a < x1 + delta_supp for a in walls):
                raise PreconditionError(f"bump at x = {xc} is within {delta_supp} of a singular fiber")
            if yc - wy < delta_supp:
                raise PreconditionError(f"bump at y = {yc} is within {delta_supp} of the base")
            fmin = float(np.min(roof.f(np.linspace(x0, x1, 257))))
            if yc + wy > fmin - delta_supp:
                raise PreconditionError(f"bump at ({xc}, {yc}) is within {delta_supp} of the roof")

    def with_zero_mean(self, reference: "BumpObservable") -> "BumpObservable":
        """Subtract a multiple of ``reference`` so the Lebesgue integral vanishes."""
        ref = reference.integral()
        if ref == 0:
            raise PreconditionError("reference bump has zero mass")
        return self + reference.scaled(-self.integral() / ref)

    def fiber_integral_exact(self, x):
        """``Ig(x)`` in closed form, valid when the support lies under the roof."""
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        for a, xc, wx, wy in zip(self.amp, self.xc, self.wx, self.wy):
            out = out + a * wy * BUMP_MASS * bump((x - xc) / wx)
        return out if out.ndim else float(out)

    def fiber_integral_dx_exact(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        for a, xc, wx, wy in zip(self.amp, self.xc, self.wx, self.wy):
            out = out + a * wy * BUMP_MASS * bump_prime((x - xc) / wx) / wx
        return out if out.ndim else float(out)

    def to_config(self) -> dict:
        return {"amp": list(self.amp), "xc": list(self.xc), "wx": list(self.wx), "yc": list(self.yc), "wy": list(self.wy)}


def bump_from_config(cfg: dict) -> BumpObservable:
    try:
        return BumpObservable(*(tuple(float(v) for v in cfg[k]) for k in ("amp", "xc", "wx", "yc", "wy")))
    except KeyError as exc:
        raise PreconditionError(f"observable config is missing {exc}") from exc


def fiber_integral(roof: LogRoof, g: BumpObservable, tol: float = 1e-10) -> Observable:
    """``Ig(x) = int_0^{f(x)} g(x, y) dy`` by adaptive quadrature on each fiber."""
    y_breaks = sorted({max(y - w, 0.0) for y, w in zip(g.yc, g.wy)} | {y + w for y, w in zip(g.yc, g.wy)})

    def ig(x):
        top = roof.f(float(x))
        pts = [p for p in y_breaks if 0 < p < top]
        val, err = quad(lambda y: g(float(x), y), 0.0, top, points=pts or None, epsabs=tol, epsrel=tol, limit=200)
        if not math.isfinite(val) or err > 10 * tol * max(1.0, abs(val)):
            raise ConstructionError(f"fiber quadrature did not converge at x = {x} (error {err})")
        return val

    return Observable(ig, exceptional=tuple(float(a) for a in roof.singularities), guard=roof.guard, name="Ig")


def fiber_integral_dx(roof: LogRoof, g: BumpObservable, tol: float = 1e-10) -> Observable:
    """``(Ig)'(x) = int_0^{f(x)} g_x(x, y) dy + f'(x) g(x, f(x))`` by quadrature."""
    y_breaks = sorted({max(y - w, 0.0) for y, w in zip(g.yc, g.wy)} | {y + w for y, w in zip(g.yc, g.wy)})

    def dig(x):
        x = float(x)
        top = roof.f(x)
        pts = [p for p in y_breaks if 0 < p < top]
        val, err = quad(lambda y: g.dx(x, y), 0.0, top, points=pts or None, epsabs=tol, epsrel=tol, limit=200)
        if not math.isfinite(val) or err > 10 * tol * max(1.0, abs(val)):
            raise ConstructionError(f"fiber quadrature did not converge at x = {x} (error {err})")
        return val + roof.f1(x) * g(x, top)

    return Observable(dig, exceptional=tuple(float(a) for a in roof.singularities), guard=roof.guard, name="dIg")


@dataclass(frozen=True)
class XBumps:
    """A function of ``x`` alone, ``sum amp * b((x - xc)/wx)``, with fast Birkhoff sums."""

    amp: tuple[float, ...]
    xc: tuple[float, ...]
    wx: tuple[float, ...]

    @classmethod
    def from_fiber_integral(cls, g: BumpObservable) -> "XBumps":
        return cls(tuple(a * wy * BUMP_MASS for a, wy in zip(g.amp, g.wy)), g.xc, g.wx)

    def scaled(self, c: float) -> "XBumps":
        return XBumps(tuple(c * a for a in self.amp), self.xc, self.wx)

    @property
    def integral(self) -> float:
        return math.fsum(a * w * BUMP_MASS for a, w in zip(self.amp, self.wx))

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        for a, xc, wx in zip(self.amp, self.xc, self.wx):
            out = out + a * bump((x - xc) / wx)
        return out if out.ndim else float(out)

    def birkhoff_sums(self, iet: Iet, x: float, checkpoints: Sequence[int]) -> np.ndarray:
        left, shift, total = iet.float_tables
        cps = np.asarray(sorted(int(c) for c in checkpoints), dtype=np.int64)
        return K.xbump_sums(float(x), cps, left, shift, total, *(np.array(v, dtype=np.float64) for v in (self.amp, self.xc, self.wx)))


# -- boundary operator -------------------------------------------------------


Vertex = tuple[int, str]


@dataclass(frozen=True)
class BoundaryData:
    """The permutation ``pi_hat`` on ``{1..d} x {L, R}``, its cycles and signs."""

    d: int
    mapping: dict
    cycles: tuple[tuple[Vertex, ...], ...]

    @staticmethod
    def sign(v: Vertex) -> int:
        return -1 if v[1] == "L" else 1


def pi_hat(pi: Permutation | Sequence[int]) -> BoundaryData:
    """Build ``pi_hat`` from the monodromy ``pi`` and extract its cycles."""
    if not isinstance(pi, Permutation):
        pi = Permutation(tuple(pi))
    if not pi.is_irreducible():
        raise PreconditionError(f"permutation {pi.images} is reducible")
    d = pi.d
    inv = pi.inverse()
    mp: dict = {}
    for i in range(1, d):
        mp[(i, "R")] = (i + 1, "L")
    mp[(d, "R")] = (inv(d), "R")
    for i in range(1, d + 1):
        if i == inv(1):
            mp[(i, "L")] = (1, "L")
        else:
            mp[(i, "L")] = (inv(pi(i) - 1), "R")
    if sorted(mp.values()) != sorted(mp.keys()):
        raise ConstructionError("pi_hat is not a bijection")
    seen, cycles = set(), []
    for v in sorted(mp):
        if v in seen:
            continue
        cyc, w = [], v
        while w not in seen:
            seen.add(w)
            cyc.append(w)
            w = mp[w]
        cycles.append(tuple(cyc))
    return BoundaryData(d, mp, tuple(cycles))


def one_sided_limits(iet: Iet, h: Callable, etas: Sequence[float] = (1e-6, 1e-8, 1e-10), tol: float = 1e-6) -> dict:
    """Estimate ``h`` at the left end ``(i, L)`` and right end ``(i, R)`` of every interval.

    Raises
    ------
    ConstructionError
        When the values do not settle as the offset shrinks (divergent limit).
    """
    out = {}
    for pos, lab in enumerate(iet.top):
        a, b = float(iet.breakpoints[pos]), float(iet.breakpoints[pos + 1])
        for side, base, sgn in (("L", a, 1.0), ("R", b, -1.0)):
            vals = [float(h(base + sgn * e)) for e in etas]
            if not all(math.isfinite(v) for v in vals) or abs(vals[-1] - vals[-2]) > tol * (1 + abs(vals[-1])):
                raise ConstructionError(f"one-sided limit of h at ({lab}, {side}) diverges: {vals}")
            out[(lab, side)] = vals[-1]
    return out


def boundary(bd: BoundaryData, limits: dict) -> list[float]:
    """``(B h)_C = sum_{v in C} eps(v) h(v)`` for each cycle ``C``."""
    return [math.fsum(bd.sign(v) * limits[v] for v in cyc) for cyc in bd.cycles]


# -- correlations ---------------------------------------------------------------


@dataclass
class CorrelationSeries:
    times: np.ndarray
    estimates: np.ndarray
    stderr: np.ndarray
    n_samples: int
    seed: int
    discarded: int
    fit: dict | None = None

    def rows(self) -> list[tuple[float, float, float]]:
        return list(zip(self.times.tolist(), self.estimates.tolist(), self.stderr.tolist()))


def correlate(susp: Suspension, g: BumpObservable, h: BumpObservable, t_grid: Sequence[float],
              n_samples: int, seed: int, zero_mean_tol: float = 1e-10, batch: int = BATCH) -> CorrelationSeries:
    """Monte-Carlo estimate of ``int (g o phi_t) h dmu`` on a sorted time grid.

    Points are drawn uniformly in the support box of ``h`` (which must lie
    under the roof); the estimator is ``|box| / int f`` times the sample
    mean, hence unbiased for the normalised measure.  Batch ``k`` uses the
    ``k``-th child of ``SeedSequence(seed)``, so results do not depend on
    how batches are scheduled.
    """
    if n_samples < 1:
        raise PreconditionError("n_samples must be positive")
    if abs(g.integral()) > zero_mean_tol * max(1.0, sum(abs(a) for a in g.amp)):
        raise PreconditionError(f"g is not zero-mean: integral {g.integral()}")
    times = np.asarray(t_grid, dtype=np.float64)
    if np.any(np.diff(times) < 0) or np.any(times < 0):
        raise PreconditionError("time grid must be non-negative and sorted")
    x0, x1, y0, y1 = h.box()
    xs_probe = np.linspace(max(x0, 0.0), min(x1, 1.0), 513)
    if x0 < 0 or x1 > 1 or y0 < 0 or y1 >= float(np.min(susp.roof.f(xs_probe))):
        raise PreconditionError("support box of h must lie under the roof")
    scale = (x1 - x0) * (y1 - y0) / susp.area()
    n_batches = -(-n_samples // batch)
    children = np.random.SeedSequence(seed).spawn(n_batches)
    s1 = np.zeros(len(times))
    s2 = np.zeros(len(times))
    used = 0
    discarded = 0
    gp, hp = g.params, h.params
    left, shift, total = susp._fwd[0], susp._fwd[1], float(susp._fwd[2][0])
    for k, child in enumerate(children):
        m = min(batch, n_samples - k * batch)
        rng = np.random.default_rng(child)
        xs = x0 + (x1 - x0) * rng.random(m)
        ys = y0 + (y1 - y0) * rng.random(m)
        prod, ok = K.correlation_batch(xs, ys, times, left, shift, total, *susp._rp, susp.guard, gp, hp)
        prod = prod[ok]
        discarded += int(m - ok.sum())
        used += len(prod)
        s1 += prod.sum(axis=0)
        s2 += (prod * prod).sum(axis=0)
    if discarded > MAX_DISCARD_RATE * n_samples:
        raise ResourceCapError(f"{discarded} of {n_samples} samples hit the singular guard")
    mean = s1 / used
    var = np.maximum(s2 / used - mean * mean, 0.0) * used / max(used - 1, 1)
    return CorrelationSeries(times, scale * mean, scale * np.sqrt(var / used), n_samples, seed, discarded)


def decay_fit(series: CorrelationSeries, min_points: int = 4) -> dict:
    """Least squares of ``log |c(t)|`` against ``log log t`` on significant points."""
    t = series.times
    est = series.estimates
    se = series.stderr
    sig = (np.abs(est) > 3 * se) & (t > math.e)
    if sig.sum() < min_points:
        return {"status": "noise floor reached", "n_points": int(sig.sum()), "gamma": None, "C": None}
    lx = np.log(np.log(t[sig]))
    ly = np.log(np.abs(est[sig]))
    slope, icpt = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + icpt)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 0.0
    return {
        "status": "ok",
        "n_points": int(sig.sum()),
        "gamma": float(-slope),
        "C": float(math.exp(icpt)),
        "r_squared": r2,
        "max_abs_residual": float(np.max(np.abs(resid))),
    }
