"""Locally Hamiltonian flows on the flat torus and their Poincare sections.

The multivalued Hamiltonian is ``H(x, y) = cx x + cy y + P(x, y)`` with
``P`` a trigonometric polynomial, the area density ``V > 0`` is another
one, and the flow is ``W = (H_y, -H_x) / V``.  Orbits are integrated in the
universal cover, where ``H`` is single valued.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import root

from .errors import ConstructionError, PreconditionError, SingularityHitError

TWO_PI = 2.0 * math.pi
RTOL = 1e-10
ATOL = 1e-12
CRITICAL_GUARD = 1e-6


@dataclass(frozen=True)
class TrigPoly:
    """``sum a cos(2 pi (k x + l y)) + b sin(2 pi (k x + l y))`` plus a constant."""

    terms: tuple[tuple[int, int, float, float], ...] = ()
    constant: float = 0.0

    def _phase(self, x, y, k, l):
        return TWO_PI * (k * x + l * y)

    def __call__(self, x, y):
        s = self.constant + 0.0 * np.asarray(x, dtype=np.float64)
        for k, l, a, b in self.terms:
            th = self._phase(x, y, k, l)
            s = s + a * np.cos(th) + b * np.sin(th)
        return s

    def grad(self, x, y):
        gx = 0.0 * np.asarray(x, dtype=np.float64)
        gy = 0.0 * np.asarray(y, dtype=np.float64)
        for k, l, a, b in self.terms:
            th = self._phase(x, y, k, l)
            d = -a * np.sin(th) + b * np.cos(th)
            gx = gx + TWO_PI * k * d
            gy = gy + TWO_PI * l * d
        return gx, gy

    def hessian(self, x, y):
        hxx = hxy = hyy = 0.0
        for k, l, a, b in self.terms:
            th = self._phase(x, y, k, l)
            d2 = -(TWO_PI**2) * (a * math.cos(th) + b * math.sin(th))
            hxx += k * k * d2
            hxy += k * l * d2
            hyy += l * l * d2
        return np.array([[hxx, hxy], [hxy, hyy]])

    def lipschitz(self) -> float:
        return sum(TWO_PI * math.hypot(k, l) * math.hypot(a, b) for k, l, a, b in self.terms)

    def sup_abs(self) -> float:
        return abs(self.constant) + sum(math.hypot(a, b) for _, _, a, b in self.terms)

    def to_config(self) -> dict:
        return {"constant": self.constant, "terms": [list(t) for t in self.terms]}


def trig_from_config(cfg: dict) -> TrigPoly:
    terms = tuple((int(k), int(l), float(a), float(b)) for k, l, a, b in cfg.get("terms", ()))
    return TrigPoly(terms, float(cfg.get("constant", 0.0)))


@dataclass(frozen=True)
class CriticalPoint:
    x: float
    y: float
    kind: str
    hessian_det: float
    density: float

    @property
    def transit_slope(self) -> float:
        """Predicted coefficient of ``-log c`` for one passage near a saddle."""
        return self.density / math.sqrt(abs(self.hessian_det))


@dataclass
class Trajectory:
    t: np.ndarray
    points: np.ndarray
    energy: np.ndarray
    n_steps: int

    @property
    def energy_drift_rate(self) -> float:
        span = float(self.t[-1] - self.t[0])
        return float(np.max(np.abs(self.energy - self.energy[0]))) / span if span > 0 else 0.0


@dataclass(frozen=True)
class Segment:
    """Axis-aligned transverse segment on the torus."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if self.x0 != self.x1 and self.y0 != self.y1:
            raise PreconditionError("only vertical or horizontal segments are supported")
        if self.length <= 0 or self.length > 1:
            raise PreconditionError(f"segment length {self.length} must lie in (0, 1]")

    @property
    def vertical(self) -> bool:
        return self.x0 == self.x1

    @property
    def length(self) -> float:
        return abs(self.y1 - self.y0) if self.vertical else abs(self.x1 - self.x0)

    def point(self, s: float) -> tuple[float, float]:
        if self.vertical:
            return self.x0, self.y0 + s * math.copysign(1.0, self.y1 - self.y0)
        return self.x0 + s * math.copysign(1.0, self.x1 - self.x0), self.y0

    def normal_coordinate(self, p) -> float:
        return p[0] - self.x0 if self.vertical else p[1] - self.y0

    def position(self, p) -> float | None:
        """Arc-length position of a point lying on the section line, or ``None`` if off the segment."""
        if self.vertical:
            s = ((p[1] - self.y0) * math.copysign(1.0, self.y1 - self.y0)) % 1.0
        else:
            s = ((p[0] - self.x0) * math.copysign(1.0, self.x1 - self.x0)) % 1.0
        return s if s <= self.length else None


@dataclass
class SectionData:
    segment: Segment
    positions: np.ndarray
    return_times: np.ndarray
    images: np.ndarray
    eta_positions: np.ndarray
    eta_images: np.ndarray
    crossing_counts: np.ndarray
    meta: dict = field(default_factory=dict)

    def branches(self, tol: float = 1e-6) -> int:
        """Number of distinct translations of the empirical return map in eta coordinates."""
        if len(self.eta_positions) == 0:
            return 0
        shifts = np.sort(np.mod(self.eta_images - self.eta_positions, 1.0))
        groups = 1 + int(np.sum(np.diff(shifts) > tol))
        if groups > 1 and shifts[0] + 1.0 - shifts[-1] <= tol:
            groups -= 1
        return groups

    def rows(self) -> list[tuple[float, float]]:
        return list(zip(self.positions.tolist(), self.return_times.tolist()))


class TorusHamiltonianFlow:
    """The flow ``W = (H_y, -H_x)/V`` on the torus."""

    def __init__(self, cx: float, cy: float, P: TrigPoly, V: TrigPoly, guard: float = CRITICAL_GUARD):
        self.cx = float(cx)
        self.cy = float(cy)
        self.P = P
        self.V = V
        self.guard = guard
        self.v_min = self._check_density()
        self._critical = None

    def _check_density(self, n: int = 256) -> float:
        g = (np.arange(n) + 0.5) / n
        X, Y = np.meshgrid(g, g)
        grid_min = float(np.min(self.V(X, Y)))
        # every point is within half a cell diagonal of a grid node
        bound = grid_min - self.V.lipschitz() * math.sqrt(2) / (2 * n)
        if bound <= 0:
            raise PreconditionError(f"density not certified positive: grid min {grid_min}, bound {bound}")
        return bound

    @property
    def max_step(self) -> float:
        """Step cap so one step moves less than a quarter period; periodic section events cannot be skipped."""
        speed = (math.hypot(self.cx, self.cy) + self.P.lipschitz()) / self.v_min
        return 0.25 / speed

    def H(self, x, y):
        return self.cx * x + self.cy * y + self.P(x, y)

    def grad_H(self, x, y):
        px, py = self.P.grad(x, y)
        return self.cx + px, self.cy + py

    def field(self, x, y):
        hx, hy = self.grad_H(x, y)
        v = self.V(x, y)
        return hy / v, -hx / v

    def _rhs(self, t, p):
        return self.field(p[0], p[1])

    def _rhs_back(self, t, p):
        u, w = self.field(p[0], p[1])
        return -u, -w

    # -- critical points ---------------------------------------------------

    def critical_points(self, n_seed: int = 24) -> list[CriticalPoint]:
        if self._critical is not None:
            return self._critical
        found: list[tuple[float, float]] = []
        seeds = (np.arange(n_seed) + 0.5) / n_seed
        for x0 in seeds:
            for y0 in seeds:
                sol = root(lambda p: self.grad_H(p[0], p[1]), [x0, y0], tol=1e-14)
                if not sol.success or max(abs(v) for v in self.grad_H(*sol.x)) > 1e-11:
                    continue
                x, y = sol.x[0] % 1.0, sol.x[1] % 1.0
                if not any(min(abs(x - a), 1 - abs(x - a)) < 1e-7 and min(abs(y - b), 1 - abs(y - b)) < 1e-7 for a, b in found):
                    found.append((x, y))
        out = []
        for x, y in sorted(found):
            det = float(np.linalg.det(self.P.hessian(x, y)))
            if abs(det) < 1e-10:
                raise ConstructionError(f"degenerate critical point at ({x}, {y})")
            out.append(CriticalPoint(x, y, "saddle" if det < 0 else "centre", det, float(self.V(x, y))))
        self._critical = out
        return out

    def saddles(self) -> list[CriticalPoint]:
        return [c for c in self.critical_points() if c.kind == "saddle"]

    def _guard_events(self, critical: list[CriticalPoint], radius: float):
        events = []
        for c in critical:
            def ev(t, p, c=c):
                dx = (p[0] - c.x + 0.5) % 1.0 - 0.5
                dy = (p[1] - c.y + 0.5) % 1.0 - 0.5
                return math.hypot(dx, dy) - radius
            ev.terminal = True
            ev.direction = -1
            events.append(ev)
        return events

    # -- integration -------------------------------------------------------

    def integrate(self, p0, t: float, rtol: float = RTOL, atol: float = ATOL, n_out: int = 0) -> Trajectory:
        """Adaptive Dormand-Prince 4(5) trajectory from ``p0`` over ``[0, t]``.

        Raises
        ------
        SingularityHitError
            If the orbit enters the guard disc of a critical point.
        """
        crit = self.critical_points()
        p0 = np.asarray(p0, dtype=np.float64)
        for c in crit:
            if math.hypot((p0[0] - c.x + 0.5) % 1 - 0.5, (p0[1] - c.y + 0.5) % 1 - 0.5) <= self.guard:
                raise PreconditionError(f"start point {tuple(p0)} is inside the guard of a critical point")
        fun = self._rhs if t >= 0 else self._rhs_back
        t_eval = np.linspace(0, abs(t), n_out) if n_out else None
        sol = solve_ivp(fun, (0.0, abs(t)), p0, method="RK45", rtol=rtol, atol=atol,
                        events=self._guard_events(crit, self.guard), t_eval=t_eval)
        if sol.status == 1:
            k = next(i for i, e in enumerate(sol.t_events) if len(e))
            p = sol.y_events[k][0]
            raise SingularityHitError(f"trajectory enters the guard of the {crit[k].kind} at ({crit[k].x:.6g}, {crit[k].y:.6g})",
                                      point=(float(p[0]), float(p[1])))
        if sol.status < 0:
            raise ConstructionError(sol.message)
        energy = self.H(sol.y[0], sol.y[1])
        return Trajectory(sol.t if t >= 0 else -sol.t, sol.y.T.copy(), energy, int(sol.nfev))

    # -- sections ----------------------------------------------------------

    def check_transverse(self, seg: Segment, n: int = 512, min_sine: float = 1e-3) -> int:
        """Sign of the crossing direction; raises unless ``W`` is transverse along ``seg``."""
        s = np.linspace(0.0, seg.length, n)
        pts = np.array([seg.point(v) for v in s])
        u, w = self.field(pts[:, 0], pts[:, 1])
        normal = u if seg.vertical else w
        sine = np.abs(normal) / np.hypot(u, w)
        if np.any(sine < min_sine) or not (np.all(normal > 0) or np.all(normal < 0)):
            raise PreconditionError("segment is not transverse to the flow")
        return 1 if normal[0] > 0 else -1

    def eta_coordinate(self, seg: Segment, s):
        """``int_{start}^{s} eta / int_seg eta`` with ``eta = dH`` integrated exactly."""
        s = np.asarray(s, dtype=np.float64)
        x0, y0 = seg.point(0.0)
        x1, y1 = seg.point(seg.length)
        xs, ys = (np.full_like(s, x0), y0 + (y1 - y0) * s / seg.length) if seg.vertical else \
                 (x0 + (x1 - x0) * s / seg.length, np.full_like(s, y0))
        return (self.H(xs, ys) - self.H(x0, y0)) / (self.H(x1, y1) - self.H(x0, y0))

    def first_return(self, seg: Segment, s: float, t_cap: float = 500.0, rtol: float = RTOL, atol: float = ATOL):
        """Flow from position ``s`` on ``seg`` to the next hit of ``seg``; returns ``(time, image, crossings)``."""
        self.check_transverse(seg)
        p = np.array(seg.point(s))
        total, crossings = 0.0, 0
        while True:
            tc, q, pos = self._cross_once(p, seg, t_cap - total, rtol, atol)
            total += tc
            crossings += 1
            if pos is not None:
                return total, pos, crossings
            p = q

    def _cross_once(self, p, seg: Segment, t_cap: float, rtol: float, atol: float):
        crit = self.critical_points()
        start = seg.normal_coordinate(p)

        def ev(t, q):
            return math.sin(math.pi * (seg.normal_coordinate(q) - start))

        ev.terminal = True
        # leave the line before arming the event
        u, w = self.field(p[0], p[1])
        speed = abs(u if seg.vertical else w)
        dt = min(1e-3, 1e-3 / max(speed, 1e-12))
        lead = solve_ivp(self._rhs, (0.0, dt), p, method="RK45", rtol=rtol, atol=atol)
        events = [ev] + self._guard_events(crit, self.guard)
        if t_cap <= dt:
            raise ConstructionError("no section crossing within the time cap (orbit escapes the component)")
        sol = solve_ivp(self._rhs, (dt, t_cap), lead.y[:, -1], method="RK45", rtol=rtol, atol=atol, events=events,
                        max_step=self.max_step)
        if any(len(e) for e in sol.t_events[1:]):
            k = next(i for i, e in enumerate(sol.t_events[1:]) if len(e))
            raise SingularityHitError(f"orbit enters the guard of the {crit[k].kind} at ({crit[k].x:.6g}, {crit[k].y:.6g})",
                                      point=(float(p[0]), float(p[1])))
        if not len(sol.t_events[0]):
            raise ConstructionError(f"no section crossing within time cap {t_cap} (orbit escapes the component)")
        q = sol.y_events[0][0]
        return float(sol.t_events[0][0]), q, seg.position(q)

    def sample_returns(self, seg: Segment, positions, t_cap: float = 500.0) -> SectionData:
        """First-return data for explicitly chosen start positions on ``seg``."""
        self.check_transverse(seg)
        pos = np.asarray(positions, dtype=np.float64)
        if np.any(pos < 0) or np.any(pos > seg.length):
            raise PreconditionError("start positions must lie on the segment")
        times, images, counts = [], [], []
        for s in pos:
            t, img, c = self.first_return(seg, float(s), t_cap)
            times.append(t)
            images.append(img)
            counts.append(c)
        images = np.array(images)
        return SectionData(seg, pos, np.array(times), images, self.eta_coordinate(seg, pos),
                           self.eta_coordinate(seg, images), np.array(counts))

    def poincare_section(self, seg: Segment, n_crossings: int, start: float = 0.0, t_cap: float = 500.0) -> SectionData:
        """Follow one orbit through ``n_crossings`` successive returns to ``seg``."""
        if n_crossings < 1:
            raise PreconditionError("need at least one crossing")
        self.check_transverse(seg)
        s = float(start)
        pos, times, images, counts = [], [], [], []
        for _ in range(n_crossings):
            t, img, c = self.first_return(seg, s, t_cap)
            pos.append(s)
            times.append(t)
            images.append(img)
            counts.append(c)
            s = img
        pos, images = np.array(pos), np.array(images)
        return SectionData(seg, pos, np.array(times), images, self.eta_coordinate(seg, pos),
                           self.eta_coordinate(seg, images), np.array(counts))

    # -- saddle pull-backs -------------------------------------------------

    def _branches(self, cp: CriticalPoint, eps: float):
        J = np.array([[0.0, 0.0], [0.0, 0.0]])
        Hs = self.P.hessian(cp.x, cp.y)
        # Jacobian of (H_y, -H_x)/V at a zero of grad H
        J[0] = Hs[1] / cp.density
        J[1] = -Hs[0] / cp.density
        vals, vecs = np.linalg.eig(J)
        order = np.argsort(vals.real)
        stable, unstable = vecs[:, order[0]].real, vecs[:, order[-1]].real
        return stable / np.linalg.norm(stable), unstable / np.linalg.norm(unstable)

    def saddle_pullback(self, seg: Segment, cp: CriticalPoint, eps: float = 1e-5, t_cap: float = 200.0) -> list[float]:
        """Positions on ``seg`` whose forward orbit falls into ``cp`` before returning."""
        stable, _ = self._branches(cp, eps)
        hits = []
        for sgn in (1.0, -1.0):
            p = np.array([cp.x, cp.y]) + sgn * eps * stable

            def ev(t, q):
                return math.sin(math.pi * seg.normal_coordinate(q))

            ev.terminal = False
            sol = solve_ivp(self._rhs_back, (0.0, t_cap), p, method="RK45", rtol=RTOL, atol=ATOL, events=[ev],
                            max_step=self.max_step)
            for q in sol.y_events[0]:
                s = seg.position(q)
                if s is not None:
                    hits.append(s)
                    break
        return hits

    def passages(self, seg: Segment, s: float, cp: CriticalPoint, radius: float = 0.05, t_cap: float = 500.0) -> int:
        """How many times the orbit from ``s`` enters the ``radius``-disc of ``cp`` before returning."""
        t, _, _ = self.first_return(seg, s, t_cap)
        traj = self.integrate(seg.point(s), t, n_out=max(2000, int(200 * t)))
        d = np.hypot((traj.points[:, 0] - cp.x + 0.5) % 1 - 0.5, (traj.points[:, 1] - cp.y + 0.5) % 1 - 0.5)
        inside = d < radius
        return int(np.sum(inside[1:] & ~inside[:-1]) + int(inside[0]))

    def to_config(self) -> dict:
        return {"cx": self.cx, "cy": self.cy, "P": self.P.to_config(), "V": self.V.to_config()}


def flow_from_config(cfg: dict) -> TorusHamiltonianFlow:
    try:
        return TorusHamiltonianFlow(float(cfg["cx"]), float(cfg.get("cy", 0.0)), trig_from_config(cfg["P"]),
                                    trig_from_config(cfg["V"]))
    except KeyError as exc:
        raise PreconditionError(f"flow config is missing {exc}") from exc


def fit_log_singularity(section: SectionData, singular_position: float, window: float = 1e-2,
                        min_points: int = 20) -> dict:
    """Fit ``return time = A - C log|s - s*|`` separately left and right of ``s*``."""
    d = section.positions - singular_position
    out = {}
    for side, mask in (("left", (d < 0) & (d >= -window)), ("right", (d > 0) & (d <= window))):
        if mask.sum() < min_points:
            raise ConstructionError(f"only {int(mask.sum())} crossings within {window} on the {side} side")
        lx = -np.log(np.abs(d[mask]))
        ty = section.return_times[mask]
        slope, icpt = np.polyfit(lx, ty, 1)
        resid = ty - (slope * lx + icpt)
        out[f"C_{side}"] = float(slope)
        out[f"offset_{side}"] = float(icpt)
        out[f"rms_{side}"] = float(np.sqrt(np.mean(resid**2)))
        out[f"n_{side}"] = int(mask.sum())
    return out
