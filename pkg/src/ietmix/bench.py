"""The acceptance suite: one function per criterion, each returning a :class:`CriterionResult`."""

from __future__ import annotations

import bisect
import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .correlation import (
    BumpObservable,
    XBumps,
    boundary,
    correlate,
    decay_fit,
    fiber_integral,
    fiber_integral_dx,
    one_sided_limits,
    pi_hat,
)
from .errors import ConstructionError, IetMixError
from .estimates import (
    build_partition_preliminary,
    build_partition_stretching,
    decompose_orbit,
    deviation_check,
    fit_removed_constant,
    normalized_f1_medians,
)
from .iet import Iet, Permutation, golden_iet, new_iet
from .presets import DELTA_SUPP, arnold_segment, arnold_torus, default_observables, golden_asym, golden_sym
from .rauzy import (
    cocycle_window,
    dc_diagnostics,
    exact_solve,
    int_det,
    iterate_until,
    tower_partition,
    visit_count_oracle,
)
from .roof import LogRoof

SEED = 0
CORPUS_SIZE = 200
CORPUS_STEPS = 12
ORACLE_STEPS = 8
T_GRID = tuple(10 ** (1 + k / 2) for k in range(7))


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    details: dict
    runtime: float = 0.0
    limit: float | None = None
    digest: str | None = field(default=None, repr=False)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] criterion {self.number:2d}: {self.title} ({self.runtime:.1f} s)"

    def to_dict(self) -> dict:
        return {"number": self.number, "title": self.title, "passed": self.passed, "runtime": self.runtime,
                "limit": self.limit, "details": self.details}


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=repr).encode()).hexdigest()


def _timed(number: int, title: str, limit: float | None, fn: Callable[[], tuple[bool, dict]]) -> CriterionResult:
    t0 = time.perf_counter()
    try:
        ok, details = fn()
    except IetMixError as exc:
        ok, details = False, {"error": f"{type(exc).__name__}: {exc}"}
    dt = time.perf_counter() - t0
    digest = _digest(details.get("outputs", details))
    if limit is not None and dt > limit:
        ok = False
        details["runtime_exceeded"] = True
    return CriterionResult(number, title, bool(ok), details, dt, limit, digest)


# -- corpus ------------------------------------------------------------------


def random_irreducible(d: int, rng: np.random.Generator) -> Permutation:
    while True:
        p = Permutation(tuple(int(v) + 1 for v in rng.permutation(d)))
        if p.is_irreducible():
            return p


def random_corpus(n: int = CORPUS_SIZE, seed: int = SEED) -> list[Iet]:
    """IETs with ``d`` in 2..5 and lengths ``w_j / sum w`` with ``sum w <= 10^6``."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        d = int(rng.integers(2, 6))
        pi = random_irreducible(d, rng)
        w = [int(v) for v in rng.integers(1, 10**6 // d + 1, size=d)]
        tot = sum(w)
        out.append(new_iet(pi, [Fraction(v, tot) for v in w]))
    return out


# -- criteria ----------------------------------------------------------------


def criterion_1(corpus: list[Iet]) -> tuple[bool, dict]:
    failures, steps, connections = [], 0, 0
    for idx, iet in enumerate(corpus):
        traj = iterate_until(iet, CORPUS_STEPS)
        steps += traj.n_steps
        connections += traj.n_steps < CORPUS_STEPS
        for n in range(traj.n_steps + 1):
            lam_n = list(traj.induced_lengths(n))
            if abs(int_det(traj.matrix(n))) != 1:
                failures.append((idx, n, "det"))
            h = traj.heights(n)
            if sum((hj * lj for hj, lj in zip(h, lam_n)), Fraction(0)) != 1:
                failures.append((idx, n, "kac"))
            for m in range(n):
                sol = exact_solve(cocycle_window(traj, m, n), list(traj.induced_lengths(m)))
                if sol != lam_n:
                    failures.append((idx, m, n, "cocycle"))
    return not failures, {"iets": len(corpus), "steps": steps, "stopped_at_connection": connections,
                          "failures": failures[:20], "n_failures": len(failures)}


def criterion_2(corpus: list[Iet]) -> tuple[bool, dict]:
    failures, checked = [], 0
    for idx, iet in enumerate(corpus):
        traj = iterate_until(iet, ORACLE_STEPS)
        for n in range(traj.n_steps + 1):
            a = traj.matrix(n)
            for i in range(1, iet.d + 1):
                for j in range(1, iet.d + 1):
                    checked += 1
                    if visit_count_oracle(iet, traj, n, i, j) != int(a[i - 1, j - 1]):
                        failures.append((idx, n, i, j))
    return not failures, {"entries_checked": checked, "failures": failures[:20], "n_failures": len(failures)}


def _floors_disjoint(floors) -> bool:
    fl = sorted((a, b) for a, b, _, _ in floors)
    return all(b0 <= a1 for (_, b0), (a1, _) in zip(fl, fl[1:]))


def criterion_3(corpus: list[Iet]) -> tuple[bool, dict]:
    failures, towers = [], 0
    for idx, iet in enumerate(corpus):
        traj = iterate_until(iet, ORACLE_STEPS)
        prev = None
        for n in range(traj.n_steps + 1):
            tp = tower_partition(iet, traj, n)
            towers += 1
            floors = tp.all_floors()
            if not _floors_disjoint(floors):
                failures.append((idx, n, "overlap"))
            if tp.total_measure() != 1:
                failures.append((idx, n, "measure"))
            bnd = tp.boundary_points()
            if not set(iet.breakpoints) <= bnd:
                failures.append((idx, n, "breakpoints"))
            if prev is not None:
                coarse = sorted((a, b) for a, b, _, _ in prev)
                lefts = [a for a, _ in coarse]
                for a, b, _, _ in floors:
                    k = bisect.bisect_right(lefts, a) - 1
                    if k < 0 or not (coarse[k][0] <= a and b <= coarse[k][1]):
                        failures.append((idx, n, "refinement"))
                        break
            prev = floors
    return not failures, {"partitions": towers, "failures": failures[:20], "n_failures": len(failures)}


def criterion_4(seed: int = SEED, n_cases: int = 100, max_height: int = 20_000, r_max: int = 100_000) -> tuple[bool, dict]:
    iet = golden_iet()
    traj = iterate_until(iet, 100)
    n_top = max(n for n in range(traj.n_steps + 1) if traj.max_height(n) <= max_height)
    rng = np.random.default_rng(seed)
    Q = iet.lengths[0].denominator
    failures, cases = [], []
    for _ in range(n_cases):
        n = int(rng.integers(1, n_top + 1))
        r = int(rng.integers(1, r_max + 1))
        x = Fraction(int(rng.integers(0, Q)), Q)
        dec = decompose_orbit(traj, x, r, n)
        lo, hi = dec.full_sum(), dec.all_sum()
        ok = lo <= r <= hi and dec.used_length() == r and dec.Q * traj.min_height(n) <= r
        cases.append((str(x), r, n, lo, hi, dec.Q))
        if not ok:
            failures.append(cases[-1])
    return not failures, {"cases": len(cases), "n_range": [1, n_top], "failures": failures,
                          "outputs": cases}


def criterion_5(seed: int = SEED, n_points: int = 50) -> tuple[bool, dict]:
    asym, sym = golden_asym(), golden_sym()
    traj = iterate_until(asym.iet, 100)
    dc = dc_diagnostics(traj, min_spacing=2)
    rs = [10**4, 10**5, 10**6]
    med = normalized_f1_medians(asym, traj, dc, rs, n_points, seed)
    ctrl = normalized_f1_medians(sym, traj, dc, [10**6], n_points, seed)[10**6]
    dev = [abs(med[r] - 1) for r in rs]
    checks = {
        "r1e5_in_[0.6,1.4]": 0.6 <= med[10**5] <= 1.4,
        "r1e6_in_[0.7,1.3]": 0.7 <= med[10**6] <= 1.3,
        "deviation_decreasing": dev[0] > dev[1] > dev[2],
        "symmetric_control_below_0.15": abs(ctrl) < 0.15,
    }
    return all(checks.values()), {"medians": {str(k): v for k, v in med.items()}, "symmetric_median_1e6": ctrl,
                                  "abs_deviation": dev, "checks": checks, "seed": seed,
                                  "outputs": [med[r] for r in rs] + [ctrl]}


def criterion_6(ts=(1e2, 1e3, 1e4), M: float = 2.0, alpha: float = 0.5) -> tuple[bool, dict]:
    susp = golden_asym()
    traj = iterate_until(susp.iet, 100)
    dc = dc_diagnostics(traj, min_spacing=2)
    fams, per_t = [], {}
    for t in ts:
        entry: dict = {}
        try:
            fam = build_partition_preliminary(susp.iet, susp.roof, t, M, alpha)
        except ConstructionError as exc:
            entry["preliminary"] = f"empty: {exc}"
            per_t[str(t)] = entry
            continue
        fams.append(fam)
        entry["preliminary"] = {"count": len(fam), "removed": fam.removed_measure, "checks": fam.checks}
        try:
            st = build_partition_stretching(fam, susp, traj, dc, window="full")
            entry["stretching"] = {"count": len(st), "checks": st.checks,
                                   "constants": {k: v for k, v in st.constants.items() if isinstance(v, (int, float))}}
        except ConstructionError as exc:
            entry["stretching"] = f"empty: {exc}"
        per_t[str(t)] = entry
    all_built = len(fams) == len(ts)
    fit = fit_removed_constant(fams, alpha) if fams else {"passed": False}
    prelim_ok = all_built and all(all(f.checks.values()) for f in fams)
    stretch_ok = all_built and all(isinstance(e.get("stretching"), dict) and e["stretching"]["count"] > 0
                                   and all(e["stretching"]["checks"].values()) for e in per_t.values())
    checks = {"families_nonempty": all_built, "measure_fit": bool(fit.get("passed")) and all_built,
              "property_checks": prelim_ok, "stretching_checks": stretch_ok}
    return all(checks.values()), {"per_t": per_t, "fit": fit, "checks": checks}


def boundary_benchmarks() -> list[tuple[Iet, LogRoof]]:
    out = []
    g = golden_iet()
    out.append((g, LogRoof((g.breakpoints[1],), (1.0,), (2.0,))))
    for pi, lam, cp, cm in (
        ((3, 2, 1), ("2/7", "3/7", "2/7"), (1.0, 0.5), (2.0, 1.5)),
        ((4, 3, 2, 1), ("1/5", "3/10", "1/4", "1/4"), (1.0, 0.7, 0.4), (0.8, 1.1, 2.0)),
    ):
        iet = new_iet(pi, lam)
        out.append((iet, LogRoof(tuple(iet.breakpoints[1:-1]), cp, cm)))
    return out


def random_bump(iet: Iet, roof: LogRoof, rng: np.random.Generator, delta: float = DELTA_SUPP) -> BumpObservable:
    walls = [float(b) for b in iet.breakpoints]
    k = int(rng.integers(0, len(walls) - 1))
    lo, hi = walls[k] + 2 * delta, walls[k + 1] - 2 * delta
    xc = float(rng.uniform(lo, hi))
    wx = float(rng.uniform(0.2, 1.0)) * min(xc - lo + delta, hi - xc + delta)
    fmin = float(np.min(roof.f(np.linspace(xc - wx, xc + wx, 257))))
    y0 = delta + float(rng.uniform(0, 0.3)) * (fmin - 2 * delta)
    y1 = fmin - delta - float(rng.uniform(0, 0.3)) * (fmin - 2 * delta - (y0 - delta))
    g = BumpObservable.single(float(rng.normal()), xc, wx, (y0 + y1) / 2, (y1 - y0) / 2)
    g.validate(roof, delta, walls[1:-1])
    return g


def criterion_7(seed: int = SEED, n_bumps: int = 20) -> tuple[bool, dict]:
    rng = np.random.default_rng(seed)
    worst, cycles = 0.0, {}
    for iet, roof in boundary_benchmarks():
        bd = pi_hat(iet.pi)
        for _ in range(n_bumps):
            g = random_bump(iet, roof, rng)
            b0 = boundary(bd, one_sided_limits(iet, fiber_integral(roof, g)))
            b1 = boundary(bd, one_sided_limits(iet, fiber_integral_dx(roof, g)))
            m = max(abs(v) for v in b0 + b1)
            worst = max(worst, m)
        cycles[iet.d] = len(bd.cycles)
    return worst <= 1e-8, {"max_abs_B": worst, "bumps": 3 * n_bumps, "cycles_by_d": cycles}


def criterion_8(seed: int = SEED, n_points: int = 64) -> tuple[bool, dict]:
    iet = golden_iet()
    g, _ = default_observables()
    h = XBumps.from_fiber_integral(g)
    xs = np.random.default_rng(seed).random(n_points)
    fit = deviation_check(iet, h, [2**k for k in range(10, 21)], xs)
    checks = {"0<theta<1": bool(0 < fit.theta < 1), "R2>=0.8": bool(fit.r_squared >= 0.8)}
    return all(checks.values()), {"theta": fit.theta, "r_squared": fit.r_squared, "worst": fit.worst,
                                  "status": fit.status, "checks": checks, "outputs": fit.worst}


def criterion_9(seed: int = SEED, n_samples: int = 10**6) -> tuple[bool, dict]:
    g, h = default_observables()
    series = {}
    for name, make in (("asym", golden_asym), ("sym", golden_sym)):
        susp = make()
        g.validate(susp.roof, DELTA_SUPP)
        h.validate(susp.roof, DELTA_SUPP)
        series[name] = correlate(susp, g, h, T_GRID, n_samples, seed)
    a, s = series["asym"], series["sym"]
    fit = decay_fit(a)
    mag = np.abs(a.estimates)
    steps = [bool(mag[k] - mag[k + 1] > 2 * math.hypot(a.stderr[k], a.stderr[k + 1])) for k in range(len(mag) - 1)]
    gap = abs(s.estimates[-1]) - abs(a.estimates[-1])
    comb = math.hypot(a.stderr[-1], s.stderr[-1])
    checks = {"strictly_decreasing": all(steps), "gamma_positive": fit.get("gamma") is not None and fit["gamma"] > 0,
              "contrast_3se": bool(gap >= 3 * comb)}
    return all(checks.values()), {
        "t": list(T_GRID),
        "asym": a.rows(), "sym": s.rows(), "decreasing_steps": steps, "fit": fit,
        "contrast_in_se": gap / comb if comb > 0 else math.inf, "checks": checks,
        "discarded": {"asym": a.discarded, "sym": s.discarded},
        "outputs": [a.estimates.tolist(), a.stderr.tolist(), s.estimates.tolist(), s.stderr.tolist()],
    }


def criterion_10(n_side: int = 24) -> tuple[bool, dict]:
    from .surface import fit_log_singularity

    flow = arnold_torus()
    seg = arnold_segment()
    saddle = flow.saddles()
    if len(saddle) != 1:
        raise ConstructionError(f"expected one saddle, found {len(saddle)}")
    sad = saddle[0]
    s_star = flow.saddle_pullback(seg, sad)[0]
    offs = 10.0 ** -np.linspace(2.05, 7.0, n_side)
    pos = np.sort(np.concatenate([s_star - offs, s_star + offs]))
    data = flow.sample_returns(seg, pos)
    fit = fit_log_singularity(data, s_star)
    left_pass = flow.passages(seg, s_star - 1e-4, sad)
    right_pass = flow.passages(seg, s_star + 1e-4, sad)
    if {left_pass, right_pass} != {1, 2}:
        raise ConstructionError(f"passage counts {left_pass}/{right_pass}: no saddle loop side")
    loop, other = ("left", "right") if left_pass == 2 else ("right", "left")
    pred = sad.transit_slope
    ratio = fit[f"C_{loop}"] / fit[f"C_{other}"]
    rel = abs(fit[f"C_{other}"] - pred) / pred
    traj = flow.integrate(seg.point(0.1), 100.0)
    checks = {"transit_slope_10pct": rel <= 0.10, "ratio_in_[1.8,2.2]": 1.8 <= ratio <= 2.2,
              "energy_drift_1e-8": traj.energy_drift_rate <= 1e-8}
    return all(checks.values()), {"saddle": [sad.x, sad.y], "density": sad.density, "hessian_det": sad.hessian_det,
                                  "singular_position": s_star, "fit": fit, "loop_side": loop,
                                  "predicted_slope": pred, "relative_error": rel, "ratio": ratio,
                                  "energy_drift_rate": traj.energy_drift_rate, "checks": checks}


STOCHASTIC = {4: criterion_4, 5: criterion_5, 7: criterion_7, 8: criterion_8, 9: criterion_9}

TITLES = {
    1: "exact renormalization identities",
    2: "visit counts equal cocycle entries",
    3: "tower partitions",
    4: "orbit decomposition bracket",
    5: "Birkhoff sum asymptotics of f'",
    6: "partition measures and properties",
    7: "boundary operator on fiber integrals",
    8: "deviation of ergodic averages",
    9: "correlation decay contrast",
    10: "torus flow saddle asymmetry",
    11: "determinism",
}
LIMITS = {1: 120.0, 2: 300.0, 5: 600.0, 9: 1800.0, 10: 600.0}


def run(criteria=None, on_result: Callable[[CriterionResult], None] | None = None) -> list[CriterionResult]:
    """Run the selected criteria (all by default) in order."""
    wanted = sorted(criteria) if criteria else list(range(1, 12))
    corpus = None
    results: dict[int, CriterionResult] = {}

    def emit(res: CriterionResult):
        results[res.number] = res
        if on_result:
            on_result(res)

    for k in wanted:
        if k in (1, 2, 3):
            if corpus is None:
                corpus = random_corpus()
            fn = {1: criterion_1, 2: criterion_2, 3: criterion_3}[k]
            emit(_timed(k, TITLES[k], LIMITS.get(k), lambda fn=fn: fn(corpus)))
        elif k in (4, 5, 6, 7, 8, 9, 10):
            fn = {4: criterion_4, 5: criterion_5, 6: criterion_6, 7: criterion_7, 8: criterion_8,
                  9: criterion_9, 10: criterion_10}[k]
            emit(_timed(k, TITLES[k], LIMITS.get(k), fn))
        elif k == 11:
            emit(_timed(11, TITLES[11], None, lambda: criterion_11(results)))
    return [results[k] for k in wanted]


def criterion_11(previous: dict[int, CriterionResult]) -> tuple[bool, dict]:
    """Re-run every stochastic criterion with its seed and compare output digests."""
    corpus_a = _digest([i.to_config() for i in random_corpus()])
    corpus_b = _digest([i.to_config() for i in random_corpus()])
    same = {"corpus": corpus_a == corpus_b}
    for k, fn in STOCHASTIC.items():
        first = previous.get(k)
        if first is None:
            first = _timed(k, TITLES[k], None, fn)
        again = _timed(k, TITLES[k], None, fn)
        same[str(k)] = first.digest == again.digest
    return all(same.values()), {"identical": same}
