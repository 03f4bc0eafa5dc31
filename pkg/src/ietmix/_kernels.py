"""Numba kernels for long float orbits.

An IET enters as three arrays/scalars ``(left, shift, total)`` indexed by
domain position; a roof as ``(a, cp, cm, const, cosc, sinc)``.  Kernels
never raise: they report the orbit index of a guard violation through a
status value (``-1`` means no violation).
"""

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi


@njit(cache=True)
def iet_step(x, left, shift, total):
    p = left.shape[0] - 1
    while left[p] > x:
        p -= 1
    y = x + shift[p]
    if y >= total:
        y -= total
    elif y < 0.0:
        y += total
    return y


@njit(cache=True)
def interval_position(x, left):
    p = left.shape[0] - 1
    while left[p] > x:
        p -= 1
    return p


@njit(cache=True)
def smooth_part(x, const, cosc, sinc, order):
    s = const if order == 0 else 0.0
    for m in range(cosc.shape[0]):
        w = TWO_PI * (m + 1)
        c = math.cos(w * x)
        sn = math.sin(w * x)
        if order == 0:
            s += cosc[m] * c + sinc[m] * sn
        elif order == 1:
            s += w * (-cosc[m] * sn + sinc[m] * c)
        else:
            s -= w * w * (cosc[m] * c + sinc[m] * sn)
    return s


@njit(cache=True)
def side_distances(x, ak):
    """``((x - a) mod 1, (a - x) mod 1)``; both zero at the singularity."""
    sp = x - ak
    if sp < 0.0:
        sp += 1.0
    if sp == 0.0:
        return 0.0, 0.0
    return sp, 1.0 - sp


@njit(cache=True)
def nearest_singularity(x, a):
    best = np.inf
    for k in range(a.shape[0]):
        sp, sm = side_distances(x, a[k])
        d = min(sp, sm)
        if d < best:
            best = d
    return best


@njit(cache=True)
def roof_value(x, a, cp, cm, const, cosc, sinc):
    s = smooth_part(x, const, cosc, sinc, 0)
    for k in range(a.shape[0]):
        sp, sm = side_distances(x, a[k])
        s += cp[k] * (1.0 - math.log(sp)) + cm[k] * (1.0 - math.log(sm))
    return s


@njit(cache=True)
def roof_all(x, a, cp, cm, const, cosc, sinc):
    """``(f, f', f'', max_k 1/sp, max_k 1/sm, max_k |log dist|)`` at ``x``."""
    f = smooth_part(x, const, cosc, sinc, 0)
    f1 = smooth_part(x, const, cosc, sinc, 1)
    f2 = smooth_part(x, const, cosc, sinc, 2)
    ut = 0.0
    vt = 0.0
    lg = 0.0
    for k in range(a.shape[0]):
        sp, sm = side_distances(x, a[k])
        f += cp[k] * (1.0 - math.log(sp)) + cm[k] * (1.0 - math.log(sm))
        f1 += -cp[k] / sp + cm[k] / sm
        f2 += cp[k] / (sp * sp) + cm[k] / (sm * sm)
        ut = max(ut, 1.0 / sp)
        vt = max(vt, 1.0 / sm)
        lg = max(lg, -math.log(min(sp, sm)))
    return f, f1, f2, ut, vt, lg


@njit(cache=True)
def orbit_statistics(x0, checkpoints, left, shift, total, a, cp, cm, const, cosc, sinc, guard):
    """Birkhoff sums of ``f, f', f''`` and orbit maxima at sorted checkpoints.

    Returns ``(out, status)`` where ``out[c]`` holds
    ``[S f, S f', S f'', U~, V~, max |log dist|, min dist]`` after
    ``checkpoints[c]`` steps.  Sums are Kahan-compensated.
    """
    nc = checkpoints.shape[0]
    out = np.full((nc, 7), np.nan)
    s = np.zeros(3)
    comp = np.zeros(3)
    term = np.zeros(3)
    ut = 0.0
    vt = 0.0
    lg = 0.0
    mind = np.inf
    x = x0
    c = 0
    i = 0
    while c < nc:
        while c < nc and checkpoints[c] == i:
            out[c, 0] = s[0]
            out[c, 1] = s[1]
            out[c, 2] = s[2]
            out[c, 3] = ut
            out[c, 4] = vt
            out[c, 5] = lg
            out[c, 6] = mind
            c += 1
        if c == nc:
            break
        dist = nearest_singularity(x, a)
        if dist <= guard:
            return out, i
        mind = min(mind, dist)
        f, f1, f2, u, v, l = roof_all(x, a, cp, cm, const, cosc, sinc)
        term[0] = f
        term[1] = f1
        term[2] = f2
        for q in range(3):
            yq = term[q] - comp[q]
            tq = s[q] + yq
            comp[q] = (tq - s[q]) - yq
            s[q] = tq
        ut = max(ut, u)
        vt = max(vt, v)
        lg = max(lg, l)
        x = iet_step(x, left, shift, total)
        i += 1
    return out, -1


@njit(cache=True)
def weighted_sum(x0, r, left, shift, total, weights, a, guard):
    """``S_r(w)(x0)`` for ``w`` constant on each interval position (Kahan)."""
    s = 0.0
    comp = 0.0
    x = x0
    for i in range(r):
        if a.shape[0] > 0 and nearest_singularity(x, a) <= guard:
            return s, i
        yq = weights[interval_position(x, left)] - comp
        tq = s + yq
        comp = (tq - s) - yq
        s = tq
        x = iet_step(x, left, shift, total)
    return s, -1


@njit(cache=True)
def first_close_visit(x0, n, left, shift, total, a, radius):
    """First ``i <= n`` with ``|a_k - T^i x0| <= radius`` (or ``-1``) and the min distance."""
    x = x0
    best = np.inf
    for i in range(n + 1):
        for k in range(a.shape[0]):
            d = abs(a[k] - x)
            if d < best:
                best = d
            if d <= radius:
                return i, best
        x = iet_step(x, left, shift, total)
    return -1, best


@njit(cache=True)
def flow_point(x, y, t, fwd, bwd, a, cp, cm, const, cosc, sinc, guard):
    """Suspension flow of ``(x, y)`` for time ``t``.

    ``fwd``/``bwd`` are ``(left, shift, total)`` tables of ``T`` and ``T^{-1}``.
    Returns ``(x, y, r, status)`` with ``r`` the signed number of roof
    crossings.
    """
    target = y + t
    if target >= 0.0:
        # forward: largest r with S_r(f)(x) <= target
        s = 0.0
        comp = 0.0
        r = 0
        while True:
            if nearest_singularity(x, a) <= guard:
                return x, 0.0, r, r
            fx = roof_value(x, a, cp, cm, const, cosc, sinc)
            yq = fx - comp
            tq = s + yq
            if tq > target:
                return x, target - s, r, -1
            comp = (tq - s) - yq
            s = tq
            x = iet_step(x, fwd[0], fwd[1], fwd[2][0])
            r += 1
    # backward: smallest r with target + S_r(f)(T^{-r} x) >= 0
    s = 0.0
    comp = 0.0
    r = 0
    while target + s < 0.0:
        x = iet_step(x, bwd[0], bwd[1], bwd[2][0])
        r += 1
        if nearest_singularity(x, a) <= guard:
            return x, 0.0, -r, r
        fx = roof_value(x, a, cp, cm, const, cosc, sinc)
        yq = fx - comp
        tq = s + yq
        comp = (tq - s) - yq
        s = tq
    return x, target + s, -r, -1


@njit(cache=True)
def return_counts(xs, t, left, shift, total, a, cp, cm, const, cosc, sinc, guard):
    """``r(x, t)`` for each ``x`` in ``xs``; ``-1`` marks a guard violation."""
    out = np.empty(xs.shape[0], dtype=np.int64)
    fwd = (left, shift, np.array([total]))
    for q in range(xs.shape[0]):
        _, _, r, st = flow_point(xs[q], 0.0, t, fwd, fwd, a, cp, cm, const, cosc, sinc, guard)
        out[q] = r if st < 0 else -1
    return out


@njit(cache=True)
def bump_sum(x, y, amp, xc, wx, yc, wy):
    """Sum of product bumps ``amp * b((x-xc)/wx) * b((y-yc)/wy)``, ``b(s) = (1-s^2)^2``."""
    s = 0.0
    for q in range(amp.shape[0]):
        u = (x - xc[q]) / wx[q]
        if u <= -1.0 or u >= 1.0:
            continue
        v = (y - yc[q]) / wy[q]
        if v <= -1.0 or v >= 1.0:
            continue
        bu = 1.0 - u * u
        bv = 1.0 - v * v
        s += amp[q] * bu * bu * bv * bv
    return s


@njit(cache=True)
def correlation_batch(xs, ys, times, fwd_left, fwd_shift, total, a, cp, cm, const, cosc, sinc,
                      guard, g_par, h_par):
    """Flow each sample across the sorted ``times`` and record ``g(phi_t p) h(p)``.

    Returns ``(products, ok)``: ``products[q, k]`` for sample ``q`` and time
    ``k``; ``ok[q]`` is False when the sample hit the singular guard.
    """
    n = xs.shape[0]
    nt = times.shape[0]
    prod = np.zeros((n, nt))
    ok = np.ones(n, dtype=np.bool_)
    fwd = (fwd_left, fwd_shift, np.array([total]))
    for q in range(n):
        x = xs[q]
        y = ys[q]
        hv = bump_sum(x, y, h_par[0], h_par[1], h_par[2], h_par[3], h_par[4])
        if hv == 0.0:
            continue
        tprev = 0.0
        for k in range(nt):
            x, y, r, st = flow_point(x, y, times[k] - tprev, fwd, fwd, a, cp, cm, const, cosc,
                                     sinc, guard)
            if st >= 0:
                ok[q] = False
                break
            tprev = times[k]
            prod[q, k] = hv * bump_sum(x, y, g_par[0], g_par[1], g_par[2], g_par[3], g_par[4])
        if not ok[q]:
            for k in range(nt):
                prod[q, k] = 0.0
    return prod, ok


@njit(cache=True)
def xbump_value(x, amp, xc, wx):
    s = 0.0
    for q in range(amp.shape[0]):
        u = (x - xc[q]) / wx[q]
        if -1.0 < u < 1.0:
            b = 1.0 - u * u
            s += amp[q] * b * b
    return s


@njit(cache=True)
def xbump_sums(x0, checkpoints, left, shift, total, amp, xc, wx):
    """Kahan Birkhoff sums of a sum of 1-D bumps at sorted checkpoints."""
    nc = checkpoints.shape[0]
    out = np.empty(nc)
    s = 0.0
    comp = 0.0
    x = x0
    c = 0
    i = 0
    while c < nc:
        while c < nc and checkpoints[c] == i:
            out[c] = s
            c += 1
        if c == nc:
            break
        yq = xbump_value(x, amp, xc, wx) - comp
        tq = s + yq
        comp = (tq - s) - yq
        s = tq
        x = iet_step(x, left, shift, total)
        i += 1
    return out


@njit(cache=True)
def sums_at_return(xs, t, left, shift, total, a, cp, cm, const, cosc, sinc, guard):
    """For each ``x``: ``r(x, t)`` and ``S_r f, S_r f', S_r f''`` at that ``r``.

    Rows are ``[r, S f, S f', S f'']``; ``r = -1`` flags a guard violation.
    """
    n = xs.shape[0]
    out = np.zeros((n, 4))
    for q in range(n):
        x = xs[q]
        s0 = 0.0
        c0 = 0.0
        s1 = 0.0
        s2 = 0.0
        r = 0
        while True:
            if nearest_singularity(x, a) <= guard:
                r = -1
                break
            f, f1, f2, u, v, lg = roof_all(x, a, cp, cm, const, cosc, sinc)
            yq = f - c0
            tq = s0 + yq
            if tq > t:
                break
            c0 = (tq - s0) - yq
            s0 = tq
            s1 += f1
            s2 += f2
            x = iet_step(x, left, shift, total)
            r += 1
        out[q, 0] = r
        out[q, 1] = s0
        out[q, 2] = s1
        out[q, 3] = s2
    return out


@njit(cache=True)
def int_iet_step(x, left, shift):
    p = left.shape[0] - 1
    while left[p] > x:
        p -= 1
    return x + shift[p]


@njit(cache=True)
def verify_preliminary(ps, qs, R, left, shift, interior, sing, radius, cp, cm, Q, e_sup):
    """Exhaustive integer check of continuity and singular distance along orbits.

    Integers are in units of ``1/Q``.  For each interval returns a status
    (0 ok, 1 discontinuity, 2 too close) and an upper bound for ``f`` on
    ``T^j J`` over ``0 <= j <= R``.
    """
    n = ps.shape[0]
    status = np.zeros(n, dtype=np.int64)
    fmax = np.zeros(n)
    for q in range(n):
        p = ps[q]
        ln = qs[q] - ps[q]
        worst = 0.0
        for j in range(R + 1):
            e = p + ln
            if j < R:
                for b in range(interior.shape[0]):
                    if p < interior[b] < e:
                        status[q] = 1
                if status[q] != 0:
                    break
            fb = e_sup
            for k in range(sing.shape[0]):
                ak = sing[k]
                if ak <= p:
                    d = p - ak
                elif ak >= e:
                    d = ak - e
                else:
                    d = 0
                if d < radius:
                    status[q] = 2
                sp = p - ak
                if sp <= 0:
                    sp += Q
                sm = ak - e
                if sm < 0:
                    sm += Q
                if sp > 0 and sm > 0:
                    fb += cp[k] * (1.0 - math.log(sp / Q)) + cm[k] * (1.0 - math.log(sm / Q))
                else:
                    fb = np.inf
            if status[q] != 0:
                break
            worst = max(worst, fb)
            if j < R:
                p = int_iet_step(p, left, shift)
        fmax[q] = worst
    return status, fmax


@njit(cache=True)
def verify_final(ps, qs, starts, K, R, left, shift, sing, radius):
    """Check that ``T^r J`` keeps ``radius`` away from ``sing`` for ``start <= r <= start + K``.

    Returns 0 (ok), 1 (close approach) or 2 (window beyond the continuity
    horizon ``R``) per interval.
    """
    n = ps.shape[0]
    status = np.zeros(n, dtype=np.int64)
    for q in range(n):
        if starts[q] + K > R:
            status[q] = 2
            continue
        p = ps[q]
        ln = qs[q] - ps[q]
        for j in range(starts[q] + K + 1):
            if j >= starts[q]:
                e = p + ln
                for k in range(sing.shape[0]):
                    ak = sing[k]
                    if ak <= p:
                        d = p - ak
                    elif ak >= e:
                        d = ak - e
                    else:
                        d = 0
                    if d < radius:
                        status[q] = 1
                if status[q] != 0:
                    break
            p = int_iet_step(p, left, shift)
    return status
