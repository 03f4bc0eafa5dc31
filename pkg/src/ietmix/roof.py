"""Roof functions with asymmetric logarithmic singularities.

The roof is

    f(x) = sum_k [C_k^+ u_k(x) + C_k^- v_k(x)] + e(x)

with ``u_k(x) = 1 - log((x - a_k) mod 1)``, ``v_k(x) = 1 - log((a_k - x) mod 1)``
and ``e`` a trigonometric polynomial plus constant.  ``u_tilde = -u'`` and
``v_tilde = v'`` are the reciprocal distances.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InvalidIetError, PreconditionError, SingularityHitError
from .iet import Iet, parse_rational

SINGULAR_GUARD = 1e-14
MAX_SIGN_SEARCH = 20


def _to_float_tuple(values) -> tuple[float, ...]:
    return tuple(float(parse_rational(v)[0]) if isinstance(v, str) else float(v) for v in values)


@dataclass(frozen=True)
class LogRoof:
    """Roof over ``[0, 1)`` with log singularities at ``a_1 < ... < a_m``.

    Parameters
    ----------
    singularities : sequence of rationals
        Positions ``a_k`` in ``(0, 1)``.
    c_plus, c_minus : sequence of float
        Right and left constants, all positive.
    constant, cos, sin : float, sequences
        Smooth part ``e(x) = constant + sum_m cos[m-1] cos(2 pi m x) + sin[m-1] sin(2 pi m x)``.
    """

    singularities: tuple[Fraction, ...]
    c_plus: tuple[float, ...]
    c_minus: tuple[float, ...]
    constant: float = 0.0
    cos: tuple[float, ...] = ()
    sin: tuple[float, ...] = ()
    guard: float = field(default=SINGULAR_GUARD, compare=False)

    def __post_init__(self):
        sing = tuple(parse_rational(v)[0] for v in self.singularities)
        object.__setattr__(self, "singularities", sing)
        object.__setattr__(self, "c_plus", _to_float_tuple(self.c_plus))
        object.__setattr__(self, "c_minus", _to_float_tuple(self.c_minus))
        object.__setattr__(self, "constant", float(self.constant))
        n = max(len(self.cos), len(self.sin))
        object.__setattr__(self, "cos", _to_float_tuple(self.cos) + (0.0,) * (n - len(self.cos)))
        object.__setattr__(self, "sin", _to_float_tuple(self.sin) + (0.0,) * (n - len(self.sin)))
        if not (len(sing) == len(self.c_plus) == len(self.c_minus)):
            raise InvalidIetError("need one C^+ and one C^- per singularity")
        if any(not 0 < a < 1 for a in sing) or list(sing) != sorted(set(sing)):
            raise InvalidIetError("singularities must be distinct, increasing and inside (0, 1)")
        if any(c <= 0 for c in self.c_plus + self.c_minus):
            raise InvalidIetError("singularity constants must be positive")

    # -- parameters --------------------------------------------------------

    @cached_property
    def a(self) -> np.ndarray:
        return np.array([float(v) for v in self.singularities], dtype=np.float64)

    @cached_property
    def kernel_params(self) -> tuple:
        """Arrays in the layout expected by the numba kernels."""
        return (
            self.a,
            np.array(self.c_plus, dtype=np.float64),
            np.array(self.c_minus, dtype=np.float64),
            float(self.constant),
            np.array(self.cos, dtype=np.float64),
            np.array(self.sin, dtype=np.float64),
        )

    @property
    def C_plus(self) -> float:
        return math.fsum(self.c_plus)

    @property
    def C_minus(self) -> float:
        return math.fsum(self.c_minus)

    def asymmetry_constant(self) -> dict:
        """``C = -C^+ + C^-`` together with ``C^+`` and ``C^-``."""
        return {"C": self.C_minus - self.C_plus, "C_plus": self.C_plus, "C_minus": self.C_minus}

    @property
    def C(self) -> float:
        return self.C_minus - self.C_plus

    # -- auxiliary functions -----------------------------------------------

    def _sides(self, x, k: int):
        x = np.asarray(x, dtype=np.float64)
        ak = self.a[k]
        sp = np.mod(x - ak, 1.0)
        sm = np.mod(ak - x, 1.0)
        if np.any(np.minimum(sp, sm) <= self.guard):
            raise SingularityHitError(f"x within {self.guard} of singularity a_{k + 1} = {ak}", point=x)
        return sp, sm

    def u(self, k: int, x):
        sp, _ = self._sides(x, k)
        return 1.0 - np.log(sp)

    def v(self, k: int, x):
        _, sm = self._sides(x, k)
        return 1.0 - np.log(sm)

    def u_tilde(self, k: int, x):
        sp, _ = self._sides(x, k)
        return 1.0 / sp

    def v_tilde(self, k: int, x):
        _, sm = self._sides(x, k)
        return 1.0 / sm

    def e(self, x, order: int = 0):
        x = np.asarray(x, dtype=np.float64)
        s = np.full_like(x, self.constant if order == 0 else 0.0)
        for m, (cc, ss) in enumerate(zip(self.cos, self.sin), start=1):
            w = 2 * math.pi * m
            c, sn = np.cos(w * x), np.sin(w * x)
            if order == 0:
                s = s + cc * c + ss * sn
            elif order == 1:
                s = s + w * (-cc * sn + ss * c)
            else:
                s = s - w * w * (cc * c + ss * sn)
        return s

    def _eval(self, x, order: int):
        scalar = np.ndim(x) == 0
        s = self.e(x, order)
        for k in range(len(self.singularities)):
            sp, sm = self._sides(x, k)
            cp, cm = self.c_plus[k], self.c_minus[k]
            if order == 0:
                s = s + cp * (1.0 - np.log(sp)) + cm * (1.0 - np.log(sm))
            elif order == 1:
                s = s - cp / sp + cm / sm
            else:
                s = s + cp / sp**2 + cm / sm**2
        return float(s) if scalar else s

    def f(self, x):
        return self._eval(x, 0)

    def f1(self, x):
        return self._eval(x, 1)

    def f2(self, x):
        return self._eval(x, 2)

    __call__ = f

    # -- global quantities -------------------------------------------------

    def integral(self) -> float:
        """``int_0^1 f``; each log term integrates to 2 and the trig part to 0."""
        return 2.0 * (self.C_plus + self.C_minus) + self.constant

    @property
    def e_sup(self) -> float:
        """Upper bound for ``sup |e|`` from the coefficients."""
        return abs(self.constant) + sum(abs(c) + abs(s) for c, s in zip(self.cos, self.sin))

    @cached_property
    def min_f(self) -> float:
        """``min f`` from a ``10^5``-point grid refined by bounded local search."""
        n = 100_000
        xs = (np.arange(n) + 0.5) / n
        near = np.zeros(n, dtype=bool)
        for ak in self.a:
            near |= np.minimum(np.mod(xs - ak, 1.0), np.mod(ak - xs, 1.0)) <= 1e-9
        xs = xs[~near]
        vals = self.f(xs)
        i = int(np.argmin(vals))
        lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
        best = float(vals[i])
        if hi > lo:
            res = minimize_scalar(self.f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
            best = min(best, float(res.fun))
        if best <= 0:
            raise InvalidIetError(f"roof is not positive: min f = {best}")
        return best

    @property
    def floor(self) -> float:
        return self.min_f

    def check_alignment(self, iet: Iet) -> None:
        """Raise unless every singularity is an interior breakpoint of ``iet``."""
        interior = set(iet.breakpoints[1:-1])
        missing = [a for a in self.singularities if a not in interior]
        if missing:
            raise PreconditionError(f"singularities {missing} are not breakpoints of the IET")

    def to_config(self) -> dict:
        return {
            "singularities": [str(a) for a in self.singularities],
            "C_plus": [repr(c) for c in self.c_plus],
            "C_minus": [repr(c) for c in self.c_minus],
            "smooth": {"constant": self.constant, "cos": list(self.cos), "sin": list(self.sin)},
        }


def roof_from_config(cfg: dict, iet: Iet | None = None) -> LogRoof:
    """Build a roof from its JSON form.

    Without explicit ``singularities`` the roof is pinned to the interior
    breakpoints of ``iet``.
    """
    smooth = cfg.get("smooth", {})
    if "singularities" in cfg:
        sing = cfg["singularities"]
    elif iet is not None:
        sing = list(iet.breakpoints[1:-1])
    else:
        raise InvalidIetError("roof config needs singularities or an IET to pin them to")
    roof = LogRoof(
        tuple(sing),
        tuple(cfg["C_plus"]),
        tuple(cfg["C_minus"]),
        float(parse_rational(smooth.get("constant", 0))[0]),
        tuple(smooth.get("cos", ())),
        tuple(smooth.get("sin", ())),
    )
    if iet is not None:
        roof.check_alignment(iet)
    return roof


def check_asymmetric(constants: Sequence[float], tolerance: float = 1e-12) -> tuple[bool, tuple[int, ...] | None]:
    """Look for a nonzero ``{-1, 0, 1}`` combination of ``constants`` that vanishes.

    Returns ``(True, None)`` when none exists, otherwise ``(False, witness)``
    with the witness normalised so its first nonzero entry is ``+1``.
    """
    m = len(constants)
    if m > MAX_SIGN_SEARCH:
        raise PreconditionError(f"{m} constants exceed the exhaustive-search limit {MAX_SIGN_SEARCH}")
    vals = [float(c) for c in constants]
    for signs in itertools.product((0, 1, -1), repeat=m):
        nz = [s for s in signs if s]
        if not nz or nz[0] != 1:
            continue
        if abs(math.fsum(s * c for s, c in zip(signs, vals))) <= tolerance:
            return False, signs
    return True, None
