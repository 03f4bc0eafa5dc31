"""Interval exchange transformations with exact rational data.

An IET is stored in *labelled* form: ``top`` lists the interval labels in
the order they appear in the domain, ``bottom`` the order in which their
images appear.  Labels are the integers ``1..d``; for an IET built with
:func:`new_iet` the label of an interval equals its position, so
``interval_index`` agrees with the textbook index ``j`` of
``I_j = [a_{j-1}, a_j)``.  Induced IETs produced by Rauzy-Veech induction
keep the labels of the original intervals, which is what makes the
cocycle matrices elementary.

All structural data are :class:`fractions.Fraction`.  ``apply`` accepts
exact inputs (``Fraction``/``int``) and returns exact outputs; floats are
evaluated against cached float breakpoints.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from numbers import Rational
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    ExceptionalPointError,
    InvalidIetError,
    OutOfDomainError,
)

SNAP_DENOMINATOR = 10**12


def parse_rational(value) -> tuple[Fraction, bool]:
    """Parse a length given as rational string, int, Fraction or float.

    Floats are snapped to the closest rational with denominator at most
    ``10**12``; the second return value reports whether a snap happened.
    """
    if isinstance(value, bool):
        raise InvalidIetError(f"boolean is not a length: {value!r}")
    if isinstance(value, (Fraction, int)):
        return Fraction(value), False
    if isinstance(value, Rational):
        return Fraction(value.numerator, value.denominator), False
    if isinstance(value, float):
        if not math.isfinite(value):
            raise InvalidIetError(f"non-finite length {value!r}")
        snapped = Fraction(value).limit_denominator(SNAP_DENOMINATOR)
        return snapped, snapped != Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip()), False
        except (ValueError, ZeroDivisionError) as exc:
            raise InvalidIetError(f"cannot parse length {value!r}") from exc
    raise InvalidIetError(f"unsupported length type {type(value).__name__}")


@dataclass(frozen=True)
class Permutation:
    """A permutation ``pi`` of ``{1, ..., d}`` given by its images.

    ``images[j-1] = pi(j)`` is the position (1-based) of the image of the
    ``j``-th interval.
    """

    images: tuple[int, ...]

    def __post_init__(self):
        images = tuple(int(v) for v in self.images)
        object.__setattr__(self, "images", images)
        d = len(images)
        if d == 0:
            raise InvalidIetError("empty permutation")
        if sorted(images) != list(range(1, d + 1)):
            raise InvalidIetError(f"not a bijection of 1..{d}: {images}")

    @property
    def d(self) -> int:
        return len(self.images)

    def __call__(self, j: int) -> int:
        return self.images[j - 1]

    def inverse(self) -> "Permutation":
        inv = [0] * self.d
        for j, pj in enumerate(self.images, start=1):
            inv[pj - 1] = j
        return Permutation(tuple(inv))

    def is_irreducible(self) -> bool:
        """True iff ``pi({1..k}) != {1..k}`` for every ``k < d``."""
        running_max = 0
        for k, pk in enumerate(self.images[:-1], start=1):
            running_max = max(running_max, pk)
            if running_max == k:
                return False
        return True


@dataclass(frozen=True)
class Iet:
    """An interval exchange of ``d`` intervals in labelled form.

    Use :func:`new_iet` to build one from a permutation and lengths.
    """

    top: tuple[int, ...]
    bottom: tuple[int, ...]
    lengths: tuple[Fraction, ...]
    snapped: tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self):
        d = len(self.lengths)
        if sorted(self.top) != list(range(1, d + 1)) or sorted(self.bottom) != list(range(1, d + 1)):
            raise InvalidIetError("top/bottom must both be orderings of the labels 1..d")
        for lab, lam in enumerate(self.lengths, start=1):
            if lam <= 0:
                raise InvalidIetError(f"length of interval {lab} is not positive: {lam}")

    # -- structure ---------------------------------------------------------

    @property
    def d(self) -> int:
        return len(self.lengths)

    @cached_property
    def total(self) -> Fraction:
        return sum(self.lengths, Fraction(0))

    def length(self, label: int) -> Fraction:
        return self.lengths[label - 1]

    @cached_property
    def breakpoints(self) -> tuple[Fraction, ...]:
        """``a_0 = 0 < a_1 < ... < a_d`` in domain order."""
        pts = [Fraction(0)]
        for lab in self.top:
            pts.append(pts[-1] + self.length(lab))
        return tuple(pts)

    @cached_property
    def image_breakpoints(self) -> tuple[Fraction, ...]:
        """Breakpoints of the image partition, ``a'_0 < ... < a'_d``."""
        pts = [Fraction(0)]
        for lab in self.bottom:
            pts.append(pts[-1] + self.length(lab))
        return tuple(pts)

    @cached_property
    def _left(self) -> dict[int, Fraction]:
        return {lab: self.breakpoints[p] for p, lab in enumerate(self.top)}

    @cached_property
    def _image_left(self) -> dict[int, Fraction]:
        return {lab: self.image_breakpoints[p] for p, lab in enumerate(self.bottom)}

    def left_endpoint(self, label: int) -> Fraction:
        return self._left[label]

    def image_left_endpoint(self, label: int) -> Fraction:
        return self._image_left[label]

    def translation(self, label: int) -> Fraction:
        return self._image_left[label] - self._left[label]

    @property
    def pi(self) -> Permutation:
        """Monodromy permutation: image position of the interval at each domain position."""
        pos = {lab: p for p, lab in enumerate(self.bottom, start=1)}
        return Permutation(tuple(pos[lab] for lab in self.top))

    def inverse(self) -> "Iet":
        """The inverse map, itself an IET with top and bottom swapped."""
        return Iet(self.bottom, self.top, self.lengths)

    def normalized(self) -> "Iet":
        """Same combinatorics, lengths rescaled to total 1."""
        tot = self.total
        return Iet(self.top, self.bottom, tuple(lam / tot for lam in self.lengths))

    # -- evaluation --------------------------------------------------------

    @cached_property
    def float_tables(self) -> tuple[np.ndarray, np.ndarray, float]:
        """Float left endpoints and translations by domain position, and total length."""
        left = np.array([float(self.breakpoints[p]) for p in range(self.d)], dtype=np.float64)
        shift = np.array([float(self.translation(lab)) for lab in self.top], dtype=np.float64)
        return left, shift, float(self.total)

    def _position(self, x) -> int:
        if isinstance(x, float):
            left, _, tot = self.float_tables
            if not 0.0 <= x < tot:
                raise OutOfDomainError(f"x = {x!r} outside [0, {tot})")
            return int(np.searchsorted(left, x, side="right")) - 1
        x = Fraction(x)
        if not 0 <= x < self.total:
            raise OutOfDomainError(f"x = {x} outside [0, {self.total})")
        return bisect.bisect_right(self.breakpoints, x) - 1

    def interval_index(self, x) -> int:
        """Label of the interval containing ``x`` (breakpoints go right)."""
        return self.top[self._position(x)]

    def apply(self, x):
        """``T(x)``; exact for exact input, float for float input."""
        p = self._position(x)
        if isinstance(x, float):
            _, shift, tot = self.float_tables
            y = x + shift[p]
            # rounding can push the image a hair outside the domain
            if y >= tot:
                y -= tot
            elif y < 0.0:
                y += tot
            return float(y)
        return Fraction(x) + self.translation(self.top[p])

    __call__ = apply

    def apply_inverse(self, x):
        return self.inverse().apply(x)

    def orbit(self, x, n: int) -> list:
        """``[x, T x, ..., T^{n-1} x]``."""
        out = []
        for _ in range(n):
            out.append(x)
            x = self.apply(x)
        return out

    def iterate(self, x, n: int):
        for _ in range(n):
            x = self.apply(x)
        return x

    def find_connections(self, n_steps: int) -> list[tuple[int, int, int]]:
        """Detect Keane connections up to ``n_steps`` iterates.

        Returns triples ``(i, k, m)`` such that ``T^m(a'_i) = a_k`` with
        ``a'_i`` an interior image breakpoint and ``a_k`` an interior
        breakpoint.  An empty list means no connection within the horizon.
        """
        targets = {self.breakpoints[k]: k for k in range(1, self.d)}
        hits = []
        for i in range(1, self.d):
            x = self.image_breakpoints[i]
            for m in range(n_steps):
                if x in targets:
                    hits.append((i, targets[x], m))
                    break
                x = self.apply(x)
        return hits

    def to_config(self) -> dict:
        if self.top != tuple(range(1, self.d + 1)):
            return {
                "top": list(self.top),
                "bottom": list(self.bottom),
                "lengths": [str(lam) for lam in self.lengths],
            }
        return {"permutation": list(self.pi.images), "lengths": [str(lam) for lam in self.lengths]}


def new_iet(pi: Permutation | Sequence[int], lengths: Iterable) -> Iet:
    """Build the IET ``T(x) = x - a_{j-1} + a'_{j-1}`` on ``[a_{j-1}, a_j)``.

    Lengths may be rationals, rational strings or floats (snapped, see
    :func:`parse_rational`).  If they do not sum to one they are
    normalised exactly.
    """
    if not isinstance(pi, Permutation):
        pi = Permutation(tuple(pi))
    parsed = [parse_rational(v) for v in lengths]
    lam = [p[0] for p in parsed]
    snapped = tuple(j for j, p in enumerate(parsed, start=1) if p[1])
    if len(lam) != pi.d:
        raise InvalidIetError(f"{len(lam)} lengths for a permutation of {pi.d} elements")
    for j, v in enumerate(lam, start=1):
        if v <= 0:
            raise InvalidIetError(f"length {j} is not positive: {v}")
    tot = sum(lam, Fraction(0))
    if tot != 1:
        lam = [v / tot for v in lam]
    top = tuple(range(1, pi.d + 1))
    bottom = tuple(pi.inverse().images)
    return Iet(top, bottom, tuple(lam), snapped=snapped)


def iet_from_config(cfg: dict) -> Iet:
    """Build an IET from ``{"permutation": [...], "lengths": [...]}``."""
    try:
        if "top" in cfg:
            lam = tuple(parse_rational(v)[0] for v in cfg["lengths"])
            return Iet(tuple(cfg["top"]), tuple(cfg["bottom"]), lam)
        return new_iet(cfg["permutation"], cfg["lengths"])
    except KeyError as exc:
        raise InvalidIetError(f"IET config is missing {exc}") from exc


def rotation(alpha) -> Iet:
    """Rotation ``x -> x + alpha mod 1`` as the 2-IET with ``pi = (2, 1)``."""
    a = parse_rational(alpha)[0]
    if not 0 < a < 1:
        raise InvalidIetError(f"rotation number must lie in (0, 1), got {a}")
    return new_iet((2, 1), (1 - a, a))


def fibonacci(k: int) -> int:
    a, b = 0, 1
    for _ in range(k):
        a, b = b, a + b
    return a


def golden_iet(k: int = 40) -> Iet:
    """Fibonacci approximation ``(F_{k-2}/F_k, F_{k-1}/F_k)`` of the golden rotation."""
    fk = fibonacci(k)
    return new_iet((2, 1), (Fraction(fibonacci(k - 2), fk), Fraction(fibonacci(k - 1), fk)))


# -- observables -------------------------------------------------------------


@dataclass(frozen=True)
class Observable:
    """A real function on [0, 1) minus a finite exceptional set.

    Querying a point within ``guard`` of an exceptional point raises
    :class:`ExceptionalPointError` instead of returning ``nan``.
    """

    func: Callable
    exceptional: tuple = ()
    guard: float = 0.0
    name: str = "g"

    def __call__(self, x):
        for e in self.exceptional:
            if x == e or abs(float(x) - float(e)) <= self.guard:
                raise ExceptionalPointError(f"{self.name} undefined at {x}", point=x)
        return self.func(x)


def as_observable(g) -> Observable:
    return g if isinstance(g, Observable) else Observable(g)


def birkhoff_sum(iet: Iet, g, x, r: int):
    """``S_r(g)(x) = sum_{i<r} g(T^i x)``.

    Exact when ``x`` is exact and ``g`` returns exact values; floating
    sums use :func:`math.fsum`.  An orbit point in ``g``'s exceptional set
    raises :class:`ExceptionalPointError` carrying the orbit index.
    """
    if r < 0:
        raise ValueError("r must be non-negative")
    g = as_observable(g)
    terms = []
    for i in range(r):
        try:
            terms.append(g(x))
        except ExceptionalPointError as exc:
            raise ExceptionalPointError(
                f"orbit point T^{i} x = {x} is exceptional for {g.name}", point=x, index=i
            ) from exc
        x = iet.apply(x)
    if not terms:
        return 0
    if all(isinstance(v, (int, Fraction)) for v in terms):
        return sum(terms, Fraction(0))
    return math.fsum(float(v) for v in terms)
