"""Canonical fixtures used by the benchmarks and the command line."""

from __future__ import annotations

import math

from .correlation import BumpObservable
from .iet import Iet, golden_iet
from .roof import LogRoof
from .surface import Segment, TorusHamiltonianFlow, TrigPoly
from .suspension import Suspension

GOLDEN_K = 40
DELTA_SUPP = 0.02
GOLDEN_RATIO = (1 + math.sqrt(5)) / 2


def golden_roof(c_plus: float, c_minus: float, iet: Iet | None = None) -> LogRoof:
    iet = iet or golden_iet(GOLDEN_K)
    return LogRoof((iet.breakpoints[1],), (c_plus,), (c_minus,))


def golden_asym() -> Suspension:
    """Golden rotation under ``1 - log`` singularities with ``C^+ = 1``, ``C^- = 2``."""
    iet = golden_iet(GOLDEN_K)
    return Suspension(iet, golden_roof(1.0, 2.0, iet))


def golden_sym() -> Suspension:
    iet = golden_iet(GOLDEN_K)
    return Suspension(iet, golden_roof(1.0, 1.0, iet))


SUSPENSION_PRESETS = {"golden-asym": golden_asym, "golden-sym": golden_sym}


def default_observables() -> tuple[BumpObservable, BumpObservable]:
    """Cell-scale observables under both golden roofs.

    ``h`` fills the right continuity interval of the rotation up to height
    3.1 (below the symmetric roof's minimum 3.386); ``g`` is the same bump
    made zero-mean with a reference bump on the left interval.
    """
    h = BumpObservable.single(1.0, 0.691, 0.28, 1.6, 1.5)
    ref = BumpObservable.single(1.0, 0.191, 0.16, 1.6, 1.5)
    return h.with_zero_mean(ref), h


def arnold_torus() -> TorusHamiltonianFlow:
    """One centre, one saddle with a loop around it, irrational linear part.

    ``P = B (1 + cos 2 pi x)(1 + cos 2 pi y) / 4`` with ``B = 0.3`` and
    ``(cx, cy) = 0.1 (1, golden ratio)``.
    """
    b = 0.3
    P = TrigPoly(((1, 0, b / 4, 0.0), (0, 1, b / 4, 0.0), (1, 1, b / 8, 0.0), (1, -1, b / 8, 0.0)), b / 4)
    V = TrigPoly(((1, 0, 0.3, 0.0), (0, 1, 0.0, 0.2)), 1.2)
    return TorusHamiltonianFlow(0.1, 0.1 * GOLDEN_RATIO, P, V)


def arnold_segment() -> Segment:
    """The closed vertical transversal ``x = 1/2``."""
    return Segment(0.5, 0.0, 0.5, 1.0)
