from fractions import Fraction

import numpy as np
from hypothesis import settings
from hypothesis import strategies as st

from ietmix.iet import Permutation, new_iet

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")


@st.composite
def irreducible_perms(draw, min_d=2, max_d=6):
    d = draw(st.integers(min_d, max_d))
    images = draw(st.permutations(list(range(1, d + 1))))
    p = Permutation(tuple(images))
    if not p.is_irreducible():
        # reverse is always irreducible; fall back to it
        p = Permutation(tuple(range(d, 0, -1)))
    return p


@st.composite
def rational_iets(draw, min_d=2, max_d=6, max_weight=60):
    p = draw(irreducible_perms(min_d, max_d))
    w = draw(st.lists(st.integers(1, max_weight), min_size=p.d, max_size=p.d))
    return new_iet(p, [Fraction(v) for v in w])


def naive_apply(pi, lengths, x):
    """Translation by (image start - domain start), recomputed from scratch."""
    d = len(lengths)
    inv = [0] * d
    for j in range(1, d + 1):
        inv[pi[j - 1] - 1] = j
    a = [sum(lengths[:j]) for j in range(d + 1)]
    for j in range(1, d + 1):
        if a[j - 1] <= x < a[j]:
            ap = sum(lengths[inv[k] - 1] for k in range(pi[j - 1] - 1))
            return x - a[j - 1] + ap
    raise ValueError(x)


def rng(seed=0):
    return np.random.default_rng(seed)
