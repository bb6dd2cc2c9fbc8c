"""The four token-importance functionals over one attention matrix.

Each maps a row-stochastic causal matrix A [l, l] to a score per key:

* ACC  accumulates attention over all query rows.
* NORM divides the accumulated score by each key's causal visibility
  (the number of queries that can see it), comparing early and late keys
  on equal footing.
* SW   accumulates only over the last `window` query rows.
* PV   accumulates only over the text-region query rows (post-vision).
"""

import enum

import numpy as np

from ..errors import EmptyTextSpan, InvalidConfig


class Functional(str, enum.Enum):
    ACC = "acc"
    NORM = "norm"
    SW = "sw"
    PV = "pv"


def score_matrix(kind, a, l_v=0, window=None):
    """Score every key of one attention matrix. a: [l, l] causal."""
    kind = Functional(kind)
    l = a.shape[0]
    if a.shape != (l, l):
        raise InvalidConfig("attention matrix must be square")
    if kind is Functional.ACC:
        return a.sum(axis=0)
    if kind is Functional.NORM:
        visibility = l - np.arange(l)
        return a.sum(axis=0) / visibility
    if kind is Functional.SW:
        if window is None or not 1 <= window <= l:
            raise InvalidConfig(f"sliding window must satisfy 1 <= w <= {l}, got {window}")
        return a[l - window:, :].sum(axis=0)
    if kind is Functional.PV:
        if l_v >= l:
            raise EmptyTextSpan("post-vision scoring needs at least one text query")
        return a[l_v:, :].sum(axis=0)
    raise InvalidConfig(f"unknown functional {kind!r}")  # pragma: no cover
