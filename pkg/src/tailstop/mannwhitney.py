"""Mann-Whitney U test with midranks, exact null distribution for small samples."""

from __future__ import annotations

import math
from collections import namedtuple

import numpy as np
from scipy.special import ndtr
from scipy.stats import rankdata

from .exceptions import EmptyLogError

MannWhitneyResult = namedtuple("MannWhitneyResult", "U p method")

EXACT_LIMIT = 400


def _u_statistic(a, b):
    ranks = rankdata(np.concatenate([a, b]))
    n1 = len(a)
    return float(ranks[:n1].sum() - n1 * (n1 + 1) / 2), ranks


def _asymptotic_p(u, n1, n2, ranks):
    n = n1 + n2
    _, counts = np.unique(ranks, return_counts=True)
    tie_term = float((counts ** 3 - counts).sum())
    var = n1 * n2 / 12 * ((n + 1) - tie_term / (n * (n - 1))) if n > 1 else 0.0
    if var <= 0:
        return 1.0
    z = max(abs(u - n1 * n2 / 2) - 0.5, 0.0) / math.sqrt(var)
    return min(1.0, 2 * float(ndtr(-z)))


def _exact_p(u, n1, ranks):
    """Two-sided p from the permutation distribution of the pooled midranks.

    Midranks are doubled to integers and the number of size-``n1`` subsets
    attaining each rank sum is counted by dynamic programming, so ties are
    handled exactly.
    """
    r2 = np.rint(2 * np.asarray(ranks)).astype(np.int64)
    total = int(r2.sum())
    # ways[j][s]: subsets of size j with doubled rank sum s
    # int64 is exact up to C(40, 20), the largest count in the auto regime
    dtype = np.int64 if math.comb(len(r2), n1) < 2**62 else object
    ways = np.zeros((n1 + 1, total + 1), dtype=dtype)
    ways[0, 0] = 1
    for r in r2:
        r = int(r)
        for j in range(min(n1, len(r2)), 0, -1):
            ways[j, r:] = ways[j, r:] + ways[j - 1, : total + 1 - r]
    dist = ways[n1]
    offset = n1 * (n1 + 1)  # doubled n1(n1+1)/2
    target = int(round(2 * u)) + offset
    all_ = int(sum(dist))
    lo = int(sum(dist[: target + 1]))
    hi = int(sum(dist[target:]))
    return min(1.0, 2 * min(lo, hi) / all_)


def mann_whitney_u(a, b, method: str = "auto") -> MannWhitneyResult:
    """U statistic of ``a`` and its two-sided p-value.

    ``method`` is ``"exact"``, ``"asymptotic"`` (normal approximation with
    tie-corrected variance and continuity correction) or ``"auto"``, which is
    exact when ``len(a) * len(b) <= 400``.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptyLogError("Mann-Whitney U needs two non-empty samples")
    u, ranks = _u_statistic(a, b)
    if method == "auto":
        method = "exact" if a.size * b.size <= EXACT_LIMIT else "asymptotic"
    if method == "exact":
        p = _exact_p(u, a.size, ranks)
    elif method == "asymptotic":
        p = _asymptotic_p(u, a.size, b.size, ranks)
    else:
        raise ValueError(f"unknown method {method!r}")
    return MannWhitneyResult(u, p, method)
