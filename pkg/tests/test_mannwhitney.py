import itertools
import math

import numpy as np
import pytest
from scipy.stats import mannwhitneyu

from tailstop.exceptions import EmptyLogError
from tailstop.mannwhitney import mann_whitney_u


def brute_force_p(a, b):
    """Two-sided p by enumerating every split of the pooled midranks."""
    from scipy.stats import rankdata
    ranks = rankdata(list(a) + list(b))
    n1 = len(a)
    obs = sum(ranks[:n1]) - n1 * (n1 + 1) / 2
    sums = [sum(ranks[list(c)]) - n1 * (n1 + 1) / 2
            for c in itertools.combinations(range(len(ranks)), n1)]
    lo = sum(s <= obs + 1e-9 for s in sums)
    hi = sum(s >= obs - 1e-9 for s in sums)
    return min(1.0, 2 * min(lo, hi) / len(sums))


def test_disjoint_samples():
    r = mann_whitney_u([1, 2, 3], [4, 5, 6])
    assert r.U == 0 and r.method == "exact"
    assert r.p == pytest.approx(0.1)
    assert mann_whitney_u([4, 5, 6], [1, 2, 3]).U == 9


def test_identical_samples():
    r = mann_whitney_u([1, 2, 3, 4], [1, 2, 3, 4])
    assert r.U == 8 and r.p == pytest.approx(1.0)


def test_empty():
    with pytest.raises(EmptyLogError):
        mann_whitney_u([], [1])


def test_exact_matches_enumeration_with_ties():
    g = np.random.default_rng(0)
    for _ in range(40):
        n1, n2 = g.integers(1, 7, 2)
        a, b = g.integers(0, 5, n1), g.integers(0, 5, n2)
        assert mann_whitney_u(a, b, "exact").p == pytest.approx(brute_force_p(a, b), abs=1e-12)


def test_asymptotic_matches_scipy():
    g = np.random.default_rng(1)
    a, b = g.integers(0, 30, 40), g.integers(0, 30, 35)
    ours = mann_whitney_u(a, b)
    ref = mannwhitneyu(a, b, alternative="two-sided", method="asymptotic", use_continuity=True)
    assert ours.method == "asymptotic"
    assert ours.U == ref.statistic
    assert ours.p == pytest.approx(ref.pvalue, rel=1e-10)


def test_exact_matches_scipy_without_ties():
    g = np.random.default_rng(2)
    a, b = g.random(8), g.random(9)
    ref = mannwhitneyu(a, b, alternative="two-sided", method="exact")
    assert mann_whitney_u(a, b).p == pytest.approx(ref.pvalue, rel=1e-12)


def test_shift_power():
    hits = 0
    for seed in range(100):
        g = np.random.default_rng(seed)
        a = g.exponential(1.0, 50)
        b = g.exponential(1.0, 50) + 1.0
        hits += mann_whitney_u(a, b).p < 0.05
    assert hits >= 90


def test_large_exact_uses_big_integers():
    a, b = np.arange(33), np.arange(33) + 0.5
    assert math.comb(66, 33) > 2**62
    ref = mannwhitneyu(a, b, alternative="two-sided", method="exact")
    assert mann_whitney_u(a, b, "exact").p == pytest.approx(ref.pvalue, rel=1e-12)
