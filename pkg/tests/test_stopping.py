import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tailstop.exceptions import DegenerateTailError
from tailstop.stopping import (
    Decision,
    ExpTestConfig,
    LaplaceState,
    cv_bound,
    exponentiality_test,
    laplace_miss_probability,
    laplace_step,
    laplace_stop_index,
)


def test_config_validation():
    with pytest.raises(ValueError):
        ExpTestConfig(1, 5)
    with pytest.raises(ValueError):
        ExpTestConfig(10, 5)


def test_bound_at_25():
    assert cv_bound(25) == 1.01


def test_constant_top_passes():
    r = exponentiality_test([1, 2, 5, 5, 5, 5, 5], ExpTestConfig(5, 5))
    assert r.passed and r.failing_k is None
    assert r.cv_trace == ((5, 0.0, 1.05),)


def test_short_input_is_insufficient():
    r = exponentiality_test(list(range(50)), ExpTestConfig(10, 100))
    assert not r.passed and r.insufficient and r.cv_trace == ()


def test_all_zero_top_is_degenerate():
    with pytest.raises(DegenerateTailError):
        exponentiality_test([0] * 200)


def test_failure_trace_ends_at_failing_k():
    d = np.concatenate([np.ones(200), [10_000.0]])
    r = exponentiality_test(d, ExpTestConfig(2, 50))
    assert not r.passed
    assert r.cv_trace[-1][0] == r.failing_k
    assert r.cv_trace[-1][1] >= r.cv_trace[-1][2]
    assert all(cv < b for _, cv, b in r.cv_trace[:-1])


def test_discriminates_exponential_from_pareto():
    passes = fails = 0
    for seed in range(100):
        g = np.random.default_rng(seed)
        exp = np.round(g.exponential(1.0, 10_000) * 100)
        par = g.pareto(1.0, 10_000) + 1
        passes += exponentiality_test(exp).passed
        fails += not exponentiality_test(par).passed
    assert passes >= 90
    assert fails >= 90


@given(st.lists(st.integers(1, 10_000), min_size=20, max_size=120), st.randoms())
def test_permutation_invariant(xs, r):
    cfg = ExpTestConfig(2, 20)
    ys = list(xs)
    r.shuffle(ys)
    assert exponentiality_test(xs, cfg).passed == exponentiality_test(ys, cfg).passed


@given(st.lists(st.integers(1, 10_000), min_size=20, max_size=120), st.integers(1, 50))
def test_scale_invariant_and_shift_preserves_pass(xs, c):
    cfg = ExpTestConfig(2, 20)
    base = exponentiality_test(xs, cfg)
    assert exponentiality_test([x * c for x in xs], cfg).passed == base.passed
    if base.passed:
        assert exponentiality_test([x + c for x in xs], cfg).passed


def test_laplace_examples():
    assert laplace_stop_index([5, 2, 2, 2], j=3) == 4
    s, d = laplace_step(LaplaceState(j=3), 5)
    s, _ = laplace_step(s, 2)
    s, d = laplace_step(s, 6)
    assert (s.record_value, s.runs_since_record, d) == (6, 0, Decision.CONTINUE)


def test_laplace_never_stops_on_increasing_stream():
    assert laplace_stop_index(range(1, 1000), j=5) is None


def test_laplace_matches_rescan_oracle():
    g = np.random.default_rng(7)
    d = np.floor(1000 * 0.999 ** np.arange(5000) * g.random(5000)).astype(int).tolist()

    def oracle(xs, j):
        # first i where the j samples ending at i never beat the record before them
        for i in range(j - 1, len(xs)):
            before = max([0] + xs[: i + 1 - j])
            if max(xs[i + 1 - j: i + 1]) <= before:
                return i + 1
        return None

    assert laplace_stop_index(d, 100) == oracle(d, 100)


def test_laplace_miss_probability():
    assert laplace_miss_probability(100) == 1 / 101
