"""Stopping tests on the tail of a cost-difference stream.

Two tests decide when a campaign has collected enough tail evidence:

* the exponentiality test checks that the coefficient of variation of the
  top-k deltas stays below ``1 + 1/(4k)`` for every k in ``[k_min, k_max]``;
* the Laplace rule stops once ``j`` consecutive samples fail to beat the
  running record (rule of succession, miss probability ``1/(j+1)``).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import DegenerateTailError


class Decision(str, enum.Enum):
    CONTINUE = "continue"
    STOP = "stop"
    ACCEPT_H0 = "accept_H0"


@dataclass(frozen=True)
class ExpTestConfig:
    k_min: int = 10
    k_max: int = 100

    def __post_init__(self):
        if self.k_min < 2:
            raise ValueError(f"k_min must be >= 2, got {self.k_min}")
        if self.k_max < self.k_min:
            raise ValueError(f"k_max ({self.k_max}) must be >= k_min ({self.k_min})")


@dataclass(frozen=True)
class TailTestResult:
    """Outcome of one exponentiality check.

    ``cv_trace`` holds ``(k, cv, bound)`` for every k evaluated, ending at
    the failing k if there was one. ``insufficient`` marks the early
    return taken when fewer than ``k_max`` deltas exist; in that case
    ``failing_k`` is ``k_min`` and the trace is empty.
    """

    passed: bool
    cv_trace: tuple[tuple[int, float, float], ...]
    failing_k: int | None
    insufficient: bool = False

    def to_dict(self):
        return {
            "passed": self.passed,
            "failing_k": self.failing_k,
            "insufficient": self.insufficient,
            "cv_trace": [list(t) for t in self.cv_trace],
        }


def cv_bound(k: int) -> float:
    return 1.0 + 1.0 / (4 * k)


def exponentiality_test(deltas, cfg: ExpTestConfig = ExpTestConfig()) -> TailTestResult:
    """Coefficient-of-variation test over the top-k deltas.

    Raises :class:`DegenerateTailError` when the top-k mean is zero.
    """
    d = np.asarray(deltas, dtype=np.float64)
    if d.size < cfg.k_max:
        return TailTestResult(False, (), cfg.k_min, insufficient=True)
    # top-k for every k is a prefix of the descending top-k_max
    top = -np.sort(-np.partition(d, d.size - cfg.k_max)[d.size - cfg.k_max:])
    trace = []
    for k in range(cfg.k_min, cfg.k_max + 1):
        head = top[:k]
        mean = head.mean()
        if mean <= 0:
            raise DegenerateTailError(f"top-{k} deltas are all zero; CV is undefined")
        cv = head.std() / mean
        bound = cv_bound(k)
        trace.append((k, float(cv), bound))
        if cv >= bound:
            return TailTestResult(False, tuple(trace), k)
    return TailTestResult(True, tuple(trace), None)


@dataclass(frozen=True)
class LaplaceState:
    record_value: int = 0
    runs_since_record: int = 0
    j: int = 100

    def __post_init__(self):
        if self.j < 1:
            raise ValueError(f"j must be positive, got {self.j}")


def laplace_step(state: LaplaceState, delta) -> tuple[LaplaceState, Decision]:
    if delta > state.record_value:
        return replace(state, record_value=delta, runs_since_record=0), Decision.CONTINUE
    state = replace(state, runs_since_record=state.runs_since_record + 1)
    if state.runs_since_record >= state.j:
        return state, Decision.STOP
    return state, Decision.CONTINUE


def laplace_stop_index(deltas, j: int = 100) -> int | None:
    """Number of samples consumed when the Laplace rule first stops, or None."""
    state = LaplaceState(j=j)
    for i, d in enumerate(deltas):
        state, decision = laplace_step(state, d)
        if decision is Decision.STOP:
            return i + 1
    return None


def laplace_miss_probability(j: int) -> float:
    """Rule-of-succession probability that the next run beats the record."""
    return 1.0 / (j + 1)
