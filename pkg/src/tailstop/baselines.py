"""Classical comparison predictors: Markov, Chebyshev and a Jeffreys Bayes-factor monitor."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .evt import Prediction
from .exceptions import TailstopError
from .stopping import Decision
from .stream import SummaryStats


@dataclass(frozen=True)
class BaselineConfig:
    tail_prob: float = 0.05
    bayes_B: float = 100.0
    bayes_theta: float = 0.95
    fixed_training: int = 1200
    cantelli: bool = False

    def __post_init__(self):
        if not 0 < self.tail_prob <= 1:
            raise ValueError(f"tail_prob must lie in (0, 1], got {self.tail_prob}")
        if not self.bayes_B > 1:
            raise ValueError(f"bayes_B must exceed 1, got {self.bayes_B}")
        if not 0 < self.bayes_theta < 1:
            raise ValueError(f"bayes_theta must lie in (0, 1), got {self.bayes_theta}")
        if self.fixed_training < 1:
            raise ValueError("fixed_training must be positive")


def markov_predict(stats: SummaryStats, cfg: BaselineConfig = BaselineConfig(), horizon: int = 1) -> Prediction:
    """Level exceeded with probability at most ``tail_prob``: ``mean / tail_prob``."""
    if not stats.mean > 0:
        raise TailstopError("Markov bound needs a positive mean")
    return Prediction(stats.mean / cfg.tail_prob, None, None, horizon, "markov")


def chebyshev_predict(stats: SummaryStats, cfg: BaselineConfig = BaselineConfig(), horizon: int = 1) -> Prediction:
    """``mean + std * sqrt(1/tail_prob)``; the one-sided Cantelli form is opt-in."""
    if cfg.cantelli:
        k = math.sqrt((1 - cfg.tail_prob) / cfg.tail_prob)
        label = "chebyshev-cantelli"
    else:
        k = math.sqrt(1 / cfg.tail_prob)
        label = "chebyshev"
    return Prediction(stats.mean + stats.std * k, None, None, horizon, label)


def jeffreys_min_runs(B: float, theta: float) -> int:
    """Consecutive non-exceeding runs needed: ``ceil(-log2 B / log2 theta)``."""
    if not B > 1:
        raise ValueError(f"Bayes factor must exceed 1, got {B}")
    if not 0 < theta < 1:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    return max(1, math.ceil(-math.log2(B) / math.log2(theta)))


@dataclass(frozen=True)
class BayesMonitorState:
    tau: int = 0
    consecutive_below: int = 0
    required_K: int = 90

    def __post_init__(self):
        if self.required_K < 1:
            raise ValueError("required_K must be positive")


def bayes_monitor_step(state: BayesMonitorState, delta) -> tuple[BayesMonitorState, Decision]:
    if delta > state.tau:
        return replace(state, tau=delta, consecutive_below=0), Decision.CONTINUE
    state = replace(state, consecutive_below=state.consecutive_below + 1)
    if state.consecutive_below >= state.required_K:
        return state, Decision.ACCEPT_H0
    return state, Decision.CONTINUE


def bayes_acceptance(deltas, required_K: int) -> tuple[int, int] | None:
    """Replay a stream; returns ``(samples consumed, tau)`` at acceptance or None."""
    state = BayesMonitorState(required_K=required_K)
    for i, d in enumerate(deltas):
        state, decision = bayes_monitor_step(state, d)
        if decision is Decision.ACCEPT_H0:
            return i + 1, state.tau
    return None


def bayes_predict(tau, horizon: int = 1) -> Prediction:
    return Prediction(float(tau), None, None, horizon, "bayes")
