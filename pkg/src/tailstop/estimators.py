"""scikit-learn style wrappers around the tail predictors.

``fit`` takes a 1-D stream of deltas (an ``(n, 1)`` column is accepted too);
``predict`` takes an array of horizons and returns one worst-case level per
horizon.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import evt
from .baselines import (
    BaselineConfig,
    bayes_acceptance,
    chebyshev_predict,
    jeffreys_min_runs,
    markov_predict,
)
from .exceptions import TailstopError
from .stream import summarize


def _check_stream(X):
    X = check_array(X, ensure_2d=False, dtype=np.float64)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError(f"expected a single column of deltas, got shape {X.shape}")
        X = X[:, 0]
    if (X < 0).any():
        raise ValueError("deltas must be nonnegative")
    return X


def _check_horizons(H):
    H = np.atleast_1d(check_array(np.atleast_1d(H), ensure_2d=False, dtype=np.float64)).ravel()
    if (H < 1).any() or (H != np.round(H)).any():
        raise ValueError("horizons must be positive integers")
    return H.astype(np.int64)


class TailRiskEstimator(BaseEstimator):
    """Peaks-over-threshold worst-case predictor.

    Parameters mirror :func:`tailstop.evt.predict_wcdiff`. With
    ``on_failure="max"`` a failed or heavy-tailed fit degrades to the observed
    maximum instead of raising.
    """

    def __init__(self, method="pp", threshold="bootstrap", quantile=0.95, resamples=1000,
                 ci_level=0.95, seed=0, block_bootstrap=False, obs_per_period=365,
                 min_exceedances=10, on_failure="raise"):
        self.method = method
        self.threshold = threshold
        self.quantile = quantile
        self.resamples = resamples
        self.ci_level = ci_level
        self.seed = seed
        self.block_bootstrap = block_bootstrap
        self.obs_per_period = obs_per_period
        self.min_exceedances = min_exceedances
        self.on_failure = on_failure

    def _bootstrap_cfg(self):
        return evt.BootstrapConfig(self.resamples, self.ci_level, self.seed, self.block_bootstrap)

    def fit(self, X, y=None):
        if self.on_failure not in ("raise", "max"):
            raise ValueError(f"on_failure must be 'raise' or 'max', got {self.on_failure!r}")
        d = _check_stream(X)
        self.deltas_ = d
        self.n_samples_ = d.size
        self.observed_max_ = float(d.max())
        self.fallback_reason_ = None
        self.threshold_ = self.params_ = None
        try:
            self.threshold_, self.params_ = evt.fit_tail(
                d, self.method, self.threshold, cfg=self._bootstrap_cfg(), quantile=self.quantile,
                min_exceedances=self.min_exceedances, obs_per_period=self.obs_per_period,
            )
            if not evt.shape_is_valid(self.params_):
                raise evt.FitError(f"heavy tail (shape {self.params_.shape:.4g} > 0)")
        except TailstopError as exc:
            if self.on_failure == "raise":
                raise
            self.fallback_reason_ = f"{type(exc).__name__}: {exc}"
        return self

    def predict(self, X):
        """Return levels for the horizons in ``X``."""
        check_is_fitted(self, "n_samples_")
        H = _check_horizons(X)
        if self.fallback_reason_ is not None:
            return np.full(H.size, self.observed_max_)
        return np.array([evt.return_level(self.params_, h) for h in H])

    def predict_interval(self, X):
        """``(n, 2)`` array of bootstrap bounds; NaN where no interval exists."""
        return np.array([[lo, hi] for _, _, lo, hi in self.return_level_curve(X)], dtype=np.float64)

    def return_level_curve(self, X):
        """Rows ``(horizon, level, ci_low, ci_high)``."""
        check_is_fitted(self, "n_samples_")
        H = _check_horizons(X)
        if self.fallback_reason_ is not None:
            return [(int(h), self.observed_max_, None, None) for h in H]
        rows = evt.return_level_curve(self.deltas_, H, self.params_, self.threshold_,
                                      cfg=self._bootstrap_cfg(),
                                      min_exceedances=self.min_exceedances)
        return [(h, v, np.nan if lo is None else lo, np.nan if hi is None else hi)
                for h, v, lo, hi in rows]


class MarkovEstimator(BaseEstimator):
    """``mean / tail_prob``; horizon-independent."""

    def __init__(self, tail_prob=0.05):
        self.tail_prob = tail_prob

    def fit(self, X, y=None):
        self.stats_ = summarize(_check_stream(X))
        self.value_ = markov_predict(self.stats_, BaselineConfig(tail_prob=self.tail_prob)).value
        return self

    def predict(self, X):
        check_is_fitted(self, "value_")
        return np.full(_check_horizons(X).size, self.value_)


class ChebyshevEstimator(BaseEstimator):
    def __init__(self, tail_prob=0.05, cantelli=False):
        self.tail_prob = tail_prob
        self.cantelli = cantelli

    def fit(self, X, y=None):
        self.stats_ = summarize(_check_stream(X))
        cfg = BaselineConfig(tail_prob=self.tail_prob, cantelli=self.cantelli)
        self.value_ = chebyshev_predict(self.stats_, cfg).value
        return self

    def predict(self, X):
        check_is_fitted(self, "value_")
        return np.full(_check_horizons(X).size, self.value_)


class BayesFactorEstimator(BaseEstimator):
    """Replays the stream through the Jeffreys monitor.

    After ``fit``, ``accepted_`` tells whether the monitor accepted,
    ``stop_index_`` is the number of samples it consumed and ``value_`` is
    the record at acceptance (the stream maximum otherwise).
    """

    def __init__(self, B=100.0, theta=0.95):
        self.B = B
        self.theta = theta

    def fit(self, X, y=None):
        d = _check_stream(X)
        self.required_K_ = jeffreys_min_runs(self.B, self.theta)
        hit = bayes_acceptance(d, self.required_K_)
        self.accepted_ = hit is not None
        if hit is None:
            self.stop_index_, self.value_ = None, float(d.max())
        else:
            self.stop_index_, self.value_ = hit[0], float(hit[1])
        return self

    def predict(self, X):
        check_is_fitted(self, "value_")
        return np.full(_check_horizons(X).size, self.value_)
