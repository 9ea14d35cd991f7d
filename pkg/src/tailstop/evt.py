"""Peaks-over-threshold tail modelling and worst-case extrapolation.

The pipeline is: pick a threshold ``u`` (nearest-rank quantile, or the
bootstrap search over the 0.99..0.75 quantiles), fit a tail model to the
values strictly above ``u``, check that the fitted shape is non-positive,
and turn the fit into a return level for the requested horizon (number of
future fuzzing iterations). When any step fails the prediction falls back
to the largest delta seen so far.

Three tail models are supported:

``exponential``
    excesses ``y = x - u`` follow ``Exp(scale)``; shape fixed at 0.
``gpd``
    excesses follow a generalized Pareto ``H(y) = 1 - (1 + xi*y/scale)^(-1/xi)``.
``pp``
    exceedances form a Poisson process whose per-period maxima follow a GEV
    with ``(location, scale, shape)``; one period is ``obs_per_period``
    iterations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .exceptions import (
    BootstrapError,
    EmptyLogError,
    FitError,
    NoValidThresholdError,
    TailstopError,
    TooFewExceedancesError,
)

MIN_EXCEEDANCES = 10
OBS_PER_PERIOD = 365
CANDIDATE_QUANTILES = tuple(p / 100 for p in range(99, 74, -1))

# xi below this is treated as the non-regular lower boundary of the likelihood
_XI_FLOOR = -1.0
_BOUNDARY_TOL = 1e-3


@dataclass(frozen=True)
class BootstrapConfig:
    resamples: int = 1000
    ci_level: float = 0.95
    seed: int = 0
    block: bool = False

    def __post_init__(self):
        if self.resamples < 2:
            raise ValueError(f"resamples must be >= 2, got {self.resamples}")
        if not 0 < self.ci_level < 1:
            raise ValueError(f"ci_level must lie in (0, 1), got {self.ci_level}")


@dataclass(frozen=True)
class ThresholdChoice:
    u: float
    method: str
    exceedance_count: int
    quantile: float
    candidate_scores: tuple[tuple[float, float, float], ...] = ()

    def to_dict(self):
        return {
            "u": self.u,
            "method": self.method,
            "quantile": self.quantile,
            "exceedance_count": self.exceedance_count,
            "candidate_scores": [list(c) for c in self.candidate_scores],
        }


@dataclass(frozen=True)
class TailModelParams:
    kind: str
    location: float
    scale: float
    shape: float
    threshold: float
    zeta: float
    obs_per_period: int = OBS_PER_PERIOD
    n_total: int = 0
    n_exceed: int = 0
    loglik: float = float("nan")

    def __post_init__(self):
        if self.kind not in ("exponential", "gpd", "pp"):
            raise ValueError(f"unknown tail model kind {self.kind!r}")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if not 0 < self.zeta <= 1:
            raise ValueError(f"zeta must lie in (0, 1], got {self.zeta}")
        if self.kind == "exponential" and self.shape != 0:
            raise ValueError("exponential model must have shape 0")

    def to_dict(self):
        return {
            "kind": self.kind,
            "location": self.location,
            "scale": self.scale,
            "shape": self.shape,
            "threshold": self.threshold,
            "zeta": self.zeta,
            "obs_per_period": self.obs_per_period,
            "n_total": self.n_total,
            "n_exceed": self.n_exceed,
            "loglik": self.loglik,
        }


@dataclass(frozen=True)
class Prediction:
    """Extrapolated worst-case delta over ``horizon`` iterations."""

    value: float
    ci_low: float | None
    ci_high: float | None
    horizon: int
    method: str
    fallback_used: bool = False

    def __post_init__(self):
        if self.ci_low is not None and self.ci_high is not None:
            if not self.ci_low <= self.value <= self.ci_high:
                raise ValueError(
                    f"interval [{self.ci_low}, {self.ci_high}] does not contain {self.value}"
                )

    def to_dict(self):
        return {
            "value": self.value,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "horizon": self.horizon,
            "method": self.method,
            "fallback_used": self.fallback_used,
        }

    def render(self) -> str:
        """Human form, e.g. ``73.3 [47.7, 98.9]``."""
        if self.ci_low is None or self.ci_high is None:
            return f"{self.value:.1f}"
        return f"{self.value:.1f} [{self.ci_low:.1f}, {self.ci_high:.1f}]"


# -- quantiles and thresholds ---------------------------------------------------


def nearest_rank(q: float, n: int) -> int:
    """1-based nearest rank ``ceil(q*n)``, clamped to ``[1, n]``."""
    # round first so that e.g. 0.07*100 does not become rank 8
    return min(n, max(1, math.ceil(round(q * n, 9))))


def empirical_quantile(values, q: float, *, presorted: bool = False) -> float:
    v = np.asarray(values)
    if v.size == 0:
        raise EmptyLogError("quantile of an empty sample")
    if not presorted:
        v = np.sort(v)
    return v[nearest_rank(q, v.size) - 1].item()


def select_threshold_quantile(deltas, q: float = 0.95) -> ThresholdChoice:
    """Threshold at the nearest-rank ``q`` quantile; exceedances are strictly above it."""
    if not 0 < q < 1:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    d = np.asarray(deltas)
    if d.size == 0:
        raise EmptyLogError("no deltas")
    u = empirical_quantile(d, q)
    count = int(np.count_nonzero(d > u))
    if count < 2:
        raise TooFewExceedancesError(f"only {count} value(s) above the {q} quantile ({u})")
    return ThresholdChoice(float(u), "quantile", count, q)


# -- likelihoods ----------------------------------------------------------------


def gpd_loglik(scale: float, shape: float, excesses) -> float:
    """Generalized Pareto log-likelihood; ``-inf`` outside the support."""
    y = np.asarray(excesses, dtype=np.float64)
    if not scale > 0:
        return -math.inf
    k = y.size
    if shape == 0:
        return -k * math.log(scale) - float(y.sum()) / scale
    z = shape * y / scale
    if np.any(z <= -1):
        return -math.inf
    return -k * math.log(scale) - (1 + 1 / shape) * float(np.log1p(z).sum())


def pp_nll(location: float, scale: float, shape: float, exceedances, u: float, span: float) -> float:
    """Point-process negative log-likelihood over ``span`` periods."""
    x = np.asarray(exceedances, dtype=np.float64)
    if not scale > 0:
        return math.inf
    if shape == 0:
        return span * math.exp(-(u - location) / scale) + x.size * math.log(scale) + float(
            ((x - location) / scale).sum()
        )
    zx = 1 + shape * (x - location) / scale
    if np.any(zx <= 0):
        return math.inf
    zu = 1 + shape * (u - location) / scale
    if zu <= 0:
        # u outside the support: above the upper endpoint contributes nothing,
        # below the lower endpoint is impossible
        rate = 0.0 if shape < 0 else math.inf
    else:
        rate = zu ** (-1 / shape)
    return span * rate + x.size * math.log(scale) + (1 + 1 / shape) * float(np.log(zx).sum())


def pwm_seed(excesses) -> tuple[float, float]:
    """Probability-weighted-moment (scale, shape) estimate for a GPD."""
    y = np.sort(np.asarray(excesses, dtype=np.float64))
    n = y.size
    b0 = y.mean()
    p = (np.arange(1, n + 1) - 0.35) / n
    t = float(np.mean((1 - p) * y))
    denom = b0 - 2 * t
    if denom <= 0 or not np.isfinite(denom):
        return float(b0), 0.0
    shape = -(b0 / denom - 2)
    scale = 2 * b0 * t / denom
    shape = float(np.clip(shape, -0.9, 0.9))
    ymax = y[-1]
    if shape < 0 and scale + shape * ymax <= 0:
        scale = -shape * ymax * 1.05
    if not scale > 0:
        return float(b0), 0.0
    return float(scale), shape


def _nelder_mead(fun, x0, step=0.1, maxfev=10_000, xatol=1e-8):
    x0 = np.asarray(x0, dtype=np.float64)
    simplex = np.vstack([x0] + [x0 + step * e for e in np.eye(x0.size)])
    best = None
    # one deterministic restart from the converged point guards against
    # a prematurely collapsed simplex
    for _ in range(2):
        res = minimize(
            fun,
            simplex[0],
            method="Nelder-Mead",
            options={
                "xatol": xatol,
                "fatol": np.inf,
                "maxfev": maxfev,
                "initial_simplex": simplex,
            },
        )
        if not res.success:
            raise FitError(f"likelihood optimisation did not converge: {res.message}")
        if best is not None and not res.fun < best.fun:
            break
        best = res
        simplex = np.vstack([res.x] + [res.x + step * 0.1 * e for e in np.eye(x0.size)])
    return best


def _check_excesses(excesses, minimum):
    y = np.asarray(excesses, dtype=np.float64)
    if y.ndim != 1:
        raise ValueError("excesses must be one-dimensional")
    if y.size < minimum:
        raise TooFewExceedancesError(f"need at least {minimum} excesses, got {y.size}")
    if np.any(~np.isfinite(y)) or np.any(y <= 0):
        raise FitError("excesses must be finite and strictly positive")
    return y


def fit_exponential(excesses, u: float, zeta: float, obs_per_period: int = OBS_PER_PERIOD, n_total: int = 0) -> TailModelParams:
    """Exponential tail: the maximum-likelihood scale is the mean excess."""
    y = _check_excesses(excesses, 2)
    scale = float(y.mean())
    return TailModelParams(
        "exponential", float(u), scale, 0.0, float(u), float(zeta), obs_per_period,
        n_total, int(y.size), gpd_loglik(scale, 0.0, y),
    )


def fit_gpd(excesses, u: float, zeta: float, obs_per_period: int = OBS_PER_PERIOD, *,
            min_exceedances: int = MIN_EXCEEDANCES, n_total: int = 0) -> TailModelParams:
    """Maximum-likelihood generalized Pareto fit.

    Nelder-Mead over ``(log scale, shape)`` from the PWM seed; points
    outside ``scale > 0``, ``shape >= -1`` and ``1 + shape*y/scale > 0`` are
    rejected. Below ``shape = -1`` the likelihood is unbounded, so uniform-like
    samples end on that floor and are returned there.
    """
    y = _check_excesses(excesses, min_exceedances)
    if np.ptp(y) == 0:
        raise FitError("all excesses are equal; the shape is not identifiable")
    scale0, shape0 = pwm_seed(y)

    def nll(z):
        if z[1] < _XI_FLOOR:
            return math.inf
        return -gpd_loglik(math.exp(z[0]), z[1], y)

    res = _nelder_mead(nll, [math.log(scale0), shape0])
    scale, shape = math.exp(res.x[0]), float(res.x[1])
    return TailModelParams("gpd", float(u), scale, shape, float(u), float(zeta),
                           obs_per_period, n_total, int(y.size), -float(res.fun))


def gpd_to_pp(scale: float, shape: float, u: float, rate: float) -> tuple[float, float]:
    """Map a GPD fit plus exceedance rate per period to PP ``(location, scale)``."""
    if shape == 0:
        return u + scale * math.log(rate), scale
    pp_scale = scale * rate ** shape
    location = u - pp_scale * (rate ** (-shape) - 1) / shape
    return location, pp_scale


def fit_pp(deltas, u: float, zeta: float | None = None, obs_per_period: int = OBS_PER_PERIOD, *,
           min_exceedances: int = MIN_EXCEEDANCES, polish: bool = True) -> TailModelParams:
    """Poisson-process fit over the exceedances of ``u``.

    The observation span is ``len(deltas) / obs_per_period`` periods. The
    GPD fit of the excesses, mapped to ``(location, scale, shape)``, seeds a
    three-dimensional Nelder-Mead on the point-process likelihood. With
    ``polish=False`` the mapped profile-likelihood estimate is returned as is
    (the PP likelihood factorises, so the two agree at the optimum).
    """
    d = np.asarray(deltas, dtype=np.float64)
    x = d[d > u]
    if x.size < max(min_exceedances, 2):
        raise TooFewExceedancesError(f"need at least {min_exceedances} exceedances, got {x.size}")
    n = d.size
    span = n / obs_per_period
    zeta = x.size / n if zeta is None else zeta
    rate = x.size / span
    if polish:
        g = fit_gpd(x - u, u, zeta, obs_per_period, min_exceedances=min_exceedances)
        g_scale, shape0 = g.scale, g.shape
    else:
        g_scale, shape0 = gpd_profile_mle(x - u)
    loc0, scale0 = gpd_to_pp(g_scale, shape0, u, rate)
    if not polish:
        nll0 = pp_nll(loc0, scale0, shape0, x, u, span)
        return TailModelParams("pp", loc0, scale0, shape0, float(u), float(zeta),
                               obs_per_period, n, int(x.size), -nll0)

    def nll(z):
        if z[2] < _XI_FLOOR:
            return math.inf
        return pp_nll(u + z[0] * scale0, scale0 * math.exp(z[1]), z[2], x, u, span)

    res = _nelder_mead(nll, [(loc0 - u) / scale0, 0.0, shape0])
    location = u + res.x[0] * scale0
    scale = scale0 * math.exp(res.x[1])
    shape = float(res.x[2])
    return TailModelParams("pp", float(location), float(scale), shape, float(u), float(zeta),
                           obs_per_period, n, int(x.size), -float(res.fun))


# -- profile likelihood (vectorised over bootstrap weights) -----------------------

_S_GRID = np.concatenate([
    -np.logspace(np.log10(1 - 1e-7), -4, 70),
    np.logspace(-4, 4, 90),
])


def _profile_weighted(y: np.ndarray, weights: np.ndarray):
    """GPD MLE for many weightings of the same distinct excesses.

    ``y`` holds distinct positive excesses, ``weights`` is ``(B, len(y))``
    multiplicities. Uses the profile likelihood in ``theta = shape/scale``:
    for fixed theta the shape MLE is the weighted mean of
    ``log1p(theta*y)``. The maximising theta is located on a log-spaced grid
    and refined by a parabola through the neighbouring grid points.

    Returns ``(scale, shape, ok)`` arrays of length B.
    """
    ymax = y.max()
    theta = _S_GRID / ymax
    k = weights.sum(axis=1).astype(np.float64)
    logs = np.log1p(np.outer(y, theta))
    xi = (weights @ logs) / k[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        ll = -k[:, None] * (np.log(xi / theta) + xi + 1)
    ll[~(xi >= _XI_FLOOR) | ~np.isfinite(ll)] = -np.inf
    g = np.argmax(ll, axis=1)
    rows = np.arange(weights.shape[0])
    G = theta.size
    interior = (g > 0) & (g < G - 1)
    gl = np.clip(g - 1, 0, G - 1)
    gr = np.clip(g + 1, 0, G - 1)
    l0, l1, l2 = ll[rows, gl], ll[rows, g], ll[rows, gr]
    ok = interior & np.isfinite(l0) & np.isfinite(l1) & np.isfinite(l2)
    s0, s1, s2 = _S_GRID[gl], _S_GRID[g], _S_GRID[gr]
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = (s0 - s1) * (s0 - s2) * (s1 - s2)
        a = (s2 * (l1 - l0) + s1 * (l0 - l2) + s0 * (l2 - l1)) / denom
        b = (s2 * s2 * (l0 - l1) + s1 * s1 * (l2 - l0) + s0 * s0 * (l1 - l2)) / denom
        vertex = -b / (2 * a)
    use = ok & (a < 0) & np.isfinite(vertex)
    s_best = np.where(use, np.clip(vertex, s0, s2), s1)
    t_best = s_best / ymax
    xi_best = (weights * np.log1p(np.outer(t_best, y))).sum(axis=1) / k
    # refinement is only kept when it stays feasible
    bad = ~(xi_best >= _XI_FLOOR)
    t_best = np.where(bad, theta[g], t_best)
    xi_best = np.where(bad, xi[rows, g], xi_best)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(np.abs(t_best) > 0, xi_best / t_best, (weights @ y) / k)
    ok &= np.isfinite(scale) & (scale > 0) & (xi_best > _XI_FLOOR + _BOUNDARY_TOL)
    return scale, xi_best, ok


def gpd_profile_mle(excesses) -> tuple[float, float]:
    """Single-sample GPD MLE via the profile likelihood (grid + bounded Brent)."""
    y = np.asarray(excesses, dtype=np.float64)
    if y.size < 2 or np.ptp(y) == 0:
        raise FitError("need at least two distinct excesses")
    vals, counts = np.unique(y, return_counts=True)
    _, _, ok = _profile_weighted(vals, counts[None, :])
    if not ok[0]:
        raise FitError("profile likelihood has no interior maximum")
    ymax = vals[-1]
    theta = _S_GRID / ymax
    k = y.size
    logs = np.log1p(np.outer(vals, theta))
    xi = (counts @ logs) / k
    with np.errstate(divide="ignore", invalid="ignore"):
        ll = -k * (np.log(xi / theta) + xi + 1)
    ll[~(xi >= _XI_FLOOR) | ~np.isfinite(ll)] = -np.inf
    g = int(np.argmax(ll))

    def neg(s):
        t = s / ymax
        if t == 0:
            return k * (math.log(float(y.mean())) + 1)
        x = float(counts @ np.log1p(t * vals)) / k
        if x < _XI_FLOOR or x / t <= 0:
            return math.inf
        return k * (math.log(x / t) + x + 1)

    res = minimize_scalar(neg, bounds=(_S_GRID[g - 1], _S_GRID[g + 1]), method="bounded",
                          options={"xatol": 1e-12})
    t = res.x / ymax
    shape = float(counts @ np.log1p(t * vals)) / k
    scale = shape / t if t != 0 else float(y.mean())
    if shape < _XI_FLOOR + _BOUNDARY_TOL or not scale > 0:
        raise FitError("profile maximum sits on the non-regular boundary")
    return float(scale), float(shape)


# -- validity and return levels ---------------------------------------------------


def shape_is_valid(p: TailModelParams) -> bool:
    """True for light (shape < 0) or exponential (shape == 0) tails."""
    return p.shape <= 0


def _box_cox(x: float, shape: float) -> float:
    """``(x**shape - 1) / shape`` without cancellation; ``log x`` in the limit."""
    lx = math.log(x)
    if abs(shape) < 1e-12:
        return lx
    return math.expm1(shape * lx) / shape


def return_level(p: TailModelParams, horizon) -> float:
    """Expected worst delta over ``horizon`` future iterations."""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if p.kind in ("exponential", "gpd"):
        nz = horizon * p.zeta
        if nz <= 1:
            return p.threshold
        return p.threshold + p.scale * _box_cox(nz, p.shape)
    m = horizon / p.obs_per_period
    if m <= 1:
        raise TailstopError(
            f"horizon {horizon} is not longer than one period ({p.obs_per_period} iterations)"
        )
    yp = -math.log1p(-1 / m)
    # mu - (sigma/xi) * (1 - yp**-xi)
    return p.location + p.scale * _box_cox(1 / yp, p.shape)


# -- bootstrap -------------------------------------------------------------------


def _seed_words(seed: int) -> int:
    return int(seed) & 0xFFFF_FFFF_FFFF_FFFF


def resample_indices(n: int, rng: np.random.Generator, block: bool = False) -> np.ndarray:
    """Indices of one i.i.d. or moving-block bootstrap resample of size ``n``."""
    if not block or n < 2:
        return rng.integers(0, n, n)
    length = max(1, math.ceil(n ** (1 / 3)))
    nblocks = math.ceil(n / length)
    starts = rng.integers(0, n - length + 1, nblocks)
    return (starts[:, None] + np.arange(length)).ravel()[:n]


def replicate_rng(cfg: BootstrapConfig, stream: int, index: int) -> np.random.Generator:
    return np.random.default_rng([_seed_words(cfg.seed), stream, index])


def _percentile_interval(values, level):
    v = np.sort(np.asarray(values, dtype=np.float64))
    alpha = 1 - level
    return (empirical_quantile(v, alpha / 2, presorted=True),
            empirical_quantile(v, 1 - alpha / 2, presorted=True))


def bootstrap_replicates(deltas, fit: Callable[[np.ndarray], object], cfg: BootstrapConfig):
    """Run ``fit`` on each resample; failed replicates come back as ``None``.

    Each replicate draws from its own generator seeded by
    ``(cfg.seed, replicate index)`` so results do not depend on ordering.
    """
    d = np.asarray(deltas)
    out = []
    for b in range(cfg.resamples):
        rng = replicate_rng(cfg, 2, b)
        sample = d[resample_indices(d.size, rng, cfg.block)]
        try:
            out.append(fit(sample))
        except (TailstopError, ArithmeticError, ValueError):
            out.append(None)
    return out


def bootstrap_ci(deltas, pipeline: Callable[[np.ndarray, int], float], horizon: int,
                 cfg: BootstrapConfig = BootstrapConfig()) -> tuple[float, float]:
    """Percentile bootstrap interval for ``pipeline(resample, horizon)``."""
    levels = []
    for r in bootstrap_replicates(deltas, lambda s: pipeline(s, horizon), cfg):
        if r is not None and np.isfinite(r):
            levels.append(float(r))
    if len(levels) * 2 < cfg.resamples:
        raise BootstrapError(f"only {len(levels)} of {cfg.resamples} replicates succeeded")
    return _percentile_interval(levels, cfg.ci_level)


def select_threshold_bootstrap(deltas, cfg: BootstrapConfig = BootstrapConfig(), *,
                               min_exceedances: int = MIN_EXCEEDANCES,
                               quantiles: Sequence[float] = CANDIDATE_QUANTILES) -> ThresholdChoice:
    """Pick the candidate quantile whose GPD shape is most stable under resampling.

    For every candidate ``u`` the exceedances are resampled ``cfg.resamples``
    times and refitted; the score is the width of the central 95% interval
    of the resampled shapes divided by ``|shape| + 0.1``. Candidates with too
    few exceedances, more than half failed refits, or an interval lying
    entirely above zero (no plausible light or exponential tail) score
    ``inf``. The lowest score wins, ties going to the higher quantile.
    """
    d = np.sort(np.asarray(deltas, dtype=np.float64))
    if d.size == 0:
        raise EmptyLogError("no deltas")
    scores = []
    cache = {}
    best = None
    for i, q in enumerate(quantiles):
        u = d[nearest_rank(q, d.size) - 1].item()
        if u not in cache:
            cache[u] = _threshold_score(d, u, cfg, i, min_exceedances)
        score, count = cache[u]
        scores.append((q, float(u), score))
        if np.isfinite(score) and (best is None or score < best[2]):
            best = (q, float(u), score, count)
    if best is None:
        raise NoValidThresholdError("no candidate threshold yields a stable GPD fit")
    q, u, _, count = best
    return ThresholdChoice(u, "bootstrap", count, q, tuple(scores))


def _threshold_score(d_sorted, u, cfg, index, min_exceedances):
    x = d_sorted[d_sorted > u]
    m = x.size
    if m < min_exceedances:
        return math.inf, m
    y = x - u
    vals, inv = np.unique(y, return_inverse=True)
    if vals.size < 2:
        return math.inf, m
    counts = np.bincount(inv, minlength=vals.size)
    _, xi_hat, ok_hat = _profile_weighted(vals, counts[None, :])
    if not ok_hat[0]:
        return math.inf, m
    rng = replicate_rng(cfg, 1, index)
    draws = inv[rng.integers(0, m, (cfg.resamples, m))]
    flat = draws + (np.arange(cfg.resamples) * vals.size)[:, None]
    weights = np.bincount(flat.ravel(), minlength=cfg.resamples * vals.size)
    weights = weights.reshape(cfg.resamples, vals.size).astype(np.float64)
    _, xi, ok = _profile_weighted(vals, weights)
    if ok.sum() * 2 < cfg.resamples:
        return math.inf, m
    lo, hi = _percentile_interval(xi[ok], 0.95)
    if lo > 0:
        # the whole interval is heavy-tailed: no valid distribution here
        return math.inf, m
    return float((hi - lo) / (abs(xi_hat[0]) + 0.1)), m


# -- end-to-end predictor ----------------------------------------------------------


def fit_tail(deltas, method: str = "pp", threshold_method: str = "bootstrap", *,
             cfg: BootstrapConfig = BootstrapConfig(), quantile: float = 0.95,
             min_exceedances: int = MIN_EXCEEDANCES,
             obs_per_period: int = OBS_PER_PERIOD) -> tuple[ThresholdChoice, TailModelParams]:
    """Threshold selection followed by the requested tail fit."""
    d = np.asarray(deltas, dtype=np.float64)
    if d.size == 0:
        raise EmptyLogError("no deltas")
    if threshold_method == "bootstrap":
        choice = select_threshold_bootstrap(d, cfg, min_exceedances=min_exceedances)
    elif threshold_method == "quantile":
        choice = select_threshold_quantile(d, quantile)
    else:
        raise ValueError(f"unknown threshold method {threshold_method!r}")
    params = fit_at_threshold(d, choice.u, method, obs_per_period=obs_per_period,
                              min_exceedances=min_exceedances)
    return choice, params


def fit_at_threshold(d, u, method, *, obs_per_period=OBS_PER_PERIOD,
                     min_exceedances=MIN_EXCEEDANCES, polish=True) -> TailModelParams:
    d = np.asarray(d, dtype=np.float64)
    x = d[d > u]
    if x.size < min_exceedances:
        raise TooFewExceedancesError(f"need at least {min_exceedances} exceedances, got {x.size}")
    zeta = x.size / d.size
    if method == "exponential":
        return fit_exponential(x - u, u, zeta, obs_per_period, n_total=d.size)
    if method == "gpd":
        if polish:
            return fit_gpd(x - u, u, zeta, obs_per_period, min_exceedances=min_exceedances,
                           n_total=d.size)
        scale, shape = gpd_profile_mle(x - u)
        return TailModelParams("gpd", float(u), scale, shape, float(u), zeta, obs_per_period,
                               d.size, int(x.size), gpd_loglik(scale, shape, x - u))
    if method == "pp":
        return fit_pp(d, u, zeta, obs_per_period, min_exceedances=min_exceedances, polish=polish)
    raise ValueError(f"unknown tail model {method!r}")


def _replicate_fit(quantile, method, obs_per_period, min_exceedances):
    def fit(sample):
        u = empirical_quantile(sample, quantile)
        p = fit_at_threshold(sample, u, method, obs_per_period=obs_per_period,
                             min_exceedances=min_exceedances, polish=False)
        if not shape_is_valid(p):
            raise FitError("heavy-tailed replicate")
        return p
    return fit


def return_level_curve(deltas, horizons, params: TailModelParams, choice: ThresholdChoice, *,
                       cfg: BootstrapConfig = BootstrapConfig(),
                       min_exceedances: int = MIN_EXCEEDANCES):
    """Rows ``(horizon, level, ci_low, ci_high)`` sharing one set of replicates.

    Replicates keep the chosen quantile level fixed and re-derive ``u`` from
    each resample. Rows whose interval cannot be formed carry ``None``.
    """
    fit = _replicate_fit(choice.quantile, params.kind, params.obs_per_period, min_exceedances)
    reps = [r for r in bootstrap_replicates(deltas, fit, cfg) if r is not None]
    rows = []
    for h in horizons:
        level = return_level(params, h)
        lo = hi = None
        if len(reps) * 2 >= cfg.resamples:
            vals = []
            for r in reps:
                try:
                    vals.append(return_level(r, h))
                except TailstopError:
                    pass
            if len(vals) * 2 >= cfg.resamples:
                lo, hi = _percentile_interval(vals, cfg.ci_level)
                lo, hi = min(lo, level), max(hi, level)
        rows.append((int(h), float(level), lo, hi))
    return rows


def predict_wcdiff(deltas, horizon: int, method: str = "pp", threshold_method: str = "bootstrap",
                   cfg: BootstrapConfig = BootstrapConfig(), *, quantile: float = 0.95,
                   min_exceedances: int = MIN_EXCEEDANCES, obs_per_period: int = OBS_PER_PERIOD,
                   compute_ci: bool = True) -> Prediction:
    """Worst-case delta over ``horizon`` iterations, falling back to ``max(deltas)``."""
    return predict_wcdiff_detailed(
        deltas, horizon, method, threshold_method, cfg, quantile=quantile,
        min_exceedances=min_exceedances, obs_per_period=obs_per_period, compute_ci=compute_ci,
    ).prediction


@dataclass(frozen=True)
class WCDiffReport:
    prediction: Prediction
    threshold: ThresholdChoice | None = None
    params: TailModelParams | None = None
    notes: tuple[str, ...] = field(default_factory=tuple)


def predict_wcdiff_detailed(deltas, horizon, method="pp", threshold_method="bootstrap",
                            cfg=BootstrapConfig(), *, quantile=0.95,
                            min_exceedances=MIN_EXCEEDANCES, obs_per_period=OBS_PER_PERIOD,
                            compute_ci=True) -> WCDiffReport:
    d = np.asarray(deltas, dtype=np.float64)
    if d.size == 0:
        raise EmptyLogError("no deltas")
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    label = f"evt-{method}/{threshold_method}"
    observed_max = float(d.max())

    def fallback(reason, choice=None, params=None):
        return WCDiffReport(
            Prediction(observed_max, None, None, int(horizon), f"{label} fallback: {reason}", True),
            choice, params, (reason,),
        )

    try:
        choice, params = fit_tail(d, method, threshold_method, cfg=cfg, quantile=quantile,
                                  min_exceedances=min_exceedances, obs_per_period=obs_per_period)
    except TailstopError as exc:
        return fallback(f"{type(exc).__name__}: {exc}")
    if not shape_is_valid(params):
        return fallback(f"heavy tail (shape {params.shape:.4g} > 0)", choice, params)
    try:
        value = return_level(params, horizon)
    except TailstopError as exc:
        return fallback(f"{type(exc).__name__}: {exc}", choice, params)
    notes = []
    lo = hi = None
    if compute_ci:
        (_, _, lo, hi), = return_level_curve(d, [horizon], params, choice, cfg=cfg,
                                             min_exceedances=min_exceedances)
        if lo is None:
            notes.append("interval unavailable: too many failed replicates")
            label += " (no interval)"
    return WCDiffReport(Prediction(float(value), lo, hi, int(horizon), label, False),
                        choice, params, tuple(notes))
