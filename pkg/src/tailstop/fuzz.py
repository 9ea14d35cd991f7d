"""Self-contained differential fuzzer over deterministic cost oracles.

Each iteration mutates a parent triple ``(x, z1, z2)``, runs the target on
``(x, z1)`` and ``(x, z2)`` and records ``delta = |cost1 - cost2|``. A stop
rule watches the stream; when it fires the configured predictor runs on the
prefix, and fuzzing carries on to the budget so the prediction can be
scored against the true maximum.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import time
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field

import numpy as np

from .baselines import (
    BaselineConfig,
    BayesMonitorState,
    bayes_monitor_step,
    bayes_predict,
    chebyshev_predict,
    jeffreys_min_runs,
    markov_predict,
)
from .evt import BootstrapConfig, Prediction, predict_wcdiff_detailed
from .exceptions import DegenerateTailError, EmptyLogError, SpecError, TailstopError
from .stopping import (
    Decision,
    ExpTestConfig,
    LaplaceState,
    TailTestResult,
    exponentiality_test,
    laplace_step,
)
from .stream import CampaignLog, DiffSample, summarize

PREDICTORS = ("evt_pp", "evt_exponential", "markov", "chebyshev", "bayes")
STTS = ("exponentiality", "laplace", "none")
THRESHOLDS = ("bootstrap", "quantile")

EXPLOIT_PROB = 0.8
RESERVOIR_SIZE = 16

Triple = tuple  # (x: bytes, z1: bytes, z2: bytes)


# -- targets ---------------------------------------------------------------------


class DifferentialTarget(ABC):
    name: str
    public_len: int
    secret_len: int

    @abstractmethod
    def cost(self, x: bytes, z: bytes) -> int:
        """Abstract execution cost of running the target on ``(x, z)``."""

    @abstractmethod
    def spec(self) -> dict:
        """JSON-able description that :func:`builtin_target` accepts."""


class LeakSetTarget(DifferentialTarget):
    """Cost proportional to the number of set bits in the secret."""

    def __init__(self, width: int = 12, unit_cost: int = 100):
        if not 12 <= width <= 32:
            raise ValueError(f"leak_set width must lie in [12, 32], got {width}")
        if unit_cost < 1:
            raise ValueError("unit_cost must be positive")
        self.width = width
        self.unit_cost = unit_cost
        self.mask = (1 << width) - 1
        self.name = f"leak_set_{width}"
        self.public_len = 1
        self.secret_len = math.ceil(width / 8)

    def cost(self, x, z):
        return self.unit_cost * (int.from_bytes(z, "big") & self.mask).bit_count()

    @property
    def max_delta(self):
        return self.unit_cost * self.width

    def spec(self):
        return {"kind": "leak_set", "width": self.width, "unit_cost": self.unit_cost}


class StringEqualsTarget(DifferentialTarget):
    """Early-exit string comparison: cost grows with the matching prefix."""

    def __init__(self, length: int = 32, base: int = 5, per_char: int = 3):
        if length < 1 or per_char < 1 or base < 0:
            raise ValueError("string_equals needs length >= 1, per_char >= 1, base >= 0")
        self.length = length
        self.base = base
        self.per_char = per_char
        self.name = f"string_equals_{length}"
        self.public_len = length
        self.secret_len = length

    def cost(self, x, z):
        matched = 0
        for a, b in zip(x, z):
            if a != b:
                break
            matched += 1
        # +1 accounts for the length check
        return self.base + self.per_char * (min(matched, self.length) + 1)

    def spec(self):
        return {"kind": "string_equals", "length": self.length, "base": self.base,
                "per_char": self.per_char}


class StraightlineTarget(DifferentialTarget):
    def __init__(self, const_cost: int = 8):
        if const_cost < 0:
            raise ValueError("const_cost must be nonnegative")
        self.const_cost = const_cost
        self.name = "straightline"
        self.public_len = 1
        self.secret_len = 1

    def cost(self, x, z):
        return self.const_cost

    def spec(self):
        return {"kind": "straightline", "const_cost": self.const_cost}


_TARGETS = {
    "leak_set": (LeakSetTarget, ("width", "unit_cost")),
    "string_equals": (StringEqualsTarget, ("length", "base", "per_char")),
    "straightline": (StraightlineTarget, ("const_cost",)),
}


def builtin_target(spec) -> DifferentialTarget:
    """Build a target from ``{"kind": ..., **params}`` or ``"kind:p1:p2"``."""
    if isinstance(spec, DifferentialTarget):
        return spec
    if isinstance(spec, str):
        kind, *args = spec.split(":")
        if kind not in _TARGETS:
            raise SpecError("target", f"unknown target kind {kind!r}")
        cls, names = _TARGETS[kind]
        if len(args) > len(names):
            raise SpecError("target", f"{kind} takes at most {len(names)} parameters")
        return cls(**{n: int(a) for n, a in zip(names, args)})
    spec = dict(spec)
    kind = spec.pop("kind", None)
    spec.pop("name", None)
    if kind not in _TARGETS:
        raise SpecError("target.kind", f"unknown target kind {kind!r}")
    cls, names = _TARGETS[kind]
    extra = set(spec) - set(names)
    if extra:
        raise SpecError("target", f"unexpected parameter(s) {sorted(extra)} for {kind}")
    try:
        return cls(**{k: int(v) for k, v in spec.items()})
    except ValueError as exc:
        raise SpecError("target", str(exc)) from None


# -- mutation --------------------------------------------------------------------


def _flip_bit(buf: bytes, rng: random.Random) -> bytes:
    b = bytearray(buf)
    pos = rng.randrange(len(b) * 8)
    b[pos >> 3] ^= 1 << (pos & 7)
    return bytes(b)


def _replace_byte(buf: bytes, rng: random.Random) -> bytes:
    b = bytearray(buf)
    b[rng.randrange(len(b))] = rng.randrange(256)
    return bytes(b)


def mutate(triple: Triple, rng: random.Random) -> Triple:
    """Apply one randomly chosen length-preserving mutation."""
    x, z1, z2 = triple
    ops = []
    if z1:
        ops.append("flip_z1")
    if z2:
        ops.append("flip_z2")
    if z1 or z2:
        ops.append("replace")
    ops.append("swap")
    if x:
        ops.append("flip_x")
    op = ops[rng.randrange(len(ops))]
    if op == "flip_z1":
        return x, _flip_bit(z1, rng), z2
    if op == "flip_z2":
        return x, z1, _flip_bit(z2, rng)
    if op == "replace":
        if z1 and (not z2 or rng.random() < 0.5):
            return x, _replace_byte(z1, rng), z2
        return x, z1, _replace_byte(z2, rng)
    if op == "swap":
        return x, z2, z1
    return _flip_bit(x, rng), z1, z2


# -- stop rules ------------------------------------------------------------------


class StopRule:
    """Incremental stopping decision over a growing stream."""

    note = ""
    last_test: TailTestResult | None = None

    def observe(self, deltas: list, delta) -> bool:
        raise NotImplementedError


class NeverStop(StopRule):
    def observe(self, deltas, delta):
        return False


class ExponentialityStop(StopRule):
    def __init__(self, cfg: ExpTestConfig, check_every: int):
        self.cfg = cfg
        self.check_every = check_every

    def observe(self, deltas, delta):
        n = len(deltas)
        if n % self.check_every or n < self.cfg.k_max:
            return False
        try:
            self.last_test = exponentiality_test(np.asarray(deltas), self.cfg)
        except DegenerateTailError as exc:
            self.note = f"degenerate tail at {n}: {exc}"
            return False
        return self.last_test.passed


class LaplaceStop(StopRule):
    def __init__(self, j: int):
        self.state = LaplaceState(j=j)

    def observe(self, deltas, delta):
        self.state, decision = laplace_step(self.state, delta)
        return decision is Decision.STOP


class BayesStop(StopRule):
    def __init__(self, required_K: int):
        self.state = BayesMonitorState(required_K=required_K)

    def observe(self, deltas, delta):
        self.state, decision = bayes_monitor_step(self.state, delta)
        return decision is Decision.ACCEPT_H0


class FixedPrefixStop(StopRule):
    def __init__(self, n: int):
        self.n = n

    def observe(self, deltas, delta):
        return len(deltas) == self.n


# -- configuration and results ---------------------------------------------------


@dataclass(frozen=True)
class FuzzConfig:
    budget: int = 20_000
    seed: int = 0
    stt: str = "exponentiality"
    predictor: str = "evt_pp"
    threshold: str = "bootstrap"
    horizon: int | None = None
    check_every: int = 100
    k_min: int = 10
    k_max: int = 100
    laplace_j: int = 100
    quantile: float = 0.95
    resamples: int = 1000
    ci_level: float = 0.95
    block_bootstrap: bool = False
    obs_per_period: int = 365
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    max_seconds: float | None = None

    def __post_init__(self):
        if self.budget < 1:
            raise SpecError("budget", "must be positive")
        if not 1 <= self.check_every <= self.budget:
            raise SpecError("check_every", "must satisfy 1 <= check_every <= budget")
        if self.stt not in STTS:
            raise SpecError("stt", f"unknown stopping test {self.stt!r}; choose from {STTS}")
        if self.predictor not in PREDICTORS:
            raise SpecError("method", f"unknown predictor {self.predictor!r}; choose from {PREDICTORS}")
        if self.threshold not in THRESHOLDS:
            raise SpecError("threshold", f"unknown threshold method {self.threshold!r}")
        if self.horizon is not None and self.horizon < 1:
            raise SpecError("horizon", "must be positive")
        ExpTestConfig(self.k_min, self.k_max)

    def to_dict(self):
        out = asdict(self)
        out.pop("max_seconds")
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "FuzzConfig":
        d = dict(d)
        if isinstance(d.get("baseline"), dict):
            d["baseline"] = BaselineConfig(**d["baseline"])
        return cls(**d)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def stop_rule(self) -> StopRule:
        if self.predictor in ("markov", "chebyshev"):
            return FixedPrefixStop(self.baseline.fixed_training)
        if self.predictor == "bayes":
            return BayesStop(jeffreys_min_runs(self.baseline.bayes_B, self.baseline.bayes_theta))
        if self.stt == "exponentiality":
            return ExponentialityStop(ExpTestConfig(self.k_min, self.k_max), self.check_every)
        if self.stt == "laplace":
            return LaplaceStop(self.laplace_j)
        return NeverStop()

    def bootstrap(self) -> BootstrapConfig:
        return BootstrapConfig(self.resamples, self.ci_level, self.seed, self.block_bootstrap)


@dataclass
class CampaignResult:
    log: CampaignLog
    config: FuzzConfig
    target: dict
    stop_index: int | None
    prediction: Prediction | None
    ground_truth_max: int
    error_pct: float | None
    perf_gain: int
    stt_result: TailTestResult | None = None
    threshold: dict | None = None
    params: dict | None = None
    notes: tuple = ()

    @property
    def max_training(self):
        if not self.stop_index:
            return None
        return int(self.log.deltas[: self.stop_index].max())

    @property
    def max_testing(self):
        if self.stop_index is None or self.stop_index >= len(self.log):
            return None
        return int(self.log.deltas[self.stop_index:].max())

    def record(self) -> dict:
        """Machine-readable summary (no log samples, no timestamps)."""
        n = len(self.log)
        return {
            "benchmark": self.log.meta.get("benchmark", self.target.get("kind", "")),
            "target": self.target,
            "method": self.config.predictor,
            "seed": self.config.seed,
            "budget": self.config.budget,
            "config": self.config.to_dict(),
            "config_hash": self.config.digest(),
            "n_total": n,
            "n_training": self.stop_index,
            "n_testing": None if self.stop_index is None else n - self.stop_index,
            "max_training": self.max_training,
            "max_testing": self.max_testing,
            "ground_truth_max": self.ground_truth_max,
            "prediction": None if self.prediction is None else self.prediction.to_dict(),
            "error_pct": self.error_pct,
            "perf_gain": self.perf_gain,
            "stt": None if self.stt_result is None else self.stt_result.to_dict(),
            "threshold": self.threshold,
            "params": self.params,
            "notes": list(self.notes),
        }


def error_pct(prediction: float, ground_truth: float) -> float | None:
    """Signed relative error in percent; positive means overestimation."""
    if ground_truth == 0:
        return 0.0 if prediction == 0 else None
    return 100.0 * (prediction - ground_truth) / ground_truth


def predict_prefix(deltas, cfg: FuzzConfig, horizon: int):
    """Run the configured predictor on a training prefix.

    Returns ``(prediction, threshold_dict, params_dict, notes)``.
    """
    d = np.asarray(deltas)
    if cfg.predictor == "markov":
        try:
            return markov_predict(summarize(d), cfg.baseline, horizon), None, None, ()
        except TailstopError as exc:
            # zero mean: the bound degenerates to 0 as well
            return Prediction(0.0, None, None, horizon, "markov"), None, None, (str(exc),)
    if cfg.predictor == "chebyshev":
        return chebyshev_predict(summarize(d), cfg.baseline, horizon), None, None, ()
    if cfg.predictor == "bayes":
        return bayes_predict(int(d.max()), horizon), None, None, ()
    method = "pp" if cfg.predictor == "evt_pp" else "exponential"
    rep = predict_wcdiff_detailed(
        d, horizon, method, cfg.threshold, cfg.bootstrap(), quantile=cfg.quantile,
        obs_per_period=cfg.obs_per_period,
    )
    return (
        rep.prediction,
        None if rep.threshold is None else rep.threshold.to_dict(),
        None if rep.params is None else rep.params.to_dict(),
        rep.notes,
    )


def initial_triple(target: DifferentialTarget, rng: random.Random) -> Triple:
    return (rng.randbytes(target.public_len), rng.randbytes(target.secret_len),
            rng.randbytes(target.secret_len))


class _StopTracker:
    """Feeds a stream to the stop rule and runs the predictor when it fires."""

    def __init__(self, cfg: FuzzConfig):
        self.cfg = cfg
        self.rule = cfg.stop_rule()
        self.stop_index = None
        self.prediction = self.threshold = self.params = None
        self.stt_result = None
        self.notes = []

    def observe(self, deltas, delta):
        if self.stop_index is None and self.rule.observe(deltas, delta):
            self.stop(deltas)

    def stop(self, deltas):
        self.stop_index = len(deltas)
        self.stt_result = self.rule.last_test
        horizon = self.cfg.horizon or max(1, self.cfg.budget - self.stop_index)
        self.prediction, self.threshold, self.params, extra = predict_prefix(deltas, self.cfg, horizon)
        self.notes.extend(extra)

    def result(self, log: CampaignLog, target_spec: dict) -> CampaignResult:
        if self.rule.note:
            self.notes.append(self.rule.note)
        gt = int(log.deltas.max())
        perf_gain = 0
        if self.stop_index is not None:
            perf_gain = int(log.costs[self.stop_index:].sum())
        err = None if self.prediction is None else error_pct(self.prediction.value, gt)
        return CampaignResult(log, self.cfg, target_spec, self.stop_index, self.prediction, gt,
                              err, perf_gain, self.stt_result, self.threshold, self.params,
                              tuple(self.notes))


def run_campaign(target, cfg: FuzzConfig, benchmark: str | None = None) -> CampaignResult:
    """Fuzz ``target`` for ``cfg.budget`` iterations with early-stop bookkeeping."""
    target = builtin_target(target)
    rng = random.Random(cfg.seed)
    tracker = _StopTracker(cfg)
    deadline = None if cfg.max_seconds is None else time.monotonic() + cfg.max_seconds

    samples = []
    deltas = []
    parent = initial_triple(target, rng)
    best = (parent, -1)
    reservoir = []
    accepted = 0

    for i in range(cfg.budget):
        if i == 0:
            parent_entry = (parent, -1)
            child = parent
        else:
            if rng.random() < EXPLOIT_PROB or not reservoir:
                parent_entry = best
            else:
                pool = [best] + reservoir
                parent_entry = pool[rng.randrange(len(pool))]
            child = mutate(parent_entry[0], rng)
        x, z1, z2 = child
        c1 = target.cost(x, z1)
        c2 = target.cost(x, z2)
        delta = abs(c1 - c2)
        samples.append(DiffSample(i, c1, c2, delta, f"{x.hex()}:{z1.hex()}:{z2.hex()}"))
        deltas.append(delta)

        if delta > parent_entry[1]:
            entry = (child, delta)
            if delta > best[1]:
                best = entry
            accepted += 1
            # reservoir sampling over every accepted child
            if len(reservoir) < RESERVOIR_SIZE:
                reservoir.append(entry)
            else:
                slot = rng.randrange(accepted)
                if slot < RESERVOIR_SIZE:
                    reservoir[slot] = entry

        tracker.observe(deltas, delta)

        if deadline is not None and time.monotonic() > deadline:
            tracker.notes.append(f"wall-clock cap hit after {i + 1} iterations")
            break

    meta = {
        "benchmark": benchmark or target.name,
        "target": json.dumps(target.spec(), sort_keys=True),
        "seed": str(cfg.seed),
        "budget": str(cfg.budget),
        "config_hash": cfg.digest(),
    }
    return tracker.result(CampaignLog(tuple(samples), meta), target.spec())


def replay_campaign(log: CampaignLog, cfg: FuzzConfig, *, stop_at_end: bool = False) -> CampaignResult:
    """Evaluate a recorded stream as if it were produced live.

    With ``stop_at_end`` a stream on which the rule never fires is treated
    as stopping after its last sample, so the predictor still runs.
    """
    if len(log) == 0:
        raise EmptyLogError("cannot replay an empty log")
    tracker = _StopTracker(cfg)
    deltas = []
    for delta in log.deltas.tolist():
        deltas.append(delta)
        tracker.observe(deltas, delta)
        if tracker.stop_index is not None:
            break
    if tracker.stop_index is None and stop_at_end:
        tracker.stop(log.deltas.tolist())
    target = {}
    if "target" in log.meta:
        try:
            target = json.loads(log.meta["target"])
        except ValueError:
            target = {}
    return tracker.result(log, target)
