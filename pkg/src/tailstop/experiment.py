"""Experiment specs, batch runs, method comparison and report tables."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import evt
from .baselines import BaselineConfig
from .exceptions import SpecError, TailstopError
from .fuzz import PREDICTORS, FuzzConfig, builtin_target, predict_prefix, run_campaign
from .mannwhitney import mann_whitney_u
from .stream import emit, format_real, ingest

RESULTS_NAME = "results.json"
TEMPORAL_WINDOW = 1000
SIGNIFICANCE = 0.05

# spec keys forwarded verbatim to FuzzConfig
_CONFIG_KEYS = ("stt", "threshold", "check_every", "k_min", "k_max", "laplace_j", "quantile",
                "resamples", "ci_level", "block_bootstrap", "obs_per_period")
_BASELINE_KEYS = ("tail_prob", "bayes_B", "bayes_theta", "fixed_training", "cantelli")


@dataclass
class ExperimentSpec:
    targets: list
    methods: list = field(default_factory=lambda: ["evt_pp"])
    repeats: int = 5
    budget: int = 20_000
    horizon: int | None = None
    seed: int = 0
    output_dir: str = "tailstop-out"
    options: dict = field(default_factory=dict)
    baseline: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.targets:
            raise SpecError("targets", "at least one target is required")
        if not self.methods:
            raise SpecError("methods", "at least one method is required")
        for m in self.methods:
            if m not in PREDICTORS:
                raise SpecError("methods", f"unknown method {m!r}; choose from {', '.join(PREDICTORS)}")
        if len(set(self.methods)) != len(self.methods):
            raise SpecError("methods", "duplicate method")
        if not isinstance(self.repeats, int) or self.repeats < 1:
            raise SpecError("repeats", "must be a positive integer")
        names = []
        for i, t in enumerate(self.targets):
            try:
                builtin_target(t)
            except (TypeError, ValueError) as exc:
                raise SpecError(f"targets[{i}]", str(exc)) from None
            names.append(self.benchmark_name(t))
        if len(set(names)) != len(names):
            raise SpecError("targets", "benchmark names must be unique")
        # validate every derived config once
        for m in self.methods:
            self.fuzz_config(m, self.seed)

    @staticmethod
    def benchmark_name(target) -> str:
        if isinstance(target, dict) and target.get("name"):
            return str(target["name"])
        return builtin_target(target).name

    @property
    def seeds(self):
        return [self.seed + i for i in range(self.repeats)]

    def fuzz_config(self, method: str, seed: int) -> FuzzConfig:
        try:
            baseline = BaselineConfig(**self.baseline)
        except (TypeError, ValueError) as exc:
            raise SpecError("baseline", str(exc)) from None
        try:
            return FuzzConfig(budget=self.budget, seed=seed, predictor=method, horizon=self.horizon,
                              baseline=baseline, **self.options)
        except SpecError:
            raise
        except (TypeError, ValueError) as exc:
            raise SpecError("options", str(exc)) from None

    def to_dict(self):
        out = {"targets": self.targets, "methods": self.methods, "repeats": self.repeats,
               "budget": self.budget, "horizon": self.horizon, "seed": self.seed}
        out.update(self.options)
        if self.baseline:
            out["baseline"] = self.baseline
        return out

    @classmethod
    def from_dict(cls, raw: dict, **overrides) -> "ExperimentSpec":
        if not isinstance(raw, dict):
            raise SpecError("spec", "top level must be a JSON object")
        raw = dict(raw)
        for k, v in overrides.items():
            if v is not None:
                raw[k] = v
        kwargs = {}
        for k in ("targets", "methods", "repeats", "budget", "horizon", "seed", "output_dir"):
            if k in raw:
                kwargs[k] = raw.pop(k)
        if "target" in raw:
            kwargs.setdefault("targets", [raw.pop("target")])
        if "method" in raw:
            kwargs["methods"] = [raw.pop("method")]
        baseline = raw.pop("baseline", {})
        if not isinstance(baseline, dict) or set(baseline) - set(_BASELINE_KEYS):
            raise SpecError("baseline", f"allowed keys are {', '.join(_BASELINE_KEYS)}")
        options = {}
        for k in list(raw):
            if k in _CONFIG_KEYS:
                options[k] = raw.pop(k)
        if raw:
            raise SpecError(sorted(raw)[0], "unknown spec field")
        if "targets" not in kwargs:
            raise SpecError("targets", "missing")
        for k in ("repeats", "budget", "seed"):
            if k in kwargs and (isinstance(kwargs[k], bool) or not isinstance(kwargs[k], int)):
                raise SpecError(k, "must be an integer")
        if not isinstance(kwargs["targets"], list):
            raise SpecError("targets", "must be a list")
        if "methods" in kwargs and not isinstance(kwargs["methods"], list):
            raise SpecError("methods", "must be a list")
        return cls(options=options, baseline=baseline, **kwargs)

    @classmethod
    def load(cls, path, **overrides) -> "ExperimentSpec":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SpecError("spec", f"invalid JSON: {exc}") from None
        return cls.from_dict(raw, **overrides)


def _clean(obj):
    # JSON has no inf/nan; spell them out as strings
    if isinstance(obj, float) and not math.isfinite(obj):
        return format_real(obj)
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def dump_json(obj, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_clean(obj), sort_keys=True, indent=1, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")


def log_name(benchmark: str, method: str, seed: int, fmt: str) -> str:
    return f"{benchmark}__{method}__seed{seed}.{'csv' if fmt == 'csv' else 'jsonl'}"


def run_experiment(spec: ExperimentSpec, *, jobs: int = 1, log_format: str = "csv") -> dict:
    """Run every (target, method, seed) campaign and write logs plus results."""
    out = Path(spec.output_dir)
    jobs_list = [(spec.benchmark_name(t), t, m, s)
                 for t in spec.targets for m in spec.methods for s in spec.seeds]

    def one(job):
        bench, target, method, seed = job
        res = run_campaign(builtin_target(target), spec.fuzz_config(method, seed), benchmark=bench)
        name = log_name(bench, method, seed, log_format)
        emit(res.log, out / "logs" / name, "csv" if log_format == "csv" else "jsonl")
        rec = res.record()
        rec["benchmark"] = bench
        rec["log"] = f"logs/{name}"
        return rec

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(one, jobs_list))
    else:
        records = [one(j) for j in jobs_list]
    records.sort(key=lambda r: (r["benchmark"], r["method"], r["seed"]))
    results = {"spec": spec.to_dict(), "protocol_repeats": spec.repeats, "campaigns": records}
    dump_json(results, out / RESULTS_NAME)
    return results


# -- comparison -------------------------------------------------------------------


def _mean_std(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    return float(np.mean(vals)), std


@dataclass(frozen=True)
class ComparisonRow:
    benchmark: str
    method: str
    n_training: tuple
    max_training: tuple
    n_testing: tuple
    max_testing: tuple
    prediction: tuple
    error_pct: tuple
    best_error_pct: float | None
    significant_winner: bool
    campaigns: int = 0

    HEADER = ("benchmark", "method", "campaigns", "n_training_mean", "n_training_std",
              "max_training_mean", "max_training_std", "n_testing_mean", "n_testing_std",
              "max_testing_mean", "max_testing_std", "prediction_mean", "prediction_std",
              "error_pct_mean", "error_pct_std", "best_error_pct", "significant_winner")

    def as_row(self):
        def cell(x):
            return "" if x is None else repr(float(x))
        out = [self.benchmark, self.method, str(self.campaigns)]
        for pair in (self.n_training, self.max_training, self.n_testing, self.max_testing,
                     self.prediction, self.error_pct):
            out.extend(cell(x) for x in pair)
        out.append(cell(self.best_error_pct))
        out.append("true" if self.significant_winner else "false")
        return out


def load_records(paths) -> list:
    records = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            p = p / RESULTS_NAME
        data = json.loads(p.read_text(encoding="utf-8"))
        for r in data["campaigns"]:
            r = dict(r)
            r["_root"] = str(p.parent)
            records.append(r)
    return records


def is_winner(mine, others) -> bool:
    """Winner unless some competitor's |error| is significantly smaller."""
    if not mine:
        return False
    for theirs in others:
        if not theirs:
            continue
        u, p, _ = mann_whitney_u(theirs, mine)
        if p < SIGNIFICANCE and u < len(theirs) * len(mine) / 2:
            return False
    return True


def compare(records) -> list[ComparisonRow]:
    groups = {}
    for r in records:
        groups.setdefault(r["benchmark"], {}).setdefault(r["method"], []).append(r)
    method_sets = {b: frozenset(ms) for b, ms in groups.items()}
    if len(set(method_sets.values())) > 1:
        raise TailstopError("result sets cover different methods per benchmark: "
                            + "; ".join(f"{b}: {sorted(m)}" for b, m in sorted(method_sets.items())))
    rows = []
    for bench in sorted(groups):
        methods = groups[bench]
        if len(methods) < 2:
            raise TailstopError(f"benchmark {bench!r} needs at least two methods to compare")
        abs_err = {m: [abs(r["error_pct"]) for r in rs if r["error_pct"] is not None]
                   for m, rs in methods.items()}
        for m in sorted(methods):
            rs = sorted(methods[m], key=lambda r: r["seed"])
            errs = [r["error_pct"] for r in rs if r["error_pct"] is not None]
            preds = [r["prediction"]["value"] if r["prediction"] else None for r in rs]
            best = min(errs, key=abs) if errs else None
            rows.append(ComparisonRow(
                bench, m,
                _mean_std([r["n_training"] for r in rs]),
                _mean_std([r["max_training"] for r in rs]),
                _mean_std([r["n_testing"] for r in rs]),
                _mean_std([r["max_testing"] for r in rs]),
                _mean_std(preds),
                _mean_std(errs),
                best,
                is_winner(abs_err[m], [v for k, v in abs_err.items() if k != m]),
                len(rs),
            ))
    return rows


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def render_error(prediction: float, ground_truth: float) -> str:
    """Human error column, one decimal, e.g. ``32.8``."""
    g = float(ground_truth)
    if g == 0:
        return "0.0" if prediction == 0 else "n/a"
    return f"{100.0 * (prediction - g) / g:.1f}"


def format_table(rows: list[ComparisonRow]) -> str:
    def pm(pair):
        mean, std = pair
        return "-" if mean is None else f"{mean:.1f} (+/-{std:.1f})"
    lines = [f"{'benchmark':<20} {'method':<16} {'training':>18} {'max testing':>18} "
             f"{'prediction':>20} {'error %':>18} {'best':>8}  winner"]
    for r in rows:
        best = "-" if r.best_error_pct is None else f"{r.best_error_pct:.1f}"
        lines.append(f"{r.benchmark:<20} {r.method:<16} {pm(r.n_training):>18} {pm(r.max_testing):>18} "
                     f"{pm(r.prediction):>20} {pm(r.error_pct):>18} {best:>8}  "
                     f"{'*' if r.significant_winner else ''}")
    return "\n".join(lines)


# -- reports ----------------------------------------------------------------------


def default_horizons(kind: str, budget: int, obs_per_period: int = 365) -> list[int]:
    lo = obs_per_period + 1 if kind == "pp" else 1
    hi = max(budget, lo + 1)
    grid = np.unique(np.round(np.geomspace(lo, hi, 12)).astype(int))
    return [int(h) for h in grid]


def temporal_rows(deltas, cfg: FuzzConfig, train_size: int, budget: int,
                  window: int = TEMPORAL_WINDOW):
    """Predictions re-made every ``window`` iterations after the stop.

    Each row predicts the worst delta of the next window from everything
    seen so far and pairs it with the maximum actually observed there.
    """
    d = np.asarray(deltas)
    rows = []
    for w in range((budget - train_size) // window):
        t = train_size + w * window
        pred, _, _, _ = predict_prefix(d[:t], cfg, window)
        nxt = d[t:t + window]
        rows.append((t, pred.value, pred.ci_low, pred.ci_high, int(nxt.max()) if nxt.size else None))
    return rows


def _fmt(x):
    return "" if x is None else repr(float(x))


def report(records, out_dir, *, plots: str = "first") -> dict:
    """Summary JSON plus temporal and return-level CSVs.

    ``plots`` selects the campaigns that get plot data: ``all``, ``first``
    (lowest seed per benchmark and method) or ``none``.
    """
    out = Path(out_dir)
    summary = {}
    by_group = {}
    for r in sorted(records, key=lambda r: (r["benchmark"], r["method"], r["seed"])):
        by_group.setdefault((r["benchmark"], r["method"]), []).append(r)
    for (bench, method), rs in by_group.items():
        stopped = [r for r in rs if r["n_training"] is not None]
        errs = [r["error_pct"] for r in rs if r["error_pct"] is not None]
        gains = [r["perf_gain"] for r in rs]
        summary.setdefault(bench, {})[method] = {
            "campaigns": len(rs),
            "stopped": len(stopped),
            "perf_gain_total": int(sum(gains)),
            "perf_gain_mean": float(np.mean(gains)),
            "error_pct_mean": float(np.mean(errs)) if errs else None,
            "error_pct_display": [None if e is None else f"{e:.1f}" for e in
                                  (r["error_pct"] for r in rs)],
            "ground_truth_max": [r["ground_truth_max"] for r in rs],
            "seeds": [r["seed"] for r in rs],
        }
        if plots == "none":
            continue
        chosen = stopped if plots == "all" else stopped[:1]
        for r in chosen:
            _plot_data(r, out)
    dump_json(summary, out / "summary.json")
    return summary


def _plot_data(rec, out: Path):
    log = ingest(Path(rec["_root"]) / rec["log"])
    cfg = FuzzConfig.from_dict(rec["config"])
    stem = f"{rec['benchmark']}__{rec['method']}__seed{rec['seed']}"
    d = log.deltas
    rows = temporal_rows(d, cfg, rec["n_training"], rec["budget"])
    write_csv(out / "temporal" / f"{stem}.csv",
              ("train_size", "prediction", "ci_low", "ci_high", "ground_truth_next_window"),
              [(t, _fmt(p), _fmt(lo), _fmt(hi), "" if g is None else g) for t, p, lo, hi, g in rows])
    params = rec.get("params")
    if params and not (rec["prediction"] or {}).get("fallback_used", True):
        write_curve(d[: rec["n_training"]], cfg, params, rec["threshold"],
                    out / "curves" / f"{stem}.csv", rec["budget"])


def write_curve(deltas, cfg: FuzzConfig, params: dict, threshold: dict, path, budget: int,
                horizons=None):
    params = dict(params, loglik=float(params["loglik"]))
    p = evt.TailModelParams(**params)
    choice = evt.ThresholdChoice(threshold["u"], threshold["method"], threshold["exceedance_count"],
                                 threshold["quantile"])
    horizons = horizons or default_horizons(p.kind, budget, p.obs_per_period)
    rows = evt.return_level_curve(deltas, horizons, p, choice, cfg=cfg.bootstrap())
    return write_csv(path, ("horizon", "level", "ci_low", "ci_high"),
                     [(h, _fmt(v), _fmt(lo), _fmt(hi)) for h, v, lo, hi in rows])

