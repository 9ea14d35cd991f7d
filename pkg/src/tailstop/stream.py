"""Cost-difference streams: samples, logs, file I/O, summaries and splits."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exceptions import DeltaMismatchError, EmptyLogError, IngestError

CSV_HEADER = ("index", "cost_a", "cost_b", "delta", "input_id")
_REQUIRED = ("index", "cost_a", "cost_b")


def _check_count(name, value):
    # bool is an int subclass; reject it along with floats
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < 0:
        raise ValueError(f"{name} must be nonnegative, got {value}")
    return value


@dataclass(frozen=True)
class DiffSample:
    """One fuzzing iteration: the two execution costs and their gap."""

    index: int
    cost_a: int
    cost_b: int
    delta: int | None = None
    input_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "index", _check_count("index", self.index))
        object.__setattr__(self, "cost_a", _check_count("cost_a", self.cost_a))
        object.__setattr__(self, "cost_b", _check_count("cost_b", self.cost_b))
        expected = abs(self.cost_a - self.cost_b)
        if self.delta is None:
            object.__setattr__(self, "delta", expected)
        elif _check_count("delta", self.delta) != expected:
            raise DeltaMismatchError(
                f"delta {self.delta} != |{self.cost_a} - {self.cost_b}| = {expected}"
            )
        else:
            object.__setattr__(self, "delta", int(self.delta))


@dataclass(frozen=True)
class CampaignLog:
    samples: tuple[DiffSample, ...]
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        samples = tuple(self.samples)
        for prev, cur in zip(samples, samples[1:]):
            if cur.index <= prev.index:
                raise ValueError(
                    f"sample indices must be strictly increasing ({prev.index} then {cur.index})"
                )
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "meta", dict(self.meta))

    def __len__(self):
        return len(self.samples)

    @property
    def deltas(self) -> np.ndarray:
        return np.fromiter((s.delta for s in self.samples), dtype=np.int64, count=len(self.samples))

    @property
    def costs(self) -> np.ndarray:
        """(n, 2) array of ``cost_a, cost_b``."""
        out = np.empty((len(self.samples), 2), dtype=np.int64)
        for i, s in enumerate(self.samples):
            out[i] = (s.cost_a, s.cost_b)
        return out

    @classmethod
    def from_deltas(cls, deltas: Iterable[int], meta=None) -> "CampaignLog":
        """Build a log whose samples have ``cost_a = delta`` and ``cost_b = 0``."""
        return cls(tuple(DiffSample(i, int(d), 0) for i, d in enumerate(deltas)), meta or {})


@dataclass(frozen=True)
class SummaryStats:
    count: int
    mean: float
    std: float
    max: int
    min: int


@dataclass(frozen=True)
class SplitLog:
    training: CampaignLog
    testing: CampaignLog
    split_index: int


def _as_deltas(data) -> np.ndarray:
    if isinstance(data, CampaignLog):
        return data.deltas
    return np.asarray(data)


def summarize(log) -> SummaryStats:
    """Count, mean, population std, max and min of the deltas of ``log``.

    ``log`` may be a :class:`CampaignLog` or any sequence of deltas.
    """
    d = _as_deltas(log)
    if d.size == 0:
        raise EmptyLogError("cannot summarize an empty log")
    mean = float(np.mean(d, dtype=np.float64))
    std = float(np.std(d, dtype=np.float64))
    lo, hi = d.min(), d.max()
    # clamp away last-ulp rounding so min <= mean <= max holds exactly
    mean = min(max(mean, float(lo)), float(hi))
    return SummaryStats(int(d.size), mean, std, hi.item(), lo.item())


def split(log: CampaignLog, at: int) -> SplitLog:
    if not 0 <= at <= len(log):
        raise IndexError(f"split index {at} outside [0, {len(log)}]")
    return SplitLog(
        CampaignLog(log.samples[:at], log.meta),
        CampaignLog(log.samples[at:], log.meta),
        at,
    )


def top_k(deltas: Sequence, k: int) -> np.ndarray:
    """The ``k`` largest deltas in descending order.

    Equal values are ordered by later index first, so the selection is fully
    deterministic.
    """
    d = np.asarray(deltas)
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if k > d.size:
        raise ValueError(f"k={k} exceeds the number of deltas ({d.size})")
    order = np.lexsort((-np.arange(d.size), -d))
    return d[order[:k]]


# -- file I/O -----------------------------------------------------------------


def _parse_int(raw, name, line):
    if isinstance(raw, str):
        text = raw.strip()
        if not text or not (text.isdigit() or (text[0] in "+-" and text[1:].isdigit())):
            raise IngestError(f"{name} must be an integer, got {raw!r}", line)
        value = int(text)
    elif isinstance(raw, int) and not isinstance(raw, bool):
        value = raw
    else:
        raise IngestError(f"{name} must be an integer, got {raw!r}", line)
    if value < 0:
        raise IngestError(f"{name} must be nonnegative, got {value}", line)
    return value


def _row_to_sample(row: Mapping, line: int) -> DiffSample:
    for key in _REQUIRED:
        if key not in row or row[key] is None:
            raise IngestError(f"missing column {key!r}", line)
    index = _parse_int(row["index"], "index", line)
    a = _parse_int(row["cost_a"], "cost_a", line)
    b = _parse_int(row["cost_b"], "cost_b", line)
    delta = row.get("delta")
    if delta is not None and delta != "":
        delta = _parse_int(delta, "delta", line)
        if delta != abs(a - b):
            raise DeltaMismatchError(f"delta {delta} != |{a} - {b}| = {abs(a - b)}", line)
    input_id = row.get("input_id") or ""
    if not isinstance(input_id, str):
        raise IngestError(f"input_id must be a string, got {input_id!r}", line)
    return DiffSample(index, a, b, abs(a - b), input_id)


def _meta_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def _infer_format(path: Path, fmt):
    if fmt is not None:
        if fmt not in ("csv", "jsonl"):
            raise ValueError(f"unknown log format {fmt!r}")
        return fmt
    return "jsonl" if path.suffix.lower() in (".jsonl", ".json", ".ndjson") else "csv"


def ingest(path, format: str | None = None) -> CampaignLog:
    """Read a campaign log from CSV or JSONL.

    The delta column is optional; when present it must equal
    ``|cost_a - cost_b|``. A sidecar ``<file>.meta.json`` is read as meta if
    it exists.
    """
    path = Path(path)
    fmt = _infer_format(path, format)
    samples = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        if fmt == "csv":
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise EmptyLogError(f"{path} is empty")
            header = [h.strip() for h in header]
            missing = [c for c in _REQUIRED if c not in header]
            if missing:
                raise IngestError(f"header lacks column(s) {', '.join(missing)}", 1)
            unknown = [c for c in header if c not in CSV_HEADER]
            if unknown:
                raise IngestError(f"unknown column(s) {', '.join(unknown)}", 1)
            for values in reader:
                line = reader.line_num
                if not values or all(not v.strip() for v in values):
                    continue
                if len(values) != len(header):
                    raise IngestError(
                        f"expected {len(header)} fields, found {len(values)}", line
                    )
                samples.append(_row_to_sample(dict(zip(header, values)), line))
        else:
            for line, text in enumerate(fh, start=1):
                if not text.strip():
                    continue
                try:
                    row = json.loads(text)
                except json.JSONDecodeError as exc:
                    raise IngestError(f"invalid JSON ({exc.msg})", line) from None
                if not isinstance(row, dict):
                    raise IngestError("each line must be a JSON object", line)
                samples.append(_row_to_sample(row, line))
    if not samples:
        raise EmptyLogError(f"{path} contains no samples")
    for prev, cur in zip(samples, samples[1:]):
        if cur.index <= prev.index:
            raise IngestError(f"index {cur.index} does not follow {prev.index}")
    meta = {}
    mp = _meta_path(path)
    if mp.exists():
        meta = {str(k): str(v) for k, v in json.loads(mp.read_text("utf-8")).items()}
    return CampaignLog(tuple(samples), meta)


def emit(log: CampaignLog, path, format: str | None = None) -> Path:
    """Write ``log`` in the CSV/JSONL log schema (plus meta sidecar)."""
    path = Path(path)
    fmt = _infer_format(path, format)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        if fmt == "csv":
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for s in log.samples:
                writer.writerow((s.index, s.cost_a, s.cost_b, s.delta, s.input_id))
        else:
            for s in log.samples:
                row = {
                    "index": s.index,
                    "cost_a": s.cost_a,
                    "cost_b": s.cost_b,
                    "delta": s.delta,
                    "input_id": s.input_id,
                }
                fh.write(json.dumps(row) + "\n")
    if log.meta:
        _meta_path(path).write_text(json.dumps(dict(log.meta), sort_keys=True, indent=1) + "\n", "utf-8")
    return path


def format_real(x: float) -> str:
    """Shortest round-trip decimal for a float (``repr``), ``nan``/``inf`` spelled out."""
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))
