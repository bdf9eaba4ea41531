"""Append-only time-series store for primitive monitoring results.

Records are kept in memory, indexed by (metric name, tag set), and can be
mirrored to a JSON-lines file. One line per point::

    {"m": "cpu", "t": 1700000000000, "v": 40.0, "tags": {"node": "fw1"}}

The same record is the broker payload format for metric samples.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

AGGREGATORS = ("raw", "avg", "min", "max", "sum")


class OutOfOrder(ValueError):
    """A point's timestamp does not advance its series."""


@dataclass(frozen=True)
class MetricPoint:
    """A timestamped sample. ``timestamp`` is in milliseconds."""

    metric: str
    value: float
    timestamp: float
    tags: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"non-finite value for {self.metric}: {self.value}")
        if not math.isfinite(self.timestamp):
            raise ValueError(f"non-finite timestamp for {self.metric}")

    def to_record(self) -> dict:
        return {"m": self.metric, "t": self.timestamp, "v": self.value, "tags": dict(self.tags)}

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)

    @classmethod
    def from_record(cls, rec: Mapping) -> "MetricPoint":
        try:
            return cls(str(rec["m"]), float(rec["v"]), rec["t"], dict(rec.get("tags") or {}))
        except KeyError as exc:
            raise ValueError(f"metric record missing field {exc}") from None

    @classmethod
    def from_json(cls, line: str | bytes) -> "MetricPoint":
        return cls.from_record(json.loads(line))


def _series_key(metric: str, tags: Mapping[str, str]) -> tuple:
    return metric, tuple(sorted(tags.items()))


@dataclass
class Series:
    metric: str
    tags: dict
    times: list = field(default_factory=list)
    values: list = field(default_factory=list)


@dataclass
class RangeResult:
    """Outcome of :meth:`MetricStore.query_range`.

    ``points`` is filled for ``raw`` queries, ``value`` for aggregates.
    ``empty`` is set when nothing matched (unknown metric or empty range).
    """

    points: list
    value: float | None
    empty: bool
    unknown_metric: bool = False


class MetricStore:
    """In-memory series index with an optional JSON-lines journal.

    Writes and snapshots are serialized by an internal lock; reads take the
    same lock briefly to copy out their selection.
    """

    def __init__(self, path: str | Path | None = None):
        self._series: dict[tuple, Series] = {}
        self._by_metric: dict[str, list[Series]] = {}
        self._lock = threading.RLock()
        self._journal = None
        self.path = Path(path) if path is not None else None
        if self.path is not None:
            if self.path.exists():
                for p in _read_jsonl(self.path):
                    self._append(p)
            self._journal = open(self.path, "a", encoding="utf-8")

    def close(self) -> None:
        if self._journal is not None:
            self._journal.close()
            self._journal = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __len__(self) -> int:
        return sum(len(s.times) for s in self._series.values())

    def metrics(self) -> list[str]:
        return sorted(self._by_metric)

    def series(self) -> list[Series]:
        return list(self._series.values())

    def put(self, point: MetricPoint) -> None:
        with self._lock:
            self._append(point)
            if self._journal is not None:
                self._journal.write(point.to_json() + "\n")
                self._journal.flush()

    def put_many(self, points: Iterable[MetricPoint]) -> None:
        for p in points:
            self.put(p)

    def _append(self, point: MetricPoint) -> None:
        key = _series_key(point.metric, point.tags)
        s = self._series.get(key)
        if s is None:
            s = Series(point.metric, dict(point.tags))
            self._series[key] = s
            self._by_metric.setdefault(point.metric, []).append(s)
        elif point.timestamp <= s.times[-1]:
            raise OutOfOrder(
                f"{point.metric}{dict(point.tags)}: t={point.timestamp} not after {s.times[-1]}")
        s.times.append(point.timestamp)
        s.values.append(point.value)

    def query_range(self, metric: str, tags: Mapping[str, str] | None = None,
                    t0: float = -math.inf, t1: float = math.inf,
                    agg: str = "raw") -> RangeResult:
        """Select points with ``t0 <= t < t1`` from every series whose tags
        contain ``tags``; aggregate them if ``agg`` is not ``raw``."""
        if agg not in AGGREGATORS:
            raise ValueError(f"unknown aggregator {agg!r}")
        if t0 > t1:
            raise ValueError("t0 must not exceed t1")
        want = dict(tags or {})
        with self._lock:
            candidates = self._by_metric.get(metric)
            if candidates is None:
                return RangeResult([], None, True, unknown_metric=True)
            selected = []
            for s in candidates:
                if any(s.tags.get(k) != v for k, v in want.items()):
                    continue
                for t, v in zip(s.times, s.values):
                    if t0 <= t < t1:
                        selected.append(MetricPoint(s.metric, v, t, dict(s.tags)))
        selected.sort(key=lambda p: (p.timestamp, sorted(p.tags.items())))
        if not selected:
            return RangeResult([], None, True)
        if agg == "raw":
            return RangeResult(selected, None, False)
        return RangeResult([], aggregate([p.value for p in selected], agg), False)

    def snapshot(self, path: str | Path) -> None:
        """Write every point to ``path`` as JSON lines, series by series."""
        with self._lock, open(path, "w", encoding="utf-8") as fh:
            for s in self._series.values():
                for t, v in zip(s.times, s.values):
                    fh.write(MetricPoint(s.metric, v, t, s.tags).to_json() + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "MetricStore":
        store = cls()
        for p in _read_jsonl(Path(path)):
            store._append(p)
        return store


def aggregate(values: list[float], agg: str) -> float:
    if agg == "avg":
        return math.fsum(values) / len(values)
    if agg == "sum":
        return math.fsum(values)
    if agg == "min":
        return min(values)
    if agg == "max":
        return max(values)
    raise ValueError(f"cannot aggregate with {agg!r}")


def _read_jsonl(path: Path):
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield MetricPoint.from_json(line)
