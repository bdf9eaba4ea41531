"""Local aggregation point: windowed aggregates, zone membership, reactions.

The engine is driven by explicit ticks. Points are ingested as they arrive
and ``evaluate(now)`` recomputes every zone predicate, diffs the active set
against the previous tick and emits the reactions whose triggers fired.

All timestamps are in milliseconds; windows and ages are in seconds, as in
the MEASURE source.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

from .measure_lang import (AggTerm, And, DictLit, Duration, Elided, Enter, Ident,
                           Leave, MeasureSpec, Not, Number, Or, String, Transition,
                           While, agg_terms)
from .metric_store import MetricPoint

KNOWN_ACTIONS = ("Publish", "Log")

_CMP = {
    "<": lambda a, b: a < b,
    ">": lambda a, b: a > b,
    "<=": lambda a, b: a <= b,
    ">=": lambda a, b: a >= b,
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
}


class EmptyInput(ValueError):
    pass


def resolve_value(v):
    """Turn an AST argument value into a plain Python value."""
    if isinstance(v, Ident):
        return v.name
    if isinstance(v, Number):
        return v.value
    if isinstance(v, Duration):
        return v.seconds
    if isinstance(v, String):
        return v.text
    if isinstance(v, DictLit):
        return {resolve_value(k): resolve_value(x) for k, x in v.items}
    if isinstance(v, Elided):
        return None
    raise TypeError(v)


@dataclass(frozen=True)
class ReactionEvent:
    trigger: object
    action: str
    args: dict
    positional: tuple
    timestamp: float
    known: bool = True

    @property
    def topic(self) -> str | None:
        """Publication topic: ``topic=`` if given, else the first positional arg."""
        t = self.args.get("topic")
        if t is None and self.positional:
            t = self.positional[0]
        return None if t is None else str(t)

    def to_dict(self) -> dict:
        return {"trigger": _trigger_text(self.trigger), "action": self.action,
                "args": self.args, "positional": list(self.positional),
                "t": self.timestamp, "known": self.known}


def _trigger_text(t) -> str:
    if isinstance(t, Transition):
        return f"{t.src}->{t.dst}"
    if isinstance(t, Enter):
        return f"->{t.zone}"
    if isinstance(t, Leave):
        return f"{t.zone}->"
    return f"in {t.zone}"


@dataclass
class ZoneState:
    """Mutable engine state.

    ``windows`` holds one ring of (t_ms, value) per (var, window seconds);
    ``Last`` and ``.age`` terms are served from ``last_value`` and
    ``last_sample_time``.
    """

    active: frozenset = frozenset()
    last_sample_time: dict = field(default_factory=dict)
    last_value: dict = field(default_factory=dict)
    windows: dict = field(default_factory=dict)
    dropped: int = 0
    ticks: int = 0


class ZoneEngine:
    """Binds a MeasureSpec to a ZoneState and evaluates it tick by tick."""

    def __init__(self, spec: MeasureSpec):
        self.spec = spec
        self.state = ZoneState()
        self._vars = {m.var for m in spec.measurements}
        self._windows_by_var: dict[str, set] = {}
        for z in spec.zones:
            for term in agg_terms(z.predicate):
                if term.window is not None:
                    self._windows_by_var.setdefault(term.var, set()).add(term.window)
        for var, ws in self._windows_by_var.items():
            for w in ws:
                self.state.windows[(var, w)] = deque()

    @property
    def active(self) -> frozenset:
        return self.state.active

    def ingest(self, point: MetricPoint) -> None:
        """Append ``point`` (its ``metric`` field names the MEASURE variable)."""
        var, t = point.metric, float(point.timestamp)
        if var not in self._vars:
            self.state.dropped += 1
            return
        st = self.state
        st.last_sample_time[var] = t
        st.last_value[var] = point.value
        for w in self._windows_by_var.get(var, ()):
            ring = st.windows[(var, w)]
            ring.append((t, point.value))
            _evict(ring, t - w * 1000.0)

    def ingest_many(self, points: Iterable[MetricPoint]) -> None:
        for p in points:
            self.ingest(p)

    def window_values(self, var: str, window: float, now: float) -> list[float]:
        """Values in the half-open window (now - window, now]."""
        ring = self.state.windows.get((var, window), ())
        lo = now - window * 1000.0
        return [v for t, v in ring if lo < t <= now]

    def term_value(self, term: AggTerm, now: float) -> float | None:
        """Aggregate a term's left-hand side; None when there is no data."""
        st = self.state
        if term.accessor == "age":
            last = st.last_sample_time.get(term.var)
            return math.inf if last is None else (now - last) / 1000.0
        if term.func == "Last":
            return st.last_value.get(term.var)
        vals = self.window_values(term.var, term.window, now)
        if not vals:
            return None
        if term.func == "Avg":
            return math.fsum(vals) / len(vals)
        if term.func == "Sum":
            return math.fsum(vals)
        if term.func == "Min":
            return min(vals)
        if term.func == "Max":
            return max(vals)
        if term.func == "Count":
            return float(len(vals))
        raise ValueError(f"unknown aggregate {term.func}")

    def holds(self, pred, now: float) -> bool:
        if isinstance(pred, AggTerm):
            x = self.term_value(pred, now)
            return x is not None and _CMP[pred.comparator](x, pred.threshold)
        if isinstance(pred, Not):
            return not self.holds(pred.item, now)
        if isinstance(pred, And):
            return all(self.holds(i, now) for i in pred.items)
        if isinstance(pred, Or):
            return any(self.holds(i, now) for i in pred.items)
        raise TypeError(pred)

    def evaluate(self, now: float) -> list[ReactionEvent]:
        """Recompute zone membership at ``now`` (ms) and return fired reactions."""
        st = self.state
        for (var, w), ring in st.windows.items():
            _evict(ring, now - w * 1000.0)
        old = st.active
        new = frozenset(z.name for z in self.spec.zones if self.holds(z.predicate, now))
        events = []
        for r in self.spec.reactions:
            trig = r.trigger
            if isinstance(trig, Transition):
                fired = (trig.src in old and trig.src not in new
                         and trig.dst not in old and trig.dst in new)
            elif isinstance(trig, Enter):
                fired = trig.zone not in old and trig.zone in new
            elif isinstance(trig, Leave):
                fired = trig.zone in old and trig.zone not in new
            elif isinstance(trig, While):
                fired = trig.zone in new
            else:
                fired = False
            if fired:
                act = r.action
                kwargs = {a.key: resolve_value(a.value) for a in act.args if a.key is not None}
                pos = tuple(resolve_value(a.value) for a in act.args
                            if a.key is None and not isinstance(a.value, Elided))
                events.append(ReactionEvent(trig, act.name, kwargs, pos, now,
                                            act.name in KNOWN_ACTIONS))
        st.active = new
        st.ticks += 1
        return events


def _evict(ring: deque, cutoff: float) -> None:
    while ring and ring[0][0] <= cutoff:
        ring.popleft()


def ingest(engine: ZoneEngine, point: MetricPoint) -> ZoneEngine:
    engine.ingest(point)
    return engine


def evaluate(engine: ZoneEngine, now: float) -> tuple[ZoneEngine, list[ReactionEvent]]:
    return engine, engine.evaluate(now)


OVERLOAD_CLASSES = ("Normal", "ScaleOut", "Troubleshoot")


def classify_overload(per_port_risk: Iterable[float], total_threshold: float,
                      imbalance_ratio: float, eps: float = 1e-9) -> str:
    """Three-way trigger for an elastic router.

    Normal while the mean risk stays below ``total_threshold``; otherwise
    ScaleOut when the load is spread evenly (max/min within
    ``imbalance_ratio``) and Troubleshoot when one port dominates.
    """
    risks = [float(r) for r in per_port_risk]
    if not risks:
        raise EmptyInput("per-port risk list is empty")
    if math.fsum(risks) / len(risks) < total_threshold:
        return "Normal"
    if max(risks) / max(min(risks), eps) <= imbalance_ratio:
        return "ScaleOut"
    return "Troubleshoot"
