"""Synthetic traces with ground truth, and scenario runners that score the
detectors against them.

Randomness comes from numpy's PCG64 (``numpy.random.default_rng``), seeded
from the scenario seed, so every trace and report is reproducible.

Scenario kinds accepted by :func:`run_scenario`:

``ratemon_sweep``
    matched-seed suites of congestion episodes, one detector configuration
    per (T_p, hb, zeta) cell; reports detection ratio and sampling cost.
``precision``
    repeated adaptive mean estimates on Gamma delays; reports hit rate and
    cost per shape.
``change_detection``
    a long delay trace with randomly timed mean changes, fed to the batch
    change detector; reports valid/small/invalid change counts, detection
    and false-alarm rates and samples per estimation.
``elastic_router``
    per-port rate monitors publish risk samples over the broker tree to an
    aggregation point that runs a MEASURE program and the three-way
    overload classifier; every alarm is published and persisted.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from . import broker as br
from . import measure_lang as ml
from .delaymon import (BatchStats, ChangeDetector, ChangeRequirement, PrecisionRequirement,
                       VarianceRequirement, estimate_mean, mean_change_samples)
from .metric_store import MetricPoint, MetricStore
from .ratemon import RateDetector, ScalingPolicy
from .special import norm_ppf
from .zone_engine import ZoneEngine, classify_overload

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    pass


# -- rate traces -------------------------------------------------------------------

@dataclass(frozen=True)
class Episode:
    """Congestion episode: log-linear ramp over ``tp`` seconds to a mean rate
    of ``peak`` x capacity, held for ``hold`` seconds, then ``decay``."""

    start: float
    tp: float
    peak: float = 1.2
    hold: float = 30.0
    decay: float = 10.0

    def __post_init__(self):
        if not self.tp > 0:
            raise ConfigError("episode build-up time must be positive")

    @property
    def end(self) -> float:
        return self.start + self.tp + self.hold + self.decay


@dataclass(frozen=True)
class RateScenario:
    seed: int
    duration: float
    mu: float
    sigma: float
    capacity: float = 1.0
    episodes: tuple = ()
    resolution: float = 0.01
    alarm_threshold: float = 0.01

    def __post_init__(self):
        for ep in self.episodes:
            if ep.start < 0 or ep.end > self.duration:
                raise ConfigError(f"episode {ep} outside [0, {self.duration}]")

    @classmethod
    def from_utilization(cls, seed: int, utilization: float, sigma: float, **kw) -> "RateScenario":
        """Base log-normal whose mean is ``utilization`` x capacity."""
        cap = kw.get("capacity", 1.0)
        return cls(seed=seed, mu=math.log(utilization * cap) - sigma * sigma / 2.0, sigma=sigma, **kw)


@dataclass
class RateTrace:
    scenario: RateScenario
    noise: np.ndarray
    lpeaks: tuple
    truth: list

    def log_envelope(self, t: float) -> float:
        out = 0.0
        for ep, lp in zip(self.scenario.episodes, self.lpeaks):
            if t < ep.start or t > ep.end:
                continue
            if t < ep.start + ep.tp:
                out += lp * (t - ep.start) / ep.tp
            elif t < ep.start + ep.tp + ep.hold:
                out += lp
            else:
                out += lp * (1.0 - (t - ep.start - ep.tp - ep.hold) / ep.decay)
        return out

    def rate(self, t: float) -> float:
        sc = self.scenario
        i = min(int(t / sc.resolution), len(self.noise) - 1)
        return math.exp(sc.mu + self.log_envelope(t) + sc.sigma * self.noise[i])

    def exceedance(self, t: float) -> float:
        """Instantaneous P(rate > capacity) under the generating law."""
        sc = self.scenario
        z = (math.log(sc.capacity) - sc.mu - self.log_envelope(t)) / sc.sigma
        return 0.5 * math.erfc(z / math.sqrt(2.0))


def gen_rate_trace(sc: RateScenario) -> RateTrace:
    """Noise on the resolution grid plus analytic ground-truth intervals.

    An interval is congested while the generator's exceedance probability
    of capacity is above ``alarm_threshold``.
    """
    rng = np.random.default_rng(sc.seed)
    noise = rng.standard_normal(int(sc.duration / sc.resolution) + 2)
    z_thr = norm_ppf(1.0 - sc.alarm_threshold)
    e_thr = math.log(sc.capacity) - z_thr * sc.sigma - sc.mu
    if e_thr <= 0:
        raise ConfigError("base load already exceeds the congestion definition")
    lpeaks, truth = [], []
    for ep in sc.episodes:
        lp = math.log(ep.peak * sc.capacity) - sc.sigma ** 2 / 2.0 - sc.mu
        lpeaks.append(lp)
        if lp > e_thr:
            f = e_thr / lp
            truth.append((ep.start + ep.tp * f, ep.start + ep.tp + ep.hold + ep.decay * (1.0 - f)))
    truth.sort()
    merged: list = []
    for a, b in truth:
        if merged and a <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    return RateTrace(sc, noise, tuple(lpeaks), merged)


@dataclass
class RateRun:
    alarms: list
    samples: int
    detections: int
    duplicates: int
    false_alarms: int
    truth: int
    cost: float

    @property
    def detected(self) -> bool:
        return self.truth > 0 and self.detections == self.truth


def score_alarms(alarms: list, truth: list, slack: float) -> tuple[int, int, int]:
    """(detections, duplicates, false alarms); a truth interval [a, b] is
    detected by an alarm in [a, b + slack]."""
    hit = [False] * len(truth)
    det = dup = fa = 0
    for t in alarms:
        j = next((k for k, (a, b) in enumerate(truth) if a <= t <= b + slack), None)
        if j is None:
            fa += 1
        elif hit[j]:
            dup += 1
        else:
            hit[j] = True
            det += 1
    return det, dup, fa


def run_rate_trace(trace: RateTrace, policy: ScalingPolicy, buffer_depth: float = 0.03,
                   on_sample: Callable | None = None) -> RateRun:
    """Drive one adaptive detector over ``trace`` in virtual time."""
    det = RateDetector(policy)
    dur = trace.scenario.duration
    t, alarms = 0.0, []
    step, rate = det.step, trace.rate
    while t < dur:
        x = rate(t)
        alarm, interval = step(x, t)
        if alarm is not None:
            alarms.append(t)
        if on_sample is not None:
            on_sample(t, x, det, alarm)
        t += interval
    d, dup, fa = score_alarms(alarms, trace.truth, buffer_depth)
    return RateRun(alarms, det.samples, d, dup, fa, len(trace.truth), det.samples * buffer_depth / dur)


def random_episode_scenario(seed: int, tp: float, util=(0.2, 0.35), sigma=(0.3, 0.45),
                            start=(300.0, 600.0), peak: float = 1.2, hold: float = 30.0,
                            decay: float = 10.0, tail: float = 120.0) -> RateScenario:
    """One congestion episode on a randomly drawn base load."""
    rng = np.random.default_rng([seed, 0x5CE])
    u, s, t0 = rng.uniform(*util), rng.uniform(*sigma), rng.uniform(*start)
    ep = Episode(t0, tp, peak, hold, decay)
    return RateScenario.from_utilization(seed, u, s, duration=ep.end + tail, episodes=(ep,))


# -- delay traces ------------------------------------------------------------------

@dataclass(frozen=True)
class DelayScenario:
    seed: int
    n_changes: int = 1999
    first_change: float = 200.0
    gap: tuple = (0.0, 1000.0)
    mean_range: tuple = (0.02, 1.0)
    shape_range: tuple = (2.0, 10.0)
    batch_period: float = 50.0
    tail: float = 500.0

    def __post_init__(self):
        lo, hi = self.mean_range
        if not 0 < lo <= hi:
            raise ConfigError("mean_range must be positive and ordered")
        if self.batch_period <= 0:
            raise ConfigError("batch_period must be positive")


@dataclass
class DelayTrace:
    scenario: DelayScenario
    change_times: np.ndarray
    means: np.ndarray
    shapes: np.ndarray
    end: float
    rng: np.random.Generator = field(repr=False)

    def segment(self, t: float) -> int:
        return int(np.searchsorted(self.change_times, t, side="right"))

    def params(self, t: float) -> tuple[float, float]:
        i = self.segment(t)
        return float(self.shapes[i]), float(self.means[i] / self.shapes[i])

    def sample(self, times: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.change_times, times, side="right")
        return self.rng.gamma(self.shapes[idx], self.means[idx] / self.shapes[idx])

    def magnitudes(self) -> np.ndarray:
        """Relative mean change |m_new - m_old| / m_old at every change."""
        return np.abs(np.diff(self.means)) / self.means[:-1]

    def labels(self, c: float) -> list[str]:
        return ["valid" if m >= c else "small" for m in self.magnitudes()]


def gen_delay_trace(sc: DelayScenario) -> DelayTrace:
    """Piecewise-stationary Gamma delays; mean and shape redrawn at each change."""
    rng = np.random.default_rng(sc.seed)
    gaps = rng.uniform(*sc.gap, sc.n_changes)
    times = np.cumsum(gaps) + sc.first_change if sc.n_changes else np.zeros(0)
    means = rng.uniform(*sc.mean_range, sc.n_changes + 1)
    shapes = rng.uniform(*sc.shape_range, sc.n_changes + 1)
    end = (times[-1] if sc.n_changes else sc.first_change) + sc.tail
    return DelayTrace(sc, times, means, shapes, float(end), np.random.default_rng([sc.seed, 1]))


@dataclass
class ChangeReport:
    estimations: int
    total_changes: int
    valid: int
    small: int
    invalid: int
    valid_detected: int
    small_detected: int
    false_alarms: int
    avg_samples: float
    predicted_samples: float
    detections: list = field(default_factory=list)

    @property
    def valid_detection_rate(self) -> float:
        return self.valid_detected / self.valid if self.valid else math.nan

    @property
    def small_detection_rate(self) -> float:
        return self.small_detected / self.small if self.small else math.nan

    @property
    def false_alarm_rate(self) -> float:
        return self.false_alarms / self.estimations if self.estimations else math.nan

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "detections"}
        d.update(valid_detection_rate=self.valid_detection_rate,
                 small_detection_rate=self.small_detection_rate,
                 false_alarm_rate=self.false_alarm_rate)
        return d


def run_change_detection(trace: DelayTrace, req: ChangeRequirement, init_n: int = 100,
                         var_req: VarianceRequirement | None = None,
                         window: float | None = None, store: MetricStore | None = None) -> ChangeReport:
    """Feed batches every ``batch_period`` and score detections.

    A change is invalid if it falls in a batch processed in Training, small
    if its relative mean shift is below ``|c_M - 1|``, valid otherwise. It
    counts as detected if a detection follows within ``window`` seconds
    (default two batch periods). A detection with no change in the
    preceding ``window`` is a false alarm; the false-alarm rate is taken
    over all estimations.
    """
    sc = trace.scenario
    period = sc.batch_period
    window = 2.0 * period if window is None else window
    det = ChangeDetector(req, var_req, init_n)
    c = abs(req.c_M - 1.0)
    t, est, total = 0.0, 0, 0
    batch_starts, phases, detections, predicted = [], [], [], []
    while t + period <= trace.end:
        size = det.next_batch_size
        times = t + np.arange(size) * (period / size)
        x = trace.sample(times)
        phase_before = det.state.phase
        verdict = det.detect(x)
        if phase_before == "Training" and det.state.phase == "Ready":
            predicted.append(mean_change_samples(req, det.state.reference))
        batch_starts.append(t)
        phases.append(phase_before)
        est += 1
        total += size
        if verdict in ("MeanChange", "VarianceChange"):
            detections.append(t + period)
        if store is not None:
            ms = int(round((t + period) * 1000))
            store.put(MetricPoint("delaymon.mean", float(x.mean()), ms, {}))
            store.put(MetricPoint("delaymon.samples", float(size), ms, {}))
        t += period
    starts = np.asarray(batch_starts)
    dets = np.asarray(detections)
    fa = 0
    for d in dets:
        j = int(np.searchsorted(trace.change_times, d, side="right")) - 1
        if j < 0 or d - trace.change_times[j] > window:
            fa += 1
    mags = trace.magnitudes()
    valid = small = invalid = vdet = sdet = 0
    for tc, mag in zip(trace.change_times, mags):
        b = int(np.searchsorted(starts, tc, side="right")) - 1
        if b < 0 or b >= len(phases) or phases[b] == "Training":
            invalid += 1
            continue
        hit = bool(np.any((dets > tc) & (dets <= tc + window)))
        if mag < c:
            small += 1
            sdet += hit
        else:
            valid += 1
            vdet += hit
    return ChangeReport(est, len(trace.change_times), valid, small, invalid, vdet, sdet, fa,
                        total / est if est else math.nan,
                        float(np.mean(predicted)) if predicted else math.nan, detections)


# -- precision experiment ----------------------------------------------------------

@dataclass
class PrecisionCell:
    shape: float
    scale: float
    hit_rate: float
    mean_cost: float
    repetitions: int


def run_precision(shapes, p: float, c: float, repetitions: int = 2000, seed: int = 0,
                  init_n: int = 50, scale: float = 0.001) -> list[PrecisionCell]:
    req = PrecisionRequirement(p, c)
    out = []
    for k, shape in enumerate(shapes):
        rng = np.random.default_rng([seed, k])
        true_mean = shape * scale
        hits = cost = 0
        for _ in range(repetitions):
            est = estimate_mean(lambda n: rng.gamma(shape, scale, n), req, init_n)
            hits += est.covers(true_mean)
            cost += est.samples_used
        out.append(PrecisionCell(float(shape), scale, hits / repetitions, cost / repetitions, repetitions))
    return out


# -- elastic router pipeline -------------------------------------------------------

ELASTIC_ROUTER_MEASURE = """\
measurement {
  r1 = ratemon_risk(port1);
  r2 = ratemon_risk(port2);
  r3 = ratemon_risk(port3);
  r4 = ratemon_risk(port4);
} zones {
  hot1 = Last(r1) > 1%;
  hot2 = Last(r2) > 1%;
  hot3 = Last(r3) > 1%;
  hot4 = Last(r4) > 1%;
} reaction {
  ->hot1: Publish(topic="alarm/port", msg="port1 at risk");
  ->hot2: Publish(topic="alarm/port", msg="port2 at risk");
  ->hot3: Publish(topic="alarm/port", msg="port3 at risk");
  ->hot4: Publish(topic="alarm/port", msg="port4 at risk");
}
"""


@dataclass
class _Event:
    t: float
    kind: str
    idx: int

    def __lt__(self, other):
        return (self.t, self.kind, self.idx) < (other.t, other.kind, other.idx)


def _metric_name(fn: str) -> str:
    return fn.replace("_", ".")


def run_elastic_router(cfg: Mapping, seed: int, store: MetricStore) -> dict:
    """Rate monitors -> broker tree -> aggregation point -> classifier."""
    ports = list(cfg.get("ports", ["port1", "port2", "port3", "port4"]))
    text = cfg.get("measure", ELASTIC_ROUTER_MEASURE)
    if "measure_file" in cfg:
        try:
            text = Path(cfg["measure_file"]).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"measure_file: {exc}") from None
    try:
        spec = ml.parse(text)
    except (ml.MeasureSyntaxError, ml.MeasureSemanticError) as exc:
        raise ConfigError(f"MEASURE program: {exc}") from None
    binding = None
    if "graph" in cfg:
        from . import nffg as nf
        try:
            binding = ml.bind(spec, nf.load(cfg["graph"]))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"graph: {exc}") from None
        if not binding.ok:
            raise ConfigError(f"unresolved measurement targets: {binding.unresolved}")
    tick = float(cfg.get("tick", 1.0))
    confirm = int(cfg.get("confirm_ticks", 3))
    threshold = float(cfg.get("total_threshold", 0.15))
    ratio = float(cfg.get("imbalance_ratio", 2.0))
    duration = float(cfg.get("duration", 1000.0))
    pol = dict(cfg.get("policy", {}))
    pol.setdefault("hb", 1.0)
    policy = ScalingPolicy(**pol)
    util = float(cfg.get("utilization", 0.4))
    sigma = float(cfg.get("sigma", 0.3))
    episodes = {p: [] for p in ports}
    for ep in cfg.get("episodes", _default_elastic_episodes(ports)):
        for p in ep.get("ports", ports):
            episodes[p].append(Episode(float(ep["start"]), float(ep["tp"]), float(ep.get("peak", 1.2)),
                                       float(ep.get("hold", 60.0)), float(ep.get("decay", 10.0))))
    traces = [gen_rate_trace(RateScenario.from_utilization(
        seed * 1000 + i, util, sigma, duration=duration, episodes=tuple(episodes[p]),
        capacity=policy.capacity, alarm_threshold=policy.alarm_threshold)) for i, p in enumerate(ports)]

    fab = br.InProcFabric()
    fab.add_broker("core")
    fab.add_broker("edge", "core")
    ops = [fab.add_client(f"ratemon.{p}", "edge") for p in ports]
    agg = fab.add_client("aggregator", "core")
    observer = fab.add_client("observer", "core")
    agg.subscribe("metrics/*")
    observer.subscribe("alarm/*")

    var_of = {}
    for m in spec.measurements:
        target = next((a.value.name for a in m.args if a.key is None and isinstance(a.value, ml.Ident)), None)
        var_of[(_metric_name(m.metric), target)] = m.var
    port_vars = [var_of.get(("ratemon.risk", p)) for p in ports]
    engine = ZoneEngine(spec)

    def on_metric(frame: br.Frame) -> None:
        if frame.command != br.Command.DELIVER_PUB or not frame.dest.startswith("metrics/"):
            return
        pt = MetricPoint.from_json(frame.payload)
        store.put(pt)
        var = var_of.get((pt.metric, pt.tags.get("port")))
        if var is not None:
            engine.ingest(MetricPoint(var, pt.value, pt.timestamp, pt.tags))

    agg.on_frame = on_metric
    published: list = []  # alarms as issued by their origin
    seq = {"n": 0}

    def persist(frame: br.Frame) -> None:
        if frame.command != br.Command.DELIVER_PUB:
            return
        rec = json.loads(frame.payload)
        store.put(MetricPoint("alarm", 1.0, rec["t_ms"],
                              {"topic": frame.dest, "source": frame.source, "id": rec["id"]}))

    observer.on_frame = persist

    def raise_alarm(client: br.InProcClient, topic: str, t: float, body: dict) -> None:
        seq["n"] += 1
        rec = {"id": f"a{seq['n']}", "t_ms": int(round(t * 1000)), "topic": topic, **body}
        published.append(rec)
        client.publish(topic, json.dumps(rec, sort_keys=True))

    dets = [RateDetector(policy) for _ in ports]
    alarm_on = [False] * len(ports)
    heap = [_Event(0.0, "sample", i) for i in range(len(ports))]
    heap.append(_Event(tick, "tick", 0))
    heapq.heapify(heap)
    state, candidate, streak = "Normal", "Normal", 0
    transitions, classes = [], []
    last_ms = [-1] * len(ports)
    while heap:
        ev = heapq.heappop(heap)
        if ev.t > duration:
            break
        if ev.kind == "sample":
            i = ev.idx
            d = dets[i]
            x = traces[i].rate(ev.t)
            alarm, interval = d.step(x, ev.t)
            ms = max(int(round(ev.t * 1000)), last_ms[i] + 1)
            last_ms[i] = ms
            tags = {"port": ports[i]}
            store.put(MetricPoint("ratemon.rate", x, ms, tags))
            store.put(MetricPoint("ratemon.interval", interval, ms, tags))
            if d.model is not None:
                pt = MetricPoint("ratemon.risk", d.last_risk, ms, {"port": ports[i]})
                ops[i].publish(f"metrics/ratemon.risk/{ports[i]}", pt.to_json())
            if (alarm is not None) != alarm_on[i]:
                alarm_on[i] = alarm is not None
                if alarm is not None:
                    raise_alarm(ops[i], "alarm/congestion", ev.t, {"port": ports[i], "risk": alarm.risk})
            heapq.heappush(heap, _Event(ev.t + interval, "sample", i))
        else:
            now_ms = int(round(ev.t * 1000))
            for rev in engine.evaluate(now_ms):
                if rev.action == "Publish" and rev.topic:
                    raise_alarm(agg, rev.topic, ev.t, {"trigger": rev.to_dict()["trigger"],
                                                      "msg": rev.args.get("msg")})
            risks = [engine.state.last_value.get(v, 0.0) if v else 0.0 for v in port_vars]
            cls = classify_overload(risks, threshold, ratio)
            classes.append((ev.t, cls))
            streak = streak + 1 if cls == candidate else 1
            candidate = cls
            if cls != state and streak >= confirm:
                transitions.append({"t": ev.t, "from": state, "to": cls,
                                    "risks": [round(r, 6) for r in risks]})
                raise_alarm(agg, "alarm/overload", ev.t, {"from": state, "to": cls})
                state = cls
            heapq.heappush(heap, _Event(ev.t + tick, "tick", 0))

    received = {json.loads(f.payload)["id"] for f in observer.messages(br.Command.DELIVER_PUB)}
    stored = {s.tags["id"] for s in store.series() if s.metric == "alarm"}
    ids = [a["id"] for a in published]
    return {
        "transitions": transitions,
        "alarms": published,
        "alarm_count": len(published),
        "samples": [d.samples for d in dets],
        "checks": {
            "all_alarms_published": all(i in received for i in ids),
            "all_alarms_persisted": all(i in stored for i in ids),
        },
        "link_frames": {f"{k[0]}->{k[1]}": len(v.frames) for k, v in fab.links.items()},
        "truth": {p: tr.truth for p, tr in zip(ports, traces)},
        "binding": binding.to_dict() if binding is not None else None,
    }


def _default_elastic_episodes(ports) -> list:
    return [
        {"start": 300.0, "tp": 10.0, "peak": 1.2, "hold": 60.0, "decay": 10.0, "ports": list(ports)},
        {"start": 700.0, "tp": 10.0, "peak": 1.6, "hold": 60.0, "decay": 10.0, "ports": [ports[0]]},
    ]


# -- scenario entry point ----------------------------------------------------------

@dataclass
class ScenarioReport:
    kind: str
    seed: int
    results: dict
    traces: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "seed": self.seed, **self.results,
                **({"traces": self.traces} if self.traces else {})}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def load_config(source) -> dict:
    if isinstance(source, Mapping):
        return dict(source)
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        cfg = tomllib.loads(text) if path.suffix == ".toml" else json.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    # file references are relative to the config file
    for key in ("measure_file", "graph"):
        if key in cfg and not Path(cfg[key]).is_absolute():
            cfg[key] = str(path.parent / cfg[key])
    return cfg


DEFAULT_SWEEP_CELLS = (
    [{"tp": 10.0, "hb": 30.0, "zeta": z} for z in (1.2, 1.8, 2.4, 3.0)]
    + [{"tp": 10.0, "hb": 300.0, "zeta": 1.8}, {"tp": 100.0, "hb": 30.0, "zeta": 1.8}]
)


def _ratemon_sweep(cfg: Mapping, seed: int, store: MetricStore) -> dict:
    n = int(cfg.get("traces", 200))
    bd = float(cfg.get("buffer_depth", 0.03))
    cells = cfg.get("cells") or DEFAULT_SWEEP_CELLS
    base = dict(cfg.get("policy", {}))
    gen = {"peak": 1.0, "hold": 10.0, **cfg.get("generator", {})}
    out = []
    suites: dict = {}
    for cell in cells:
        tp = float(cell["tp"])
        if tp not in suites:
            suites[tp] = [gen_rate_trace(random_episode_scenario(seed + k, tp, **gen)) for k in range(n)]
        pol = ScalingPolicy(**{**base, "hb": float(cell.get("hb", base.get("hb", 30.0))),
                               "zeta": float(cell.get("zeta", base.get("zeta", 1.8)))})
        runs = [run_rate_trace(tr, pol, bd) for tr in suites[tp]]
        truth = sum(r.truth for r in runs)
        row = {"tp": tp, "hb": pol.hb, "zeta": pol.zeta,
               "detection_ratio": sum(r.detections for r in runs) / truth if truth else math.nan,
               "false_alarms": sum(r.false_alarms for r in runs),
               "duplicates": sum(r.duplicates for r in runs),
               "sampling_cost": float(np.mean([r.cost for r in runs])),
               "mean_samples": float(np.mean([r.samples for r in runs]))}
        out.append(row)
        tags = {"tp": str(tp), "hb": str(pol.hb), "zeta": str(pol.zeta)}
        store.put(MetricPoint("ratemon.detection_ratio", row["detection_ratio"], len(out), tags))
        store.put(MetricPoint("ratemon.cost", row["sampling_cost"], len(out), tags))
    return {"cells": out, "traces_per_cell": n}


def _precision(cfg: Mapping, seed: int, store: MetricStore) -> dict:
    shapes = cfg.get("shapes", [1, 10, 50, 100])
    cells = run_precision(shapes, float(cfg.get("p", 0.9)), float(cfg.get("c", 0.1)),
                          int(cfg.get("repetitions", 2000)), seed, int(cfg.get("init_n", 50)),
                          float(cfg.get("scale", 0.001)))
    for k, cell in enumerate(cells):
        tags = {"shape": str(cell.shape)}
        store.put(MetricPoint("delaymon.hit", cell.hit_rate, k, tags))
        store.put(MetricPoint("delaymon.samples", cell.mean_cost, k, tags))
    return {"cells": [asdict(c) for c in cells],
            "hit_rate": float(np.mean([c.hit_rate for c in cells]))}


def _change_detection(cfg: Mapping, seed: int, store: MetricStore) -> dict:
    det = dict(cfg.get("detector", {}))
    c = float(det.get("c", 0.05))
    req = ChangeRequirement(float(det.get("p_M", 0.95)), float(det.get("q_M", 0.99)), 1.0 + c)
    var_req = None
    if "p_S2" in det:
        var_req = VarianceRequirement(float(det["p_S2"]), float(det.get("q_S2", 0.99)),
                                      1.0 + float(det.get("c_S2", 0.5)))
    scen = dict(cfg.get("scenario", {}))
    for k in ("gap", "mean_range", "shape_range"):
        if k in scen:
            scen[k] = tuple(scen[k])
    trace = gen_delay_trace(DelayScenario(seed=seed, **scen))
    rep = run_change_detection(trace, req, int(det.get("init_n", 100)), var_req,
                               cfg.get("window"), store)
    return rep.to_dict()


RUNNERS = {
    "ratemon_sweep": _ratemon_sweep,
    "precision": _precision,
    "change_detection": _change_detection,
    "elastic_router": run_elastic_router,
}


def run_scenario(config, seed: int | None = None, store: MetricStore | None = None,
                 out: str | Path | None = None) -> ScenarioReport:
    """Run a scenario described by a mapping or a TOML/JSON file.

    ``seed`` overrides the file's seed. When ``out`` is a directory the
    report is written to ``report.json`` and metric points to
    ``metrics.jsonl`` inside it.
    """
    cfg = load_config(config)
    kind = cfg.get("kind")
    if kind not in RUNNERS:
        raise ConfigError(f"unknown scenario kind {kind!r}; expected one of {sorted(RUNNERS)}")
    seed = int(cfg.get("seed", 0) if seed is None else seed)
    if store is None:
        store = MetricStore()
    try:
        results = RUNNERS[kind](cfg, seed, store)
    except ConfigError:
        raise
    except (TypeError, KeyError, ValueError) as exc:
        raise ConfigError(f"bad {kind} configuration: {exc}") from None
    report = ScenarioReport(kind, seed, results)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
        store.snapshot(out / "metrics.jsonl")
    return report
