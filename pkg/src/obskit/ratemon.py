"""Link-rate congestion detection with risk-driven adaptive sampling.

Rate samples feed two moment accumulators (sum and sum of squares). A
log-normal distribution is fitted by the method of moments and the
probability of exceeding the link capacity is the congestion risk. The
risk of exceeding a fraction of capacity is mapped to the next sampling
interval through the inverse CDF of a bounded Pareto distribution, so
quiet links are sampled rarely and loaded links often.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .special import norm_sf


class NegativeRate(ValueError):
    pass


class InsufficientSamples(ValueError):
    pass


class NonPositiveMean(ValueError):
    pass


@dataclass
class MomentCounter:
    """First and second moment accumulators of rate samples."""

    s1_acc: float = 0.0
    s2_acc: float = 0.0
    n: int = 0
    dt: float = 0.0

    def update(self, x: float) -> "MomentCounter":
        if not math.isfinite(x):
            raise NegativeRate(f"rate sample must be finite, got {x}")
        if x < 0:
            raise NegativeRate(f"rate sample must be >= 0, got {x}")
        self.s1_acc += x
        self.s2_acc += x * x
        self.n += 1
        return self

    def remove(self, x: float) -> "MomentCounter":
        """Take a previously added sample back out (sliding windows)."""
        self.s1_acc -= x
        self.s2_acc -= x * x
        self.n -= 1
        return self

    def reset(self) -> None:
        self.s1_acc = self.s2_acc = 0.0
        self.n = 0

    @property
    def mean(self) -> float:
        return self.s1_acc / self.n

    @property
    def variance(self) -> float:
        m1 = self.mean
        return max(0.0, self.s2_acc / self.n - m1 * m1)


def update(counter: MomentCounter, rate_sample: float) -> MomentCounter:
    return counter.update(rate_sample)


@dataclass(frozen=True)
class LogNormalModel:
    mu: float
    sigma: float
    n_used: int = 0

    def risk(self, level: float) -> float:
        return risk(self, level)


def fit(counter: MomentCounter) -> LogNormalModel:
    """Method-of-moments log-normal fit: sigma^2 = ln(m2/m1^2), mu = ln m1 - sigma^2/2."""
    if counter.n < 2:
        raise InsufficientSamples(f"need at least 2 samples, have {counter.n}")
    m1 = counter.s1_acc / counter.n
    if not m1 > 0:
        raise NonPositiveMean(f"mean rate must be positive, got {m1}")
    m2 = counter.s2_acc / counter.n
    var = max(0.0, math.log(m2 / (m1 * m1))) if m2 > 0 else 0.0
    return LogNormalModel(math.log(m1) - var / 2.0, math.sqrt(var), counter.n)


def risk(model: LogNormalModel, level: float) -> float:
    """P(rate > level) under the fitted model."""
    if not level > 0:
        raise ValueError("level must be positive")
    if model.sigma == 0.0:
        med = math.exp(model.mu)
        return 0.0 if med < level else (1.0 if med > level else 0.5)
    return norm_sf((math.log(level) - model.mu) / model.sigma)


@dataclass(frozen=True)
class ScalingPolicy:
    lb: float = 0.01
    hb: float = 30.0
    zeta: float = 1.8
    capacity: float = 1.0
    alarm_threshold: float = 0.01
    scale_fraction: float = 0.9
    budget: int = 30

    def __post_init__(self):
        if not 0 < self.lb < self.hb:
            raise ValueError("need 0 < lb < hb")
        if not self.zeta > 0:
            raise ValueError("zeta must be positive")
        if not 0 < self.scale_fraction <= 1:
            raise ValueError("scale_fraction must be in (0, 1]")
        if self.budget < 2:
            raise ValueError("budget must be at least 2 samples")


def next_interval(r: float, policy: ScalingPolicy) -> float:
    """Interval T(r) = lb / u^(1/zeta) with u = r + (1 - r)(lb/hb)^zeta.

    T(0) = hb, T(1) = lb, strictly decreasing in between.
    """
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"risk must be in [0, 1], got {r}")
    if r == 0.0:
        return policy.hb
    if r == 1.0:
        return policy.lb
    floor = (policy.lb / policy.hb) ** policy.zeta
    u = r + (1.0 - r) * floor
    return min(policy.hb, max(policy.lb, policy.lb / u ** (1.0 / policy.zeta)))


@dataclass(frozen=True)
class CongestionAlarm:
    time: float
    risk: float
    model: LogNormalModel


@dataclass
class RateDetector:
    """Adaptive sampler for one monitored port.

    Moments are kept over a sliding window of the last ``policy.budget``
    samples. Once the window is full the model is refitted after every
    sample, so a rising risk shortens the very next interval instead of
    waiting for a whole estimation period at the old (long) interval.
    """

    policy: ScalingPolicy = field(default_factory=ScalingPolicy)
    counter: MomentCounter = field(default_factory=MomentCounter)
    window: deque = field(default_factory=deque)
    interval: float = field(default=None)
    samples: int = 0
    model: LogNormalModel | None = None
    last_risk: float = 0.0
    last_scale_risk: float = 0.0

    def __post_init__(self):
        if self.interval is None:
            self.interval = self.policy.lb

    def step(self, rate_sample: float, now: float = 0.0) -> tuple[CongestionAlarm | None, float]:
        """Feed one sample taken at ``now`` (s); return (alarm or None, next interval)."""
        self.counter.update(rate_sample)
        self.counter.dt = self.interval
        self.window.append(rate_sample)
        self.samples += 1
        if self.counter.n > self.policy.budget:
            self.counter.remove(self.window.popleft())
            if self.samples % 4096 == 0:
                # wash out rounding drift from the running subtraction
                self.counter.s1_acc = math.fsum(self.window)
                self.counter.s2_acc = math.fsum(x * x for x in self.window)
        alarm = None
        if self.counter.n >= self.policy.budget:
            try:
                self.model = fit(self.counter)
            except NonPositiveMean:
                # an idle link has no congestion risk
                self.model = LogNormalModel(-math.inf, 0.0, self.counter.n)
            p = self.policy
            self.last_risk = _safe_risk(self.model, p.capacity)
            self.last_scale_risk = _safe_risk(self.model, p.scale_fraction * p.capacity)
            if self.last_risk > p.alarm_threshold:
                alarm = CongestionAlarm(now, self.last_risk, self.model)
            self.interval = next_interval(self.last_scale_risk, p)
        return alarm, self.interval


def _safe_risk(model: LogNormalModel, level: float) -> float:
    if model.mu == -math.inf:
        return 0.0
    return risk(model, level)


def step(detector: RateDetector, rate_sample: float, now: float = 0.0):
    return detector.step(rate_sample, now)
