"""Delay monitoring with probabilistic precision guarantees.

Two tools for Gamma-like delay streams:

* ``estimate_mean`` picks a sample count H from a short pilot batch so the
  true mean falls inside ``[m(1 - c/2), m(1 + c/2)]`` with probability p.
* ``ChangeDetector`` trains a reference batch, then tests every following
  batch for a shift of the mean (and optionally of the variance), sizing
  batches so a relative change of ``|c_M - 1|`` is caught with probability
  ``q_M`` while false alarms stay near ``1 - p_M``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Iterator, Sequence, Union

import numpy as np

from .special import chi2_ppf, erfinv, norm_ppf, t_ppf


class DegenerateInit(ValueError):
    pass


class InsufficientSamples(ValueError):
    pass


class StreamExhausted(RuntimeError):
    pass


class DegenerateReference(UserWarning):
    """Reference variance is zero; sample-size formulas fall back to 1."""


@dataclass(frozen=True)
class PrecisionRequirement:
    p: float
    c: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError("p must be in (0, 1)")
        if not self.c > 0.0:
            raise ValueError("c must be positive")


@dataclass(frozen=True)
class BatchStats:
    n: int
    M: float
    S2: float

    @classmethod
    def of(cls, samples: Sequence[float]) -> "BatchStats":
        x = np.asarray(samples, dtype=float)
        if x.size == 0:
            raise InsufficientSamples("empty batch")
        if x.size < 2:
            return cls(int(x.size), float(x[0]), math.nan)
        if x.min() == x.max():
            # exact, rather than the rounding residue of var()
            return cls(int(x.size), float(x[0]), 0.0)
        return cls(int(x.size), float(x.mean()), float(x.var(ddof=1)))

    @property
    def S(self) -> float:
        return math.sqrt(self.S2)


@dataclass(frozen=True)
class ChangeRequirement:
    p_M: float
    q_M: float
    c_M: float

    def __post_init__(self):
        if not (0.0 < self.p_M < 1.0 and 0.0 < self.q_M < 1.0):
            raise ValueError("p_M and q_M must be in (0, 1)")
        if not self.c_M > 0 or self.c_M == 1.0:
            raise ValueError("c_M must be positive and different from 1")


# -- precision-driven mean estimation ------------------------------------------

def delta_correction(p: float, log: Callable[[float], float] = math.log) -> int:
    """Small-sample correction added to H: -round(log(2 - 2p))."""
    return -round(log(2.0 - 2.0 * p))


def required_samples(req: PrecisionRequirement, init: BatchStats,
                     log: Callable[[float], float] = math.log) -> int:
    """H = ceil(2 [2S/(M c) erfinv(p)]^2) + delta, at least 1."""
    if not (init.M > 0) or init.n < 2 or not math.isfinite(init.S2):
        raise DegenerateInit(f"pilot batch unusable: n={init.n}, M={init.M}, S2={init.S2}")
    inner = 2.0 * init.S / (init.M * req.c) * erfinv(req.p)
    core = math.ceil(2.0 * inner * inner) if inner > 0 else 0
    return max(1, core + delta_correction(req.p, log))


@dataclass(frozen=True)
class PrecisionEstimate:
    mean: float
    interval: tuple
    samples_used: int
    H: int

    def covers(self, true_mean: float) -> bool:
        return self.interval[0] <= true_mean <= self.interval[1]


DelaySource = Union[Callable[[int], Sequence[float]], Iterable[float]]


def _draw(source, k: int, it_holder: list) -> np.ndarray:
    if callable(source):
        x = np.asarray(source(k), dtype=float)
        if x.size < k:
            raise StreamExhausted(f"wanted {k} samples, stream returned {x.size}")
        return x[:k]
    if not it_holder:
        it_holder.append(iter(source))
    it: Iterator = it_holder[0]
    out = []
    for _ in range(k):
        try:
            out.append(float(next(it)))
        except StopIteration:
            raise StreamExhausted(f"stream ended after {len(out)} of {k} samples") from None
    return np.asarray(out)


def estimate_mean(stream: DelaySource, req: PrecisionRequirement, init_n: int = 50) -> PrecisionEstimate:
    """Pilot ``init_n`` samples, size H from them, then average H fresh samples.

    ``stream`` is either a callable ``k -> k samples`` or an iterable.
    The pilot only sizes the estimate; it is not pooled into the mean.
    """
    if init_n < 2:
        raise ValueError("init_n must be at least 2")
    holder: list = []
    init = BatchStats.of(_draw(stream, init_n, holder))
    H = required_samples(req, init)
    m = float(_draw(stream, H, holder).mean())
    half = req.c / 2.0
    return PrecisionEstimate(m, (m * (1.0 - half), m * (1.0 + half)), init_n + H, H)


# -- change detection ----------------------------------------------------------

def mean_change_interval(ref: BatchStats, p_M: float, batch_n: int | None = None) -> tuple:
    """Acceptance interval for the next batch mean.

    With ``batch_n`` None the half-width is ``t S`` with
    ``t = F^-1_{n-1}((1 + p_M)/2)``. Given the size of the batch that will
    be tested, the half-width is ``t S sqrt(1/n_ref + 1/batch_n)``, the
    spread of a difference of two sample means.
    """
    if ref.n < 2:
        raise InsufficientSamples("reference needs at least 2 samples")
    t = t_ppf((1.0 + p_M) / 2.0, ref.n - 1)
    scale = 1.0 if batch_n is None else math.sqrt(1.0 / ref.n + 1.0 / batch_n)
    half = t * ref.S * scale
    return ref.M - half, ref.M + half


def mean_change_samples(req: ChangeRequirement, ref: BatchStats) -> int:
    """n = ceil(2 (c_M z_q + z_p)^2 / (alpha (c_M - 1)^2)), alpha = M^2/S^2."""
    if not ref.M > 0:
        raise DegenerateInit("reference mean must be positive")
    if not ref.S2 > 0:
        warnings.warn("zero reference variance", DegenerateReference, stacklevel=2)
        return 1
    alpha = ref.M * ref.M / ref.S2
    z_p = norm_ppf((1.0 + req.p_M) / 2.0)
    z_q = norm_ppf(req.q_M)
    return max(1, math.ceil(2.0 * (req.c_M * z_q + z_p) ** 2 / (alpha * (req.c_M - 1.0) ** 2)))


@dataclass(frozen=True)
class VarianceRequirement:
    p_S2: float
    q_S2: float
    c_S2: float

    def __post_init__(self):
        ChangeRequirement(self.p_S2, self.q_S2, self.c_S2)


def gamma_excess_kurtosis(ref: BatchStats) -> float:
    """Excess kurtosis 6/shape of a Gamma law with the reference moments."""
    return 6.0 * ref.S2 / (ref.M * ref.M) if ref.M > 0 else 0.0


def _effective_df(n: int, kurtosis: float) -> float:
    # the sample variance of a law with excess kurtosis k behaves like a
    # scaled chi-square with this many degrees of freedom
    return 2.0 / (2.0 / (n - 1) + kurtosis / n)


def variance_change_interval(ref: BatchStats, p_S2: float, n: int | None = None,
                             kurtosis: float = 0.0) -> tuple:
    """Chi-square acceptance interval for a batch variance of size ``n``.

    ``kurtosis = 0`` gives the textbook normal-theory interval
    ``[S2 chi2_lo/(n-1), S2 chi2_hi/(n-1)]``.
    """
    n = ref.n if n is None else n
    if n < 2:
        raise InsufficientSamples("variance interval needs n >= 2")
    d = _effective_df(n, kurtosis)
    lo = chi2_ppf((1.0 - p_S2) / 2.0, d) / d
    hi = chi2_ppf((1.0 + p_S2) / 2.0, d) / d
    return ref.S2 * lo, ref.S2 * hi


def variance_change_samples(req: VarianceRequirement, kurtosis: float = 0.0) -> int:
    """Batch size to see a variance ratio of c_S2 with probability q_S2.

    Normal approximation of the sample variance, whose relative standard
    deviation is sqrt(2/n + kurtosis/n).
    """
    z_p = norm_ppf((1.0 + req.p_S2) / 2.0)
    z_q = norm_ppf(req.q_S2)
    return max(2, math.ceil((req.c_S2 * z_q + z_p) ** 2 * (2.0 + kurtosis) / (req.c_S2 - 1.0) ** 2))


@dataclass(frozen=True)
class ChangeDetectorState:
    phase: str = "Training"  # Training | Ready
    reference: BatchStats | None = None
    required_n: int | None = None
    interval: tuple | None = None
    var_interval: tuple | None = None
    pending: tuple = ()

    def next_batch_size(self, init_n: int) -> int:
        if self.required_n is None:
            return init_n
        if self.phase == "Training":
            return max(2, self.required_n - len(self.pending))
        return self.required_n


VERDICTS = ("NoChange", "MeanChange", "VarianceChange", "Training")


@dataclass
class ChangeDetector:
    """Batch-wise mean (and optional variance) change detector.

    Training takes a pilot batch of ``init_n`` samples to size batches,
    then collects ``required_n`` samples as the reference. In Ready each
    batch is compared with the reference; a reported change returns the
    detector to Training.
    """

    req: ChangeRequirement
    var_req: VarianceRequirement | None = None
    init_n: int = 100
    state: ChangeDetectorState = field(default_factory=ChangeDetectorState)

    @property
    def next_batch_size(self) -> int:
        return self.state.next_batch_size(self.init_n)

    def _size_for(self, stats: BatchStats) -> int:
        n = mean_change_samples(self.req, stats)
        if self.var_req is not None:
            n = max(n, variance_change_samples(self.var_req, gamma_excess_kurtosis(stats)))
        return max(2, n)

    def detect(self, batch: Sequence[float]) -> str:
        x = np.asarray(batch, dtype=float)
        if x.size == 0:
            raise ValueError("batch must be nonempty")
        st = self.state
        if st.phase == "Training":
            if st.required_n is None:
                stats = BatchStats.of(x)
                if stats.n < 2 or not stats.S2 > 0:
                    return "Training"
                self.state = replace(st, required_n=self._size_for(stats), pending=())
                return "Training"
            pending = st.pending + tuple(x.tolist())
            if len(pending) < st.required_n:
                self.state = replace(st, pending=pending)
                return "Training"
            ref = BatchStats.of(pending)
            if not ref.S2 > 0:
                self.state = ChangeDetectorState()
                return "Training"
            var_iv = None
            if self.var_req is not None:
                var_iv = variance_change_interval(ref, self.var_req.p_S2, st.required_n,
                                                  gamma_excess_kurtosis(ref))
            self.state = ChangeDetectorState(
                "Ready", ref, st.required_n,
                mean_change_interval(ref, self.req.p_M, st.required_n), var_iv)
            return "Training"
        b = BatchStats.of(x)
        if b.n >= 2 and b.n != st.required_n:
            lo, hi = mean_change_interval(st.reference, self.req.p_M, b.n)
        else:
            lo, hi = st.interval
        verdict = "NoChange"
        if not lo <= b.M <= hi:
            verdict = "MeanChange"
        elif self.var_req is not None and b.n >= 2:
            vlo, vhi = (st.var_interval if b.n == st.required_n else
                        variance_change_interval(st.reference, self.var_req.p_S2, b.n,
                                                 gamma_excess_kurtosis(st.reference)))
            if not vlo <= b.S2 <= vhi:
                verdict = "VarianceChange"
        if verdict != "NoChange":
            self.state = ChangeDetectorState()
        return verdict


def detect(detector: ChangeDetector, batch: Sequence[float]) -> tuple:
    v = detector.detect(batch)
    return detector.state, v
