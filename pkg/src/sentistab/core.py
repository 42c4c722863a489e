"""Sentiment distributions and the stability divergences computed over them.

All logs are natural logs. Class order is always (negative, neutral, positive).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

from .errors import ConfigError, DataError, EmptyRewrites, EmptyRoundTrips, NegativeInput, NonFiniteInput

CLASSES = ("negative", "neutral", "positive")
DEFAULT_DELTA = 1e-6


@dataclass(frozen=True)
class SmoothingConfig:
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0 / 3.0:
            raise ConfigError(f"smoothing delta must lie in (0, 1/3), got {self.delta}")


@dataclass(frozen=True)
class SentimentDistribution:
    """Probability vector over (negative, neutral, positive)."""

    neg: float
    neu: float
    pos: float

    def __post_init__(self):
        vals = (self.neg, self.neu, self.pos)
        if not all(math.isfinite(v) and 0.0 <= v <= 1.0 for v in vals):
            raise DataError(f"components must lie in [0, 1]: {vals}")
        if abs(math.fsum(vals) - 1.0) > 1e-9:
            raise DataError(f"components must sum to 1: {vals}")

    @classmethod
    def uniform(cls) -> "SentimentDistribution":
        return cls(1 / 3, 1 / 3, 1 / 3)

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.neg, self.neu, self.pos)

    def logs(self) -> Tuple[float, float, float]:
        return (math.log(self.neg), math.log(self.neu), math.log(self.pos))


def clamp_normalize(d: Sequence[float], cfg: SmoothingConfig = SmoothingConfig()) -> SentimentDistribution:
    """Turn a raw non-negative 3-vector into a distribution with no zero mass.

    The vector is normalized, every component is floored at ``cfg.delta`` and the
    result renormalized. An all-zero vector maps to the uniform distribution.
    """
    if len(d) != 3:
        raise DataError(f"expected 3 components, got {len(d)}")
    vals = [float(v) for v in d]
    if not all(math.isfinite(v) for v in vals):
        raise NonFiniteInput(f"non-finite component in {tuple(d)}")
    if any(v < 0 for v in vals):
        raise NegativeInput(f"negative component in {tuple(d)}")
    total = math.fsum(vals)
    if total == 0.0:
        return SentimentDistribution.uniform()
    p = [max(v / total, cfg.delta) for v in vals]
    total = math.fsum(p)
    return SentimentDistribution(*(v / total for v in p))


@dataclass(frozen=True)
class StabilityRecord:
    """Sentiment of one text and of its rewrites / round trips, keyed by prompt id."""

    original: SentimentDistribution
    rewrites: Tuple[Tuple[str, SentimentDistribution], ...] = ()
    round_trips: Tuple[Tuple[str, SentimentDistribution], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "rewrites", tuple(self.rewrites))
        object.__setattr__(self, "round_trips", tuple(self.round_trips))
        for name in ("rewrites", "round_trips"):
            ids = [pid for pid, _ in getattr(self, name)]
            if len(set(ids)) != len(ids):
                raise DataError(f"duplicate prompt ids in {name}: {ids}")


@dataclass(frozen=True)
class DivergenceScore:
    sdc: float
    sdp: Optional[float] = None
    signed: Optional[float] = None

    def get(self, metric: str) -> Optional[float]:
        if metric not in ("sdc", "sdp", "signed"):
            raise ConfigError(f"unknown metric {metric!r}")
        return getattr(self, metric)


def log_l1(a: SentimentDistribution, b: SentimentDistribution) -> float:
    """Sum over classes of |log a_c - log b_c|."""
    return math.fsum(abs(x - y) for x, y in zip(a.logs(), b.logs()))


def _mean_log_l1(original: SentimentDistribution, others: Iterable[SentimentDistribution]) -> float:
    terms = [log_l1(original, o) for o in others]
    return math.fsum(terms) / len(terms)


def sdc_score(rec: StabilityRecord) -> float:
    """Mean log-L1 distance between the original and each rewrite."""
    if not rec.rewrites:
        raise EmptyRewrites("SDC needs at least one rewrite")
    return _mean_log_l1(rec.original, (d for _, d in rec.rewrites))


def sdp_score(rec: StabilityRecord) -> float:
    """Mean log-L1 distance between the original and each round-tripped text."""
    if not rec.round_trips:
        raise EmptyRoundTrips("SDP needs at least one round trip")
    return _mean_log_l1(rec.original, (d for _, d in rec.round_trips))


def signed_divergence(rec: StabilityRecord) -> float:
    """log sigma(x) minus the mean rewrite log sigma, summed over classes."""
    if not rec.rewrites:
        raise EmptyRewrites("signed divergence needs at least one rewrite")
    # summing per-rewrite differences keeps identical rewrites at exactly 0
    orig = rec.original.logs()
    diffs = [o - r for _, d in rec.rewrites for o, r in zip(orig, d.logs())]
    return math.fsum(diffs) / len(rec.rewrites)


def feature_embedding(rec: StabilityRecord) -> Tuple[float, ...]:
    """Concatenate sigma(original) with sigma of each rewrite, in record order.

    Records are built in prompt-set order, so position k always belongs to the
    k-th LER prompt.
    """
    if not rec.rewrites:
        raise EmptyRewrites("embedding needs at least one rewrite")
    out = list(rec.original.as_tuple())
    for _, d in rec.rewrites:
        out.extend(d.as_tuple())
    return tuple(out)


def score_record(rec: StabilityRecord) -> DivergenceScore:
    return DivergenceScore(
        sdc=sdc_score(rec),
        sdp=sdp_score(rec) if rec.round_trips else None,
        signed=signed_divergence(rec),
    )
