"""Per-sample detection, batch detection and threshold calibration.

A sample is called LLM-generated when its score is strictly below the
threshold; ties go to human. F1 treats ``llm`` as the positive class.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from .core import DivergenceScore, StabilityRecord, score_record
from .corpus import TextSample
from .errors import ConfigError, DataError, DuplicateId, EmptyText, GatewayError, SentistabError, SingleClassInput
from .gateway import track_calls
from .rewrite import PromptSet, build_stability_record
from .sentiment import tokenize

METRICS = ("sdc", "sdp", "signed")


@dataclass(frozen=True)
class DetectorConfig:
    analyzer: object
    rewriter: object
    prompts: PromptSet = field(default_factory=PromptSet)
    metric: str = "sdc"
    threshold: Optional[float] = None
    with_sdp: Optional[bool] = None
    sdp_on_rewrite: bool = True

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ConfigError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if self.threshold is not None and math.isnan(self.threshold):
            raise ConfigError("threshold must not be NaN")

    @property
    def computes_sdp(self) -> bool:
        return self.metric == "sdp" or bool(self.with_sdp)


def verdict_for(score: float, threshold: float) -> str:
    return "llm" if score < threshold else "human"


@dataclass(frozen=True)
class DetectionResult:
    sample_id: str
    scores: DivergenceScore
    verdict: str
    threshold_used: float
    metric_used: str
    llm_call_count: int = 0
    llm_calls: Tuple[str, ...] = ()
    record: Optional[StabilityRecord] = field(default=None, compare=False, repr=False)

    @property
    def score(self) -> float:
        return self.scores.get(self.metric_used)

    def with_threshold(self, threshold: float) -> "DetectionResult":
        return DetectionResult(
            self.sample_id, self.scores, verdict_for(self.score, threshold), threshold,
            self.metric_used, self.llm_call_count, self.llm_calls, self.record,
        )

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "metric": self.metric_used,
            "threshold": _num(self.threshold_used),
            "score": self.score,
            "verdict": self.verdict,
            "scores": {"sdc": self.scores.sdc, "sdp": self.scores.sdp, "signed": self.scores.signed},
            "llm_call_count": self.llm_call_count,
            "llm_calls": list(self.llm_calls),
        }


def _num(x: float):
    """JSON-safe float: infinities become the strings "inf" / "-inf"."""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def score_sample(sample: TextSample, cfg: DetectorConfig) -> DetectionResult:
    """Run the pipeline and score ``sample``; verdict uses cfg.threshold or +inf if unset."""
    if not tokenize(sample.text):
        raise EmptyText(f"sample {sample.id!r}: no tokens in text")
    with track_calls() as calls:
        try:
            rec = build_stability_record(
                sample.text, cfg.prompts, cfg.rewriter, cfg.analyzer,
                with_round_trips=cfg.computes_sdp, sdp_on_rewrite=cfg.sdp_on_rewrite,
            )
        except SentistabError as exc:
            exc.args = (f"sample {sample.id!r}: {exc}",)
            raise
    scores = score_record(rec)
    threshold = cfg.threshold if cfg.threshold is not None else math.inf
    return DetectionResult(
        sample_id=sample.id,
        scores=scores,
        verdict=verdict_for(scores.get(cfg.metric), threshold),
        threshold_used=threshold,
        metric_used=cfg.metric,
        llm_call_count=len(calls),
        llm_calls=tuple(calls),
        record=rec,
    )


def detect(sample: TextSample, cfg: DetectorConfig) -> DetectionResult:
    if cfg.threshold is None:
        raise ConfigError("detect needs a threshold; calibrate one first")
    return score_sample(sample, cfg)


@dataclass(frozen=True)
class SampleError:
    id: str
    error_type: str
    message: str
    is_gateway: bool

    def __str__(self):
        return f"{self.error_type}: {self.message}"


@dataclass
class BatchResult:
    results: List[DetectionResult]
    errors: List[SampleError]

    def summary(self) -> dict:
        return {
            "ok": len(self.results),
            "failed": len(self.errors),
            "errors": [{"id": e.id, "error": str(e)} for e in self.errors],
        }


def detect_batch(samples: Sequence[TextSample], cfg: DetectorConfig, parallelism: int = 1, require_threshold: bool = True) -> BatchResult:
    """Detect every sample; failures are collected per sample and the batch continues."""
    ids = [s.id for s in samples]
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise DuplicateId(dup)
    fn = detect if require_threshold else score_sample

    def run(sample):
        try:
            return fn(sample, cfg), None
        except SentistabError as exc:
            if isinstance(exc, ConfigError):
                raise
            return None, SampleError(sample.id, type(exc).__name__, str(exc), isinstance(exc, GatewayError))

    if parallelism <= 1 or len(samples) <= 1:
        outcomes = [run(s) for s in samples]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(run, samples))
    results, errors = [], []
    for s, (res, err) in zip(samples, outcomes):
        if err is None:
            results.append(res)
        else:
            errors.append(err)
    return BatchResult(results, errors)


# -- calibration ------------------------------------------------------------

@dataclass(frozen=True)
class CalibrationReport:
    best_threshold: float
    best_f1: float
    roc_points: Tuple[Tuple[float, float], ...]
    score_table: Tuple[Tuple[str, str, float], ...]

    def to_dict(self) -> dict:
        return {
            "best_threshold": _num(self.best_threshold),
            "best_f1": self.best_f1,
            "roc_points": [list(p) for p in self.roc_points],
            "score_table": [{"id": i, "label": l, "score": s} for i, l, s in self.score_table],
        }


def f1_from_counts(tp: int, fp: int, fn: int) -> float:
    """2PR/(P+R), written as 2tp/(2tp+fp+fn) so it is a single rounding; 0 when tp = 0."""
    if tp == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def candidate_thresholds(scores: Sequence[float]) -> List[float]:
    distinct = sorted(set(scores))
    mids = []
    for a, b in zip(distinct, distinct[1:]):
        m = (a + b) / 2
        # adjacent floats: the midpoint rounds onto a
        mids.append(m if a < m else b)
    return [-math.inf] + mids + [math.inf]


def calibrate(scored: Sequence[Tuple[float, str]], ids: Optional[Sequence[str]] = None) -> CalibrationReport:
    """Pick the threshold maximizing F1 over midpoints between distinct scores.

    Ties in F1 resolve to the smallest threshold.
    """
    labels = [lab for _, lab in scored]
    bad = {lab for lab in labels if lab not in ("human", "llm")}
    if bad:
        raise DataError(f"calibration labels must be human/llm, got {sorted(bad)}")
    n_pos = labels.count("llm")
    n_neg = labels.count("human")
    if n_pos == 0 or n_neg == 0:
        raise SingleClassInput("calibration needs both human and llm samples")
    if any(math.isnan(s) for s, _ in scored):
        raise DataError("NaN score in calibration input")

    ordered = sorted(scored, key=lambda p: p[0])
    best_eps, best_f1 = -math.inf, -1.0
    roc = []
    tp = fp = 0
    j = 0
    for eps in candidate_thresholds([s for s, _ in scored]):
        while j < len(ordered) and ordered[j][0] < eps:
            if ordered[j][1] == "llm":
                tp += 1
            else:
                fp += 1
            j += 1
        f1 = f1_from_counts(tp, fp, n_pos - tp)
        roc.append((fp / n_neg, tp / n_pos))
        if f1 > best_f1:
            best_eps, best_f1 = eps, f1
    if ids is None:
        ids = [str(i) for i in range(len(scored))]
    table = tuple((i, lab, s) for i, (s, lab) in zip(ids, scored))
    return CalibrationReport(best_eps, best_f1, tuple(roc), table)
