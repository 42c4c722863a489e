"""Metrics, the experiment runner and CSV/JSON report export.

Report files written to ``output_dir``:

* ``scores{tag}.csv``     ``id,label,word_count,sdc,sdp,signed,verdict``
* ``embedding{tag}.csv``  ``id,label,f0..f{3(1+I)-1}``
* ``metrics.json``        one row per (dataset, sweep point); see :func:`metrics_row`

``tag`` is empty when the run has a single (dataset, point), otherwise
``-{dataset}-{point}`` with unsafe characters replaced. Floats are written with Python's shortest
round-trip repr, so regenerating metrics from a scores CSV is bit-exact.
"""

from __future__ import annotations

import bisect
import csv
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .config import Pipeline, build_pipeline, check_keys, read_json, uses_network
from .corpus import Corpus, TextSample, aggregate_corpus, generate_synthetic, length_bucket, load_jsonl
from .core import feature_embedding
from .detector import DetectionResult, SampleError, calibrate, detect_batch, f1_from_counts, verdict_for
from .errors import ConfigError, DataError, EmptyInput, SingleClassInput
from .robustness import lexical_perturb, paraphrase_mix

log = logging.getLogger(__name__)

PROTOCOLS = ("main", "paraphrase_sweep", "perturb_sweep", "length_sweep", "prompt_count_sweep")
CALIBRATION_MODES = ("per_dataset", "global", "fixed")
PARAPHRASE_SOURCES = ("identity", "corpus", "llm")
SCORES_HEADER = ["id", "label", "word_count", "sdc", "sdp", "signed", "verdict"]

PARAPHRASE_PROMPT = "Paraphrase the following text. Reply with only the paraphrase.\n\nText:\n{text}"


@dataclass(frozen=True)
class MetricsBundle:
    precision: float
    recall: float
    f1: float
    auroc: Optional[float]
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict:
        return {
            "precision": self.precision, "recall": self.recall, "f1": self.f1, "auroc": self.auroc,
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
        }


def auroc(scores: Sequence[float], labels: Sequence[str]) -> Optional[float]:
    """P(llm score < human score), ties counted one half. None without both classes."""
    pos = [s for s, lab in zip(scores, labels) if lab == "llm"]
    neg = sorted(s for s, lab in zip(scores, labels) if lab == "human")
    if not pos or not neg:
        return None
    twice = 0
    for s in pos:
        above = len(neg) - bisect.bisect_right(neg, s)
        ties = bisect.bisect_right(neg, s) - bisect.bisect_left(neg, s)
        twice += 2 * above + ties
    return float(Fraction(twice, 2 * len(pos) * len(neg)))


def compute_metrics(pairs: Sequence[Tuple[str, str]], scores: Optional[Sequence[float]] = None) -> MetricsBundle:
    """Confusion counts and P/R/F1 from (verdict, true label) pairs, llm = positive.

    AUROC is computed from ``scores`` when given (lower score = more llm-like).
    """
    if not pairs:
        raise EmptyInput("no results to score")
    tp = fp = tn = fn = 0
    for verdict, label in pairs:
        if label not in ("human", "llm") or verdict not in ("human", "llm"):
            raise DataError(f"labels and verdicts must be human/llm, got {(verdict, label)}")
        if verdict == "llm":
            tp, fp = (tp + 1, fp) if label == "llm" else (tp, fp + 1)
        else:
            fn, tn = (fn + 1, tn) if label == "llm" else (fn, tn + 1)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    roc = auroc(scores, [lab for _, lab in pairs]) if scores is not None else None
    return MetricsBundle(precision, recall, f1_from_counts(tp, fp, fn), roc, tp, fp, tn, fn)


# -- experiment config ------------------------------------------------------

EXPERIMENT_KEYS = {
    "protocol", "detector", "corpora", "synthetic", "sweep", "seed", "calibration",
    "paraphrase", "aggregate_words", "half_width", "jobs", "output_dir",
}


@dataclass
class ExperimentConfig:
    protocol: str
    pipeline: Pipeline
    datasets: List[Tuple[str, Corpus]]
    sweep: List[float] = field(default_factory=list)
    seed: int = 0
    calibration: str = "per_dataset"
    paraphrase_source: str = "identity"
    paraphrases: Optional[Dict[str, str]] = None
    aggregate_words: Optional[int] = None
    half_width: int = 10
    jobs: Optional[int] = None
    output_dir: Path = Path("reports")


def _validate_sweep(protocol: str, values) -> List[float]:
    if protocol == "main":
        if values:
            raise ConfigError("sweep: the main protocol takes no sweep values")
        return []
    if not isinstance(values, list) or not values:
        raise ConfigError(f"sweep: {protocol} needs a non-empty list")
    out = []
    for i, v in enumerate(values):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"sweep[{i}]: {v!r} is not a number")
        if protocol in ("paraphrase_sweep", "perturb_sweep") and not 0.0 <= v <= 1.0:
            raise ConfigError(f"sweep[{i}]: ratio {v} outside [0, 1]")
        if protocol == "length_sweep" and (v != int(v) or v < 1):
            raise ConfigError(f"sweep[{i}]: length {v} must be an integer >= 1")
        if protocol == "prompt_count_sweep" and (v != int(v) or not 1 <= v <= 9):
            raise ConfigError(f"sweep[{i}]: prompt count {v} must be an integer in 1..9")
        out.append(int(v) if protocol in ("length_sweep", "prompt_count_sweep") else float(v))
    if out != sorted(out):
        raise ConfigError("sweep: values must be sorted ascending")
    return out


def experiment_from_dict(d: dict, base_dir: Union[str, Path] = ".", replay: bool = False) -> ExperimentConfig:
    check_keys(d, EXPERIMENT_KEYS, "experiment")
    base = Path(base_dir)
    protocol = d.get("protocol", "main")
    if protocol not in PROTOCOLS:
        raise ConfigError(f"protocol: expected one of {PROTOCOLS}, got {protocol!r}")
    sweep = _validate_sweep(protocol, d.get("sweep", []))

    det = d.get("detector", {})
    if isinstance(det, str):
        det_path = base / det
        pipeline = build_pipeline(read_json(det_path), det_path.parent, replay=replay)
    else:
        pipeline = build_pipeline(det, base, replay=replay)

    datasets: List[Tuple[str, Corpus]] = []
    for p in d.get("corpora", []):
        path = base / p
        datasets.append((Path(p).stem, load_jsonl(path)))
    if d.get("synthetic") is not None:
        syn = d["synthetic"]
        check_keys(syn, {"n_per_class", "seed"}, "synthetic")
        n = syn.get("n_per_class", 50)
        if not isinstance(n, int) or n < 1:
            raise ConfigError("synthetic.n_per_class must be an integer >= 1")
        datasets.append(("synthetic", generate_synthetic(n, pipeline.lexicon, int(syn.get("seed", 0)))))
    if not datasets:
        raise ConfigError("experiment: give 'corpora' and/or 'synthetic'")
    names = [n for n, _ in datasets]
    if len(set(names)) != len(names):
        raise ConfigError(f"corpora: dataset names (file stems) must be unique, got {names}")

    calibration = d.get("calibration", "per_dataset")
    if calibration not in CALIBRATION_MODES:
        raise ConfigError(f"calibration: expected one of {CALIBRATION_MODES}, got {calibration!r}")
    if calibration == "fixed" and pipeline.detector.threshold is None:
        raise ConfigError("calibration: 'fixed' needs detector.threshold")

    para = d.get("paraphrase") or {}
    check_keys(para, {"source", "path"}, "paraphrase")
    source = para.get("source", "identity")
    if source not in PARAPHRASE_SOURCES:
        raise ConfigError(f"paraphrase.source: expected one of {PARAPHRASE_SOURCES}, got {source!r}")
    paraphrases = None
    if source == "corpus":
        if not para.get("path"):
            raise ConfigError("paraphrase.path is required when source is 'corpus'")
        paraphrases = {s.id: s.text for s in load_jsonl(base / para["path"])}
    if source == "llm" and pipeline.gateway is None:
        raise ConfigError("paraphrase.source 'llm' needs a gateway section in the detector config")

    agg = d.get("aggregate_words")
    if agg is not None and (not isinstance(agg, int) or agg < 1):
        raise ConfigError("aggregate_words must be an integer >= 1")
    half_width = d.get("half_width", 10)
    if not isinstance(half_width, int) or half_width < 0:
        raise ConfigError("half_width must be a non-negative integer")
    jobs = d.get("jobs")
    if jobs is not None and (not isinstance(jobs, int) or jobs < 1):
        raise ConfigError("jobs must be an integer >= 1")
    seed = d.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")

    return ExperimentConfig(
        protocol=protocol,
        pipeline=pipeline,
        datasets=datasets,
        sweep=sweep,
        seed=seed,
        calibration=calibration,
        paraphrase_source=source,
        paraphrases=paraphrases,
        aggregate_words=agg,
        half_width=half_width,
        jobs=jobs,
        output_dir=base / d.get("output_dir", "reports"),
    )


def load_experiment(path: Union[str, Path], replay: bool = False) -> ExperimentConfig:
    path = Path(path)
    return experiment_from_dict(read_json(path), path.parent, replay=replay)


# -- runner -----------------------------------------------------------------

@dataclass
class PointResult:
    dataset: str
    point: str
    corpus: Corpus
    results: List[DetectionResult]
    errors: List[SampleError]
    threshold: Optional[float] = None
    note: Optional[str] = None


@dataclass
class ExperimentReport:
    rows: List[dict]
    errors: List[dict]
    files: List[Path]
    points: List[PointResult]

    @property
    def has_errors(self) -> bool:
        return bool(self.errors)


def _point_label(protocol: str, value) -> str:
    if protocol == "main":
        return "main"
    short = {"paraphrase_sweep": "ratio", "perturb_sweep": "rate", "length_sweep": "len", "prompt_count_sweep": "I"}
    return f"{short[protocol]}={value}"


def _paraphrase(cfg: ExperimentConfig, sample: TextSample) -> str:
    if cfg.paraphrase_source == "identity":
        return sample.text
    if cfg.paraphrase_source == "corpus":
        if sample.id not in cfg.paraphrases:
            raise DataError(f"no paraphrase for sample {sample.id!r}")
        return cfg.paraphrases[sample.id]
    return cfg.pipeline.gateway.chat([("user", PARAPHRASE_PROMPT.replace("{text}", sample.text))])


def _with_text(sample: TextSample, text: str) -> TextSample:
    return replace(sample, text=text)


def _variants(cfg: ExperimentConfig, corpus: Corpus):
    """Yield (point label, corpus, pipeline) for each sweep point."""
    pipe = cfg.pipeline
    if cfg.protocol == "main":
        yield "main", corpus, pipe
    elif cfg.protocol == "paraphrase_sweep":
        paras = {s.id: _paraphrase(cfg, s) for s in corpus} if any(cfg.sweep) else {}
        for r in cfg.sweep:
            if r == 0:
                yield _point_label(cfg.protocol, r), corpus, pipe
                continue
            yield _point_label(cfg.protocol, r), Corpus(
                _with_text(s, paraphrase_mix(s.text, paras[s.id], r, cfg.seed)) if s.text.strip() else s
                for s in corpus
            ), pipe
    elif cfg.protocol == "perturb_sweep":
        for r in cfg.sweep:
            yield _point_label(cfg.protocol, r), Corpus(
                _with_text(s, lexical_perturb(s.text, r, cfg.seed)) for s in corpus
            ), pipe
    elif cfg.protocol == "length_sweep":
        base = aggregate_corpus(corpus, cfg.aggregate_words, cfg.seed) if cfg.aggregate_words else corpus
        for c in cfg.sweep:
            yield _point_label(cfg.protocol, c), length_bucket(base, c, cfg.half_width), pipe
    elif cfg.protocol == "prompt_count_sweep":
        for n in cfg.sweep:
            det = replace(pipe.detector, prompts=pipe.detector.prompts.with_prompt_count(n))
            yield _point_label(cfg.protocol, n), corpus, Pipeline(det, pipe.gateway, pipe.lexicon)


def _jobs(cfg: ExperimentConfig) -> int:
    jobs = cfg.jobs or os.cpu_count() or 1
    live, cap = uses_network(cfg.pipeline)
    return min(jobs, cap) if live and cfg.jobs is None else jobs


def _labeled(results: Sequence[DetectionResult], labels: Dict[str, str]):
    return [(r.score, labels[r.sample_id]) for r in results if labels[r.sample_id] in ("human", "llm")]


def metrics_row(
    results: Sequence[DetectionResult],
    labels: Dict[str, str],
    metric: str,
    threshold: Optional[float],
) -> dict:
    """Metric fields of one report row; null metrics when nothing can be scored."""
    scored = [r for r in results if labels[r.sample_id] in ("human", "llm")]
    row = {"count": len(scored), "metric": metric, "threshold": threshold}
    if not scored or threshold is None:
        row.update({k: None for k in ("precision", "recall", "f1", "auroc", "tp", "fp", "tn", "fn")})
        return row
    pairs = [(verdict_for(r.score, threshold), labels[r.sample_id]) for r in scored]
    row.update(compute_metrics(pairs, [r.score for r in scored]).to_dict())
    return row


def _calibrated_threshold(scored: List[Tuple[float, str]]) -> Tuple[Optional[float], Optional[str]]:
    try:
        eps = calibrate(scored).best_threshold
    except SingleClassInput:
        return None, "calibration needs both classes"
    if math.isinf(eps):
        return None, "calibrated threshold is infinite"
    return eps, None


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> ExperimentReport:
    metric = cfg.pipeline.detector.metric
    jobs = _jobs(cfg)
    points: List[PointResult] = []
    for name, corpus in cfg.datasets:
        for label, variant, pipe in _variants(cfg, corpus):
            batch = detect_batch(list(variant), pipe.detector, parallelism=jobs, require_threshold=False)
            log.info("%s %s: %d scored, %d errors", name, label, len(batch.results), len(batch.errors))
            points.append(PointResult(name, label, variant, batch.results, batch.errors))

    labels_of = {id(p): {s.id: s.label for s in p.corpus} for p in points}
    if cfg.calibration == "fixed":
        for p in points:
            p.threshold = cfg.pipeline.detector.threshold
    elif cfg.calibration == "per_dataset":
        for p in points:
            p.threshold, p.note = _calibrated_threshold(_labeled(p.results, labels_of[id(p)]))
    else:
        by_point: Dict[str, List[PointResult]] = {}
        for p in points:
            by_point.setdefault(p.point, []).append(p)
        for group in by_point.values():
            pooled = [x for p in group for x in _labeled(p.results, labels_of[id(p)])]
            eps, note = _calibrated_threshold(pooled)
            for p in group:
                p.threshold, p.note = eps, note

    rows, errors = [], []
    single = len(points) == 1
    for p in points:
        if p.threshold is not None:
            p.results = [r.with_threshold(p.threshold) for r in p.results]
        row = {"dataset": p.dataset, "protocol": cfg.protocol, "point": p.point}
        row.update(metrics_row(p.results, labels_of[id(p)], metric, p.threshold))
        row["n_errors"] = len(p.errors)
        row["note"] = p.note
        rows.append(row)
        errors.extend({"dataset": p.dataset, "point": p.point, "id": e.id, "error": str(e)} for e in p.errors)

    report = ExperimentReport(rows, errors, [], points)
    if write:
        report.files = write_reports(cfg, report, single)
    return report


# -- export -----------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def scores_csv(corpus: Corpus, results: Sequence[DetectionResult]) -> str:
    samples = {s.id: s for s in corpus}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCORES_HEADER)
    for r in results:
        s = samples[r.sample_id]
        w.writerow([s.id, s.label, s.word_count, _fmt(r.scores.sdc), _fmt(r.scores.sdp), _fmt(r.scores.signed), r.verdict])
    return buf.getvalue()


def embedding_csv(corpus: Corpus, results: Sequence[DetectionResult]) -> str:
    samples = {s.id: s for s in corpus}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    width = None
    for r in results:
        vec = feature_embedding(r.record)
        if width is None:
            width = len(vec)
            w.writerow(["id", "label"] + [f"f{i}" for i in range(width)])
        w.writerow([r.sample_id, samples[r.sample_id].label] + [_fmt(v) for v in vec])
    if width is None:
        w.writerow(["id", "label"])
    return buf.getvalue()


def read_scores_csv(path: Union[str, Path]) -> List[dict]:
    with open(path, encoding="utf-8", newline="") as f:
        rows = list(csv.DictReader(f))
    for row in rows:
        for k in ("sdc", "sdp", "signed"):
            if k in row:
                row[k] = float(row[k]) if row[k] != "" else None
        if "word_count" in row:
            row["word_count"] = int(row["word_count"])
    return rows


def metrics_from_scores_rows(rows: Sequence[dict], metric: str, threshold: Optional[float] = None) -> dict:
    """Recompute a report row's metric fields from scores CSV rows alone.

    With ``threshold=None`` the threshold is recalibrated, as the runner does
    in per-dataset mode.
    """
    usable = [r for r in rows if r.get(metric) is not None and r["label"] in ("human", "llm")]
    if threshold is None:
        threshold, _ = _calibrated_threshold([(r[metric], r["label"]) for r in usable])
    row = {"count": len(usable), "metric": metric, "threshold": threshold}
    if not usable or threshold is None:
        row.update({k: None for k in ("precision", "recall", "f1", "auroc", "tp", "fp", "tn", "fn")})
        return row
    pairs = [(verdict_for(r[metric], threshold), r["label"]) for r in usable]
    row.update(compute_metrics(pairs, [r[metric] for r in usable]).to_dict())
    return row


def _safe(s: str) -> str:
    return "".join(c if c.isalnum() or c in "-_.=" else "_" for c in s)


def write_reports(cfg: ExperimentConfig, report: ExperimentReport, single: bool) -> List[Path]:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for p, row in zip(report.points, report.rows):
        tag = "" if single else _safe(f"-{p.dataset}-{p.point}")
        for name, text in (("scores", scores_csv(p.corpus, p.results)), ("embedding", embedding_csv(p.corpus, p.results))):
            path = out / f"{name}{tag}.csv"
            path.write_text(text, encoding="utf-8")
            files.append(path)
        row["scores_file"] = f"scores{tag}.csv"
    doc = {
        "protocol": cfg.protocol,
        "metric": cfg.pipeline.detector.metric,
        "calibration": cfg.calibration,
        "seed": cfg.seed,
        "rows": report.rows,
        "errors": report.errors,
    }
    path = out / "metrics.json"
    path.write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    files.append(path)
    return files
