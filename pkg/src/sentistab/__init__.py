"""Zero-shot detection of LLM-generated text from sentiment-distribution stability."""

__version__ = "0.1.0"

from .core import (
    DivergenceScore,
    SentimentDistribution,
    SmoothingConfig,
    StabilityRecord,
    clamp_normalize,
    feature_embedding,
    sdc_score,
    sdp_score,
    signed_divergence,
)
from .corpus import Corpus, TextSample, aggregate_short, generate_synthetic, length_bucket, load_jsonl
from .detector import CalibrationReport, DetectionResult, DetectorConfig, calibrate, detect, detect_batch
from .gateway import CompletionRequest, Gateway, GatewayConfig, canonicalize
from .rewrite import PromptSet, build_stability_record, make_rewriter
from .sentiment import LexiconAnalyzer, LlmAnalyzer, ValenceLexicon, default_lexicon, lexicon_analyze

__all__ = [
    "DivergenceScore",
    "SentimentDistribution",
    "SmoothingConfig",
    "StabilityRecord",
    "clamp_normalize",
    "feature_embedding",
    "sdc_score",
    "sdp_score",
    "signed_divergence",
    "Corpus",
    "TextSample",
    "aggregate_short",
    "generate_synthetic",
    "length_bucket",
    "load_jsonl",
    "CalibrationReport",
    "DetectionResult",
    "DetectorConfig",
    "calibrate",
    "detect",
    "detect_batch",
    "CompletionRequest",
    "Gateway",
    "GatewayConfig",
    "canonicalize",
    "PromptSet",
    "build_stability_record",
    "make_rewriter",
    "LexiconAnalyzer",
    "LlmAnalyzer",
    "ValenceLexicon",
    "default_lexicon",
    "lexicon_analyze",
]
