"""Detector configuration files (nested JSON).

Every key is optional; unknown keys are rejected::

    {
      "metric": "sdc",                 # sdc | sdp | signed
      "threshold": 0.5,                # score < threshold  =>  llm
      "analyzer": "lexicon",           # lexicon | llm
      "rewriter": "mock_neutralizing", # llm | mock_identity | mock_neutralizing | mock_lossy_pair
      "lexicon": {"path": null, "alpha": 1.0, "pos_threshold": 0.1, "neg_threshold": -0.1},
      "prompts": null,                 # null (built-in), a path, or an inline prompt-set object
      "prompt_count": null,            # use the first N LER prompts (topped up from the library)
      "with_sdp": null,                # also compute SDP when metric != sdp
      "sdp_on_rewrite": true,
      "smoothing_delta": 1e-6,
      "gateway": {
        "endpoint": "https://api.example.com/v1", "model": "gpt-4-0613",
        "mode": "live", "cache_dir": ".cache/llm", "max_in_flight": 4,
        "max_retries": 3, "timeout": 60, "backoff_base": 1.0, "seed": null
      }
    }

Relative paths resolve against the directory of the config file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping, Optional, Tuple, Union

from .core import DEFAULT_DELTA, SmoothingConfig
from .detector import DetectorConfig
from .errors import ConfigError
from .gateway import Gateway, GatewayConfig
from .rewrite import PromptSet, load_prompt_set, make_rewriter
from .sentiment import LexiconAnalyzer, LlmAnalyzer, ValenceLexicon, default_lexicon, load_lexicon

DETECTOR_KEYS = {
    "metric", "threshold", "analyzer", "rewriter", "lexicon", "prompts", "prompt_count",
    "with_sdp", "sdp_on_rewrite", "smoothing_delta", "gateway",
}
LEXICON_KEYS = {"path", "alpha", "pos_threshold", "neg_threshold"}
GATEWAY_KEYS = {
    "endpoint", "model", "mode", "cache_dir", "max_in_flight", "max_retries", "timeout",
    "backoff_base", "backoff_factor", "jitter", "seed",
}


def read_json(path: Union[str, Path]) -> Any:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except ValueError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None


def check_keys(d: Mapping, allowed: set, where: str):
    if not isinstance(d, Mapping):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}")


def _resolve(path, base: Path) -> Path:
    p = Path(path)
    return p if p.is_absolute() else base / p


@dataclass
class Pipeline:
    """Everything built from one detector config: the frozen config plus shared services."""

    detector: DetectorConfig
    gateway: Optional[Gateway]
    lexicon: ValenceLexicon

    def close(self):
        if self.gateway is not None:
            self.gateway.close()


def _lexicon(d: Mapping, base: Path) -> ValenceLexicon:
    check_keys(d, LEXICON_KEYS, "lexicon")
    params = {k: float(d[k]) for k in ("alpha", "pos_threshold", "neg_threshold") if d.get(k) is not None}
    if d.get("path"):
        return load_lexicon(_resolve(d["path"], base), **params)
    lex = default_lexicon()
    return lex.with_params(**params) if params else lex


def _gateway_config(d: Mapping, base: Path, replay: bool = False) -> GatewayConfig:
    check_keys(d, GATEWAY_KEYS, "gateway")
    kw = dict(d)
    if kw.get("cache_dir") is not None:
        kw["cache_dir"] = _resolve(kw["cache_dir"], base)
    if replay:
        kw["mode"] = "replay"
    try:
        return GatewayConfig(**kw)
    except TypeError as exc:
        raise ConfigError(f"gateway: {exc}") from None


def build_pipeline(
    d: Mapping,
    base_dir: Union[str, Path] = ".",
    *,
    metric: Optional[str] = None,
    threshold: Optional[float] = None,
    replay: bool = False,
) -> Pipeline:
    """Build analyzer, rewriter, prompts and gateway from a detector config dict."""
    check_keys(d, DETECTOR_KEYS, "detector")
    base = Path(base_dir)
    lex = _lexicon(d.get("lexicon") or {}, base)
    delta = d.get("smoothing_delta", DEFAULT_DELTA)
    try:
        smoothing = SmoothingConfig(float(delta))
    except ValueError as exc:
        raise ConfigError(f"smoothing_delta: {exc}") from None

    analyzer_id = d.get("analyzer", "lexicon")
    rewriter_id = d.get("rewriter", "mock_neutralizing")
    needs_llm = "llm" in (analyzer_id, rewriter_id)
    gateway = None
    if needs_llm or d.get("gateway"):
        gateway = Gateway(_gateway_config(d.get("gateway") or {}, base, replay))

    prompts_spec = d.get("prompts")
    if prompts_spec is None:
        prompts = PromptSet()
    elif isinstance(prompts_spec, str):
        prompts = load_prompt_set(_resolve(prompts_spec, base))
    else:
        prompts = PromptSet.from_dict(prompts_spec)
    if d.get("prompt_count") is not None:
        prompts = prompts.with_prompt_count(int(d["prompt_count"]))

    if analyzer_id == "lexicon":
        analyzer = LexiconAnalyzer(lex, smoothing)
    elif analyzer_id == "llm":
        analyzer = LlmAnalyzer(gateway, prompts.sentiment, smoothing)
    else:
        raise ConfigError(f"analyzer: unknown backend {analyzer_id!r}")
    rewriter = make_rewriter(rewriter_id, lex, gateway)

    thr = threshold if threshold is not None else d.get("threshold")
    if thr is not None:
        if isinstance(thr, bool) or not isinstance(thr, (int, float)):
            raise ConfigError(f"threshold: expected a number, got {thr!r}")
        thr = float(thr)
    det = DetectorConfig(
        analyzer=analyzer,
        rewriter=rewriter,
        prompts=prompts,
        metric=metric or d.get("metric", "sdc"),
        threshold=thr,
        with_sdp=d.get("with_sdp"),
        sdp_on_rewrite=bool(d.get("sdp_on_rewrite", True)),
    )
    return Pipeline(det, gateway, lex)


def load_pipeline(path: Union[str, Path], **overrides) -> Pipeline:
    path = Path(path)
    return build_pipeline(read_json(path), path.parent, **overrides)


def with_prompt_count(p: Pipeline, n: int) -> Pipeline:
    return Pipeline(replace(p.detector, prompts=p.detector.prompts.with_prompt_count(n)), p.gateway, p.lexicon)


def uses_network(p: Pipeline) -> Tuple[bool, int]:
    """(whether any backend talks to the gateway, its in-flight cap)."""
    if p.gateway is None:
        return False, 0
    live = p.detector.analyzer.backend_id == "llm" or p.detector.rewriter.backend_id == "llm"
    return live, p.gateway.cfg.max_in_flight
