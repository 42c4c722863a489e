"""Three-class sentiment analyzers.

Two backends produce a :class:`~sentistab.core.SentimentDistribution`:

* :class:`LexiconAnalyzer` counts lexicon hits per class with a Laplace prior.
  Deterministic and offline.
* :class:`LlmAnalyzer` asks a chat model for the three probabilities.
"""

from __future__ import annotations

import functools
import json
import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

from .core import SentimentDistribution, SmoothingConfig, clamp_normalize
from .errors import ConfigError, DataError, MalformedReply

_TOKEN = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list:
    """Lowercase and split on every run of non-alphanumeric characters."""
    return _TOKEN.findall(text.lower())


def word_count(text: str) -> int:
    return len(tokenize(text))


@dataclass(frozen=True)
class ValenceLexicon:
    entries: Mapping[str, float]
    pos_threshold: float = 0.1
    neg_threshold: float = -0.1
    alpha: float = 1.0

    def __post_init__(self):
        if not self.neg_threshold < 0 < self.pos_threshold:
            raise ConfigError("lexicon thresholds must satisfy neg < 0 < pos")
        if not self.alpha > 0:
            raise ConfigError("lexicon alpha must be > 0")
        for tok, v in self.entries.items():
            if tokenize(tok) != [tok]:
                raise DataError(f"lexicon token {tok!r} is not a single lowercase token")
            if not -1.0 <= v <= 1.0:
                raise DataError(f"lexicon valence for {tok!r} outside [-1, 1]: {v}")
        object.__setattr__(self, "entries", dict(self.entries))

    def __contains__(self, token: str) -> bool:
        return token in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def polarity(self, token: str) -> Optional[int]:
        """Class index 0/1/2 for a lexicon token, None if unmatched."""
        v = self.entries.get(token)
        if v is None:
            return None
        if v > self.pos_threshold:
            return 2
        if v < self.neg_threshold:
            return 0
        return 1

    def with_params(self, **kw) -> "ValenceLexicon":
        params = dict(pos_threshold=self.pos_threshold, neg_threshold=self.neg_threshold, alpha=self.alpha)
        params.update(kw)
        return ValenceLexicon(self.entries, **params)


def parse_lexicon(lines, source: str = "<lexicon>", **params) -> ValenceLexicon:
    entries: Dict[str, float] = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{source}:{lineno}: expected token<TAB>valence")
        tok = parts[0].strip().lower()
        try:
            v = float(parts[1])
        except ValueError:
            raise DataError(f"{source}:{lineno}: bad valence {parts[1]!r}") from None
        if not math.isfinite(v) or not -1.0 <= v <= 1.0:
            raise DataError(f"{source}:{lineno}: valence {v} outside [-1, 1]")
        if tok in entries:
            raise DataError(f"{source}:{lineno}: duplicate token {tok!r}")
        entries[tok] = v
    return ValenceLexicon(entries, **params)


def load_lexicon(path: Union[str, Path], **params) -> ValenceLexicon:
    with open(path, encoding="utf-8") as f:
        return parse_lexicon(f, source=str(path), **params)


@functools.lru_cache(maxsize=None)
def default_lexicon() -> ValenceLexicon:
    """The bundled ~2.9k-entry English valence list."""
    text = resources.files("sentistab").joinpath("data/valence.tsv").read_text(encoding="utf-8")
    return parse_lexicon(text.splitlines(), source="valence.tsv")


def lexicon_analyze(
    text: Union[str, Sequence[str]],
    lex: ValenceLexicon,
    smoothing: SmoothingConfig = SmoothingConfig(),
) -> SentimentDistribution:
    tokens = tokenize(text) if isinstance(text, str) else text
    counts = [0, 0, 0]
    for tok in tokens:
        cls = lex.polarity(tok)
        if cls is not None:
            counts[cls] += 1
    a = lex.alpha
    n = sum(counts)
    return clamp_normalize([(c + a) / (n + 3 * a) for c in counts], smoothing)


class LexiconAnalyzer:
    backend_id = "lexicon"

    def __init__(self, lexicon: Optional[ValenceLexicon] = None, smoothing: SmoothingConfig = SmoothingConfig()):
        self.lexicon = lexicon if lexicon is not None else default_lexicon()
        self.smoothing = smoothing

    def analyze(self, text: str) -> SentimentDistribution:
        return lexicon_analyze(text, self.lexicon, self.smoothing)


# -- LLM backend ------------------------------------------------------------

PLACEHOLDER = "{text}"

DEFAULT_SENTIMENT_TEMPLATE = (
    "Analyze the sentiment of the text below. Estimate the probability that it is "
    "negative, neutral and positive. Reply with only a JSON array of three numbers "
    "in the order [negative, neutral, positive] that sum to 1.\n\nText:\n{text}"
)

REPAIR_INSTRUCTION = (
    "Your reply could not be parsed. Reply again with only a JSON array of three "
    "numbers in the order [negative, neutral, positive], for example [0.1, 0.7, 0.2]."
)


@dataclass(frozen=True)
class SentimentPrompt:
    template: str = DEFAULT_SENTIMENT_TEMPLATE
    expected_format: str = "[negative, neutral, positive]"

    def __post_init__(self):
        if self.template.count(PLACEHOLDER) != 1:
            raise ConfigError(f"sentiment template must contain {PLACEHOLDER} exactly once")

    def render(self, text: str) -> str:
        return self.template.replace(PLACEHOLDER, text)


_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_LABELED = {
    name: re.compile(rf"\b{name}\w*\b\s*[\"']?\s*[:=]\s*({_NUMBER})", re.IGNORECASE)
    for name in ("neg", "neu", "pos")
}


def _triple(values) -> Optional[Tuple[float, float, float]]:
    try:
        vals = tuple(float(v) for v in values)
    except (TypeError, ValueError):
        return None
    if len(vals) != 3 or not all(math.isfinite(v) and v >= 0 for v in vals):
        return None
    return vals


def parse_sentiment_reply(reply: str) -> Tuple[float, float, float]:
    """Pull (neg, neu, pos) out of a model reply.

    Accepts a JSON array or object, labeled lines such as ``neutral: 0.7``, or
    a bare comma separated triple.
    """
    text = reply.strip()
    if text.startswith("```"):
        text = text.strip("`").partition("\n")[2] or text.strip("`")
    try:
        obj = json.loads(text)
    except ValueError:
        obj = None
    if isinstance(obj, list):
        vals = _triple(obj)
        if vals:
            return vals
    elif isinstance(obj, dict):
        picked = {}
        for key, val in obj.items():
            for name in ("neg", "neu", "pos"):
                if str(key).lower().startswith(name):
                    picked[name] = val
        vals = _triple(picked.get(n) for n in ("neg", "neu", "pos"))
        if vals and len(picked) == 3:
            return vals

    labeled = [_LABELED[n].search(text) for n in ("neg", "neu", "pos")]
    if all(labeled):
        vals = _triple(m.group(1) for m in labeled)
        if vals:
            return vals

    numbers = re.findall(_NUMBER, text)
    if len(numbers) == 3:
        vals = _triple(numbers)
        if vals:
            return vals
    raise MalformedReply(f"could not extract three non-negative numbers from {reply[:120]!r}")


class LlmAnalyzer:
    backend_id = "llm"

    def __init__(self, gateway, prompt: SentimentPrompt = SentimentPrompt(), smoothing: SmoothingConfig = SmoothingConfig()):
        self.gateway = gateway
        self.prompt = prompt
        self.smoothing = smoothing

    def analyze(self, text: str) -> SentimentDistribution:
        return llm_analyze(text, self.prompt, self.gateway, self.smoothing)


def llm_analyze(text: str, prompt: SentimentPrompt, gateway, smoothing: SmoothingConfig = SmoothingConfig()) -> SentimentDistribution:
    if not text.strip():
        raise DataError("cannot analyze empty text")
    first = [("user", prompt.render(text))]
    reply = gateway.chat(first)
    try:
        return clamp_normalize(parse_sentiment_reply(reply), smoothing)
    except MalformedReply:
        pass
    # one repair attempt, then surface the error
    retry = first + [("assistant", reply), ("user", REPAIR_INSTRUCTION)]
    return clamp_normalize(parse_sentiment_reply(gateway.chat(retry)), smoothing)
