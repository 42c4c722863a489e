"""Low-emotional rewriting, inverse-pair round trips and stability records.

Prompt sets are plain JSON::

    {
      "ler":   [{"id": "straightforward", "text": "..."}, ...],
      "pairs": [{"id": "person", "forward": "...", "inverse": "..."}, ...],
      "sentiment": "template containing {text} exactly once"
    }

``pairs`` and ``sentiment`` are optional.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple, Union

from .core import StabilityRecord
from .errors import ConfigError, EmptyResult, SentistabError, UnknownPair, UnknownPrompt
from .sentiment import SentimentPrompt, ValenceLexicon, default_lexicon

LER_LIBRARY: Tuple[Tuple[str, str], ...] = (
    ("straightforward", "Please rewrite this more straightforwardly."),
    ("machine_tone", "Polish this in a machine-like objective tone."),
    ("neutral_register", "Rewrite this text in a neutral, matter-of-fact register."),
    ("low_intensity", "Lower the emotional intensity of this text while keeping its meaning."),
    ("objective", "Rewrite this paragraph objectively, without emotionally charged words."),
    ("factual_report", "Restate this text plainly, as a factual report."),
    ("calm_impersonal", "Rewrite this in a calm, impersonal tone without changing the content."),
    ("tone_down", "Tone down any strong opinions in this text while preserving what it says."),
    ("unemotional_summary", "Rewrite this as an unemotional account of exactly the same content."),
)
DEFAULT_PROMPT_COUNT = 3

PAIR_LIBRARY: Tuple[Tuple[str, str, str], ...] = (
    (
        "person",
        "Convert the text from first person to third person.",
        "Convert the text from third person to first person.",
    ),
    (
        "abbreviation",
        "Expand all abbreviations in the text.",
        "Abbreviate words in the text where it is natural.",
    ),
)

SENTINEL = "x17"

_TOKEN = re.compile(r"[^\W_]+")


@dataclass(frozen=True)
class PromptSet:
    ler: Tuple[Tuple[str, str], ...] = LER_LIBRARY[:DEFAULT_PROMPT_COUNT]
    pairs: Tuple[Tuple[str, str, str], ...] = PAIR_LIBRARY[:1]
    sentiment: SentimentPrompt = field(default_factory=SentimentPrompt)

    def __post_init__(self):
        ler = tuple((str(i), str(t)) for i, t in self.ler)
        pairs = tuple((str(i), str(f), str(v)) for i, f, v in self.pairs)
        if not ler:
            raise ConfigError("prompt set needs at least one LER prompt")
        ids = [i for i, _ in ler]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate LER prompt ids: {ids}")
        if any(not t.strip() for _, t in ler):
            raise ConfigError("LER prompt text must be non-empty")
        pids = [i for i, _, _ in pairs]
        if len(set(pids)) != len(pids):
            raise ConfigError(f"duplicate pair ids: {pids}")
        if any(not f.strip() or not v.strip() for _, f, v in pairs):
            raise ConfigError("inverse pairs need both directions non-empty")
        object.__setattr__(self, "ler", ler)
        object.__setattr__(self, "pairs", pairs)

    @property
    def size(self) -> int:
        return len(self.ler)

    def instruction(self, prompt_id: str) -> str:
        for pid, text in self.ler:
            if pid == prompt_id:
                return text
        raise UnknownPrompt(f"unknown LER prompt {prompt_id!r}")

    def pair(self, pair_id: str) -> Tuple[str, str]:
        for pid, fwd, inv in self.pairs:
            if pid == pair_id:
                return fwd, inv
        raise UnknownPair(f"unknown inverse pair {pair_id!r}")

    def with_prompt_count(self, n: int) -> "PromptSet":
        """The first ``n`` LER prompts, topped up from the built-in library."""
        if n < 1:
            raise ConfigError("prompt count must be >= 1")
        ler = list(self.ler[:n])
        have = {i for i, _ in ler}
        for pid, text in LER_LIBRARY:
            if len(ler) >= n:
                break
            if pid not in have:
                ler.append((pid, text))
        if len(ler) < n:
            raise ConfigError(f"only {len(ler)} LER prompts available, {n} requested")
        return PromptSet(tuple(ler), self.pairs, self.sentiment)

    def to_dict(self) -> dict:
        return {
            "ler": [{"id": i, "text": t} for i, t in self.ler],
            "pairs": [{"id": i, "forward": f, "inverse": v} for i, f, v in self.pairs],
            "sentiment": self.sentiment.template,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PromptSet":
        try:
            ler = tuple((p["id"], p["text"]) for p in d["ler"])
            pairs = tuple((p["id"], p["forward"], p["inverse"]) for p in d.get("pairs", []))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"prompts: malformed entry ({exc!r})") from None
        sentiment = SentimentPrompt(d["sentiment"]) if d.get("sentiment") else SentimentPrompt()
        return cls(ler, pairs, sentiment)


def load_prompt_set(path: Union[str, Path]) -> PromptSet:
    with open(path, encoding="utf-8") as f:
        return PromptSet.from_dict(json.load(f))


# -- rewriters --------------------------------------------------------------

def _rewrite_message(instruction: str, text: str) -> str:
    return f"{instruction}\nReply with only the rewritten text.\n\nText:\n{text}"


class IdentityRewriter:
    backend_id = "mock_identity"

    def rewrite(self, text: str, instruction: str) -> str:
        return text

    def round_trip(self, text: str, forward: str, inverse: str) -> str:
        return text


class NeutralizingRewriter:
    """Deletes every lexicon token. Round trips are exact."""

    backend_id = "mock_neutralizing"

    def __init__(self, lexicon: Optional[ValenceLexicon] = None):
        self.lexicon = lexicon if lexicon is not None else default_lexicon()

    def rewrite(self, text: str, instruction: str) -> str:
        hit = False

        def drop(m):
            nonlocal hit
            if m.group().lower() in self.lexicon:
                hit = True
                return ""
            return m.group()

        out = _TOKEN.sub(drop, text)
        if not hit:
            return text
        return re.sub(r"\s+", " ", out).strip()

    def round_trip(self, text: str, forward: str, inverse: str) -> str:
        return text


class LossyPairRewriter:
    """Identity LER; the forward map replaces lexicon tokens with a sentinel and the inverse is identity."""

    backend_id = "mock_lossy_pair"

    def __init__(self, lexicon: Optional[ValenceLexicon] = None):
        self.lexicon = lexicon if lexicon is not None else default_lexicon()

    def rewrite(self, text: str, instruction: str) -> str:
        return text

    def round_trip(self, text: str, forward: str, inverse: str) -> str:
        return _TOKEN.sub(lambda m: SENTINEL if m.group().lower() in self.lexicon else m.group(), text)


class LlmRewriter:
    backend_id = "llm"

    def __init__(self, gateway):
        self.gateway = gateway

    def rewrite(self, text: str, instruction: str) -> str:
        out = self.gateway.chat([("user", _rewrite_message(instruction, text))])
        if not out.strip():
            raise EmptyResult(f"empty rewrite for instruction {instruction!r}")
        return out

    def round_trip(self, text: str, forward: str, inverse: str) -> str:
        return self.rewrite(self.rewrite(text, forward), inverse)


MOCK_BACKENDS = ("mock_identity", "mock_neutralizing", "mock_lossy_pair")


def make_rewriter(backend: str, lexicon: Optional[ValenceLexicon] = None, gateway=None):
    if backend == "mock_identity":
        return IdentityRewriter()
    if backend == "mock_neutralizing":
        return NeutralizingRewriter(lexicon)
    if backend == "mock_lossy_pair":
        return LossyPairRewriter(lexicon)
    if backend == "llm":
        if gateway is None:
            raise ConfigError("the llm rewriter needs a gateway")
        return LlmRewriter(gateway)
    raise ConfigError(f"unknown rewriter backend {backend!r}")


def rewrite(text: str, prompt_id: str, rw, prompts: PromptSet) -> str:
    return rw.rewrite(text, prompts.instruction(prompt_id))


def round_trip(text: str, pair_id: str, rw, prompts: PromptSet) -> str:
    fwd, inv = prompts.pair(pair_id)
    return rw.round_trip(text, fwd, inv)


def _annotate(exc: SentistabError, where: str) -> SentistabError:
    exc.args = (f"[{where}] {exc}",)
    return exc


def build_stability_record(
    text: str,
    prompts: PromptSet,
    rw,
    analyzer,
    with_round_trips: bool = False,
    sdp_on_rewrite: bool = True,
) -> StabilityRecord:
    """Analyze ``text`` and each of its LER rewrites (and optionally round trips).

    With ``sdp_on_rewrite`` the k-th inverse pair is applied to the rewrite made
    by LER prompt ``k mod I``; otherwise it is applied to the original text.
    """
    original = analyzer.analyze(text)
    rewritten = []
    rewrites = []
    for pid, instruction in prompts.ler:
        try:
            out = rw.rewrite(text, instruction)
            rewrites.append((pid, analyzer.analyze(out)))
        except SentistabError as exc:
            raise _annotate(exc, f"prompt {pid}")
        rewritten.append(out)

    round_trips = []
    if with_round_trips:
        if not prompts.pairs:
            raise ConfigError("SDP requested but the prompt set has no inverse pairs")
        for k, (pair_id, fwd, inv) in enumerate(prompts.pairs):
            base = rewritten[k % len(rewritten)] if sdp_on_rewrite else text
            try:
                rt = rw.round_trip(base, fwd, inv)
                round_trips.append((pair_id, analyzer.analyze(rt)))
            except SentistabError as exc:
                raise _annotate(exc, f"pair {pair_id}")
    return StabilityRecord(original, tuple(rewrites), tuple(round_trips))
