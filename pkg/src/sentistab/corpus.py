"""Text samples, JSONL corpora, short-text aggregation and length buckets.

JSONL schema, one object per line::

    {"id": "...", "text": "...", "label": "human|llm|unknown", "source": "...", "domain": "..."}

``id`` and ``text`` are required, ``label`` defaults to ``unknown``; other keys
are ignored on load. Word counts always use :func:`sentistab.sentiment.tokenize`.
"""

from __future__ import annotations

import io
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, TextIO, Union

from . import hashrank
from .errors import DataError, DuplicateId, MixedLabels, ParseError
from .sentiment import ValenceLexicon, default_lexicon, word_count

LABELS = ("human", "llm", "unknown")
DOMAINS = ("news", "code", "essay", "paper", "review", "other")


@dataclass(frozen=True)
class TextSample:
    id: str
    text: str
    label: str = "unknown"
    source: Optional[str] = None
    domain: Optional[str] = None

    def __post_init__(self):
        if self.label not in LABELS:
            raise DataError(f"sample {self.id!r}: label must be one of {LABELS}, got {self.label!r}")
        if self.domain is not None and self.domain not in DOMAINS:
            raise DataError(f"sample {self.id!r}: domain must be one of {DOMAINS}, got {self.domain!r}")

    @property
    def word_count(self) -> int:
        return word_count(self.text)

    def to_dict(self) -> dict:
        d = {"id": self.id, "text": self.text, "label": self.label}
        if self.source is not None:
            d["source"] = self.source
        if self.domain is not None:
            d["domain"] = self.domain
        return d


class Corpus:
    def __init__(self, samples: Iterable[TextSample] = ()):
        self.samples = tuple(samples)
        seen = set()
        for s in self.samples:
            if s.id in seen:
                raise DuplicateId(s.id)
            seen.add(s.id)

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __eq__(self, other):
        return isinstance(other, Corpus) and self.samples == other.samples

    def manifest(self) -> dict:
        return {
            "total": len(self.samples),
            "label": dict(sorted(Counter(s.label for s in self.samples).items())),
            "domain": dict(sorted(Counter(s.domain or "unspecified" for s in self.samples).items())),
        }

    def by_label(self, label: str) -> List[TextSample]:
        return [s for s in self.samples if s.label == label]


def _sample_from_obj(obj, lineno: int) -> TextSample:
    if not isinstance(obj, dict):
        raise ParseError(lineno, "expected a JSON object")
    for key in ("id", "text"):
        if key not in obj:
            raise ParseError(lineno, f"missing {key!r}")
    if not isinstance(obj["text"], str):
        raise ParseError(lineno, "'text' must be a string")
    if not isinstance(obj["id"], (str, int)) or isinstance(obj["id"], bool):
        raise ParseError(lineno, "'id' must be a string")
    try:
        return TextSample(
            id=str(obj["id"]),
            text=obj["text"],
            label=obj.get("label", "unknown"),
            source=obj.get("source"),
            domain=obj.get("domain"),
        )
    except DataError as exc:
        raise ParseError(lineno, str(exc)) from None


def read_jsonl(f: TextIO) -> Corpus:
    samples = []
    seen = set()
    for lineno, line in enumerate(f, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except ValueError as exc:
            raise ParseError(lineno, f"invalid JSON ({exc})") from None
        s = _sample_from_obj(obj, lineno)
        if s.id in seen:
            raise DuplicateId(s.id)
        seen.add(s.id)
        samples.append(s)
    return Corpus(samples)


def load_jsonl(path: Union[str, Path]) -> Corpus:
    with open(path, encoding="utf-8") as f:
        return read_jsonl(f)


def dumps_jsonl(corpus: Iterable[TextSample]) -> str:
    buf = io.StringIO()
    for s in corpus:
        buf.write(json.dumps(s.to_dict(), ensure_ascii=False))
        buf.write("\n")
    return buf.getvalue()


def dump_jsonl(corpus: Iterable[TextSample], path: Union[str, Path]):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps_jsonl(corpus))


def _common(values):
    vals = set(values)
    return vals.pop() if len(vals) == 1 else None


def _join(group: Sequence[TextSample]) -> TextSample:
    if len(group) == 1:
        return group[0]
    return TextSample(
        id="+".join(s.id for s in group),
        text="\n".join(s.text for s in group),
        label=group[0].label,
        source=_common(s.source for s in group),
        domain=_common(s.domain for s in group),
    )


def aggregate_short(samples: Sequence[TextSample], target_words: int, seed: int = 0) -> List[TextSample]:
    """Concatenate same-label samples until each aggregate has >= target_words words.

    Samples are visited in seeded hash-rank order; any leftover below the target
    becomes a final short aggregate.
    """
    if target_words < 1:
        raise ValueError("target_words must be >= 1")
    if len({s.label for s in samples}) > 1:
        raise MixedLabels(f"cannot aggregate mixed labels {sorted({s.label for s in samples})}")
    out: List[TextSample] = []
    group: List[TextSample] = []
    words = 0
    for i in hashrank.order(len(samples), lambda i: f"{seed}:agg:{i}"):
        group.append(samples[i])
        words += samples[i].word_count
        if words >= target_words:
            out.append(_join(group))
            group, words = [], 0
    if group:
        out.append(_join(group))
    return out


def aggregate_corpus(corpus: Corpus, target_words: int, seed: int = 0) -> Corpus:
    out: List[TextSample] = []
    for label in LABELS:
        group = corpus.by_label(label)
        if group:
            out.extend(aggregate_short(group, target_words, seed))
    return Corpus(out)


def length_bucket(corpus: Corpus, center_words: int, half_width: int = 10) -> Corpus:
    if center_words < 1:
        raise ValueError("center_words must be >= 1")
    return Corpus(s for s in corpus if abs(s.word_count - center_words) <= half_width)


# -- synthetic corpus -------------------------------------------------------

_PLAIN_WORDS = """
the a an of to in on at for with from by about as into through over under between
after before during around near across along behind beside within without this that
these those it its they them their we our you your he she his her one two three four
five six seven eight nine ten first second third several many some each every other
report meeting table window door street city river road building office room floor
wall page chapter section figure number list item file folder system process method
step stage phase result value measure unit sample record entry field column row line
morning evening week month year hour minute time date schedule plan route train bus
car bicycle station platform ticket map guide paper pen desk chair lamp shelf box
water stone wood metal glass paint color shape size length width height weight
is was are were has had have will would can could may might shall should
describes includes contains lists shows notes follows explains covers mentions
""".split()


def _neutral_pool(lex: ValenceLexicon) -> List[str]:
    return sorted({w for w in _PLAIN_WORDS if w not in lex})


def _valence_pool(lex: ValenceLexicon) -> List[str]:
    return sorted(t for t in lex.entries if lex.polarity(t) in (0, 2))


def _render(words: List[str], stream: hashrank.HashStream) -> str:
    sentences = []
    i = 0
    while i < len(words):
        n = 6 + stream.below(7)
        chunk = words[i:i + n]
        i += n
        chunk[0] = chunk[0].capitalize()
        sentences.append(" ".join(chunk) + ".")
    return " ".join(sentences)


def generate_synthetic(n_per_class: int, lex: Optional[ValenceLexicon] = None, seed: int = 0) -> Corpus:
    """Separable offline corpus.

    LLM-labeled texts use only words outside the lexicon. Human-labeled texts
    carry 3 to 6 strongly positive or negative lexicon words, so their
    lexicon distribution is never uniform and a neutralizing rewrite moves it.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    lex = lex if lex is not None else default_lexicon()
    plain = _neutral_pool(lex)
    charged = _valence_pool(lex)
    if len(plain) < 10 or not charged:
        raise DataError("lexicon leaves too few neutral or valence words for a synthetic corpus")
    samples = []
    for label in ("llm", "human"):
        for i in range(n_per_class):
            stream = hashrank.HashStream(seed, f"synth:{label}:{i}")
            words = [stream.choice(plain) for _ in range(20 + stream.below(21))]
            if label == "human":
                for _ in range(3 + stream.below(4)):
                    words.insert(stream.below(len(words) + 1), stream.choice(charged))
            samples.append(TextSample(
                id=f"synth-{label}-{i:04d}",
                text=_render(words, stream),
                label=label,
                source="synthetic",
                domain="other",
            ))
    return Corpus(samples)
