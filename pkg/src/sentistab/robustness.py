"""Seeded attack transforms: sentence-level paraphrase mixing and lexical edits.

Selections use :mod:`sentistab.hashrank` rather than a PRNG so the exact output
is reproducible from the documented hashing rule alone. Counts ``round(r * n)``
round half up.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import List, Tuple

from . import hashrank
from .errors import ConfigError, DataError, EmptyOriginal

ATTACK_KINDS = ("paraphrase_mix", "lexical_perturb")

_SENTENCE_END = re.compile(r"(?<=[.!?])(\s+)")
_WORD = re.compile(r"\S+")


@dataclass(frozen=True)
class AttackSpec:
    kind: str
    ratio: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ConfigError(f"attack kind must be one of {ATTACK_KINDS}, got {self.kind!r}")
        if not 0.0 <= self.ratio <= 1.0:
            raise ConfigError(f"attack ratio {self.ratio} outside [0, 1]")
        if not -(2 ** 63) <= self.seed < 2 ** 64:
            raise ConfigError("attack seed must fit in 64 bits")


def _split_with_separators(text: str) -> List[Tuple[str, str]]:
    parts = _SENTENCE_END.split(text)
    out = []
    for i in range(0, len(parts), 2):
        sentence = parts[i]
        sep = parts[i + 1] if i + 1 < len(parts) else ""
        if sentence:
            out.append((sentence, sep))
        elif out:
            # trailing whitespace after the final terminator
            prev, prev_sep = out[-1]
            out[-1] = (prev, prev_sep + sep)
    return out


def split_sentences(text: str) -> List[str]:
    """Split after ``.``, ``!`` or ``?`` when followed by whitespace or the end.

    Separating whitespace is dropped from the returned sentences; see
    :func:`join_sentences` for the exact inverse.
    """
    return [s for s, _ in _split_with_separators(text)]


def join_sentences(text: str, sentences: List[str]) -> str:
    """Reassemble ``sentences`` using the separators found in ``text``."""
    pieces = _split_with_separators(text)
    if len(pieces) != len(sentences):
        raise ValueError("sentence count does not match the template text")
    return "".join(s + sep for s, (_, sep) in zip(sentences, pieces))


def selected_sentences(n: int, ratio: float, seed: int) -> List[int]:
    k = hashrank.round_half_up(ratio * n)
    return hashrank.smallest(n, k, lambda i: f"{seed}:{i}")


def paraphrase_mix(original: str, paraphrased: str, ratio: float, seed: int) -> str:
    """Swap round(ratio * n) sentences of ``original`` for their paraphrases.

    Sentence i is replaced by paraphrase sentence i, or by the last paraphrase
    sentence when the paraphrase is shorter.
    """
    if not 0.0 <= ratio <= 1.0:
        raise ConfigError(f"ratio {ratio} outside [0, 1]")
    orig = _split_with_separators(original)
    if not original.strip():
        raise EmptyOriginal("original text has no sentences")
    para = split_sentences(paraphrased)
    chosen = selected_sentences(len(orig), ratio, seed)
    if chosen and not para:
        raise DataError("paraphrase has no sentences")
    out = [s for s, _ in orig]
    for i in chosen:
        out[i] = para[min(i, len(para) - 1)]
    return "".join(s + sep for s, (_, sep) in zip(out, orig))


# -- lexical perturbation ---------------------------------------------------

EDIT_SWAP, EDIT_DELETE, EDIT_DUPLICATE = 0, 1, 2


def _swap_mid(word: str) -> str:
    if len(word) < 2:
        return word
    m = len(word) // 2
    return word[: m - 1] + word[m] + word[m - 1] + word[m + 1:]


def perturbation_plan(n_words: int, rate: float, seed: int) -> List[Tuple[int, int]]:
    """(word index, edit) pairs, edit = rank mod 3, in ascending index order."""
    k = hashrank.round_half_up(rate * n_words)
    key = lambda i: f"{seed}:w:{i}"  # noqa: E731
    return [(i, hashrank.rank(key(i)) % 3) for i in hashrank.smallest(n_words, k, key)]


def lexical_perturb(text: str, rate: float, seed: int) -> str:
    """Apply one swap / delete / duplicate edit to round(rate * n) words.

    Words are maximal non-whitespace runs. A swap exchanges the two characters
    around the word's midpoint (``len // 2``), a deletion drops the word with
    the whitespace before it (after it, for the first word), and a duplication
    repeats the word after a single space.
    """
    if not 0.0 <= rate <= 1.0:
        raise ConfigError(f"rate {rate} outside [0, 1]")
    spans = list(_WORD.finditer(text))
    if not spans:
        return text
    words = [m.group() for m in spans]
    before = [text[:spans[0].start()]] + [text[a.end():b.start()] for a, b in zip(spans, spans[1:])]
    lead, trail = before[0], text[spans[-1].end():]
    plan = perturbation_plan(len(words), rate, seed)
    if not plan:
        return text
    keep = [True] * len(words)
    for i, edit in plan:
        if edit == EDIT_SWAP:
            words[i] = _swap_mid(words[i])
        elif edit == EDIT_DUPLICATE:
            words[i] = words[i] + " " + words[i]
        else:
            keep[i] = False
    kept = [i for i in range(len(words)) if keep[i]]
    # the first surviving word takes the original leading whitespace
    body = "".join((before[i] if n else "") + words[i] for n, i in enumerate(kept))
    return lead + body + trail
