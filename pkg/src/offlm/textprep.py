"""Social-media text normalization: placeholder substitution, emoji
naming, hashtag segmentation, and the short-instance filter.

All operations are pure; Lexicon and emoji mappings are immutable after
load, so everything here is safe to call concurrently.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional

from .errors import DataError

_URL_RE = re.compile(r"https?://\S+|www\.\S+")
_MENTION_RE = re.compile(r"@[A-Za-z0-9_]+")
_HASHTAG_RE = re.compile(r"#[A-Za-z0-9]+$")

# score ties closer than this are broken toward fewer words
_TIE_EPS = 1e-9


@dataclass
class PrepConfig:
    url_placeholder: str = "URL"
    user_placeholder: str = "USER"
    emoji_map_path: Optional[str] = None
    lexicon_path: Optional[str] = None
    min_words: int = 2
    min_chars: int = 18
    # exponent base of the unknown-word penalty: log(1 / (total * base^len))
    unknown_penalty_base: float = 10.0

    def __post_init__(self):
        if not self.url_placeholder or not self.user_placeholder:
            raise DataError("placeholders must be non-empty")
        if self.min_words < 1 or self.min_chars < 0:
            raise DataError("min_words must be >= 1 and min_chars >= 0")


class Lexicon:
    """word -> count map used to score hashtag segmentations."""

    def __init__(self, counts: dict[str, int]):
        for word, n in counts.items():
            if n <= 0:
                raise DataError(f"non-positive count for {word!r}")
        self.counts = dict(counts)
        self.total = sum(counts.values())

    @classmethod
    def load(cls, path) -> "Lexicon":
        counts: dict[str, int] = {}
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise DataError(f"{path}:{lineno}: expected 'word<TAB>count'")
                try:
                    counts[parts[0]] = int(parts[1])
                except ValueError as e:
                    raise DataError(f"{path}:{lineno}: bad count {parts[1]!r}") from e
        return cls(counts)

    def score(self, word: str, penalty_base: float = 10.0) -> float:
        total = max(self.total, 1)
        if word in self.counts:
            return math.log(self.counts[word] / total)
        return -math.log(total) - len(word) * math.log(penalty_base)


def load_emoji_map(path) -> dict[str, str]:
    """TSV of emoji<TAB>:name:, longest-sequence-first at lookup time."""
    mapping: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise DataError(f"{path}:{lineno}: expected 'emoji<TAB>:name:'")
            mapping[parts[0]] = parts[1]
    return mapping


def normalize(text: str, cfg: PrepConfig) -> str:
    """Replace URLs/mentions with placeholders and collapse whitespace."""
    text = _URL_RE.sub(cfg.url_placeholder, text)
    text = _MENTION_RE.sub(cfg.user_placeholder, text)
    return " ".join(text.split())


def demojize(text: str, mapping: dict[str, str]) -> str:
    """Replace each mapped emoji sequence by its name token, padded with
    single spaces. Unmapped emoji pass through; text without any mapped
    emoji comes back unchanged."""
    if not mapping:
        return text
    keys = sorted(mapping, key=len, reverse=True)
    pattern = re.compile("|".join(re.escape(k) for k in keys))
    if not pattern.search(text):
        return text
    replaced = pattern.sub(lambda m: f" {mapping[m.group(0)]} ", text)
    return " ".join(replaced.split())


def segment_hashtag(tag: str, lexicon: Lexicon,
                    penalty_base: float = 10.0) -> list[str]:
    """Split a '#tag' into words by maximum-score dynamic programming.

    A segmentation scores the sum of per-word log probabilities, with
    out-of-lexicon words penalized exponentially in their length. Ties
    break toward fewer words; worst case the whole tag comes back as one
    piece.
    """
    body = tag[1:] if tag.startswith("#") else tag
    body = body.lower()
    if not body:
        return []
    n = len(body)
    # best[i] = (score, words, split_start) for body[:i]
    best: list[tuple[float, int, int]] = [(0.0, 0, 0)] + [(-math.inf, 0, 0)] * n
    for end in range(1, n + 1):
        for start in range(end):
            prev_score, prev_words, _ = best[start]
            if prev_score == -math.inf:
                continue
            score = prev_score + lexicon.score(body[start:end], penalty_base)
            words = prev_words + 1
            cur = best[end]
            if score > cur[0] + _TIE_EPS or (
                    abs(score - cur[0]) <= _TIE_EPS and words < cur[1]):
                best[end] = (score, words, start)
    pieces: list[str] = []
    end = n
    while end > 0:
        start = best[end][2]
        pieces.append(body[start:end])
        end = start
    pieces.reverse()
    return pieces


def keep_instance(text: str, cfg: PrepConfig) -> bool:
    """True iff the text has at least min_words words and min_chars
    characters (both boundaries inclusive)."""
    return len(text.split()) >= cfg.min_words and len(text) >= cfg.min_chars


def prepare(text: str, cfg: PrepConfig, lexicon: Optional[Lexicon] = None,
            mapping: Optional[dict[str, str]] = None) -> str:
    """Full pipeline: normalize, demojize, segment #hashtags, re-collapse
    whitespace. Deterministic and idempotent."""
    text = normalize(text, cfg)
    if mapping:
        text = demojize(text, mapping)
    if lexicon is not None:
        out = []
        for token in text.split():
            if _HASHTAG_RE.fullmatch(token):
                out.extend(segment_hashtag(token, lexicon, cfg.unknown_penalty_base))
            else:
                out.append(token)
        text = " ".join(out)
    return " ".join(text.split())
