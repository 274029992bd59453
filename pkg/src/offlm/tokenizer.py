"""WordPiece vocabulary handling, sequence construction, and a
deterministic desk-scale vocabulary trainer.

Vocab file convention: UTF-8, one token per line, id = zero-based line
number. [PAD] must sit on line 0 and all five special tokens must be
present.
"""

from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ConfigError, DataError

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP, MASK)
CONTINUATION_PREFIX = "##"

# words longer than this fall straight to [UNK]
MAX_WORD_CHARS = 100


class Vocabulary:
    """Immutable token <-> id table with the five special tokens."""

    def __init__(self, tokens: Sequence[str]):
        self.tokens = list(tokens)
        self.token_to_id = {}
        for i, tok in enumerate(self.tokens):
            if tok in self.token_to_id:
                raise DataError(f"duplicate token {tok!r} at line {i + 1}")
            self.token_to_id[tok] = i
        for special in SPECIAL_TOKENS:
            if special not in self.token_to_id:
                raise DataError(f"missing special token {special}")
        if self.token_to_id[PAD] != 0:
            raise DataError(f"{PAD} must have id 0, found id {self.token_to_id[PAD]}")
        self.pad_id = 0
        self.unk_id = self.token_to_id[UNK]
        self.cls_id = self.token_to_id[CLS]
        self.sep_id = self.token_to_id[SEP]
        self.mask_id = self.token_to_id[MASK]
        self.special_ids = frozenset(self.token_to_id[s] for s in SPECIAL_TOKENS)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def id_of(self, token: str) -> int:
        return self.token_to_id[token]

    def token_of(self, token_id: int) -> str:
        if not 0 <= token_id < len(self.tokens):
            raise DataError(f"token id {token_id} out of range [0, {len(self.tokens)})")
        return self.tokens[token_id]

    def non_special_ids(self) -> list[int]:
        return [i for i in range(len(self.tokens)) if i not in self.special_ids]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for tok in self.tokens:
                f.write(tok + "\n")


@dataclass
class TokenizedSequence:
    """Token ids framed with [CLS]/[SEP] and padded to a fixed length.

    `original_length` is the word-piece count before truncation;
    attention_mask is 1 on real tokens, 0 exactly on padding.
    """

    ids: list[int]
    attention_mask: list[int]
    original_length: int


def load_vocab(path) -> Vocabulary:
    tokens = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            tokens.append(line.rstrip("\n"))
    if tokens and tokens[-1] == "":
        tokens.pop()
    return Vocabulary(tokens)


def _clean_word(word: str) -> str:
    """Lowercase and strip accents (uncased convention)."""
    decomposed = unicodedata.normalize("NFD", word.lower())
    return "".join(c for c in decomposed if unicodedata.category(c) != "Mn")


def _wordpiece(word: str, vocab: Vocabulary) -> list[str] | None:
    """Greedy longest-match-first segmentation; None if unsegmentable."""
    pieces = []
    start = 0
    while start < len(word):
        end = len(word)
        found = None
        while start < end:
            piece = word[start:end]
            if start > 0:
                piece = CONTINUATION_PREFIX + piece
            if piece in vocab:
                found = piece
                break
            end -= 1
        if found is None:
            return None
        pieces.append(found)
        start = end
    return pieces


def tokenize(text: str, vocab: Vocabulary, max_len: int) -> TokenizedSequence:
    """Whitespace pre-split, greedy WordPiece per word, frame, pad.

    Unmatched or over-long words become a single [UNK]. The piece stream
    is tail-truncated to max_len - 2 before framing with [CLS]/[SEP].
    """
    if max_len < 3:
        raise ConfigError(f"max_len must be >= 3, got {max_len}")
    pieces: list[str] = []
    for word in text.split():
        word = _clean_word(word)
        if not word:
            continue
        segmented = _wordpiece(word, vocab) if len(word) <= MAX_WORD_CHARS else None
        pieces.extend(segmented if segmented is not None else [UNK])
    original_length = len(pieces)
    pieces = pieces[: max_len - 2]
    ids = [vocab.cls_id] + [vocab.id_of(p) for p in pieces] + [vocab.sep_id]
    attention = [1] * len(ids)
    while len(ids) < max_len:
        ids.append(vocab.pad_id)
        attention.append(0)
    return TokenizedSequence(ids=ids, attention_mask=attention,
                             original_length=original_length)


def detokenize(ids: Sequence[int], vocab: Vocabulary) -> str:
    """Inverse of tokenize up to whitespace normalization: drop specials,
    glue continuation pieces, space-separate words."""
    words: list[str] = []
    for token_id in ids:
        token = vocab.token_of(int(token_id))
        if token in SPECIAL_TOKENS:
            continue
        if token.startswith(CONTINUATION_PREFIX) and words:
            words[-1] += token[len(CONTINUATION_PREFIX):]
        else:
            words.append(token)
    return " ".join(words)


def _word_counts(corpus: Iterable[str]) -> Counter:
    counts: Counter = Counter()
    for text in corpus:
        for word in text.split():
            word = _clean_word(word)
            if word:
                counts[word] += 1
    return counts


def build_vocab(corpus: Iterable[str], target_size: int,
                min_frequency: int = 1) -> Vocabulary:
    """Frequency-driven trainer: seed with specials plus every observed
    character (in both word-initial and "##" continuation form), then
    repeatedly merge the most frequent adjacent pair until target_size.

    Deterministic: ties break on the lexicographically smallest merged
    token, then on the pair itself.
    """
    counts = _word_counts(corpus)
    if not counts:
        raise DataError("empty corpus")

    alphabet = sorted({c for word in counts for c in word})
    seed: list[str] = list(SPECIAL_TOKENS)
    for c in alphabet:
        seed.append(c)
        seed.append(CONTINUATION_PREFIX + c)
    if target_size <= len(seed):
        raise ConfigError(
            f"target_size {target_size} not above the seed vocabulary "
            f"of specials plus both character forms ({len(seed)})")

    tokens = list(seed)
    present = set(tokens)
    # each word as its current symbol sequence
    words = {
        word: [word[0]] + [CONTINUATION_PREFIX + c for c in word[1:]]
        for word in counts
    }

    while len(tokens) < target_size:
        pair_counts: Counter = Counter()
        for word, symbols in words.items():
            n = counts[word]
            for left, right in zip(symbols, symbols[1:]):
                pair_counts[(left, right)] += n
        best = None
        for (left, right), n in pair_counts.items():
            if n < min_frequency:
                continue
            merged = left + right[len(CONTINUATION_PREFIX):]
            if merged in present:
                continue
            key = (-n, merged, left, right)
            if best is None or key < best[0]:
                best = (key, left, right, merged)
        if best is None:
            break
        _, left, right, merged = best
        tokens.append(merged)
        present.add(merged)
        for word, symbols in words.items():
            i = 0
            while i < len(symbols) - 1:
                if symbols[i] == left and symbols[i + 1] == right:
                    symbols[i: i + 2] = [merged]
                else:
                    i += 1
    return Vocabulary(tokens)
