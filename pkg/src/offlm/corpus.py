"""Scored-corpus ingestion, threshold-bin selection, labeled-dataset
loading, shuffled splits, and batch assembly.

Files are UTF-8 TSVs with a header row. Text fields may contain tabs
when quoted; parsing goes through the csv module so quoting round-trips.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError


@dataclass(frozen=True)
class ScoredInstance:
    id: str
    text: str
    score: float


@dataclass(frozen=True)
class LabeledInstance:
    id: str
    text: str
    label: str


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[float, ...]
    seed: int

    def __post_init__(self):
        if not self.ratios or any(r <= 0 for r in self.ratios):
            raise ConfigError("split ratios must be positive")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ConfigError(f"split ratios sum to {sum(self.ratios)}, not 1")


@dataclass
class Batch:
    ids: np.ndarray            # [B, max_len] int64 token ids
    attention_mask: np.ndarray  # [B, max_len] int64, 1 = real token
    labels: Optional[np.ndarray] = None  # per-example class ids or MLM targets
    instance_ids: tuple[str, ...] = ()

    def __post_init__(self):
        if self.ids.shape != self.attention_mask.shape:
            raise DataError("ids and attention_mask shapes differ")


def _read_rows(path, required: Sequence[str]) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f, delimiter="\t", quotechar='"')
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file, expected a header row")
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            raise DataError(f"{path}: header missing column(s) {missing}")
        for row in reader:
            yield reader.line_num, row


def load_scored(path, id_column: str = "id", text_column: str = "text",
                score_column: str = "average") -> list[ScoredInstance]:
    """Parse a scored TSV. Scores must lie in [0, 1]."""
    out = []
    for line_num, row in _read_rows(path, (id_column, text_column, score_column)):
        raw = row[score_column]
        if raw is None or row[id_column] is None:
            raise DataError(f"{path}:{line_num}: short row")
        try:
            score = float(raw)
        except ValueError as e:
            raise DataError(f"{path}:{line_num}: bad score {raw!r}") from e
        if not 0.0 <= score <= 1.0:
            raise DataError(f"{path}:{line_num}: score {score} outside [0, 1]")
        out.append(ScoredInstance(row[id_column], row[text_column] or "", score))
    return out


def load_labeled(path, labels: Sequence[str], id_column: str = "id",
                 text_column: str = "text",
                 label_column: str = "label") -> list[LabeledInstance]:
    """Parse a labeled TSV; every label must be in the declared set."""
    allowed = set(labels)
    out = []
    for line_num, row in _read_rows(path, (id_column, text_column, label_column)):
        label = row[label_column]
        if label is None or row[id_column] is None:
            raise DataError(f"{path}:{line_num}: short row")
        if label not in allowed:
            raise DataError(
                f"{path}:{line_num}: label {label!r} not in {sorted(allowed)}")
        out.append(LabeledInstance(row[id_column], row[text_column] or "", label))
    return out


def select_by_threshold(instances: Sequence[ScoredInstance], lo: float,
                        hi: float) -> list[ScoredInstance]:
    """Instances with lo <= score <= hi, original order preserved."""
    if not 0.0 <= lo <= hi <= 1.0:
        raise ConfigError(f"bad threshold bin [{lo}, {hi}]")
    return [inst for inst in instances if lo <= inst.score <= hi]


def split(dataset: Sequence, spec: SplitSpec) -> list[list]:
    """Seeded shuffle, then contiguous partition by cumulative ratio with
    largest-remainder rounding. Partitions are disjoint and exhaustive."""
    n = len(dataset)
    k = len(spec.ratios)
    if n == 0 and k > 1:
        raise DataError("cannot split an empty dataset into multiple parts")
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    order = rng.permutation(n)
    shuffled = [dataset[i] for i in order]

    exact = [r * n for r in spec.ratios]
    sizes = [int(x) for x in exact]
    short = n - sum(sizes)
    remainders = sorted(range(k), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in remainders[:short]:
        sizes[i] += 1

    parts = []
    start = 0
    for size in sizes:
        parts.append(shuffled[start:start + size])
        start += size
    return parts


def make_batches(dataset: Sequence, batch_size: int, shuffle: bool,
                 seed: int = 0) -> Iterator[list]:
    """Yield lists of at most batch_size items; the final partial batch is
    kept. Shuffling is seeded and reproducible."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    n = len(dataset)
    if shuffle:
        rng = np.random.Generator(np.random.PCG64(seed))
        order = rng.permutation(n)
    else:
        order = np.arange(n)
    for start in range(0, n, batch_size):
        yield [dataset[i] for i in order[start:start + batch_size]]
