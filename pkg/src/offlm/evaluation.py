"""Confusion matrices, macro-averaged F1, threshold-sweep tables, and
report rendering (json, markdown, tsv).

Macro F1 averages over every declared class, including classes absent
from the sample, and defines any 0/0 as 0. That keeps scores comparable
across splits and is the documented policy for rare classes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DataError

REPORT_SCHEMA_VERSION = 1


@dataclass
class ConfusionMatrix:
    classes: tuple[str, ...]
    counts: np.ndarray  # [C, C] ints; rows = gold, columns = predicted

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float


@dataclass
class EvalReport:
    dataset_id: str
    model_id: str
    config_hash: str
    classes: tuple[str, ...]
    per_class: dict[str, ClassMetrics]
    macro_f1: float
    accuracy: float
    num_examples: int

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "dataset_id": self.dataset_id,
            "model_id": self.model_id,
            "config_hash": self.config_hash,
            "classes": list(self.classes),
            "per_class": {
                name: {"precision": m.precision, "recall": m.recall, "f1": m.f1}
                for name, m in self.per_class.items()
            },
            "macro_f1": self.macro_f1,
            "accuracy": self.accuracy,
            "num_examples": self.num_examples,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        if d.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise DataError(
                f"report schema version {d.get('schema_version')}, "
                f"expected {REPORT_SCHEMA_VERSION}")
        per_class = {
            name: ClassMetrics(m["precision"], m["recall"], m["f1"])
            for name, m in d["per_class"].items()
        }
        return cls(d["dataset_id"], d["model_id"], d["config_hash"],
                   tuple(d["classes"]), per_class, d["macro_f1"],
                   d["accuracy"], d["num_examples"])


def config_hash(config: dict) -> str:
    """Stable 12-hex-digit digest of a JSON-serializable config."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def confusion(preds: Sequence[str], gold: Sequence[str],
              classes: Sequence[str]) -> ConfusionMatrix:
    """Tally counts[gold][pred] over paired label sequences."""
    if len(preds) != len(gold):
        raise DataError(f"{len(preds)} predictions vs {len(gold)} gold labels")
    class_list = tuple(classes)
    index = {name: i for i, name in enumerate(class_list)}
    if len(index) != len(class_list):
        raise ConfigError("duplicate class names")
    counts = np.zeros((len(class_list), len(class_list)), dtype=np.int64)
    for p, g in zip(preds, gold):
        if g not in index:
            raise DataError(f"gold label {g!r} not in {list(class_list)}")
        if p not in index:
            raise DataError(f"predicted label {p!r} not in {list(class_list)}")
        counts[index[g], index[p]] += 1
    return ConfusionMatrix(class_list, counts)


def per_class_metrics(cm: ConfusionMatrix) -> dict[str, ClassMetrics]:
    """Precision/recall/F1 per class, any 0/0 defined as 0."""
    out: dict[str, ClassMetrics] = {}
    for i, name in enumerate(cm.classes):
        tp = float(cm.counts[i, i])
        fp = float(cm.counts[:, i].sum() - cm.counts[i, i])
        fn = float(cm.counts[i, :].sum() - cm.counts[i, i])
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall > 0 else 0.0)
        out[name] = ClassMetrics(precision, recall, f1)
    return out


def macro_f1(cm: ConfusionMatrix) -> float:
    """Unweighted mean F1 over all declared classes."""
    metrics = per_class_metrics(cm)
    return sum(m.f1 for m in metrics.values()) / len(cm.classes)


def accuracy(cm: ConfusionMatrix) -> float:
    return float(np.trace(cm.counts)) / cm.total if cm.total else 0.0


def make_report(cm: ConfusionMatrix, dataset_id: str, model_id: str,
                config: dict) -> EvalReport:
    return EvalReport(
        dataset_id=dataset_id,
        model_id=model_id,
        config_hash=config_hash(config),
        classes=cm.classes,
        per_class=per_class_metrics(cm),
        macro_f1=macro_f1(cm),
        accuracy=accuracy(cm),
        num_examples=cm.total,
    )


@dataclass
class SweepRow:
    lo: float
    hi: float
    selected_count: int
    macro_f1: float


@dataclass
class SweepTable:
    rows: list[SweepRow] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "rows": [
                {"lo": r.lo, "hi": r.hi, "selected_count": r.selected_count,
                 "macro_f1": r.macro_f1}
                for r in self.rows
            ],
        }


def threshold_sweep(bins: Sequence[tuple[float, float]],
                    runner: Callable[[float, float], tuple[int, float]],
                    ) -> SweepTable:
    """Run the full select/pretrain/finetune/evaluate pipeline per bin.

    The runner gets (lo, hi) and returns (selected instance count,
    macro F1). Rows keep the caller's bin order.
    """
    if not bins:
        raise ConfigError("at least one threshold bin is required")
    table = SweepTable()
    for lo, hi in bins:
        count, score = runner(lo, hi)
        table.rows.append(SweepRow(lo, hi, count, score))
    return table


def _bound(x: float) -> str:
    s = f"{x:g}"
    return s if "." in s or "e" in s else s + ".0"


def render_sweep(table: SweepTable, fmt: str) -> str:
    """Threshold-grid rendering: one row per bin, scores as given."""
    if fmt == "json":
        return json.dumps(table.to_dict(), indent=2, sort_keys=True)
    if fmt == "tsv":
        lines = ["threshold\tselected\tmacro_f1"]
        for r in table.rows:
            lines.append(f"{_bound(r.lo)} - {_bound(r.hi)}"
                         f"\t{r.selected_count}\t{r.macro_f1:.4f}")
        return "\n".join(lines) + "\n"
    if fmt == "markdown":
        lines = ["| Threshold | Selected | Macro F1 |",
                 "|-----------|----------|----------|"]
        for r in table.rows:
            lines.append(f"| {_bound(r.lo)} - {_bound(r.hi)} "
                         f"| {r.selected_count} | {r.macro_f1:.4f} |")
        return "\n".join(lines) + "\n"
    raise ConfigError(f"unknown format {fmt!r}; use json, markdown, or tsv")


def render(reports: Sequence[EvalReport], fmt: str) -> str:
    """Model-comparison rendering, rows sorted by macro F1 descending."""
    ordered = sorted(reports, key=lambda r: -r.macro_f1)
    if fmt == "json":
        return json.dumps([r.to_dict() for r in ordered], indent=2,
                          sort_keys=True)
    if fmt == "tsv":
        lines = ["dataset\tmodel\tmacro_f1\taccuracy\tn"]
        for r in ordered:
            lines.append(f"{r.dataset_id}\t{r.model_id}\t{r.macro_f1:.4f}"
                         f"\t{r.accuracy:.4f}\t{r.num_examples}")
        return "\n".join(lines) + "\n"
    if fmt == "markdown":
        lines = ["| Dataset | Model | Macro F1 |",
                 "|---------|-------|----------|"]
        for r in ordered:
            lines.append(f"| {r.dataset_id} | {r.model_id} | {r.macro_f1:.4f} |")
        return "\n".join(lines) + "\n"
    raise ConfigError(f"unknown format {fmt!r}; use json, markdown, or tsv")
