"""Command-line surface for the pipeline: select, preprocess,
build-vocab, pretrain, finetune, evaluate, sweep.

Every run writes a manifest JSON recording the effective config, seeds,
input-file hashes, and stop reason, so a run can be reproduced exactly.
Config files are JSON with sections "model", "pretrain", "finetune",
"prep"; any CLI flag overrides its config field. The OFFLM_CONFIG
environment variable supplies a default config path.

Exit codes: 0 success, 2 usage or config error, 3 data error,
4 numeric or shape failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import shutil
import sys
from dataclasses import asdict
from typing import Optional, Sequence

from .corpus import load_labeled, load_scored, select_by_threshold
from .errors import ConfigError, DataError, NumericError, ShapeError
from .evaluation import (confusion, make_report, render, render_sweep,
                         threshold_sweep)
from .model import (Model, ModelConfig, init_params, load_checkpoint,
                    save_checkpoint)
from .textprep import Lexicon, PrepConfig, keep_instance, load_emoji_map, prepare
from .tokenizer import build_vocab, load_vocab
from .training import (FinetuneConfig, PretrainConfig, finetune,
                       predict_class_ids, pretrain)

ENV_CONFIG = "OFFLM_CONFIG"
MANIFEST_SCHEMA_VERSION = 1
TABLE_LOWER_BOUNDS = (0.5, 0.6, 0.7, 0.8, 0.9)
_REPORT_EXT = {"json": "json", "markdown": "md", "tsv": "tsv"}


def _sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _hash_inputs(paths: Sequence) -> dict[str, str]:
    return {str(p): _sha256_file(p) for p in paths if p}


def _write_manifest(path, payload: dict) -> None:
    payload = {"schema_version": MANIFEST_SCHEMA_VERSION,
               "rng": "pcg64", **payload}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


_CONFIG_SECTIONS = ("model", "pretrain", "finetune", "prep")


def _load_config_file(args) -> dict:
    path = args.config or os.environ.get(ENV_CONFIG)
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as f:
            config = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config file {path}: not found") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path}: invalid JSON: {e}") from e
    if not isinstance(config, dict):
        raise ConfigError(f"config file {path}: top level must be an object")
    unknown = sorted(set(config) - set(_CONFIG_SECTIONS))
    if unknown:
        raise ConfigError(
            f"config file {path}: unknown sections {unknown}; "
            f"expected a subset of {list(_CONFIG_SECTIONS)}")
    return config


def _section(config: dict, name: str) -> dict:
    section = config.get(name, {})
    if not isinstance(section, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    return dict(section)


def _build(cls, section: dict, overrides: dict, where: str):
    merged = dict(section)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return cls(**merged)
    except TypeError as e:
        raise ConfigError(f"{where}: {e}") from e


def _read_rows(path) -> tuple[list[str], list[dict]]:
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f, delimiter="\t", quotechar='"')
        if reader.fieldnames is None:
            return [], []
        return list(reader.fieldnames), list(reader)


def _read_text_column(path, column: str) -> list[str]:
    fields, rows = _read_rows(path)
    if not fields:
        raise DataError(f"{path}: empty file, expected a header row")
    if column not in fields:
        raise DataError(f"{path}: no column {column!r} in header {fields}")
    return [row[column] or "" for row in rows]


def _write_tsv(path, fieldnames: Sequence[str], rows: Sequence[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, delimiter="\t",
                                quotechar='"', lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _parse_labels(raw: Optional[str]) -> list[str]:
    if not raw:
        raise ConfigError("--labels is required (comma-separated class names)")
    labels = [x.strip() for x in raw.split(",") if x.strip()]
    if len(labels) < 2:
        raise ConfigError(f"need at least 2 labels, got {labels}")
    return labels


def _parse_bins(raw: str) -> list[tuple[float, float]]:
    bins = []
    for part in raw.split(","):
        part = part.strip()
        pieces = part.split(":")
        if len(pieces) != 2:
            raise ConfigError(f"bin {part!r} must look like lo:hi")
        try:
            lo, hi = float(pieces[0]), float(pieces[1])
        except ValueError as e:
            raise ConfigError(f"bin {part!r}: {e}") from e
        bins.append((lo, hi))
    if not bins:
        raise ConfigError("at least one bin is required")
    return bins


def _model_config(config: dict, args, vocab_size: int) -> ModelConfig:
    section = _section(config, "model")
    overrides = {
        "num_layers": args.num_layers,
        "hidden_size": args.hidden_size,
        "num_heads": args.num_heads,
        "intermediate_size": args.intermediate_size,
        "max_position": args.max_position,
        "dropout_rate": args.dropout_rate,
    }
    merged_vocab = section.pop("vocab_size", None)
    if merged_vocab is not None and merged_vocab != vocab_size:
        raise ConfigError(
            f"model.vocab_size {merged_vocab} does not match the vocabulary "
            f"file ({vocab_size} tokens)")
    return _build(ModelConfig, {**section, "vocab_size": vocab_size},
                  overrides, "model config")


def _pretrain_config(config: dict, args) -> PretrainConfig:
    overrides = {
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "max_len": args.max_len,
        "lr": args.lr,
        "mask_prob": args.mask_prob,
        "max_grad_norm": args.max_grad_norm,
        "checkpoint_every": args.checkpoint_every,
        "seed": args.seed,
    }
    return _build(PretrainConfig, _section(config, "pretrain"), overrides,
                  "pretrain config")


def _finetune_config(config: dict, args) -> FinetuneConfig:
    overrides = {
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "lr": args.lr,
        "adam_epsilon": args.adam_epsilon,
        "warmup_ratio": args.warmup_ratio,
        "max_grad_norm": args.max_grad_norm,
        "max_len": args.max_len,
        "gradient_accumulation_steps": args.accumulation_steps,
        "eval_patience": args.patience,
        "eval_fraction": args.eval_fraction,
        "evals_per_epoch": args.evals_per_epoch,
        "eval_every": args.eval_every,
        "seed": args.seed,
    }
    return _build(FinetuneConfig, _section(config, "finetune"), overrides,
                  "finetune config")


def _prep_config(config: dict, args) -> PrepConfig:
    overrides = {
        "url_placeholder": args.url_placeholder,
        "user_placeholder": args.user_placeholder,
        "min_words": args.min_words,
        "min_chars": args.min_chars,
    }
    return _build(PrepConfig, _section(config, "prep"), overrides,
                  "prep config")


def cmd_select(args) -> int:
    if args.lo > args.hi:
        args.parser.error(f"--lo {args.lo} must not exceed --hi {args.hi}")
    instances = load_scored(args.input, score_column=args.score_column,
                            text_column=args.text_column)
    print("Threshold    Instances")
    for lo in TABLE_LOWER_BOUNDS:
        count = len(select_by_threshold(instances, lo, 1.0))
        print(f"{lo:.1f} - 1.0    {count}")
    selected = select_by_threshold(instances, args.lo, args.hi)
    fields, rows = _read_rows(args.input)
    kept_ids = {inst.id for inst in selected}
    id_col = args.id_column
    out_rows = [r for r in rows if r[id_col] in kept_ids]
    _write_tsv(args.output, fields, out_rows)
    print(f"selected [{args.lo}, {args.hi}]: {len(selected)} instances "
          f"-> {args.output}")
    _write_manifest(args.output + ".manifest.json", {
        "command": "select",
        "effective_config": {"lo": args.lo, "hi": args.hi,
                             "score_column": args.score_column},
        "inputs": _hash_inputs([args.input]),
        "outputs": [args.output],
        "selected_count": len(selected),
    })
    return 0


def cmd_preprocess(args) -> int:
    config = _load_config_file(args)
    prep = _prep_config(config, args)
    lexicon = Lexicon.load(args.lexicon) if args.lexicon else None
    mapping = load_emoji_map(args.emoji_map) if args.emoji_map else None
    fields, rows = _read_rows(args.input)
    out_rows = []
    for row in rows:
        if args.text_column not in row or row[args.text_column] is None:
            raise DataError(f"{args.input}: row missing column "
                            f"{args.text_column!r}: {row}")
        text = prepare(row[args.text_column], prep, lexicon, mapping)
        if args.keep_all or keep_instance(text, prep):
            new_row = dict(row)
            new_row[args.text_column] = text
            out_rows.append(new_row)
    _write_tsv(args.output, fields or [args.text_column], out_rows)
    print(f"kept {len(out_rows)} of {len(rows)} rows -> {args.output}")
    _write_manifest(args.output + ".manifest.json", {
        "command": "preprocess",
        "effective_config": {"prep": asdict(prep), "keep_all": args.keep_all,
                             "emoji_map": args.emoji_map,
                             "lexicon": args.lexicon},
        "inputs": _hash_inputs([args.input, args.emoji_map, args.lexicon]),
        "outputs": [args.output],
        "kept": len(out_rows),
        "seen": len(rows),
    })
    return 0


def cmd_build_vocab(args) -> int:
    texts = _read_text_column(args.input, args.text_column)
    vocab = build_vocab(texts, args.size, min_frequency=args.min_frequency)
    vocab.save(args.output)
    print(f"vocabulary of {len(vocab)} tokens -> {args.output}")
    _write_manifest(args.output + ".manifest.json", {
        "command": "build-vocab",
        "effective_config": {"size": args.size,
                             "min_frequency": args.min_frequency},
        "inputs": _hash_inputs([args.input]),
        "outputs": [args.output],
        "vocab_size": len(vocab),
    })
    return 0


def cmd_pretrain(args) -> int:
    config = _load_config_file(args)
    texts = _read_text_column(args.corpus, args.text_column)
    vocab = load_vocab(args.vocab)
    pcfg = _pretrain_config(config, args)
    if args.init_checkpoint:
        model = load_checkpoint(args.init_checkpoint)
        if model.config.vocab_size != len(vocab):
            raise ConfigError(
                f"checkpoint vocab_size {model.config.vocab_size} does not "
                f"match the vocabulary file ({len(vocab)} tokens)")
    else:
        section = _section(config, "model")
        if args.max_position is None and "max_position" not in section:
            args.max_position = pcfg.max_len
        mcfg = _model_config(config, args, len(vocab))
        if mcfg.max_position < pcfg.max_len:
            raise ConfigError(
                f"model.max_position {mcfg.max_position} shorter than "
                f"pretrain.max_len {pcfg.max_len}")
        model = init_params(mcfg, args.model_seed, num_classes=args.num_classes)
    os.makedirs(args.output_dir, exist_ok=True)
    log = pretrain(texts, vocab, model, pcfg, checkpoint_dir=args.output_dir)
    log.save_jsonl(os.path.join(args.output_dir, "trainlog.jsonl"))
    shutil.copyfile(args.vocab, os.path.join(args.output_dir, "vocab.txt"))
    final_loss = log.steps[-1].loss if log.steps else None
    print(f"pretrained {len(log.steps)} steps on {len(texts)} texts "
          f"-> {args.output_dir} (last loss "
          f"{final_loss if final_loss is not None else 'n/a'})")
    _write_manifest(os.path.join(args.output_dir, "manifest.json"), {
        "command": "pretrain",
        "effective_config": {"model": asdict(model.config),
                             "pretrain": asdict(pcfg)},
        "inputs": _hash_inputs([args.corpus, args.vocab]),
        "outputs": ["final", "trainlog.jsonl", "vocab.txt"],
        "seeds": {"model_init": model.init_seed, "pretrain": pcfg.seed},
        "stop_reason": log.stop_reason,
        "num_texts": len(texts),
    })
    return 0


def cmd_finetune(args) -> int:
    config = _load_config_file(args)
    labels = _parse_labels(args.labels)
    train = load_labeled(args.train, labels, label_column=args.label_column,
                         text_column=args.text_column)
    vocab = load_vocab(args.vocab)
    fcfg = _finetune_config(config, args)
    if args.init_checkpoint:
        model = load_checkpoint(args.init_checkpoint)
        if model.config.vocab_size != len(vocab):
            raise ConfigError(
                f"checkpoint vocab_size {model.config.vocab_size} does not "
                f"match the vocabulary file ({len(vocab)} tokens)")
        if model.num_classes != len(labels):
            raise ConfigError(
                f"checkpoint has {model.num_classes} classes, "
                f"--labels gives {len(labels)}")
    else:
        section = _section(config, "model")
        if args.max_position is None and "max_position" not in section:
            args.max_position = fcfg.max_len
        mcfg = _model_config(config, args, len(vocab))
        model = init_params(mcfg, args.model_seed, num_classes=len(labels))
    if model.config.max_position < fcfg.max_len:
        raise ConfigError(
            f"model.max_position {model.config.max_position} shorter than "
            f"finetune.max_len {fcfg.max_len}")
    os.makedirs(args.output_dir, exist_ok=True)
    log = finetune(train, vocab, model, fcfg, labels,
                   checkpoint_dir=args.output_dir)
    save_checkpoint(model, os.path.join(args.output_dir, "final"))
    log.save_jsonl(os.path.join(args.output_dir, "trainlog.jsonl"))
    shutil.copyfile(args.vocab, os.path.join(args.output_dir, "vocab.txt"))
    with open(os.path.join(args.output_dir, "labels.json"), "w",
              encoding="utf-8") as f:
        json.dump({"labels": labels}, f)
        f.write("\n")
    best = min((e.loss for e in log.evals), default=None)
    print(f"fine-tuned {len(log.steps)} steps, {len(log.evals)} evaluations, "
          f"stop reason {log.stop_reason}, best eval loss {best} "
          f"-> {args.output_dir}")
    _write_manifest(os.path.join(args.output_dir, "manifest.json"), {
        "command": "finetune",
        "effective_config": {"model": asdict(model.config),
                             "finetune": asdict(fcfg), "labels": labels},
        "inputs": _hash_inputs([args.train, args.vocab]),
        "outputs": ["best", "final", "trainlog.jsonl", "vocab.txt",
                    "labels.json"],
        "seeds": {"model_init": model.init_seed, "finetune": fcfg.seed},
        "stop_reason": log.stop_reason,
        "num_examples": len(train),
    })
    return 0


def _resolve_model_dir(args) -> tuple[Model, "object", list[str], str]:
    """Work out (model, vocab, labels, model_id) from --model-dir plus
    any explicit --checkpoint/--vocab/--labels overrides."""
    checkpoint = args.checkpoint
    vocab_path = args.vocab
    labels_raw = args.labels
    model_id = None
    if args.model_dir:
        if not os.path.isdir(args.model_dir):
            raise DataError(f"model directory {args.model_dir} does not exist")
        model_id = os.path.basename(os.path.normpath(args.model_dir))
        if not checkpoint:
            final = os.path.join(args.model_dir, "final")
            checkpoint = final if os.path.isdir(final) else args.model_dir
        if not vocab_path:
            candidate = os.path.join(args.model_dir, "vocab.txt")
            vocab_path = candidate if os.path.isfile(candidate) else None
        if not labels_raw:
            candidate = os.path.join(args.model_dir, "labels.json")
            if os.path.isfile(candidate):
                with open(candidate, encoding="utf-8") as f:
                    labels_raw = ",".join(json.load(f)["labels"])
    if not checkpoint:
        raise ConfigError("give --model-dir or --checkpoint")
    if not vocab_path:
        raise ConfigError("no vocabulary: give --vocab or a --model-dir "
                          "containing vocab.txt")
    labels = _parse_labels(labels_raw)
    model = load_checkpoint(checkpoint)
    vocab = load_vocab(vocab_path)
    if model.config.vocab_size != len(vocab):
        raise ConfigError(
            f"checkpoint vocab_size {model.config.vocab_size} does not match "
            f"the vocabulary file ({len(vocab)} tokens)")
    if model.num_classes != len(labels):
        raise ConfigError(f"checkpoint has {model.num_classes} classes, "
                          f"labels give {len(labels)}")
    return model, vocab, labels, model_id or os.path.basename(
        os.path.normpath(checkpoint))


def cmd_evaluate(args) -> int:
    model, vocab, labels, model_id = _resolve_model_dir(args)
    if args.model_id:
        model_id = args.model_id
    data = load_labeled(args.data, labels, label_column=args.label_column,
                        text_column=args.text_column)
    dataset_id = args.dataset_id or os.path.splitext(
        os.path.basename(args.data))[0]
    max_len = args.max_len or model.config.max_position
    preds_idx = predict_class_ids([d.text for d in data], vocab, model,
                                  max_len, batch_size=args.batch_size)
    preds = [labels[i] for i in preds_idx]
    gold = [d.label for d in data]
    cm = confusion(preds, gold, labels)
    report = make_report(cm, dataset_id, model_id,
                         {"max_len": max_len, "labels": labels})
    os.makedirs(args.output_dir, exist_ok=True)
    pred_path = os.path.join(args.output_dir, "predictions.tsv")
    _write_tsv(pred_path, ["id", "gold", "pred"],
               [{"id": d.id, "gold": g, "pred": p}
                for d, g, p in zip(data, gold, preds)])
    text = render([report], args.format)
    report_path = os.path.join(args.output_dir,
                               f"report.{_REPORT_EXT[args.format]}")
    with open(report_path, "w", encoding="utf-8") as f:
        f.write(text)
    print(text, end="")
    _write_manifest(os.path.join(args.output_dir, "manifest.json"), {
        "command": "evaluate",
        "effective_config": {"labels": labels, "max_len": max_len,
                             "format": args.format},
        "inputs": _hash_inputs([args.data]),
        "outputs": ["predictions.tsv", os.path.basename(report_path)],
        "macro_f1": report.macro_f1,
        "accuracy": report.accuracy,
    })
    return 0


def cmd_sweep(args) -> int:
    config = _load_config_file(args)
    labels = _parse_labels(args.labels)
    bins = _parse_bins(args.bins)
    scored = load_scored(args.scored, score_column=args.score_column,
                         text_column=args.text_column)
    train = load_labeled(args.train, labels, label_column=args.label_column,
                         text_column=args.text_column)
    eval_data = (load_labeled(args.eval, labels,
                              label_column=args.label_column,
                              text_column=args.text_column)
                 if args.eval else train)
    vocab = load_vocab(args.vocab)
    pcfg = _pretrain_config(config, args)
    ft_section = _section(config, "finetune")
    try:
        fcfg = FinetuneConfig(**ft_section)
    except TypeError as e:
        raise ConfigError(f"finetune config: {e}") from e
    section = _section(config, "model")
    if args.max_position is None and "max_position" not in section:
        args.max_position = max(pcfg.max_len, fcfg.max_len)
    mcfg = _model_config(config, args, len(vocab))
    if mcfg.max_position < max(pcfg.max_len, fcfg.max_len):
        raise ConfigError(
            f"model.max_position {mcfg.max_position} shorter than the "
            f"longest configured sequence "
            f"{max(pcfg.max_len, fcfg.max_len)}")
    os.makedirs(args.output_dir, exist_ok=True)
    reports = []

    def runner(lo: float, hi: float) -> tuple[int, float]:
        index = len(reports)
        bin_dir = os.path.join(args.output_dir, f"bin-{index}")
        selected = select_by_threshold(scored, lo, hi)
        if not selected:
            raise DataError(f"bin [{lo}, {hi}] selected no instances")
        model = init_params(mcfg, args.model_seed, num_classes=len(labels))
        pretrain([s.text for s in selected], vocab, model, pcfg,
                 checkpoint_dir=os.path.join(bin_dir, "pretrain"))
        finetune(train, vocab, model, fcfg, labels,
                 checkpoint_dir=os.path.join(bin_dir, "finetune"))
        save_checkpoint(model, os.path.join(bin_dir, "finetune", "final"))
        preds_idx = predict_class_ids([d.text for d in eval_data], vocab,
                                      model, fcfg.max_len)
        preds = [labels[i] for i in preds_idx]
        cm = confusion(preds, [d.label for d in eval_data], labels)
        report = make_report(
            cm, args.dataset_id or "eval",
            f"bin-{lo:g}-{hi:g}",
            {"lo": lo, "hi": hi, "pretrain": asdict(pcfg),
             "finetune": asdict(fcfg), "model": asdict(mcfg)})
        reports.append(report)
        return len(selected), report.macro_f1

    table = threshold_sweep(bins, runner)
    sweep_text = render_sweep(table, args.format)
    models_text = render(reports, args.format)
    ext = _REPORT_EXT[args.format]
    with open(os.path.join(args.output_dir, f"sweep.{ext}"), "w",
              encoding="utf-8") as f:
        f.write(sweep_text)
    with open(os.path.join(args.output_dir, f"models.{ext}"), "w",
              encoding="utf-8") as f:
        f.write(models_text)
    print(sweep_text, end="")
    print(models_text, end="")
    _write_manifest(os.path.join(args.output_dir, "manifest.json"), {
        "command": "sweep",
        "effective_config": {"model": asdict(mcfg), "pretrain": asdict(pcfg),
                             "finetune": asdict(fcfg), "labels": labels,
                             "bins": [list(b) for b in bins]},
        "inputs": _hash_inputs([args.scored, args.train, args.eval,
                                args.vocab]),
        "outputs": [f"sweep.{ext}", f"models.{ext}"]
                   + [f"bin-{i}" for i in range(len(bins))],
        "seeds": {"model_init": args.model_seed, "pretrain": pcfg.seed,
                  "finetune": fcfg.seed},
        "rows": [asdict(r) for r in table.rows],
    })
    return 0


def _add_config_flag(p) -> None:
    p.add_argument("--config", help="JSON config file (or set $OFFLM_CONFIG)")


def _add_model_flags(p) -> None:
    p.add_argument("--num-layers", type=int)
    p.add_argument("--hidden-size", type=int)
    p.add_argument("--num-heads", type=int)
    p.add_argument("--intermediate-size", type=int)
    p.add_argument("--max-position", type=int,
                   help="defaults to the training max_len")
    p.add_argument("--dropout-rate", type=float)
    p.add_argument("--model-seed", type=int, default=0)


def _add_text_column_flag(p) -> None:
    p.add_argument("--text-column", default="text")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="offlm",
        description="Offensive-language model pipeline: corpus selection, "
                    "preprocessing, vocabulary, masked-token pretraining, "
                    "classification fine-tuning, evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select", help="filter a scored TSV by threshold bin")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--lo", type=float, required=True)
    p.add_argument("--hi", type=float, default=1.0)
    p.add_argument("--id-column", default="id")
    p.add_argument("--score-column", default="average")
    _add_text_column_flag(p)
    p.set_defaults(func=cmd_select, parser=p)

    p = sub.add_parser("preprocess", help="normalize and filter a text TSV")
    _add_config_flag(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--emoji-map")
    p.add_argument("--lexicon")
    p.add_argument("--url-placeholder")
    p.add_argument("--user-placeholder")
    p.add_argument("--min-words", type=int)
    p.add_argument("--min-chars", type=int)
    p.add_argument("--keep-all", action="store_true",
                   help="skip the short-instance filter")
    _add_text_column_flag(p)
    p.set_defaults(func=cmd_preprocess, parser=p)

    p = sub.add_parser("build-vocab", help="train a subword vocabulary")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--min-frequency", type=int, default=1)
    _add_text_column_flag(p)
    p.set_defaults(func=cmd_build_vocab, parser=p)

    p = sub.add_parser("pretrain", help="masked-token pretraining")
    _add_config_flag(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--init-checkpoint")
    p.add_argument("--num-classes", type=int, default=2)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--max-len", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--mask-prob", type=float)
    p.add_argument("--max-grad-norm", type=float)
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--seed", type=int)
    _add_model_flags(p)
    _add_text_column_flag(p)
    p.set_defaults(func=cmd_pretrain, parser=p)

    p = sub.add_parser("finetune", help="classification fine-tuning")
    _add_config_flag(p)
    p.add_argument("--train", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--labels", required=True,
                   help="comma-separated class names, order fixes class ids")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--init-checkpoint")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--adam-epsilon", type=float)
    p.add_argument("--warmup-ratio", type=float)
    p.add_argument("--max-grad-norm", type=float)
    p.add_argument("--max-len", type=int)
    p.add_argument("--accumulation-steps", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--eval-fraction", type=float)
    p.add_argument("--evals-per-epoch", type=int)
    p.add_argument("--eval-every", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--label-column", default="label")
    _add_model_flags(p)
    _add_text_column_flag(p)
    p.set_defaults(func=cmd_finetune, parser=p)

    p = sub.add_parser("evaluate", help="score a fine-tuned model on a TSV")
    p.add_argument("--data", required=True)
    p.add_argument("--model-dir",
                   help="finetune output directory (final/, vocab.txt, "
                        "labels.json)")
    p.add_argument("--checkpoint", help="explicit checkpoint directory")
    p.add_argument("--vocab")
    p.add_argument("--labels")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--format", choices=sorted(_REPORT_EXT), default="markdown")
    p.add_argument("--max-len", type=int)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--dataset-id")
    p.add_argument("--model-id")
    p.add_argument("--label-column", default="label")
    _add_text_column_flag(p)
    p.set_defaults(func=cmd_evaluate, parser=p)

    p = sub.add_parser("sweep",
                       help="select/pretrain/finetune/evaluate per bin")
    _add_config_flag(p)
    p.add_argument("--scored", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--eval")
    p.add_argument("--vocab", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--bins", required=True,
                   help="comma-separated lo:hi pairs, e.g. 0.5:1.0,0.7:1.0")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--format", choices=sorted(_REPORT_EXT), default="markdown")
    p.add_argument("--dataset-id")
    p.add_argument("--score-column", default="average")
    p.add_argument("--label-column", default="label")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--max-len", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--mask-prob", type=float)
    p.add_argument("--max-grad-norm", type=float)
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--seed", type=int)
    _add_model_flags(p)
    _add_text_column_flag(p)
    p.set_defaults(func=cmd_sweep, parser=p)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (DataError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except (NumericError, ShapeError) as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
