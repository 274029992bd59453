"""Masked-token collation, the pretraining and fine-tuning loops, the
warmup/decay learning-rate schedule, and patience-based early stopping.

Every run draws all randomness (shuffling, masking, dropout) from
generators spawned off one seed, so identical configs produce identical
logs and checkpoints.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from . import autograd as ag
from .corpus import LabeledInstance, SplitSpec, make_batches, split
from .errors import ConfigError, DataError, NumericError
from .model import Model, classify, encode, mlm_logits, save_checkpoint
from .optim import AdamState, adam_step, clip_global_norm, global_grad_norm
from .tokenizer import TokenizedSequence, Vocabulary, tokenize


@dataclass
class MaskingOutcome:
    input_ids: np.ndarray       # corrupted ids fed to the model
    target_ids: np.ndarray      # the uncorrupted originals
    mask_indicator: np.ndarray  # 1 exactly where the loss applies


@dataclass(frozen=True)
class PretrainConfig:
    epochs: int = 25
    batch_size: int = 32
    max_len: int = 512
    lr: float = 5e-5
    mask_prob: float = 0.15
    replace_mask_frac: float = 0.8
    replace_random_frac: float = 0.1
    keep_frac: float = 0.1
    max_grad_norm: float = 1.0
    checkpoint_every: int = 0  # steps between mid-run checkpoints; 0 = end only
    seed: int = 0

    def __post_init__(self):
        fracs = (self.replace_mask_frac, self.replace_random_frac, self.keep_frac)
        if any(f < 0 for f in fracs) or abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigError(f"replacement fractions {fracs} must sum to 1")
        if not 0.0 <= self.mask_prob <= 1.0:
            raise ConfigError(f"mask_prob {self.mask_prob} outside [0, 1]")
        if self.epochs < 0 or self.batch_size < 1 or self.max_len < 3:
            raise ConfigError("epochs >= 0, batch_size >= 1, max_len >= 3 required")
        if self.lr <= 0 or self.max_grad_norm <= 0:
            raise ConfigError("lr and max_grad_norm must be positive")


@dataclass(frozen=True)
class FinetuneConfig:
    epochs: int = 3
    batch_size: int = 8
    lr: float = 1e-4
    adam_epsilon: float = 1e-8
    warmup_ratio: float = 0.1
    max_grad_norm: float = 1.0
    max_len: int = 140
    gradient_accumulation_steps: int = 1
    eval_patience: int = 10
    eval_fraction: float = 0.2
    evals_per_epoch: int = 5
    eval_every: Optional[int] = None  # optimizer steps; None = derive from above
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.warmup_ratio < 1.0:
            raise ConfigError(f"warmup_ratio {self.warmup_ratio} outside [0, 1)")
        if self.eval_patience < 1:
            raise ConfigError("eval_patience must be >= 1")
        if not 0.0 < self.eval_fraction < 1.0:
            raise ConfigError("eval_fraction must be in (0, 1)")
        if self.epochs < 0 or self.batch_size < 1 or self.max_len < 3:
            raise ConfigError("epochs >= 0, batch_size >= 1, max_len >= 3 required")
        if self.gradient_accumulation_steps < 1 or self.evals_per_epoch < 1:
            raise ConfigError("accumulation and evals_per_epoch must be >= 1")
        if self.eval_every is not None and self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1 when given")
        if self.lr <= 0 or self.max_grad_norm <= 0 or self.adam_epsilon <= 0:
            raise ConfigError("lr, max_grad_norm, adam_epsilon must be positive")


@dataclass
class StepRecord:
    step: int
    loss: float
    lr: float
    grad_norm: float


@dataclass
class EvalRecord:
    step: int
    index: int
    loss: float
    improved: bool


@dataclass
class TrainLog:
    steps: list = field(default_factory=list)
    evals: list = field(default_factory=list)
    stop_reason: str = ""

    def save_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for rec in self.steps:
                f.write(json.dumps({"kind": "step", **asdict(rec)}) + "\n")
            for rec in self.evals:
                f.write(json.dumps({"kind": "eval", **asdict(rec)}) + "\n")
            f.write(json.dumps({"kind": "stop", "reason": self.stop_reason}) + "\n")


def mask_tokens(seq: TokenizedSequence, vocab: Vocabulary, cfg: PretrainConfig,
                rng: np.random.Generator) -> MaskingOutcome:
    """Corrupt a tokenized sequence for masked-token prediction.

    Each real, non-special position is selected independently with
    probability mask_prob; a selected position becomes [MASK], a random
    non-special token, or stays put, per the configured fractions.
    Targets are always the original ids. Special tokens (including
    padding) are never selected.
    """
    ids = np.asarray(seq.ids, dtype=np.int64)
    attn = np.asarray(seq.attention_mask, dtype=np.int64)
    maskable = (attn == 1) & ~np.isin(ids, sorted(vocab.special_ids))
    selected = maskable & (rng.random(ids.shape) < cfg.mask_prob)
    input_ids = ids.copy()
    positions = np.flatnonzero(selected)
    if positions.size:
        u = rng.random(positions.size)
        to_mask = u < cfg.replace_mask_frac
        to_random = ~to_mask & (u < cfg.replace_mask_frac + cfg.replace_random_frac)
        input_ids[positions[to_mask]] = vocab.mask_id
        rand_positions = positions[to_random]
        if rand_positions.size:
            pool = np.asarray(vocab.non_special_ids(), dtype=np.int64)
            if pool.size == 0:
                raise DataError("vocabulary has no non-special tokens to sample")
            input_ids[rand_positions] = pool[rng.integers(pool.size,
                                                          size=rand_positions.size)]
    return MaskingOutcome(input_ids=input_ids, target_ids=ids,
                          mask_indicator=selected.astype(np.int64))


def lr_at(step: int, total_steps: int, peak_lr: float,
          warmup_ratio: float) -> float:
    """Linear 0 -> peak over the first ceil(warmup_ratio * total) steps,
    then linear peak -> 0 over the remainder.

    The warmup boundary is computed in exact decimal arithmetic so a
    ratio written as 0.1 peaks at exactly 10% of total.
    """
    if total_steps <= 0:
        raise ConfigError(f"total_steps must be positive, got {total_steps}")
    if not 0 <= step <= total_steps:
        raise ConfigError(f"step {step} outside [0, {total_steps}]")
    if not 0.0 <= warmup_ratio < 1.0:
        raise ConfigError(f"warmup_ratio {warmup_ratio} outside [0, 1)")
    warmup_steps = math.ceil(Fraction(str(warmup_ratio)) * total_steps)
    if warmup_steps == 0:
        return peak_lr * ((total_steps - step) / total_steps)
    if step <= warmup_steps:
        return peak_lr * (step / warmup_steps)
    return peak_lr * ((total_steps - step) / (total_steps - warmup_steps))


class EarlyStopper:
    """Stop after `patience` consecutive evaluations without improvement.

    Improvement means strictly lower loss than the best seen so far.
    """

    def __init__(self, patience: int):
        if patience < 1:
            raise ConfigError(f"patience must be >= 1, got {patience}")
        self.patience = patience
        self.best_loss = math.inf
        self.best_index = None
        self.streak = 0
        self.num_evals = 0

    def update(self, loss: float) -> bool:
        """Record one evaluation; True means training should stop now."""
        self.num_evals += 1
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_index = self.num_evals
            self.streak = 0
            return False
        self.streak += 1
        return self.streak >= self.patience

    @property
    def improved(self) -> bool:
        return self.streak == 0


def _spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def _stack_batch(seqs: Sequence[TokenizedSequence]) -> tuple[np.ndarray, np.ndarray]:
    ids = np.stack([np.asarray(s.ids, dtype=np.int64) for s in seqs])
    attn = np.stack([np.asarray(s.attention_mask, dtype=np.int64) for s in seqs])
    return ids, attn


def mlm_batch_loss(model: Model, outcomes: Sequence[MaskingOutcome],
                   attn: np.ndarray, train_mode: bool,
                   rng: Optional[np.random.Generator]) -> ag.Tensor:
    """Mean masked cross-entropy over one collated batch."""
    input_ids = np.stack([o.input_ids for o in outcomes])
    targets = np.stack([o.target_ids for o in outcomes]).reshape(-1)
    mask = np.stack([o.mask_indicator for o in outcomes]).reshape(-1)
    hidden = encode(input_ids, attn, model, train_mode=train_mode, rng=rng)
    logits = mlm_logits(hidden, model)
    batch, seq_len, vocab_size = logits.shape
    flat = ag.reshape(logits, (batch * seq_len, vocab_size))
    return ag.masked_cross_entropy(flat, targets, mask, reduction="mean")


def pretrain(texts: Sequence[str], vocab: Vocabulary, model: Model,
             cfg: PretrainConfig,
             checkpoint_dir: Optional[str] = None) -> TrainLog:
    """Masked-token training at constant learning rate.

    Mutates the model in place; returns the log. With a checkpoint
    directory, writes `final/` at the end and `step-N/` every
    checkpoint_every steps.
    """
    if not texts:
        raise DataError("empty pretraining corpus")
    shuffle_rng, mask_rng, dropout_rng = _spawn_rngs(cfg.seed, 3)
    seqs = [tokenize(t, vocab, cfg.max_len) for t in texts]
    named = model.named_params()
    tensors = [t for _, t in named]
    state = AdamState()
    log = TrainLog()
    step = 0
    for epoch in range(cfg.epochs):
        epoch_seed = int(shuffle_rng.integers(2 ** 63))
        for batch in make_batches(seqs, cfg.batch_size, shuffle=True,
                                  seed=epoch_seed):
            step += 1
            outcomes = [mask_tokens(s, vocab, cfg, mask_rng) for s in batch]
            if sum(int(o.mask_indicator.sum()) for o in outcomes) == 0:
                log.steps.append(StepRecord(step, 0.0, cfg.lr, 0.0))
                continue
            _, attn = _stack_batch(batch)
            try:
                ag.zero_grads(tensors)
                loss = mlm_batch_loss(model, outcomes, attn, train_mode=True,
                                      rng=dropout_rng)
                ag.backward(loss)
                norm = global_grad_norm(tensors)
                clip_global_norm(tensors, cfg.max_grad_norm)
                adam_step(named, state, cfg.lr)
            except NumericError as e:
                raise NumericError(
                    f"pretraining aborted at epoch {epoch} step {step} "
                    f"(lr {cfg.lr}): {e}") from e
            log.steps.append(StepRecord(step, float(loss.item()), cfg.lr, norm))
            if (checkpoint_dir and cfg.checkpoint_every > 0
                    and step % cfg.checkpoint_every == 0):
                save_checkpoint(model, os.path.join(checkpoint_dir, f"step-{step}"))
    log.stop_reason = "epochs_exhausted"
    if checkpoint_dir:
        save_checkpoint(model, os.path.join(checkpoint_dir, "final"))
    return log


def _snapshot(model: Model) -> dict[str, np.ndarray]:
    return {name: t.data.copy() for name, t in model.params.items()}


def _restore(model: Model, snapshot: dict[str, np.ndarray]) -> None:
    for name, t in model.params.items():
        t.data = snapshot[name].copy()


def _class_batch_loss(model: Model, batch: Sequence[LabeledInstance],
                      vocab: Vocabulary, label_to_id: dict[str, int],
                      max_len: int, train_mode: bool,
                      rng: Optional[np.random.Generator]) -> ag.Tensor:
    seqs = [tokenize(inst.text, vocab, max_len) for inst in batch]
    ids, attn = _stack_batch(seqs)
    targets = np.array([label_to_id[inst.label] for inst in batch], dtype=np.int64)
    hidden = encode(ids, attn, model, train_mode=train_mode, rng=rng)
    logits = classify(hidden, model)
    ones = np.ones(len(batch), dtype=np.int64)
    return ag.masked_cross_entropy(logits, targets, ones, reduction="mean")


def evaluation_loss(model: Model, data: Sequence[LabeledInstance],
                    vocab: Vocabulary, label_to_id: dict[str, int],
                    max_len: int, batch_size: int) -> float:
    """Mean classification cross-entropy over a dataset, no dropout."""
    total, count = 0.0, 0
    for batch in make_batches(data, batch_size, shuffle=False):
        seqs = [tokenize(inst.text, vocab, max_len) for inst in batch]
        ids, attn = _stack_batch(seqs)
        targets = np.array([label_to_id[inst.label] for inst in batch],
                           dtype=np.int64)
        hidden = encode(ids, attn, model, train_mode=False, rng=None)
        logits = classify(hidden, model)
        ones = np.ones(len(batch), dtype=np.int64)
        loss = ag.masked_cross_entropy(logits, targets, ones, reduction="sum")
        total += float(loss.item())
        count += len(batch)
    return total / count


def predict_class_ids(texts: Sequence[str], vocab: Vocabulary, model: Model,
                      max_len: int, batch_size: int = 32) -> list[int]:
    """Argmax class index per text."""
    out: list[int] = []
    for start in range(0, len(texts), batch_size):
        chunk = texts[start:start + batch_size]
        seqs = [tokenize(t, vocab, max_len) for t in chunk]
        ids, attn = _stack_batch(seqs)
        hidden = encode(ids, attn, model, train_mode=False, rng=None)
        logits = classify(hidden, model)
        out.extend(int(i) for i in np.argmax(logits.data, axis=-1))
    return out


def finetune(train_data: Sequence[LabeledInstance], vocab: Vocabulary,
             model: Model, cfg: FinetuneConfig, labels: Sequence[str],
             checkpoint_dir: Optional[str] = None) -> TrainLog:
    """Classification fine-tuning with warmup/decay schedule, clipping,
    gradient accumulation, periodic evaluation on a carved-out slice,
    and early stopping with best-parameter restoration.

    Mutates the model in place; on return the parameters are those of
    the best evaluation. With a checkpoint directory, `best/` holds the
    checkpoint written when that evaluation happened.
    """
    label_list = list(labels)
    if len(label_list) != model.num_classes:
        raise ConfigError(
            f"model has {model.num_classes} classes, labels give "
            f"{len(label_list)}")
    if len(set(label_list)) != len(label_list):
        raise ConfigError("duplicate label names")
    label_to_id = {name: i for i, name in enumerate(label_list)}
    observed = {inst.label for inst in train_data}
    unknown = observed - set(label_list)
    if unknown:
        raise DataError(f"labels {sorted(unknown)} not in declared set")
    if len(observed) < 2:
        raise DataError("training data contains a single class; need >= 2")

    carve = SplitSpec((1.0 - cfg.eval_fraction, cfg.eval_fraction), cfg.seed)
    train_part, eval_part = split(list(train_data), carve)
    if not train_part or not eval_part:
        raise DataError(
            f"{len(train_data)} examples leave an empty partition at "
            f"eval_fraction {cfg.eval_fraction}")

    shuffle_rng, dropout_rng = _spawn_rngs(cfg.seed, 2)
    accum = cfg.gradient_accumulation_steps
    micro_per_epoch = math.ceil(len(train_part) / cfg.batch_size)
    steps_per_epoch = math.ceil(micro_per_epoch / accum)
    total_steps = max(1, steps_per_epoch * cfg.epochs)
    eval_every = cfg.eval_every or max(1, steps_per_epoch // cfg.evals_per_epoch)

    named = model.named_params()
    tensors = [t for _, t in named]
    state = AdamState()
    stopper = EarlyStopper(cfg.eval_patience)
    best = _snapshot(model)
    log = TrainLog()
    opt_step = 0
    stopped = False

    def run_eval() -> bool:
        loss = evaluation_loss(model, eval_part, vocab, label_to_id,
                               cfg.max_len, cfg.batch_size)
        should_stop = stopper.update(loss)
        if stopper.improved:
            nonlocal best
            best = _snapshot(model)
            if checkpoint_dir:
                save_checkpoint(model, os.path.join(checkpoint_dir, "best"))
        log.evals.append(EvalRecord(opt_step, stopper.num_evals, loss,
                                    stopper.improved))
        return should_stop

    for epoch in range(cfg.epochs):
        if stopped:
            break
        epoch_seed = int(shuffle_rng.integers(2 ** 63))
        micro_batches = list(make_batches(train_part, cfg.batch_size,
                                          shuffle=True, seed=epoch_seed))
        for group_start in range(0, len(micro_batches), accum):
            group = micro_batches[group_start:group_start + accum]
            try:
                ag.zero_grads(tensors)
                group_loss = 0.0
                for micro in group:
                    loss = _class_batch_loss(model, micro, vocab, label_to_id,
                                             cfg.max_len, train_mode=True,
                                             rng=dropout_rng) / len(group)
                    ag.backward(loss)
                    group_loss += float(loss.item())
                lr = lr_at(opt_step, total_steps, cfg.lr, cfg.warmup_ratio)
                norm = global_grad_norm(tensors)
                clip_global_norm(tensors, cfg.max_grad_norm)
                adam_step(named, state, lr, epsilon=cfg.adam_epsilon)
            except NumericError as e:
                raise NumericError(
                    f"fine-tuning aborted at epoch {epoch} optimizer step "
                    f"{opt_step}: {e}") from e
            opt_step += 1
            log.steps.append(StepRecord(opt_step, group_loss, lr, norm))
            if opt_step % eval_every == 0:
                if run_eval():
                    stopped = True
                    break

    if not stopped and (opt_step == 0 or opt_step % eval_every != 0):
        stopped = run_eval()
    log.stop_reason = "early_stopping" if stopped else "epochs_exhausted"
    _restore(model, best)
    return log
