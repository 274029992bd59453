"""Bidirectional transformer encoder with a masked-token output head and
a [CLS] classification head, plus a checkpoint format that round-trips
forward outputs bitwise.

Sizing is configurable; the defaults are a desk-scale encoder (2 layers,
width 64, 2 heads). Initialization is truncated normal, std 0.02,
resampled beyond two standard deviations.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import ConfigError, DataError, ShapeError

CHECKPOINT_FORMAT_VERSION = 1
INIT_STD = 0.02


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    num_layers: int = 2
    hidden_size: int = 64
    num_heads: int = 2
    intermediate_size: Optional[int] = None
    max_position: int = 128
    dropout_rate: float = 0.1
    layer_norm_epsilon: float = 1e-12
    tie_mlm_weights: bool = True

    def __post_init__(self):
        if self.vocab_size < 6:
            raise ConfigError(f"vocab_size {self.vocab_size} < 6")
        if self.num_layers < 1 or self.hidden_size < 1 or self.num_heads < 1:
            raise ConfigError("layers, hidden size, and heads must be >= 1")
        if self.hidden_size % self.num_heads != 0:
            raise ConfigError(
                f"hidden_size {self.hidden_size} not divisible by "
                f"num_heads {self.num_heads}")
        if self.intermediate_size is None:
            object.__setattr__(self, "intermediate_size", 4 * self.hidden_size)
        if self.max_position < 1:
            raise ConfigError("max_position must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must be in [0, 1)")

    @property
    def head_size(self) -> int:
        return self.hidden_size // self.num_heads


@dataclass
class Model:
    config: ModelConfig
    params: dict[str, Tensor]
    num_classes: int
    init_seed: int = 0

    def named_params(self) -> list[tuple[str, Tensor]]:
        return list(self.params.items())


def param_shapes(config: ModelConfig, num_classes: int = 2,
                 ) -> dict[str, tuple[int, ...]]:
    """Name -> shape for every trainable tensor, in a fixed order."""
    if num_classes < 2:
        raise ConfigError(f"num_classes {num_classes} < 2")
    d, f, v = config.hidden_size, config.intermediate_size, config.vocab_size
    shapes: dict[str, tuple[int, ...]] = {
        "token_embedding": (v, d),
        "position_embedding": (config.max_position, d),
    }
    for i in range(config.num_layers):
        p = f"layer{i}"
        for name in ("wq", "wk", "wv", "wo"):
            shapes[f"{p}.attn.{name}"] = (d, d)
        for name in ("bq", "bk", "bv", "bo"):
            shapes[f"{p}.attn.{name}"] = (d,)
        shapes[f"{p}.attn_norm.gain"] = (d,)
        shapes[f"{p}.attn_norm.bias"] = (d,)
        shapes[f"{p}.ffn.w1"] = (d, f)
        shapes[f"{p}.ffn.b1"] = (f,)
        shapes[f"{p}.ffn.w2"] = (f, d)
        shapes[f"{p}.ffn.b2"] = (d,)
        shapes[f"{p}.ffn_norm.gain"] = (d,)
        shapes[f"{p}.ffn_norm.bias"] = (d,)
    if not config.tie_mlm_weights:
        shapes["mlm.weight"] = (d, v)
    shapes["mlm.bias"] = (v,)
    shapes["cls.pooler_w"] = (d, d)
    shapes["cls.pooler_b"] = (d,)
    shapes["cls.out_w"] = (d, num_classes)
    shapes["cls.out_b"] = (num_classes,)
    return shapes


def parameter_count(config: ModelConfig, num_classes: int = 2) -> int:
    return sum(int(np.prod(s)) for s in param_shapes(config, num_classes).values())


def _truncated_normal(rng: np.random.Generator, shape, std: float,
                      dtype) -> np.ndarray:
    out = rng.normal(0.0, std, size=shape)
    while True:
        bad = np.abs(out) > 2.0 * std
        n_bad = int(bad.sum())
        if n_bad == 0:
            return out.astype(dtype)
        out[bad] = rng.normal(0.0, std, size=n_bad)


def init_params(config: ModelConfig, seed: int, num_classes: int = 2,
                dtype=np.float32) -> Model:
    """Fresh model: truncated-normal weights, zero biases, unit norm gains.
    Same seed gives bitwise-identical parameters."""
    rng = np.random.Generator(np.random.PCG64(seed))
    params: dict[str, Tensor] = {}
    for name, shape in param_shapes(config, num_classes).items():
        if name.endswith(".gain"):
            data = np.ones(shape, dtype=dtype)
        elif len(shape) == 1:  # every 1-d tensor other than a gain is a bias
            data = np.zeros(shape, dtype=dtype)
        else:
            data = _truncated_normal(rng, shape, INIT_STD, dtype)
        params[name] = Tensor(data, requires_grad=True)
    return Model(config=config, params=params, num_classes=num_classes,
                 init_seed=seed)


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return ag.add(ag.matmul(x, w), b)


def encode(ids: np.ndarray, attention_mask: np.ndarray, model: Model,
           train_mode: bool = False,
           rng: Optional[np.random.Generator] = None) -> Tensor:
    """Run the encoder stack. Returns hidden states [B, n, d].

    Padding keys are excluded from attention by an additive -1e9 score;
    dropout applies only when train_mode is set (which requires rng).
    """
    cfg = model.config
    p = model.params
    ids = np.asarray(ids)
    attention_mask = np.asarray(attention_mask)
    if ids.ndim != 2 or ids.shape != attention_mask.shape:
        raise ShapeError(
            f"ids {ids.shape} and attention_mask {attention_mask.shape} "
            f"must be equal 2-d shapes")
    batch, seq_len = ids.shape
    if seq_len > cfg.max_position:
        raise DataError(
            f"sequence length {seq_len} exceeds max_position {cfg.max_position}")
    if ids.min() < 0 or ids.max() >= cfg.vocab_size:
        raise DataError(
            f"token id outside [0, {cfg.vocab_size}): "
            f"min {ids.min()}, max {ids.max()}")
    if train_mode and cfg.dropout_rate > 0 and rng is None:
        raise ConfigError("train_mode with dropout requires an rng")

    def drop(t: Tensor) -> Tensor:
        if train_mode and cfg.dropout_rate > 0:
            return ag.dropout(t, cfg.dropout_rate, rng)
        return t

    dtype = p["token_embedding"].dtype
    x = ag.add(ag.embedding(p["token_embedding"], ids),
               ag.take(p["position_embedding"], slice(0, seq_len)))
    x = drop(x)

    # [B, 1, 1, n] additive bias: 0 on real keys, -1e9 on padding
    key_bias = ((1.0 - attention_mask.astype(dtype)) * np.asarray(-1e9, dtype))
    key_bias = Tensor(key_bias[:, None, None, :])

    heads, head_size = cfg.num_heads, cfg.head_size
    scale = 1.0 / math.sqrt(head_size)

    def split_heads(t: Tensor) -> Tensor:
        t = ag.reshape(t, (batch, seq_len, heads, head_size))
        return ag.transpose(t, (0, 2, 1, 3))

    for i in range(cfg.num_layers):
        pre = f"layer{i}"
        q = split_heads(_linear(x, p[f"{pre}.attn.wq"], p[f"{pre}.attn.bq"]))
        k = split_heads(_linear(x, p[f"{pre}.attn.wk"], p[f"{pre}.attn.bk"]))
        v = split_heads(_linear(x, p[f"{pre}.attn.wv"], p[f"{pre}.attn.bv"]))
        scores = ag.matmul(q, ag.transpose(k, (0, 1, 3, 2))) * scale
        probs = ag.softmax(ag.add(scores, key_bias), axis=-1)
        probs = drop(probs)
        context = ag.transpose(ag.matmul(probs, v), (0, 2, 1, 3))
        context = ag.reshape(context, (batch, seq_len, cfg.hidden_size))
        attn_out = drop(_linear(context, p[f"{pre}.attn.wo"], p[f"{pre}.attn.bo"]))
        x = ag.layer_norm(ag.add(x, attn_out), p[f"{pre}.attn_norm.gain"],
                          p[f"{pre}.attn_norm.bias"], cfg.layer_norm_epsilon)
        hidden = ag.gelu(_linear(x, p[f"{pre}.ffn.w1"], p[f"{pre}.ffn.b1"]))
        ffn_out = drop(_linear(hidden, p[f"{pre}.ffn.w2"], p[f"{pre}.ffn.b2"]))
        x = ag.layer_norm(ag.add(x, ffn_out), p[f"{pre}.ffn_norm.gain"],
                          p[f"{pre}.ffn_norm.bias"], cfg.layer_norm_epsilon)
    return x


def mlm_logits(hidden: Tensor, model: Model) -> Tensor:
    """Per-position vocabulary scores [B, n, V] (pre-softmax)."""
    if model.config.tie_mlm_weights:
        w = ag.transpose(model.params["token_embedding"], (1, 0))
    else:
        w = model.params["mlm.weight"]
    return ag.add(ag.matmul(hidden, w), model.params["mlm.bias"])


def classify(hidden: Tensor, model: Model) -> Tensor:
    """Class logits [B, C] from the tanh-pooled position-0 state."""
    p = model.params
    first = ag.take(hidden, (slice(None), 0))
    pooled = ag.tanh(_linear(first, p["cls.pooler_w"], p["cls.pooler_b"]))
    return _linear(pooled, p["cls.out_w"], p["cls.out_b"])


def _param_filename(name: str) -> str:
    return name + ".bin"


def save_checkpoint(model: Model, path) -> None:
    """Write a checkpoint directory: manifest.json plus one flat
    little-endian float32 file per parameter."""
    os.makedirs(path, exist_ok=True)
    entries = {}
    for name, tensor in model.params.items():
        raw = np.ascontiguousarray(tensor.data.astype("<f4")).tobytes()
        digest = hashlib.sha256(raw).hexdigest()
        with open(os.path.join(path, _param_filename(name)), "wb") as f:
            f.write(raw)
        entries[name] = {"shape": list(tensor.shape), "sha256": digest}
    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": asdict(model.config),
        "num_classes": model.num_classes,
        "init_seed": model.init_seed,
        "rng": "pcg64",
        "params": entries,
    }
    with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)


def load_checkpoint(path) -> Model:
    """Read a checkpoint directory back into a Model. Rejects unknown
    format versions, shape drift, and corrupted parameter files."""
    manifest_path = os.path.join(path, "manifest.json")
    try:
        with open(manifest_path, encoding="utf-8") as f:
            manifest = json.load(f)
    except FileNotFoundError as e:
        raise DataError(f"{manifest_path}: not found") from e
    except json.JSONDecodeError as e:
        raise DataError(f"{manifest_path}: invalid JSON: {e}") from e
    version = manifest.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise DataError(
            f"{path}: checkpoint format version {version}, "
            f"expected {CHECKPOINT_FORMAT_VERSION}")
    config = ModelConfig(**manifest["config"])
    num_classes = manifest["num_classes"]
    expected = param_shapes(config, num_classes)
    listed = manifest["params"]
    if set(listed) != set(expected):
        extra = sorted(set(listed) - set(expected))
        missing = sorted(set(expected) - set(listed))
        raise ShapeError(
            f"{path}: parameter set mismatch (extra {extra}, missing {missing})")
    params: dict[str, Tensor] = {}
    for name, shape in expected.items():
        entry = listed[name]
        if tuple(entry["shape"]) != shape:
            raise ShapeError(
                f"{path}: tensor {name} has manifest shape "
                f"{tuple(entry['shape'])}, config requires {shape}")
        file_path = os.path.join(path, _param_filename(name))
        with open(file_path, "rb") as f:
            raw = f.read()
        if hashlib.sha256(raw).hexdigest() != entry["sha256"]:
            raise DataError(f"{file_path}: checksum mismatch for tensor {name}")
        data = np.frombuffer(raw, dtype="<f4")
        if data.size != int(np.prod(shape)):
            raise ShapeError(
                f"{file_path}: {data.size} values on disk, tensor {name} "
                f"requires {int(np.prod(shape))}")
        params[name] = Tensor(data.reshape(shape).copy(), requires_grad=True)
    return Model(config=config, params=params, num_classes=num_classes,
                 init_seed=manifest.get("init_seed", 0))
