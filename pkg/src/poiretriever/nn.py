"""Small trainable layers with hand-written backward passes, Adam, and a gradient checker.

Layers accept a single vector or a batch of row vectors. Each ``*_apply``
function returns the output together with a ``backward`` closure that
accumulates parameter gradients and returns the gradient w.r.t. the input.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import BadMagicError, FormatError, ShapeError, TruncatedError, VersionMismatchError

ACTIVATIONS = ("identity", "relu")


class Parameter:
    def __init__(self, values: np.ndarray, name: str):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = np.zeros_like(self.values)
        self.name = name

    @property
    def shape(self):
        return self.values.shape

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.values.shape})"


class DenseLayer:
    def __init__(self, n_in: int, n_out: int, activation: str = "identity",
                 rng: np.random.Generator | None = None, name: str = "dense"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        bound = 1.0 / math.sqrt(n_in)
        self.weight = Parameter(rng.uniform(-bound, bound, size=(n_out, n_in)), f"{name}.weight")
        self.bias = Parameter(np.zeros(n_out), f"{name}.bias")
        self.activation = activation

    @property
    def n_in(self) -> int:
        return self.weight.shape[1]

    @property
    def n_out(self) -> int:
        return self.weight.shape[0]

    def parameters(self) -> list[Parameter]:
        return [self.weight, self.bias]


def dense_apply(layer: DenseLayer, x: np.ndarray, dropout: float = 0.0,
                rng: np.random.Generator | None = None):
    """``activation(W x + b)``; dropout is applied to the output only when ``rng`` is given."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer.n_in or x.ndim not in (1, 2):
        raise ShapeError(f"input shape {x.shape} incompatible with weight shape {layer.weight.shape}")
    W = layer.weight.values
    pre = x @ W.T + layer.bias.values
    out = np.maximum(pre, 0.0) if layer.activation == "relu" else pre
    mask = None
    if dropout > 0.0 and rng is not None:
        mask = (rng.random(out.shape) >= dropout) / (1.0 - dropout)
        out = out * mask

    def backward(dy: np.ndarray) -> np.ndarray:
        dy = np.asarray(dy, dtype=np.float64)
        if mask is not None:
            dy = dy * mask
        if layer.activation == "relu":
            dy = dy * (pre > 0.0)
        if x.ndim == 1:
            layer.weight.grad += np.outer(dy, x)
            layer.bias.grad += dy
        else:
            layer.weight.grad += dy.T @ x
            layer.bias.grad += dy.sum(axis=0)
        return dy @ W

    return out, backward


class EmbeddingTable:
    def __init__(self, vocab: int, dim: int, rng: np.random.Generator | None = None,
                 name: str = "embedding"):
        if vocab < 1 or dim < 1:
            raise ValueError(f"vocab and dim must be >= 1, got {vocab}x{dim}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.rows = Parameter(rng.normal(0.0, 0.02, size=(vocab, dim)), f"{name}.rows")

    @property
    def vocab(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def parameters(self) -> list[Parameter]:
        return [self.rows]


def embed_mean_batch(table: EmbeddingTable, sequences: Sequence[Sequence[int]]):
    """Mean-pooled rows for each id sequence; an empty sequence pools to zeros."""
    lengths = np.array([len(s) for s in sequences], dtype=np.int64)
    flat = np.fromiter((i for s in sequences for i in s), dtype=np.int64, count=int(lengths.sum()))
    if flat.size and (flat.min() < 0 or flat.max() >= table.vocab):
        bad = flat[(flat < 0) | (flat >= table.vocab)][0]
        raise IndexError(f"token id {bad} out of range for vocabulary of {table.vocab}")
    seg = np.repeat(np.arange(len(sequences)), lengths)
    weights = np.repeat(1.0 / np.maximum(lengths, 1), lengths)[:, None]
    out = np.zeros((len(sequences), table.dim))
    np.add.at(out, seg, table.rows.values[flat] * weights)

    def backward(dy: np.ndarray) -> None:
        np.add.at(table.rows.grad, flat, dy[seg] * weights)

    return out, backward


def embed_mean(table: EmbeddingTable, token_ids: Sequence[int]):
    out, back = embed_mean_batch(table, [list(token_ids)])
    return out[0], lambda dy: back(np.asarray(dy)[None, :])


@dataclass
class Adam:
    params: list[Parameter]
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]

    def step(self, lr: float) -> None:
        """One bias-corrected Adam update; gradients are zeroed afterwards."""
        for p in self.params:
            if not np.all(np.isfinite(p.grad)):
                raise FloatingPointError(f"non-finite gradient in parameter {p.name!r}")
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.values -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.zero_grad()


def lr_at(step: int, total_steps: int, base_lr: float = 2e-5) -> float:
    """Linearly decayed learning rate, reaching zero at ``total_steps``."""
    if total_steps < 1:
        raise ValueError("total_steps must be >= 1")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return base_lr * (1.0 - step / total_steps)


def grad_check(loss_fn: Callable[[], float], params: Sequence[Parameter],
               epsilon: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn`` must return the loss and accumulate gradients into ``params``.
    """
    for p in params:
        p.zero_grad()
    loss_fn()
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.values.reshape(-1)
        a_flat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = loss_fn()
            flat[i] = orig - epsilon
            down = loss_fn()
            flat[i] = orig
            fd = (up - down) / (2.0 * epsilon)
            err = abs(a_flat[i] - fd) / max(1e-8, abs(a_flat[i]) + abs(fd))
            worst = max(worst, err)
    for p in params:
        p.zero_grad()
    return worst


# -- checkpoint container ---------------------------------------------------

CHECKPOINT_MAGIC = b"LAMBMDL1"
CHECKPOINT_VERSION = 1


def checkpoint_bytes(params: Sequence[Parameter], config: dict, seed: int) -> bytes:
    header = {
        "version": CHECKPOINT_VERSION,
        "seed": seed,
        "config": config,
        "params": [{"name": p.name, "shape": list(p.shape)} for p in params],
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(p.values.astype("<f8").tobytes() for p in params)
    return CHECKPOINT_MAGIC + struct.pack("<Q", len(head)) + head + body


def save_checkpoint(path, params: Sequence[Parameter], config: dict, seed: int) -> bytes:
    data = checkpoint_bytes(params, config, seed)
    Path(path).write_bytes(data)
    return data


def parse_checkpoint(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if data[:8] != CHECKPOINT_MAGIC:
        if data[:7] == CHECKPOINT_MAGIC[:7]:
            raise VersionMismatchError(f"checkpoint format {data[:8]!r} unsupported")
        raise BadMagicError("bad magic: not a model checkpoint")
    if len(data) < 16:
        raise TruncatedError("truncated checkpoint header")
    (n,) = struct.unpack_from("<Q", data, 8)
    if len(data) < 16 + n:
        raise TruncatedError("truncated checkpoint header")
    header = json.loads(data[16 : 16 + n].decode("utf-8"))
    if header.get("version") != CHECKPOINT_VERSION:
        raise VersionMismatchError(f"checkpoint version {header.get('version')} unsupported")
    offset = 16 + n
    tensors = {}
    for entry in header["params"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        end = offset + 8 * count
        if end > len(data):
            raise TruncatedError(f"truncated tensor block for {entry['name']!r}")
        tensors[entry["name"]] = (
            np.frombuffer(data[offset:end], dtype="<f8").astype(np.float64).reshape(entry["shape"])
        )
        offset = end
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes after tensors")
    return header, tensors


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    return parse_checkpoint(Path(path).read_bytes())
