"""Single-hidden-layer classifier trained by mini-batch SGD.

Parameters live in one flat float64 vector laid out as
[W1 (input x hidden, row-major), b1, W2 (hidden x classes, row-major), b2].
"""
import struct
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .idx import LabeledDataset

ParamVector = np.ndarray

CHECKPOINT_MAGIC = b"TTFW"


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    local_epochs: int = 1
    batch_size: int = 32
    hidden_width: int = 50

    def __post_init__(self):
        if not (self.learning_rate >= 0.0 and self.local_epochs >= 1
                and self.batch_size >= 1 and self.hidden_width >= 1):
            raise ValueError("train config values must be positive")


@dataclass(frozen=True)
class Architecture:
    input_dim: int = 784
    hidden: int = 50
    classes: int = 10

    @property
    def size(self) -> int:
        return self.input_dim * self.hidden + self.hidden + self.hidden * self.classes + self.classes

    def unpack(self, w: ParamVector):
        """Views (W1, b1, W2, b2) into `w`; writing through them edits `w`."""
        if w.shape != (self.size,):
            raise ValueError(f"parameter vector has shape {w.shape}, expected ({self.size},)")
        i, h, c = self.input_dim, self.hidden, self.classes
        a = i * h
        b = a + h
        d = b + h * c
        return w[:a].reshape(i, h), w[a:b], w[b:d].reshape(h, c), w[d:]


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


class FeedForward:
    def __init__(self, arch: Architecture):
        self.arch = arch

    @classmethod
    def for_config(cls, cfg: TrainConfig, input_dim: int = 784) -> "FeedForward":
        return cls(Architecture(input_dim=input_dim, hidden=cfg.hidden_width))

    def init_params(self, rng: np.random.Generator) -> ParamVector:
        w = np.zeros(self.arch.size, dtype=np.float64)
        W1, _, W2, _ = self.arch.unpack(w)
        lim1 = np.sqrt(6.0 / (self.arch.input_dim + self.arch.hidden))
        lim2 = np.sqrt(6.0 / (self.arch.hidden + self.arch.classes))
        W1[...] = rng.uniform(-lim1, lim1, size=W1.shape)
        W2[...] = rng.uniform(-lim2, lim2, size=W2.shape)
        return w

    def forward(self, w: ParamVector, x: np.ndarray):
        W1, b1, W2, b2 = self.arch.unpack(w)
        hidden = _sigmoid(x @ W1 + b1)
        return hidden, _softmax(hidden @ W2 + b2)

    def loss_and_gradient(self, w: ParamVector, x: np.ndarray, y: np.ndarray) -> Tuple[float, ParamVector]:
        n = x.shape[0]
        if n == 0:
            raise ValueError("empty batch")
        W1, _, W2, _ = self.arch.unpack(w)
        hidden, probs = self.forward(w, x)
        rows = np.arange(n)
        loss = float(-np.mean(np.log(np.maximum(probs[rows, y], np.finfo(np.float64).tiny))))

        delta_out = probs.copy()
        delta_out[rows, y] -= 1.0
        delta_out /= n
        delta_hidden = (delta_out @ W2.T) * hidden * (1.0 - hidden)

        grad = np.empty_like(w)
        gW1, gb1, gW2, gb2 = self.arch.unpack(grad)
        gW1[...] = x.T @ delta_hidden
        gb1[...] = delta_hidden.sum(axis=0)
        gW2[...] = hidden.T @ delta_out
        gb2[...] = delta_out.sum(axis=0)
        return loss, grad

    def local_update(self, w_in: ParamVector, data: LabeledDataset, cfg: TrainConfig,
                     rng: np.random.Generator) -> ParamVector:
        n = data.count
        if n == 0:
            raise ValueError("empty shard")
        w = w_in.copy()
        for _ in range(cfg.local_epochs):
            order = np.arange(n) if cfg.batch_size >= n else rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                batch = order[start:start + cfg.batch_size]
                _, grad = self.loss_and_gradient(w, data.images[batch], data.labels[batch])
                w -= cfg.learning_rate * grad
        if not np.all(np.isfinite(w)):
            raise DivergenceError("local update produced non-finite parameters")
        return w

    def evaluate(self, w: ParamVector, test_set: LabeledDataset, chunk: int = 4096) -> Tuple[float, float]:
        n = test_set.count
        if n == 0:
            raise ValueError("empty test set")
        correct = 0
        loss_sum = 0.0
        for start in range(0, n, chunk):
            x = test_set.images[start:start + chunk]
            y = test_set.labels[start:start + chunk]
            _, probs = self.forward(w, x)
            correct += int(np.sum(np.argmax(probs, axis=1) == y))
            picked = np.maximum(probs[np.arange(y.shape[0]), y], np.finfo(np.float64).tiny)
            loss_sum += float(-np.sum(np.log(picked)))
        return correct / n, loss_sum / n


def save_checkpoint(path: str, arch: Architecture, w: ParamVector) -> None:
    header = CHECKPOINT_MAGIC + struct.pack("<III", arch.input_dim, arch.hidden, arch.classes)
    with open(path, "wb") as f:
        f.write(header + np.asarray(w, dtype="<f8").tobytes())


def load_checkpoint(path: str) -> Tuple[Architecture, ParamVector]:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != CHECKPOINT_MAGIC or len(raw) < 16:
        raise ValueError(f"{path}: not a parameter checkpoint")
    arch = Architecture(*struct.unpack("<III", raw[4:16]))
    if len(raw) - 16 != 8 * arch.size:
        raise ValueError(f"{path}: payload does not match architecture {arch}")
    return arch, np.frombuffer(raw, dtype="<f8", offset=16).astype(np.float64)
