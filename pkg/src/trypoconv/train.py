"""Mini-batch training and evaluation."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .data import AugmentConfig, Sample, augment, stack
from .metrics import Metrics, binary_metrics
from .model import Model
from .nn import Param, sigmoid, sigmoid_bce

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 1e-3
    batch_size: int = 16
    optimizer: str = "adam"
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")


class SGD:
    """SGD with classical momentum: v <- mu*v - lr*g; w <- w + v."""

    def __init__(self, params: Sequence[Param], lr: float, momentum: float = 0.9):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros_like(p.value) for p in self.params]

    def step(self):
        for p, v in zip(self.params, self.velocity):
            v *= self.momentum
            v -= self.lr * p.grad
            p.value += v


class Adam:
    def __init__(self, params: Sequence[Param], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.t = 0

    def step(self):
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * p.grad
            v *= self.beta2
            v += (1 - self.beta2) * p.grad * p.grad
            p.value -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.value.dtype)


def make_optimizer(params, cfg: TrainConfig):
    if cfg.optimizer == "sgd":
        return SGD(params, cfg.learning_rate, cfg.momentum)
    return Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val: Optional[Metrics] = None


@dataclass
class History:
    """Per-epoch records. Train accuracy is measured on the augmented,
    dropout-active batches seen during the epoch."""

    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "train_acc", "val_acc", "val_auc"])
        for r in self.records:
            val_acc = "" if r.val is None else repr(r.val.accuracy)
            val_auc = "" if r.val is None else r.val.auc_text()
            w.writerow([r.epoch, repr(r.train_loss), repr(r.train_acc), val_acc, val_auc])
        return buf.getvalue()


def _aug_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, 2, epoch, index])


def train(
    model: Model,
    train_set: Sequence[Sample],
    val_set: Optional[Sequence[Sample]],
    cfg: TrainConfig,
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
) -> tuple[Model, History]:
    """Train ``model`` in place and return it with its history.

    Each epoch shuffles with a seeded generator and augments every sample
    with its own generator keyed by (seed, epoch, sample index), so results
    do not depend on batch composition order beyond the shuffle itself.
    """
    if not train_set:
        raise ValueError("training set is empty")
    size = model.config.input_size
    if train_set[0].image.shape[-1] != size:
        raise ValueError(
            f"model input size {size} does not match training images of size {train_set[0].image.shape[-1]}"
        )
    model.set_dropout_rng(np.random.default_rng([cfg.seed, 3]))
    opt = make_optimizer(model.params(), cfg)
    history = History()
    n = len(train_set)
    for epoch in range(1, cfg.epochs + 1):
        order = np.random.default_rng([cfg.seed, 1, epoch]).permutation(n)
        total_loss = 0.0
        correct = 0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            batch = [augment(train_set[i], cfg.augment, _aug_rng(cfg.seed, epoch, int(i))) for i in idx]
            x, y = stack(batch)
            logits = model.forward(x, training=True)
            loss, dlogits = sigmoid_bce(logits, y[:, None])
            if not np.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} at epoch {epoch}, batch {b}")
            model.zero_grad()
            model.backward(dlogits, input_grad=False)
            opt.step()
            total_loss += loss * len(idx)
            correct += int(((logits[:, 0] >= 0) == (y == 1)).sum())
        record = EpochRecord(epoch, total_loss / n, correct / n)
        if val_set:
            record.val = evaluate(model, val_set)
        history.records.append(record)
        log.info(
            "epoch %d loss %.4f acc %.3f%s",
            epoch,
            record.train_loss,
            record.train_acc,
            "" if record.val is None else f" val_acc {record.val.accuracy:.3f} val_auc {record.val.auc_text()}",
        )
        if on_epoch is not None:
            on_epoch(record)
    return model, history


def predict_scores(model: Model, samples: Sequence[Sample], batch_size: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """(logits, labels) in inference mode."""
    x, y = stack(samples)
    return model.predict_logits(x, batch_size)[:, 0], y


def evaluate(model: Model, samples: Sequence[Sample], batch_size: int = 32) -> Metrics:
    """Accuracy at score >= 0.5, rank AUC, mean BCE and the confusion counts."""
    if not samples:
        raise ValueError("evaluation set is empty")
    logits, y = predict_scores(model, samples, batch_size)
    loss, _ = sigmoid_bce(logits[:, None], y[:, None])
    return binary_metrics(sigmoid(logits), y, loss=loss)
