"""Binary classification metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import rankdata


def roc_auc(scores, labels) -> Optional[float]:
    """Area under the ROC curve via the Mann-Whitney rank statistic.

    Tied scores count one half, which makes this identical to the trapezoidal
    area under the empirical ROC. Returns None when only one class is present.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores)  # average ranks for ties
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


@dataclass
class Metrics:
    accuracy: float
    auc: Optional[float]
    loss: float
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def error_rate(self) -> float:
        return (self.fp + self.fn) / self.total

    def auc_text(self) -> str:
        return "undefined" if self.auc is None else repr(self.auc)


def confusion(predicted, labels) -> tuple[int, int, int, int]:
    """(tp, fp, tn, fn) for 0/1 arrays."""
    p = np.asarray(predicted).astype(bool)
    y = np.asarray(labels).astype(bool)
    return int((p & y).sum()), int((p & ~y).sum()), int((~p & ~y).sum()), int((~p & y).sum())


def binary_metrics(scores, labels, loss: float = float("nan"), threshold: float = 0.5) -> Metrics:
    scores = np.asarray(scores).ravel()
    labels = np.asarray(labels).ravel()
    tp, fp, tn, fn = confusion(scores >= threshold, labels)
    return Metrics(
        accuracy=(tp + tn) / labels.size,
        auc=roc_auc(scores, labels),
        loss=loss,
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
    )
