"""Calibration and classification metrics.

Per-sample contributions are reduced with :func:`math.fsum`, so every metric
is exactly invariant to the order of the samples.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from ._validation import as_targets, check_labels, check_probs

DEFAULT_BINS = 15
LOG_FLOOR = 1e-12


def softmax(logits, temperature=1.0):
    """Softmax over the last axis, computed on max-shifted values.

    Accepts a single logit vector or an ``(N, C)`` matrix; ``temperature``
    may be a scalar or a per-row vector.
    """
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("softmax input contains non-finite values")
    t = np.asarray(temperature, dtype=np.float64)
    if t.ndim == 1:
        t = t[:, None]
    z = z / t
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _confidence_and_correct(probs, labels):
    p = check_probs(probs)
    y = check_labels(labels, p.shape[0], p.shape[1])
    return p.max(axis=1), (np.argmax(p, axis=1) == y)


@dataclass(frozen=True)
class ReliabilityTable:
    """Equal-width confidence bins. Empty bins have NaN ``conf`` and ``acc``."""

    bin_lo: np.ndarray
    bin_hi: np.ndarray
    count: np.ndarray
    conf: np.ndarray
    acc: np.ndarray

    @property
    def n_samples(self) -> int:
        return int(self.count.sum())

    def ece(self) -> float:
        n = self.n_samples
        terms = [c / n * abs(a - f) for c, a, f in zip(self.count, self.acc, self.conf) if c > 0]
        return math.fsum(terms)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["bin_lo", "bin_hi", "count", "conf", "acc"])
        for row in zip(self.bin_lo, self.bin_hi, self.count, self.conf, self.acc):
            lo, hi, c, f, a = row
            writer.writerow([repr(float(lo)), repr(float(hi)), int(c),
                             "" if c == 0 else repr(float(f)), "" if c == 0 else repr(float(a))])
        return buf.getvalue()


def reliability_bins(probs, labels, bins=DEFAULT_BINS) -> ReliabilityTable:
    if bins < 1:
        raise ValueError("bins must be >= 1")
    conf, correct = _confidence_and_correct(probs, labels)
    idx = np.minimum(np.floor(conf * bins).astype(np.int64), bins - 1)
    edges = np.arange(bins + 1) / bins
    count = np.zeros(bins, dtype=np.int64)
    mean_conf = np.full(bins, np.nan)
    mean_acc = np.full(bins, np.nan)
    for m in range(bins):
        members = idx == m
        k = int(members.sum())
        count[m] = k
        if k:
            mean_conf[m] = math.fsum(conf[members]) / k
            mean_acc[m] = math.fsum(correct[members].astype(np.float64)) / k
    return ReliabilityTable(edges[:-1], edges[1:], count, mean_conf, mean_acc)


def ece(probs, labels, bins=DEFAULT_BINS) -> float:
    """Expected calibration error of the top-label confidence."""
    return reliability_bins(probs, labels, bins).ece()


def brier(probs, labels) -> float:
    p = check_probs(probs)
    t = as_targets(labels, p.shape[0], p.shape[1])
    per_sample = ((p - t) ** 2).sum(axis=1)
    return math.fsum(per_sample) / p.shape[0]


def nll(probs, targets) -> float:
    """Mean cross-entropy against hard labels or soft target rows."""
    p = check_probs(probs)
    t = as_targets(targets, p.shape[0], p.shape[1])
    logp = np.log(np.maximum(p, LOG_FLOOR))
    per_sample = -(t * logp).sum(axis=1)
    return math.fsum(per_sample) / p.shape[0]


def balanced_accuracy(probs, labels) -> float:
    p = check_probs(probs)
    y = check_labels(labels, p.shape[0], p.shape[1])
    pred = np.argmax(p, axis=1)
    recalls = [float(np.mean(pred[y == k] == k)) for k in np.unique(y)]
    return math.fsum(recalls) / len(recalls)


@dataclass(frozen=True)
class MetricReport:
    ece: float
    brier: float
    nll: float
    balanced_accuracy: float
    reliability: ReliabilityTable

    def to_dict(self):
        return {
            "ece": self.ece,
            "brier": self.brier,
            "nll": self.nll,
            "balanced_accuracy": self.balanced_accuracy,
        }


def evaluate(probs, labels, bins=DEFAULT_BINS) -> MetricReport:
    table = reliability_bins(probs, labels, bins)
    return MetricReport(
        ece=table.ece(),
        brier=brier(probs, labels),
        nll=nll(probs, labels),
        balanced_accuracy=balanced_accuracy(probs, labels),
        reliability=table,
    )
