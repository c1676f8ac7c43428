"""Segmentation accuracy (mIoU, mAcc, aAcc) and class-wise calibration error.

Accumulators are plain values that merge by addition, so batches can be
streamed or split and combined in any order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError

IGNORE_INDEX = 255
DEFAULT_BINS = 15


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    counts: np.ndarray  # (K, K) int64, rows true, columns predicted

    @classmethod
    def empty(cls, n_classes: int) -> "ConfusionMatrix":
        return cls(np.zeros((n_classes, n_classes), dtype=np.int64))

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.counts.shape != self.counts.shape:
            raise DimensionError("confusion matrices differ in size")
        return ConfusionMatrix(self.counts + other.counts)


@dataclass(frozen=True, eq=False)
class CalibrationBins:
    """Per-class histograms over ``n_bins`` equal-width probability bins.

    Bin 0 is ``[0, 1/M]``; bin ``m`` is ``(m/M, (m+1)/M]``.
    """

    count: np.ndarray  # (K, M) samples in bin
    conf_sum: np.ndarray  # (K, M) summed predicted probability of class y
    hits: np.ndarray  # (K, M) samples in bin whose label is y
    n_true: np.ndarray  # (K,) samples whose label is y

    @classmethod
    def empty(cls, n_classes: int, n_bins: int = DEFAULT_BINS) -> "CalibrationBins":
        if n_bins < 1:
            raise ValueError("need at least one bin")
        z = np.zeros((n_classes, n_bins), dtype=np.int64)
        return cls(z, np.zeros((n_classes, n_bins)), z.copy(), np.zeros(n_classes, dtype=np.int64))

    @property
    def n_classes(self) -> int:
        return self.count.shape[0]

    @property
    def n_bins(self) -> int:
        return self.count.shape[1]

    @property
    def n_samples(self) -> int:
        return int(self.count[0].sum()) if self.n_classes else 0

    def __add__(self, other: "CalibrationBins") -> "CalibrationBins":
        if other.count.shape != self.count.shape:
            raise DimensionError("calibration bins differ in shape")
        return CalibrationBins(self.count + other.count, self.conf_sum + other.conf_sum,
                               self.hits + other.hits, self.n_true + other.n_true)


@dataclass(frozen=True, eq=False)
class PredictionBatch:
    posteriors: np.ndarray  # (N, K)
    labels: np.ndarray  # (N,), IGNORE_INDEX for void samples

    def __post_init__(self):
        p = np.asarray(self.posteriors, dtype=np.float64)
        if p.ndim != 2 or np.shape(self.labels) != (p.shape[0],):
            raise DimensionError("posteriors must be (N, K) with N labels")
        if p.size and np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-9):
            raise DataError("each posterior must sum to 1")


def bin_index(p, n_bins: int) -> np.ndarray:
    """Right-inclusive bin of each probability; the first bin also holds 0."""
    inner_edges = np.arange(1, n_bins) / n_bins
    return np.searchsorted(inner_edges, np.asarray(p, dtype=np.float64), side="left")


def accumulate(batch: PredictionBatch, cm: ConfusionMatrix, cb: CalibrationBins,
               ignore_index: int = IGNORE_INDEX):
    """Add a batch to both accumulators and return the updated pair."""
    p = np.asarray(batch.posteriors, dtype=np.float64)
    y = np.asarray(batch.labels, dtype=np.int64)
    K = cm.n_classes
    if p.shape[1] != K or cb.n_classes != K:
        raise DimensionError(f"batch has {p.shape[1]} classes, accumulators {K}/{cb.n_classes}")
    keep = y != ignore_index
    p, y = p[keep], y[keep]
    if y.size and (y.min() < 0 or y.max() >= K):
        raise DataError("label out of range")
    if not y.size:
        return cm, cb

    pred = np.argmax(p, axis=1)
    counts = cm.counts + np.bincount(y * K + pred, minlength=K * K).reshape(K, K)

    M = cb.n_bins
    bins = bin_index(p, M)  # (N, K)
    cls = np.broadcast_to(np.arange(K), bins.shape)
    flat = (cls * M + bins).ravel()
    count = cb.count + np.bincount(flat, minlength=K * M).reshape(K, M)
    conf_sum = cb.conf_sum.copy()
    # add.at is unbuffered and applies updates in sample order
    np.add.at(conf_sum.reshape(-1), flat, p.ravel())
    hit = (y[:, None] == np.arange(K)[None, :]).astype(np.int64).ravel()
    hits = cb.hits + np.bincount(flat, weights=hit, minlength=K * M).astype(np.int64).reshape(K, M)
    n_true = cb.n_true + np.bincount(y, minlength=K)
    return ConfusionMatrix(counts), CalibrationBins(count, conf_sum, hits, n_true)


def _require_samples(cm: ConfusionMatrix) -> None:
    if cm.total == 0:
        raise DataError("confusion matrix has no samples")


def per_class_iou(cm: ConfusionMatrix) -> np.ndarray:
    """IoU per class; NaN for classes absent from the ground truth."""
    c = cm.counts
    tp = np.diag(c).astype(np.float64)
    union = c.sum(axis=0) + c.sum(axis=1) - np.diag(c)
    present = c.sum(axis=1) > 0
    out = np.full(cm.n_classes, np.nan)
    out[present] = tp[present] / union[present]
    return out


def _mean_present(values: np.ndarray) -> float:
    vals = [float(v) for v in values if not np.isnan(v)]
    return sum(vals) / len(vals)


def miou(cm: ConfusionMatrix) -> float:
    _require_samples(cm)
    return _mean_present(per_class_iou(cm))


def macc(cm: ConfusionMatrix) -> float:
    _require_samples(cm)
    c = cm.counts
    rows = c.sum(axis=1)
    present = rows > 0
    acc = np.full(cm.n_classes, np.nan)
    acc[present] = np.diag(c)[present] / rows[present]
    return _mean_present(acc)


def aacc(cm: ConfusionMatrix) -> float:
    _require_samples(cm)
    return int(np.trace(cm.counts)) / cm.total


def cwece(cb: CalibrationBins, normalize: str = "all") -> float:
    """Class-wise expected calibration error.

    ``normalize="all"`` weights each bin by its share of all evaluated
    samples, so a class's bin weights sum to 1. ``normalize="class"`` divides
    by the number of samples whose true label is the class instead; classes
    with no such samples are then left out of the average.
    """
    n = cb.n_samples
    if n == 0:
        raise DataError("no samples in calibration bins")
    if normalize not in ("all", "class"):
        raise ValueError(f"unknown normalization {normalize!r}")
    total = 0.0
    n_used = 0
    for y in range(cb.n_classes):
        denom = n if normalize == "all" else int(cb.n_true[y])
        if denom == 0:
            continue
        n_used += 1
        for m in range(cb.n_bins):
            cnt = int(cb.count[y, m])
            if cnt == 0:
                continue
            acc = int(cb.hits[y, m]) / cnt
            conf = float(cb.conf_sum[y, m]) / cnt
            total += cnt / denom * abs(acc - conf)
    return total / n_used


def reliability_rows(cb: CalibrationBins, class_names=None) -> list[dict]:
    rows = []
    M = cb.n_bins
    for y in range(cb.n_classes):
        for m in range(M):
            cnt = int(cb.count[y, m])
            rows.append({
                "class": class_names[y] if class_names else y,
                "bin": m,
                "center": (m + 0.5) / M,
                "count": cnt,
                "conf": float(cb.conf_sum[y, m]) / cnt if cnt else None,
                "acc": int(cb.hits[y, m]) / cnt if cnt else None,
            })
    return rows


def evaluate(posteriors, labels, n_bins: int = DEFAULT_BINS,
             ignore_index: int = IGNORE_INDEX):
    """One-shot accumulation of a full prediction set."""
    p = np.asarray(posteriors, dtype=np.float64)
    K = p.shape[1]
    return accumulate(PredictionBatch(p, np.asarray(labels)), ConfusionMatrix.empty(K),
                      CalibrationBins.empty(K, n_bins), ignore_index)


def metrics_report(level: int, cm: ConfusionMatrix, cb: CalibrationBins,
                   class_names=None, normalize: str = "all") -> dict:
    iou = per_class_iou(cm)
    names = list(class_names) if class_names else list(range(cm.n_classes))
    return {
        "level": level,
        "n_samples": cm.total,
        "mIoU": miou(cm),
        "mAcc": macc(cm),
        "aAcc": aacc(cm),
        "cwECE": cwece(cb, normalize),
        "cwECE_normalization": normalize,
        "n_bins": cb.n_bins,
        "per_class_iou": {str(n): (None if np.isnan(v) else float(v)) for n, v in zip(names, iou)},
        "confusion": cm.counts.tolist(),
        "reliability": reliability_rows(cb, names),
    }
