"""Metrics: ROC AUC (midrank Mann-Whitney) and balanced accuracy."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateLabels, ShapeError


@dataclass
class GranularityResult:
    auc: float
    acc: float
    threshold: float
    counts: dict  # tp, fp, tn, fn at the reported threshold


@dataclass
class EvalReport:
    pixel: GranularityResult | None
    image: GranularityResult | None
    config_fingerprint: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "pixel": asdict(self.pixel) if self.pixel else None,
            "image": asdict(self.image) if self.image else None,
            "config_fingerprint": self.config_fingerprint,
        }


def _validate(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(np.int64)
    if scores.shape != labels.shape:
        raise ShapeError(f"{scores.shape[0]} scores vs {labels.shape[0]} labels")
    if not np.all((labels == 0) | (labels == 1)):
        raise DegenerateLabels("labels must be 0/1")
    if labels.min() == labels.max():
        raise DegenerateLabels("both classes must be present")
    return scores, labels


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """AUC via the Mann-Whitney rank statistic with midrank tie handling."""
    scores, labels = _validate(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    ranks = rankdata(scores, method="average")
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _confusion(scores: np.ndarray, labels: np.ndarray, threshold: float) -> dict:
    pred = scores >= threshold
    pos = labels == 1
    return {
        "tp": int(np.sum(pred & pos)),
        "fp": int(np.sum(pred & ~pos)),
        "tn": int(np.sum(~pred & ~pos)),
        "fn": int(np.sum(~pred & pos)),
    }


def _balanced(counts: dict) -> float:
    tpr = counts["tp"] / max(counts["tp"] + counts["fn"], 1)
    tnr = counts["tn"] / max(counts["tn"] + counts["fp"], 1)
    return (tpr + tnr) / 2.0


def balanced_accuracy(
    scores: Sequence[float],
    labels: Sequence[int],
    policy: str = "max_balanced",
    threshold: float | None = None,
) -> tuple[float, float]:
    """Balanced accuracy (TPR + TNR)/2 and the threshold it was taken at.

    ``fixed`` evaluates at the supplied threshold (prediction is positive
    when score >= threshold). ``max_balanced`` scans midpoints between
    adjacent sorted unique scores and returns the best, preferring the
    lowest threshold on ties.
    """
    scores, labels = _validate(scores, labels)
    if policy == "fixed":
        if threshold is None:
            raise ValueError("fixed policy requires a threshold")
        return _balanced(_confusion(scores, labels, threshold)), float(threshold)
    if policy != "max_balanced":
        raise ValueError(f"unknown policy {policy!r}")
    # one O(n log n) sweep: cumulative class counts below every unique cut
    order = np.argsort(scores, kind="mergesort")
    s_sorted = scores[order]
    l_sorted = labels[order]
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    boundaries = np.flatnonzero(s_sorted[1:] != s_sorted[:-1]) + 1
    if boundaries.size == 0:
        # all scores equal: the only cut predicts everything positive
        return 0.5, float(s_sorted[0])
    cum_pos = np.cumsum(l_sorted)
    pos_below = cum_pos[boundaries - 1]
    neg_below = boundaries - pos_below
    tpr = (n_pos - pos_below) / n_pos
    tnr = neg_below / n_neg
    accs = (tpr + tnr) / 2.0
    best = int(np.argmax(accs))  # first max: lowest threshold wins ties
    thr = float((s_sorted[boundaries[best] - 1] + s_sorted[boundaries[best]]) / 2.0)
    return float(accs[best]), thr


def scored_set_result(
    scores: Sequence[float],
    labels: Sequence[int],
    policy: str = "max_balanced",
    threshold: float | None = None,
) -> GranularityResult:
    """AUC plus balanced accuracy at the policy's threshold, with counts."""
    scores, labels = _validate(scores, labels)
    auc = roc_auc(scores, labels)
    acc, thr = balanced_accuracy(scores, labels, policy, threshold)
    return GranularityResult(auc, acc, thr, _confusion(scores, labels, thr))


def evaluate_pixel(
    maps: Sequence[np.ndarray],
    masks: Sequence[np.ndarray],
    policy: str = "max_balanced",
    threshold: float | None = None,
) -> GranularityResult:
    """Pool all test pixels across images into one scored set.

    Normal test images participate with all-zero masks.
    """
    if len(maps) != len(masks):
        raise ShapeError(f"{len(maps)} maps vs {len(masks)} masks")
    flat_scores, flat_labels = [], []
    for amap, mask in zip(maps, masks):
        data = np.asarray(amap) if isinstance(amap, np.ndarray) else np.asarray(amap.data)
        mask = np.asarray(mask)
        if data.shape != mask.shape:
            raise ShapeError(f"map {data.shape} vs mask {mask.shape}")
        flat_scores.append(data.ravel())
        flat_labels.append((mask.ravel() != 0).astype(np.int64))
    return scored_set_result(
        np.concatenate(flat_scores), np.concatenate(flat_labels), policy, threshold
    )
