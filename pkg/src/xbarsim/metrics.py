"""Binary-classification metrics for labeled evaluation sets.

Class 1 (second logit) is the positive class: seizure/preictal for the
detection and prediction tasks this simulator targets.
"""

from __future__ import annotations

import numpy as np

__all__ = ["confusion", "classification_metrics", "auroc"]


def confusion(predictions: np.ndarray, labels: np.ndarray) -> tuple[int, int, int, int]:
    """(TP, TN, FP, FN) with label 1 positive."""
    predictions = np.asarray(predictions).astype(int)
    labels = np.asarray(labels).astype(int)
    tp = int(np.sum((predictions == 1) & (labels == 1)))
    tn = int(np.sum((predictions == 0) & (labels == 0)))
    fp = int(np.sum((predictions == 1) & (labels == 0)))
    fn = int(np.sum((predictions == 0) & (labels == 1)))
    return tp, tn, fp, fn


def auroc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Area under the ROC curve via the rank statistic, ties at half credit."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        return float("nan")
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return float((wins + 0.5 * ties) / (len(pos) * len(neg)))


def classification_metrics(logits: np.ndarray, labels: np.ndarray,
                           hours: float | None = None) -> dict:
    """Accuracy, sensitivity, specificity, FP/hour (given hours), AUROC."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.asarray(labels).astype(int)
    preds = np.argmax(logits, axis=1)
    tp, tn, fp, fn = confusion(preds, labels)
    total = tp + tn + fp + fn
    out = {
        "accuracy": (tp + tn) / total if total else float("nan"),
        "sensitivity": tp / (tp + fn) if tp + fn else float("nan"),
        "specificity": tn / (tn + fp) if tn + fp else float("nan"),
        "auroc": auroc(logits[:, 1] - logits[:, 0], labels),
        "tp": tp, "tn": tn, "fp": fp, "fn": fn,
    }
    if hours is not None:
        out["fp_per_hour"] = fp / hours if hours > 0 else float("nan")
    return out
