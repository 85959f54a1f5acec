"""Cross-validated training and evaluation, plus weight/sample export.

Five stratified folds, Adam at 1e-3 for 50 epochs with cross-entropy by
default.  Optional quantization-aware training (qat_bits) keeps weights
and inputs at reduced resolution during the loop; post-training
quantization of an already-trained model is available separately for
comparisons.  The best fold's weights are exported as MXW1 and its
held-out set as MXI1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from sklearn.model_selection import StratifiedKFold

from . import formats
from .model import ParallelCNN, quantize_weight_tensor

DEFAULT_EPOCHS = 50
DEFAULT_LR = 1e-3


def auroc(scores: np.ndarray, labels: np.ndarray) -> float:
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        return float("nan")
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return float((wins + 0.5 * ties) / (len(pos) * len(neg)))


def classification_metrics(logits: np.ndarray, labels: np.ndarray,
                           hours: float | None = None) -> dict:
    preds = np.argmax(logits, axis=1)
    tp = int(np.sum((preds == 1) & (labels == 1)))
    tn = int(np.sum((preds == 0) & (labels == 0)))
    fp = int(np.sum((preds == 1) & (labels == 0)))
    fn = int(np.sum((preds == 0) & (labels == 1)))
    out = {
        "accuracy": (tp + tn) / max(len(labels), 1),
        "sensitivity": tp / (tp + fn) if tp + fn else float("nan"),
        "specificity": tn / (tn + fp) if tn + fp else float("nan"),
        "auroc": auroc(logits[:, 1] - logits[:, 0], labels),
    }
    if hours is not None:
        out["fp_per_hour"] = fp / hours if hours > 0 else float("nan")
    return out


@dataclass
class FoldResult:
    fold: int
    metrics: dict
    params: dict
    test_index: np.ndarray


@dataclass
class CVResult:
    folds: list[FoldResult]
    summary: dict = field(default_factory=dict)

    @property
    def best(self) -> FoldResult:
        return max(self.folds, key=lambda f: f.metrics["accuracy"])


def train_model(X_train, y_train, input_length: int, qat_bits=None,
                epochs: int = DEFAULT_EPOCHS, lr: float = DEFAULT_LR,
                seed: int = 0, input_range: float | None = None,
                batch_size: int = 64) -> ParallelCNN:
    torch.manual_seed(seed)
    if input_range is None:
        input_range = float(np.max(np.abs(X_train))) or 1.0
    model = ParallelCNN(input_length=input_length,
                        weight_bits=qat_bits, input_bits=qat_bits,
                        input_range=input_range)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    loss_fn = torch.nn.CrossEntropyLoss()
    Xt = torch.tensor(X_train, dtype=torch.float32)
    yt = torch.tensor(y_train, dtype=torch.long)
    n = len(Xt)
    g = torch.Generator().manual_seed(seed)
    model.train()
    for _ in range(epochs):
        order = torch.randperm(n, generator=g)
        for i in range(0, n, batch_size):
            idx = order[i:i + batch_size]
            opt.zero_grad()
            loss = loss_fn(model(Xt[idx]), yt[idx])
            loss.backward()
            opt.step()
    model.eval()
    return model


@torch.no_grad()
def predict(model: ParallelCNN, X) -> np.ndarray:
    model.eval()
    return model(torch.tensor(np.asarray(X), dtype=torch.float32)).numpy()


def post_training_quantize(model: ParallelCNN, bits: int) -> ParallelCNN:
    """Quantize a trained float model's weights per tensor; inputs are
    quantized at evaluation time through the returned model's settings."""
    quantized = ParallelCNN(
        input_length=model.k1 + model.k2 + 2,
        k1=model.k1, k2=model.k2,
        filters=model.conv1.weight.shape[0],
        hidden=model.fc1.weight.shape[0],
        weight_bits=None, input_bits=bits, input_range=model.input_range,
    )
    quantized.load_state_dict(model.state_dict())
    with torch.no_grad():
        for module in (quantized.conv1, quantized.conv2, quantized.fc1,
                       quantized.fc2):
            module.weight.copy_(quantize_weight_tensor(module.weight, bits))
    quantized.eval()
    return quantized


def train_cv(X, y, qat_bits=None, epochs: int = DEFAULT_EPOCHS,
             lr: float = DEFAULT_LR, seed: int = 0, n_folds: int = 5,
             hours_per_sample: float | None = None) -> CVResult:
    """Stratified k-fold cross validation; per-fold weights and metrics."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise ValueError("both classes must be present")
    if counts.min() < n_folds:
        raise ValueError(
            f"class with {counts.min()} samples cannot be split into "
            f"{n_folds} folds"
        )
    splitter = StratifiedKFold(n_splits=n_folds, shuffle=True, random_state=seed)
    folds = []
    for fold, (train_idx, test_idx) in enumerate(splitter.split(X, y)):
        model = train_model(X[train_idx], y[train_idx], X.shape[1],
                            qat_bits=qat_bits, epochs=epochs, lr=lr,
                            seed=seed + fold)
        logits = predict(model, X[test_idx])
        hours = (hours_per_sample * len(test_idx)
                 if hours_per_sample is not None else None)
        metrics = classification_metrics(logits, y[test_idx], hours=hours)
        folds.append(FoldResult(fold=fold, metrics=metrics,
                                params=model.export_params(),
                                test_index=test_idx))
    keys = sorted(folds[0].metrics)
    summary = {}
    for key in keys:
        vals = np.array([f.metrics[key] for f in folds], dtype=float)
        summary[f"{key}_mean"] = float(np.nanmean(vals))
        summary[f"{key}_std"] = float(np.nanstd(vals))
    return CVResult(folds=folds, summary=summary)


def export_best(result: CVResult, X, y, out_dir) -> dict[str, Path]:
    """Write the best fold's MXW1 weights and its held-out MXI1 set."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    best = result.best
    weights = out / "weights.mxw1"
    inputs = out / "holdout.mxi1"
    formats.write_weights(weights, best.params, order=formats.LAYER_ORDER)
    formats.write_inputs(inputs, np.asarray(X)[best.test_index],
                         np.asarray(y)[best.test_index])
    (out / "cv_metrics.json").write_text(json.dumps(
        {"summary": result.summary,
         "folds": [f.metrics for f in result.folds],
         "best_fold": best.fold}, indent=2, sort_keys=True) + "\n")
    return {"weights": weights, "inputs": inputs}
