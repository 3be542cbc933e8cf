"""Evaluation metrics computed on the server's honest test set."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .data import Dataset


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    mean_ce_loss: float
    per_class_recall: tuple[float, ...]
    absent_classes: tuple[int, ...]  # classes missing from the test set (recall pinned at 1)


def sparse_categorical_accuracy(predictions, labels) -> float:
    """Fraction of predictions that exactly match the labels."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape or predictions.size == 0:
        raise ValueError(f"predictions {predictions.shape} vs labels {labels.shape}")
    return float(np.mean(predictions == labels))


def test_cross_entropy(model: nn.ModelParams, test_set: Dataset) -> float:
    """Mean softmax cross-entropy of the model over the full test set."""
    if len(test_set) == 0:
        raise ValueError("test set is empty")
    loss, _ = nn.softmax_cross_entropy(nn.forward(model, test_set.features), test_set.labels)
    return loss


def source_class_recall(predictions, labels, source_class: int) -> float:
    """TP / (TP + FN) restricted to the source class; 1.0 if the class is absent."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ValueError(f"predictions {predictions.shape} vs labels {labels.shape}")
    mask = labels == source_class
    if not mask.any():
        return 1.0
    return float(np.mean(predictions[mask] == source_class))


def evaluate_model(model: nn.ModelParams, test_set: Dataset) -> EvalResult:
    """Accuracy, mean loss and per-class recall in one pass over the test set."""
    predictions = nn.predict(model, test_set.features)
    recalls, absent = [], []
    for c in range(test_set.num_classes):
        mask = test_set.labels == c
        if mask.any():
            recalls.append(float(np.mean(predictions[mask] == c)))
        else:
            recalls.append(1.0)
            absent.append(c)
    return EvalResult(
        accuracy=sparse_categorical_accuracy(predictions, test_set.labels),
        mean_ce_loss=test_cross_entropy(model, test_set),
        per_class_recall=tuple(recalls),
        absent_classes=tuple(absent),
    )
