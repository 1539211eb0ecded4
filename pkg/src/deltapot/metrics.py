"""Evaluation metrics: RMSE and Pearson correlation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MetricLengthError(ValueError):
    """Prediction and label vectors disagree in length or are empty."""


class ConstantInputError(ValueError):
    """Correlation is undefined on a constant vector."""


@dataclass(frozen=True)
class MetricReport:
    rmse: float
    pearson: float  # nan when undefined (constant vector)
    n: int


def metric_rmse(pred: np.ndarray, target: np.ndarray) -> float:
    """Root of the mean squared error."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.ndim != 1:
        raise MetricLengthError(f"length mismatch: {pred.shape} vs {target.shape}")
    if pred.shape[0] == 0:
        raise MetricLengthError("empty vectors")
    return float(np.sqrt(np.mean((pred - target) ** 2)))


def metric_pearson(pred: np.ndarray, target: np.ndarray) -> float:
    """Product-moment correlation coefficient."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.ndim != 1:
        raise MetricLengthError(f"length mismatch: {pred.shape} vs {target.shape}")
    if pred.shape[0] < 2:
        raise MetricLengthError("correlation needs at least 2 points")
    dp = pred - pred.mean()
    dt = target - target.mean()
    denom = np.sqrt((dp**2).sum()) * np.sqrt((dt**2).sum())
    if denom == 0.0:
        raise ConstantInputError("correlation undefined on a constant vector")
    return float((dp * dt).sum() / denom)


def metric_report(pred: np.ndarray, target: np.ndarray) -> MetricReport:
    """RMSE and Pearson together; Pearson is nan where undefined."""
    rmse = metric_rmse(pred, target)
    try:
        pearson = metric_pearson(pred, target)
    except (ConstantInputError, MetricLengthError):
        pearson = float("nan")
    return MetricReport(rmse=rmse, pearson=pearson, n=int(np.asarray(pred).shape[0]))
