"""Held-out accuracy and group-fairness gaps for linear classifiers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, GROUP_NAMES
from .errors import DataError


def predict(theta, X) -> np.ndarray:
    """1 where <x, theta> >= 0 (a score of exactly 0 predicts 1)."""
    X = np.asarray(X, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if X.shape[-1] != theta.size:
        raise DataError(f"dimension mismatch: X has {X.shape[-1]} columns, theta has {theta.size}")
    return (X @ theta >= 0).astype(np.int8)


@dataclass(frozen=True, eq=False)
class GroupRates:
    """Confusion statistics per group.

    ``positive[g, y]`` counts predicted positives among rows of group ``g``
    with true label ``y``; ``support[g, y]`` counts those rows.
    """

    positive: np.ndarray
    support: np.ndarray

    @property
    def rate(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.positive / self.support

    @property
    def tpr(self) -> np.ndarray:
        return self.rate[:, 1]

    @property
    def fpr(self) -> np.ndarray:
        return self.rate[:, 0]

    @property
    def group_accuracy(self) -> np.ndarray:
        correct = self.positive[:, 1] + (self.support[:, 0] - self.positive[:, 0])
        with np.errstate(invalid="ignore", divide="ignore"):
            return correct / self.support.sum(axis=1)

    def require_cells(self) -> None:
        for g in (0, 1):
            for y in (0, 1):
                if self.support[g, y] == 0:
                    raise DataError(f"empty cell (group {GROUP_NAMES[g]}, y={y}): rate undefined")


def group_rates(theta, test: Dataset, strict: bool = True, pred: np.ndarray | None = None) -> GroupRates:
    """Per-cell positive-prediction counts. ``strict`` rejects empty cells."""
    pred = predict(theta, test.X) if pred is None else np.asarray(pred)
    positive = np.zeros((2, 2), dtype=np.int64)
    support = np.zeros((2, 2), dtype=np.int64)
    for g in (0, 1):
        for y in (0, 1):
            mask = (test.s == g) & (test.y == y)
            support[g, y] = int(mask.sum())
            positive[g, y] = int(pred[mask].sum())
    rates = GroupRates(positive=positive, support=support)
    if strict:
        rates.require_cells()
    return rates


def aeod(rates: GroupRates) -> float:
    """Half the sum over labels of the absolute gap in positive rates between groups."""
    rates.require_cells()
    r = rates.rate
    return 0.5 * float(abs(r[0, 1] - r[1, 1]) + abs(r[0, 0] - r[1, 0]))


def dempar_diff(rates: GroupRates) -> float:
    """Gap in marginal positive-prediction rate between groups."""
    n = rates.support.sum(axis=1)
    if (n == 0).any():
        raise DataError("demographic parity needs both groups nonempty")
    p = rates.positive.sum(axis=1) / n
    return float(abs(p[0] - p[1]))


def eqopp_diff(rates: GroupRates) -> float:
    if (rates.support[:, 1] == 0).any():
        raise DataError("equality of opportunity needs positives in both groups")
    return float(abs(rates.tpr[0] - rates.tpr[1]))


def subgroup_acc_diff(rates: GroupRates) -> float:
    if (rates.support.sum(axis=1) == 0).any():
        raise DataError("subgroup accuracy needs both groups nonempty")
    acc = rates.group_accuracy
    return float(abs(acc[0] - acc[1]))


def accuracy(theta, test: Dataset) -> float:
    if test.n == 0:
        raise DataError("accuracy of an empty test set is undefined")
    return float(np.mean(predict(theta, test.X) == test.y))


def report(theta, test: Dataset, pred: np.ndarray | None = None) -> dict:
    """All four fairness gaps plus accuracy, as a flat dict."""
    pred = predict(theta, test.X) if pred is None else np.asarray(pred)
    rates = group_rates(theta, test, strict=True, pred=pred)
    return {
        "accuracy": float(np.mean(pred == test.y)),
        "aeod": aeod(rates),
        "dempar": dempar_diff(rates),
        "eqopp": eqopp_diff(rates),
        "subgroup_acc_diff": subgroup_acc_diff(rates),
    }
