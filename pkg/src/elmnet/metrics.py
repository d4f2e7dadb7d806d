"""Confusion counts and the accuracy ratio (TP + TN) / (TP + FN + TN + FP)."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError, UndefinedMetricError


@dataclass(frozen=True)
class ConfusionCounts:
    """Binary counts pooled one-vs-rest on ``positive_class``, plus the full
    confusion matrix (rows = true class, columns = predicted class)."""

    tp: int
    tn: int
    fp: int
    fn: int
    classes: tuple
    per_class: np.ndarray
    positive_class: str

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn


def confusion(true_labels, predicted_labels, positive_class, classes=None):
    true_labels = list(true_labels)
    predicted_labels = list(predicted_labels)
    if len(true_labels) != len(predicted_labels):
        raise ShapeError(
            f"{len(true_labels)} true labels but {len(predicted_labels)} predictions"
        )
    if not true_labels:
        raise ShapeError("nothing to evaluate")
    if classes is None:
        classes = sorted(set(true_labels) | set(predicted_labels))
    classes = tuple(classes)
    if positive_class not in classes:
        raise ConfigError(f"positive class {positive_class!r} is not one of {list(classes)}")
    index = {c: i for i, c in enumerate(classes)}
    try:
        t = np.array([index[y] for y in true_labels])
        p = np.array([index[y] for y in predicted_labels])
    except KeyError as exc:
        raise ConfigError(f"label {exc.args[0]!r} is not one of {list(classes)}") from None

    m = np.zeros((len(classes), len(classes)), dtype=np.int64)
    np.add.at(m, (t, p), 1)
    pos = index[positive_class]
    tp = int(m[pos, pos])
    fn = int(m[pos].sum() - tp)
    fp = int(m[:, pos].sum() - tp)
    tn = int(m.sum() - tp - fn - fp)
    m.setflags(write=False)
    return ConfusionCounts(tp, tn, fp, fn, classes, m, positive_class)


def accuracy(c):
    total = c.tp + c.fn + c.tn + c.fp
    if total == 0:
        raise UndefinedMetricError("accuracy of an empty evaluation is undefined")
    return (c.tp + c.tn) / total


def fraction_correct(c):
    """Diagonal share of the full confusion matrix (multi-class accuracy)."""
    total = int(c.per_class.sum())
    if total == 0:
        raise UndefinedMetricError("accuracy of an empty evaluation is undefined")
    return int(np.trace(c.per_class)) / total
