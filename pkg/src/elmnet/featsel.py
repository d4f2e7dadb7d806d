"""Filter-style feature ranking: two-class F-score and multi-class Fisher score."""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .linalg import as_matrix

SENTINEL = 1e12
METHODS = ("f_score", "fisher")


@dataclass(frozen=True)
class FeatureRanking:
    method: str
    scores: np.ndarray
    order: tuple

    def priority_list(self, k=None):
        """Bracketed index list, e.g. ``[3 7 1]``."""
        idx = self.order if k is None else select_top_k(self, k)
        return "[" + " ".join(str(i) for i in idx) + "]"


def _ranking(method, scores):
    scores = np.asarray(scores, dtype=float)
    # stable sort on -score keeps lower indices first among ties
    order = tuple(int(i) for i in np.argsort(-scores, kind="stable"))
    scores.setflags(write=False)
    return FeatureRanking(method, scores, order)


def _ratio(num, den):
    out = np.zeros_like(num)
    pos = den > 0
    out[pos] = num[pos] / den[pos]
    out[~pos & (num > 0)] = SENTINEL
    return np.minimum(out, SENTINEL)


def _groups(X, labels, need_binary):
    X = as_matrix(X, "X")
    labels = list(labels)
    if len(labels) != X.shape[0]:
        raise DataError(f"X has {X.shape[0]} rows but {len(labels)} labels were given")
    classes = sorted(set(labels))
    if need_binary and len(classes) != 2:
        raise ConfigError(f"f_score needs exactly two classes, got {len(classes)}")
    if len(classes) < 2:
        raise ConfigError("feature ranking needs at least two classes")
    y = np.array([classes.index(v) for v in labels])
    parts = [X[y == k] for k in range(len(classes))]
    if any(p.shape[0] < 2 for p in parts):
        raise DataError("every class needs at least two samples for feature ranking")
    return X, parts


def f_score(X, labels):
    """Per-feature ``((m+ - m)^2 + (m- - m)^2) / (var+ + var-)`` with sample
    variances; zero variance scores 0 (no separation) or 1e12."""
    X, (a, b) = _groups(X, labels, need_binary=True)
    mean = X.mean(axis=0)
    num = (a.mean(axis=0) - mean) ** 2 + (b.mean(axis=0) - mean) ** 2
    den = a.var(axis=0, ddof=1) + b.var(axis=0, ddof=1)
    return _ranking("f_score", _ratio(num, den))


def fisher_score(X, labels):
    """Per-feature ``sum_k n_k (mu_k - mu)^2 / sum_k n_k sigma_k^2``."""
    X, parts = _groups(X, labels, need_binary=False)
    mean = X.mean(axis=0)
    num = np.zeros(X.shape[1])
    den = np.zeros(X.shape[1])
    for p in parts:
        n_k = p.shape[0]
        num += n_k * (p.mean(axis=0) - mean) ** 2
        den += n_k * p.var(axis=0)
    return _ranking("fisher", _ratio(num, den))


def rank(X, labels, method):
    if method == "f_score":
        return f_score(X, labels)
    if method == "fisher":
        return fisher_score(X, labels)
    raise ConfigError(f"unknown ranking method {method!r}; expected one of {METHODS}")


def default_method(labels):
    return "f_score" if len(set(labels)) == 2 else "fisher"


def select_top_k(ranking, k):
    d = len(ranking.order)
    if not 1 <= k <= d:
        raise ConfigError(f"k must lie in [1, {d}], got {k}")
    return list(ranking.order[:k])


def write_ranking_csv(fh, ranking, feature_names):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["feature_index", "feature_name", "method", "score", "rank"])
    for r, j in enumerate(ranking.order, 1):
        w.writerow([j, feature_names[j], ranking.method, repr(float(ranking.scores[j])), r])
