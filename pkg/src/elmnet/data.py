"""Labeled CSV ingestion, encoding, normalization and stratified splitting.

Every statistic used to transform features (category vocabularies, medians
for imputation, means and standard deviations) is computed from training
rows only and stored in a :class:`Preprocessor`, which is what gets saved
with a model and replayed at scoring time.
"""

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConfigError, ParseError, SchemaError, StratificationError

NUMERIC = "numeric"
CATEGORICAL = "categorical"
MISSING_TOKEN = "∅"
TRAIN_FRACTION = 0.70


@dataclass
class RawTable:
    """Typed but unencoded columns. Cells are kept as strings ("" = missing)."""

    feature_names: list
    columns: dict
    labels: list
    kinds: dict

    @property
    def n_rows(self):
        return len(self.labels)

    def numeric_column(self, name):
        return np.array([float(c) if c != "" else np.nan for c in self.columns[name]])

    def select_rows(self, rows):
        rows = list(rows)
        return RawTable(
            list(self.feature_names),
            {k: [v[i] for i in rows] for k, v in self.columns.items()},
            [self.labels[i] for i in rows],
            dict(self.kinds),
        )


def _is_number(cell):
    try:
        return math.isfinite(float(cell))
    except ValueError:
        return False


def infer_kind(cells):
    if all(c == "" or _is_number(c) for c in cells):
        return NUMERIC
    return CATEGORICAL


def table_from_rows(header, rows, label_column, overrides=None):
    """Build a :class:`RawTable` from already-split string rows."""
    overrides = dict(overrides or {})
    header = [h.strip() for h in header]
    if label_column is not None and label_column not in header:
        raise SchemaError(f"label column {label_column!r} not found in header {header}")
    if len(set(header)) != len(header):
        raise SchemaError("duplicate column names in header")
    for name, kind in overrides.items():
        if name not in header or name == label_column:
            raise ConfigError(f"type override for unknown feature column {name!r}")
        if kind not in (NUMERIC, CATEGORICAL):
            raise ConfigError(f"column type must be numeric or categorical, got {kind!r}")

    label_at = None if label_column is None else header.index(label_column)
    names = [h for h in header if h != label_column]
    cols = {h: [] for h in names}
    labels = []
    for lineno, row in rows:
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(row)}", row=lineno)
        if label_at is None:
            labels.append(None)
        else:
            label = row[label_at].strip()
            if label == "":
                raise ParseError(f"empty label in column {label_column!r}", row=lineno)
            labels.append(label)
        for h, cell in zip(header, row):
            if h != label_column:
                cols[h].append(cell.strip())

    kinds = {}
    for h in names:
        kind = overrides.get(h) or infer_kind(cols[h])
        if kind == NUMERIC and not all(c == "" or _is_number(c) for c in cols[h]):
            bad = next(i for i, c in enumerate(cols[h]) if c != "" and not _is_number(c))
            raise ParseError(
                f"column {h!r} forced numeric but holds {cols[h][bad]!r}", row=rows[bad][0]
            )
        kinds[h] = kind
    return RawTable(names, cols, labels, kinds)


def load_csv(path, label_column, overrides=None, require_label=True):
    """Read a comma-separated UTF-8 file with a header row.

    A column is numeric when every non-empty cell parses as a finite real;
    ``overrides`` maps column names to ``"numeric"`` or ``"categorical"``.
    Reported row numbers are 1-based file lines (the header is line 1).
    With ``require_label=False`` a missing label column is tolerated and the
    labels come back as ``None``.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path} is empty", row=1) from None
        except csv.Error as exc:
            raise ParseError(str(exc), row=1) from exc
        rows = []
        try:
            for row in reader:
                if not row or all(c.strip() == "" for c in row):
                    continue
                rows.append((reader.line_num, row))
        except (csv.Error, UnicodeDecodeError) as exc:
            raise ParseError(str(exc), row=reader.line_num + 1) from exc
    if not rows:
        raise ParseError(f"{path} has a header but no data rows", row=2)
    if not require_label and label_column not in [h.strip() for h in header]:
        label_column = None
    return table_from_rows(header, rows, label_column, overrides)


def write_csv(path, table):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(table.feature_names + ["label"])
        for i in range(table.n_rows):
            w.writerow([table.columns[h][i] for h in table.feature_names] + [table.labels[i]])


# --------------------------------------------------------------------------
# splitting


@dataclass(frozen=True)
class SplitAssignment:
    train_indices: tuple
    test_indices: tuple
    seed: int
    train_fraction: float = TRAIN_FRACTION

    @property
    def n_rows(self):
        return len(self.train_indices) + len(self.test_indices)


def _round_half_up(q):
    return math.floor(q + Fraction(1, 2))


def split_stratified(labels, train_fraction=TRAIN_FRACTION, seed=0):
    """Seeded stratified split.

    Class ``k`` gets ``floor(f * n_k + 1/2)`` training rows; a correction
    pass then trims from (or adds to) the largest classes, one row each,
    until the training total equals ``floor(f * n + 1/2)``. Rows within a
    class are drawn by a seeded shuffle.
    """
    if not 0 < train_fraction < 1:
        raise ConfigError("train_fraction must lie strictly between 0 and 1")
    frac = Fraction(str(train_fraction))
    classes = sorted(set(labels))
    members = {c: [i for i, y in enumerate(labels) if y == c] for c in classes}
    if len(classes) < 2:
        raise StratificationError("stratified split needs at least two classes")
    small = [c for c in classes if len(members[c]) < 2]
    if small:
        raise StratificationError(f"class(es) {small} have fewer than 2 samples")

    quota = {c: _round_half_up(frac * len(members[c])) for c in classes}
    target = _round_half_up(frac * len(labels))
    excess = sum(quota.values()) - target
    if excess:
        # only classes whose rounding went the "wrong" way are eligible, which
        # keeps every class within one row of f * n_k; among those, prefer
        # ones that keep both portions non-empty, then the largest
        step = -1 if excess > 0 else 1
        err = {c: quota[c] - frac * len(members[c]) for c in classes}
        eligible = [c for c in classes if (err[c] >= 0 if step < 0 else err[c] <= 0)]
        eligible.sort(key=lambda c: (
            not 0 < quota[c] + step < len(members[c]), -len(members[c]), classes.index(c)
        ))
        if len(eligible) < abs(excess):
            raise StratificationError("cannot meet the global training count")
        for c in eligible[: abs(excess)]:
            quota[c] += step

    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in classes:
        idx = np.array(members[c])
        perm = idx[rng.permutation(len(idx))]
        train.extend(perm[: quota[c]].tolist())
        test.extend(perm[quota[c]:].tolist())
    return SplitAssignment(tuple(sorted(train)), tuple(sorted(test)), int(seed), float(train_fraction))


def write_split(path, split):
    role = {i: "train" for i in split.train_indices}
    role.update({i: "test" for i in split.test_indices})
    with open(path, "w", encoding="utf-8") as fh:
        for i in sorted(role):
            fh.write(f"{i},{role[i]}\n")


def read_split(path, seed=0):
    train, test = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                idx, role = line.split(",")
                idx = int(idx)
            except ValueError:
                raise ParseError(f"bad split manifest entry {line!r}", row=lineno) from None
            if role == "train":
                train.append(idx)
            elif role == "test":
                test.append(idx)
            else:
                raise ParseError(f"role must be train or test, got {role!r}", row=lineno)
    n = len(train) + len(test)
    if sorted(train + test) != list(range(n)):
        raise ParseError("split manifest must cover every row index exactly once")
    return SplitAssignment(tuple(sorted(train)), tuple(sorted(test)), seed, len(train) / n)


# --------------------------------------------------------------------------
# encoding


@dataclass(frozen=True)
class ColumnEncoder:
    name: str
    kind: str
    mean: float
    std: float
    vocabulary: tuple = ()
    median: float = 0.0

    def codes(self, cells):
        """Raw cells to pre-normalization reals (codes or imputed numbers)."""
        if self.kind == CATEGORICAL:
            lookup = {v: i for i, v in enumerate(self.vocabulary)}
            unseen = len(self.vocabulary)
            return np.array(
                [lookup.get(c if c != "" else MISSING_TOKEN, unseen) for c in cells], dtype=float
            )
        vals = np.array([float(c) if c != "" else np.nan for c in cells])
        vals[np.isnan(vals)] = self.median
        return vals

    def transform(self, cells):
        v = self.codes(cells)
        if self.std == 0.0:
            return np.zeros_like(v)
        return (v - self.mean) / self.std

    def to_dict(self):
        return {
            "name": self.name,
            "kind": self.kind,
            "mean": self.mean,
            "std": self.std,
            "vocabulary": list(self.vocabulary),
            "median": self.median,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], d["kind"], d["mean"], d["std"], tuple(d["vocabulary"]), d["median"])


def _vocabulary(cells):
    counts = Counter(c if c != "" else MISSING_TOKEN for c in cells)
    return tuple(sorted(counts, key=lambda v: (-counts[v], v)))


def fit_column(name, kind, train_cells):
    """Derive one column's encoder from its training cells."""
    vocabulary, median = (), 0.0
    if kind == CATEGORICAL:
        vocabulary = _vocabulary(train_cells)
    else:
        vals = np.array([float(c) for c in train_cells if c != ""])
        median = float(np.median(vals)) if vals.size else 0.0
    enc = ColumnEncoder(name, kind, 0.0, 1.0, vocabulary, median)
    v = enc.codes(train_cells)
    mean = float(np.mean(v))
    std = float(np.std(v))
    # constant columns (up to rounding) normalize to zero
    if std <= 1e-12 * max(1.0, abs(mean)):
        std = 0.0
    return ColumnEncoder(name, kind, mean, std, vocabulary, median)


@dataclass(frozen=True)
class Preprocessor:
    encoders: tuple

    @property
    def feature_names(self):
        return [e.name for e in self.encoders]

    @classmethod
    def fit(cls, table, train_indices):
        rows = list(train_indices)
        return cls(
            tuple(
                fit_column(h, table.kinds[h], [table.columns[h][i] for i in rows])
                for h in table.feature_names
            )
        )

    def transform(self, table):
        """Encode every row of ``table``; columns must match the training schema."""
        missing = [n for n in self.feature_names if n not in table.columns]
        extra = [n for n in table.feature_names if n not in self.feature_names]
        if missing or extra:
            parts = []
            if missing:
                parts.append(f"missing column(s) {missing}")
            if extra:
                parts.append(f"unexpected column(s) {extra}")
            raise SchemaError("schema mismatch: " + "; ".join(parts))
        if table.n_rows == 0:
            return np.zeros((0, len(self.encoders)))
        for e in self.encoders:
            if e.kind == NUMERIC and not all(c == "" or _is_number(c) for c in table.columns[e.name]):
                raise SchemaError(f"column {e.name!r} was numeric at training time")
        return np.ascontiguousarray(
            np.column_stack([e.transform(table.columns[e.name]) for e in self.encoders])
        )

    def to_dict(self):
        return {"encoders": [e.to_dict() for e in self.encoders]}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(ColumnEncoder.from_dict(e) for e in d["encoders"]))


@dataclass
class Dataset:
    X: np.ndarray
    labels: list
    feature_names: list
    class_names: list
    preprocess: Preprocessor
    split: SplitAssignment
    raw: RawTable = field(default=None, repr=False)

    @property
    def X_train(self):
        return self.X[list(self.split.train_indices)]

    @property
    def X_test(self):
        return self.X[list(self.split.test_indices)]

    @property
    def y_train(self):
        return [self.labels[i] for i in self.split.train_indices]

    @property
    def y_test(self):
        return [self.labels[i] for i in self.split.test_indices]

    def select_features(self, indices):
        """A copy restricted to the given feature columns, in the given order."""
        indices = list(indices)
        return Dataset(
            np.ascontiguousarray(self.X[:, indices]),
            self.labels,
            [self.feature_names[i] for i in indices],
            self.class_names,
            Preprocessor(tuple(self.preprocess.encoders[i] for i in indices)),
            self.split,
            self.raw,
        )


def encode_and_normalize(table, split):
    if split.n_rows != table.n_rows:
        raise ConfigError(
            f"split covers {split.n_rows} rows but the table has {table.n_rows}"
        )
    pre = Preprocessor.fit(table, split.train_indices)
    return Dataset(
        pre.transform(table),
        list(table.labels),
        list(table.feature_names),
        sorted(set(table.labels)),
        pre,
        split,
        table,
    )


# --------------------------------------------------------------------------
# synthetic data

SYNTH_KINDS = ("two_gaussians", "planted_feature", "xor")


def _fmt(v):
    return repr(float(v))


def synth_table(kind, n, d, seed, offset=3.0, n_classes=2, informative=None):
    """Deterministic synthetic tables used by the tests and acceptance suite.

    ``two_gaussians``: labels benign/malware, class means -offset*1 and
    +offset*1, unit covariance, exactly n/2 rows per class for even n.

    ``planted_feature``: ``n_classes`` balanced classes ``c0, c1, ...``; the
    feature at index ``informative`` (default ``d - 1``) has class means
    spread evenly over [-2, 2] with sd 0.1, every other feature is N(0, 1).

    ``xor``: four unit-variance clusters at (+-offset, +-offset) in the first
    two features, labelled by the sign of the product; the rest is N(0, 1).
    """
    if n < 20 or d < 2:
        raise ConfigError("synthetic data needs n >= 20 and d >= 2")
    rng = np.random.default_rng(seed)
    if kind == "two_gaussians":
        y = np.arange(n) % 2
        X = rng.standard_normal((n, d)) + np.where(y == 1, offset, -offset)[:, None]
        names = ["benign", "malware"]
    elif kind == "planted_feature":
        if n_classes < 2:
            raise ConfigError("planted_feature needs at least two classes")
        informative = d - 1 if informative is None else informative
        if not 0 <= informative < d:
            raise ConfigError("informative feature index out of range")
        y = np.arange(n) % n_classes
        means = np.linspace(-2.0, 2.0, n_classes)
        X = rng.standard_normal((n, d))
        X[:, informative] = means[y] + 0.1 * rng.standard_normal(n)
        names = [f"c{k}" for k in range(n_classes)]
    elif kind == "xor":
        quadrant = np.arange(n) % 4
        sx = np.where(quadrant % 2 == 0, 1.0, -1.0)
        sy = np.where(quadrant < 2, 1.0, -1.0)
        X = rng.standard_normal((n, d))
        X[:, 0] += offset * sx
        X[:, 1] += offset * sy
        y = (sx * sy < 0).astype(int)
        names = ["benign", "malware"]
    else:
        raise ConfigError(f"unknown synthetic kind {kind!r}; expected one of {SYNTH_KINDS}")
    perm = rng.permutation(n)
    X, y = X[perm], y[perm]
    feature_names = [f"f{j}" for j in range(d)]
    columns = {h: [_fmt(v) for v in X[:, j]] for j, h in enumerate(feature_names)}
    return RawTable(feature_names, columns, [names[k] for k in y], {h: NUMERIC for h in feature_names})


def synth_dataset(kind, n, d, seed, offset=3.0, n_classes=2, informative=None,
                  train_fraction=TRAIN_FRACTION):
    table = synth_table(kind, n, d, seed, offset=offset, n_classes=n_classes, informative=informative)
    split = split_stratified(table.labels, train_fraction, seed)
    return encode_and_normalize(table, split)
