"""Experiment configuration, grid files and the train/evaluate row runner."""

import csv
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import featsel, model
from .activation import LayerSpec
from .data import encode_and_normalize, load_csv, split_stratified
from .errors import ConfigError, ElmError
from .metrics import accuracy, fraction_correct

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 2000
BUNDLED_PREFIX = "bundled:"
REPORT_COLUMNS = (
    "feature_policy",
    "priority_list",
    "combo",
    "train_accuracy",
    "test_accuracy",
    "train_residual",
    "wall_time_ms",
    "seed",
    "error",
)
TIMING_COLUMNS = ("wall_time_ms",)
# expected test accuracy of a 2000-neuron rbf_linf layer on CTU-13 flows
ANCHOR_BAND = (0.90, 0.98)
ANCHOR_COMBO = "rbf_linf:2000"


def bundled_path(name):
    """Filesystem path of a file shipped inside the package."""
    for sub in ("grids", "datasets"):
        res = resources.files("elmnet").joinpath(sub, name)
        if res.is_file():
            return str(res)
    raise ConfigError(f"no bundled file named {name!r}")


def resolve_path(path):
    if path is not None and path.startswith(BUNDLED_PREFIX):
        return bundled_path(path[len(BUNDLED_PREFIX):])
    return path


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class FeaturePolicy:
    """``all`` or ``top:K:method``."""

    k: int = None
    method: str = None

    @classmethod
    def parse(cls, text):
        text = text.strip()
        if text == "all":
            return cls()
        parts = text.split(":")
        if len(parts) != 3 or parts[0] != "top":
            raise ConfigError(f"feature policy must be 'all' or 'top:K:method', got {text!r}")
        try:
            k = int(parts[1])
        except ValueError:
            raise ConfigError(f"top-k needs an integer k, got {parts[1]!r}") from None
        if k < 1:
            raise ConfigError("top-k needs k >= 1")
        if parts[2] not in featsel.METHODS:
            raise ConfigError(f"unknown ranking method {parts[2]!r}; expected one of {featsel.METHODS}")
        return cls(k, parts[2])

    def __str__(self):
        return "all" if self.k is None else f"top:{self.k}:{self.method}"


def parse_grid(text):
    """Parse a grid file into ``(combos, budget)``.

    Blank lines, ``#`` comments and ``[section]`` labels are skipped; a
    ``budget = N`` line sets the neuron budget; every other line is a layer.
    """
    combos, budget = [], None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" in line:
            key, value = (s.strip() for s in line.split("=", 1))
            if key != "budget":
                raise ConfigError(f"grid line {lineno}: unknown setting {key!r}")
            try:
                budget = int(value)
            except ValueError:
                raise ConfigError(f"grid line {lineno}: budget must be an integer") from None
            continue
        try:
            combos.append(LayerSpec.parse(line))
        except ConfigError as exc:
            raise ConfigError(f"grid line {lineno}: {exc}") from None
    return combos, budget


def load_grid(path):
    path = resolve_path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_grid(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read grid file {path}: {exc.strerror}") from exc


def check_budget(combos, budget):
    if not combos:
        raise ConfigError("no layer combos configured")
    if budget is None:
        return
    for c in combos:
        if c.n_hidden != budget:
            raise ConfigError(
                f"combo {c.token()} has {c.n_hidden} neurons, budget is {budget}"
            )


@dataclass
class ExperimentConfig:
    data: str
    label_col: str
    combos: list
    policies: list = field(default_factory=lambda: [FeaturePolicy()])
    positive_class: str = None
    seed: int = 0
    ridge: float = None
    budget: int = None
    col_types: dict = field(default_factory=dict)
    block_size: int = model.BLOCK_SIZE
    train_fraction: float = 0.70

    def validate(self):
        check_budget(self.combos, self.budget)
        if not self.policies:
            raise ConfigError("no feature policies configured")
        if self.ridge is not None and self.ridge < 0:
            raise ConfigError("ridge must be non-negative")
        if self.block_size < 1:
            raise ConfigError("block size must be positive")


def row_seed(seed, row_index):
    """Per-row seed, a hash of (seed, row index) independent of scheduling."""
    return int(np.random.SeedSequence(seed, spawn_key=(row_index,)).generate_state(1)[0])


# --------------------------------------------------------------------------
# pipeline


class StageError(ElmError):
    """Wraps an error with the pipeline stage it came from."""

    def __init__(self, stage, exc):
        super().__init__(f"[{stage}] {exc}")
        self.stage = stage
        self.exit_code = getattr(exc, "exit_code", 1)


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        log.debug("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and isinstance(exc, ElmError) and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


@dataclass
class Prepared:
    """A dataset after reading, filtering and splitting."""

    dataset: object
    positive_class: str
    rankings: dict = field(default_factory=dict)

    def ranking(self, method):
        if method not in self.rankings:
            self.rankings[method] = featsel.rank(self.dataset.X_train, self.dataset.y_train, method)
        return self.rankings[method]

    def features_for(self, policy):
        """(column indices, priority list text) for a feature policy."""
        if policy.k is None:
            r = self.ranking(featsel.default_method(self.dataset.y_train))
            return list(range(len(self.dataset.feature_names))), r.priority_list()
        r = self.ranking(policy.method)
        idx = featsel.select_top_k(r, policy.k)
        return idx, r.priority_list(policy.k)


def prepare(cfg, split=None):
    """Reading, filtering and splitting stages.

    The stratified split depends only on labels, so it is drawn first and
    the filtering stage (encoding, normalization, rankings) sees training
    rows only.
    """
    with _Stage("reading"):
        table = load_csv(resolve_path(cfg.data), cfg.label_col, cfg.col_types)
    with _Stage("filtering"):
        if split is None:
            split = split_stratified(table.labels, cfg.train_fraction, cfg.seed)
        ds = encode_and_normalize(table, split)
        pos = cfg.positive_class
        if pos is None:
            pos = ds.class_names[-1]
        elif pos not in ds.class_names:
            raise ConfigError(f"positive class {pos!r} is not one of {ds.class_names}")
        prepared = Prepared(ds, pos)
        for policy in cfg.policies:
            prepared.features_for(policy)
    with _Stage("splitting"):
        if not split.train_indices or not split.test_indices:
            raise ConfigError("split leaves an empty training or test portion")
    return prepared


def report_accuracy(counts):
    if len(counts.classes) == 2:
        return accuracy(counts)
    return fraction_correct(counts)


def run_row(prepared, policy, combo, seed, ridge=None, block_size=model.BLOCK_SIZE):
    """One fit/evaluate cycle. Returns ``(row dict, fitted model)``."""
    ds = prepared.dataset
    features, priority = prepared.features_for(policy)
    row = {
        "feature_policy": str(policy),
        "priority_list": priority,
        "combo": combo.display(),
        "seed": seed,
        "error": "",
    }
    t0 = time.perf_counter()
    with _Stage("hp-elm"):
        Xtr = np.ascontiguousarray(ds.X_train[:, features])
        m = model.fit(
            combo, Xtr, ds.y_train, seed=seed, ridge=ridge, block_size=block_size,
            preprocess=ds.preprocess, feature_indices=features,
        )
    with _Stage("evaluation"):
        Xte = np.ascontiguousarray(ds.X_test[:, features])
        tr = model.evaluate(m, Xtr, ds.y_train, prepared.positive_class)
        te = model.evaluate(m, Xte, ds.y_test, prepared.positive_class)
    row.update(
        train_accuracy=report_accuracy(tr),
        test_accuracy=report_accuracy(te),
        train_residual=m.train_residual,
        wall_time_ms=(time.perf_counter() - t0) * 1000.0,
    )
    return row, m


def _failed_row(policy, priority, combo, seed, exc):
    return {
        "feature_policy": str(policy),
        "priority_list": priority,
        "combo": combo.display(),
        "train_accuracy": None,
        "test_accuracy": None,
        "train_residual": None,
        "wall_time_ms": None,
        "seed": seed,
        "error": str(exc),
    }


_WORKER_STATE = {}


def _init_worker(prepared, ridge, block_size):
    _WORKER_STATE.update(prepared=prepared, ridge=ridge, block_size=block_size)


def _grid_task(task):
    index, policy, combo, seed = task
    st = _WORKER_STATE
    try:
        row, _ = run_row(st["prepared"], policy, combo, seed, st["ridge"], st["block_size"])
    except ElmError as exc:
        _, priority = st["prepared"].features_for(policy)
        row = _failed_row(policy, priority, combo, seed, exc)
    return index, row


def run_grid(cfg, prepared=None, jobs=1):
    """Every feature policy x combo, in configured order, on one shared split.

    Row failures land in the ``error`` column and the run continues.
    """
    cfg.validate()
    if prepared is None:
        prepared = prepare(cfg)
    tasks = []
    for policy in cfg.policies:
        for combo in cfg.combos:
            i = len(tasks)
            tasks.append((i, policy, combo, row_seed(cfg.seed, i)))

    if jobs <= 1:
        _init_worker(prepared, cfg.ridge, cfg.block_size)
        results = [_grid_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(
            max_workers=jobs,
            initializer=_init_worker,
            initargs=(prepared, cfg.ridge, cfg.block_size),
        ) as pool:
            results = list(pool.map(_grid_task, tasks))
    rows = [row for _, row in sorted(results, key=lambda r: r[0])]
    check_anchor(cfg.data, rows)
    return rows


def check_anchor(data_path, rows):
    """Warn when a CTU-13 input gives rbf_linf(2000) accuracy off the usual band."""
    if data_path is None or "ctu" not in str(data_path).lower():
        return
    lo, hi = ANCHOR_BAND
    target = LayerSpec.parse(ANCHOR_COMBO).display()
    for row in rows:
        acc = row.get("test_accuracy")
        if row["combo"] == target and acc is not None and not lo <= acc <= hi:
            log.warning(
                "rbf_linf(2000) test accuracy %.4f is outside the expected %.2f-%.2f band",
                acc, lo, hi,
            )


# --------------------------------------------------------------------------
# reporting


def _cell(key, value):
    if value is None:
        return ""
    if key in ("train_accuracy", "test_accuracy"):
        return f"{value:.6f}"
    if key == "train_residual":
        return f"{value:.6e}"
    if key == "wall_time_ms":
        return f"{value:.1f}"
    return str(value)


def report_csv(rows, drop=()):
    buf = io.StringIO()
    cols = [c for c in REPORT_COLUMNS if c not in drop]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_cell(c, r.get(c)) for c in cols])
    return buf.getvalue()


def report_table(rows):
    """Human-readable report, accuracies to four decimals."""
    lines = []
    width = max([len(r["combo"]) for r in rows] + [8])
    current = None
    for r in rows:
        head = f"{r['feature_policy']} {r['priority_list']}"
        if head != current:
            lines.append(head)
            current = head
        if r["error"]:
            lines.append(f"  {r['combo']:<{width}}  error: {r['error']}")
        else:
            lines.append(
                f"  {r['combo']:<{width}}  {r['train_accuracy']:.4f}  {r['test_accuracy']:.4f}"
            )
    return "\n".join(lines)
