"""Hidden-neuron groups and construction of the hidden-layer matrix H.

Six neuron kinds are supported. Projection kinds (``linear``, ``sigmoid``,
``tanh``) compute ``phi(x . w_j + b_j)``; radial kinds (``rbf_l1``,
``rbf_l2``, ``rbf_linf``) compute ``exp(-dist_p(x, c_j)**2 / s_j)``.

Random parameters for neuron ``j`` of group ``g`` come from their own
``SeedSequence(seed, spawn_key=(g, j))`` substream, so a layer of 50
sigmoid neurons begins with exactly the 10 neurons of a 10-neuron layer
built from the same seed.
"""

import re
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist
from scipy.special import expit

from .errors import ConfigError, ShapeError
from .linalg import as_matrix

PROJECTION_KINDS = ("linear", "sigmoid", "tanh")
RBF_KINDS = ("rbf_l1", "rbf_l2", "rbf_linf")
KINDS = PROJECTION_KINDS + RBF_KINDS

_METRIC = {"rbf_l1": "cityblock", "rbf_l2": "euclidean", "rbf_linf": "chebyshev"}
_DISPLAY = {
    "linear": "Linear",
    "sigmoid": "Sigmoid",
    "tanh": "Tanh",
    "rbf_l1": "Rbf_l1",
    "rbf_l2": "Rbf_l2",
    "rbf_linf": "Rbf_linf",
}
# spellings seen in result tables and hand-written grids
_ALIASES = {"sigm": "sigmoid", "lin": "linear", "rbf_inf": "rbf_linf"}

WIDTH_SAMPLE_ROWS = 256


def canonical_kind(token):
    kind = token.strip().lower().replace("-", "_")
    kind = _ALIASES.get(kind, kind)
    if kind not in KINDS:
        raise ConfigError(f"unknown activation kind {token!r}; expected one of {', '.join(KINDS)}")
    return kind


@dataclass(frozen=True)
class GroupSpec:
    kind: str
    count: int

    def __post_init__(self):
        object.__setattr__(self, "kind", canonical_kind(self.kind))
        if int(self.count) != self.count or self.count < 1:
            raise ConfigError(f"neuron count must be a positive integer, got {self.count!r}")
        object.__setattr__(self, "count", int(self.count))


@dataclass(frozen=True)
class LayerSpec:
    """Ordered neuron groups; H columns follow this order exactly."""

    groups: tuple

    def __post_init__(self):
        groups = tuple(g if isinstance(g, GroupSpec) else GroupSpec(*g) for g in self.groups)
        if not groups:
            raise ConfigError("layer spec needs at least one neuron group")
        object.__setattr__(self, "groups", groups)

    @property
    def n_hidden(self):
        return sum(g.count for g in self.groups)

    @classmethod
    def parse(cls, text):
        """Parse ``"tanh:1000,rbf_l1:1000"`` or ``"Tanh (1000), Rbf_l1(1000)"``."""
        groups = []
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            m = re.fullmatch(r"([A-Za-z_\-]+[A-Za-z0-9_\-]*)\s*(?::\s*(\d+)|\(\s*(\d+)\s*\))", part)
            if m is None:
                raise ConfigError(f"cannot parse neuron group {part!r}; use kind:count")
            groups.append(GroupSpec(m.group(1), int(m.group(2) or m.group(3))))
        return cls(tuple(groups))

    def token(self):
        """Machine form, e.g. ``tanh:1000,rbf_l1:1000``."""
        return ",".join(f"{g.kind}:{g.count}" for g in self.groups)

    def display(self):
        """Table form, e.g. ``Tanh(1000), Rbf_l1(1000)``."""
        return ", ".join(f"{_DISPLAY[g.kind]}({g.count})" for g in self.groups)

    def __str__(self):
        return self.token()


@dataclass(frozen=True, eq=False)
class NeuronGroup:
    """An instantiated group. Projection kinds carry ``weights`` (d x count)
    and ``biases``; radial kinds carry ``centers`` (count x d) and ``widths``."""

    kind: str
    count: int
    weights: np.ndarray = None
    biases: np.ndarray = None
    centers: np.ndarray = None
    widths: np.ndarray = None

    def __post_init__(self):
        if self.kind in PROJECTION_KINDS:
            if self.weights is None or self.biases is None or self.centers is not None:
                raise ConfigError(f"{self.kind} group needs weights and biases only")
            if self.weights.shape[1] != self.count or self.biases.shape != (self.count,):
                raise ShapeError(f"{self.kind} group parameters do not match count {self.count}")
        elif self.kind in RBF_KINDS:
            if self.centers is None or self.widths is None or self.weights is not None:
                raise ConfigError(f"{self.kind} group needs centers and widths only")
            if self.centers.shape[0] != self.count or self.widths.shape != (self.count,):
                raise ShapeError(f"{self.kind} group parameters do not match count {self.count}")
            if not np.all(self.widths > 0):
                raise ConfigError("rbf widths must be strictly positive")
        else:
            raise ConfigError(f"unknown activation kind {self.kind!r}")
        for name in ("weights", "biases", "centers", "widths"):
            arr = getattr(self, name)
            if arr is not None:
                arr.setflags(write=False)

    @property
    def n_inputs(self):
        if self.kind in PROJECTION_KINDS:
            return self.weights.shape[0]
        return self.centers.shape[1]


def _rng(seed, *key):
    # (g,) keys group-level draws, (g, j) keys neuron j of group g
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _median_distance(sample, metric):
    if sample.shape[0] < 2:
        return 1.0
    s = float(np.median(pdist(sample, metric=metric)))
    return s if s > 0 else 1.0


def instantiate(spec, d, training_sample=None, seed=0):
    """Draw random parameters for every group of ``spec``.

    Projection weights and biases are i.i.d. uniform on [-1, 1]. RBF centers
    are training rows chosen uniformly with replacement; widths are
    log-uniform on [s/2, 2s] with ``s`` the median pairwise distance (same
    norm as the group) among at most 256 training rows.
    """
    if d < 1:
        raise ConfigError("input dimension must be at least 1")
    seed = int(seed)
    groups = []
    for gi, g in enumerate(spec.groups):
        if g.kind in PROJECTION_KINDS:
            weights = np.empty((d, g.count))
            biases = np.empty(g.count)
            for j in range(g.count):
                draw = _rng(seed, gi, j).uniform(-1.0, 1.0, size=d + 1)
                weights[:, j] = draw[:d]
                biases[j] = draw[d]
            groups.append(NeuronGroup(g.kind, g.count, weights=weights, biases=biases))
            continue

        if training_sample is None or len(training_sample) == 0:
            raise ConfigError(f"{g.kind} group needs a non-empty training sample for its centers")
        xs = as_matrix(training_sample, "training_sample")
        if xs.shape[1] != d:
            raise ShapeError(f"training sample has {xs.shape[1]} columns, expected {d}")
        n = xs.shape[0]
        group_rng = _rng(seed, gi)
        if n > WIDTH_SAMPLE_ROWS:
            rows = np.sort(group_rng.choice(n, size=WIDTH_SAMPLE_ROWS, replace=False))
            sample = xs[rows]
        else:
            sample = xs
        s = _median_distance(sample, _METRIC[g.kind])
        lo, hi = np.log(0.5 * s), np.log(2.0 * s)

        centers = np.empty((g.count, d))
        widths = np.empty(g.count)
        for j in range(g.count):
            rng = _rng(seed, gi, j)
            centers[j] = xs[rng.integers(n)]
            widths[j] = np.exp(rng.uniform(lo, hi))
        groups.append(NeuronGroup(g.kind, g.count, centers=centers, widths=widths))
    return groups


def apply(group, x_block):
    """Activations of one group for every row of ``x_block`` (rows x count)."""
    x = as_matrix(x_block, "x_block")
    if x.shape[1] != group.n_inputs:
        raise ShapeError(f"x_block has {x.shape[1]} columns, group expects {group.n_inputs}")
    kind = group.kind
    if kind in PROJECTION_KINDS:
        z = x @ group.weights + group.biases
        if kind == "sigmoid":
            return expit(z)
        if kind == "tanh":
            return np.tanh(z)
        return z
    if kind == "rbf_l2":
        sq = cdist(x, group.centers, metric="sqeuclidean")
    else:
        dist = cdist(x, group.centers, metric=_METRIC[kind])
        sq = dist * dist
    return np.exp(-sq / group.widths)


def build_H(groups, x_block):
    """Concatenate the activation blocks of ``groups`` column-wise, in order."""
    if not groups:
        raise ConfigError("no neuron groups")
    blocks = [apply(g, x_block) for g in groups]
    return np.ascontiguousarray(np.hstack(blocks))
