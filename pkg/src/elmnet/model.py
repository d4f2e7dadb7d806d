"""ELM classifier: fit, predict, evaluate, save and load.

Training streams row blocks through the hidden layer into a normal-equation
accumulator and solves for the output weights. Further streaming passes
refine the solution against H and measure the training residual
``||H beta - T||_F``.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import __version__
from .activation import LayerSpec, NeuronGroup, build_H, instantiate
from .data import Preprocessor
from .errors import DataError, DegenerateTargetError, ShapeError, UnknownClassError
from .linalg import NormalEqAccumulator, as_matrix, solve_normal
from .metrics import confusion

BLOCK_SIZE = 4096
REFINE_PASSES = 2
FORMAT = "elmnet-model"


@dataclass(frozen=True, eq=False)
class ElmModel:
    spec: LayerSpec
    groups: tuple
    beta: np.ndarray
    classes: tuple
    seed: int
    train_residual: float
    ridge_used: float
    preprocess: Preprocessor = None
    # columns of the preprocessed table that feed the network
    feature_indices: tuple = None

    @property
    def n_inputs(self):
        return self.groups[0].n_inputs

    @property
    def n_hidden(self):
        return self.beta.shape[0]


@dataclass(frozen=True)
class Prediction:
    scores: np.ndarray
    label: str


def one_hot(labels, classes, scale=1.0):
    index = {c: i for i, c in enumerate(classes)}
    T = np.zeros((len(labels), len(classes)))
    try:
        T[np.arange(len(labels)), [index[y] for y in labels]] = scale
    except KeyError as exc:
        raise UnknownClassError(f"label {exc.args[0]!r} was not seen in training") from None
    return T


def _blocks(n, block_size):
    for start in range(0, n, block_size):
        yield slice(start, min(start + block_size, n))


def fit(spec, X, labels, seed=0, ridge=None, block_size=BLOCK_SIZE,
        preprocess=None, feature_indices=None, target_scale=1.0,
        refine_passes=REFINE_PASSES):
    """Train an ELM on encoded, normalized features.

    ``ridge=None`` uses the solver's relative default; pass ``0.0`` for the
    plain normal equations. ``refine_passes`` extra streaming passes polish
    the Cholesky solution against H itself.
    """
    X = as_matrix(X, "train_X")
    labels = list(labels)
    if X.shape[0] != len(labels):
        raise ShapeError(f"train_X has {X.shape[0]} rows but {len(labels)} labels were given")
    if len(labels) < 2:
        raise DataError("need at least two training samples")
    classes = tuple(sorted(set(labels)))
    if len(classes) < 2:
        raise DegenerateTargetError(f"all training labels are {classes[0]!r}")
    if block_size < 1:
        raise ValueError("block_size must be positive")

    groups = tuple(instantiate(spec, X.shape[1], X, seed))
    T = one_hot(labels, classes, target_scale)
    acc = NormalEqAccumulator(spec.n_hidden, len(classes))
    for sl in _blocks(X.shape[0], block_size):
        acc.accumulate(build_H(groups, X[sl]), T[sl])
    report = solve_normal(acc, ridge)

    # each refinement pass also yields the residual of the weights it starts
    # from; the final pass only measures
    for final in [False] * refine_passes + [True]:
        beta = report.beta
        sq = 0.0
        correction = -report.ridge_used * beta
        for sl in _blocks(X.shape[0], block_size):
            H = build_H(groups, X[sl])
            r = T[sl] - H @ beta
            sq += float(np.einsum("ij,ij->", r, r))
            if not final:
                correction += H.T @ r
        if not final:
            report = report.refined(correction)
    beta = report.beta
    beta.setflags(write=False)

    return ElmModel(
        spec, groups, beta, classes, int(seed), float(np.sqrt(sq)), report.ridge_used,
        preprocess, None if feature_indices is None else tuple(int(i) for i in feature_indices),
    )


def predict_scores(model, X, block_size=BLOCK_SIZE):
    X = as_matrix(X, "X")
    if X.shape[1] != model.n_inputs:
        raise ShapeError(f"X has {X.shape[1]} features, model expects {model.n_inputs}")
    out = np.empty((X.shape[0], len(model.classes)))
    for sl in _blocks(X.shape[0], block_size):
        out[sl] = build_H(model.groups, X[sl]) @ model.beta
    return out


def predict_labels(model, X, block_size=BLOCK_SIZE):
    # np.argmax returns the first maximum, i.e. the lowest class index on ties
    idx = np.argmax(predict_scores(model, X, block_size), axis=1)
    return [model.classes[i] for i in idx]


def predict(model, x):
    """Scores and label for a single encoded feature row."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ShapeError("predict takes one feature row; use predict_scores for batches")
    scores = predict_scores(model, x.reshape(1, -1))[0]
    return Prediction(scores, model.classes[int(np.argmax(scores))])


def evaluate(model, X, labels, positive_class=None):
    labels = list(labels)
    unknown = sorted(set(labels) - set(model.classes))
    if unknown:
        raise UnknownClassError(f"label(s) {unknown} were not seen in training")
    if positive_class is None:
        positive_class = model.classes[-1]
    return confusion(labels, predict_labels(model, X), positive_class, model.classes)


def prepare_features(model, table):
    """Encode a raw table with the model's stored training statistics."""
    if model.preprocess is None:
        raise DataError("model carries no preprocessing statistics")
    X = model.preprocess.transform(table)
    if model.feature_indices is not None:
        X = np.ascontiguousarray(X[:, list(model.feature_indices)])
    return X


# --------------------------------------------------------------------------
# persistence: one .npz archive, arrays plus a JSON header


def save(model, path):
    header = {
        "format": FORMAT,
        "version": __version__,
        "spec": model.spec.token(),
        "classes": list(model.classes),
        "seed": model.seed,
        "train_residual": model.train_residual,
        "ridge_used": model.ridge_used,
        "preprocess": None if model.preprocess is None else model.preprocess.to_dict(),
        "feature_indices": None if model.feature_indices is None else list(model.feature_indices),
    }
    arrays = {"header": np.array(json.dumps(header)), "beta": model.beta}
    for i, g in enumerate(model.groups):
        for name in ("weights", "biases", "centers", "widths"):
            arr = getattr(g, name)
            if arr is not None:
                arrays[f"g{i}_{name}"] = arr
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load(path):
    try:
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(str(z["header"]))
            if header.get("format") != FORMAT:
                raise DataError(f"{path} is not an elmnet model")
            spec = LayerSpec.parse(header["spec"])
            groups = []
            for i, g in enumerate(spec.groups):
                params = {
                    name: np.array(z[f"g{i}_{name}"])
                    for name in ("weights", "biases", "centers", "widths")
                    if f"g{i}_{name}" in z.files
                }
                groups.append(NeuronGroup(g.kind, g.count, **params))
            beta = np.array(z["beta"])
    except (OSError, KeyError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"cannot read model {path}: {exc}") from exc
    beta.setflags(write=False)
    pre = header["preprocess"]
    fi = header["feature_indices"]
    return ElmModel(
        spec, tuple(groups), beta, tuple(header["classes"]), header["seed"],
        header["train_residual"], header["ridge_used"],
        None if pre is None else Preprocessor.from_dict(pre),
        None if fi is None else tuple(fi),
    )
