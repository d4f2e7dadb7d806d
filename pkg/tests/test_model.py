import numpy as np
import pytest

from elmnet import model
from elmnet.activation import LayerSpec, instantiate
from elmnet.data import synth_dataset
from elmnet.errors import DegenerateTargetError, ShapeError, UnknownClassError
from elmnet.metrics import accuracy


@pytest.fixture(scope="module")
def gauss():
    return synth_dataset("two_gaussians", 400, 2, 7)


@pytest.fixture(scope="module")
def fitted(gauss):
    return model.fit(LayerSpec.parse("sigmoid:100"), gauss.X_train, gauss.y_train, seed=1)


def test_separable_training_accuracy(gauss, fitted):
    # oracle: the sign of x1 + x2 separates the raw clusters
    raw = np.column_stack([gauss.raw.numeric_column(f) for f in gauss.feature_names])
    oracle = np.where(raw.sum(axis=1) > 0, "malware", "benign")
    assert np.mean(oracle == np.array(gauss.labels)) >= 0.99
    acc = accuracy(model.evaluate(fitted, gauss.X_train, gauss.y_train, "malware"))
    assert acc >= 0.99


def test_nearest_mean_agreement(gauss, fitted):
    Xtr, ytr = gauss.X_train, np.array(gauss.y_train)
    means = {c: Xtr[ytr == c].mean(axis=0) for c in fitted.classes}
    agree = total = 0
    for x, y in zip(gauss.X_test, gauss.y_test):
        nearest = min(means, key=lambda c: np.linalg.norm(x - means[c]))
        if nearest == y:
            total += 1
            agree += model.predict(fitted, x).label == y
    assert agree / total >= 0.97


def test_fit_deterministic(gauss, fitted):
    again = model.fit(LayerSpec.parse("sigmoid:100"), gauss.X_train, gauss.y_train, seed=1)
    assert np.array_equal(again.beta, fitted.beta)
    assert again.train_residual == fitted.train_residual


def test_interpolation_regime():
    ds = synth_dataset("two_gaussians", 30, 3, 1)
    assert len({tuple(r) for r in ds.X}) == 30
    m = model.fit(LayerSpec.parse("sigmoid:30"), ds.X, ds.labels, seed=1, ridge=0.0)
    assert m.ridge_used == 0.0
    assert m.train_residual <= 1e-6


def test_refinement_beats_plain_normal_equations():
    ds = synth_dataset("two_gaussians", 30, 3, 1)
    spec = LayerSpec.parse("sigmoid:30")
    plain = model.fit(spec, ds.X, ds.labels, seed=1, ridge=0.0, refine_passes=0)
    refined = model.fit(spec, ds.X, ds.labels, seed=1, ridge=0.0)
    assert refined.train_residual < plain.train_residual


def test_block_size_does_not_matter(gauss):
    spec = LayerSpec.parse("tanh:20,rbf_l2:10")
    a = model.fit(spec, gauss.X_train, gauss.y_train, seed=4, block_size=7)
    b = model.fit(spec, gauss.X_train, gauss.y_train, seed=4)
    np.testing.assert_allclose(a.beta, b.beta, rtol=1e-7, atol=1e-9)
    assert a.train_residual == pytest.approx(b.train_residual, rel=1e-9)


def test_zero_beta_ties_to_first_class():
    groups = tuple(instantiate(LayerSpec.parse("tanh:3"), 2, seed=0))
    m = model.ElmModel(LayerSpec.parse("tanh:3"), groups, np.zeros((3, 2)), ("a", "b"), 0, 0.0, 0.0)
    p = model.predict(m, np.array([0.3, -0.1]))
    assert np.all(p.scores == 0.0) and p.label == "a"


def test_target_scaling_is_linear(gauss, fitted):
    scaled = model.fit(LayerSpec.parse("sigmoid:100"), gauss.X_train, gauss.y_train,
                       seed=1, target_scale=3.0, ridge=fitted.ridge_used)
    base = model.fit(LayerSpec.parse("sigmoid:100"), gauss.X_train, gauss.y_train,
                     seed=1, ridge=fitted.ridge_used)
    s0 = model.predict_scores(base, gauss.X_test)
    s1 = model.predict_scores(scaled, gauss.X_test)
    np.testing.assert_allclose(s1, 3.0 * s0, rtol=1e-6, atol=1e-8)
    assert model.predict_labels(scaled, gauss.X_test) == model.predict_labels(base, gauss.X_test)


def test_predict_pure(gauss, fitted):
    x = gauss.X_test[0]
    a, b = model.predict(fitted, x), model.predict(fitted, x)
    assert np.array_equal(a.scores, b.scores) and a.label == b.label
    assert a.label == fitted.classes[int(np.argmax(a.scores))]
    with pytest.raises(ShapeError):
        model.predict(fitted, np.zeros(5))


def test_one_hot_rows_sum_to_one():
    T = model.one_hot(["b", "a", "c", "b"], ("a", "b", "c"))
    assert np.all(T.sum(axis=1) == 1.0)
    np.testing.assert_array_equal(T[0], [0, 1, 0])


def test_degenerate_targets():
    with pytest.raises(DegenerateTargetError):
        model.fit(LayerSpec.parse("tanh:3"), np.zeros((4, 2)), ["a"] * 4)


def test_evaluate_rejects_unknown_class(gauss, fitted):
    with pytest.raises(UnknownClassError):
        model.evaluate(fitted, gauss.X_test[:2], ["benign", "worm"])


def test_multiclass():
    ds = synth_dataset("planted_feature", 300, 3, 2, n_classes=3)
    m = model.fit(LayerSpec.parse("rbf_l2:40"), ds.X_train, ds.y_train, seed=0)
    assert m.beta.shape == (40, 3)
    labels = model.predict_labels(m, ds.X_test)
    assert np.mean(np.array(labels) == np.array(ds.y_test)) > 0.9


@pytest.mark.parametrize("kind", ["sigmoid", "tanh", "rbf_l1"])
def test_nested_monotonicity(kind):
    ds = synth_dataset("two_gaussians", 600, 4, 12, offset=0.7)
    prev = np.inf
    for L in (10, 50, 100, 200):
        m = model.fit(LayerSpec.parse(f"{kind}:{L}"), ds.X_train, ds.y_train, seed=3, ridge=0.0)
        assert m.train_residual <= prev + 1e-9
        prev = m.train_residual


def test_save_load_roundtrip(tmp_path, gauss):
    spec = LayerSpec.parse("tanh:5,sigmoid:4,rbf_l1:3,rbf_l2:3,rbf_linf:3,linear:2")
    m = model.fit(spec, gauss.X_train, gauss.y_train, seed=2,
                  preprocess=gauss.preprocess, feature_indices=[0, 1])
    path = tmp_path / "m.npz"
    model.save(m, path)
    back = model.load(path)
    assert back.classes == m.classes and back.spec == m.spec
    assert back.preprocess == m.preprocess and back.feature_indices == (0, 1)
    assert np.array_equal(model.predict_scores(back, gauss.X), model.predict_scores(m, gauss.X))


def test_load_rejects_garbage(tmp_path):
    from elmnet.errors import DataError

    p = tmp_path / "junk.npz"
    p.write_bytes(b"not a model")
    with pytest.raises(DataError):
        model.load(p)
