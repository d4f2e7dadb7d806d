import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from elmnet.errors import ShapeError, SingularSystemError
from elmnet.linalg import (
    NormalEqAccumulator,
    accumulate,
    frobenius_norm,
    matmul,
    pinv_oracle,
    residual_norm,
    solve_least_squares,
    solve_normal,
    transpose,
)


def _acc(h, t):
    acc = NormalEqAccumulator(h.shape[1], t.shape[1])
    return accumulate(acc, h, t)


def test_accumulate_identity_block():
    acc = _acc(np.eye(2), np.array([[2.0], [3.0]]))
    assert np.array_equal(acc.gram, np.eye(2))
    assert np.array_equal(acc.cross, [[2.0], [3.0]])
    assert acc.rows_seen == 2


def test_accumulate_order_independent(rng):
    h = rng.standard_normal((40, 5))
    t = rng.standard_normal((40, 2))
    a = NormalEqAccumulator(5, 2)
    b = NormalEqAccumulator(5, 2)
    for sl in (slice(0, 10), slice(10, 25), slice(25, 40)):
        a.accumulate(h[sl], t[sl])
    for sl in (slice(25, 40), slice(0, 10), slice(10, 25)):
        b.accumulate(h[sl], t[sl])
    np.testing.assert_allclose(a.gram, b.gram, rtol=1e-10, atol=0)
    np.testing.assert_allclose(a.cross, b.cross, rtol=1e-10, atol=1e-14)


def test_blocked_gram_matches_one_shot(rng):
    h = rng.standard_normal((50, 8))
    t = rng.standard_normal((50, 1))
    acc = NormalEqAccumulator(8, 1)
    for start in range(0, 50, 7):
        acc.accumulate(h[start:start + 7], t[start:start + 7])
    oracle = h.T @ h
    np.testing.assert_allclose(acc.gram, oracle, rtol=1e-10, atol=1e-12)
    assert acc.rows_seen == 50


def test_merge_equals_single_stream(rng):
    h = rng.standard_normal((30, 4))
    t = rng.standard_normal((30, 2))
    whole = _acc(h, t)
    part = _acc(h[:11], t[:11]).merge(_acc(h[11:], t[11:]))
    np.testing.assert_allclose(part.gram, whole.gram, rtol=1e-12)
    assert part.rows_seen == 30


@pytest.mark.parametrize(
    "h, t, operand",
    [
        (np.ones((3, 3)), np.ones((3, 1)), "h_block"),
        (np.ones((3, 2)), np.ones((3, 2)), "t_block"),
        (np.ones((3, 2)), np.ones((4, 1)), "rows"),
    ],
)
def test_accumulate_shape_errors_name_operand(h, t, operand):
    acc = NormalEqAccumulator(2, 1)
    with pytest.raises(ShapeError, match=operand):
        acc.accumulate(h, t)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 20), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_gram_stays_symmetric(n, L, seed):
    r = np.random.default_rng(seed)
    acc = NormalEqAccumulator(L, 1)
    for _ in range(3):
        acc.accumulate(r.standard_normal((n, L)) * 10 ** r.uniform(-3, 3), r.standard_normal((n, 1)))
        scale = max(1.0, np.abs(acc.gram).max())
        assert np.abs(acc.gram - acc.gram.T).max() <= 1e-12 * scale


def test_solve_identity_system():
    rep = solve_normal(_acc(np.eye(2), np.array([[2.0], [3.0]])), ridge=0.0)
    np.testing.assert_allclose(rep.beta, [[2.0], [3.0]], atol=1e-14)
    assert rep.ridge_used == 0.0


def test_solve_exact_line_fit():
    h = np.array([[1.0, 1.0], [1.0, 2.0], [1.0, 3.0]])
    t = np.array([[1.0], [2.0], [3.0]])
    rep = solve_normal(_acc(h, t), ridge=0.0)
    np.testing.assert_allclose(rep.beta, [[0.0], [1.0]], atol=1e-12)


def test_solve_matches_pinv_oracle(rng):
    h = rng.standard_normal((50, 20))
    t = rng.standard_normal((50, 3))
    rep = solve_normal(_acc(h, t), ridge=0.0)
    np.testing.assert_allclose(rep.beta, pinv_oracle(h, t), atol=1e-6, rtol=0)


def test_solve_postcondition(rng):
    h = rng.standard_normal((60, 15))
    t = rng.standard_normal((60, 2))
    acc = _acc(h, t)
    rep = solve_normal(acc, ridge=0.5)
    lhs = (acc.gram + 0.5 * np.eye(15)) @ rep.beta - acc.cross
    assert np.linalg.norm(lhs) <= 1e-8 * max(1.0, np.linalg.norm(acc.cross))


def test_default_ridge_is_relative(rng):
    h = rng.standard_normal((30, 6)) * 1e3
    acc = _acc(h, np.ones((30, 1)))
    rep = solve_normal(acc)
    assert rep.ridge_used == pytest.approx(1e-9 * np.trace(acc.gram) / 6)


def test_rank_deficient_escalates_ridge():
    # two identical columns: gram is singular
    h = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    t = np.array([[1.0], [2.0], [3.0]])
    rep = solve_normal(_acc(h, t), ridge=0.0)
    assert rep.ridge_used > 0
    # any split of the unit slope across the duplicate columns fits
    assert residual_norm(h, rep.beta, t) < 1e-6


def test_singular_error_carries_last_ridge():
    acc = NormalEqAccumulator(2, 1)
    acc.accumulate(np.array([[1.0, 0.0]]), np.array([[1.0]]))
    acc.gram[:] = [[1.0, 0.0], [0.0, -1.0]]  # indefinite: no ridge in range can fix it
    with pytest.raises(SingularSystemError) as info:
        solve_normal(acc, ridge=1e-6)
    assert info.value.last_ridge == pytest.approx(1e-6 * 100**3)


def test_solve_needs_rows():
    with pytest.raises(ShapeError):
        solve_normal(NormalEqAccumulator(2, 1), ridge=0.0)


def test_solve_least_squares_reports_residual(rng):
    h = rng.standard_normal((20, 3))
    t = rng.standard_normal((20, 1))
    rep = solve_least_squares(h, t, ridge=0.0)
    assert rep.residual_norm == pytest.approx(np.linalg.norm(h @ rep.beta - t))


def test_pinv_identity(rng):
    t = rng.standard_normal((3, 2))
    np.testing.assert_allclose(pinv_oracle(np.eye(3), t), t, atol=1e-15)


def test_pinv_rank_deficient_minimum_norm():
    beta = pinv_oracle(np.array([[2.0, 0.0], [0.0, 0.0]]), np.array([[4.0], [0.0]]))
    np.testing.assert_allclose(beta, [[2.0], [0.0]], atol=1e-15)


def test_pinv_against_lstsq(rng):
    # lstsq (LAPACK gelsd) as a third, unrelated route
    h = rng.standard_normal((40, 12))
    t = rng.standard_normal((40, 2))
    np.testing.assert_allclose(pinv_oracle(h, t), np.linalg.lstsq(h, t, rcond=None)[0], atol=1e-10)


def test_dense_kernels():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(matmul(np.eye(2), a), a)
    np.testing.assert_array_equal(transpose(transpose(a)), a)
    assert frobenius_norm([[3.0, 4.0]]) == 5.0
    with pytest.raises(ShapeError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))
