"""Dense least-squares machinery for the ELM output layer.

Matrices are plain C-ordered float64 numpy arrays. The production path
accumulates the normal equations ``H^T H`` and ``H^T T`` block by block and
solves them with a Cholesky factorization, escalating a ridge term when the
factorization breaks down. An SVD pseudoinverse is kept alongside purely as
an independent oracle for the tests.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .errors import NumericError, ShapeError, SingularSystemError

RIDGE_ESCALATION = 100.0
MAX_ESCALATIONS = 3
RELATIVE_RIDGE = 1e-9
# used as the first escalation step when the caller asked for ridge=0 on an
# all-zero gram (trace 0)
RIDGE_FLOOR = 1e-12


def as_matrix(a, name="matrix"):
    """Coerce ``a`` to a finite, 2-D, C-contiguous float64 array."""
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericError(f"{name} contains NaN or Inf")
    return m


def _finite(m, what):
    if not np.all(np.isfinite(m)):
        raise NumericError(f"{what} produced non-finite values")
    return m


def matmul(a, b):
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: left is {a.shape}, right is {b.shape}")
    return _finite(a @ b, "matmul")


def transpose(a):
    return np.ascontiguousarray(as_matrix(a).T)


def frobenius_norm(a):
    return float(np.linalg.norm(as_matrix(a), "fro"))


@dataclass
class NormalEqAccumulator:
    """Running sums of ``H_b^T H_b`` and ``H_b^T T_b`` over row blocks."""

    n_hidden: int
    n_outputs: int
    gram: np.ndarray = field(default=None, repr=False)
    cross: np.ndarray = field(default=None, repr=False)
    rows_seen: int = 0

    def __post_init__(self):
        if self.gram is None:
            self.gram = np.zeros((self.n_hidden, self.n_hidden))
        if self.cross is None:
            self.cross = np.zeros((self.n_hidden, self.n_outputs))

    def accumulate(self, h_block, t_block):
        h = as_matrix(h_block, "h_block")
        t = as_matrix(t_block, "t_block")
        if h.shape[1] != self.n_hidden:
            raise ShapeError(
                f"h_block has {h.shape[1]} columns, accumulator expects {self.n_hidden}"
            )
        if t.shape[1] != self.n_outputs:
            raise ShapeError(
                f"t_block has {t.shape[1]} columns, accumulator expects {self.n_outputs}"
            )
        if h.shape[0] != t.shape[0]:
            raise ShapeError(
                f"h_block has {h.shape[0]} rows but t_block has {t.shape[0]}"
            )
        if h.shape[0] == 0:
            raise ShapeError("h_block is empty")
        g = h.T @ h
        # the product is symmetric in exact arithmetic; BLAS may round the two
        # triangles differently
        g = 0.5 * (g + g.T)
        self.gram += g
        self.cross += h.T @ t
        self.rows_seen += h.shape[0]
        return self

    def merge(self, other):
        """Fold another accumulator (e.g. from a worker) into this one."""
        if (other.n_hidden, other.n_outputs) != (self.n_hidden, self.n_outputs):
            raise ShapeError("cannot merge accumulators of different shapes")
        self.gram += other.gram
        self.cross += other.cross
        self.rows_seen += other.rows_seen
        return self


def accumulate(acc, h_block, t_block):
    return acc.accumulate(h_block, t_block)


@dataclass(frozen=True)
class SolveReport:
    beta: np.ndarray
    ridge_used: float
    residual_norm: float = None
    # Cholesky factor of gram + ridge*I, kept for refinement steps
    factor: tuple = field(default=None, repr=False, compare=False)

    def with_residual(self, h, t):
        r = residual_norm(h, self.beta, t)
        return SolveReport(self.beta, self.ridge_used, r, self.factor)

    def refined(self, correction):
        """Apply one semi-normal refinement step.

        ``correction`` is ``H^T (T - H beta) - ridge * beta`` summed over the
        data; recomputing it from H rather than from the stored gram recovers
        accuracy that forming ``H^T H`` loses on ill-conditioned layers.
        """
        if self.factor is None:
            raise NumericError("no factorization available for refinement")
        step = sla.cho_solve(self.factor, as_matrix(correction, "correction"), check_finite=False)
        beta = self.beta + step
        if not np.all(np.isfinite(beta)):
            raise NumericError("refinement produced non-finite weights")
        return SolveReport(np.ascontiguousarray(beta), self.ridge_used, None, self.factor)


def residual_norm(h, beta, t):
    """Frobenius norm of ``H beta - T``."""
    return float(np.linalg.norm(matmul(h, beta) - as_matrix(t, "t"), "fro"))


def default_ridge(gram):
    n = gram.shape[0]
    return RELATIVE_RIDGE * float(np.trace(gram)) / n


def _try_cholesky(gram, cross, ridge):
    a = gram + ridge * np.eye(gram.shape[0])
    try:
        factor = sla.cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return None
    beta = sla.cho_solve(factor, cross, check_finite=False)
    # one round of iterative refinement
    beta += sla.cho_solve(factor, cross - a @ beta, check_finite=False)
    if not np.all(np.isfinite(beta)):
        return None
    tol = 1e-8 * max(1.0, float(np.linalg.norm(cross, "fro")))
    if np.linalg.norm(a @ beta - cross, "fro") > tol:
        return None
    return beta, factor


def solve_normal(acc, ridge=None):
    """Solve ``(gram + ridge*I) beta = cross`` by Cholesky.

    ``ridge=None`` selects ``1e-9 * trace(gram) / L``. On failure the ridge
    is multiplied by 100, at most three times; a zero ridge escalates from
    the default relative value instead.
    """
    if acc.rows_seen < 1:
        raise ShapeError("accumulator has seen no rows")
    if ridge is None:
        ridge = default_ridge(acc.gram)
    if ridge < 0:
        raise ValueError("ridge must be non-negative")

    gram, cross = acc.gram, acc.cross
    current = float(ridge)
    for attempt in range(MAX_ESCALATIONS + 1):
        solved = _try_cholesky(gram, cross, current)
        if solved is not None:
            beta, factor = solved
            return SolveReport(np.ascontiguousarray(beta), current, None, factor)
        if attempt == MAX_ESCALATIONS:
            break
        if current == 0.0:
            current = max(default_ridge(gram), RIDGE_FLOOR)
        else:
            current *= RIDGE_ESCALATION
    raise SingularSystemError(
        f"Cholesky factorization failed; last ridge tried {current:g}", current
    )


def solve_least_squares(h, t, ridge=None):
    acc = NormalEqAccumulator(as_matrix(h, "h").shape[1], as_matrix(t, "t").shape[1])
    acc.accumulate(h, t)
    return solve_normal(acc, ridge).with_residual(h, t)


def pinv_oracle(h, t):
    """Minimum-norm least-squares solution ``H^+ T`` via a thin SVD.

    Test-scale only. Singular values below ``max(N, L) * eps * s_max`` are
    treated as zero.
    """
    h = as_matrix(h, "h")
    t = as_matrix(t, "t")
    if h.shape[0] != t.shape[0]:
        raise ShapeError(f"h has {h.shape[0]} rows but t has {t.shape[0]}")
    if h.shape[0] < 1:
        raise ShapeError("h is empty")
    u, s, vt = np.linalg.svd(h, full_matrices=False)
    cutoff = max(h.shape) * np.finfo(np.float64).eps * (s[0] if s.size else 0.0)
    inv = np.zeros_like(s)
    keep = s > cutoff
    inv[keep] = 1.0 / s[keep]
    return np.ascontiguousarray(vt.T @ (inv[:, None] * (u.T @ t)))
