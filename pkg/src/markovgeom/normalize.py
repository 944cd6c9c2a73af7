"""Log-domain-safe normalizers: softmax, product of experts, matrix scaling.

Every iterative scaler works on log-scores and reduces with log-sum-exp, so
the machinery stays finite even when score ranges span hundreds of nats.
Scaling potentials are maintained additively in the log domain but exposed as
positive vectors, with the scalar gauge freedom fixed by normalizing the
row/source potential to unit geometric mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

VALID_KINDS = ("row", "column", "bi")

# marginals handed to the scalers must sum to one within this bound
MARGINAL_SUM_TOL = 1e-12


class ConvergenceError(RuntimeError):
    """An iterative scaler failed to reach tolerance.

    Carries the residual achieved and the iteration count so the caller can
    decide what to do; no partial matrix is ever returned silently.
    """

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


def _validate_logits(z, *, square: bool = False) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim != 2:
        raise ValueError(f"logits must be 2-D, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("logits must be finite (masking with -inf is unsupported)")
    if square and z.shape[0] != z.shape[1]:
        raise ValueError(f"square logits required, got shape {z.shape}")
    return z


def _validate_marginal(mu, n: int, name: str) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 1 or mu.shape[0] != n:
        raise ValueError(f"{name} must be a length-{n} vector, got shape {mu.shape}")
    if not np.all(np.isfinite(mu)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.any(mu <= 0.0):
        raise ValueError(f"{name} must be strictly positive")
    total = mu.sum()
    if abs(total - 1.0) > MARGINAL_SUM_TOL:
        raise ValueError(f"{name} must sum to 1 (got {total!r})")
    return mu


@dataclass(frozen=True, eq=False)
class StochasticOperator:
    """Nonnegative matrix tagged by its normalization: rows, columns, or both.

    ``check_tol`` is only a construction-time sanity bound on the tagged sums;
    the precise residual contracts belong to the solvers that build operators.
    """

    values: np.ndarray
    kind: str
    check_tol: float = field(default=1e-6, repr=False, compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2:
            raise ValueError(f"operator must be 2-D, got shape {vals.shape}")
        if self.kind not in VALID_KINDS:
            raise ValueError(f"kind must be one of {VALID_KINDS}, got {self.kind!r}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("operator contains non-finite entries")
        if np.any(vals < 0.0):
            raise ValueError("operator entries must be nonnegative")
        if self.kind in ("row", "bi"):
            err = float(np.abs(vals.sum(axis=1) - 1.0).max())
            if err > self.check_tol:
                raise ValueError(f"row sums deviate from 1 by {err:.3e}")
        if self.kind in ("column", "bi"):
            err = float(np.abs(vals.sum(axis=0) - 1.0).max())
            if err > self.check_tol:
                raise ValueError(f"column sums deviate from 1 by {err:.3e}")
        object.__setattr__(self, "values", vals)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True, eq=False)
class ScalingPotentials:
    """Positive scaling vectors with convergence metadata.

    The gauge freedom (scaling u by c and v by 1/c) is fixed upstream by
    giving u unit geometric mean, except where a closed form dictates the
    potentials directly.
    """

    u: np.ndarray
    v: np.ndarray
    iterations: int
    residual: float

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.v, dtype=float)
        for name, vec in (("u", u), ("v", v)):
            if vec.ndim != 1:
                raise ValueError(f"potential {name} must be a vector")
            if not np.all(np.isfinite(vec)) or np.any(vec <= 0.0):
                raise ValueError(f"potential {name} must be strictly positive and finite")
        if self.iterations < 0 or self.residual < 0.0:
            raise ValueError("iterations and residual must be nonnegative")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)


def softmax_rows(z) -> StochasticOperator:
    """Row-normalized exponential of the log-scores, max-subtracted for stability."""
    z = _validate_logits(z)
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return StochasticOperator(e / e.sum(axis=1, keepdims=True), "row")


def softmax_cols(z) -> StochasticOperator:
    """Column-normalized exponential of the log-scores; mirror of ``softmax_rows``."""
    z = _validate_logits(z)
    shifted = z - z.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return StochasticOperator(e / e.sum(axis=0, keepdims=True), "column")


def poe_combine(a: StochasticOperator, b: StochasticOperator) -> StochasticOperator:
    """Combine two experts by Hadamard product and renormalization.

    Both operands must share shape and kind (row or column).  The result is
    exactly the softmax of summed log-scores: combining ``softmax_rows(z)``
    with ``softmax_rows(s)`` reproduces ``softmax_rows(z + s)``.
    """
    if a.kind != b.kind:
        raise ValueError(f"expert kinds differ: {a.kind!r} vs {b.kind!r}")
    if a.kind not in ("row", "column"):
        raise ValueError("product of experts is defined for row or column operators")
    if a.shape != b.shape:
        raise ValueError(f"expert shapes differ: {a.shape} vs {b.shape}")
    prod = a.values * b.values
    axis = 1 if a.kind == "row" else 0
    norm = prod.sum(axis=axis, keepdims=True)
    if np.any(norm == 0.0):
        raise ValueError("experts have disjoint support along the stochastic axis")
    return StochasticOperator(prod / norm, a.kind)


def sinkhorn(
    z, tol: float = 1e-10, max_iter: int = 10_000
) -> tuple[StochasticOperator, ScalingPotentials]:
    """Scale exp(z) to a bistochastic matrix by alternating log-domain sweeps.

    Parameters
    ----------
    z : square matrix of finite log-scores.
    tol : convergence threshold on the sup-norm marginal violation
        max(|row sums - 1|, |column sums - 1|).
    max_iter : sweep budget; exceeding it raises ``ConvergenceError``.

    Returns
    -------
    (operator, potentials) with operator entries exp(z + log u_i + log v_j).
    Shifting z by arbitrary u_i + v_j leaves the output unchanged (gauge
    invariance), so only the scaled matrix is canonical; the potentials are
    reported with u normalized to unit geometric mean.
    """
    z = _validate_logits(z, square=True)
    n = z.shape[0]
    log_u = np.zeros(n)
    log_v = np.zeros(n)
    residual = np.inf
    for iteration in range(1, max_iter + 1):
        log_v = -logsumexp(z + log_u[:, None], axis=0)
        log_u = -logsumexp(z + log_v[None, :], axis=1)
        shift = log_u.mean()
        lu = log_u - shift
        lv = log_v + shift
        scaled = np.exp(z + lu[:, None] + lv[None, :])
        residual = max(
            float(np.abs(scaled.sum(axis=1) - 1.0).max()),
            float(np.abs(scaled.sum(axis=0) - 1.0).max()),
        )
        if residual <= tol:
            potentials = ScalingPotentials(np.exp(lu), np.exp(lv), iteration, residual)
            return StochasticOperator(scaled, "bi"), potentials
    raise ConvergenceError(
        f"sinkhorn stalled at residual {residual:.3e} > tol {tol:.3e} "
        f"after {max_iter} iterations",
        residual=float(residual),
        iterations=max_iter,
    )


def schrodinger_solve(
    kernel, mu_plus, mu_minus, tol: float = 1e-10, max_iter: int = 10_000
) -> ScalingPotentials:
    """Find positive u, v with diag(u) K diag(v) matching prescribed marginals.

    Runs the alternating fixed-point updates u <- mu_plus / (K v) and
    v <- mu_minus / (K^T u) in the log domain.  Convergence is declared when
    both constraints u_i * (K v)_i = mu_plus_i and v_j * (K^T u)_j = mu_minus_j
    hold within ``tol`` (sup norm).  Bistochastic scaling is the special case
    of uniform marginals, up to an overall factor of n.

    Raises
    ------
    ConvergenceError if the residual stays above ``tol`` for ``max_iter``
    rounds; ValueError for non-positive kernels or invalid marginals.
    """
    k = np.asarray(kernel, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValueError(f"kernel must be square, got shape {k.shape}")
    if not np.all(np.isfinite(k)) or np.any(k <= 0.0):
        raise ValueError("kernel must be strictly positive and finite")
    n = k.shape[0]
    mu_plus = _validate_marginal(mu_plus, n, "mu_plus")
    mu_minus = _validate_marginal(mu_minus, n, "mu_minus")

    log_k = np.log(k)
    log_mu_plus = np.log(mu_plus)
    log_mu_minus = np.log(mu_minus)
    log_v = np.zeros(n)
    residual = np.inf
    for iteration in range(1, max_iter + 1):
        log_u = log_mu_plus - logsumexp(log_k + log_v[None, :], axis=1)
        log_v = log_mu_minus - logsumexp(log_k + log_u[:, None], axis=0)
        shift = log_u.mean()
        u = np.exp(log_u - shift)
        v = np.exp(log_v + shift)
        residual = max(
            float(np.abs(u * (k @ v) - mu_plus).max()),
            float(np.abs(v * (k.T @ u) - mu_minus).max()),
        )
        if residual <= tol:
            return ScalingPotentials(u, v, iteration, residual)
    raise ConvergenceError(
        f"marginal scaling stalled at residual {residual:.3e} > tol {tol:.3e} "
        f"after {max_iter} iterations",
        residual=float(residual),
        iterations=max_iter,
    )
