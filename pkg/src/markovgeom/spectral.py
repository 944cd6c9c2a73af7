"""Eigendecompositions and diffusion coordinates via measure conjugation.

A reversible row-stochastic operator is similar to a symmetric matrix through
conjugation by the square root of its stationary measure; a phased operator
with reversible magnitudes is likewise similar to a Hermitian matrix.  The
dense symmetric/Hermitian eigensolver is then exact enough to map eigenpairs
back to left/right eigenvectors of the original operator and to build
eigenvalue-damped embedding coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bridges import currents
from .normalize import StochasticOperator
from .operators import ComplexOperator

# adjacent eigenvalues closer than this are flagged as a degenerate block;
# coordinates inside such a block are solver-ordered and not canonicalized
DEGENERACY_GAP = 1e-10

_LEAD_COMPONENT_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigenvalues (descending) with left/right eigenvectors of the operator.

    ``degenerate`` warns that at least two adjacent eigenvalues are closer
    than the degeneracy gap, in which case the vectors within that block are
    reported in solver order.
    """

    eigenvalues: np.ndarray
    right_vectors: np.ndarray
    left_vectors: np.ndarray
    is_complex: bool
    degenerate: bool


@dataclass(frozen=True, eq=False)
class Embedding:
    """Eigenvalue-damped coordinates: column c is lambda_{c+1}^t psi_{c+1}."""

    coordinates: np.ndarray
    time: float
    retained: int


def _validate_measure(pi, n: int) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    if pi.ndim != 1 or pi.shape[0] != n:
        raise ValueError(f"pi must be a length-{n} vector, got shape {pi.shape}")
    if not np.all(np.isfinite(pi)) or np.any(pi <= 0.0):
        raise ValueError("pi must be strictly positive and finite")
    return pi


def conjugate_symmetrize(
    p_plus: StochasticOperator, pi, db_tol: float = 1e-8
) -> np.ndarray:
    """Similarity transform diag(sqrt(pi)) P diag(1/sqrt(pi)).

    Requires (P, pi) to satisfy detailed balance within ``db_tol``; otherwise
    the conjugated matrix would not be symmetric, which signals that a
    non-reversible (steady-state-circulating) operator was passed.
    """
    if p_plus.kind not in ("row", "bi"):
        raise ValueError("conjugate_symmetrize expects a row-stochastic operator")
    pi = _validate_measure(pi, p_plus.shape[0])
    db_residual = float(np.abs(currents(p_plus, pi)).max())
    if db_residual > db_tol:
        raise ValueError(
            f"detailed balance violated (residual {db_residual:.3e} > "
            f"{db_tol:.1e}); the operator/measure pair is not reversible"
        )
    root = np.sqrt(pi)
    return (root[:, None] * p_plus.values) / root[None, :]


def conjugate_hermitize(op: ComplexOperator, pi, db_tol: float = 1e-8) -> np.ndarray:
    """Hermitian conjugation of a phased operator with reversible magnitudes.

    Symmetric magnitudes conjugation combined with antisymmetric phases yields
    a Hermitian matrix, whose eigenvalues are real.
    """
    symmetric = conjugate_symmetrize(op.magnitudes, pi, db_tol=db_tol)
    return symmetric * np.exp(1j * op.phases)


def _fix_leading_phase(vectors: np.ndarray) -> np.ndarray:
    """Make the first significantly nonzero component of each column real
    positive (a sign flip in the real case)."""
    out = vectors.copy()
    for c in range(out.shape[1]):
        col = out[:, c]
        significant = np.flatnonzero(np.abs(col) > _LEAD_COMPONENT_FLOOR)
        if significant.size == 0:
            continue
        lead = col[significant[0]]
        out[:, c] = col * (np.conj(lead) / np.abs(lead))
    return out


def decompose(conjugated, pi) -> SpectralDecomposition:
    """Eigendecompose a conjugated operator and map back to operator eigenpairs.

    The input must be (numerically) symmetric or Hermitian, i.e. come from one
    of the conjugation transforms.  Right eigenvectors of the original
    operator are the conjugated eigenvectors divided by sqrt(pi), left
    eigenvectors multiplied by it; the two sets are biorthonormal and the top
    right eigenvector is constant.
    """
    mat = np.asarray(conjugated)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {mat.shape}")
    pi = _validate_measure(pi, mat.shape[0])
    hermiticity = float(np.abs(mat - mat.conj().T).max())
    if hermiticity > 1e-8:
        raise ValueError(
            f"input deviates from Hermitian by {hermiticity:.3e}; "
            "decompose expects the output of a conjugation transform"
        )
    eigenvalues, vectors = np.linalg.eigh(mat)
    order = np.argsort(eigenvalues, kind="stable")[::-1]
    eigenvalues = eigenvalues[order]
    vectors = _fix_leading_phase(vectors[:, order])
    root = np.sqrt(pi)
    right = vectors / root[:, None]
    left = vectors * root[:, None]
    if eigenvalues.size > 1:
        degenerate = bool(np.abs(np.diff(eigenvalues)).min() < DEGENERACY_GAP)
    else:
        degenerate = False
    return SpectralDecomposition(
        eigenvalues=eigenvalues,
        right_vectors=right,
        left_vectors=left,
        is_complex=bool(np.iscomplexobj(vectors)),
        degenerate=degenerate,
    )


def diffusion_embedding(dec: SpectralDecomposition, t: float, k: int) -> Embedding:
    """Coordinates lambda_{c+1}^t psi_{c+1}, skipping the trivial top pair.

    ``t = 0`` returns the raw eigenvectors.  Fractional times are undefined
    when a retained eigenvalue is negative and are rejected.
    """
    n = dec.eigenvalues.shape[0]
    if not 1 <= k <= n - 1:
        raise ValueError(f"k out of range: need 1 <= k <= {n - 1}, got {k}")
    if t < 0:
        raise ValueError(f"diffusion time must be nonnegative, got {t}")
    lam = dec.eigenvalues[1 : k + 1]
    if np.any(lam < 0.0) and not float(t).is_integer():
        raise ValueError(
            "fractional diffusion time is undefined for negative eigenvalues"
        )
    weights = lam ** float(t)
    coordinates = dec.right_vectors[:, 1 : k + 1] * weights[None, :]
    return Embedding(coordinates=coordinates, time=float(t), retained=int(k))
