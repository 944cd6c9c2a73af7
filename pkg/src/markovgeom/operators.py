"""Markov and kernel operators on the divergence geometry.

All constructors are pure functions of dense matrices; nothing is truncated
or sparsified, so the exact algebraic identities between the operators (the
Hadamard factorization of the distance kernel, the two diffusion-operator
paths, magnitude preservation of the phased operator) hold to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .geometry import Bidivergence
from .normalize import (
    ConvergenceError,
    StochasticOperator,
    sinkhorn,
    softmax_cols,
    softmax_rows,
)


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Strictly positive similarity matrix together with the inverse
    temperature that produced it."""

    values: np.ndarray
    beta: float

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[0] != vals.shape[1]:
            raise ValueError(f"kernel must be square, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0.0):
            raise ValueError("kernel entries must be strictly positive and finite")
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True, eq=False)
class LaplacianPair:
    """Combinatorial and random-walk Laplacians plus the degree vector."""

    combinatorial: np.ndarray
    random_walk: np.ndarray
    degrees: np.ndarray


@dataclass(frozen=True, eq=False)
class ComplexOperator:
    """Row-stochastic magnitudes with a unit-modulus antisymmetric phase field.

    Magnitudes and phases are stored separately so that the magnitude of every
    assembled complex entry equals the real operator entry *exactly*, not just
    to rounding.
    """

    magnitudes: StochasticOperator
    phases: np.ndarray

    def __post_init__(self):
        if self.magnitudes.kind not in ("row", "bi"):
            raise ValueError("magnitudes must be a row-stochastic operator")
        theta = np.asarray(self.phases, dtype=float)
        if theta.shape != self.magnitudes.shape:
            raise ValueError(
                f"phase shape {theta.shape} does not match operator shape "
                f"{self.magnitudes.shape}"
            )
        if not np.all(np.isfinite(theta)):
            raise ValueError("phases contain non-finite entries")
        asym = float(np.abs(theta + theta.T).max())
        if asym > 1e-12:
            raise ValueError(f"phases must be antisymmetric (violation {asym:.3e})")
        object.__setattr__(self, "phases", theta)

    @property
    def matrix(self) -> np.ndarray:
        """Assembled complex operator: magnitudes times e^{i phases}."""
        return self.magnitudes.values * np.exp(1j * self.phases)


def _validate_beta(beta: float) -> float:
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return float(beta)


def _validate_squared_distance(d2) -> np.ndarray:
    d2 = np.asarray(d2, dtype=float)
    if d2.ndim != 2 or d2.shape[0] != d2.shape[1]:
        raise ValueError(f"squared distances must form a square matrix, got {d2.shape}")
    if not np.all(np.isfinite(d2)):
        raise ValueError("squared distances contain non-finite entries")
    scale = max(1.0, float(np.abs(d2).max()))
    if float(np.abs(d2 - d2.T).max()) > 1e-12 * scale:
        raise ValueError("squared-distance matrix must be symmetric")
    if float(np.abs(np.diag(d2)).max()) > 1e-12 * scale:
        raise ValueError("squared-distance matrix must have a zero diagonal")
    return d2


def rbf_kernel(d2, beta: float) -> KernelMatrix:
    """Gaussian kernel exp(-beta * d2): unit diagonal, symmetric, positive."""
    beta = _validate_beta(beta)
    d2 = _validate_squared_distance(d2)
    values = np.exp(-beta * d2)
    if np.any(values == 0.0):
        raise ValueError(
            f"kernel underflowed to zero: beta={beta:g} times the largest "
            f"squared distance {float(d2.max()):g} exceeds the exponential "
            "range; reduce beta"
        )
    return KernelMatrix(values, beta)


def directional_kernels(bidiv: Bidivergence, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalized directional kernels exp(-beta * fwd) and exp(-beta * bwd).

    Both have unit diagonals; entries can exceed 1 where the signed divergence
    is negative.  Their Hadamard product is the symmetric distance kernel.
    """
    beta = _validate_beta(beta)
    return np.exp(-beta * bidiv.fwd), np.exp(-beta * bidiv.bwd)


def attention_forward(bidiv: Bidivergence, beta: float) -> StochasticOperator:
    """Row-softmax attention over the forward divergence.

    Coincides with the row softmax of the raw scaled scores beta * Q K^T when
    the weights factor as W_Q W_K^T, because the diagonal shift in the forward
    divergence is constant along each row.
    """
    beta = _validate_beta(beta)
    return softmax_rows(-beta * bidiv.fwd)


def attention_backward(bidiv: Bidivergence, beta: float) -> StochasticOperator:
    """Column-softmax attention over the backward divergence."""
    beta = _validate_beta(beta)
    return softmax_cols(-beta * bidiv.bwd)


def attention_bistochastic(
    bidiv: Bidivergence,
    beta: float,
    direction: str = "fwd",
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> StochasticOperator:
    """Bistochastic attention: Sinkhorn scaling of one directional divergence.

    The forward and backward variants coincide for symmetric geometry; no
    cross-relation is asserted in general.
    """
    beta = _validate_beta(beta)
    if direction == "fwd":
        logits = -beta * bidiv.fwd
    elif direction == "bwd":
        logits = -beta * bidiv.bwd
    else:
        raise ValueError(f"direction must be 'fwd' or 'bwd', got {direction!r}")
    operator, _ = sinkhorn(logits, tol=tol, max_iter=max_iter)
    return operator


def dmap(d2, beta: float) -> StochasticOperator:
    """Diffusion operator: row softmax of the negative scaled squared distances.

    Identical (to rounding) to normalizing the Gaussian kernel by its row sums.
    """
    beta = _validate_beta(beta)
    d2 = _validate_squared_distance(d2)
    return softmax_rows(-beta * d2)


def laplacians(kernel: KernelMatrix) -> LaplacianPair:
    """Combinatorial Laplacian diag(z) - P and random-walk Laplacian I - P/z."""
    p = kernel.values
    degrees = p.sum(axis=1)
    combinatorial = np.diag(degrees) - p
    random_walk = np.eye(p.shape[0]) - p / degrees[:, None]
    return LaplacianPair(combinatorial, random_walk, degrees)


def dmap_bistochastic(
    d2, beta: float, tol: float = 1e-10, max_iter: int = 10_000
) -> StochasticOperator:
    """Bistochastic diffusion operator via a damped symmetric scaling iteration.

    A symmetric input admits a symmetric diagonal scaling, so a single
    log-potential suffices; the half-step damping removes the two-cycle the
    plain alternating update can fall into on symmetric matrices.  The iterate
    is symmetric by construction at every step.
    """
    beta = _validate_beta(beta)
    d2 = _validate_squared_distance(d2)
    z = -beta * d2
    z = (z + z.T) / 2.0  # exact symmetry; a no-op for bitwise-symmetric input
    n = z.shape[0]
    w = np.zeros(n)
    residual = np.inf
    for iteration in range(1, max_iter + 1):
        w = 0.5 * (w - logsumexp(z + w[None, :], axis=1))
        scaled = np.exp(z + (w[:, None] + w[None, :]))
        residual = max(
            float(np.abs(scaled.sum(axis=1) - 1.0).max()),
            float(np.abs(scaled.sum(axis=0) - 1.0).max()),
        )
        if residual <= tol:
            return StochasticOperator(scaled, "bi")
    raise ConvergenceError(
        f"bistochastic scaling stalled at residual {residual:.3e} > tol {tol:.3e} "
        f"after {max_iter} iterations",
        residual=float(residual),
        iterations=max_iter,
    )


def magnetic_operator(p_plus: StochasticOperator, theta) -> ComplexOperator:
    """Attach an antisymmetric phase field to a row-stochastic operator.

    The assembled entries are P_ij * e^{i Theta_ij}; their magnitudes agree
    with P exactly because magnitudes and phases are stored separately.
    """
    return ComplexOperator(magnitudes=p_plus, phases=theta)
