"""Point-cloud geometry: Gram matrices, signed divergence pairs, distances, phases.

The central object is the *bidivergence*: a pair of signed pseudo-divergences
(forward and backward) obtained by diagonal shifts of a possibly asymmetric
generalized Gram matrix.  Each part is zero on the diagonal and may be
negative off it, but their sum is always the symmetric (Mahalanobis) squared
distance, to which only the symmetric part of the weight matrix contributes.

Convention note: with the diagonal-shift split used here the forward and
backward parts are exact mutual transposes for *every* weight matrix, plain or
generalized; any split of diagonal-shift form that sums to a symmetric
distance forces this relation.  The genuinely asymmetric information lives in
the antisymmetric part of the generalized Gram matrix itself, which is
exposed separately through ``hermitian_partition`` and ``edge_phases``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _as_finite_matrix(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class DataCloud:
    """N samples in D feature dimensions, one sample per row."""

    points: np.ndarray

    def __post_init__(self):
        pts = _as_finite_matrix(self.points, "points")
        if pts.shape[0] < 2:
            raise ValueError("a data cloud needs at least 2 samples")
        if pts.shape[1] < 1:
            raise ValueError("a data cloud needs at least 1 feature")
        object.__setattr__(self, "points", pts)

    @property
    def n_samples(self) -> int:
        return self.points.shape[0]

    @property
    def n_features(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True, eq=False)
class InteractionWeights:
    """Square feature-interaction matrix, optionally built from a factor pair.

    When constructed via :meth:`from_factors` the materialized product
    ``query_factor @ key_factor.T`` is what every downstream operation uses;
    the factors are retained only for reference.
    """

    matrix: np.ndarray
    query_factor: np.ndarray | None = None
    key_factor: np.ndarray | None = None

    def __post_init__(self):
        mat = _as_finite_matrix(self.matrix, "weight matrix")
        if mat.shape[0] != mat.shape[1]:
            raise ValueError(f"weight matrix must be square, got shape {mat.shape}")
        object.__setattr__(self, "matrix", mat)

    @classmethod
    def from_factors(cls, query_factor, key_factor) -> "InteractionWeights":
        """Build weights as the product of D x d query and key factors."""
        wq = _as_finite_matrix(query_factor, "query factor")
        wk = _as_finite_matrix(key_factor, "key factor")
        if wq.shape != wk.shape:
            raise ValueError(
                f"factor shapes must match, got {wq.shape} and {wk.shape}"
            )
        return cls(matrix=wq @ wk.T, query_factor=wq, key_factor=wk)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class HermitianPartition:
    """Split of a weight matrix into symmetric and antisymmetric parts.

    ``symmetric + 1j * antisymmetric`` is Hermitian by construction.
    """

    symmetric: np.ndarray
    antisymmetric: np.ndarray

    def __post_init__(self):
        s = _as_finite_matrix(self.symmetric, "symmetric part")
        a = _as_finite_matrix(self.antisymmetric, "antisymmetric part")
        if s.shape != a.shape or s.shape[0] != s.shape[1]:
            raise ValueError("partition parts must be square matrices of equal shape")
        if not np.array_equal(s, s.T):
            raise ValueError("symmetric part must satisfy S == S.T exactly")
        if not np.array_equal(a, -a.T):
            raise ValueError("antisymmetric part must satisfy A == -A.T exactly")
        object.__setattr__(self, "symmetric", s)
        object.__setattr__(self, "antisymmetric", a)

    @property
    def matrix(self) -> np.ndarray:
        """The combined complex Hermitian matrix S + iA."""
        return self.symmetric + 1j * self.antisymmetric


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """Pairwise inner-product matrix; ``generalized`` marks a weighted product
    that carries no symmetry guarantee."""

    values: np.ndarray
    generalized: bool = False

    def __post_init__(self):
        vals = _as_finite_matrix(self.values, "gram values")
        if vals.shape[0] != vals.shape[1]:
            raise ValueError(f"gram matrix must be square, got shape {vals.shape}")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True, eq=False)
class Bidivergence:
    """Forward/backward signed divergence pair with exactly zero diagonals."""

    fwd: np.ndarray
    bwd: np.ndarray

    def __post_init__(self):
        fwd = _as_finite_matrix(self.fwd, "forward divergence")
        bwd = _as_finite_matrix(self.bwd, "backward divergence")
        if fwd.shape != bwd.shape or fwd.shape[0] != fwd.shape[1]:
            raise ValueError("divergence parts must be square matrices of equal shape")
        if np.any(np.diag(fwd) != 0.0) or np.any(np.diag(bwd) != 0.0):
            raise ValueError("divergence parts must have exactly zero diagonals")
        object.__setattr__(self, "fwd", fwd)
        object.__setattr__(self, "bwd", bwd)

    @property
    def n(self) -> int:
        return self.fwd.shape[0]


def gram(cloud: DataCloud) -> GramMatrix:
    """Plain Gram matrix R R^T of the sample rows."""
    return GramMatrix(cloud.points @ cloud.points.T, generalized=False)


def generalized_gram(cloud: DataCloud, weights: InteractionWeights) -> GramMatrix:
    """Weighted Gram matrix R W R^T; reduces to ``gram`` when W is the identity."""
    if weights.dim != cloud.n_features:
        raise ValueError(
            f"weight dimension {weights.dim} does not match "
            f"feature dimension {cloud.n_features}"
        )
    return GramMatrix(cloud.points @ weights.matrix @ cloud.points.T, generalized=True)


def hermitian_partition(weights: InteractionWeights) -> HermitianPartition:
    """Split W into (W + W.T)/2 and (W - W.T)/2; the parts sum back to W."""
    w = weights.matrix
    return HermitianPartition(symmetric=(w + w.T) / 2.0, antisymmetric=(w - w.T) / 2.0)


def bidivergence(gram_matrix: GramMatrix) -> Bidivergence:
    """Diagonal-shift split of a Gram matrix into a signed divergence pair.

    fwd[i, j] = G[i, i] - G[i, j] and bwd[i, j] = G[j, j] - G[j, i].  The
    orientation is chosen so that a row softmax of ``-beta * fwd`` reproduces
    the row softmax of the raw scaled scores ``beta * G`` (the diagonal term
    is a per-row shift the softmax ignores).
    """
    g = gram_matrix.values
    d = np.diag(g).copy()
    return Bidivergence(fwd=d[:, None] - g, bwd=d[None, :] - g.T)


def squared_distance(bidiv: Bidivergence) -> np.ndarray:
    """Symmetric squared-distance matrix fwd + bwd (zero diagonal)."""
    return bidiv.fwd + bidiv.bwd


def edge_phases(cloud: DataCloud, weights: InteractionWeights, beta: float) -> np.ndarray:
    """Antisymmetric edge phase field from the weighted Gram asymmetry.

    Theta[i, j] = beta * (G[i, j] - G[j, i]) / 2 with G = R W R^T, i.e. the
    antisymmetric weight part pushed onto sample pairs through the data.  The
    beta factor keeps phases on the same temperature scale as the kernel
    magnitudes.  Vanishes identically for symmetric W.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    g = generalized_gram(cloud, weights).values
    return beta * (g - g.T) / 2.0
