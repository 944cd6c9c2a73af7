"""Markov geometry toolkit.

Builds the shared substrate behind attention, diffusion maps, and entropic
bridges: a signed divergence pair whose exponentiated and normalized forms
yield every operator in the family, plus the exact algebraic identities
connecting them and a verification suite that checks each one numerically.
"""

from .bridges import (
    BridgeSolution,
    RegimeReport,
    attention_bridge,
    attention_gauge,
    classify_regime,
    currents,
    dmap_as_bridge,
    doob_transform,
    magnetic_flux,
    poe_factorization,
    sb_factorization_check,
    solve_bridge,
    stationary_distribution,
)
from .geometry import (
    Bidivergence,
    DataCloud,
    GramMatrix,
    HermitianPartition,
    InteractionWeights,
    bidivergence,
    edge_phases,
    generalized_gram,
    gram,
    hermitian_partition,
    squared_distance,
)
from .normalize import (
    ConvergenceError,
    ScalingPotentials,
    StochasticOperator,
    poe_combine,
    schrodinger_solve,
    sinkhorn,
    softmax_cols,
    softmax_rows,
)
from .operators import (
    ComplexOperator,
    KernelMatrix,
    LaplacianPair,
    attention_backward,
    attention_bistochastic,
    attention_forward,
    dmap,
    dmap_bistochastic,
    directional_kernels,
    laplacians,
    magnetic_operator,
    rbf_kernel,
)
from .spectral import (
    Embedding,
    SpectralDecomposition,
    conjugate_hermitize,
    conjugate_symmetrize,
    decompose,
    diffusion_embedding,
)
from .verify import CheckResult, run_identity_checks

__version__ = "0.1.0"

__all__ = [
    "Bidivergence",
    "BridgeSolution",
    "CheckResult",
    "ComplexOperator",
    "ConvergenceError",
    "DataCloud",
    "Embedding",
    "GramMatrix",
    "HermitianPartition",
    "InteractionWeights",
    "KernelMatrix",
    "LaplacianPair",
    "RegimeReport",
    "ScalingPotentials",
    "SpectralDecomposition",
    "StochasticOperator",
    "attention_backward",
    "attention_bistochastic",
    "attention_bridge",
    "attention_forward",
    "attention_gauge",
    "bidivergence",
    "classify_regime",
    "conjugate_hermitize",
    "conjugate_symmetrize",
    "currents",
    "decompose",
    "diffusion_embedding",
    "directional_kernels",
    "dmap",
    "dmap_as_bridge",
    "dmap_bistochastic",
    "doob_transform",
    "edge_phases",
    "generalized_gram",
    "gram",
    "hermitian_partition",
    "laplacians",
    "magnetic_flux",
    "magnetic_operator",
    "poe_combine",
    "poe_factorization",
    "rbf_kernel",
    "run_identity_checks",
    "sb_factorization_check",
    "schrodinger_solve",
    "sinkhorn",
    "softmax_cols",
    "softmax_rows",
    "solve_bridge",
    "squared_distance",
    "stationary_distribution",
]
