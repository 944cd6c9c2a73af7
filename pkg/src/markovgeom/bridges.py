"""Entropic bridges over positive kernels and their operator identities.

A one-step bridge is the KL-closest coupling to a positive reference kernel
subject to prescribed row and column marginals; it factorizes as
diag(u_plus) K diag(u_minus).  The diffusion operator is the equilibrium
special case (equal marginals given by normalized kernel row sums, closed-form
potentials, no iterations); attention operators arise from the same machinery
over a directional kernel and are generically non-reversible.  This module
also houses probability currents, regime classification, and the exact
factorizations tying the diffusion operator to the directional attention maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .geometry import Bidivergence, squared_distance
from .normalize import (
    ConvergenceError,
    ScalingPotentials,
    StochasticOperator,
    poe_combine,
    schrodinger_solve,
    softmax_rows,
)
from .operators import ComplexOperator, dmap, rbf_kernel

# currents below this fraction of the largest flux count as zero when
# separating equilibrium from steady-state circulation
CURRENT_ZERO_FRACTION = 1e-9


@dataclass(frozen=True, eq=False)
class BridgeSolution:
    """Coupling with its scaling potentials, marginals, and forward operator.

    The coupling reconstructs as diag(u) K diag(v) from the potentials, and
    the forward operator is the coupling with each row divided by the source
    marginal, making it row-stochastic up to the solver residual.
    """

    coupling: np.ndarray
    potentials: ScalingPotentials
    mu_plus: np.ndarray
    mu_minus: np.ndarray
    forward: StochasticOperator


@dataclass(frozen=True, eq=False)
class RegimeReport:
    """Classification of an operator/marginal pair as EQ, NESS, or NE.

    ``stationary`` is the common marginal when both agree (EQ/NESS) and None
    for genuine one-step transport (NE).  Residuals are always reported so a
    borderline call can be audited.
    """

    regime: str
    stationary: np.ndarray | None
    currents: np.ndarray
    max_current: float
    current_threshold: float
    stationarity_residual: float
    marginal_gap: float


def _validate_probability(vec, n: int, name: str) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    if vec.ndim != 1 or vec.shape[0] != n:
        raise ValueError(f"{name} must be a length-{n} vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)) or np.any(vec < 0.0):
        raise ValueError(f"{name} must be nonnegative and finite")
    return vec


def solve_bridge(
    kernel,
    mu_plus,
    mu_minus,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> BridgeSolution:
    """Solve the one-step bridge over a strictly positive reference kernel.

    The returned coupling has row sums mu_plus and column sums mu_minus within
    ``tol``, and its forward operator propagates mu_plus to mu_minus.
    """
    k = np.asarray(kernel, dtype=float)
    potentials = schrodinger_solve(k, mu_plus, mu_minus, tol=tol, max_iter=max_iter)
    mu_plus = np.asarray(mu_plus, dtype=float)
    mu_minus = np.asarray(mu_minus, dtype=float)
    coupling = potentials.u[:, None] * k * potentials.v[None, :]
    # row sums equal mu_plus only to the solver residual, so loosen the
    # construction sanity bound accordingly for small marginal entries
    check_tol = max(1e-6, 10.0 * tol / float(mu_plus.min()))
    forward = StochasticOperator(coupling / mu_plus[:, None], "row", check_tol=check_tol)
    return BridgeSolution(coupling, potentials, mu_plus, mu_minus, forward)


def dmap_as_bridge(d2, beta: float) -> BridgeSolution:
    """The diffusion operator as an equilibrium bridge, in closed form.

    The Gaussian kernel's normalized row sums give the intrinsic stationary
    distribution pi; with both marginals equal to pi the bridge coupling is
    diag(pi) P_plus, realized by the closed-form potentials u = pi / rowsums
    and v = 1 without running any iterations.
    """
    kernel = rbf_kernel(d2, beta)
    k = kernel.values
    degrees = k.sum(axis=1)
    pi = degrees / degrees.sum()
    u = pi / degrees
    v = np.ones_like(pi)
    coupling = u[:, None] * k
    residual = max(
        float(np.abs(coupling.sum(axis=1) - pi).max()),
        float(np.abs(coupling.sum(axis=0) - pi).max()),
    )
    potentials = ScalingPotentials(u, v, iterations=0, residual=residual)
    forward = StochasticOperator(coupling / pi[:, None], "row")
    return BridgeSolution(coupling, potentials, pi, pi, forward)


def doob_transform(p_plus: StochasticOperator, h) -> StochasticOperator:
    """Reweight a row-stochastic operator by a positive function of the
    destination state and renormalize the rows.

    Constant h (any positive scale) is neutral and returns the operator
    unchanged, exactly.
    """
    if p_plus.kind not in ("row", "bi"):
        raise ValueError("doob_transform expects a row-stochastic operator")
    h = np.asarray(h, dtype=float)
    n = p_plus.shape[1]
    if h.ndim != 1 or h.shape[0] != n:
        raise ValueError(f"h must be a length-{n} vector, got shape {h.shape}")
    if not np.all(np.isfinite(h)) or np.any(h <= 0.0):
        raise ValueError("h must be strictly positive and finite")
    if np.all(h == h[0]):
        return p_plus
    weighted = p_plus.values * h[None, :]
    return StochasticOperator(weighted / weighted.sum(axis=1, keepdims=True), "row")


def stationary_distribution(
    p: StochasticOperator, tol: float = 1e-12, max_iter: int = 10_000
) -> np.ndarray:
    """Left fixed point of a strictly positive row-stochastic operator.

    Power iteration from the uniform vector; positivity makes the fixed point
    unique, so the start only affects the iteration count.  Convergence is
    declared when the update moves the iterate by at most ``tol`` in sup norm.
    """
    if p.kind not in ("row", "bi"):
        raise ValueError("stationary_distribution expects a row-stochastic operator")
    values = p.values
    if np.any(values <= 0.0):
        raise ValueError("operator must be strictly positive for a unique fixed point")
    n = values.shape[0]
    pi = np.full(n, 1.0 / n)
    residual = np.inf
    for iteration in range(max_iter):
        nxt = pi @ values
        residual = float(np.abs(nxt - pi).max())
        if residual <= tol:
            return pi
        pi = nxt / nxt.sum()
    raise ConvergenceError(
        f"stationary distribution stalled at residual {residual:.3e} > tol "
        f"{tol:.3e} after {max_iter} iterations",
        residual=float(residual),
        iterations=max_iter,
    )


def currents(p: StochasticOperator, rho) -> np.ndarray:
    """Antisymmetric probability currents rho_i P_ij - rho_j P_ji."""
    rho = _validate_probability(rho, p.shape[0], "rho")
    flux = rho[:, None] * p.values
    return flux - flux.T


def classify_regime(
    p: StochasticOperator, mu_plus, mu_minus, tol: float = 1e-10
) -> RegimeReport:
    """Classify an operator with endpoint marginals as EQ, NESS, or NE.

    Distinct marginals (beyond ``tol``) mean one-step transport (NE) and are
    tested first.  Otherwise the pair is a steady-state candidate: vanishing
    currents at the common marginal give EQ (detailed balance), circulating
    currents give NESS.  "Vanishing" is scale-relative: below a fixed fraction
    of the largest one-step flux.
    """
    n = p.shape[0]
    mu_plus = _validate_probability(mu_plus, n, "mu_plus")
    mu_minus = _validate_probability(mu_minus, n, "mu_minus")
    marginal_gap = float(np.abs(mu_plus - mu_minus).max())
    j = currents(p, mu_plus)
    max_current = float(np.abs(j).max())
    threshold = CURRENT_ZERO_FRACTION * float((mu_plus[:, None] * p.values).max())
    stationarity_residual = float(np.abs(mu_plus @ p.values - mu_plus).max())
    if marginal_gap > tol:
        regime = "NE"
        stationary = None
    elif max_current <= threshold:
        regime = "EQ"
        stationary = mu_plus
    else:
        regime = "NESS"
        stationary = mu_plus
    return RegimeReport(
        regime=regime,
        stationary=stationary,
        currents=j,
        max_current=max_current,
        current_threshold=threshold,
        stationarity_residual=stationarity_residual,
        marginal_gap=marginal_gap,
    )


def sb_factorization_check(bidiv: Bidivergence, beta: float) -> float:
    """Deviation of the bridge-style attention factorization from the
    diffusion operator.

    Assembles, in the log domain, the row-normalized product of the forward
    attention map, the backward attention map, and the backward column mass
    z_minus_j (the column sums of the backward directional kernel), and
    returns the sup-norm difference from the diffusion operator built on the
    summed divergences.  Exact algebraically; the return value measures pure
    floating-point drift.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    log_fwd = -beta * bidiv.fwd
    log_bwd = -beta * bidiv.bwd
    log_a_plus = log_fwd - logsumexp(log_fwd, axis=1, keepdims=True)
    log_a_minus = log_bwd - logsumexp(log_bwd, axis=0, keepdims=True)
    log_z_minus = logsumexp(log_bwd, axis=0)
    terms = log_a_plus + log_a_minus + log_z_minus[None, :]
    rhs = np.exp(terms - logsumexp(terms, axis=1, keepdims=True))
    reference = dmap(squared_distance(bidiv), beta).values
    return float(np.abs(rhs - reference).max())


def poe_factorization(bidiv: Bidivergence, beta: float) -> StochasticOperator:
    """Diffusion operator as a product of two row-softmax directional experts.

    Both experts use row normalization, so their combination is the row
    softmax of the summed divergences, i.e. the diffusion operator itself.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    forward_expert = softmax_rows(-beta * bidiv.fwd)
    backward_expert = softmax_rows(-beta * bidiv.bwd)
    return poe_combine(forward_expert, backward_expert)


def attention_bridge(
    bidiv: Bidivergence,
    beta: float,
    mu_plus,
    mu_minus,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> BridgeSolution:
    """Bridge over the forward directional kernel exp(-beta * fwd).

    The forward operator of the solution is a column-biased attention map:
    the row softmax of the forward logits plus log u_minus per column,
    equivalently a Doob transform of the plain forward attention with
    h = u_minus.  Choosing mu_minus = mu_plus @ A_plus makes it coincide with
    the plain forward attention map.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    kernel = np.exp(-beta * bidiv.fwd)
    return solve_bridge(kernel, mu_plus, mu_minus, tol=tol, max_iter=max_iter)


def magnetic_flux(pi, op: ComplexOperator) -> tuple[np.ndarray, np.ndarray]:
    """Complex edge flux pi_i P_ij e^{i Theta_ij} and its imaginary part.

    The imaginary part pi_i P_ij sin(Theta_ij) acts as a magnetic current: it
    vanishes identically for zero phases and is antisymmetric whenever the
    magnitudes satisfy detailed balance with pi.  The real part is the
    classical flux weighted by cos(Theta).
    """
    magnitudes = op.magnitudes.values
    pi = _validate_probability(pi, magnitudes.shape[0], "pi")
    classical = pi[:, None] * magnitudes
    flux = classical * np.exp(1j * op.phases)
    magnetic_current = classical * np.sin(op.phases)
    return flux, magnetic_current


def attention_gauge(pi_plus, a_plus: StochasticOperator) -> np.ndarray:
    """Antisymmetric log-flux field log(pi_i A_ij / (pi_j A_ji)).

    Zero exactly when the pair satisfies detailed balance; otherwise it
    encodes the steady-state circulation as a gauge field that can be attached
    to a reversible operator via ``magnetic_operator``.  Values are reported
    unwrapped (phases are only meaningful mod 2 pi).
    """
    values = a_plus.values
    pi_plus = _validate_probability(pi_plus, values.shape[0], "pi_plus")
    flux = pi_plus[:, None] * values
    if np.any(flux <= 0.0):
        raise ValueError("operator and stationary vector must be strictly positive")
    log_flux = np.log(flux)
    return log_flux - log_flux.T
