"""Softmax, product of experts, and the log-domain matrix scalers."""

import numpy as np
import pytest
import scipy.special

from markovgeom.normalize import (
    ConvergenceError,
    ScalingPotentials,
    StochasticOperator,
    poe_combine,
    schrodinger_solve,
    sinkhorn,
    softmax_cols,
    softmax_rows,
)


def sinkhorn_oracle(kernel, iterations=50_000):
    """Plain-domain alternating normalization, run to numerical fixed point."""
    z = kernel.copy()
    for _ in range(iterations):
        z = z / z.sum(axis=0, keepdims=True)
        z = z / z.sum(axis=1, keepdims=True)
        if max(np.abs(z.sum(0) - 1).max(), np.abs(z.sum(1) - 1).max()) < 1e-14:
            break
    return z


def schrodinger_oracle(kernel, mu_plus, mu_minus, iterations=50_000):
    """Plain-domain fixed-point updates for the marginal-scaling potentials."""
    u = np.ones(kernel.shape[0])
    v = np.ones(kernel.shape[0])
    for _ in range(iterations):
        u = mu_plus / (kernel @ v)
        v = mu_minus / (kernel.T @ u)
    return u[:, None] * kernel * v[None, :]


class TestStochasticOperator:
    def test_rejects_negative_entries(self):
        with pytest.raises(ValueError, match="nonnegative"):
            StochasticOperator(np.array([[1.5, -0.5], [0.5, 0.5]]), "row")

    def test_rejects_bad_row_sums(self):
        with pytest.raises(ValueError, match="row sums"):
            StochasticOperator(np.full((2, 2), 0.4), "row")

    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError, match="kind"):
            StochasticOperator(np.full((2, 2), 0.5), "diagonal")

    def test_bi_checks_both_axes(self):
        StochasticOperator(np.full((3, 3), 1.0 / 3.0), "bi")
        with pytest.raises(ValueError):
            StochasticOperator(np.array([[1.0, 0.0], [1.0, 0.0]]), "bi")


class TestSoftmaxRows:
    def test_uniform_logits(self):
        out = softmax_rows(np.array([[0.0, 0.0]]))
        np.testing.assert_array_equal(out.values, [[0.5, 0.5]])
        assert out.kind == "row"

    def test_analytic_exponentials(self):
        out = softmax_rows(np.array([[0.0, np.log(3.0)]]))
        np.testing.assert_allclose(out.values, [[0.25, 0.75]], atol=1e-15)

    def test_shift_invariance(self):
        rng = np.random.default_rng(31)
        z = rng.standard_normal((6, 5))
        shift = rng.standard_normal(6)
        np.testing.assert_allclose(
            softmax_rows(z + shift[:, None]).values,
            softmax_rows(z).values,
            rtol=0,
            atol=1e-15,
        )

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(32)
        out = softmax_rows(rng.standard_normal((7, 7)))
        np.testing.assert_allclose(out.values.sum(axis=1), 1.0, atol=1e-12)

    def test_matches_scipy_oracle(self):
        rng = np.random.default_rng(33)
        z = rng.standard_normal((5, 8))
        np.testing.assert_allclose(
            softmax_rows(z).values, scipy.special.softmax(z, axis=1), atol=1e-15
        )

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="finite"):
            softmax_rows(np.array([[0.0, -np.inf]]))


class TestSoftmaxCols:
    def test_uniform(self):
        out = softmax_cols(np.zeros((2, 2)))
        np.testing.assert_array_equal(out.values, np.full((2, 2), 0.5))
        assert out.kind == "column"

    def test_transpose_duality(self):
        rng = np.random.default_rng(34)
        z = rng.standard_normal((6, 6))
        np.testing.assert_allclose(
            softmax_cols(z).values, softmax_rows(z.T).values.T, rtol=0, atol=1e-15
        )

    def test_column_shift_invariance(self):
        rng = np.random.default_rng(35)
        z = rng.standard_normal((4, 5))
        shift = rng.standard_normal(5)
        np.testing.assert_allclose(
            softmax_cols(z + shift[None, :]).values,
            softmax_cols(z).values,
            rtol=0,
            atol=1e-15,
        )


class TestPoeCombine:
    def test_uniform_expert_is_neutral(self):
        rng = np.random.default_rng(36)
        a = softmax_rows(rng.standard_normal((4, 4)))
        uniform = StochasticOperator(np.full((4, 4), 0.25), "row")
        np.testing.assert_allclose(poe_combine(a, uniform).values, a.values, atol=1e-15)

    def test_idempotent_on_uniform(self):
        u = StochasticOperator(np.array([[0.5, 0.5]]), "row")
        np.testing.assert_array_equal(poe_combine(u, u).values, [[0.5, 0.5]])

    def test_equals_softmax_of_summed_logits(self):
        rng = np.random.default_rng(37)
        z = rng.standard_normal((3, 3))
        s = rng.standard_normal((3, 3))
        combined = poe_combine(softmax_rows(z), softmax_rows(s))
        np.testing.assert_allclose(
            combined.values, softmax_rows(z + s).values, rtol=0, atol=1e-12
        )
        col_combined = poe_combine(softmax_cols(z), softmax_cols(s))
        np.testing.assert_allclose(
            col_combined.values, softmax_cols(z + s).values, rtol=0, atol=1e-12
        )

    def test_kind_mismatch_rejected(self):
        a = softmax_rows(np.zeros((2, 2)))
        b = softmax_cols(np.zeros((2, 2)))
        with pytest.raises(ValueError, match="kind"):
            poe_combine(a, b)

    def test_shape_mismatch_rejected(self):
        a = softmax_rows(np.zeros((2, 2)))
        b = softmax_rows(np.zeros((3, 3)))
        with pytest.raises(ValueError, match="shape"):
            poe_combine(a, b)


class TestSinkhorn:
    def test_flat_kernel_scales_to_uniform(self):
        operator, potentials = sinkhorn(np.zeros((2, 2)))
        np.testing.assert_allclose(operator.values, np.full((2, 2), 0.5), atol=1e-12)
        assert operator.kind == "bi"
        assert potentials.residual <= 1e-10

    def test_analytic_two_by_two(self):
        kernel = np.array([[2.0, 1.0], [1.0, 2.0]])
        operator, _ = sinkhorn(np.log(kernel), tol=1e-13)
        np.testing.assert_allclose(operator.values, kernel / 3.0, atol=1e-10)

    def test_matches_plain_domain_oracle(self):
        rng = np.random.default_rng(38)
        z = rng.standard_normal((6, 6))
        operator, _ = sinkhorn(z, tol=1e-13)
        np.testing.assert_allclose(operator.values, sinkhorn_oracle(np.exp(z)), atol=1e-12)

    def test_gauge_invariance(self):
        rng = np.random.default_rng(39)
        z = rng.standard_normal((5, 5))
        u = rng.standard_normal(5)
        v = rng.standard_normal(5)
        plain, _ = sinkhorn(z, tol=1e-12)
        gauged, _ = sinkhorn(z + u[:, None] + v[None, :], tol=1e-12)
        np.testing.assert_allclose(plain.values, gauged.values, rtol=0, atol=1e-10)

    def test_closure_under_multiplication(self):
        rng = np.random.default_rng(40)
        a, _ = sinkhorn(rng.standard_normal((6, 6)), tol=1e-13)
        b, _ = sinkhorn(rng.standard_normal((6, 6)), tol=1e-13)
        product = a.values @ b.values
        np.testing.assert_allclose(product.sum(axis=0), 1.0, atol=1e-12)
        np.testing.assert_allclose(product.sum(axis=1), 1.0, atol=1e-12)

    def test_potentials_reconstruct_matrix(self):
        rng = np.random.default_rng(41)
        z = rng.standard_normal((5, 5))
        operator, potentials = sinkhorn(z, tol=1e-12)
        rebuilt = potentials.u[:, None] * np.exp(z) * potentials.v[None, :]
        np.testing.assert_allclose(rebuilt, operator.values, rtol=0, atol=1e-10)

    def test_row_potential_has_unit_geometric_mean(self):
        rng = np.random.default_rng(42)
        _, potentials = sinkhorn(rng.standard_normal((6, 6)), tol=1e-12)
        assert abs(np.log(potentials.u).mean()) < 1e-12

    def test_nonconvergence_raises_with_residual(self):
        rng = np.random.default_rng(43)
        with pytest.raises(ConvergenceError) as excinfo:
            sinkhorn(rng.standard_normal((6, 6)), tol=1e-30, max_iter=3)
        assert excinfo.value.iterations == 3
        assert excinfo.value.residual > 0.0

    def test_rejects_rectangular_input(self):
        with pytest.raises(ValueError, match="square"):
            sinkhorn(np.zeros((2, 3)))


class TestSchrodingerSolve:
    def test_flat_kernel_uniform_marginals(self):
        uniform = np.full(2, 0.5)
        potentials = schrodinger_solve(np.ones((2, 2)), uniform, uniform)
        coupling = potentials.u[:, None] * np.ones((2, 2)) * potentials.v[None, :]
        np.testing.assert_allclose(coupling, np.full((2, 2), 0.25), atol=1e-12)

    def test_flat_kernel_product_coupling(self):
        mu_plus = np.array([0.75, 0.25])
        mu_minus = np.array([0.5, 0.5])
        potentials = schrodinger_solve(np.ones((2, 2)), mu_plus, mu_minus)
        coupling = potentials.u[:, None] * np.ones((2, 2)) * potentials.v[None, :]
        np.testing.assert_allclose(
            coupling, [[0.375, 0.375], [0.125, 0.125]], atol=1e-12
        )

    def test_marginal_constraints_hold(self):
        rng = np.random.default_rng(44)
        pts = rng.standard_normal((3, 2))
        d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
        kernel = np.exp(-d2)
        mu_plus = rng.uniform(0.5, 1.5, 3)
        mu_plus /= mu_plus.sum()
        mu_minus = rng.uniform(0.5, 1.5, 3)
        mu_minus /= mu_minus.sum()
        potentials = schrodinger_solve(kernel, mu_plus, mu_minus, tol=1e-11)
        coupling = potentials.u[:, None] * kernel * potentials.v[None, :]
        np.testing.assert_allclose(coupling.sum(axis=1), mu_plus, atol=1e-10)
        np.testing.assert_allclose(coupling.sum(axis=0), mu_minus, atol=1e-10)
        np.testing.assert_allclose(
            coupling, schrodinger_oracle(kernel, mu_plus, mu_minus, 2000), atol=1e-10
        )

    def test_agrees_with_sinkhorn_up_to_scale(self):
        rng = np.random.default_rng(45)
        z = rng.standard_normal((5, 5))
        operator, _ = sinkhorn(z, tol=1e-12)
        uniform = np.full(5, 0.2)
        potentials = schrodinger_solve(np.exp(z), uniform, uniform, tol=1e-13)
        coupling = potentials.u[:, None] * np.exp(z) * potentials.v[None, :]
        np.testing.assert_allclose(5.0 * coupling, operator.values, rtol=0, atol=1e-10)

    def test_rejects_zero_marginal(self):
        kernel = np.ones((2, 2))
        with pytest.raises(ValueError, match="positive"):
            schrodinger_solve(kernel, np.array([1.0, 0.0]), np.full(2, 0.5))

    def test_rejects_unnormalized_marginal(self):
        kernel = np.ones((2, 2))
        with pytest.raises(ValueError, match="sum to 1"):
            schrodinger_solve(kernel, np.array([0.7, 0.6]), np.full(2, 0.5))

    def test_rejects_nonpositive_kernel(self):
        with pytest.raises(ValueError, match="positive"):
            schrodinger_solve(np.array([[1.0, 0.0], [1.0, 1.0]]),
                              np.full(2, 0.5), np.full(2, 0.5))

    def test_potential_gauge_leaves_coupling_invariant(self):
        # rescaling u by c and v by 1/c is a symmetry of the coupling, so
        # only the coupling is comparable, never raw potentials
        rng = np.random.default_rng(46)
        z = rng.standard_normal((4, 4))
        kernel = np.exp(z)
        mu = np.full(4, 0.25)
        potentials = schrodinger_solve(kernel, mu, mu, tol=1e-12)
        c = 3.7
        scaled = ScalingPotentials(potentials.u * c, potentials.v / c,
                                   potentials.iterations, potentials.residual)
        original = potentials.u[:, None] * kernel * potentials.v[None, :]
        rescaled = scaled.u[:, None] * kernel * scaled.v[None, :]
        np.testing.assert_allclose(original, rescaled, rtol=1e-14)
