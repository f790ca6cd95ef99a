import numpy as np
from django.test import SimpleTestCase

from nashlabapi.numerics.cournot import gradient_matrix
from nashlabapi.numerics.exceptions import ConfigurationError, UnsupportedOperationError
from nashlabapi.numerics.game_model import pseudogradient_exact
from nashlabapi.numerics.operators import (
    StackedState,
    StepSizes,
    assemble_phi,
    block_apply,
    block_constraint_matrix,
    block_transpose_apply,
    certified_gamma,
    cocoercivity_constant,
    extended_lipschitz,
    extragradient_step_sizes,
    forward_eval,
    kkt_residual,
    max_step_sizes,
    natural_residual,
    phi_inverse_norm,
    project_box,
    project_nonneg,
    skew_apply,
    skew_matrix,
    theta_constant,
    verify_fb_inclusion,
)
from nashlabapi.numerics.solvers import fb_iteration

from .builders import quadratic_game, ring, small_market


class OperatorTests(SimpleTestCase):
    def setUp(self) -> None:
        """
        Build a coupled quadratic game on a ring and a random extended state
        """
        self.game, self.matrix, self.offset = quadratic_game(num_agents=4, dim=2, m=3)
        self.graph = ring(4)
        self.rng = np.random.default_rng(5)
        size = 4 * 3
        self.state = StackedState(self.rng.uniform(-1, 1, self.game.n),
                                  self.rng.standard_normal(size), self.rng.exponential(1.0, size))

    def test_skew_operator_is_orthogonal_to_its_argument(self):
        """
        Ensure <M omega, omega> vanishes for random states.
        """
        for _ in range(50):
            state = StackedState(self.rng.standard_normal(self.game.n),
                                 self.rng.standard_normal(12), self.rng.standard_normal(12))
            vector = state.as_vector()
            image = skew_apply(self.game, self.graph, state)
            self.assertLessEqual(abs(image @ vector), 1e-12 * (vector @ vector))

    def test_skew_apply_matches_dense_matrix(self):
        """
        Ensure the blockwise skew product equals the dense skew matrix.
        """
        dense = skew_matrix(self.game, self.graph)
        np.testing.assert_allclose(dense, -dense.T)
        np.testing.assert_allclose(skew_apply(self.game, self.graph, self.state),
                                   dense @ self.state.as_vector(), rtol=1e-12, atol=1e-12)

    def test_block_products(self):
        """
        Ensure the per-agent products agree with the block diagonal constraint matrix.
        """
        blocks = block_constraint_matrix(self.game)
        np.testing.assert_allclose(block_apply(self.game, self.state.x), blocks @ self.state.x)
        np.testing.assert_allclose(block_transpose_apply(self.game, self.state.lam),
                                   blocks.T @ self.state.lam)

    def test_max_step_sizes(self):
        """
        Ensure the steps follow the diagonal-dominance formulas.
        """
        gamma = 2.0
        steps = max_step_sizes(self.game, self.graph, gamma)
        for i, block in enumerate(self.game.constraint_blocks):
            self.assertAlmostEqual(steps.alpha[i], 1 / (gamma + np.abs(block).sum(axis=0).max()))
            self.assertAlmostEqual(steps.nu[i], 1 / (gamma + 4.0))
            self.assertAlmostEqual(steps.sigma[i],
                                   1 / (gamma + 4.0 + np.abs(block).sum(axis=1).max()))

    def test_phi_dominates_gamma(self):
        """
        Ensure the smallest eigenvalue of Phi is at least gamma under the maximal steps.
        """
        for gamma in (0.1, 1.0, 25.0):
            phi = assemble_phi(self.game, self.graph, max_step_sizes(self.game, self.graph, gamma))
            np.testing.assert_allclose(phi, phi.T)
            self.assertGreaterEqual(np.linalg.eigvalsh(phi)[0], gamma * (1 - 1e-9))

    def test_certified_gamma_bounds_phi_inverse(self):
        """
        Ensure the certified gamma keeps the norm of Phi inverse below 2 theta.
        """
        market = small_market(seed=2)
        beta = cocoercivity_constant(gradient_matrix(market))
        theta = theta_constant(beta, market.graph)
        gamma = certified_gamma(theta)
        phi = assemble_phi(market.game, market.graph,
                           max_step_sizes(market.game, market.graph, gamma))
        norm = phi_inverse_norm(phi)
        self.assertLess(norm, 2 * theta)
        exact = np.linalg.norm(np.linalg.inv(phi), 2)
        self.assertAlmostEqual(norm, exact, delta=1e-3 * exact)

    def test_certified_gamma_rejects_bad_input(self):
        """
        Ensure nonpositive theta and margins at most 1 are rejected.
        """
        with self.assertRaises(ConfigurationError):
            certified_gamma(0.0)
        with self.assertRaises(ConfigurationError):
            certified_gamma(1.0, margin=1.0)
        with self.assertRaises(ConfigurationError):
            max_step_sizes(self.game, self.graph, 0.0)

    def test_phi_inverse_norm_needs_positive_definite(self):
        """
        Ensure an indefinite preconditioner is reported.
        """
        with self.assertRaises(ConfigurationError):
            phi_inverse_norm(np.diag([1.0, -1.0]))

    def test_cocoercivity_constant(self):
        """
        Ensure 1/L for symmetric matrices and mu/L^2 otherwise.
        """
        self.assertAlmostEqual(cocoercivity_constant(np.diag([1.0, 4.0])), 0.25)
        rotation = np.array([[2.0, 1.0], [-1.0, 2.0]])
        self.assertAlmostEqual(cocoercivity_constant(rotation), 2.0 / 5.0)
        with self.assertRaises(ConfigurationError):
            cocoercivity_constant(np.zeros((2, 2)))
        with self.assertRaises(ConfigurationError):
            cocoercivity_constant(np.diag([1.0, -1.0]))

    def test_theta_constant(self):
        """
        Ensure theta is limited by the largest degree of the graph.
        """
        self.assertEqual(theta_constant(1.0, self.graph), 0.25)
        self.assertEqual(theta_constant(0.1, self.graph), 0.1)

    def test_projections(self):
        """
        Ensure the box and nonnegative orthant projections clamp componentwise.
        """
        np.testing.assert_array_equal(project_box(([0.0, 0.0], [1.0, 2.0]), [-1.0, 3.0]), [0.0, 2.0])
        np.testing.assert_array_equal(project_nonneg([-0.5, 0.0, 2.0]), [0.0, 0.0, 2.0])

    def test_stacked_state_vector(self):
        """
        Ensure a stacked state rebuilds from its vector and rejects wrong lengths.
        """
        rebuilt = StackedState.from_vector(self.game, self.graph, self.state.as_vector())
        np.testing.assert_array_equal(rebuilt.lam, self.state.lam)
        with self.assertRaises(ConfigurationError):
            StackedState.from_vector(self.game, self.graph, np.zeros(3))
        self.assertFalse(StackedState(np.array([np.nan]), np.zeros(0), np.zeros(0)).is_finite())

    def test_step_sizes_must_be_positive(self):
        """
        Ensure zero or infinite steps are rejected.
        """
        with self.assertRaises(ConfigurationError):
            StepSizes(np.array([0.1, 0.0]), np.ones(2), np.ones(2))
        with self.assertRaises(ConfigurationError):
            StepSizes(np.ones(2), np.array([np.inf, 1.0]), np.ones(2))

    def test_extragradient_steps_respect_lipschitz_bound(self):
        """
        Ensure the shrunk steps satisfy max step times L_H below 1.
        """
        steps = max_step_sizes(self.game, self.graph, 0.5)
        lipschitz = np.linalg.norm(self.matrix, 2)
        shrunk = extragradient_step_sizes(steps, self.game, self.graph, lipschitz)
        bound = extended_lipschitz(self.game, self.graph, lipschitz)
        self.assertLess(shrunk.largest() * bound, 1.0)

    def test_inclusion_holds_for_exact_fb_step(self):
        """
        Ensure a forward-backward step satisfies the resolvent inclusion.
        """
        steps = max_step_sizes(self.game, self.graph, 3.0)
        fhat = pseudogradient_exact(self.game, self.state.x)
        following = fb_iteration(self.state, self.game, self.graph, steps, fhat)
        a_hat = forward_eval(self.game, self.graph, self.state, fhat)
        report = verify_fb_inclusion(self.game, self.graph, self.state, following, a_hat, steps)
        self.assertTrue(report.passed, report.violations)

    def test_inclusion_detects_a_wrong_step(self):
        """
        Ensure a perturbed successor violates the inclusion.
        """
        steps = max_step_sizes(self.game, self.graph, 3.0)
        fhat = pseudogradient_exact(self.game, self.state.x)
        following = fb_iteration(self.state, self.game, self.graph, steps, fhat)
        shifted = StackedState(following.x, following.z + 0.1, following.lam)
        a_hat = forward_eval(self.game, self.graph, self.state, fhat)
        self.assertFalse(verify_fb_inclusion(self.game, self.graph, self.state, shifted, a_hat,
                                             steps))

    def test_kkt_residual_components(self):
        """
        Ensure feasibility and complementarity are read from Ax - b.
        """
        x = np.full(self.game.n, 1.0)
        gap = self.game.A @ x - self.game.b
        lam = np.array([0.5, 0.0, 1.0])
        report = kkt_residual(self.game, x, lam)
        self.assertAlmostEqual(report.feasibility, np.linalg.norm(np.maximum(gap, 0.0)))
        self.assertAlmostEqual(report.complementarity, abs(lam @ gap))
        self.assertEqual(report.worst(), max(report.stationarity, report.feasibility,
                                             report.complementarity))

    def test_natural_residual(self):
        """
        Ensure the natural residual needs a game without shared constraints.
        """
        with self.assertRaises(UnsupportedOperationError):
            natural_residual(self.game, np.zeros(self.game.n))
        plain, matrix, offset = quadratic_game(num_agents=2, dim=1, m=0)
        self.assertGreater(natural_residual(plain, np.zeros(2)), 0.0)
        step = 1.0 / np.linalg.norm(matrix, 2)
        x = np.zeros(2)
        for _ in range(5000):
            x = plain.project(x - step * (matrix @ x + offset))
        self.assertLess(natural_residual(plain, x), 1e-10)
