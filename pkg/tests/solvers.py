import dataclasses
from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from nashlabapi.numerics.cournot import strong_monotonicity_constants
from nashlabapi.numerics.exceptions import (
    ConfigurationError,
    ConvergenceError,
    DivergenceError,
    NumericalError,
    UnsupportedOperationError,
)
from nashlabapi.numerics.game_model import Box, build_game, pseudogradient_exact
from nashlabapi.numerics.graph import build_dual_graph
from nashlabapi.numerics.operators import (
    StackedState,
    assemble_phi,
    eg_compact_step,
    extragradient_step_sizes,
    fbf_compact_step,
    forward_eval,
    kkt_residual,
    max_step_sizes,
    natural_residual,
    phi_norm,
    verify_fb_inclusion,
)
from nashlabapi.numerics.sampling import BatchSchedule, StepSchedule, batch_size, draw_joint
from nashlabapi.numerics.solvers import (
    CSV_COLUMNS,
    Algorithm,
    DictReferenceCache,
    MessageLog,
    SolverConfig,
    compute_reference,
    default_gamma,
    eg_iteration,
    fb_iteration,
    fbf_iteration,
    run,
    sne_fb_iteration,
)

from .builders import benchmark_market, quadratic_game, ring, small_market


def _steps(game, graph):
    return max_step_sizes(game, graph, default_gamma(game, graph))


class IterationTests(SimpleTestCase):
    def setUp(self) -> None:
        """
        Build a coupled quadratic game on a ring and a random extended state
        """
        self.game, self.matrix, self.offset = quadratic_game(num_agents=4, dim=2, m=2, seed=1)
        self.graph = ring(4)
        rng = np.random.default_rng(3)
        self.state = StackedState(rng.uniform(-1, 1, self.game.n), rng.standard_normal(8),
                                  rng.exponential(1.0, 8))
        self.steps = extragradient_step_sizes(_steps(self.game, self.graph), self.game,
                                              self.graph, np.linalg.norm(self.matrix, 2))
        self.oracle = lambda x: pseudogradient_exact(self.game, x)

    def test_fbf_matches_compact_form(self):
        """
        Ensure the distributed forward-backward-forward round equals its dense form.
        """
        distributed = fbf_iteration(self.state, self.game, self.graph, self.steps,
                                    self.oracle(self.state.x), self.oracle)
        compact = fbf_compact_step(self.game, self.graph, self.steps, self.state, self.oracle)
        np.testing.assert_allclose(distributed.as_vector(), compact.as_vector(), rtol=1e-12,
                                   atol=1e-12)

    def test_eg_matches_compact_form(self):
        """
        Ensure the distributed extragradient round equals its dense form.
        """
        distributed = eg_iteration(self.state, self.game, self.graph, self.steps,
                                   self.oracle(self.state.x), self.oracle)
        compact = eg_compact_step(self.game, self.graph, self.steps, self.state, self.oracle)
        np.testing.assert_allclose(distributed.as_vector(), compact.as_vector(), rtol=1e-12,
                                   atol=1e-12)

    def test_fb_reads_only_allowed_versions(self):
        """
        Ensure phase 1 reads only previous values and phase 2 reads only z of the current round.
        """
        log = MessageLog()
        state = self.state
        for k in range(3):
            state = fb_iteration(state, self.game, self.graph, self.steps,
                                 self.oracle(state.x), log=log, k=k)
        links = sum(len(neighbors) for neighbors in self.graph.neighbors)
        self.assertEqual(log.round, 3)
        self.assertEqual(log.backward_steps, 3)
        for round_ in range(3):
            first, second = log.reads(phase=1, round=round_), log.reads(phase=2, round=round_)
            self.assertEqual(len(first), links)
            self.assertEqual(len(second), 3 * links)
            self.assertTrue(all(message.version == "previous" for message in first))
            self.assertTrue(all(message.variable == "z" for message in second
                                if message.version == "current"))
        neighbors = {i: {j for j, _ in self.graph.neighbors[i]} for i in range(4)}
        self.assertTrue(all(message.sender in neighbors[message.receiver]
                            for message in log.messages))

    def test_extragradient_rounds(self):
        """
        Ensure EG takes two backward steps per round and FBF one, with phase 1 on old values.
        """
        for iteration, backward in ((eg_iteration, 2), (fbf_iteration, 1)):
            log = MessageLog()
            iteration(self.state, self.game, self.graph, self.steps, self.oracle(self.state.x),
                      self.oracle, log=log)
            self.assertEqual(log.backward_steps, backward)
            self.assertTrue(all(message.version == "previous" for message in log.reads(phase=1)))
            self.assertTrue(any(message.version == "current" for message in log.reads(phase=2)))

    def test_fb_stays_in_local_sets(self):
        """
        Ensure primal iterates stay in the boxes and duals stay nonnegative.
        """
        state = self.state
        for k in range(20):
            state = fb_iteration(state, self.game, self.graph, self.steps,
                                 self.oracle(state.x) * 50, k=k)
            self.assertTrue(np.all(state.x >= self.game.lower))
            self.assertTrue(np.all(state.x <= self.game.upper))
            self.assertTrue(np.all(state.lam >= 0))

    def test_single_agent_without_coupling_terms(self):
        """
        Ensure one agent with a zero constraint block takes plain projected steps.
        """
        game = build_game([Box([0.0, -1.0], [1.0, 1.0])], [np.zeros((2, 2))],
                          np.array([0.5, -0.3]), lambda i, x, xi: x,
                          exact_oracle=lambda i, x: x)
        graph = build_dual_graph([], 1)
        steps = max_step_sizes(game, graph, 2.0)
        state = StackedState(np.array([0.9, -0.8]), np.array([0.2, -0.4]), np.array([0.1, 0.3]))
        fhat = np.array([-3.0, 0.4])

        following = fb_iteration(state, game, graph, steps, fhat)
        np.testing.assert_allclose(following.x, game.project(state.x - steps.alpha[0] * fhat))
        np.testing.assert_allclose(following.z, state.z)
        np.testing.assert_allclose(
            following.lam, np.maximum(state.lam - steps.sigma[0] * np.array([0.5, -0.3]), 0.0)
        )

    def test_nash_step_on_scalar_quadratic(self):
        """
        Ensure one projected step with gamma = 1 solves (x - 1)^2 / 2 on [0, 2].
        """
        game = build_game([Box([0.0], [2.0])], [np.zeros((0, 1))], np.zeros(0),
                          lambda i, x, xi: x - 1.0, exact_oracle=lambda i, x: x - 1.0)
        for start in (0.0, 0.4, 2.0):
            x = np.array([start])
            np.testing.assert_allclose(sne_fb_iteration(x, game, 1.0, x - 1.0), [1.0])

    def test_nash_step_refuses_shared_constraints(self):
        """
        Ensure the plain Nash step rejects a coupled game.
        """
        with self.assertRaises(UnsupportedOperationError):
            sne_fb_iteration(self.state.x, self.game, 0.1, np.zeros(self.game.n))

    def test_non_finite_update(self):
        """
        Ensure a NaN estimate raises a numerical error naming the block.
        """
        with self.assertRaises(NumericalError) as context:
            fb_iteration(self.state, self.game, self.graph, self.steps,
                         np.full(self.game.n, np.nan), k=4)
        self.assertEqual(context.exception.iteration, 4)
        self.assertEqual(context.exception.block, "x")


class RunTests(SimpleTestCase):
    def setUp(self) -> None:
        """
        Build a small coupled market, its steps and a cached reference solution
        """
        self.market = small_market(seed=0)
        self.game, self.graph = self.market.game, self.market.graph
        self.steps = _steps(self.game, self.graph)
        self.reference = compute_reference(self.game, self.graph, tol=1e-10)

    def _config(self, algorithm=Algorithm.DET_FB, **kwargs):
        kwargs.setdefault("steps", self.steps)
        kwargs.setdefault("max_iters", 20)
        return SolverConfig(algorithm=algorithm, **kwargs)

    def test_reference_satisfies_kkt(self):
        """
        Ensure the reference solution passes the KKT check at its tolerance.
        """
        report = kkt_residual(self.game, self.reference.x, self.reference.lam)
        self.assertLess(report.worst(), 1e-10)
        self.assertFalse(self.reference.cached)

    def test_solution_is_a_fixed_point(self):
        """
        Ensure a forward-backward round from the solution with the exact gradient stays put.
        """
        solution = self.reference.state
        fhat = pseudogradient_exact(self.game, solution.x)
        following = fb_iteration(solution, self.game, self.graph, self.steps, fhat)
        np.testing.assert_allclose(following.as_vector(), solution.as_vector(), rtol=0,
                                   atol=1e-8)

    def test_reference_cache(self):
        """
        Ensure a cached reference is reused only when its tolerance is tight enough.
        """
        cache = DictReferenceCache()
        first = compute_reference(self.game, self.graph, tol=1e-9, cache=cache, key="market")
        again = compute_reference(self.game, self.graph, tol=1e-9, cache=cache, key="market")
        self.assertTrue(again.cached)
        self.assertEqual(again.x.tobytes(), first.x.tobytes())
        tighter = compute_reference(self.game, self.graph, tol=1e-11, cache=cache, key="market")
        self.assertFalse(tighter.cached)
        self.assertEqual(cache.get("market").tolerance, 1e-11)

    def test_reference_budget(self):
        """
        Ensure an exhausted budget and a missing exact oracle are reported.
        """
        with self.assertRaises(ConvergenceError):
            compute_reference(self.game, self.graph, max_iters=20)
        game = dataclasses.replace(self.game, exact_oracle=None)
        with self.assertRaises(UnsupportedOperationError):
            compute_reference(game, self.graph)

    def test_csv_row_layout(self):
        """
        Ensure each row carries the fixed columns with a 1-based k.
        """
        record = run(self._config(), self.game, self.graph, self.reference)
        self.assertEqual(record.status, "completed")
        self.assertEqual(record.iterations, 20)
        self.assertEqual(len(record.rows[0].as_tuple()), len(CSV_COLUMNS))
        self.assertEqual(list(record.column("k")), list(range(1, 21)))
        self.assertTrue(np.all(np.diff(record.column("elapsed_ns")) >= 0))
        with self.assertRaises(ConfigurationError):
            record.column("speed")

    def test_fb_iterates_satisfy_inclusion(self):
        """
        Ensure 200 forward-backward iterates on the benchmark satisfy the resolvent inclusion.
        """
        market = benchmark_market(seed=0)
        game, graph = market.game, market.graph
        steps = _steps(game, graph)
        failures = []

        def check(k, previous, state, row):
            a_hat = forward_eval(game, graph, previous, pseudogradient_exact(game, previous.x))
            report = verify_fb_inclusion(game, graph, previous, state, a_hat, steps)
            if not report:
                failures.append((k, report.violations))

        run(SolverConfig(Algorithm.DET_FB, steps=steps, max_iters=200), game, graph,
            callback=check)
        self.assertEqual(failures, [])

    def test_fejer_monotone(self):
        """
        Ensure the Phi-distance to the solution never grows under deterministic steps.
        """
        phi = assemble_phi(self.game, self.graph, self.steps)
        target = self.reference.state.as_vector()
        distances = []
        run(self._config(max_iters=200), self.game, self.graph, self.reference,
            callback=lambda k, previous, state, row: distances.append(
                phi_norm(phi, state.as_vector() - target)))
        start = phi_norm(phi, StackedState.initial(self.game, self.graph).as_vector() - target)
        for before, after in zip([start] + distances, distances):
            self.assertLessEqual(after, before * (1 + 1e-9) + 1e-9)

    def test_oracle_and_sample_counts(self):
        """
        Ensure one call per FB round, two per FBF and EG round, and cumulative samples.
        """
        record = run(self._config(max_iters=5), self.game, self.graph, self.reference)
        self.assertEqual(list(record.column("oracle_calls")), [1] * 5)
        self.assertEqual(record.total_samples, 0)

        stream = self.market.demand_stream(0)
        batch = BatchSchedule()
        record = run(self._config(Algorithm.STOCH_FB_SAA, batch=batch, max_iters=5), self.game,
                     self.graph, self.reference, stream=stream)
        expected = np.cumsum([5 * batch_size(batch, k) for k in range(5)])
        self.assertEqual(list(record.column("samples")), list(expected))

        record = run(self._config(Algorithm.FBF, batch=batch, max_iters=4), self.game,
                     self.graph, self.reference, stream=stream)
        self.assertEqual(list(record.column("oracle_calls")), [2] * 4)
        self.assertEqual(record.total_samples, sum(2 * 5 * batch_size(batch, k) for k in range(4)))
        self.assertEqual(record.total_oracle_calls, 8)

        record = run(self._config(Algorithm.EG, max_iters=3), self.game, self.graph,
                     self.reference)
        self.assertEqual(record.config["oracle"], "exact")
        self.assertEqual(record.total_oracle_calls, 6)

    def test_second_evaluation_samples(self):
        """
        Ensure EG evaluates twice on one batch while FBF draws a fresh batch for its correction.
        """
        stream = self.market.demand_stream(0)
        batch = BatchSchedule(max_size=5)
        draws = {}
        for algorithm in (Algorithm.EG, Algorithm.FBF):
            with mock.patch("nashlabapi.numerics.solvers.draw_joint",
                            wraps=draw_joint) as spy:
                record = run(self._config(algorithm, batch=batch, max_iters=2), self.game,
                             self.graph, self.reference, stream=stream)
            draws[algorithm] = [(call.args[2], call.args[4]) for call in spy.call_args_list]
            self.assertEqual(record.total_oracle_calls, 4)

        self.assertEqual(draws[Algorithm.EG], [(0, 0), (1, 0)])
        self.assertEqual(draws[Algorithm.FBF], [(0, 0), (0, 1), (1, 0), (1, 1)])

        record = run(self._config(Algorithm.EG, batch=batch, max_iters=3), self.game,
                     self.graph, self.reference, stream=stream)
        self.assertEqual(record.total_samples, sum(5 * batch_size(batch, k) for k in range(3)))

    def test_seeded_runs_are_reproducible(self):
        """
        Ensure equal seeds reproduce every metric and different seeds do not.
        """
        config = self._config(Algorithm.STOCH_FB_SAA, batch=BatchSchedule(max_size=20), seed=3)
        stream = self.market.demand_stream(0)

        def metrics(record):
            return [row.as_tuple()[:-1] for row in record.rows]

        first = run(config, self.game, self.graph, self.reference, stream=stream)
        second = run(config, self.game, self.graph, self.reference, stream=stream)
        other = run(dataclasses.replace(config, seed=4), self.game, self.graph, self.reference,
                    stream=stream)
        self.assertEqual(metrics(first), metrics(second))
        self.assertNotEqual(metrics(first), metrics(other))

    def test_callback_sees_every_round(self):
        """
        Ensure the callback gets each 0-based k with the row it produced.
        """
        seen = []
        run(self._config(max_iters=7), self.game, self.graph, self.reference,
            callback=lambda k, previous, state, row: seen.append((k, row.k)))
        self.assertEqual(seen, [(k, k + 1) for k in range(7)])

    def test_tolerance_stops_early(self):
        """
        Ensure a run stops as converged once the stop metric falls below tol.
        """
        record = run(self._config(max_iters=5000, tol=1e-3), self.game, self.graph,
                     self.reference)
        self.assertEqual(record.status, "converged")
        self.assertLess(record.final("rel_dist"), 1e-3)
        self.assertLess(record.iterations, 5000)
        self.assertIsNotNone(record.calls_to_accuracy(1e-3))

    def test_divergence_is_reported(self):
        """
        Ensure crossing the divergence threshold raises with the partial record attached.
        """
        with self.assertRaises(DivergenceError) as context:
            run(self._config(divergence_threshold=1e-12), self.game, self.graph, self.reference)
        record = context.exception.record
        self.assertEqual(record.status, "diverged")
        self.assertEqual(record.iterations, 1)

    def test_numerical_failure_is_reported(self):
        """
        Ensure a NaN oracle stops the run with status failed.
        """
        broken = dataclasses.replace(self.game,
                                     exact_oracle=lambda i, x: np.full(self.game.dims[i], np.nan))
        with self.assertRaises(NumericalError) as context:
            run(self._config(), broken, self.graph)
        self.assertEqual(context.exception.record.status, "failed")

    def test_invalid_combinations(self):
        """
        Ensure invalid algorithm and schedule combinations name the offending key.
        """
        cases = [
            (self._config(Algorithm.STOCH_FB_SAA), "batch"),
            (self._config(batch=BatchSchedule()), "batch"),
            (self._config(Algorithm.STOCH_FB_SA_EXPERIMENTAL), "experimental"),
            (self._config(Algorithm.SNE_FB_SA, step_schedule=StepSchedule(gamma0=0.1)),
             "algorithm"),
            (self._config(max_iters=0), "max_iters"),
            (self._config(stop_metric="speed"), "stop_metric"),
            (self._config(steps=None), "steps"),
        ]
        for config, path in cases:
            with self.assertRaises(ConfigurationError) as context:
                config.validate(self.game)
            self.assertEqual(context.exception.path, path)
        with self.assertRaises(ConfigurationError):
            run(self._config(Algorithm.STOCH_FB_SAA, batch=BatchSchedule()), self.game,
                self.graph)

    def test_experimental_mode(self):
        """
        Ensure single-sample forward-backward runs once opted in and is flagged unguaranteed.
        """
        config = self._config(Algorithm.STOCH_FB_SA_EXPERIMENTAL, experimental=True,
                              step_schedule=StepSchedule(gamma0=1.0), max_iters=10)
        record = run(config, self.game, self.graph, self.reference,
                     stream=self.market.demand_stream(0))
        self.assertEqual(record.config["guarantee"], "none")
        self.assertEqual(record.total_samples, 10 * 5)

    def test_eg_agrees_with_reference(self):
        """
        Ensure deterministic extragradient converges to the reference solution.
        """
        game, matrix, _ = quadratic_game()
        graph = ring(3)
        reference = compute_reference(game, graph, tol=1e-11)
        steps = extragradient_step_sizes(_steps(game, graph), game, graph,
                                         np.linalg.norm(matrix, 2))
        record = run(SolverConfig(Algorithm.EG, steps=steps, max_iters=20000, tol=1e-5),
                     game, graph, reference)
        self.assertEqual(record.status, "converged")
        self.assertLess(record.final("rel_dist"), 1e-4)

    def test_stochastic_fb_approaches_solution(self):
        """
        Ensure SAA forward-backward on a small market gets within 5e-2 of the solution.
        """
        config = self._config(Algorithm.STOCH_FB_SAA, batch=BatchSchedule(max_size=500),
                              max_iters=3000, tol=5e-2)
        record = run(config, self.game, self.graph, self.reference,
                     stream=self.market.demand_stream(0))
        self.assertEqual(record.status, "converged")


class NashRunTests(SimpleTestCase):
    def setUp(self) -> None:
        """
        Build an uncoupled market with deterministic demand and its solution
        """
        self.market = small_market(seed=2, variance=0.0, coupled=False)
        self.game, self.graph = self.market.game, self.market.graph
        self.reference = compute_reference(self.game, self.graph, tol=1e-11)
        _, _, self.beta = strong_monotonicity_constants(self.market)

    def test_distance_never_grows(self):
        """
        Ensure vanishing projected steps below 2 beta never move away from the equilibrium.
        """
        schedule = StepSchedule(gamma0=1.0, eta=0.6, cap=2 * self.beta)
        config = SolverConfig(Algorithm.SNE_FB_SAA, step_schedule=schedule,
                              batch=BatchSchedule(max_size=4), max_iters=300)
        residuals = []
        record = run(config, self.game, self.graph, self.reference,
                     stream=self.market.demand_stream(0),
                     callback=lambda k, previous, state, row: residuals.append(
                         natural_residual(self.game, state.x)))
        distances = record.column("rel_dist")
        self.assertTrue(np.all(np.diff(distances) <= 1e-12))
        self.assertLess(residuals[-1], residuals[0])
        np.testing.assert_allclose(record.column("kkt_stat"), residuals, rtol=1e-12)

    def test_single_sample_mode(self):
        """
        Ensure the single-sample Nash mode draws one sample per agent per round.
        """
        config = SolverConfig(Algorithm.SNE_FB_SA,
                              step_schedule=StepSchedule(gamma0=1.0, cap=2 * self.beta),
                              max_iters=12)
        record = run(config, self.game, self.graph, self.reference,
                     stream=self.market.demand_stream(0))
        self.assertEqual(record.total_samples, 12 * self.market.num_companies)
        self.assertEqual(record.final("dual_disagreement"), 0.0)
