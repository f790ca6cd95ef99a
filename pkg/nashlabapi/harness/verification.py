"""Property checks run against an instance by the `verify` command"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from nashlabapi.numerics.cournot import gradient_matrix
from nashlabapi.numerics.game_model import pseudogradient_exact
from nashlabapi.numerics.graph import algebraic_connectivity, laplacian_apply
from nashlabapi.numerics.operators import (
    StackedState,
    assemble_phi,
    certified_gamma,
    cocoercivity_constant,
    max_step_sizes,
    phi_inverse_norm,
    skew_apply,
    stacked_offsets,
    theta_constant,
)
from nashlabapi.numerics.sampling import error_mean_zscores, variance_decay_slope

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    bound: str


@dataclass
class VerificationReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(check.passed for check in self.checks)

    def failures(self):
        return [check for check in self.checks if not check.passed]

    def as_table(self):
        width = max((len(check.name) for check in self.checks), default=4)
        lines = [f"{'check':<{width}}  {'result':<6}  {'value':>12}  bound"]
        for check in self.checks:
            result = "ok" if check.passed else "FAIL"
            lines.append(f"{check.name:<{width}}  {result:<6}  {check.value:>12.4e}  {check.bound}")
        return "\n".join(lines)


def _random_state(game, graph, rng):
    size = graph.num_nodes * game.m
    x = rng.uniform(game.lower, game.upper)
    return StackedState(x, rng.standard_normal(size), rng.exponential(1.0, size))


def check_skew(game, graph, rng, pairs=100):
    worst = 0.0
    for _ in range(pairs):
        state = _random_state(game, graph, rng)
        vector = state.as_vector()
        worst = max(worst, abs(skew_apply(game, graph, state) @ vector) / (vector @ vector))
    return Check("skew orthogonality", worst <= 1e-12, worst, "<= 1e-12 relative")


def check_laplacian(graph):
    eigenvalues = np.linalg.eigvalsh(graph.laplacian)
    row_sums = np.abs(graph.laplacian.sum(axis=1)).max()
    worst = max(-eigenvalues[0], row_sums)
    return Check("laplacian psd, zero row sums", worst <= 1e-12, float(worst), "<= 1e-12")


def check_connectivity(graph):
    value = algebraic_connectivity(graph)
    passed = graph.num_nodes == 1 or value > 1e-10
    return Check("algebraic connectivity", passed, value, "> 0 for N > 1")


def check_projection(game, rng, pairs=1000):
    """||Px - Py||^2 <= <Px - Py, x - y>"""
    worst = -math.inf
    spread = game.upper - game.lower
    for _ in range(pairs):
        x = game.lower - spread + 3.0 * spread * rng.random(game.n)
        y = game.lower - spread + 3.0 * spread * rng.random(game.n)
        gap = game.project(x) - game.project(y)
        worst = max(worst, gap @ gap - gap @ (x - y))
    return Check("projection firmly nonexpansive", worst <= 1e-12, float(worst), "<= 1e-12")


def _a_bar(game, graph, state):
    dual = stacked_offsets(game) + laplacian_apply(graph, state.lam) if game.m else np.zeros(0)
    return np.concatenate([pseudogradient_exact(game, state.x), np.zeros(state.z.size), dual])


def check_cocoercivity(game, graph, theta, rng, pairs=1000):
    """<A(u) - A(v), u - v> >= theta ||A(u) - A(v)||^2"""
    worst = -math.inf
    for _ in range(pairs):
        first, second = _random_state(game, graph, rng), _random_state(game, graph, rng)
        image = _a_bar(game, graph, first) - _a_bar(game, graph, second)
        slack = theta * (image @ image) - image @ (first.as_vector() - second.as_vector())
        worst = max(worst, slack / max(image @ image, 1e-300))
    return Check(f"A_bar {theta:.3e}-cocoercive", worst <= 1e-10, float(worst), "<= 1e-10")


def check_steps(game, graph, theta, gamma):
    phi = assemble_phi(game, graph, max_step_sizes(game, graph, gamma))
    smallest = float(np.linalg.eigvalsh(phi)[0])
    inverse = phi_inverse_norm(phi)
    return [
        Check("lambda_min(Phi) >= gamma", smallest >= gamma * (1 - 1e-6), smallest,
              f">= {gamma:.4e}"),
        Check("||Phi^-1|| < 2 theta", inverse < 2 * theta, inverse, f"< {2 * theta:.4e}"),
    ]


def check_zero_mean(game, stream, rng, points=5, size=10, trials=400, level=1e-3):
    """Largest per-component z-score of the mean sampling error over `points` test points

    The bound is the two-sided normal quantile at `level`, split over every
    component tested.
    """
    worst = 0.0
    for index in range(points):
        x = rng.uniform(game.lower, game.upper)
        zscores = error_mean_zscores(game, x, stream, size, trials, offset=index * trials)
        worst = max(worst, float(np.abs(zscores).max()))
    threshold = float(norm.ppf(1.0 - level / (2 * points * game.n)))
    return Check("sampling error zero-mean", worst < threshold, worst, f"|z| < {threshold:.2f}")


def check_variance_decay(game, stream, rng, trials=200):
    x = rng.uniform(game.lower, game.upper)
    slope = variance_decay_slope(game, x, stream, trials=trials)
    return Check("variance decay slope", abs(slope + 1.0) <= 0.2, slope, "-1 +/- 0.2")


def verify_instance(instance, seed=0, pairs=1000, trials=200, margin=1.05):
    """Run every property check on a Cournot instance"""
    rng = np.random.default_rng(seed)
    game, graph = instance.game, instance.graph
    beta = cocoercivity_constant(gradient_matrix(instance))
    theta = theta_constant(beta, graph)
    gamma = certified_gamma(theta, margin)
    stream = instance.demand_stream(seed)

    report = VerificationReport()
    report.checks.append(check_skew(game, graph, rng, pairs=pairs))
    report.checks.append(check_laplacian(graph))
    report.checks.append(check_connectivity(graph))
    report.checks.append(check_projection(game, rng, pairs))
    report.checks.append(check_cocoercivity(game, graph, theta, rng, pairs))
    report.checks.extend(check_steps(game, graph, theta, gamma))
    if stream.variance > 0:
        report.checks.append(check_zero_mean(game, stream, rng, trials=2 * trials))
        report.checks.append(check_variance_decay(game, stream, rng, trials))
    for check in report.failures():
        logger.warning("check failed: %s (%.4e, bound %s)", check.name, check.value, check.bound)
    return report
