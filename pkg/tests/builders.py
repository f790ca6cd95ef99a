"""Small games and markets shared by the test modules"""

import numpy as np

from nashlabapi.numerics.cournot import CournotParams, generate_instance
from nashlabapi.numerics.game_model import Box, build_game
from nashlabapi.numerics.graph import build_dual_graph, cycle_edges
from nashlabapi.numerics.sampling import SampleStream


def quadratic_game(num_agents=3, dim=2, m=2, seed=0, bound=0.5, noise=True):
    """F(x) = Qx + c with Q symmetric positive definite, boxes [-1, 1]

    The sampled oracle adds the agent's draw to its partial gradient, so the
    estimation error is exactly the draw.
    """
    rng = np.random.default_rng(seed)
    n = num_agents * dim
    root = rng.standard_normal((n, n))
    matrix = root @ root.T / n + np.eye(n)
    offset = rng.standard_normal(n)
    slices = [slice(i * dim, (i + 1) * dim) for i in range(num_agents)]

    def exact(i, x):
        return (matrix @ x + offset)[slices[i]]

    def sampled(i, x, xi):
        return exact(i, x) + (xi if noise else 0.0)

    def cost(i, x, xi):
        own = x[slices[i]]
        return float(0.5 * own @ matrix[slices[i], slices[i]] @ own
                     + own @ (matrix[slices[i]] @ x - matrix[slices[i], slices[i]] @ own)
                     + own @ (offset[slices[i]] + xi))

    blocks = [rng.uniform(0.0, 1.0, (m, dim)) for _ in range(num_agents)]
    game = build_game(
        boxes=[Box(-np.ones(dim), np.ones(dim)) for _ in range(num_agents)],
        constraint_blocks=blocks,
        b=np.full(m, bound) if m else np.zeros(0),
        gradient_oracle=sampled,
        exact_oracle=exact,
        cost_oracle=cost,
        sample_dim=dim,
        affine_in_sample=True,
        name=f"quadratic-{num_agents}x{m}",
    )
    return game, matrix, offset


def ring(num_agents):
    return build_dual_graph(cycle_edges(num_agents), num_agents)


def noise_stream(game, seed=0, variance=0.01):
    return SampleStream(seed=seed, sample_dim=game.sample_dim, mean=0.0, variance=variance,
                        lower=None)


def small_market(seed=0, num_companies=5, num_markets=3, variance=0.1, coupled=True):
    params = CournotParams(num_companies=num_companies, num_markets=num_markets,
                           demand_variance=variance,
                           min_companies_per_market=min(2, num_companies))
    return generate_instance(seed, params, coupled=coupled)


def benchmark_market(seed=0):
    return generate_instance(seed, CournotParams())
