"""Networked Cournot market benchmark

Company i sells x_i in the markets it participates in. A_i maps its sales to
markets, the price vector is P(xi) = P_bar - D(xi) A x with random slopes
D(xi) = diag(xi), and each company pays c_i(x_i) = pi_i ||x_i||^2 + q_i^T x_i.
The sampled cost of company i is c_i(x_i) - P(xi)^T A_i x_i.
"""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, replace
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.linalg

from .exceptions import ConfigurationError
from .game_model import Box, build_game, dump_game
from .graph import build_dual_graph, cycle_edges
from .sampling import SampleStream

logger = logging.getLogger(__name__)

SCHEMA_TAG = "nashlab.cournot/v1"
BENCHMARK_CHORDS = ((2, 15), (6, 13))


@dataclass(frozen=True)
class CournotParams:
    """Sizes and parameter ranges of a generated market"""

    num_companies: int = 20
    num_markets: int = 7
    capacity_range: tuple = (1.0, 1.5)
    market_cap_range: tuple = (0.5, 1.0)
    cost_quadratic_range: tuple = (1.0, 8.0)
    cost_linear_range: tuple = (0.1, 0.6)
    price_intercept_range: tuple = (2.0, 4.0)
    demand_mean: float = 0.8
    demand_variance: float = 0.1
    markets_per_company: tuple = (1, 3)
    min_companies_per_market: int = 2

    def __post_init__(self):
        if self.num_companies < 1 or self.num_markets < 1:
            raise ConfigurationError("a market needs at least one company and one market")
        for name in ("capacity_range", "market_cap_range", "cost_quadratic_range",
                     "cost_linear_range", "price_intercept_range", "markets_per_company"):
            low, high = getattr(self, name)
            if low > high:
                raise ConfigurationError(f"{name} is empty: {low} > {high}")
            object.__setattr__(self, name, (low, high))
        if self.cost_quadratic_range[0] <= 0:
            raise ConfigurationError("quadratic cost coefficients must be positive")
        if self.capacity_range[0] <= 0 or self.market_cap_range[0] <= 0:
            raise ConfigurationError("capacities must be positive")
        if self.markets_per_company[0] < 1:
            raise ConfigurationError("every company needs at least one market")
        if self.min_companies_per_market > self.num_companies:
            raise ConfigurationError("more companies per market requested than exist")
        if self.demand_variance < 0:
            raise ConfigurationError("demand variance must be non-negative")

    def as_dict(self):
        return {key: list(value) if isinstance(value, tuple) else value
                for key, value in asdict(self).items()}

    @classmethod
    def from_dict(cls, values):
        return cls(**{key: tuple(value) if isinstance(value, list) else value
                      for key, value in values.items()})


@dataclass(frozen=True, eq=False)
class CournotInstance:
    """A concrete market: incidence, sampled parameters and the dual graph"""

    params: CournotParams
    incidence: np.ndarray
    capacities: tuple
    market_caps: np.ndarray
    pi: np.ndarray
    q: tuple
    price_intercepts: np.ndarray
    edges: tuple
    seed: Optional[int] = None
    coupled: bool = True

    @property
    def num_companies(self):
        return self.incidence.shape[0]

    @property
    def num_markets(self):
        return self.incidence.shape[1]

    @cached_property
    def blocks(self):
        """A_i: 0/1 matrix sending company i's sales to its markets"""
        blocks = []
        for row in self.incidence:
            markets = np.flatnonzero(row)
            block = np.zeros((self.num_markets, markets.size))
            block[markets, np.arange(markets.size)] = 1.0
            blocks.append(block)
        return tuple(blocks)

    @cached_property
    def slices(self):
        bounds = np.concatenate(([0], np.cumsum([cap.size for cap in self.capacities])))
        return tuple(slice(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]))

    @cached_property
    def A(self):
        return np.hstack(self.blocks)

    @cached_property
    def mean_slopes(self):
        """Expected demand slopes, truncation included"""
        return np.full(self.num_markets, self.demand_stream(0).expected_value)

    def demand_stream(self, seed):
        return SampleStream(
            seed=seed,
            sample_dim=self.num_markets,
            mean=self.params.demand_mean,
            variance=self.params.demand_variance,
            lower=0.0,
        )

    @cached_property
    def game(self):
        if self.coupled:
            blocks, bound = self.blocks, self.market_caps
        else:
            blocks, bound = tuple(np.zeros((0, b.shape[1])) for b in self.blocks), np.zeros(0)
        return build_game(
            boxes=[Box(np.zeros(cap.size), cap) for cap in self.capacities],
            constraint_blocks=blocks,
            b=bound,
            gradient_oracle=self.sampled_gradient,
            exact_oracle=self.exact_gradient,
            cost_oracle=self.sampled_cost,
            sample_dim=self.num_markets,
            affine_in_sample=True,
            name=f"cournot-{self.num_companies}x{self.num_markets}",
        )

    @cached_property
    def graph(self):
        return build_dual_graph(self.edges, self.num_companies)

    def without_coupling(self):
        """Same market with the market caps dropped (a plain Nash game)"""
        return replace(self, coupled=False)

    def sampled_gradient(self, i, x, xi):
        return cournot_sampled_gradient(self, i, x, xi)

    def exact_gradient(self, i, x):
        return cournot_exact_gradient(self, i, x)

    def sampled_cost(self, i, x, xi):
        own = x[self.slices[i]]
        sales = self.blocks[i] @ own
        prices = self.price_intercepts - xi * (self.A @ x)
        return float(self.pi[i] * own @ own + self.q[i] @ own - prices @ sales)


def cournot_sampled_gradient(instance, i, x, xi):
    """2 pi_i x_i + q_i - A_i^T P_bar + A_i^T D(xi) A x + A_i^T D(xi) A_i x_i"""
    block = instance.blocks[i]
    own = x[instance.slices[i]]
    xi = np.asarray(xi, dtype=float)
    return (2.0 * instance.pi[i] * own + instance.q[i] - block.T @ instance.price_intercepts
            + block.T @ (xi * (instance.A @ x)) + block.T @ (xi * (block @ own)))


def cournot_exact_gradient(instance, i, x):
    return cournot_sampled_gradient(instance, i, x, instance.mean_slopes)


def gradient_matrix(instance):
    """Matrix of the affine exact pseudogradient"""
    slopes = np.diag(instance.mean_slopes)
    own = scipy.linalg.block_diag(*[
        2.0 * instance.pi[i] * np.eye(block.shape[1]) + block.T @ slopes @ block
        for i, block in enumerate(instance.blocks)
    ])
    return own + instance.A.T @ slopes @ instance.A


def strong_monotonicity_constants(instance):
    """(mu, L_F, beta) with beta = mu / L_F^2

    Raises:
        ConfigurationError -- The pseudogradient is not strongly monotone
    """
    matrix = gradient_matrix(instance)
    mu = float(np.linalg.eigvalsh((matrix + matrix.T) / 2)[0])
    lipschitz = float(np.linalg.norm(matrix, 2))
    if mu <= 0:
        raise ConfigurationError(f"instance is not strongly monotone (mu = {mu:.3e})")
    return mu, lipschitz, mu / lipschitz ** 2


def random_incidence(rng, num_companies, num_markets, per_company=(1, 3), min_per_market=2):
    """Company-market incidence with every company in per_company markets
    and every market served by at least min_per_market companies"""
    low, high = per_company
    high = min(high, num_markets)
    low = min(low, high)
    if min_per_market > num_companies:
        raise ConfigurationError("more companies per market requested than exist")

    incidence = np.zeros((num_companies, num_markets), dtype=bool)
    for i in range(num_companies):
        count = int(rng.integers(low, high + 1))
        incidence[i, rng.choice(num_markets, size=count, replace=False)] = True

    for j in range(num_markets):
        while incidence[:, j].sum() < min_per_market:
            outside = np.flatnonzero(~incidence[:, j])
            room = outside[incidence[outside].sum(axis=1) < high]
            pool = room if room.size else outside
            incidence[int(rng.choice(pool)), j] = True
    return incidence


def build_instance(incidence, capacities, market_caps, pi, q, price_intercepts,
                   params=None, edges=None, seed=None, coupled=True):
    """Assemble an instance from explicit parameters

    Raises:
        ConfigurationError -- Shapes disagree or a company has no market
    """
    incidence = np.atleast_2d(np.asarray(incidence, dtype=bool))
    num_companies, num_markets = incidence.shape
    for i, row in enumerate(incidence):
        if not row.any():
            raise ConfigurationError(f"company {i} participates in no market")

    counts = incidence.sum(axis=1)
    capacities = tuple(np.atleast_1d(np.asarray(cap, dtype=float)) for cap in capacities)
    q = tuple(np.atleast_1d(np.asarray(row, dtype=float)) for row in q)
    for name, values in (("capacities", capacities), ("q", q)):
        if len(values) != num_companies or any(v.size != c for v, c in zip(values, counts)):
            raise ConfigurationError(f"{name} must give one entry per participated market")
    market_caps = np.atleast_1d(np.asarray(market_caps, dtype=float))
    price_intercepts = np.atleast_1d(np.asarray(price_intercepts, dtype=float))
    pi = np.atleast_1d(np.asarray(pi, dtype=float))
    if market_caps.shape != (num_markets,) or price_intercepts.shape != (num_markets,):
        raise ConfigurationError("market caps and price intercepts need one entry per market")
    if pi.shape != (num_companies,) or np.any(pi <= 0):
        raise ConfigurationError("pi needs one positive entry per company")

    if params is None:
        params = CournotParams(num_companies=num_companies, num_markets=num_markets,
                               min_companies_per_market=1)
    if edges is None:
        chords = BENCHMARK_CHORDS if num_companies == 20 else ()
        edges = cycle_edges(num_companies, chords)
    edges = tuple((int(e[0]), int(e[1]), float(e[2]) if len(e) > 2 else 1.0) for e in edges)

    return CournotInstance(
        params=params,
        incidence=incidence,
        capacities=capacities,
        market_caps=market_caps,
        pi=pi,
        q=q,
        price_intercepts=price_intercepts,
        edges=edges,
        seed=seed,
        coupled=coupled,
    )


def generate_instance(seed, params=None, incidence=None, coupled=True):
    """Draw a market from the parameter ranges of `params`

    The incidence is drawn first, then capacities, market caps, pi, q and
    price intercepts, all from one generator seeded with `seed`.
    """
    params = params or CournotParams()
    rng = np.random.default_rng(seed)
    if incidence is None:
        incidence = random_incidence(rng, params.num_companies, params.num_markets,
                                     params.markets_per_company,
                                     params.min_companies_per_market)
    else:
        incidence = np.asarray(incidence, dtype=bool)
        if incidence.shape != (params.num_companies, params.num_markets):
            raise ConfigurationError(f"incidence has shape {incidence.shape}")
    counts = incidence.sum(axis=1)

    capacities = [rng.uniform(*params.capacity_range, size=c) for c in counts]
    market_caps = rng.uniform(*params.market_cap_range, size=params.num_markets)
    pi = rng.uniform(*params.cost_quadratic_range, size=params.num_companies)
    q = [rng.uniform(*params.cost_linear_range, size=c) for c in counts]
    price_intercepts = rng.uniform(*params.price_intercept_range, size=params.num_markets)

    instance = build_instance(incidence, capacities, market_caps, pi, q, price_intercepts,
                              params=params, seed=seed, coupled=coupled)
    logger.debug("generated %s from seed %s", instance.game.name, seed)
    return instance


def to_document(instance):
    """JSON-ready instance file: parameters, incidence, graph and the game block"""
    return {
        "schema": SCHEMA_TAG,
        "seed": instance.seed,
        "coupled": instance.coupled,
        "params": instance.params.as_dict(),
        "incidence": instance.incidence.astype(int).tolist(),
        "capacities": [cap.tolist() for cap in instance.capacities],
        "market_caps": instance.market_caps.tolist(),
        "pi": instance.pi.tolist(),
        "q": [row.tolist() for row in instance.q],
        "price_intercepts": instance.price_intercepts.tolist(),
        "edges": [list(edge) for edge in instance.edges],
        "game": dump_game(instance.game),
    }


def from_document(document):
    if document.get("schema") != SCHEMA_TAG:
        raise ConfigurationError(
            f"unsupported instance schema {document.get('schema')!r}, expected {SCHEMA_TAG}"
        )
    try:
        instance = build_instance(
            incidence=document["incidence"],
            capacities=document["capacities"],
            market_caps=document["market_caps"],
            pi=document["pi"],
            q=document["q"],
            price_intercepts=document["price_intercepts"],
            params=CournotParams.from_dict(document["params"]),
            edges=document["edges"],
            seed=document.get("seed"),
            coupled=document.get("coupled", True),
        )
    except (KeyError, TypeError, ValueError) as ex:
        raise ConfigurationError(f"malformed instance document: {ex}") from ex
    if list(instance.game.dims) != document.get("game", {}).get("dims", list(instance.game.dims)):
        raise ConfigurationError("game block disagrees with the incidence matrix")
    return instance


def canonical_json(document):
    return json.dumps(document, sort_keys=True, separators=(",", ":"))


def instance_hash(document):
    """sha256 over the canonical serialization of the whole document"""
    return hashlib.sha256(canonical_json(document).encode("utf-8")).hexdigest()
