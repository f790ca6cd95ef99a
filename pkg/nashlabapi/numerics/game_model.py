"""Stochastic generalized Nash game definition and its pseudogradient estimators

A game is N agents, each with a box of decisions, an affine share of the
coupling constraint Ax <= b and a sampled partial-gradient oracle. Samples are
plain arrays: a joint draw is (N, d), a batch of joint draws is (S, N, d).
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Protocol

import numpy as np

from .exceptions import ConfigurationError, UnsupportedOperationError

logger = logging.getLogger(__name__)

SCHEMA_TAG = "nashlab.game/v1"

# (agent, stacked x, that agent's draw) -> partial gradient of length n_i
GradientOracle = Callable[[int, np.ndarray, np.ndarray], np.ndarray]
ExactOracle = Callable[[int, np.ndarray], np.ndarray]
CostOracle = Callable[[int, np.ndarray, np.ndarray], float]

# One draw per agent, shape (N, d)
SamplePoint = np.ndarray


class Prox(Protocol):
    """Proximal map of a local regularizer g_i"""

    def prox(self, v: np.ndarray, step: float) -> np.ndarray:
        ...


@dataclass(frozen=True, eq=False)
class Box:
    """Per-coordinate bounds of one agent's local set"""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.ndim != 1 or lower.shape != upper.shape:
            raise ConfigurationError("box bounds must be 1-D arrays of equal length")
        if lower.size == 0:
            raise ConfigurationError("box must have at least one coordinate")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ConfigurationError("box must be bounded")
        if np.any(lower > upper):
            raise ConfigurationError("box is empty (lower > upper)")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def size(self):
        return self.lower.size

    def project(self, v):
        return np.clip(v, self.lower, self.upper)

    def prox(self, v, step=1.0):
        """Prox of the box indicator; the step does not matter"""
        return self.project(v)


@dataclass(frozen=True, eq=False)
class GameDefinition:
    """An SGNEP instance

    Arguments:
        boxes {tuple[Box]} -- Local sets, one per agent
        constraint_blocks {tuple[ndarray]} -- A_i, each m x n_i (m may be 0)
        constraint_offsets {tuple[ndarray]} -- b_i, each of length m
        gradient_oracle {GradientOracle} -- Sampled partial gradient of agent i
        exact_oracle {ExactOracle} -- Expected partial gradient, if closed form
        cost_oracle {CostOracle} -- Sampled cost, used for derivative checks
        sample_dim {int} -- Length d of one agent's draw
        affine_in_sample {bool} -- Gradient is affine in the draw, so a batch
            can be averaged before the oracle is called
    """

    boxes: tuple
    constraint_blocks: tuple
    constraint_offsets: tuple
    gradient_oracle: GradientOracle
    exact_oracle: Optional[ExactOracle] = None
    cost_oracle: Optional[CostOracle] = None
    sample_dim: int = 1
    affine_in_sample: bool = False
    name: str = "game"

    def __post_init__(self):
        boxes = tuple(self.boxes)
        if not boxes:
            raise ConfigurationError("a game needs at least one agent")
        if len(self.constraint_blocks) != len(boxes):
            raise ConfigurationError("one constraint block per agent is required")
        if len(self.constraint_offsets) != len(boxes):
            raise ConfigurationError("one constraint offset per agent is required")

        blocks = []
        for i, (box, block) in enumerate(zip(boxes, self.constraint_blocks)):
            block = np.asarray(block, dtype=float)
            if block.ndim != 2 or block.shape[1] != box.size:
                raise ConfigurationError(
                    f"A_{i} has shape {block.shape}, expected (m, {box.size})"
                )
            blocks.append(block)
        rows = {block.shape[0] for block in blocks}
        if len(rows) != 1:
            raise ConfigurationError(f"constraint blocks disagree on m: {sorted(rows)}")
        m = rows.pop()

        offsets = []
        for i, offset in enumerate(self.constraint_offsets):
            offset = np.atleast_1d(np.asarray(offset, dtype=float)) if m else np.zeros(0)
            if offset.shape != (m,):
                raise ConfigurationError(f"b_{i} has shape {offset.shape}, expected ({m},)")
            offsets.append(offset)

        if self.sample_dim < 1:
            raise ConfigurationError("sample dimension must be positive")

        object.__setattr__(self, "boxes", boxes)
        object.__setattr__(self, "constraint_blocks", tuple(blocks))
        object.__setattr__(self, "constraint_offsets", tuple(offsets))

    @property
    def num_agents(self):
        return len(self.boxes)

    @cached_property
    def dims(self):
        return tuple(box.size for box in self.boxes)

    @property
    def n(self):
        return sum(self.dims)

    @property
    def m(self):
        return self.constraint_blocks[0].shape[0]

    @property
    def is_generalized(self):
        """True when there is a shared constraint to dualize"""
        return self.m > 0

    @cached_property
    def slices(self):
        bounds = np.concatenate(([0], np.cumsum(self.dims)))
        return tuple(slice(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]))

    @cached_property
    def A(self):
        return np.hstack(self.constraint_blocks)

    @cached_property
    def b(self):
        return np.sum(self.constraint_offsets, axis=0) if self.m else np.zeros(0)

    @cached_property
    def lower(self):
        return np.concatenate([box.lower for box in self.boxes])

    @cached_property
    def upper(self):
        return np.concatenate([box.upper for box in self.boxes])

    def project(self, x):
        """Projection onto the product of the local boxes"""
        return np.clip(x, self.lower, self.upper)

    def split(self, x):
        return [x[s] for s in self.slices]


def split_offsets(b, num_agents):
    """Split the coupling bound equally: b_i = b / N"""
    b = np.atleast_1d(np.asarray(b, dtype=float))
    return tuple(b / num_agents for _ in range(num_agents))


def build_game(boxes, constraint_blocks, b, gradient_oracle, **kwargs):
    """Build a game whose global bound b is shared equally between agents"""
    return GameDefinition(
        boxes=tuple(boxes),
        constraint_blocks=tuple(constraint_blocks),
        constraint_offsets=split_offsets(b, len(boxes)) if np.size(b) else
        tuple(np.zeros(0) for _ in boxes),
        gradient_oracle=gradient_oracle,
        **kwargs,
    )


def _check_primal(game, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (game.n,):
        raise ConfigurationError(f"decision vector has shape {x.shape}, expected ({game.n},)")
    return x


def _stack(game, parts):
    for i, (part, n_i) in enumerate(zip(parts, game.dims)):
        if np.shape(part) != (n_i,):
            raise ConfigurationError(
                f"oracle for agent {i} returned shape {np.shape(part)}, expected ({n_i},)"
            )
    return np.concatenate(parts)


def pseudogradient_sa(game, x, xi):
    """Pseudogradient from one draw per agent

    Arguments:
        xi {ndarray} -- Joint draw, shape (N, d)
    """
    x = _check_primal(game, x)
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (game.num_agents, game.sample_dim):
        raise ConfigurationError(
            f"sample has shape {xi.shape}, expected ({game.num_agents}, {game.sample_dim})"
        )
    return _stack(game, [game.gradient_oracle(i, x, xi[i]) for i in range(game.num_agents)])


def pseudogradient_saa(game, x, batch):
    """Sample average of the pseudogradient over a batch of joint draws

    Arguments:
        batch {ndarray} -- Shape (S, N, d)

    Returns:
        ndarray -- Equal to pseudogradient_sa when S is 1
    """
    batch = np.asarray(batch, dtype=float)
    if batch.ndim != 3 or batch.shape[0] == 0:
        raise ConfigurationError("sample batch must be a non-empty (S, N, d) array")
    if game.affine_in_sample:
        return pseudogradient_sa(game, x, batch.mean(axis=0))
    draws = [pseudogradient_sa(game, x, point) for point in batch]
    return np.mean(draws, axis=0)


def pseudogradient_exact(game, x):
    """Expected pseudogradient F(x)"""
    if game.exact_oracle is None:
        raise UnsupportedOperationError(f"{game.name} has no exact pseudogradient oracle")
    x = _check_primal(game, x)
    return _stack(game, [game.exact_oracle(i, x) for i in range(game.num_agents)])


def sampled_cost(game, i, x, xi_i):
    if game.cost_oracle is None:
        raise UnsupportedOperationError(f"{game.name} has no cost oracle")
    return float(game.cost_oracle(i, _check_primal(game, x), np.asarray(xi_i, dtype=float)))


def constraint_violation(game, x):
    """Ax - b; nonpositive iff the shared constraints hold"""
    x = _check_primal(game, x)
    return game.A @ x - game.b


def affine_matrix(game, check_point=None):
    """Recover (M, c) with F(x) = Mx + c from the exact oracle

    Raises:
        UnsupportedOperationError -- The exact pseudogradient is not affine
    """
    offset = pseudogradient_exact(game, np.zeros(game.n))
    identity = np.eye(game.n)
    matrix = np.column_stack(
        [pseudogradient_exact(game, identity[j]) - offset for j in range(game.n)]
    )
    check_point = game.upper if check_point is None else check_point
    if not np.allclose(matrix @ check_point + offset, pseudogradient_exact(game, check_point),
                       rtol=1e-9, atol=1e-9):
        raise UnsupportedOperationError(f"{game.name} pseudogradient is not affine")
    return matrix, offset


def dump_game(game):
    """Serializable description of everything but the oracles"""
    return {
        "schema": SCHEMA_TAG,
        "name": game.name,
        "dims": list(game.dims),
        "num_constraints": game.m,
        "lower": [box.lower.tolist() for box in game.boxes],
        "upper": [box.upper.tolist() for box in game.boxes],
        "constraint_blocks": [block.tolist() for block in game.constraint_blocks],
        "constraint_offsets": [offset.tolist() for offset in game.constraint_offsets],
        "sample_dim": game.sample_dim,
        "affine_in_sample": game.affine_in_sample,
    }


def load_game(document, gradient_oracle, exact_oracle=None, cost_oracle=None):
    """Rebuild a game from dump_game output and a set of oracles"""
    if document.get("schema") != SCHEMA_TAG:
        raise ConfigurationError(
            f"unsupported game schema {document.get('schema')!r}, expected {SCHEMA_TAG}"
        )
    try:
        m = int(document["num_constraints"])
        boxes = tuple(Box(lo, hi) for lo, hi in zip(document["lower"], document["upper"]))
        blocks = tuple(
            np.asarray(block, dtype=float).reshape(m, n_i)
            for block, n_i in zip(document["constraint_blocks"], document["dims"])
        )
        offsets = tuple(np.asarray(offset, dtype=float) for offset in document["constraint_offsets"])
    except (KeyError, TypeError, ValueError) as ex:
        raise ConfigurationError(f"malformed game document: {ex}") from ex

    return GameDefinition(
        boxes=boxes,
        constraint_blocks=blocks,
        constraint_offsets=offsets,
        gradient_oracle=gradient_oracle,
        exact_oracle=exact_oracle,
        cost_oracle=cost_oracle,
        sample_dim=int(document.get("sample_dim", 1)),
        affine_in_sample=bool(document.get("affine_in_sample", False)),
        name=document.get("name", "game"),
    )
