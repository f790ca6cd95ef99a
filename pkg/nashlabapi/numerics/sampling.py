"""Seeded sample streams, batch and step schedules, and empirical error measurement"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.stats

from .exceptions import ConfigurationError
from .game_model import pseudogradient_exact, pseudogradient_saa

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BatchSchedule:
    """S_k = ceil(c (k + k0)^(a + 1)), optionally capped at max_size"""

    c: float = 1.0
    k0: float = 1.0
    a: float = 1.0
    max_size: Optional[int] = None

    def __post_init__(self):
        if not (self.c > 0 and self.k0 > 0 and self.a > 0):
            raise ConfigurationError("batch schedule needs c > 0, k0 > 0 and a > 0")
        if self.max_size is not None and self.max_size < 1:
            raise ConfigurationError("batch cap must be at least 1")

    def as_dict(self):
        return {"c": self.c, "k0": self.k0, "a": self.a, "max_size": self.max_size}


@dataclass(frozen=True)
class StepSchedule:
    """gamma_k = min(gamma0 / (k + 1)^eta, cap)"""

    gamma0: float
    eta: float = 0.6
    cap: float = math.inf

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise ConfigurationError("gamma0 must be positive")
        if not 0.5 < self.eta <= 1.0:
            raise ConfigurationError(f"eta must lie in (0.5, 1], got {self.eta}")
        if not self.cap > 0:
            raise ConfigurationError("step cap must be positive")

    def as_dict(self):
        return {"gamma0": self.gamma0, "eta": self.eta,
                "cap": None if math.isinf(self.cap) else self.cap}


@dataclass(frozen=True)
class SampleStream:
    """Counter-based draws of a lower-truncated normal

    Every (seed, agent, iteration, slot) key gets its own generator, so a
    draw does not depend on the order in which agents are visited.
    """

    seed: int
    sample_dim: int
    mean: float = 0.8
    variance: float = 0.1
    lower: Optional[float] = 0.0

    def __post_init__(self):
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")
        if self.variance < 0:
            raise ConfigurationError("variance must be non-negative")
        if self.lower is not None and self.variance == 0 and self.mean < self.lower:
            raise ConfigurationError("degenerate distribution lies below its truncation point")

    @cached_property
    def expected_value(self):
        """Mean of the distribution actually sampled (after truncation)"""
        if self.variance == 0 or self.lower is None:
            return float(self.mean)
        scale = math.sqrt(self.variance)
        return float(scipy.stats.truncnorm.mean((self.lower - self.mean) / scale, np.inf,
                                                loc=self.mean, scale=scale))

    def generator(self, agent, k, slot=0):
        key = np.random.SeedSequence(entropy=self.seed, spawn_key=(int(agent), int(k), int(slot)))
        return np.random.default_rng(key)

    def as_dict(self):
        return {"seed": self.seed, "sample_dim": self.sample_dim, "mean": self.mean,
                "variance": self.variance, "lower": self.lower}


def batch_size(schedule, k):
    if k < 0:
        raise ConfigurationError("iteration index must be non-negative")
    size = math.ceil(schedule.c * (k + schedule.k0) ** (schedule.a + 1))
    if schedule.max_size is not None:
        size = min(size, schedule.max_size)
    return max(int(size), 1)


def step_at(schedule, k):
    if k < 0:
        raise ConfigurationError("iteration index must be non-negative")
    return min(schedule.gamma0 / (k + 1) ** schedule.eta, schedule.cap)


def draw_batch(stream, agent, k, size, slot=0):
    """S i.i.d. draws for one agent at iteration k, shape (S, d)"""
    if size < 1:
        raise ConfigurationError("batch size must be at least 1")
    rng = stream.generator(agent, k, slot)
    shape = (size, stream.sample_dim)
    if stream.variance == 0:
        return np.full(shape, float(stream.mean))
    scale = math.sqrt(stream.variance)
    draws = rng.normal(stream.mean, scale, shape)
    if stream.lower is not None:
        rejected = draws < stream.lower
        while rejected.any():
            draws[rejected] = rng.normal(stream.mean, scale, int(rejected.sum()))
            rejected = draws < stream.lower
    return draws


def draw_joint(stream, num_agents, k, size, slot=0):
    """One batch per agent, stacked as (S, N, d)"""
    return np.stack([draw_batch(stream, i, k, size, slot) for i in range(num_agents)], axis=1)


def estimation_errors(game, x, stream, size, trials, offset=0):
    """F_SAA(x) - F(x) for `trials` independent batches, shape (trials, n)"""
    exact = pseudogradient_exact(game, x)
    return np.array([
        pseudogradient_saa(game, x, draw_joint(stream, game.num_agents, offset + t, size)) - exact
        for t in range(trials)
    ])


def error_second_moment(game, x, stream, size, trials, offset=0):
    """Empirical E||F_SAA(x) - F(x)||^2 over `trials` batches of `size` draws"""
    errors = estimation_errors(game, x, stream, size, trials, offset)
    return float(np.mean(np.sum(errors ** 2, axis=1)))


def error_mean_zscores(game, x, stream, size, trials, offset=0):
    """Per-component z-score of the mean estimation error; about N(0, 1) if unbiased"""
    errors = estimation_errors(game, x, stream, size, trials, offset)
    spread = errors.std(axis=0, ddof=1)
    spread[spread == 0] = np.inf
    return errors.mean(axis=0) / (spread / math.sqrt(trials))


def variance_decay_slope(game, x, stream, sizes=(1, 10, 100, 1000), trials=200):
    """Slope of log E||eps||^2 against log S; -1 for i.i.d. batches"""
    moments = [error_second_moment(game, x, stream, size, trials, offset=index * trials)
               for index, size in enumerate(sizes)]
    slope, _ = np.polyfit(np.log(sizes), np.log(moments), 1)
    logger.debug("second moments %s give slope %.3f", moments, slope)
    return float(slope)
