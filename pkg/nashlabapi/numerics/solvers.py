"""Distributed equilibrium seeking iterations and the run loop

Agents are simulated as loop bodies over a read-only snapshot of the round.
Every round has two phases: phase 1 reads only values of the previous round,
phase 2 reads phase-1 outputs of the same round and values of the previous
round. MessageLog records each neighbour read so the protocol can be checked.
"""

import logging
import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from .exceptions import (
    ConfigurationError,
    ConvergenceError,
    DivergenceError,
    NumericalError,
    UnsupportedOperationError,
)
from .game_model import (
    affine_matrix,
    pseudogradient_exact,
    pseudogradient_sa,
    pseudogradient_saa,
)
from .graph import laplacian_apply, neighbor_disagreement
from .operators import (
    StackedState,
    certified_gamma,
    cocoercivity_constant,
    consensus_multiplier,
    kkt_residual,
    max_step_sizes,
    project_nonneg,
    theta_constant,
)
from .sampling import batch_size, draw_joint, step_at

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("k", "rel_dist", "dual_disagreement", "kkt_stat", "kkt_feas", "kkt_comp",
               "oracle_calls", "samples", "elapsed_ns")
METRICS = CSV_COLUMNS[1:]


class Algorithm(str, Enum):
    DET_FB = "det_fb"
    STOCH_FB_SAA = "stoch_fb_saa"
    STOCH_FB_SA_EXPERIMENTAL = "stoch_fb_sa_experimental"
    SNE_FB_SA = "sne_fb_sa"
    SNE_FB_SAA = "sne_fb_saa"
    FBF = "fbf"
    EG = "eg"

    @property
    def is_snep(self):
        return self in (Algorithm.SNE_FB_SA, Algorithm.SNE_FB_SAA)

    @property
    def forward_evaluations(self):
        return 2 if self in (Algorithm.FBF, Algorithm.EG) else 1


@dataclass(frozen=True)
class Message:
    round: int
    phase: int
    receiver: int
    sender: int
    variable: str
    version: str


class MessageLog:
    """Neighbour reads and backward steps of a simulated run

    `version` is "previous" for values of the last round and "current" for
    phase-1 outputs of the running round.
    """

    def __init__(self):
        self.messages = []
        self.backward_steps = 0
        self.round = 0

    def receive(self, phase, receiver, sender, variable, version):
        self.messages.append(Message(self.round, phase, receiver, sender, variable, version))

    def reads(self, phase=None, round=None):
        return [message for message in self.messages
                if (phase is None or message.phase == phase)
                and (round is None or message.round == round)]

    def close_round(self, backward_steps):
        self.backward_steps += backward_steps
        self.round += 1


def _disagreement(graph, blocks, i, log, phase, variable, version):
    """Neighbour disagreement of node i, logging one read per neighbour"""
    if log is None:
        return neighbor_disagreement(graph, blocks, i)
    return neighbor_disagreement(graph, blocks, i,
                                 on_read=lambda j: log.receive(phase, i, j, variable, version))


def _ensure_finite(state, k):
    for block, values in (("x", state.x), ("z", state.z), ("lambda", state.lam)):
        if not np.all(np.isfinite(values)):
            raise NumericalError(k, block)
    return state


def _blocks(game, graph, vector):
    return np.asarray(vector, dtype=float).reshape(graph.num_nodes, game.m)


def fb_iteration(state, game, graph, steps, fhat, log=None, k=-1):
    """One round of the preconditioned forward-backward scheme

    Phase 1, per agent:
        x_i+ = proj[x_i - alpha_i (F_i + A_i^T lambda_i)]
        z_i+ = z_i - nu_i sum_j w_ij (lambda_i - lambda_j)
    Phase 2, per agent:
        lambda_i+ = proj_+[lambda_i + sigma_i (A_i (2 x_i+ - x_i) - b_i)
                    + sigma_i sum_j w_ij (2 (z_i+ - z_j+) - (z_i - z_j))
                    - sigma_i sum_j w_ij (lambda_i - lambda_j)]
    """
    lam = _blocks(game, graph, state.lam)
    z = _blocks(game, graph, state.z)
    fhat = np.asarray(fhat, dtype=float)
    x_next = np.empty_like(state.x)
    z_next = np.empty_like(z)

    for i, (box, block, s) in enumerate(zip(game.boxes, game.constraint_blocks, game.slices)):
        step = steps.alpha[i]
        x_next[s] = box.prox(state.x[s] - step * (fhat[s] + block.T @ lam[i]), step)
        z_next[i] = z[i] - steps.nu[i] * _disagreement(graph, lam, i, log, 1, "lambda", "previous")

    lam_next = np.empty_like(lam)
    for i, (block, offset, s) in enumerate(zip(game.constraint_blocks, game.constraint_offsets,
                                               game.slices)):
        sigma = steps.sigma[i]
        reflected = block @ (2.0 * x_next[s] - state.x[s]) - offset
        coupling = (2.0 * _disagreement(graph, z_next, i, log, 2, "z", "current")
                    - _disagreement(graph, z, i, log, 2, "z", "previous"))
        spread = _disagreement(graph, lam, i, log, 2, "lambda", "previous")
        lam_next[i] = project_nonneg(lam[i] + sigma * reflected + sigma * coupling - sigma * spread)

    if log is not None:
        log.close_round(1)
    return _ensure_finite(StackedState(x_next, z_next.ravel(), lam_next.ravel()), k)


def _extrapolate(state, game, graph, steps, fhat, log):
    """Shared first phase of FBF and EG: u = J(v - Psi^-1 H v)"""
    lam = _blocks(game, graph, state.lam)
    z = _blocks(game, graph, state.z)
    x_tilde = np.empty_like(state.x)
    z_tilde = np.empty_like(z)
    lam_tilde = np.empty_like(lam)

    for i, (box, block, offset, s) in enumerate(zip(game.boxes, game.constraint_blocks,
                                                    game.constraint_offsets, game.slices)):
        step = steps.alpha[i]
        spread = _disagreement(graph, lam, i, log, 1, "lambda", "previous")
        x_tilde[s] = box.prox(state.x[s] - step * (fhat[s] + block.T @ lam[i]), step)
        z_tilde[i] = z[i] - steps.nu[i] * spread
        coupling = _disagreement(graph, z, i, log, 1, "z", "previous") - spread
        lam_tilde[i] = project_nonneg(
            lam[i] + steps.sigma[i] * (block @ state.x[s] - offset) + steps.sigma[i] * coupling
        )
    return x_tilde, z_tilde, lam_tilde


def fbf_iteration(state, game, graph, steps, fhat, estimate, rho=None, log=None, k=-1):
    """One round of the forward-backward-forward scheme

    Arguments:
        fhat {ndarray} -- Pseudogradient estimate at state.x
        estimate {callable} -- x -> fresh estimate, called once at x_tilde
        rho {ndarray} -- Correction steps per agent, alpha by default

    Phase 2, per agent:
        x_i+ = x~_i + alpha_i (F_i(x) - F_i(x~)) + rho_i A_i^T (lambda_i - lambda~_i)
        z_i+ = z~_i + nu_i sum_j w_ij [(lambda_i - lambda_j) - (lambda~_i - lambda~_j)]
        lambda_i+ = lambda~_i + sigma_i A_i (x~_i - x_i)
                    - sigma_i sum_j w_ij [(z_i - z_j) - (z~_i - z~_j)]
                    + sigma_i sum_j w_ij [(lambda_i - lambda_j) - (lambda~_i - lambda~_j)]
    """
    fhat = np.asarray(fhat, dtype=float)
    rho = steps.alpha if rho is None else np.asarray(rho, dtype=float)
    lam = _blocks(game, graph, state.lam)
    z = _blocks(game, graph, state.z)
    x_tilde, z_tilde, lam_tilde = _extrapolate(state, game, graph, steps, fhat, log)
    fhat_tilde = np.asarray(estimate(x_tilde), dtype=float)

    x_next = np.empty_like(state.x)
    z_next = np.empty_like(z)
    lam_next = np.empty_like(lam)
    for i, (block, s) in enumerate(zip(game.constraint_blocks, game.slices)):
        spread = _disagreement(graph, lam, i, log, 2, "lambda", "previous")
        spread_tilde = _disagreement(graph, lam_tilde, i, log, 2, "lambda", "current")
        coupling = (_disagreement(graph, z, i, log, 2, "z", "previous")
                    - _disagreement(graph, z_tilde, i, log, 2, "z", "current"))
        x_next[s] = (x_tilde[s] + steps.alpha[i] * (fhat[s] - fhat_tilde[s])
                     + rho[i] * (block.T @ (lam[i] - lam_tilde[i])))
        z_next[i] = z_tilde[i] + steps.nu[i] * (spread - spread_tilde)
        lam_next[i] = (lam_tilde[i] + steps.sigma[i] * (block @ (x_tilde[s] - state.x[s]))
                       - steps.sigma[i] * coupling + steps.sigma[i] * (spread - spread_tilde))

    if log is not None:
        log.close_round(1)
    return _ensure_finite(StackedState(x_next, z_next.ravel(), lam_next.ravel()), k)


def eg_iteration(state, game, graph, steps, fhat, estimate, log=None, k=-1):
    """One round of the extragradient scheme: extrapolate, then project again

    `estimate` evaluates on the samples that produced `fhat`.

    Phase 2, per agent:
        x_i+ = proj[x_i - alpha_i (F_i(x~) + A_i^T lambda~_i)]
        z_i+ = z_i - nu_i sum_j w_ij (lambda~_i - lambda~_j)
        lambda_i+ = proj_+[lambda_i + sigma_i (A_i x~_i - b_i)
                    + sigma_i sum_j w_ij ((z~_i - z~_j) - (lambda~_i - lambda~_j))]
    """
    fhat = np.asarray(fhat, dtype=float)
    lam = _blocks(game, graph, state.lam)
    z = _blocks(game, graph, state.z)
    x_tilde, z_tilde, lam_tilde = _extrapolate(state, game, graph, steps, fhat, log)
    fhat_tilde = np.asarray(estimate(x_tilde), dtype=float)

    x_next = np.empty_like(state.x)
    z_next = np.empty_like(z)
    lam_next = np.empty_like(lam)
    for i, (box, block, offset, s) in enumerate(zip(game.boxes, game.constraint_blocks,
                                                    game.constraint_offsets, game.slices)):
        step = steps.alpha[i]
        spread_tilde = _disagreement(graph, lam_tilde, i, log, 2, "lambda", "current")
        coupling = _disagreement(graph, z_tilde, i, log, 2, "z", "current") - spread_tilde
        x_next[s] = box.prox(state.x[s] - step * (fhat_tilde[s] + block.T @ lam_tilde[i]), step)
        z_next[i] = z[i] - steps.nu[i] * spread_tilde
        lam_next[i] = project_nonneg(lam[i] + steps.sigma[i] * (block @ x_tilde[s] - offset)
                                     + steps.sigma[i] * coupling)

    if log is not None:
        log.close_round(2)
    return _ensure_finite(StackedState(x_next, z_next.ravel(), lam_next.ravel()), k)


def sne_fb_iteration(x, game, gamma_k, fhat, k=-1):
    """x_i+ = proj[x_i - gamma_k F_i] for a game without shared constraints"""
    if game.is_generalized:
        raise UnsupportedOperationError("sne_fb_iteration needs a game without shared constraints")
    x_next = game.project(np.asarray(x, dtype=float) - gamma_k * np.asarray(fhat, dtype=float))
    if not np.all(np.isfinite(x_next)):
        raise NumericalError(k, "x")
    return x_next


@dataclass(frozen=True)
class SolverConfig:
    """What to run and how long

    `steps` are the constant steps of the forward-backward family,
    `step_schedule` the vanishing steps of the plain Nash modes (and the
    optional primal decay of the experimental mode), `batch` the sample
    schedule of the SAA modes.
    """

    algorithm: Algorithm
    steps: Optional[object] = None
    step_schedule: Optional[object] = None
    batch: Optional[object] = None
    max_iters: int = 3000
    tol: Optional[float] = None
    stop_metric: str = "rel_dist"
    seed: int = 0
    rho: Optional[np.ndarray] = None
    experimental: bool = False
    divergence_threshold: float = 1e6
    log_every: int = 500

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))

    @property
    def oracle_mode(self):
        """exact, sa or saa"""
        algorithm = self.algorithm
        if algorithm is Algorithm.DET_FB:
            return "exact"
        if algorithm in (Algorithm.FBF, Algorithm.EG):
            return "saa" if self.batch is not None else "exact"
        if algorithm in (Algorithm.STOCH_FB_SA_EXPERIMENTAL, Algorithm.SNE_FB_SA):
            return "sa"
        return "saa"

    def validate(self, game):
        algorithm = self.algorithm
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be at least 1", "max_iters")
        if self.tol is not None and not self.tol > 0:
            raise ConfigurationError("tolerance must be positive", "tol")
        if self.stop_metric not in METRICS:
            raise ConfigurationError(
                f"unknown stop metric {self.stop_metric!r}; valid: {', '.join(METRICS)}",
                "stop_metric",
            )
        if algorithm.is_snep:
            if game.is_generalized:
                raise ConfigurationError(
                    f"{algorithm.value} solves games without shared constraints", "algorithm"
                )
            if self.step_schedule is None:
                raise ConfigurationError(f"{algorithm.value} needs a vanishing step schedule",
                                         "step")
        else:
            if self.steps is None:
                raise ConfigurationError(f"{algorithm.value} needs constant step sizes", "steps")
            if self.steps.alpha.size != game.num_agents:
                raise ConfigurationError("one step size per agent is required", "steps")
        if algorithm in (Algorithm.STOCH_FB_SAA, Algorithm.SNE_FB_SAA) and self.batch is None:
            raise ConfigurationError(f"{algorithm.value} needs a batch schedule", "batch")
        if algorithm in (Algorithm.SNE_FB_SA, Algorithm.STOCH_FB_SA_EXPERIMENTAL,
                         Algorithm.DET_FB) and self.batch is not None:
            raise ConfigurationError(f"{algorithm.value} does not take a batch schedule", "batch")
        if algorithm is Algorithm.STOCH_FB_SA_EXPERIMENTAL and not self.experimental:
            raise ConfigurationError(
                "single-sample forward-backward on coupled games has no convergence guarantee; "
                "set experimental to opt in", "experimental"
            )
        if self.oracle_mode == "exact" and game.exact_oracle is None:
            raise ConfigurationError(f"{algorithm.value} needs an exact pseudogradient oracle")

    def as_dict(self):
        return {
            "algorithm": self.algorithm.value,
            "steps": self.steps.as_dict() if self.steps is not None else None,
            "step": self.step_schedule.as_dict() if self.step_schedule is not None else None,
            "batch": self.batch.as_dict() if self.batch is not None else None,
            "max_iters": self.max_iters,
            "tol": self.tol,
            "stop_metric": self.stop_metric,
            "seed": self.seed,
            "rho": None if self.rho is None else np.asarray(self.rho).tolist(),
            "experimental": self.experimental,
            "oracle": self.oracle_mode,
            "guarantee": "none" if self.algorithm is Algorithm.STOCH_FB_SA_EXPERIMENTAL
            else "almost sure",
        }


@dataclass(frozen=True)
class RunRow:
    k: int
    rel_dist: float
    dual_disagreement: float
    kkt_stat: float
    kkt_feas: float
    kkt_comp: float
    oracle_calls: int
    samples: int
    elapsed_ns: int

    @property
    def natural_residual(self):
        """Without shared constraints the stationarity residual is the natural residual"""
        return self.kkt_stat

    def as_tuple(self):
        return tuple(getattr(self, column) for column in CSV_COLUMNS)


@dataclass
class RunRecord:
    algorithm: str
    seed: int
    config: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    status: str = "running"
    final_state: Optional[StackedState] = None
    instance_hash: Optional[str] = None
    error: Optional[str] = None

    @property
    def iterations(self):
        return len(self.rows)

    def column(self, name):
        if name not in CSV_COLUMNS:
            raise ConfigurationError(f"unknown metric {name!r}; valid: {', '.join(METRICS)}")
        return np.array([getattr(row, name) for row in self.rows])

    def final(self, name):
        return getattr(self.rows[-1], name) if self.rows else math.nan

    @property
    def total_oracle_calls(self):
        return int(sum(row.oracle_calls for row in self.rows))

    @property
    def total_samples(self):
        return int(self.rows[-1].samples) if self.rows else 0

    def calls_to_accuracy(self, target, metric="rel_dist"):
        """Cumulative oracle calls when `metric` first drops to `target`, or None"""
        calls = 0
        for row in self.rows:
            calls += row.oracle_calls
            if getattr(row, metric) <= target:
                return calls
        return None


@dataclass(frozen=True, eq=False)
class ReferenceSolution:
    x: np.ndarray
    lam: np.ndarray
    state: Optional[StackedState] = None
    iterations: int = 0
    tolerance: float = 0.0
    cached: bool = False


class DictReferenceCache:
    """In-memory reference cache keyed by instance hash"""

    def __init__(self):
        self._store = {}

    def get(self, key):
        return self._store.get(key)

    def put(self, key, solution):
        self._store[key] = solution


class _Counters:
    def __init__(self):
        self.oracle_calls = 0
        self.samples = 0


def _estimator(config, game, stream, k, counters):
    """Oracle for iteration k; samples of one slot are drawn and counted once"""
    mode = config.oracle_mode
    num_agents = game.num_agents
    drawn = {}

    def samples(slot):
        if slot not in drawn:
            size = 1 if mode == "sa" else batch_size(config.batch, k)
            drawn[slot] = draw_joint(stream, num_agents, k, size, slot)
            counters.samples += num_agents * size
        return drawn[slot]

    def estimate(x, slot=0):
        counters.oracle_calls += 1
        if mode == "exact":
            return pseudogradient_exact(game, x)
        if mode == "sa":
            return pseudogradient_sa(game, x, samples(slot)[0])
        return pseudogradient_saa(game, x, samples(slot))

    return estimate


def _measure(game, graph, state, reference):
    x = state.x
    if reference is not None:
        scale = np.linalg.norm(reference.x)
        distance = np.linalg.norm(x - reference.x)
        rel_dist = distance / scale if scale > 0 else distance
    else:
        rel_dist = math.nan
    disagreement = float(np.linalg.norm(laplacian_apply(graph, state.lam))) if game.m else 0.0
    if game.exact_oracle is not None:
        report = kkt_residual(game, x, consensus_multiplier(game, state.lam))
        kkt = (report.stationarity, report.feasibility, report.complementarity)
    else:
        kkt = (math.nan,) * 3
    return float(rel_dist), disagreement, kkt


def run(config, game, graph, reference=None, stream=None, callback=None, log=None,
        initial=None):
    """Execute one solver configuration and record metrics every iteration

    Arguments:
        reference {ReferenceSolution} -- Needed for the rel_dist column
        stream {SampleStream} -- Sample source; its seed is replaced by config.seed
        callback {callable} -- Called as callback(k, previous, state, row)
        log {MessageLog} -- Records the neighbour reads of every round

    Raises:
        ConfigurationError -- Invalid algorithm/estimator/schedule combination
        DivergenceError -- Monitored metric exceeded the divergence threshold
        NumericalError -- NaN or Inf in an update
    """
    config.validate(game)
    if config.oracle_mode != "exact":
        if stream is None:
            raise ConfigurationError(f"{config.algorithm.value} needs a sample stream")
        stream = replace(stream, seed=config.seed)

    record = RunRecord(algorithm=config.algorithm.value, seed=config.seed,
                       config=config.as_dict())
    state = initial or StackedState.initial(game, graph)
    counters = _Counters()
    algorithm = config.algorithm
    start = time.perf_counter_ns()
    logger.info("running %s (seed %s) for up to %s iterations on %s",
                algorithm.value, config.seed, config.max_iters, game.name)

    try:
        for k in range(config.max_iters):
            estimate = _estimator(config, game, stream, k, counters)
            calls_before = counters.oracle_calls
            previous = state

            if algorithm.is_snep:
                gamma_k = step_at(config.step_schedule, k)
                x_next = sne_fb_iteration(state.x, game, gamma_k, estimate(state.x), k=k)
                state = StackedState(x_next, state.z, state.lam)
            elif algorithm is Algorithm.FBF:
                state = fbf_iteration(state, game, graph, config.steps, estimate(state.x),
                                      lambda point: estimate(point, slot=1), rho=config.rho,
                                      log=log, k=k)
            elif algorithm is Algorithm.EG:
                state = eg_iteration(state, game, graph, config.steps, estimate(state.x),
                                     estimate, log=log, k=k)
            else:
                steps = config.steps
                if algorithm is Algorithm.STOCH_FB_SA_EXPERIMENTAL and config.step_schedule:
                    decay = step_at(config.step_schedule, k) / config.step_schedule.gamma0
                    steps = steps.scaled(decay, primal_only=True)
                state = fb_iteration(state, game, graph, steps, estimate(state.x), log=log, k=k)

            rel_dist, disagreement, kkt = _measure(game, graph, state, reference)
            row = RunRow(
                k=k + 1,
                rel_dist=rel_dist,
                dual_disagreement=disagreement,
                kkt_stat=kkt[0],
                kkt_feas=kkt[1],
                kkt_comp=kkt[2],
                oracle_calls=counters.oracle_calls - calls_before,
                samples=counters.samples,
                elapsed_ns=time.perf_counter_ns() - start,
            )
            record.rows.append(row)
            if callback is not None:
                callback(k, previous, state, row)

            monitored = rel_dist if reference is not None else float(
                np.max(np.abs(state.as_vector()), initial=0.0))
            if monitored > config.divergence_threshold:
                raise DivergenceError(k + 1, monitored, config.divergence_threshold)
            if (k + 1) % config.log_every == 0:
                logger.debug("%s k=%d rel_dist=%.3e disagreement=%.3e", algorithm.value, k + 1,
                             rel_dist, disagreement)
            if config.tol is not None and getattr(row, config.stop_metric) < config.tol:
                record.status = "converged"
                break
        else:
            record.status = "completed"
    except DivergenceError as ex:
        record.status, record.error, record.final_state = "diverged", str(ex), state
        ex.record = record
        logger.warning("%s (seed %s) diverged: %s", algorithm.value, config.seed, ex)
        raise
    except NumericalError as ex:
        record.status, record.error, record.final_state = "failed", str(ex), state
        ex.record = record
        logger.error("%s (seed %s) aborted: %s", algorithm.value, config.seed, ex)
        raise

    record.final_state = state
    logger.info("%s (seed %s) %s after %d iterations", algorithm.value, config.seed,
                record.status, record.iterations)
    return record


def default_gamma(game, graph, beta=None, margin=1.05):
    """Certified gamma for the diagonally dominant steps

    Without `beta`, the cocoercivity modulus is read off the affine exact
    pseudogradient.
    """
    if beta is None:
        matrix, _ = affine_matrix(game)
        beta = cocoercivity_constant(matrix)
    return certified_gamma(theta_constant(beta, graph), margin)


def compute_reference(game, graph, tol=1e-10, gamma=None, beta=None, max_iters=10 ** 7,
                      check_every=10, cache=None, key=None):
    """High-precision deterministic forward-backward solution

    Stops when the step residual and every KKT component fall below `tol`.
    Results are cached under `key` when a cache is given.

    Raises:
        ConvergenceError -- Budget exhausted; use smaller steps (larger gamma)
    """
    if cache is not None and key is not None:
        hit = cache.get(key)
        if hit is not None and hit.tolerance <= tol:
            logger.info("reference cache hit for %s", key[:12])
            return replace(hit, cached=True)

    if game.exact_oracle is None:
        raise UnsupportedOperationError("reference solution needs an exact pseudogradient oracle")
    gamma = default_gamma(game, graph, beta) if gamma is None else gamma
    steps = max_step_sizes(game, graph, gamma)
    state = StackedState.initial(game, graph)
    logger.info("computing reference for %s (gamma %.4g, tol %.1e)", game.name, gamma, tol)

    for k in range(max_iters):
        following = fb_iteration(state, game, graph, steps, pseudogradient_exact(game, state.x),
                                 k=k)
        if (k + 1) % check_every == 0:
            step = np.max(np.abs(following.as_vector() - state.as_vector()), initial=0.0)
            if step < tol:
                multiplier = consensus_multiplier(game, following.lam)
                report = kkt_residual(game, following.x, multiplier, graph, following.lam)
                if report.worst() < tol:
                    solution = ReferenceSolution(following.x, multiplier, following, k + 1, tol)
                    if cache is not None and key is not None:
                        cache.put(key, solution)
                    logger.info("reference converged after %d iterations", k + 1)
                    return solution
        state = following

    raise ConvergenceError(
        f"reference run did not reach {tol:.1e} within {max_iters} iterations; "
        "use smaller steps (larger gamma)"
    )
