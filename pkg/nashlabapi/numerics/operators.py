"""Operator-theoretic core of the forward-backward scheme

The extended state is omega = (x, z, lambda). The splitting uses

    A_bar(omega) = (F(x), 0, b + L lambda)
    B_bar(omega) = (N_Omega(x), 0, N_+(lambda)) + M omega

with M = [[0, 0, A^T], [0, 0, L], [-A, -L, 0]] skew, and the metric

    Phi = [[alpha^-1, 0, -A^T], [0, nu^-1, -L], [-A, -L, sigma^-1]]

Here A = diag(A_1, ..., A_N) and L is the Laplacian kron I_m. Phi and M are
only assembled densely for verification; the solvers never invert Phi.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import ConfigurationError, UnsupportedOperationError
from .game_model import Box, constraint_violation, pseudogradient_exact
from .graph import laplacian_apply, max_weighted_degree

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class StackedState:
    """omega = (x, z, lambda); z and lambda hold N blocks of length m"""

    x: np.ndarray
    z: np.ndarray
    lam: np.ndarray

    @classmethod
    def initial(cls, game, graph):
        """Projection of the origin, zero auxiliaries and zero duals"""
        size = graph.num_nodes * game.m
        return cls(game.project(np.zeros(game.n)), np.zeros(size), np.zeros(size))

    @classmethod
    def from_vector(cls, game, graph, vector):
        size = graph.num_nodes * game.m
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (game.n + 2 * size,):
            raise ConfigurationError(f"stacked vector has shape {vector.shape}")
        return cls(vector[:game.n].copy(), vector[game.n:game.n + size].copy(),
                   vector[game.n + size:].copy())

    def as_vector(self):
        return np.concatenate([self.x, self.z, self.lam])

    def is_finite(self):
        return bool(np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.z))
                    and np.all(np.isfinite(self.lam)))


@dataclass(frozen=True, eq=False)
class StepSizes:
    """Per-agent constant steps alpha_i, nu_i, sigma_i and the design parameter gamma"""

    alpha: np.ndarray
    nu: np.ndarray
    sigma: np.ndarray
    gamma: float = float("nan")

    def __post_init__(self):
        for name in ("alpha", "nu", "sigma"):
            value = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if np.any(value <= 0) or not np.all(np.isfinite(value)):
                raise ConfigurationError(f"step sizes {name} must be positive and finite")
            object.__setattr__(self, name, value)

    def primal(self, game):
        return np.repeat(self.alpha, game.dims)

    def consensus(self, game):
        return np.repeat(self.nu, game.m)

    def dual(self, game):
        return np.repeat(self.sigma, game.m)

    def scaled(self, factor, primal_only=False):
        if primal_only:
            return StepSizes(self.alpha * factor, self.nu, self.sigma, self.gamma)
        return StepSizes(self.alpha * factor, self.nu * factor, self.sigma * factor, self.gamma)

    def largest(self):
        return float(max(self.alpha.max(), self.nu.max(), self.sigma.max()))

    def as_dict(self):
        return {
            "gamma": self.gamma,
            "alpha": self.alpha.tolist(),
            "nu": self.nu.tolist(),
            "sigma": self.sigma.tolist(),
        }


@dataclass(frozen=True)
class KktReport:
    stationarity: float
    complementarity: float
    feasibility: float
    dual_disagreement: float = 0.0

    def worst(self):
        return max(self.stationarity, self.complementarity, self.feasibility,
                   self.dual_disagreement)

    def as_dict(self):
        return {
            "kkt_stat": self.stationarity,
            "kkt_comp": self.complementarity,
            "kkt_feas": self.feasibility,
            "dual_disagreement": self.dual_disagreement,
        }


@dataclass(frozen=True)
class InclusionReport:
    """Per-block violation of the resolvent inclusion; truthy when it holds"""

    violations: dict = field(default_factory=dict)
    tol: float = 1e-9

    @property
    def passed(self):
        return all(value <= self.tol for value in self.violations.values())

    def __bool__(self):
        return self.passed


def project_box(bounds, v):
    """Clamp v into a Box or a (lower, upper) pair"""
    if not isinstance(bounds, Box):
        bounds = Box(*bounds)
    return bounds.project(np.asarray(v, dtype=float))


def project_nonneg(v):
    return np.maximum(np.asarray(v, dtype=float), 0.0)


def _check_pair(game, graph):
    if graph.num_nodes != game.num_agents:
        raise ConfigurationError(
            f"dual graph has {graph.num_nodes} nodes but the game has {game.num_agents} agents"
        )


def max_step_sizes(game, graph, gamma):
    """Largest steps allowed by the diagonal-dominance conditions on Phi

    alpha_i = 1 / (gamma + max column abs-sum of A_i)
    nu_i    = 1 / (gamma + 2 d_i)
    sigma_i = 1 / (gamma + 2 d_i + max row abs-sum of A_i)
    """
    if not gamma > 0:
        raise ConfigurationError(f"gamma must be positive, got {gamma}")
    _check_pair(game, graph)

    alpha, nu, sigma = [], [], []
    for block, degree in zip(game.constraint_blocks, graph.degrees):
        magnitudes = np.abs(block)
        column_sum = magnitudes.sum(axis=0).max() if magnitudes.size else 0.0
        row_sum = magnitudes.sum(axis=1).max() if magnitudes.size else 0.0
        alpha.append(1.0 / (gamma + column_sum))
        nu.append(1.0 / (gamma + 2.0 * degree))
        sigma.append(1.0 / (gamma + 2.0 * degree + row_sum))
    return StepSizes(np.array(alpha), np.array(nu), np.array(sigma), float(gamma))


def cocoercivity_constant(matrix):
    """Cocoercivity modulus of x -> Mx

    1/L for symmetric positive semidefinite M, mu/L^2 otherwise.
    """
    matrix = np.asarray(matrix, dtype=float)
    lipschitz = np.linalg.norm(matrix, 2)
    if lipschitz == 0:
        raise ConfigurationError("zero operator has no finite cocoercivity modulus")
    if np.allclose(matrix, matrix.T, rtol=0, atol=1e-12 * lipschitz):
        eigenvalues = np.linalg.eigvalsh((matrix + matrix.T) / 2)
        if eigenvalues[0] < -1e-12 * lipschitz:
            raise ConfigurationError("symmetric operator is not positive semidefinite")
        return 1.0 / eigenvalues[-1]
    mu = np.linalg.eigvalsh((matrix + matrix.T) / 2)[0]
    if mu <= 0:
        raise ConfigurationError(f"operator is not strongly monotone (mu = {mu:.3e})")
    return mu / lipschitz ** 2


def theta_constant(beta, graph):
    """theta = min(beta, 1 / (2 d*))"""
    degree = max_weighted_degree(graph)
    return min(beta, 1.0 / (2.0 * degree)) if degree > 0 else beta


def certified_gamma(theta, margin=1.05):
    """gamma with 1/gamma < 2 theta, so the max_step_sizes steps give ||Phi^-1|| < 2 theta"""
    if not theta > 0:
        raise ConfigurationError(f"theta must be positive, got {theta}")
    if not margin > 1:
        raise ConfigurationError("margin must exceed 1")
    return margin / (2.0 * theta)


def block_constraint_matrix(game):
    """diag(A_1, ..., A_N), shape (N m, n)"""
    return scipy.linalg.block_diag(*game.constraint_blocks)


def stacked_offsets(game):
    return np.concatenate(game.constraint_offsets) if game.m else np.zeros(0)


def block_apply(game, x):
    """(A_i x_i) stacked over agents"""
    if not game.m:
        return np.zeros(0)
    return np.concatenate([block @ part for block, part in zip(game.constraint_blocks,
                                                              game.split(x))])


def block_transpose_apply(game, lam):
    """(A_i^T lambda_i) stacked over agents"""
    blocks = np.asarray(lam).reshape(game.num_agents, game.m)
    return np.concatenate([block.T @ blocks[i] for i, block in enumerate(game.constraint_blocks)])


def kron_laplacian(graph, m):
    return np.kron(graph.laplacian, np.eye(m))


def skew_matrix(game, graph):
    """Dense M; <M omega, omega> = 0"""
    _check_pair(game, graph)
    blocks = block_constraint_matrix(game)
    laplacian = kron_laplacian(graph, game.m)
    size = laplacian.shape[0]
    return np.block([
        [np.zeros((game.n, game.n)), np.zeros((game.n, size)), blocks.T],
        [np.zeros((size, game.n)), np.zeros((size, size)), laplacian],
        [-blocks, -laplacian, np.zeros((size, size))],
    ])


def skew_apply(game, graph, state):
    return np.concatenate([
        block_transpose_apply(game, state.lam),
        laplacian_apply(graph, state.lam) if game.m else np.zeros(0),
        -block_apply(game, state.x) - (laplacian_apply(graph, state.z) if game.m else 0.0),
    ])


def assemble_phi(game, graph, steps):
    """Dense preconditioner Phi, for verification and Phi-norm metrics"""
    _check_pair(game, graph)
    blocks = block_constraint_matrix(game)
    laplacian = kron_laplacian(graph, game.m)
    size = laplacian.shape[0]
    return np.block([
        [np.diag(1.0 / steps.primal(game)), np.zeros((game.n, size)), -blocks.T],
        [np.zeros((size, game.n)), np.diag(1.0 / steps.consensus(game)), -laplacian],
        [-blocks, -laplacian, np.diag(1.0 / steps.dual(game))],
    ])


def phi_inverse_norm(phi, max_iters=2000, tol=1e-12):
    """Spectral norm of Phi^-1 by inverse power iteration on a Cholesky factor

    Raises:
        ConfigurationError -- Phi is not positive definite
    """
    try:
        factor = scipy.linalg.cho_factor(phi)
    except np.linalg.LinAlgError as ex:
        raise ConfigurationError("preconditioner is not positive definite") from ex

    vector = np.random.default_rng(0).standard_normal(phi.shape[0])
    vector /= np.linalg.norm(vector)
    estimate = 0.0
    for _ in range(max_iters):
        image = scipy.linalg.cho_solve(factor, vector)
        previous, estimate = estimate, np.linalg.norm(image)
        vector = image / estimate
        if abs(estimate - previous) <= tol * estimate:
            break
    return float(estimate)


def phi_norm(phi, vector):
    return float(np.sqrt(vector @ phi @ vector))


def forward_eval(game, graph, state, fhat):
    """A_hat(omega) = (F_hat, 0, b + L lambda)"""
    size = graph.num_nodes * game.m
    dual = stacked_offsets(game) + laplacian_apply(graph, state.lam) if game.m else np.zeros(0)
    return np.concatenate([np.asarray(fhat, dtype=float), np.zeros(size), dual])


def verify_fb_inclusion(game, graph, state, next_state, a_hat, steps, tol=1e-9):
    """Check Phi(omega - omega_next) - A_hat(omega) in B_bar(omega_next)

    Box and nonnegative blocks are checked with normal-cone sign conditions;
    the auxiliary block must be an equality.

    Returns:
        InclusionReport -- Violation per block: "x", "z", "lambda"
    """
    size = graph.num_nodes * game.m
    dx = state.x - next_state.x
    dz = state.z - next_state.z
    dlam = state.lam - next_state.lam
    a_x, a_z, a_lam = np.split(np.asarray(a_hat, dtype=float), [game.n, game.n + size])

    residual_x = (dx / steps.primal(game) - block_transpose_apply(game, dlam) - a_x
                  - block_transpose_apply(game, next_state.lam))
    violations = {}
    if game.m:
        residual_z = (dz / steps.consensus(game) - laplacian_apply(graph, dlam) - a_z
                      - laplacian_apply(graph, next_state.lam))
        residual_lam = (-block_apply(game, dx) - laplacian_apply(graph, dz)
                        + dlam / steps.dual(game) - a_lam
                        + block_apply(game, next_state.x) + laplacian_apply(graph, next_state.z))
    else:
        residual_z = residual_lam = np.zeros(0)

    x_next = next_state.x
    at_lower = x_next <= game.lower + tol
    at_upper = x_next >= game.upper - tol
    cone_x = np.where(at_lower & at_upper, 0.0,
                      np.where(at_lower, np.maximum(residual_x, 0.0),
                               np.where(at_upper, np.maximum(-residual_x, 0.0),
                                        np.abs(residual_x))))
    outside = np.maximum(game.lower - x_next, 0.0) + np.maximum(x_next - game.upper, 0.0)
    violations["x"] = float(np.max(cone_x + outside, initial=0.0))
    violations["z"] = float(np.max(np.abs(residual_z), initial=0.0))

    lam_next = next_state.lam
    active = lam_next <= tol
    cone_lam = np.where(active, np.maximum(residual_lam, 0.0), np.abs(residual_lam))
    violations["lambda"] = float(np.max(cone_lam + np.maximum(-lam_next, 0.0), initial=0.0))

    report = InclusionReport(violations, tol)
    if not report:
        logger.debug("resolvent inclusion violated: %s", violations)
    return report


def kkt_residual(game, x, lam, graph=None, stacked_duals=None):
    """KKT residuals at (x, lambda) for the variational equilibrium

    Arguments:
        lam {ndarray} -- Consensual multiplier, length m
        graph {DualGraph} -- Needed only to report dual disagreement
        stacked_duals {ndarray} -- Local copies lambda_i, length N*m
    """
    fx = pseudogradient_exact(game, x)
    lam = np.asarray(lam, dtype=float).reshape(game.m)
    shift = game.A.T @ lam if game.m else 0.0
    stationarity = np.linalg.norm(x - game.project(x - (fx + shift)))
    if game.m:
        gap = constraint_violation(game, x)
        feasibility = np.linalg.norm(np.maximum(gap, 0.0))
        complementarity = abs(float(lam @ gap))
    else:
        feasibility = complementarity = 0.0
    disagreement = 0.0
    if graph is not None and stacked_duals is not None and game.m:
        disagreement = np.linalg.norm(laplacian_apply(graph, stacked_duals))
    return KktReport(float(stationarity), float(complementarity), float(feasibility),
                     float(disagreement))


def natural_residual(game, x):
    """||x - proj(x - F(x))||; zero exactly at Nash equilibria of a game without coupling"""
    if game.is_generalized:
        raise UnsupportedOperationError("natural residual needs a game without shared constraints")
    fx = pseudogradient_exact(game, x)
    return float(np.linalg.norm(x - game.project(x - fx)))


def consensus_multiplier(game, lam):
    """Average of the local dual copies"""
    if not game.m:
        return np.zeros(0)
    return np.asarray(lam).reshape(game.num_agents, game.m).mean(axis=0)


def extended_lipschitz(game, graph, lipschitz_f):
    """Upper bound on the Lipschitz constant of H = A_bar + M"""
    if not game.m:
        return float(lipschitz_f)
    laplacian = kron_laplacian(graph, game.m)
    return float(lipschitz_f + np.linalg.norm(skew_matrix(game, graph), 2)
                 + np.linalg.norm(laplacian, 2))


def extragradient_step_sizes(steps, game, graph, lipschitz_f, margin=0.95):
    """Shrink the steps so that max step * L_H < 1, as FBF and EG require"""
    bound = extended_lipschitz(game, graph, lipschitz_f)
    factor = margin / (steps.largest() * bound)
    return steps.scaled(factor) if factor < 1 else steps


def _h_apply(game, graph, vector, oracle, skew):
    state = StackedState.from_vector(game, graph, vector)
    size = graph.num_nodes * game.m
    dual = stacked_offsets(game) + kron_laplacian(graph, game.m) @ state.lam
    return (np.concatenate([oracle(state.x), np.zeros(size), dual]) + skew @ vector)


def _resolvent(game, graph, vector):
    state = StackedState.from_vector(game, graph, vector)
    return np.concatenate([game.project(state.x), state.z, project_nonneg(state.lam)])


def _metric(game, steps):
    return np.concatenate([steps.primal(game), steps.consensus(game), steps.dual(game)])


def fbf_compact_step(game, graph, steps, state, oracle):
    """Dense forward-backward-forward step: u = J(v - Psi^-1 H v), v+ = u + Psi^-1 (Hv - Hu)"""
    skew = skew_matrix(game, graph)
    psi_inv = _metric(game, steps)
    v = state.as_vector()
    hv = _h_apply(game, graph, v, oracle, skew)
    u = _resolvent(game, graph, v - psi_inv * hv)
    result = u + psi_inv * (hv - _h_apply(game, graph, u, oracle, skew))
    return StackedState.from_vector(game, graph, result)


def eg_compact_step(game, graph, steps, state, oracle):
    """Dense extragradient step: u = J(v - Psi^-1 H v), v+ = J(v - Psi^-1 H u)"""
    skew = skew_matrix(game, graph)
    psi_inv = _metric(game, steps)
    v = state.as_vector()
    u = _resolvent(game, graph, v - psi_inv * _h_apply(game, graph, v, oracle, skew))
    result = _resolvent(game, graph, v - psi_inv * _h_apply(game, graph, u, oracle, skew))
    return StackedState.from_vector(game, graph, result)
