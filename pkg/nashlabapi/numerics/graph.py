"""Dual-variable communication graph and its Laplacian"""

import logging
from dataclasses import dataclass
from functools import cached_property

import networkx as nx
import numpy as np

from .exceptions import ConfigurationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DualGraph:
    """Weighted undirected connected graph over the agents

    Arguments:
        weights {ndarray} -- Symmetric N x N adjacency with zero diagonal
    """

    weights: np.ndarray

    @property
    def num_nodes(self):
        return self.weights.shape[0]

    @cached_property
    def degrees(self):
        return self.weights.sum(axis=1)

    @cached_property
    def laplacian(self):
        """Dense L = D - W, for verification only"""
        return np.diag(self.degrees) - self.weights

    @cached_property
    def neighbors(self):
        """Per node, the (neighbor, weight) pairs"""
        return tuple(
            tuple((int(j), float(self.weights[i, j])) for j in np.flatnonzero(self.weights[i]))
            for i in range(self.num_nodes)
        )

    def edges(self):
        rows, cols = np.nonzero(np.triu(self.weights))
        return [(int(i), int(j), float(self.weights[i, j])) for i, j in zip(rows, cols)]


def build_dual_graph(edges, num_nodes):
    """Assemble and validate the dual graph

    Arguments:
        edges {iterable} -- (i, j) or (i, j, weight) tuples, 0-based
        num_nodes {int} -- N

    Raises:
        ConfigurationError -- Out-of-range node, self-loop, nonpositive weight,
            repeated edge or a disconnected graph
    """
    if num_nodes < 1:
        raise ConfigurationError("graph needs at least one node")

    network = nx.Graph()
    network.add_nodes_from(range(num_nodes))
    for edge in edges:
        i, j = int(edge[0]), int(edge[1])
        weight = float(edge[2]) if len(edge) > 2 else 1.0
        if not (0 <= i < num_nodes and 0 <= j < num_nodes):
            raise ConfigurationError(f"edge ({i}, {j}) has a node outside 0..{num_nodes - 1}")
        if i == j:
            raise ConfigurationError(f"self-loop on node {i}")
        if not weight > 0:
            raise ConfigurationError(f"edge ({i}, {j}) has nonpositive weight {weight}")
        if network.has_edge(i, j):
            raise ConfigurationError(f"edge ({i}, {j}) is listed twice")
        network.add_edge(i, j, weight=weight)

    if not nx.is_connected(network):
        components = nx.number_connected_components(network)
        raise ConfigurationError(f"dual graph is disconnected ({components} components)")

    weights = nx.to_numpy_array(network, nodelist=list(range(num_nodes)), weight="weight")
    weights.setflags(write=False)
    return DualGraph(weights=weights)


def cycle_edges(num_nodes, chords=()):
    """Edges of an N-cycle plus extra chords; a single edge for N=2"""
    if num_nodes == 1:
        ring = []
    elif num_nodes == 2:
        ring = [(0, 1)]
    else:
        ring = [(i, (i + 1) % num_nodes) for i in range(num_nodes)]
    return ring + [tuple(chord) for chord in chords]


def laplacian_apply(graph, values):
    """(L kron I_m) lambda, computed blockwise

    Arguments:
        values {ndarray} -- Stacked duals of length N*m
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.size % graph.num_nodes:
        raise ConfigurationError(
            f"stacked vector of length {values.size} does not split over {graph.num_nodes} nodes"
        )
    blocks = values.reshape(graph.num_nodes, -1)
    return (graph.degrees[:, None] * blocks - graph.weights @ blocks).ravel()


def neighbor_disagreement(graph, blocks, i, on_read=None):
    """sum_j w_ij (v_i - v_j) for one node, from an (N, m) array

    `on_read(j)` is called once per neighbour value read.
    """
    total = np.zeros(blocks.shape[1])
    for j, weight in graph.neighbors[i]:
        if on_read is not None:
            on_read(j)
        total += weight * (blocks[i] - blocks[j])
    return total


def max_weighted_degree(graph):
    return float(graph.degrees.max())


def algebraic_connectivity(graph):
    """Second-smallest Laplacian eigenvalue"""
    if graph.num_nodes == 1:
        return 0.0
    return float(np.linalg.eigvalsh(graph.laplacian)[1])


def parse_edge_list(text):
    """Read `i j weight` lines; blank lines and # comments are skipped"""
    edges = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) not in (2, 3):
            raise ConfigurationError(f"edge list line {lineno}: expected `i j [weight]`")
        try:
            edge = (int(fields[0]), int(fields[1])) + tuple(float(f) for f in fields[2:])
        except ValueError as ex:
            raise ConfigurationError(f"edge list line {lineno}: {ex}") from ex
        edges.append(edge)
    return edges


def format_edge_list(graph):
    return "".join(f"{i} {j} {weight!r}\n" for i, j, weight in graph.edges())
