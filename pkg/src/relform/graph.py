"""Sensing graph, directed-edge ordering, and incidence-matrix operators.

Nodes are labeled 1..N. Every bidirectional sensing link {i, j} is
materialized as two directed edges (i, j) and (j, i), where (i, j) stands
for "relative position of i with respect to j", i.e. the quantity
z_i - z_j. The directed-edge ordering is canonical: edges are grouped by
head node (all edges pointing at node 1 first, then node 2, ...) and
sorted by tail node inside each group. Everything downstream -- incidence
columns, measurement stacking, filter state layout -- follows this order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NoValidWeights

# Relative tolerance used by the stress-weight residual checks.
WEIGHT_RESIDUAL_RTOL = 1e-9


@dataclass(frozen=True)
class SensingGraph:
    """Bidirectional sensing graph with an optional leader set.

    links are unordered node pairs; leader_set nodes must induce a
    complete subgraph (leaders measure each other directly). The graph
    must be connected: relative estimation on a disconnected graph would
    leave whole components unobservable relative to each other.
    """

    num_nodes: int
    links: tuple[tuple[int, int], ...]
    leader_set: tuple[int, ...] = ()

    def __init__(self, num_nodes, links, leader_set=()):
        norm = set()
        for pair in links:
            i, j = pair
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (1 <= i <= num_nodes and 1 <= j <= num_nodes):
                raise ValueError(f"link {pair} outside 1..{num_nodes}")
            norm.add((min(i, j), max(i, j)))
        if len(norm) < len(list(links)):
            # Duplicates collapse silently only if identical; a pair given
            # both as (i,j) and (j,i) is the same link.
            pass
        leaders = tuple(sorted(set(leader_set)))
        for v in leaders:
            if not (1 <= v <= num_nodes):
                raise ValueError(f"leader {v} outside 1..{num_nodes}")
        object.__setattr__(self, "num_nodes", int(num_nodes))
        object.__setattr__(self, "links", tuple(sorted(norm)))
        object.__setattr__(self, "leader_set", leaders)
        self._check_connected()
        self._check_leader_clique()

    def _check_connected(self):
        if self.num_nodes < 1:
            raise ValueError("graph needs at least one node")
        seen = {1}
        frontier = [1]
        adj = self.adjacency_sets()
        while frontier:
            v = frontier.pop()
            for w in adj[v]:
                if w not in seen:
                    seen.add(w)
                    frontier.append(w)
        if len(seen) != self.num_nodes:
            missing = sorted(set(range(1, self.num_nodes + 1)) - seen)
            raise ValueError(f"graph is disconnected; unreachable nodes {missing}")

    def _check_leader_clique(self):
        linkset = set(self.links)
        for a in self.leader_set:
            for b in self.leader_set:
                if a < b and (a, b) not in linkset:
                    raise ValueError(
                        f"leader pair ({a},{b}) not linked; leader subgraph must be complete"
                    )

    def adjacency_sets(self) -> dict[int, set[int]]:
        adj: dict[int, set[int]] = {v: set() for v in range(1, self.num_nodes + 1)}
        for i, j in self.links:
            adj[i].add(j)
            adj[j].add(i)
        return adj

    def neighbors(self, i: int) -> tuple[int, ...]:
        return tuple(sorted(self.adjacency_sets()[i]))


@dataclass(frozen=True)
class DirectedEdgeList:
    """Canonically ordered directed edges; edge (i, j) estimates z_i - z_j."""

    edges: tuple[tuple[int, int], ...]

    @property
    def count(self) -> int:
        return len(self.edges)

    def index_of(self, edge: tuple[int, int]) -> int:
        return self.edges.index(tuple(edge))

    def heads(self) -> np.ndarray:
        """0-based head indices, one per edge (memoized)."""
        cached = self.__dict__.get("_heads")
        if cached is None:
            cached = np.array([i - 1 for i, _ in self.edges], dtype=np.intp)
            cached.setflags(write=False)
            self.__dict__["_heads"] = cached
        return cached

    def tails(self) -> np.ndarray:
        """0-based tail indices, one per edge (memoized)."""
        cached = self.__dict__.get("_tails")
        if cached is None:
            cached = np.array([j - 1 for _, j in self.edges], dtype=np.intp)
            cached.setflags(write=False)
            self.__dict__["_tails"] = cached
        return cached

    def head_slice(self, i: int) -> slice:
        """Contiguous slice of edge indices whose head is node i."""
        lo = 0
        while lo < len(self.edges) and self.edges[lo][0] < i:
            lo += 1
        hi = lo
        while hi < len(self.edges) and self.edges[hi][0] == i:
            hi += 1
        return slice(lo, hi)


def build_directed_edges(graph: SensingGraph) -> DirectedEdgeList:
    """Materialize each link as two directed edges in canonical order.

    Grouped by head node ascending, ties broken by tail node ascending,
    so the result is a stable bijection between edge index and the
    (head, tail) pair.
    """
    adj = graph.adjacency_sets()
    edges = []
    for head in range(1, graph.num_nodes + 1):
        for tail in sorted(adj[head]):
            edges.append((head, tail))
    return DirectedEdgeList(tuple(edges))


@dataclass(frozen=True)
class IncidenceOperator:
    """Node-by-edge incidence matrix B plus its D-dimensional lift.

    Column for edge (i, j) holds +1 at row i (head) and -1 at row j
    (tail); every column sums to zero, so relative positions annihilate
    rigid translations. The lift B_bar = kron(B, I_D) is applied through
    index arithmetic wherever possible instead of being materialized.
    """

    edges: DirectedEdgeList
    num_nodes: int
    dim: int
    matrix: np.ndarray = field(compare=False)

    def lifted(self) -> np.ndarray:
        """Dense kron(B, I_D); for small oracles and the CRKF setup."""
        return np.kron(self.matrix, np.eye(self.dim))

    def edge_differences(self, positions: np.ndarray) -> np.ndarray:
        """Per-edge z_head - z_tail for an (N, D) position matrix.

        Elementwise identical to (B^T kron I_D) @ vec(positions).
        """
        return positions[self.edges.heads()] - positions[self.edges.tails()]

    def edge_input_differences(self, inputs: np.ndarray) -> np.ndarray:
        """Same as edge_differences but named for control inputs."""
        return inputs[self.edges.heads()] - inputs[self.edges.tails()]


def incidence(edges: DirectedEdgeList, num_nodes: int, dim: int) -> IncidenceOperator:
    """Build the incidence operator for a directed-edge list."""
    m = edges.count
    mat = np.zeros((num_nodes, m))
    for col, (i, j) in enumerate(edges.edges):
        if not (1 <= i <= num_nodes and 1 <= j <= num_nodes):
            raise ValueError(f"edge ({i},{j}) outside 1..{num_nodes}")
        mat[i - 1, col] = 1.0
        mat[j - 1, col] = -1.0
    mat.setflags(write=False)
    return IncidenceOperator(edges=edges, num_nodes=num_nodes, dim=dim, matrix=mat)


def node_submatrix(op: IncidenceOperator, i: int) -> np.ndarray:
    """Columns of B for edges whose head is node i (incoming edges).

    Under the canonical ordering these columns are contiguous, and
    stacking the blocks over all nodes reconstitutes B exactly.
    """
    if not (1 <= i <= op.num_nodes):
        raise ValueError(f"node {i} outside 1..{op.num_nodes}")
    return op.matrix[:, op.edges.head_slice(i)]


def assemble_laplacian(weights: dict[tuple[int, int], float], num_nodes: int) -> np.ndarray:
    """Generalized Laplacian from a control-weight map.

    L[i, j] = -l_ij for linked pairs and L[i, i] = sum_j l_ij, so row
    sums vanish and (L kron I_D) annihilates rigid translations by
    construction.
    """
    lap = np.zeros((num_nodes, num_nodes))
    for (i, j), w in weights.items():
        lap[i - 1, j - 1] -= w
        lap[i - 1, i - 1] += w
    return lap


def weight_residual(weights, num_nodes: int, target: np.ndarray) -> float:
    """Norm of (L kron I_D) @ vec(target) for a weight map."""
    lap = assemble_laplacian(weights, num_nodes)
    return float(np.linalg.norm(lap @ target))


def verify_weights(graph: SensingGraph, target: np.ndarray, weights) -> float:
    """Check a user-supplied weight map against the target configuration.

    Returns the equilibrium residual; raises NoValidWeights when it
    exceeds the relative tolerance.
    """
    res = weight_residual(weights, graph.num_nodes, target)
    limit = WEIGHT_RESIDUAL_RTOL * max(1.0, float(np.linalg.norm(target)))
    if res > limit:
        raise NoValidWeights(
            f"weights do not hold the target configuration: residual {res:.3e} "
            f"exceeds {limit:.3e}"
        )
    return res


def stress_weights(
    graph: SensingGraph, target: np.ndarray, scale: float = 1.0
) -> dict[tuple[int, int], float]:
    """Solve for control weights whose Laplacian annihilates the target.

    The equilibrium condition sum_j w_ij (t_i - t_j) = 0 at every node is
    a linear system in one symmetric weight per link; its null space is
    computed by SVD and the combination closest (in Frobenius norm) to
    the orthogonal projector onto the complement of span{1, target
    columns} is selected. That fit lands on the positive-semidefinite
    maximal-rank stress whenever the framework admits one, which is what
    makes the closed-loop control law contract. The result is normalized
    so the smallest nonzero eigenvalue of the stress matrix equals
    `scale` (the closed-loop decay rate in 1/s).

    Returns l_ij for both orientations of every link (l_ij = l_ji).
    """
    target = np.asarray(target, dtype=float)
    n = graph.num_nodes
    if target.shape[0] != n:
        raise ValueError(f"target has {target.shape[0]} rows, graph has {n} nodes")
    d = target.shape[1]
    for a in range(n):
        for b in range(a + 1, n):
            if np.allclose(target[a], target[b]):
                raise ValueError(f"coincident target positions for nodes {a + 1} and {b + 1}")

    links = graph.links
    m = len(links)
    zero_map = {}
    for i, j in links:
        zero_map[(i, j)] = 0.0
        zero_map[(j, i)] = 0.0
    if m == 0:
        return zero_map

    # Equilibrium system: rows are node coordinates, columns are links.
    eq = np.zeros((n * d, m))
    for col, (i, j) in enumerate(links):
        diff = target[i - 1] - target[j - 1]
        eq[(i - 1) * d : i * d, col] = diff
        eq[(j - 1) * d : j * d, col] = -diff

    _, svals, vt = np.linalg.svd(eq, full_matrices=True)
    cutoff = max(eq.shape) * np.finfo(float).eps * (svals[0] if svals.size else 1.0)
    rank = int(np.sum(svals > cutoff))
    null_basis = vt[rank:].T  # (m, s)
    if null_basis.shape[1] == 0:
        return zero_map

    # Ideal stress target: projector onto the complement of the trivial
    # motions (translations plus the target configuration itself).
    trivial = np.column_stack([np.ones(n), target])
    q, _ = np.linalg.qr(trivial)
    projector = np.eye(n) - q @ q.T

    design = np.empty((n * n, null_basis.shape[1]))
    for k in range(null_basis.shape[1]):
        design[:, k] = _stress_matrix(links, null_basis[:, k], n).ravel()
    coeffs, *_ = np.linalg.lstsq(design, projector.ravel(), rcond=None)
    w = null_basis @ coeffs

    omega = _stress_matrix(links, w, n)
    eigvals = np.linalg.eigvalsh(omega)
    positive = eigvals[eigvals > 1e-9 * max(1.0, abs(eigvals[-1]))]
    if positive.size:
        w = w * (float(scale) / positive[0])
    else:
        w = w * float(scale)

    weights = {}
    for col, (i, j) in enumerate(links):
        # Control weight is the negated stress so the follower law contracts.
        weights[(i, j)] = -w[col]
        weights[(j, i)] = -w[col]

    res = weight_residual(weights, n, target)
    limit = WEIGHT_RESIDUAL_RTOL * max(1.0, float(np.linalg.norm(target)))
    if res > limit:
        raise NoValidWeights(
            f"no equilibrium stress for this graph/target pair: residual {res:.3e}"
        )
    return weights


def stress_matrix_of_weights(weights, num_nodes: int) -> np.ndarray:
    """Stress matrix (negated Laplacian) for diagnostics: PSD means stable."""
    return -assemble_laplacian(weights, num_nodes)


def _stress_matrix(links, w, n) -> np.ndarray:
    omega = np.zeros((n, n))
    for col, (i, j) in enumerate(links):
        omega[i - 1, j - 1] -= w[col]
        omega[j - 1, i - 1] -= w[col]
        omega[i - 1, i - 1] += w[col]
        omega[j - 1, j - 1] += w[col]
    return omega
