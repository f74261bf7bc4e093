"""Relative-state estimators: per-edge MLE, per-edge / per-agent / global Kalman filters.

All filters estimate stacked edge states (relative positions z_i - z_j in
canonical edge order). The measurement operator repeats each edge state T
times, which lets every update collapse exactly to a low-dimensional one:
averaging the T readings and shrinking the measurement covariance to R/T
is algebraically identical to the full stacked update, so the T*D-wide
innovation is never materialized outside oracle tests.

Numerical hygiene: innovation solves go through positive-definite
factorizations (never explicit inverses) and every posterior covariance is
symmetrized. Singular innovations (zero measurement noise against a
degenerate prior) raise SingularInnovation instead of propagating NaNs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .dynamics import MeasurementBatch
from .errors import SingularInnovation
from .graph import IncidenceOperator, node_submatrix

__all__ = [
    "FilterBelief",
    "ObservationOperator",
    "mle_edge",
    "rkf_init",
    "rkf_predict",
    "rkf_update",
    "crkf_init",
    "crkf_predict",
    "crkf_update",
    "jrkf_init",
    "jrkf_local_gain",
    "jrkf_step",
    "edge_process_cov",
    "agent_process_cov",
]


@dataclass(frozen=True)
class FilterBelief:
    """Mean and covariance of an edge-state estimate.

    scope is "edge" (one directed edge, label (i, j)), "agent" (the
    stacked incoming edges of one node, label i), or "global" (all M
    edges, label None). Covariances are kept symmetric by construction.
    """

    mean: np.ndarray
    cov: np.ndarray
    scope: str
    label: object = None

    @property
    def trace(self) -> float:
        return float(np.trace(self.cov))


def _symmetrized(cov: np.ndarray) -> np.ndarray:
    return 0.5 * (cov + cov.T)


@dataclass(frozen=True)
class ObservationOperator:
    """Structured form of the repeat-T observation map.

    Per edge the dense operator is kron(1_T, I_D); across `blocks` edges
    it is the block-diagonal repetition of that. It is applied through
    block averaging instead of dense products.
    """

    repeat: int
    dim: int
    blocks: int = 1

    def collapse(self, stacked: np.ndarray) -> np.ndarray:
        """Blockwise mean over the T readings; sufficient statistic of y."""
        return stacked.reshape(self.blocks, self.repeat, self.dim).mean(axis=1).reshape(-1)

    def dense(self) -> np.ndarray:
        """Materialized operator, for oracle tests and explicit gains."""
        per_edge = np.kron(np.ones((self.repeat, 1)), np.eye(self.dim))
        return np.kron(np.eye(self.blocks), per_edge)

    def averaging(self) -> np.ndarray:
        """Dense left inverse mapping stacked readings to block means."""
        per_edge = np.kron(np.ones((1, self.repeat)) / self.repeat, np.eye(self.dim))
        return np.kron(np.eye(self.blocks), per_edge)

    def effective_noise(self, r_blocks) -> np.ndarray:
        """Block diagonal of R_ij / T, the collapsed measurement covariance."""
        blocks = _expand_r_blocks(r_blocks, self.blocks, self.dim)
        return scipy.linalg.block_diag(*[b / self.repeat for b in blocks])

    def stacked_noise(self, r_blocks) -> np.ndarray:
        """Dense bdiag(kron(I_T, R_ij)); oracle-side companion of dense()."""
        blocks = _expand_r_blocks(r_blocks, self.blocks, self.dim)
        return scipy.linalg.block_diag(*[np.kron(np.eye(self.repeat), b) for b in blocks])


def _expand_r_blocks(r_blocks, count: int, dim: int) -> list[np.ndarray]:
    arr = np.asarray(r_blocks, dtype=float)
    if arr.ndim == 2:
        if arr.shape != (dim, dim):
            raise ValueError(f"measurement covariance shape {arr.shape} != {(dim, dim)}")
        return [arr] * count
    if arr.ndim == 3 and arr.shape == (count, dim, dim):
        return list(arr)
    raise ValueError(f"expected one ({dim},{dim}) block or {count} of them, got {arr.shape}")


def _collapsed_update(mean, cov, block_means, effective_noise):
    """Shared Kalman measurement update in collapsed (block-mean) form."""
    innovation_cov = _symmetrized(cov + effective_noise)
    try:
        factor = scipy.linalg.cho_factor(innovation_cov, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise SingularInnovation(f"innovation matrix is singular: {exc}") from exc
    gain = scipy.linalg.cho_solve(factor, cov, check_finite=False).T
    new_mean = mean + gain @ (block_means - mean)
    new_cov = _symmetrized((np.eye(cov.shape[0]) - gain) @ cov)
    return new_mean, new_cov


def mle_edge(y: np.ndarray, repeat: int) -> np.ndarray:
    """Closed-form maximum-likelihood edge estimate: the mean of the T readings.

    Independent of the measurement covariance, which cancels in the
    closed form.
    """
    y = np.asarray(y, dtype=float)
    if y.size % repeat:
        raise ValueError(f"measurement length {y.size} not divisible by repeat {repeat}")
    return y.reshape(repeat, -1).mean(axis=0)


# ---------------------------------------------------------------------------
# Per-edge filter


def rkf_init(initial_pos_cov: np.ndarray, label=None) -> FilterBelief:
    """Edge belief at step zero: zero mean, covariance 2P.

    The difference of two i.i.d. N(mu, P) positions has mean zero for any
    mu and covariance 2P.
    """
    p = np.asarray(initial_pos_cov, dtype=float)
    return FilterBelief(mean=np.zeros(p.shape[0]), cov=2.0 * p, scope="edge", label=label)


def rkf_predict(
    belief: FilterBelief,
    u_head: np.ndarray,
    u_tail: np.ndarray,
    dt: float,
    edge_process_cov: np.ndarray,
) -> FilterBelief:
    """Shift the mean by dt (u_i - u_j) and grow the covariance by Q_ij."""
    mean = belief.mean + dt * (np.asarray(u_head, float) - np.asarray(u_tail, float))
    cov = _symmetrized(belief.cov + edge_process_cov)
    return replace(belief, mean=mean, cov=cov)


def rkf_update(belief: FilterBelief, y: np.ndarray, repeat: int, meas_cov: np.ndarray) -> FilterBelief:
    """Kalman measurement update of one edge from its T stacked readings."""
    d = belief.mean.size
    obs = ObservationOperator(repeat=repeat, dim=d, blocks=1)
    mean, cov = _collapsed_update(
        belief.mean, belief.cov, obs.collapse(np.asarray(y, float)), obs.effective_noise(meas_cov)
    )
    return replace(belief, mean=mean, cov=cov)


def edge_process_cov(process_cov: np.ndarray, head: int, tail: int, dim: int) -> np.ndarray:
    """Process covariance of one edge: b^T Q b lifted to D dimensions.

    b is the incidence column e_head - e_tail, so this pulls the four
    D-blocks of Q touching the two incident agents.
    """

    def block(a, b):
        return process_cov[(a - 1) * dim : a * dim, (b - 1) * dim : b * dim]

    return block(head, head) + block(tail, tail) - block(head, tail) - block(tail, head)


# ---------------------------------------------------------------------------
# Centralized filter over all edges


def crkf_init(op: IncidenceOperator, initial_pos_cov: np.ndarray) -> FilterBelief:
    """Global belief: zero mean, covariance kron(B^T B, P).

    The covariance is PSD but singular (rigid translations are
    unobservable in edge space); only the innovation matrix needs to be
    invertible, which holds for any SPD measurement noise.
    """
    p = np.asarray(initial_pos_cov, dtype=float)
    gram = op.matrix.T @ op.matrix
    return FilterBelief(
        mean=np.zeros(op.edges.count * op.dim),
        cov=np.kron(gram, p),
        scope="global",
    )


def crkf_predict(
    belief: FilterBelief,
    inputs: np.ndarray,
    dt: float,
    process_cov: np.ndarray,
    op: IncidenceOperator,
) -> FilterBelief:
    """Global prediction: mean moves by dt B_bar^T u, covariance grows by B_bar^T Q B_bar."""
    shift = op.edge_input_differences(np.asarray(inputs, float)).reshape(-1)
    lifted = op.lifted()
    grown = _symmetrized(belief.cov + lifted.T @ process_cov @ lifted)
    return replace(belief, mean=belief.mean + dt * shift, cov=grown)


def crkf_update(belief: FilterBelief, batch: MeasurementBatch, meas_cov) -> FilterBelief:
    """Joint measurement update over all M edges."""
    m = batch.values.shape[0]
    obs = ObservationOperator(repeat=batch.repeat, dim=batch.dim, blocks=m)
    mean, cov = _collapsed_update(
        belief.mean, belief.cov, batch.block_means().reshape(-1), obs.effective_noise(meas_cov)
    )
    return replace(belief, mean=mean, cov=cov)


# ---------------------------------------------------------------------------
# Per-agent joint filter


def jrkf_init(initial_pos_cov: np.ndarray, degree: int, label=None) -> FilterBelief:
    """Agent belief over its incoming edges: zero mean, per-edge blocks of 2P.

    Initial cross-edge correlations (the shared own-position term) are
    deliberately dropped so the belief starts on the per-edge marginals;
    with no cross-edge process noise the filter then reduces exactly to
    independent per-edge filters.
    """
    p = np.asarray(initial_pos_cov, dtype=float)
    return FilterBelief(
        mean=np.zeros(degree * p.shape[0]),
        cov=np.kron(np.eye(degree), 2.0 * p),
        scope="agent",
        label=label,
    )


def jrkf_local_gain(prior_cov: np.ndarray, repeat: int, r_blocks) -> np.ndarray:
    """Optimal block gain for one agent: Sigma H_i^T (H_i Sigma H_i^T + R_i)^{-1}.

    Minimizes the agent-local posterior-trace objective, which is also the
    agent's share of the network objective under the block-diagonal gain
    constraint. Computed in collapsed form and expanded through the
    averaging operator; shape (M_i D, M_i T D).
    """
    prior_cov = np.asarray(prior_cov, dtype=float)
    arr = np.asarray(r_blocks, dtype=float)
    dim = arr.shape[-1]
    blocks = prior_cov.shape[0] // dim
    obs = ObservationOperator(repeat=repeat, dim=dim, blocks=blocks)
    innovation_cov = _symmetrized(prior_cov + obs.effective_noise(r_blocks))
    try:
        factor = scipy.linalg.cho_factor(innovation_cov, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise SingularInnovation(f"innovation matrix is singular: {exc}") from exc
    collapsed_gain = scipy.linalg.cho_solve(factor, prior_cov, check_finite=False).T
    return collapsed_gain @ obs.averaging()


def agent_process_cov(
    op: IncidenceOperator, process_cov: np.ndarray, agent: int
) -> np.ndarray:
    """B_bar_i^T Q B_bar_i using only the rows/columns of Q an agent can see.

    The submatrix B_i is nonzero only on the agent's closed neighborhood,
    so Q is restricted to those index blocks before the product; the
    result is exactly what the agent can assemble from local exchange.
    """
    d = op.dim
    sub = node_submatrix(op, agent)
    local_nodes = np.flatnonzero(np.any(sub != 0.0, axis=1))
    coords = np.concatenate([np.arange(v * d, (v + 1) * d) for v in local_nodes])
    local_q = process_cov[np.ix_(coords, coords)]
    local_lift = np.kron(sub[local_nodes, :], np.eye(d))
    return local_lift.T @ local_q @ local_lift


def jrkf_agent_predict(
    belief: FilterBelief,
    inputs: np.ndarray,
    dt: float,
    local_process_cov: np.ndarray,
    heads: np.ndarray,
    tails: np.ndarray,
) -> FilterBelief:
    """Prediction for one agent; touches only its own and neighbors' inputs."""
    shift = (inputs[heads] - inputs[tails]).reshape(-1)
    cov = _symmetrized(belief.cov + local_process_cov)
    return replace(belief, mean=belief.mean + dt * shift, cov=cov)


def jrkf_agent_update(
    belief: FilterBelief, block_means: np.ndarray, repeat: int, r_blocks
) -> FilterBelief:
    """Joint measurement update of one agent's stacked incoming edges."""
    d = np.asarray(r_blocks, dtype=float).shape[-1]
    blocks = belief.mean.size // d
    obs = ObservationOperator(repeat=repeat, dim=d, blocks=blocks)
    mean, cov = _collapsed_update(
        belief.mean, belief.cov, np.asarray(block_means, float).reshape(-1), obs.effective_noise(r_blocks)
    )
    return replace(belief, mean=mean, cov=cov)


def jrkf_step(
    beliefs: dict[int, FilterBelief],
    inputs: np.ndarray,
    batch: MeasurementBatch,
    op: IncidenceOperator,
    process_cov: np.ndarray,
    meas_cov: np.ndarray,
    dt: float,
) -> dict[int, FilterBelief]:
    """One predict + update cycle for every agent.

    Each agent consumes the control inputs of its closed neighborhood,
    its own measurement rows, and the process-covariance blocks touching
    its edges; agents are independent within the step, so the processing
    order cannot matter.
    """
    block_means = batch.block_means()
    heads = op.edges.heads()
    tails = op.edges.tails()
    out = {}
    for agent in sorted(beliefs):
        belief = beliefs[agent]
        rows = op.edges.head_slice(agent)
        local_q = agent_process_cov(op, process_cov, agent)
        predicted = jrkf_agent_predict(belief, inputs, dt, local_q, heads[rows], tails[rows])
        out[agent] = jrkf_agent_update(predicted, block_means[rows], batch.repeat, meas_cov)
    return out
