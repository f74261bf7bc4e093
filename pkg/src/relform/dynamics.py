"""Ground-truth plant: single-integrator dynamics, control laws, measurements.

The truth side of the simulator lives here. Control laws are pure
functions of the estimates handed to them; they never see absolute
positions. Measurement generation is the only place the true state and
the sensing graph meet.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MissingEstimate
from .graph import DirectedEdgeList
from .noise import NoiseStream, cholesky_factor, sample_gaussian


@dataclass(frozen=True)
class SwarmState:
    """True absolute positions (N x D) at one step; hidden from estimators."""

    positions: np.ndarray
    step: int = 0

    def __post_init__(self):
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("swarm positions must be finite")


@dataclass(frozen=True)
class MeasurementBatch:
    """Per-edge stacks of T noisy relative-position readings.

    values[e] is the length T*D vector for directed edge e in canonical
    order, stored as T consecutive D-blocks.
    """

    values: np.ndarray  # (M, T*D)
    repeat: int
    dim: int

    def edge_vector(self, index: int) -> np.ndarray:
        return self.values[index]

    def block_means(self) -> np.ndarray:
        """Per-edge average over the T readings; shape (M, D)."""
        m = self.values.shape[0]
        return self.values.reshape(m, self.repeat, self.dim).mean(axis=1)

    def stacked(self) -> np.ndarray:
        """Global measurement vector in canonical edge order."""
        return self.values.reshape(-1)


def follower_control(agent: int, estimates: dict, weights: dict) -> np.ndarray:
    """Weighted sum of estimated relative positions: u_i = sum_j l_ij zhat_ij."""
    total = None
    for (i, j), w in weights.items():
        if i != agent:
            continue
        est = estimates.get((i, j))
        if est is None:
            raise MissingEstimate(f"agent {agent} has no estimate for neighbor {j}")
        term = w * np.asarray(est, dtype=float)
        total = term if total is None else total + term
    if total is None:
        raise MissingEstimate(f"agent {agent} has no outgoing weights")
    return total


def leader_control(agent: int, estimates: dict, target_distances: dict, gain: float) -> np.ndarray:
    """Distance-preserving gradient law over the complete leader subgraph.

    u_i = gain * sum_j (d_ij^2 - |zhat_ij|^2) zhat_ij, summed over the
    other leaders j. Zero exactly when all leader inter-distances match
    their targets; descends the squared-distance-error sum.
    """
    total = None
    for (i, j), d in target_distances.items():
        if i != agent:
            continue
        est = estimates.get((i, j))
        if est is None:
            raise MissingEstimate(f"leader {agent} has no estimate for fellow leader {j}")
        est = np.asarray(est, dtype=float)
        term = (d**2 - float(est @ est)) * est
        total = term if total is None else total + term
    if total is None:
        raise MissingEstimate(f"leader {agent} has no fellow-leader distances")
    return gain * total


def step_truth(
    state: SwarmState,
    inputs: np.ndarray,
    dt: float,
    process_cov: np.ndarray,
    stream: NoiseStream,
    factor: np.ndarray | None = None,
) -> SwarmState:
    """Advance truth one step: z_{k+1} = z_k + dt * u_k + w_k.

    w_k is a single joint draw over all N*D coordinates so cross-agent
    correlation in the process covariance is honored. A precomputed
    Cholesky factor of the process covariance may be passed to avoid
    refactorizing a constant matrix every step; it must match.
    """
    pos = state.positions
    n, d = pos.shape
    inputs = np.asarray(inputs, dtype=float)
    if inputs.shape != (n, d):
        raise ValueError(f"control inputs shape {inputs.shape} != positions shape {(n, d)}")
    if process_cov.shape != (n * d, n * d):
        raise ValueError(f"process covariance shape {process_cov.shape} != {(n * d, n * d)}")
    if factor is None:
        noise = sample_gaussian(np.zeros(n * d), process_cov, stream).reshape(n, d)
    else:
        noise = (factor @ stream.standard_normal(n * d)).reshape(n, d)
    return SwarmState(positions=pos + dt * inputs + noise, step=state.step + 1)


def measure_edges(
    state: SwarmState,
    edges: DirectedEdgeList,
    repeat: int,
    meas_cov: np.ndarray,
    stream: NoiseStream,
    factor: np.ndarray | None = None,
) -> MeasurementBatch:
    """T noisy readings of z_i - z_j per directed edge.

    Noise is correlated across dimensions (meas_cov), independent across
    readings, edges, and time; antiparallel edges draw independent noise.
    As in step_truth, `factor` short-circuits the constant factorization.
    """
    if repeat < 1:
        raise ValueError(f"measurement repeat count must be >= 1, got {repeat}")
    pos = state.positions
    d = pos.shape[1]
    if meas_cov.shape != (d, d):
        raise ValueError(f"measurement covariance shape {meas_cov.shape} != {(d, d)}")
    rel = pos[edges.heads()] - pos[edges.tails()]  # (M, D)
    m = rel.shape[0]
    readings = np.broadcast_to(rel[:, None, :], (m, repeat, d)).copy()
    if factor is None:
        factor = cholesky_factor(meas_cov)
    elif not np.any(factor):
        factor = None
    if factor is not None:
        # One bulk draw; the generator consumes values sequentially, so this
        # equals per-edge, per-reading draws in canonical order.
        readings += stream.standard_normal((m, repeat, d)) @ factor.T
    return MeasurementBatch(values=readings.reshape(m, repeat * d), repeat=repeat, dim=d)
