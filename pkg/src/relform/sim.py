"""Closed-loop simulation engine and Monte Carlo harness.

One tick is: measure -> filter update -> control -> filter predict ->
truth step, so the control law always acts on the freshest posterior.
Truth noise, measurement noise, and initial positions draw from streams
keyed only by (seed, stream id), never by estimator choice, so runs with
equal seeds are paired across estimators.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import filters
from .dynamics import SwarmState, follower_control, leader_control, measure_edges, step_truth
from .errors import RelformError
from .graph import (
    SensingGraph,
    assemble_laplacian,
    build_directed_edges,
    incidence,
    stress_weights,
    verify_weights,
)
from .noise import CovarianceSpec, NoiseStream, build_covariance, cholesky_factor

ESTIMATOR_KEYS = ("mle", "rkf", "crkf", "jrkf", "oracle-true-state")

# Fraction of the horizon treated as converged for summary comparisons.
STEADY_STATE_FRACTION = 0.25


@dataclass(frozen=True)
class Scenario:
    """Complete experiment description, independent of any derived matrices."""

    graph: SensingGraph
    target: np.ndarray  # (N, D)
    estimator: str = "crkf"
    weights: object = "solve"  # "solve" or {(i, j): l_ij}
    weight_scale: float = 1.0
    dt: float = 1e-3
    horizon: int = 3000
    repeat: int = 10
    sigma_w: float = 1e-3
    rho_w: float = 0.5
    sigma_v: float = 0.1
    rho_v: float = 0.5
    init_mean: np.ndarray | None = None  # (D,), defaults to zero
    init_cov: np.ndarray | None = None  # (D, D), defaults to identity
    seed: int = 0
    runs: int = 1
    leader_gain: float = 1.0
    leader_distances: dict | None = None  # {(i, j): d}, derived from target if absent
    pairing: str = "paired"

    def __post_init__(self):
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float))
        if self.target.shape[0] != self.graph.num_nodes:
            raise ValueError(
                f"target has {self.target.shape[0]} rows for {self.graph.num_nodes} nodes"
            )
        if self.estimator not in ESTIMATOR_KEYS:
            raise ValueError(f"unknown estimator {self.estimator!r}; pick one of {ESTIMATOR_KEYS}")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.runs < 1:
            raise ValueError("run count must be >= 1")
        if self.repeat < 1:
            raise ValueError("measurement repeat count must be >= 1")
        if self.pairing not in ("paired", "unpaired"):
            raise ValueError(f"pairing must be 'paired' or 'unpaired', got {self.pairing!r}")

    @property
    def dim(self) -> int:
        return self.target.shape[1]


@dataclass(frozen=True)
class _ControlPlan:
    """Index arrays for evaluating all control laws in a few scatter-adds."""

    follower_edges: np.ndarray  # edge indices feeding the Laplacian law
    follower_heads: np.ndarray  # 0-based rows receiving each term
    follower_weights: np.ndarray
    leader_edges: np.ndarray  # edge indices between ordered leader pairs
    leader_heads: np.ndarray
    leader_sq_distances: np.ndarray
    gain: float


@dataclass(frozen=True)
class PreparedScenario:
    """Scenario plus every derived matrix the run loop needs."""

    scenario: Scenario
    edges: object
    op: object
    weights: dict
    laplacian: np.ndarray
    process_cov: np.ndarray  # (ND, ND)
    meas_cov: np.ndarray  # (D, D)
    init_mean: np.ndarray
    init_cov: np.ndarray
    leader_distances: dict
    agent_weights: dict
    edge_process: np.ndarray  # (M, D, D)
    control_plan: _ControlPlan
    weight_residual: float = 0.0

    @property
    def num_nodes(self) -> int:
        return self.scenario.graph.num_nodes

    @property
    def dim(self) -> int:
        return self.scenario.dim

    @property
    def edge_count(self) -> int:
        return self.edges.count


def prepare(scenario: Scenario) -> PreparedScenario:
    """Resolve weights, covariances, and index structures for a scenario."""
    graph = scenario.graph
    n, d = graph.num_nodes, scenario.dim
    edges = build_directed_edges(graph)
    op = incidence(edges, n, d)

    if isinstance(scenario.weights, str):
        if scenario.weights != "solve":
            raise ValueError(f"weights must be 'solve' or an explicit map, got {scenario.weights!r}")
        weights = stress_weights(graph, scenario.target, scale=scenario.weight_scale)
    else:
        weights = dict(scenario.weights)
    residual = verify_weights(graph, scenario.target, weights)

    process_cov = build_covariance(CovarianceSpec(n * d, scenario.sigma_w, scenario.rho_w))
    meas_cov = build_covariance(CovarianceSpec(d, scenario.sigma_v, scenario.rho_v))
    init_mean = (
        np.zeros(d) if scenario.init_mean is None else np.asarray(scenario.init_mean, dtype=float)
    )
    init_cov = (
        np.eye(d) if scenario.init_cov is None else np.asarray(scenario.init_cov, dtype=float)
    )
    if init_mean.shape != (d,):
        raise ValueError(f"init mean shape {init_mean.shape} != ({d},)")
    if init_cov.shape != (d, d):
        raise ValueError(f"init covariance shape {init_cov.shape} != {(d, d)}")

    if scenario.leader_distances is not None:
        distances = dict(scenario.leader_distances)
    else:
        distances = {}
        for a in graph.leader_set:
            for b in graph.leader_set:
                if a != b:
                    distances[(a, b)] = float(
                        np.linalg.norm(scenario.target[a - 1] - scenario.target[b - 1])
                    )

    agent_weights = {v: {} for v in range(1, n + 1)}
    for (i, j), w in weights.items():
        agent_weights[i][(i, j)] = w

    edge_process = np.stack(
        [filters.edge_process_cov(process_cov, i, j, d) for i, j in edges.edges]
    )

    leaders = set(graph.leader_set) if len(graph.leader_set) > 1 else set()
    fw_edges, fw_heads, fw_weights = [], [], []
    for idx, (i, j) in enumerate(edges.edges):
        if i not in leaders:
            fw_edges.append(idx)
            fw_heads.append(i - 1)
            fw_weights.append(weights.get((i, j), 0.0))
    ld_edges, ld_heads, ld_d2 = [], [], []
    for (i, j), dist in distances.items():
        if i in leaders and j in leaders:
            ld_edges.append(edges.index_of((i, j)))
            ld_heads.append(i - 1)
            ld_d2.append(dist**2)
    plan = _ControlPlan(
        follower_edges=np.array(fw_edges, dtype=np.intp),
        follower_heads=np.array(fw_heads, dtype=np.intp),
        follower_weights=np.array(fw_weights, dtype=float),
        leader_edges=np.array(ld_edges, dtype=np.intp),
        leader_heads=np.array(ld_heads, dtype=np.intp),
        leader_sq_distances=np.array(ld_d2, dtype=float),
        gain=scenario.leader_gain,
    )

    return PreparedScenario(
        scenario=scenario,
        edges=edges,
        op=op,
        weights=weights,
        laplacian=assemble_laplacian(weights, n),
        process_cov=process_cov,
        meas_cov=meas_cov,
        init_mean=init_mean,
        init_cov=init_cov,
        leader_distances=distances,
        agent_weights=agent_weights,
        edge_process=edge_process,
        control_plan=plan,
        weight_residual=residual,
    )


def formation_residual(positions: np.ndarray, weights, leader_distances) -> dict:
    """How far a configuration is from the commanded formation.

    affine: norm of the lifted Laplacian applied to the positions (zero on
    any affine image of the target). leader: worst absolute deviation of a
    leader pair distance from its target (zero only on rigid images, up to
    reflection).
    """
    positions = np.asarray(positions, dtype=float)
    lap = assemble_laplacian(weights, positions.shape[0])
    affine = float(np.linalg.norm(lap @ positions))
    leader = 0.0
    for (i, j), d in leader_distances.items():
        gap = abs(float(np.linalg.norm(positions[i - 1] - positions[j - 1])) - d)
        leader = max(leader, gap)
    return {"affine": affine, "leader": leader}


# ---------------------------------------------------------------------------
# Estimator engines: vectorized per-run counterparts of the filter operations.


class _TrueStateOracle:
    """Feeds exact relative positions to the control law; no uncertainty."""

    def __init__(self, prep: PreparedScenario, hygiene: bool):
        self._shape = (prep.edge_count, prep.dim)
        self.min_eig_seen = np.inf
        self.reset()

    def reset(self):
        self._est = np.zeros(self._shape)

    def update(self, batch, true_rel):
        self._est = true_rel.copy()

    def predict(self, inputs, dt):
        pass

    def edge_estimates(self):
        return self._est

    def cov_trace(self):
        return 0.0


class _BatchMeanEstimator:
    """Per-batch maximum-likelihood estimate; memoryless, constant uncertainty."""

    def __init__(self, prep: PreparedScenario, hygiene: bool):
        self._shape = (prep.edge_count, prep.dim)
        per_edge = prep.meas_cov / prep.scenario.repeat
        self._trace = prep.edge_count * float(np.trace(per_edge))
        self.min_eig_seen = float(np.linalg.eigvalsh(per_edge).min()) if hygiene else np.inf
        self.reset()

    def reset(self):
        self._est = np.zeros(self._shape)

    def update(self, batch, true_rel):
        self._est = batch.block_means()

    def predict(self, inputs, dt):
        pass

    def edge_estimates(self):
        return self._est

    def cov_trace(self):
        return self._trace


class _PerEdgeKalman:
    """Independent Kalman filter per directed edge, batched over edges."""

    def __init__(self, prep: PreparedScenario, hygiene: bool):
        self._prep = prep
        self._hygiene = hygiene
        self._heads = prep.edges.heads()
        self._tails = prep.edges.tails()
        self._r_eff = prep.meas_cov / prep.scenario.repeat
        self.min_eig_seen = np.inf
        self.reset()

    def reset(self):
        prep = self._prep
        m, d = prep.edge_count, prep.dim
        self._means = np.zeros((m, d))
        self._covs = np.broadcast_to(2.0 * prep.init_cov, (m, d, d)).copy()
        self.min_eig_seen = np.inf

    def update(self, batch, true_rel):
        covs = self._covs
        innovation = covs + self._r_eff
        innovation = 0.5 * (innovation + innovation.transpose(0, 2, 1))
        try:
            np.linalg.cholesky(innovation)
            gains = np.linalg.solve(innovation, covs).transpose(0, 2, 1)
        except np.linalg.LinAlgError as exc:
            raise filters.SingularInnovation(f"innovation matrix is singular: {exc}") from exc
        self._means += np.einsum("eij,ej->ei", gains, batch.block_means() - self._means)
        covs = covs - gains @ covs
        self._covs = 0.5 * (covs + covs.transpose(0, 2, 1))
        if self._hygiene:
            low = float(np.linalg.eigvalsh(self._covs).min())
            self.min_eig_seen = min(self.min_eig_seen, low)

    def predict(self, inputs, dt):
        self._means += dt * (inputs[self._heads] - inputs[self._tails])
        self._covs = self._covs + self._prep.edge_process

    def edge_estimates(self):
        return self._means

    def cov_trace(self):
        return float(np.einsum("eii->", self._covs))


class _PerAgentJoint:
    """Per-agent joint filter over each agent's incoming edges.

    Agents with equal neighborhood size share array shapes, so they are
    grouped by degree and advanced with batched linear algebra; the
    per-agent recursions are unchanged.
    """

    def __init__(self, prep: PreparedScenario, hygiene: bool):
        self._prep = prep
        self._hygiene = hygiene
        heads = prep.edges.heads()
        tails = prep.edges.tails()
        by_degree: dict[int, list[int]] = {}
        for agent in range(1, prep.num_nodes + 1):
            rows = prep.edges.head_slice(agent)
            degree = rows.stop - rows.start
            if degree:
                by_degree.setdefault(degree, []).append(agent)
        d = prep.dim
        self._groups = []
        for degree in sorted(by_degree):
            agents = by_degree[degree]
            rows = [prep.edges.head_slice(a) for a in agents]
            edge_idx = np.array([np.arange(r.start, r.stop) for r in rows], dtype=np.intp)
            self._groups.append(
                {
                    "degree": degree,
                    "agents": agents,
                    "edge_idx": edge_idx,
                    "heads": heads[edge_idx],
                    "tails": tails[edge_idx],
                    "local_q": np.stack(
                        [filters.agent_process_cov(prep.op, prep.process_cov, a) for a in agents]
                    ),
                    "r_eff": np.kron(np.eye(degree), prep.meas_cov / prep.scenario.repeat),
                }
            )
        self.min_eig_seen = np.inf
        self.reset()

    def reset(self):
        prep = self._prep
        self._means = []
        self._covs = []
        for group in self._groups:
            count, degree = len(group["agents"]), group["degree"]
            width = degree * prep.dim
            self._means.append(np.zeros((count, width)))
            block = np.kron(np.eye(degree), 2.0 * prep.init_cov)
            self._covs.append(np.broadcast_to(block, (count, width, width)).copy())
        self.min_eig_seen = np.inf

    def update(self, batch, true_rel):
        block_means = batch.block_means()
        for gi, group in enumerate(self._groups):
            covs = self._covs[gi]
            innovation = covs + group["r_eff"]
            innovation = 0.5 * (innovation + innovation.transpose(0, 2, 1))
            try:
                np.linalg.cholesky(innovation)
                gains = np.linalg.solve(innovation, covs).transpose(0, 2, 1)
            except np.linalg.LinAlgError as exc:
                raise filters.SingularInnovation(
                    f"innovation matrix is singular (agents {group['agents']}): {exc}"
                ) from exc
            count = len(group["agents"])
            obs = block_means[group["edge_idx"].reshape(-1)].reshape(count, -1)
            self._means[gi] += np.einsum("aij,aj->ai", gains, obs - self._means[gi])
            covs = covs - gains @ covs
            self._covs[gi] = 0.5 * (covs + covs.transpose(0, 2, 1))
            if self._hygiene:
                low = float(np.linalg.eigvalsh(self._covs[gi]).min())
                self.min_eig_seen = min(self.min_eig_seen, low)

    def predict(self, inputs, dt):
        for gi, group in enumerate(self._groups):
            count = len(group["agents"])
            shift = (inputs[group["heads"]] - inputs[group["tails"]]).reshape(count, -1)
            self._means[gi] = self._means[gi] + dt * shift
            self._covs[gi] = self._covs[gi] + group["local_q"]

    def edge_estimates(self):
        prep = self._prep
        est = np.empty((prep.edge_count, prep.dim))
        for gi, group in enumerate(self._groups):
            est[group["edge_idx"].reshape(-1)] = self._means[gi].reshape(-1, prep.dim)
        return est

    def cov_trace(self):
        return float(sum(np.einsum("aii->", c) for c in self._covs))

    def agent_beliefs(self):
        """Per-agent (mean, cov) pairs keyed by node, for equivalence tests."""
        out = {}
        for gi, group in enumerate(self._groups):
            for ai, agent in enumerate(group["agents"]):
                out[agent] = (self._means[gi][ai].copy(), self._covs[gi][ai].copy())
        return out


class _CentralizedKalman:
    """Joint Kalman filter over the full stacked edge state."""

    def __init__(self, prep: PreparedScenario, hygiene: bool):
        self._prep = prep
        self._hygiene = hygiene
        self._heads = prep.edges.heads()
        self._tails = prep.edges.tails()
        lifted = prep.op.lifted()
        self._init_cov = np.kron(prep.op.matrix.T @ prep.op.matrix, prep.init_cov)
        self._q_bar = lifted.T @ prep.process_cov @ lifted
        self._r_eff = np.kron(np.eye(prep.edge_count), prep.meas_cov / prep.scenario.repeat)
        self.min_eig_seen = np.inf
        self.reset()

    def reset(self):
        self._mean = np.zeros(self._prep.edge_count * self._prep.dim)
        self._cov = self._init_cov.copy()
        self.min_eig_seen = np.inf

    def update(self, batch, true_rel):
        cov = self._cov
        innovation = 0.5 * ((cov + self._r_eff) + (cov + self._r_eff).T)
        try:
            factor = scipy.linalg.cho_factor(innovation, lower=True, check_finite=False)
        except scipy.linalg.LinAlgError as exc:
            raise filters.SingularInnovation(f"innovation matrix is singular: {exc}") from exc
        gain = scipy.linalg.cho_solve(factor, cov, check_finite=False).T
        self._mean = self._mean + gain @ (batch.block_means().reshape(-1) - self._mean)
        new_cov = cov - gain @ cov
        self._cov = 0.5 * (new_cov + new_cov.T)
        if self._hygiene:
            low = float(np.linalg.eigvalsh(self._cov).min())
            self.min_eig_seen = min(self.min_eig_seen, low)

    def predict(self, inputs, dt):
        shift = (inputs[self._heads] - inputs[self._tails]).reshape(-1)
        self._mean = self._mean + dt * shift
        self._cov = self._cov + self._q_bar

    def edge_estimates(self):
        return self._mean.reshape(-1, self._prep.dim)

    def cov_trace(self):
        return float(np.trace(self._cov))


_ENGINES = {
    "oracle-true-state": _TrueStateOracle,
    "mle": _BatchMeanEstimator,
    "rkf": _PerEdgeKalman,
    "jrkf": _PerAgentJoint,
    "crkf": _CentralizedKalman,
}


def make_estimator(key: str, prep: PreparedScenario, hygiene: bool = False):
    try:
        engine = _ENGINES[key]
    except KeyError:
        raise ValueError(f"unknown estimator {key!r}; pick one of {ESTIMATOR_KEYS}") from None
    return engine(prep, hygiene)


# ---------------------------------------------------------------------------
# Single run and Monte Carlo harness.


@dataclass
class SimTrace:
    """Per-step records of one closed-loop run."""

    seed: int
    estimator: str
    steps: int
    eps: np.ndarray
    cov_trace: np.ndarray
    affine_residual: np.ndarray
    leader_residual: np.ndarray
    true_edges: np.ndarray  # (steps, M*D)
    estimates: np.ndarray  # (steps, M*D)
    controls: np.ndarray  # (steps, N*D)
    wall_time: float = 0.0
    failed: bool = False
    fail_step: int | None = None
    fail_message: str = ""
    min_cov_eig: float = np.inf

    def recompute_eps(self) -> np.ndarray:
        """Estimation error rebuilt from the stored truth and estimates.

        Uses the same per-row norm call as the recording loop so the
        result is bit-identical to the stored values.
        """
        return np.array(
            [float(np.linalg.norm(t - e)) for t, e in zip(self.true_edges, self.estimates)]
        )


def control_inputs(prep: PreparedScenario, edge_estimates: np.ndarray) -> np.ndarray:
    """All agents' control inputs from stacked edge estimates, vectorized.

    Identical to evaluating follower_control / leader_control per agent
    (see control_inputs_reference); the laws are order-independent, so the
    per-agent loop collapses into scatter-adds over the edge arrays.
    """
    plan = prep.control_plan
    inputs = np.zeros((prep.num_nodes, prep.dim))
    terms = plan.follower_weights[:, None] * edge_estimates[plan.follower_edges]
    np.add.at(inputs, plan.follower_heads, terms)
    if plan.leader_edges.size:
        rel = edge_estimates[plan.leader_edges]
        factor = plan.leader_sq_distances - np.einsum("pd,pd->p", rel, rel)
        np.add.at(inputs, plan.leader_heads, plan.gain * factor[:, None] * rel)
    return inputs


def control_inputs_reference(prep: PreparedScenario, estimate_map: dict) -> np.ndarray:
    """Per-agent evaluation through the public control-law operations."""
    n, d = prep.num_nodes, prep.dim
    inputs = np.zeros((n, d))
    leaders = set(prep.scenario.graph.leader_set)
    for agent in range(1, n + 1):
        if agent in leaders and len(leaders) > 1:
            inputs[agent - 1] = leader_control(
                agent, estimate_map, prep.leader_distances, prep.scenario.leader_gain
            )
        else:
            inputs[agent - 1] = follower_control(agent, estimate_map, prep.agent_weights[agent])
    return inputs


def run_once(prep: PreparedScenario, seed: int, hygiene: bool = False) -> SimTrace:
    """Execute one seeded closed-loop run and record its trace.

    Estimator failures and numerical blow-ups truncate the trace and set
    the failure marker instead of raising.
    """
    scenario = prep.scenario
    n, d, m = prep.num_nodes, prep.dim, prep.edge_count
    horizon = scenario.horizon
    started = time.perf_counter()

    init_stream = NoiseStream(seed, "init")
    process_stream = NoiseStream(seed, "process")
    meas_stream = NoiseStream(seed, "measurement")

    factor = cholesky_factor(prep.init_cov)
    draws = init_stream.standard_normal((n, d)) if factor is not None else np.zeros((n, d))
    positions = prep.init_mean + (draws @ factor.T if factor is not None else draws)
    state = SwarmState(positions=positions, step=0)

    # Constant covariances: factor once instead of every step (None when zero,
    # which skips the draw entirely, exactly like sample_gaussian would).
    process_factor = cholesky_factor(prep.process_cov)
    meas_factor = cholesky_factor(prep.meas_cov)

    engine = make_estimator(scenario.estimator, prep, hygiene)

    eps = np.zeros(horizon)
    cov_trace = np.zeros(horizon)
    affine = np.zeros(horizon)
    leader = np.zeros(horizon)
    true_edges = np.zeros((horizon, m * d))
    estimates = np.zeros((horizon, m * d))
    controls = np.zeros((horizon, n * d))

    failed = False
    fail_step = None
    fail_message = ""
    steps_done = 0
    for k in range(horizon):
        try:
            batch = measure_edges(
                state, prep.edges, scenario.repeat, prep.meas_cov, meas_stream, factor=meas_factor
            )
            true_rel = prep.op.edge_differences(state.positions)
            engine.update(batch, true_rel)
            est = engine.edge_estimates()
            inputs = control_inputs(prep, est)

            true_edges[k] = true_rel.reshape(-1)
            estimates[k] = est.reshape(-1)
            controls[k] = inputs.reshape(-1)
            eps[k] = float(np.linalg.norm(true_edges[k] - estimates[k]))
            cov_trace[k] = engine.cov_trace()
            affine[k] = float(np.linalg.norm(prep.laplacian @ state.positions))
            res = 0.0
            for (i, j), dist in prep.leader_distances.items():
                gap = abs(float(np.linalg.norm(state.positions[i - 1] - state.positions[j - 1])) - dist)
                res = max(res, gap)
            leader[k] = res

            engine.predict(inputs, scenario.dt)
            state = step_truth(
                state, inputs, scenario.dt, prep.process_cov, process_stream, factor=process_factor
            )
            steps_done = k + 1
        except (RelformError, ValueError, np.linalg.LinAlgError) as exc:
            failed = True
            fail_step = k
            fail_message = str(exc)
            break

    return SimTrace(
        seed=seed,
        estimator=scenario.estimator,
        steps=steps_done,
        eps=eps[:steps_done],
        cov_trace=cov_trace[:steps_done],
        affine_residual=affine[:steps_done],
        leader_residual=leader[:steps_done],
        true_edges=true_edges[:steps_done],
        estimates=estimates[:steps_done],
        controls=controls[:steps_done],
        wall_time=time.perf_counter() - started,
        failed=failed,
        fail_step=fail_step,
        fail_message=fail_message,
        min_cov_eig=float(engine.min_eig_seen),
    )


def steady_slice(horizon: int) -> slice:
    """Final quarter of the horizon, the converged-comparison window."""
    return slice(int(np.floor(horizon * (1.0 - STEADY_STATE_FRACTION))), horizon)


@dataclass
class MonteCarloSummary:
    """Across-run aggregates of one estimator on one scenario."""

    estimator: str
    seeds: list
    runs_completed: int
    runs_failed: int
    eps_mean: np.ndarray
    eps_std: np.ndarray
    cov_trace: np.ndarray
    per_run_steady_eps: np.ndarray
    per_run_steady_trace: np.ndarray
    steady_eps_mean: float
    steady_trace_mean: float
    min_cov_eig: float = np.inf
    failures: list = field(default_factory=list)
    traces: list = field(default_factory=list)


def run_monte_carlo(
    prep: PreparedScenario, hygiene: bool = False, keep_traces: bool = False
) -> MonteCarloSummary:
    """Run seeds base..base+runs-1 and aggregate mean and +/-1 sigma per step.

    Requires at least two runs (the spread is meaningless otherwise).
    Failed runs are excluded from the aggregates and counted.
    """
    scenario = prep.scenario
    if scenario.runs < 2:
        raise ValueError("Monte Carlo needs run count >= 2 for the spread; use run_once instead")
    horizon = scenario.horizon
    window = steady_slice(horizon)

    eps_rows = []
    trace_row = None
    steady_eps = []
    steady_trace = []
    seeds = []
    failures = []
    kept = []
    min_eig = np.inf
    for r in range(scenario.runs):
        seed = scenario.seed + r
        seeds.append(seed)
        trace = run_once(prep, seed, hygiene=hygiene)
        min_eig = min(min_eig, trace.min_cov_eig)
        if keep_traces:
            kept.append(trace)
        if trace.failed:
            failures.append((seed, trace.fail_step, trace.fail_message))
            continue
        eps_rows.append(trace.eps)
        steady_eps.append(float(trace.eps[window].mean()))
        steady_trace.append(float(trace.cov_trace[window].mean()))
        if trace_row is None:
            trace_row = trace.cov_trace
    if not eps_rows:
        raise RelformError(f"all {scenario.runs} runs failed; first: {failures[0]}")

    eps_matrix = np.vstack(eps_rows)
    return MonteCarloSummary(
        estimator=scenario.estimator,
        seeds=seeds,
        runs_completed=len(eps_rows),
        runs_failed=len(failures),
        eps_mean=eps_matrix.mean(axis=0),
        eps_std=eps_matrix.std(axis=0, ddof=1) if eps_matrix.shape[0] > 1 else np.zeros(horizon),
        cov_trace=trace_row,
        per_run_steady_eps=np.array(steady_eps),
        per_run_steady_trace=np.array(steady_trace),
        steady_eps_mean=float(np.mean(steady_eps)),
        steady_trace_mean=float(trace_row[window].mean()),
        min_cov_eig=min_eig,
        failures=failures,
        traces=kept,
    )
