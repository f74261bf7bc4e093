from pathlib import Path

import numpy as np
import pytest

from relform import Scenario, SensingGraph

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"

# Ten-agent benchmark: K4 seed plus six 4-lateration nodes, 30 links total.
BENCH_LINKS = [
    (1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4),
    (1, 5), (2, 5), (3, 5), (4, 5),
    (2, 6), (3, 6), (4, 6), (5, 6),
    (1, 7), (4, 7), (5, 7), (6, 7),
    (2, 8), (3, 8), (5, 8), (7, 8),
    (1, 9), (2, 9), (3, 9), (5, 9),
    (4, 10), (5, 10), (6, 10), (9, 10),
]
BENCH_TARGET = np.array(
    [
        [0.0, 0.0],
        [4.0, 0.3],
        [1.8, 3.4],
        [3.1, 1.9],
        [-1.2, 1.7],
        [5.3, 2.6],
        [0.7, -1.9],
        [2.4, 4.8],
        [-0.8, 3.9],
        [5.1, -1.3],
    ]
)

K4_LINKS = [(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)]
K4_TARGET = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def bench_graph() -> SensingGraph:
    return SensingGraph(10, BENCH_LINKS, leader_set=(1, 2, 3))


def bench_scenario(**overrides) -> Scenario:
    base = dict(
        graph=bench_graph(),
        target=BENCH_TARGET,
        estimator="crkf",
        weights="solve",
        weight_scale=20.0,
        dt=1e-3,
        horizon=3000,
        repeat=10,
        sigma_w=1e-3,
        rho_w=0.5,
        sigma_v=0.1,
        rho_v=0.5,
        seed=910,
        runs=50,
        leader_gain=0.5,
    )
    base.update(overrides)
    return Scenario(**base)


def k4_scenario(**overrides) -> Scenario:
    base = dict(
        graph=SensingGraph(4, K4_LINKS),
        target=K4_TARGET,
        estimator="oracle-true-state",
        weights="solve",
        weight_scale=8.0,
        dt=1e-3,
        horizon=2500,
        repeat=2,
        sigma_w=0.0,
        sigma_v=0.0,
        seed=7,
        runs=1,
    )
    base.update(overrides)
    return Scenario(**base)


@pytest.fixture(scope="session")
def scenario_dir() -> Path:
    return SCENARIO_DIR
