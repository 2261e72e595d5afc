"""
Shared fixtures for qhs tests
"""
from pathlib import Path
from typing import List, Optional, Sequence

import pytest

from qhs.cluster import ClusterConfig
from qhs.policies import OverheadConfig, PolicyKind, SpeedupModel
from qhs.simulation import Scenario
from qhs.workload import Job, Phase, gen_clustering_aggregation

SCENARIOS = Path(__file__).parent.parent / 'scenarios'

# Small clustering loop with round numbers: each iteration is a 10 s
# three-node phase, a 20 s quantum phase and a 3 s serial phase.
SMALL_CLASSICAL = [[2000, 5000, 10000]] * 4
SMALL_SERIAL = [3000] * 4
SMALL_DELTA_Q = 20000


def hand_trace_job(job_id: str, submit_time: int = 0) -> Job:
    return Job(
        id=job_id,
        phases=(Phase.classical(1, 10000), Phase.quantum(2000), Phase.classical(1, 10000)),
        submit_time=submit_time,
    )


def make_scenario(
    policy: PolicyKind,
    jobs: Sequence[Job],
    n_nodes: int,
    n_qpus: int = 1,
    n_vqpus: Optional[int] = None,
    overheads: OverheadConfig = OverheadConfig.zero(),
    split: bool = False,
    speedup_model: SpeedupModel = SpeedupModel.LINEAR,
) -> Scenario:
    return Scenario(
        cluster=ClusterConfig(n_nodes=n_nodes, n_qpus=n_qpus, n_vqpus=n_vqpus),
        policy=policy,
        jobs=tuple(jobs),
        seed=0,
        overheads=overheads,
        split_clustering_tasks=split,
        speedup_model=speedup_model,
    )


def small_clustering_jobs(copies: int = 1, malleable: bool = True) -> List[Job]:
    return [
        gen_clustering_aggregation(
            SMALL_DELTA_Q,
            SMALL_CLASSICAL,
            SMALL_SERIAL,
            job_id=f"clustering-{i}",
            malleable=malleable,
        )
        for i in range(copies)
    ]


@pytest.fixture
def hand_trace_jobs() -> List[Job]:
    return [hand_trace_job('a'), hand_trace_job('b')]


@pytest.fixture
def scenarios_dir() -> Path:
    return SCENARIOS
