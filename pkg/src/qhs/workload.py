"""
Workload builders for qhs

Hybrid jobs are ordered phase sequences. This module builds the two
experimental workloads (identical graph-colouring replicas with an R-scaled
classical sleep, and the four-iteration clustering-aggregation loop), solves
the clustering calibration system and loads JSON-lines job traces.
"""
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from qhs.errors import CalibrationError, ScenarioValidationError, TraceParseError
from qhs.utils.seeding import job_stream

Tick = int

PosInt = Annotated[int, Field(strict=True, gt=0)]
NonNegInt = Annotated[int, Field(strict=True, ge=0)]

CLUSTERING_ITERATIONS = 4
CLUSTERING_NODES = 3
CLUSTERING_ALGORITHMS = ('kmeans', 'dbscan', 'hierarchical')
LONG_DELTA_Q: Tick = 120_000
SHORT_DELTA_Q: Tick = 500
KMEANS_FRACTION = 0.25
DBSCAN_FRACTION = 0.9


class PhaseKind(str, Enum):
    CLASSICAL = 'classical'
    QUANTUM = 'quantum'
    SERIAL = 'serial'


@dataclass(frozen=True)
class QuantumBurst:
    duration: Tick
    payload: Optional[str] = None


@dataclass(frozen=True)
class Phase:
    """One step of a hybrid job.

    Quantum phases need no classical nodes. Serial phases are single-node
    classical work that malleable jobs treat as a shrink point. `parts` lists
    the 1-node durations of the independent codes a classical phase runs side
    by side; the phase lasts as long as the slowest one.
    """

    kind: PhaseKind
    duration: Tick
    nodes: int = 1
    parts: Tuple[Tick, ...] = ()
    payload: Optional[str] = None

    def __post_init__(self):
        if self.duration <= 0:
            raise ScenarioValidationError(f"must be positive, got {self.duration}", 'duration')
        if self.kind is PhaseKind.QUANTUM:
            if self.nodes != 0:
                raise ScenarioValidationError('quantum phases hold no classical nodes', 'nodes')
        elif self.nodes < 1:
            raise ScenarioValidationError(f"must be >= 1, got {self.nodes}", 'nodes')
        if self.kind is PhaseKind.SERIAL and self.nodes != 1:
            raise ScenarioValidationError('serial phases run on exactly one node', 'nodes')
        if self.parts:
            if self.kind is not PhaseKind.CLASSICAL:
                raise ScenarioValidationError('only classical phases have parts', 'parts')
            if len(self.parts) > self.nodes or max(self.parts) != self.duration:
                raise ScenarioValidationError(
                    'parts must fit the node count and the slowest part must equal duration',
                    'parts',
                )
            if min(self.parts) <= 0:
                raise ScenarioValidationError('part durations must be positive', 'parts')
        if self.payload is not None and self.kind is not PhaseKind.QUANTUM:
            raise ScenarioValidationError('only quantum phases carry payloads', 'payload')

    @classmethod
    def classical(cls, nodes: int, duration: Tick, parts: Sequence[Tick] = ()) -> 'Phase':
        return cls(PhaseKind.CLASSICAL, duration, nodes, tuple(parts))

    @classmethod
    def quantum(cls, duration: Tick, payload: Optional[str] = None) -> 'Phase':
        return cls(PhaseKind.QUANTUM, duration, 0, (), payload)

    @classmethod
    def serial(cls, duration: Tick) -> 'Phase':
        return cls(PhaseKind.SERIAL, duration, 1)

    @property
    def burst(self) -> Optional[QuantumBurst]:
        if self.kind is not PhaseKind.QUANTUM:
            return None
        return QuantumBurst(self.duration, self.payload)


@dataclass(frozen=True)
class Job:
    id: str
    phases: Tuple[Phase, ...]
    submit_time: Tick = 0
    nodes_min: int = 1
    malleable: bool = False

    def __post_init__(self):
        if not self.id:
            raise ScenarioValidationError('job id must be non-empty', 'id')
        if not self.phases:
            raise ScenarioValidationError(f"job {self.id} has no phases", 'phases')
        if self.submit_time < 0:
            raise ScenarioValidationError(f"must be >= 0, got {self.submit_time}", 'submit_time')
        if self.nodes_min < 1:
            raise ScenarioValidationError(f"must be >= 1, got {self.nodes_min}", 'nodes_min')

    @property
    def max_nodes(self) -> int:
        return max(phase.nodes for phase in self.phases)

    @property
    def quantum_ticks(self) -> Tick:
        return sum(p.duration for p in self.phases if p.kind is PhaseKind.QUANTUM)

    @property
    def work_ticks(self) -> Tick:
        return sum(p.duration for p in self.phases)


@dataclass(frozen=True)
class GcReplicaParams:
    n_copies: int
    ratio: Fraction = Fraction(0)
    n_iterations: int = 20
    burst_duration: Tick = 2000
    base_classical: Tick = 1000
    jitter_sigma: float = 0.0
    seed: int = 0
    payload: Optional[str] = None

    def __post_init__(self):
        if self.ratio < 0:
            raise ScenarioValidationError(f"R must be >= 0, got {self.ratio}", 'ratio')
        if self.n_copies < 1:
            raise ScenarioValidationError(f"must be >= 1, got {self.n_copies}", 'n_copies')
        if self.n_iterations < 1:
            raise ScenarioValidationError(f"must be >= 1, got {self.n_iterations}", 'n_iterations')
        if self.burst_duration <= 0 or self.base_classical <= 0:
            raise ScenarioValidationError('burst and base classical durations must be positive')
        if self.jitter_sigma < 0:
            raise ScenarioValidationError(f"must be >= 0, got {self.jitter_sigma}", 'jitter_sigma')

    def classical_after(self, burst: Tick) -> Tick:
        """Classical duration following a burst: base work plus an R-scaled sleep."""
        return self.base_classical + round(Fraction(self.ratio) * burst)


def gen_gc_replicas(params: GcReplicaParams) -> List[Job]:
    """
    Build identical graph-colouring replicas submitted together at t=0.

    Each replica alternates a quantum burst with the classical work that
    follows it, n_iterations times. With jitter_sigma > 0 every burst is scaled
    by a lognormal factor drawn from the replica's own stream, and the sleep
    follows the jittered burst.

    Args:
        params: Replica parameters

    Returns:
        list: n_copies jobs named gc-000, gc-001, ...
    """
    jobs = []
    for copy in range(params.n_copies):
        job_id = f"gc-{copy:03d}"
        rng = job_stream(params.seed, job_id) if params.jitter_sigma > 0 else None
        phases: List[Phase] = []
        for _ in range(params.n_iterations):
            burst = params.burst_duration
            if rng is not None:
                burst = max(1, round(burst * float(rng.lognormal(0.0, params.jitter_sigma))))
            phases.append(Phase.quantum(burst, params.payload))
            phases.append(Phase.classical(1, params.classical_after(burst)))
        jobs.append(Job(id=job_id, phases=tuple(phases)))
    return jobs


def gen_clustering_aggregation(
    delta_q: Tick,
    classical_durs: Sequence[Sequence[Tick]],
    serial_durs: Sequence[Tick],
    job_id: str = 'clustering-0',
    malleable: bool = True,
    nodes_min: int = 1,
    submit_time: Tick = 0,
    payload: Optional[str] = None,
) -> Job:
    """
    Build the clustering-aggregation loop as one hybrid job.

    Every iteration runs k-means, DBSCAN and hierarchical clustering side by
    side on three nodes, solves the aggregation MIS on the QPU and scores the
    result serially. The loop always stops after the fourth iteration.

    Args:
        delta_q: Quantum phase duration in ticks
        classical_durs: Per-iteration (kmeans, dbscan, hierarchical) durations
        serial_durs: Per-iteration silhouette durations
        job_id: Job identifier
        malleable: Whether the job may reconfigure at phase boundaries
        nodes_min: Shrink target for malleable execution
        submit_time: Submission tick
        payload: Optional QUBO payload id for the quantum phases

    Returns:
        Job: 12 phases, [classical, quantum, serial] x 4
    """
    if len(classical_durs) != CLUSTERING_ITERATIONS or len(serial_durs) != CLUSTERING_ITERATIONS:
        raise ScenarioValidationError(
            f"clustering runs exactly {CLUSTERING_ITERATIONS} iterations", 'classical_durations'
        )
    if delta_q <= 0:
        raise ScenarioValidationError(f"must be positive, got {delta_q}", 'delta_q')
    phases: List[Phase] = []
    for iteration, (algorithms, serial) in enumerate(zip(classical_durs, serial_durs)):
        algorithms = tuple(int(d) for d in algorithms)
        if len(algorithms) != len(CLUSTERING_ALGORITHMS) or min(algorithms) <= 0 or serial <= 0:
            raise ScenarioValidationError(
                f"iteration {iteration}: need 3 positive algorithm durations"
                " and a positive serial duration",
                'classical_durations',
            )
        phases.append(Phase.classical(CLUSTERING_NODES, max(algorithms), algorithms))
        phases.append(Phase.quantum(delta_q, payload))
        phases.append(Phase.serial(int(serial)))
    return Job(
        id=job_id,
        phases=tuple(phases),
        submit_time=submit_time,
        nodes_min=nodes_min,
        malleable=malleable,
    )


@dataclass(frozen=True)
class ClusteringObservation:
    """One measured row: mode is 'baseline' or 'malleable'; wall and node-seconds in seconds."""

    mode: str
    delta_q: Tick
    wall: float
    node_seconds: float


MEASURED_CLUSTERING_RUNS: Tuple[ClusteringObservation, ...] = (
    ClusteringObservation('baseline', LONG_DELTA_Q, 1019.58, 3058.74),
    ClusteringObservation('malleable', LONG_DELTA_Q, 1029.06, 1647.75),
    ClusteringObservation('baseline', SHORT_DELTA_Q, 539.44, 1618.33),
    ClusteringObservation('malleable', SHORT_DELTA_Q, 549.60, 1168.29),
)


def _spread(total: Tick, parts: int) -> List[Tick]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def calibrate_clustering(
    observations: Sequence[ClusteringObservation] = MEASURED_CLUSTERING_RUNS,
    reconfig_node_seconds: float = 0.0,
) -> Tuple[List[List[Tick]], List[Tick]]:
    """
    Recover clustering phase durations from measured wall times and node-seconds.

    Solves, in the least-squares sense over all observations, for C3 (total
    3-node clustering time) and C1 (total serial time):

        baseline wall          = C3 + C1 + 4 * delta_q
        baseline node-seconds  = 3 * (C3 + C1 + 4 * delta_q)
        malleable node-seconds = 3 * C3 + C1 + 4 * delta_q + reconfig_node_seconds

    Args:
        observations: Measured rows, at least one baseline and one malleable
        reconfig_node_seconds: Node-seconds attributed to reconfigurations

    Returns:
        tuple: (4 x [kmeans, dbscan, hierarchical] ticks, 4 serial ticks)
    """
    rows, rhs = [], []
    iterations = CLUSTERING_ITERATIONS
    for obs in observations:
        quantum_s = iterations * obs.delta_q / 1000.0
        if obs.mode == 'baseline':
            rows.append([1.0, 1.0])
            rhs.append(obs.wall - quantum_s)
            rows.append([3.0, 3.0])
            rhs.append(obs.node_seconds - CLUSTERING_NODES * quantum_s)
        elif obs.mode == 'malleable':
            rows.append([3.0, 1.0])
            rhs.append(obs.node_seconds - quantum_s - reconfig_node_seconds)
        else:
            raise CalibrationError(f"unknown observation mode {obs.mode!r}")
    if not rows:
        raise CalibrationError('no observations given')
    a, b = np.asarray(rows), np.asarray(rhs)
    solution, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    residuals = a @ solution - b
    if rank < 2:
        raise CalibrationError('need both baseline and malleable observations', residuals)
    c3, c1 = (float(v) for v in solution)
    if c3 <= 0 or c1 <= 0:
        raise CalibrationError(
            f"inconsistent observations: C3={c3:.3f} s, C1={c1:.3f} s", residuals
        )

    per_iteration = _spread(round(c3 * 1000), iterations)
    classical = [
        [max(1, round(c * KMEANS_FRACTION)), max(1, round(c * DBSCAN_FRACTION)), c]
        for c in per_iteration
    ]
    serial = _spread(round(c1 * 1000), iterations)
    if min(serial) <= 0 or min(per_iteration) <= 0:
        raise CalibrationError('calibrated durations round to zero', residuals)
    return classical, serial


class PhaseRecord(BaseModel):
    model_config = ConfigDict(extra='forbid')

    kind: Literal['classical', 'quantum', 'serial']
    duration: PosInt
    nodes: Optional[NonNegInt] = None
    parts: List[PosInt] = Field(default_factory=list)
    payload: Optional[str] = None

    def to_phase(self) -> Phase:
        kind = PhaseKind(self.kind)
        if kind is PhaseKind.QUANTUM:
            nodes = 0 if self.nodes is None else self.nodes
        else:
            nodes = 1 if self.nodes is None else self.nodes
        return Phase(kind, self.duration, nodes, tuple(self.parts), self.payload)

    @classmethod
    def from_phase(cls, phase: Phase) -> 'PhaseRecord':
        return cls(
            kind=phase.kind.value,
            duration=phase.duration,
            nodes=phase.nodes,
            parts=list(phase.parts),
            payload=phase.payload,
        )


class JobRecord(BaseModel):
    model_config = ConfigDict(extra='forbid')

    id: Annotated[str, Field(min_length=1)]
    submit_time: NonNegInt = 0
    nodes_min: PosInt = 1
    malleable: bool = False
    phases: Annotated[List[PhaseRecord], Field(min_length=1)]

    def to_job(self) -> Job:
        phases = []
        for index, record in enumerate(self.phases):
            try:
                phases.append(record.to_phase())
            except ScenarioValidationError as e:
                raise ScenarioValidationError(str(e), f"phases.{index}") from None
        return Job(
            id=self.id,
            phases=tuple(phases),
            submit_time=self.submit_time,
            nodes_min=self.nodes_min,
            malleable=self.malleable,
        )

    @classmethod
    def from_job(cls, job: Job) -> 'JobRecord':
        return cls(
            id=job.id,
            submit_time=job.submit_time,
            nodes_min=job.nodes_min,
            malleable=job.malleable,
            phases=[PhaseRecord.from_phase(p) for p in job.phases],
        )


def error_path(error: Dict[str, Any]) -> str:
    """Dotted field path of one pydantic error entry."""
    return '.'.join(str(part) for part in error['loc'])


def load_trace(path: Union[str, Path]) -> List[Job]:
    """
    Load jobs from a JSON-lines trace, one job record per line.

    Args:
        path: Trace file; blank lines and lines starting with '#' are skipped

    Returns:
        list: Jobs in file order (the engine orders them by submit time)
    """
    jobs: List[Job] = []
    seen = set()
    for lineno, raw in enumerate(Path(path).read_bytes().splitlines(), start=1):
        try:
            stripped = raw.decode('utf-8').strip()
        except UnicodeDecodeError as e:
            raise TraceParseError(f"not valid UTF-8 at byte {e.start}", lineno) from None
        if not stripped or stripped.startswith('#'):
            continue
        try:
            record = JobRecord.model_validate_json(stripped)
        except ValidationError as e:
            first = e.errors()[0]
            raise TraceParseError(first['msg'], lineno, error_path(first) or None) from None
        if record.id in seen:
            raise TraceParseError(f"duplicate job id {record.id!r}", lineno, 'id')
        seen.add(record.id)
        try:
            jobs.append(record.to_job())
        except ScenarioValidationError as e:
            raise TraceParseError(str(e), lineno) from None
    return jobs
