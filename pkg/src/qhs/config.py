"""
Scenario and sweep configuration for qhs

Scenario files are single JSON documents validated by pydantic models that
reject unknown fields. Sweep files wrap a base scenario and a set of axes
whose Cartesian product is enumerated in declaration order.
"""
import copy
import itertools
import json
import logging
from fractions import Fraction
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from qhs.cluster import ClusterConfig
from qhs.errors import ScenarioValidationError
from qhs.payload import DEFAULT_PENALTY, SaSchedule
from qhs.policies import OverheadConfig, PolicyKind, SpeedupModel
from qhs.simulation import Scenario
from qhs.workload import (
    CLUSTERING_NODES,
    LONG_DELTA_Q,
    GcReplicaParams,
    Job,
    JobRecord,
    NonNegInt,
    PosInt,
    calibrate_clustering,
    error_path,
    gen_clustering_aggregation,
    gen_gc_replicas,
    load_trace,
)

logger = logging.getLogger(__name__)

Seed = Annotated[int, Field(strict=True, ge=0, le=(1 << 64) - 1)]

SWEEP_ALIASES = {
    'n_copies': 'workload.gc_replicas.n_copies',
    'R': 'workload.gc_replicas.ratio',
    'policy': 'policy',
    'delta_q': 'workload.clustering.delta_q',
    'copies': 'workload.clustering.copies',
    'seed': 'seed',
    'speedup_model': 'malleable.speedup_model',
}


class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid')


class ClusterSection(_Section):
    n_nodes: PosInt
    n_qpus: PosInt = 1
    n_vqpus: Optional[NonNegInt] = None
    queue_discipline: Literal['fcfs'] = 'fcfs'


class OverheadSection(_Section):
    reconfig_overhead: NonNegInt = 2000
    wms_task_overhead: NonNegInt = 3200
    job_init_overhead: NonNegInt = 0


class GcReplicaSection(_Section):
    n_copies: PosInt
    ratio: Annotated[float, Field(ge=0)] = 0.0
    n_iterations: PosInt = 20
    burst_duration: PosInt = 2000
    base_classical: PosInt = 1000
    jitter_sigma: Annotated[float, Field(ge=0)] = 0.0
    payload: Optional[str] = None


class ClusteringSection(_Section):
    copies: PosInt = 1
    delta_q: PosInt = LONG_DELTA_Q
    classical_durations: Optional[List[List[PosInt]]] = None
    serial_durations: Optional[List[PosInt]] = None
    malleable: bool = True
    nodes_min: PosInt = 1
    payload: Optional[str] = None


class TraceSection(_Section):
    jobs: Optional[List[JobRecord]] = None
    path: Optional[str] = None

    @model_validator(mode='after')
    def _one_source(self) -> 'TraceSection':
        if (self.jobs is None) == (self.path is None):
            raise ValueError('give exactly one of jobs or path')
        return self


class WorkloadSection(_Section):
    gc_replicas: Optional[GcReplicaSection] = None
    clustering: Optional[ClusteringSection] = None
    trace: Optional[TraceSection] = None

    @model_validator(mode='after')
    def _one_kind(self) -> 'WorkloadSection':
        kinds = ('gc_replicas', 'clustering', 'trace')
        chosen = [name for name in kinds if getattr(self, name) is not None]
        if len(chosen) != 1:
            raise ValueError(f"give exactly one of {', '.join(kinds)} (got {len(chosen)})")
        return self


class WorkflowSection(_Section):
    split_clustering_tasks: bool = False


class MalleableSection(_Section):
    speedup_model: SpeedupModel = SpeedupModel.LINEAR


class _PayloadBase(_Section):
    penalty: Annotated[float, Field(gt=1)] = DEFAULT_PENALTY


class ClusteredPayload(_PayloadBase):
    kind: Literal['clustered']
    k: PosInt
    d: PosInt
    m: PosInt
    edge_prob: Annotated[float, Field(ge=0, le=1)] = 0.5
    seed: Seed = 0


class EdgesPayload(_PayloadBase):
    kind: Literal['edges']
    n: PosInt
    edges: List[Tuple[NonNegInt, NonNegInt]] = Field(default_factory=list)


class EdgeListPayload(_PayloadBase):
    kind: Literal['edge_list']
    path: str


class RandomPayload(_PayloadBase):
    kind: Literal['random']
    count: PosInt
    max_n: PosInt = 12
    edge_prob: Annotated[float, Field(ge=0, le=1)] = 0.5
    seed: Seed = 0


PayloadEntry = Annotated[
    Union[ClusteredPayload, EdgesPayload, EdgeListPayload, RandomPayload],
    Field(discriminator='kind'),
]


class SolverSection(_Section):
    t0: Annotated[float, Field(gt=0)] = 1.0
    alpha: Annotated[float, Field(gt=0, lt=1)] = 0.97
    sweeps: PosInt = 500
    restarts: PosInt = 3

    def schedule(self, seed: int) -> SaSchedule:
        return SaSchedule(
            t0=self.t0, alpha=self.alpha, sweeps=self.sweeps, seed=seed, restarts=self.restarts
        )


class ScenarioDocument(_Section):
    cluster: ClusterSection
    policy: PolicyKind
    overheads: OverheadSection = Field(default_factory=OverheadSection)
    workload: WorkloadSection
    seed: Seed = 0
    workflow: WorkflowSection = Field(default_factory=WorkflowSection)
    malleable: MalleableSection = Field(default_factory=MalleableSection)
    payloads: Dict[str, PayloadEntry] = Field(default_factory=dict)
    solver: SolverSection = Field(default_factory=SolverSection)


class SweepDocument(_Section):
    base: Dict[str, Any]
    axes: Dict[str, List[Any]]


def _validation_error(e: ValidationError, prefix: str = '') -> ScenarioValidationError:
    first = e.errors()[0]
    path = '.'.join(p for p in (prefix, error_path(first)) if p)
    return ScenarioValidationError(first['msg'], path or None)


def _read_json(path: Union[str, Path]) -> Any:
    try:
        text = Path(path).read_bytes().decode('utf-8')
    except UnicodeDecodeError as e:
        raise ScenarioValidationError(f"not valid UTF-8 at byte {e.start}", str(path)) from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        message = f"not valid JSON: {e.msg} (line {e.lineno})"
        raise ScenarioValidationError(message, str(path)) from None


def parse_document(data: Any, seed_override: Optional[int] = None) -> ScenarioDocument:
    """
    Validate a raw scenario document.

    Args:
        data: Decoded JSON
        seed_override: Replaces the document's seed when given

    Returns:
        ScenarioDocument: Validated document with defaults filled in
    """
    try:
        document = ScenarioDocument.model_validate(data)
        if seed_override is not None:
            overridden = {**document.model_dump(mode='json'), 'seed': seed_override}
            document = ScenarioDocument.model_validate(overridden)
    except ValidationError as e:
        raise _validation_error(e) from None
    return document


def load_document(path: Union[str, Path], seed_override: Optional[int] = None) -> ScenarioDocument:
    return parse_document(_read_json(path), seed_override)


def _resolve(path: str, base_dir: Optional[Path]) -> Path:
    candidate = Path(path)
    if base_dir is not None and not candidate.is_absolute():
        candidate = base_dir / candidate
    return candidate


def _clustering_jobs(section: ClusteringSection) -> List[Job]:
    classical, serial = section.classical_durations, section.serial_durations
    if classical is None or serial is None:
        calibrated_classical, calibrated_serial = calibrate_clustering()
        classical = calibrated_classical if classical is None else classical
        serial = calibrated_serial if serial is None else serial
    if section.nodes_min > CLUSTERING_NODES:
        raise ScenarioValidationError(
            f"must be <= {CLUSTERING_NODES}, got {section.nodes_min}",
            'workload.clustering.nodes_min',
        )
    try:
        return [
            gen_clustering_aggregation(
                section.delta_q,
                classical,
                serial,
                job_id=f"clustering-{copy_index}",
                malleable=section.malleable,
                nodes_min=section.nodes_min,
                payload=section.payload,
            )
            for copy_index in range(section.copies)
        ]
    except ScenarioValidationError as e:
        raise ScenarioValidationError(str(e), 'workload.clustering') from None


def build_jobs(document: ScenarioDocument, base_dir: Optional[Path] = None) -> List[Job]:
    workload = document.workload
    if workload.gc_replicas is not None:
        section = workload.gc_replicas
        params = GcReplicaParams(
            n_copies=section.n_copies,
            ratio=Fraction(str(section.ratio)),
            n_iterations=section.n_iterations,
            burst_duration=section.burst_duration,
            base_classical=section.base_classical,
            jitter_sigma=section.jitter_sigma,
            seed=document.seed,
            payload=section.payload,
        )
        return gen_gc_replicas(params)
    if workload.clustering is not None:
        return _clustering_jobs(workload.clustering)
    if workload.trace.path is not None:
        return load_trace(_resolve(workload.trace.path, base_dir))
    jobs = []
    for index, record in enumerate(workload.trace.jobs):
        try:
            jobs.append(record.to_job())
        except ScenarioValidationError as e:
            raise ScenarioValidationError(str(e), f"workload.trace.jobs.{index}") from None
    return jobs


def build_scenario(document: ScenarioDocument, base_dir: Optional[Path] = None) -> Scenario:
    """Turn a validated document into a validated Scenario."""
    cluster = ClusterConfig(
        n_nodes=document.cluster.n_nodes,
        n_qpus=document.cluster.n_qpus,
        n_vqpus=document.cluster.n_vqpus,
        queue_discipline=document.cluster.queue_discipline,
    )
    overheads = OverheadConfig(**document.overheads.model_dump())
    scenario = Scenario(
        cluster=cluster,
        policy=document.policy,
        jobs=tuple(build_jobs(document, base_dir)),
        seed=document.seed,
        overheads=overheads,
        split_clustering_tasks=document.workflow.split_clustering_tasks,
        speedup_model=document.malleable.speedup_model,
    )
    return scenario.validate()


def parse_scenario(path: Union[str, Path], seed_override: Optional[int] = None) -> Scenario:
    """
    Load and validate a scenario file.

    Args:
        path: JSON scenario file
        seed_override: Replaces the file's seed (QHS_SEED / --seed)

    Returns:
        Scenario: Validated scenario with every default resolved
    """
    document = load_document(path, seed_override)
    return build_scenario(document, Path(path).parent)


def emit_scenario(scenario: Scenario) -> Dict[str, Any]:
    """
    Fully resolved scenario document, jobs inlined as a trace.

    parse_document(emit_scenario(s)) builds back an equal Scenario.
    """
    jobs = scenario.jobs
    return {
        'cluster': {
            'n_nodes': scenario.cluster.n_nodes,
            'n_qpus': scenario.cluster.n_qpus,
            'n_vqpus': scenario.cluster.n_vqpus,
            'queue_discipline': scenario.cluster.queue_discipline,
        },
        'policy': scenario.policy.value,
        'overheads': {
            'reconfig_overhead': scenario.overheads.reconfig_overhead,
            'wms_task_overhead': scenario.overheads.wms_task_overhead,
            'job_init_overhead': scenario.overheads.job_init_overhead,
        },
        'workload': {
            'trace': {'jobs': [JobRecord.from_job(job).model_dump(mode='json') for job in jobs]},
        },
        'seed': scenario.seed,
        'workflow': {'split_clustering_tasks': scenario.split_clustering_tasks},
        'malleable': {'speedup_model': scenario.speedup_model.value},
    }


def _set_path(document: Dict[str, Any], dotted: str, value: Any) -> None:
    keys = dotted.split('.')
    node = document
    for key in keys[:-1]:
        child = node.get(key)
        if child is None:
            child = node[key] = {}
        elif not isinstance(child, dict):
            raise ScenarioValidationError(f"{key} is not a section", dotted)
        node = child
    node[keys[-1]] = value


def load_sweep(path: Union[str, Path]) -> SweepDocument:
    try:
        return SweepDocument.model_validate(_read_json(path))
    except ValidationError as e:
        raise _validation_error(e) from None


def expand_sweep(sweep: SweepDocument) -> List[Tuple[Dict[str, Any], Dict[str, Any]]]:
    """
    Enumerate the sweep grid.

    Returns:
        list: (axis values, raw scenario document) per cell, in declaration order
    """
    for name, values in sweep.axes.items():
        if not values:
            raise ScenarioValidationError('axis has no values', f"axes.{name}")
    names = list(sweep.axes)
    cells = []
    for combination in itertools.product(*(sweep.axes[name] for name in names)):
        document = copy.deepcopy(sweep.base)
        for name, value in zip(names, combination):
            _set_path(document, SWEEP_ALIASES.get(name, name), value)
        cells.append((dict(zip(names, combination)), document))
    return cells
