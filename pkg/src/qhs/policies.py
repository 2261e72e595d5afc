"""
Resource-allocation policies for qhs

Five strategies over the same engine and cluster model: exclusive
co-scheduling, static offload to a shared QPU queue, vQPU time-multiplexing,
malleable jobs that shrink and grow at phase boundaries, and workflow
decomposition where every task is provisioned only while it runs.
"""
import heapq
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

import networkx as nx

from qhs.cluster import (
    AllocationLedger,
    ClusterConfig,
    Grant,
    NodePool,
    NodeRequest,
    QpuAccess,
    QpuBroker,
    QpuQueueEntry,
    VqpuPool,
)
from qhs.core import Engine, Event, EventKind
from qhs.errors import InternalConsistencyError, ScenarioValidationError
from qhs.workload import Job, Phase, PhaseKind

logger = logging.getLogger(__name__)

Tick = int

LOCATIONS = ('classical', 'quantum')


class PolicyKind(str, Enum):
    COSCHEDULED = 'coscheduled'
    STATIC_OFFLOAD = 'static_offload'
    VQPU = 'vqpu'
    MALLEABLE = 'malleable'
    WORKFLOW = 'workflow'


@dataclass(frozen=True)
class OverheadConfig:
    """Fixed costs in ticks.

    One reconfiguration of a malleable job, one workflow task submission, and
    the start-up of every job.
    """

    reconfig_overhead: Tick = 2000
    wms_task_overhead: Tick = 3200
    job_init_overhead: Tick = 0

    def __post_init__(self):
        for name in ('reconfig_overhead', 'wms_task_overhead', 'job_init_overhead'):
            if getattr(self, name) < 0:
                value = getattr(self, name)
                raise ScenarioValidationError(f"must be >= 0, got {value}", f"overheads.{name}")

    @classmethod
    def zero(cls) -> 'OverheadConfig':
        return cls(0, 0, 0)


def moldable_duration(base: Tick, nodes_req: int, nodes_granted: int) -> Tick:
    """
    Duration of a classical phase run on fewer nodes than requested.

    Linear speedup: base x nodes_req / nodes_granted, rounded up to a whole tick.
    """
    if nodes_granted < 1:
        raise InternalConsistencyError('a classical phase cannot run on zero nodes')
    if nodes_granted > nodes_req:
        raise InternalConsistencyError(
            f"granted {nodes_granted} nodes for a {nodes_req}-node phase"
        )
    return -(-base * nodes_req // nodes_granted)


class SpeedupModel(str, Enum):
    """How a malleable classical phase stretches when it gets fewer nodes than it asked for."""

    LINEAR = 'linear'
    PARTS = 'parts'


def packed_duration(parts: Sequence[Tick], nodes_granted: int) -> Tick:
    """
    Makespan of independent 1-node codes packed onto the granted nodes.

    Longest code first, each onto the least-loaded node (lowest index on ties).
    """
    if nodes_granted < 1:
        raise InternalConsistencyError('a classical phase cannot run on zero nodes')
    loads = [(0, node) for node in range(nodes_granted)]
    for part in sorted(parts, reverse=True):
        load, node = heapq.heappop(loads)
        heapq.heappush(loads, (load + part, node))
    return max(load for load, _ in loads)


def shrunk_duration(phase: Phase, nodes_granted: int, model: SpeedupModel) -> Tick:
    """Duration of a classical phase on nodes_granted <= phase.nodes under the given model."""
    if model is SpeedupModel.PARTS and phase.parts:
        if nodes_granted > phase.nodes:
            raise InternalConsistencyError(
                f"granted {nodes_granted} nodes for a {phase.nodes}-node phase"
            )
        return packed_duration(phase.parts, nodes_granted)
    return moldable_duration(phase.duration, phase.nodes, nodes_granted)


@dataclass(frozen=True)
class ResourcePlan:
    """How a job acquires and holds resources.

    `targets` holds the node count wanted at each phase boundary; it is empty
    when the initial allocation is kept unchanged until the job ends.
    """

    job_id: str
    initial: NodeRequest
    access: QpuAccess
    lock: bool = False
    token: bool = False
    targets: Tuple[int, ...] = ()


def _rigid_request(job: Job) -> NodeRequest:
    return NodeRequest.rigid(job.id, 0, max(1, job.max_nodes))


def plan_coscheduled(job: Job) -> ResourcePlan:
    return ResourcePlan(job.id, _rigid_request(job), QpuAccess.EXCLUSIVE, lock=True)


def plan_static_offload(job: Job) -> ResourcePlan:
    return ResourcePlan(job.id, _rigid_request(job), QpuAccess.SHARED)


def plan_vqpu(job: Job) -> ResourcePlan:
    return ResourcePlan(job.id, _rigid_request(job), QpuAccess.VQPU, token=True)


def plan_malleable(job: Job) -> ResourcePlan:
    """
    Shrink to nodes_min for quantum and serial phases, grow back for classical ones.

    Jobs not flagged malleable run exactly as under static offload.
    """
    if not job.malleable:
        return plan_static_offload(job)
    targets = tuple(
        max(job.nodes_min, phase.nodes) if phase.kind is PhaseKind.CLASSICAL else job.nodes_min
        for phase in job.phases
    )
    initial = NodeRequest(job.id, 0, job.nodes_min, targets[0], moldable=True)
    return ResourcePlan(job.id, initial, QpuAccess.SHARED, targets=targets)


@dataclass(frozen=True)
class WorkflowTask:
    index: int
    name: str
    kind: PhaseKind
    duration: Tick
    nodes: int
    payload: Optional[str] = None

    @property
    def location(self) -> str:
        return 'quantum' if self.kind is PhaseKind.QUANTUM else 'classical'


@dataclass
class WorkflowSpec:
    """A job as a task graph.

    Steps are wired through ports: every step feeds one output port and every
    dependency runs from a port into a consuming step, giving a directed
    bipartite graph. `mapping` assigns each step to exactly one location.
    """

    job_id: str
    steps: Tuple[WorkflowTask, ...]
    deps: Tuple[Tuple[int, int], ...]
    mapping: Dict[int, str]
    graph: nx.DiGraph = field(init=False, repr=False)

    def __post_init__(self):
        graph = nx.DiGraph()
        for step in self.steps:
            graph.add_node(('step', step.index), bipartite=0)
        for source, target in self.deps:
            if not (0 <= source < len(self.steps) and 0 <= target < len(self.steps)):
                raise ScenarioValidationError(
                    f"dependency {source}->{target} names an unknown step", 'workflow'
                )
            graph.add_node(('port', source), bipartite=1)
            graph.add_edge(('step', source), ('port', source))
            graph.add_edge(('port', source), ('step', target))
        if not nx.is_directed_acyclic_graph(graph):
            raise ScenarioValidationError(
                f"workflow for {self.job_id} has cyclic dependencies", 'workflow'
            )
        for step in self.steps:
            location = self.mapping.get(step.index)
            if location not in LOCATIONS:
                raise ScenarioValidationError(
                    f"step {step.index} is not mapped to a location", 'workflow'
                )
            if location != step.location:
                raise ScenarioValidationError(
                    f"step {step.index} is a {step.kind.value} task mapped to {location}",
                    'workflow',
                )
        self.graph = graph
        self._preds: Dict[int, List[int]] = {step.index: [] for step in self.steps}
        self._succs: Dict[int, List[int]] = {step.index: [] for step in self.steps}
        for source, target in sorted(set(self.deps)):
            self._preds[target].append(source)
            self._succs[source].append(target)

    def predecessors(self, index: int) -> List[int]:
        return self._preds[index]

    def successors(self, index: int) -> List[int]:
        return self._succs[index]

    def roots(self) -> List[int]:
        return [i for i, preds in self._preds.items() if not preds]

    @property
    def quantum_candidates(self) -> Tuple[int, ...]:
        return tuple(i for i, location in sorted(self.mapping.items()) if location == 'quantum')

    def order(self) -> List[int]:
        """Task indices in a deterministic topological order."""
        ordered = nx.lexicographical_topological_sort(self.graph)
        steps = [node for node in ordered if node[0] == 'step']
        return [index for _, index in steps]


def plan_workflow(job: Job, split_clustering_tasks: bool = False) -> WorkflowSpec:
    """
    Turn each phase into a task that depends on the phase before it.

    With split_clustering_tasks, a classical phase listing per-code `parts`
    becomes one 1-node task per part; all of them must finish before the next
    phase starts.
    """
    steps: List[WorkflowTask] = []
    deps: List[Tuple[int, int]] = []
    previous: List[int] = []
    for phase_index, phase in enumerate(job.phases):
        if split_clustering_tasks and phase.kind is PhaseKind.CLASSICAL and len(phase.parts) > 1:
            shapes = [
                (f"{job.id}:{phase_index}.{k}", part, 1) for k, part in enumerate(phase.parts)
            ]
        else:
            shapes = [(f"{job.id}:{phase_index}", phase.duration, phase.nodes)]
        group = []
        for name, duration, nodes in shapes:
            task = WorkflowTask(len(steps), name, phase.kind, duration, nodes, phase.payload)
            steps.append(task)
            group.append(task.index)
        deps.extend((p, g) for p in previous for g in group)
        previous = group
    mapping = {task.index: task.location for task in steps}
    return WorkflowSpec(job.id, tuple(steps), tuple(deps), mapping)


PLANNERS: Dict[PolicyKind, Callable[[Job], ResourcePlan]] = {
    PolicyKind.COSCHEDULED: plan_coscheduled,
    PolicyKind.STATIC_OFFLOAD: plan_static_offload,
    PolicyKind.VQPU: plan_vqpu,
    PolicyKind.MALLEABLE: plan_malleable,
}


@dataclass
class JobState:
    job: Job
    order: int
    qpu: int
    plan: Optional[ResourcePlan] = None
    workflow: Optional[WorkflowSpec] = None
    waiting: str = 'submission'
    done_tasks: Set[int] = field(default_factory=set)
    finished: bool = False


class PolicyHandler:
    """Event handlers for one scenario run under a single policy."""

    def __init__(
        self,
        policy: PolicyKind,
        cluster: ClusterConfig,
        jobs: Sequence[Job],
        overheads: OverheadConfig = OverheadConfig(),
        split_clustering_tasks: bool = False,
        speedup_model: SpeedupModel = SpeedupModel.LINEAR,
    ):
        self.policy = policy
        self.overheads = overheads
        self.split_clustering_tasks = split_clustering_tasks
        self.speedup_model = speedup_model
        self.ledger = AllocationLedger()
        self.pool = NodePool(cluster.n_nodes, self.ledger)
        self.vqpus: Optional[VqpuPool] = None
        if policy is PolicyKind.VQPU:
            self.vqpus = VqpuPool(cluster.vqpu_pool_size(len(jobs)), self.ledger)
        self.broker = QpuBroker(cluster.n_qpus, self.ledger, self.vqpus)
        self.states: Dict[str, JobState] = {
            job.id: JobState(job, order, order % cluster.n_qpus) for order, job in enumerate(jobs)
        }
        self._dispatch = {
            EventKind.JOB_SUBMIT: self._on_submit,
            EventKind.ALLOCATION_GRANTED: self._on_granted,
            EventKind.PHASE_START: self._on_phase_start,
            EventKind.PHASE_END: self._on_phase_end,
            EventKind.QPU_ENQUEUE: self._on_enqueue,
            EventKind.QPU_SERVICE_START: self._on_service_start,
            EventKind.QPU_SERVICE_END: self._on_service_end,
            EventKind.RECONFIGURE_START: self._on_reconfigure_start,
            EventKind.RECONFIGURE_END: self._on_reconfigure_end,
            EventKind.TASK_SUBMIT: self._on_task_submit,
            EventKind.JOB_END: self._on_job_end,
        }

    def start(self, engine: Engine) -> None:
        for state in self.states.values():
            engine.schedule(state.job.submit_time, EventKind.JOB_SUBMIT, state.job.id)

    def handle(self, engine: Engine, event: Event) -> None:
        state = self.states.get(event.job_id)
        if state is None or state.finished:
            raise InternalConsistencyError(
                f"{event.kind.value} for unknown or finished job {event.job_id}"
            )
        self._dispatch[event.kind](engine, event, state)

    def blocked(self) -> Dict[str, str]:
        return {job_id: s.waiting for job_id, s in self.states.items() if not s.finished}

    # Acquisition

    def _on_submit(self, engine: Engine, event: Event, state: JobState) -> None:
        job = state.job
        if self.policy is PolicyKind.WORKFLOW:
            state.workflow = plan_workflow(job, self.split_clustering_tasks)
            ready = engine.now + self.overheads.job_init_overhead
            for index in state.workflow.roots():
                submit_at = ready + self.overheads.wms_task_overhead
                engine.schedule(submit_at, EventKind.TASK_SUBMIT, job.id, index)
            state.waiting = 'task submission'
            return

        state.plan = PLANNERS[self.policy](job)
        if state.plan.lock:
            qpu = self.broker.acquire_lock(job.id)
            if qpu is None:
                state.waiting = 'QPU lock'
                return
            state.qpu = qpu
        if state.plan.token and self.vqpus.acquire(job.id, engine.now) is None:
            state.waiting = 'vQPU token'
            return
        self._request_nodes(engine, state, state.plan.initial)

    def _request_nodes(self, engine: Engine, state: JobState, req: NodeRequest) -> None:
        grant = self.pool.try_allocate(req, engine.now)
        if grant is None:
            state.waiting = f"{req.nodes_min} node(s) for task {req.task_index}"
            return
        self._grant_all(engine, [(req, grant)])

    def _grant_all(self, engine: Engine, grants: List[Tuple[NodeRequest, Grant]]) -> None:
        for req, grant in grants:
            engine.schedule(
                engine.now, EventKind.ALLOCATION_GRANTED, req.job_id, req.task_index, grant.nodes
            )

    def _on_granted(self, engine: Engine, event: Event, state: JobState) -> None:
        state.waiting = 'running'
        if state.workflow is not None:
            engine.schedule(engine.now, EventKind.PHASE_START, state.job.id, event.index)
        else:
            start = engine.now + self.overheads.job_init_overhead
            engine.schedule(start, EventKind.PHASE_START, state.job.id, 0)

    def _on_task_submit(self, engine: Engine, event: Event, state: JobState) -> None:
        task = state.workflow.steps[event.index]
        if task.kind is PhaseKind.QUANTUM:
            engine.schedule(engine.now, EventKind.PHASE_START, state.job.id, task.index)
        else:
            request = NodeRequest.rigid(state.job.id, task.index, task.nodes)
            self._request_nodes(engine, state, request)

    # Phases

    def _on_phase_start(self, engine: Engine, event: Event, state: JobState) -> None:
        index = event.index
        if state.workflow is not None:
            task = state.workflow.steps[index]
            if task.kind is PhaseKind.QUANTUM:
                engine.schedule(engine.now, EventKind.QPU_ENQUEUE, state.job.id, index, state.qpu)
            else:
                end = engine.now + task.duration
                engine.schedule(end, EventKind.PHASE_END, state.job.id, index)
            return

        targets = state.plan.targets
        if targets and index > 0:
            held = self.pool.holding(state.job.id)
            target = targets[index]
            if target > held:
                gained = self.pool.expand(state.job.id, target - held, engine.now)
                if gained:
                    engine.schedule(
                        engine.now, EventKind.RECONFIGURE_START, state.job.id, index, held + gained
                    )
                    return
            elif target < held:
                engine.schedule(
                    engine.now, EventKind.RECONFIGURE_START, state.job.id, index, target
                )
                return
        self._run_phase(engine, state, index)

    def _run_phase(self, engine: Engine, state: JobState, index: int) -> None:
        phase = state.job.phases[index]
        if phase.kind is PhaseKind.QUANTUM:
            engine.schedule(engine.now, EventKind.QPU_ENQUEUE, state.job.id, index, state.qpu)
            return
        duration = phase.duration
        if state.plan.targets:
            held = self.pool.holding(state.job.id)
            duration = shrunk_duration(phase, min(held, phase.nodes), self.speedup_model)
        engine.schedule(engine.now + duration, EventKind.PHASE_END, state.job.id, index)

    def _on_reconfigure_start(self, engine: Engine, event: Event, state: JobState) -> None:
        state.waiting = 'reconfiguring'
        engine.schedule(
            engine.now + self.overheads.reconfig_overhead,
            EventKind.RECONFIGURE_END,
            state.job.id,
            event.index,
            event.value,
        )

    def _on_reconfigure_end(self, engine: Engine, event: Event, state: JobState) -> None:
        held = self.pool.holding(state.job.id)
        if event.value < held:
            self._grant_all(engine, self.pool.release(state.job.id, held - event.value, engine.now))
        state.waiting = 'running'
        self._run_phase(engine, state, event.index)

    def _on_phase_end(self, engine: Engine, event: Event, state: JobState) -> None:
        job_id = state.job.id
        if state.workflow is None:
            if event.index + 1 < len(state.job.phases):
                engine.schedule(engine.now, EventKind.PHASE_START, job_id, event.index + 1)
            else:
                engine.schedule(engine.now, EventKind.JOB_END, job_id)
            return

        task = state.workflow.steps[event.index]
        if task.kind is not PhaseKind.QUANTUM:
            self._grant_all(engine, self.pool.release(job_id, task.nodes, engine.now))
        state.done_tasks.add(task.index)
        if len(state.done_tasks) == len(state.workflow.steps):
            engine.schedule(engine.now, EventKind.JOB_END, job_id)
            return
        submit_at = engine.now + self.overheads.wms_task_overhead
        for successor in state.workflow.successors(task.index):
            if state.done_tasks.issuperset(state.workflow.predecessors(successor)):
                engine.schedule(submit_at, EventKind.TASK_SUBMIT, job_id, successor)
        state.waiting = 'task submission'

    # QPU

    def _on_enqueue(self, engine: Engine, event: Event, state: JobState) -> None:
        if state.workflow is not None:
            phase_duration = state.workflow.steps[event.index].duration
        else:
            phase_duration = state.job.phases[event.index].burst.duration
        access = state.plan.access if state.plan is not None else QpuAccess.SHARED
        entry = QpuQueueEntry(state.job.id, phase_duration, engine.now, phase_index=event.index)
        position, _ = self.broker.enqueue(event.value, entry, access)
        state.waiting = f"QPU {event.value} queue position {position}"
        self._serve(engine, event.value)

    def _serve(self, engine: Engine, qpu: int) -> None:
        entry = self.broker.start_next(qpu, engine.now)
        if entry is not None:
            engine.schedule(
                engine.now, EventKind.QPU_SERVICE_START, entry.job_id, entry.phase_index, qpu
            )

    def _on_service_start(self, engine: Engine, event: Event, state: JobState) -> None:
        current = self.broker.qpus[event.value].current
        if current is None or current.job_id != state.job.id:
            raise InternalConsistencyError(f"QPU {event.value} is not serving {state.job.id}")
        state.waiting = 'running'
        engine.schedule(
            engine.now + current.duration,
            EventKind.QPU_SERVICE_END,
            state.job.id,
            event.index,
            event.value,
        )

    def _on_service_end(self, engine: Engine, event: Event, state: JobState) -> None:
        self.broker.finish(event.value, engine.now)
        engine.schedule(engine.now, EventKind.PHASE_END, state.job.id, event.index)
        self._serve(engine, event.value)

    # Completion

    def _on_job_end(self, engine: Engine, event: Event, state: JobState) -> None:
        job_id = state.job.id
        state.finished = True
        state.waiting = 'finished'
        held = self.pool.holding(job_id)
        if held:
            self._grant_all(engine, self.pool.release(job_id, held, engine.now))
        if state.plan is None:
            return
        if state.plan.lock:
            for waiter, qpu in self.broker.release_lock(job_id):
                waiting = self.states[waiter]
                waiting.qpu = qpu
                self._request_nodes(engine, waiting, waiting.plan.initial)
        if state.plan.token:
            handoff = self.vqpus.release(self.vqpus.token_of(job_id), engine.now)
            if handoff is not None:
                waiting = self.states[handoff[0]]
                self._request_nodes(engine, waiting, waiting.plan.initial)
        logger.debug(f"{job_id} finished at t={engine.now}")
