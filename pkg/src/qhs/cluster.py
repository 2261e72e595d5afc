"""
Cluster resource model for qhs

A classical node pool with a strict FCFS request queue, physical QPUs with
FIFO circuit queues and an optional exclusive lock, a vQPU token pool, and
the allocation ledger that everything is accounted against.
"""
import logging
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Deque, Dict, Iterable, List, Optional, Tuple

from qhs.errors import (
    AccountingError,
    InternalConsistencyError,
    PolicyViolationError,
    ScenarioValidationError,
)

logger = logging.getLogger(__name__)

Tick = int


@dataclass(frozen=True)
class ClusterConfig:
    """Cluster shape. n_vqpus is only read under the vQPU policy; None means one per job."""

    n_nodes: int
    n_qpus: int = 1
    n_vqpus: Optional[int] = None
    queue_discipline: str = 'fcfs'

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ScenarioValidationError(f"must be >= 1, got {self.n_nodes}", 'cluster.n_nodes')
        if self.n_qpus < 1:
            raise ScenarioValidationError(f"must be >= 1, got {self.n_qpus}", 'cluster.n_qpus')
        if self.n_vqpus is not None and self.n_vqpus < 0:
            raise ScenarioValidationError(f"must be >= 0, got {self.n_vqpus}", 'cluster.n_vqpus')
        if self.queue_discipline != 'fcfs':
            raise ScenarioValidationError('only fcfs is supported', 'cluster.queue_discipline')

    def vqpu_pool_size(self, n_jobs: int) -> int:
        """Tokens in the vQPU pool; the default of one per job never drops below one."""
        return max(1, n_jobs) if self.n_vqpus is None else self.n_vqpus


@dataclass(frozen=True)
class NodeRequest:
    job_id: str
    task_index: int
    nodes_min: int
    nodes_max: int
    moldable: bool = False

    def __post_init__(self):
        if self.nodes_min < 1 or self.nodes_max < self.nodes_min:
            raise InternalConsistencyError(
                f"bad node request for {self.job_id}: min={self.nodes_min} max={self.nodes_max}"
            )
        if not self.moldable and self.nodes_min != self.nodes_max:
            raise InternalConsistencyError(f"rigid request for {self.job_id} must have min == max")

    @classmethod
    def rigid(cls, job_id: str, task_index: int, nodes: int) -> 'NodeRequest':
        return cls(job_id, task_index, nodes, nodes, False)


@dataclass(frozen=True)
class Grant:
    nodes: int


@dataclass(frozen=True)
class QpuQueueEntry:
    job_id: str
    duration: Tick
    enqueue_time: Tick
    seq: int = 0
    phase_index: int = 0


@dataclass(frozen=True)
class HoldInterval:
    job_id: str
    nodes: int
    start: Tick
    end: Tick


@dataclass(frozen=True)
class BusyInterval:
    qpu: int
    job_id: str
    start: Tick
    end: Tick
    enqueue_time: Tick
    enqueue_seq: int


@dataclass(frozen=True)
class TokenInterval:
    token: int
    job_id: str
    start: Tick
    end: Tick


class AllocationLedger:
    """Per-job node holdings over time, QPU busy intervals and vQPU token leases."""

    def __init__(self):
        self.holds: List[HoldInterval] = []
        self.busy: List[BusyInterval] = []
        self.tokens: List[TokenInterval] = []
        self._open: Dict[str, Tuple[int, Tick]] = {}

    def record_hold(self, job_id: str, nodes: int, now: Tick) -> None:
        """Close the job's current interval at `now` and open one at the new count."""
        current = self._open.pop(job_id, None)
        if current is not None:
            held, start = current
            if now < start:
                raise AccountingError(f"interval for {job_id} would end before it starts")
            if now > start:
                self.holds.append(HoldInterval(job_id, held, start, now))
        if nodes > 0:
            self._open[job_id] = (nodes, now)

    def record_busy(self, interval: BusyInterval) -> None:
        self.busy.append(interval)

    def record_token(self, interval: TokenInterval) -> None:
        self.tokens.append(interval)

    def open_jobs(self) -> List[str]:
        return sorted(self._open)

    def intervals(self, job_filter: Optional[Iterable[str]] = None) -> List[HoldInterval]:
        wanted = None if job_filter is None else set(job_filter)
        return [h for h in self.holds if wanted is None or h.job_id in wanted]

    def node_ticks(self, job_filter: Optional[Iterable[str]] = None) -> int:
        wanted = None if job_filter is None else set(job_filter)
        still_open = [j for j in self._open if wanted is None or j in wanted]
        if still_open:
            raise AccountingError(f"open allocation intervals for {', '.join(sorted(still_open))}")
        return sum(h.nodes * (h.end - h.start) for h in self.intervals(wanted))


def node_seconds(ledger: AllocationLedger, job_filter: Optional[Iterable[str]] = None) -> float:
    """
    Classical resource usage: sum of nodes x interval length, in node-seconds.

    Args:
        ledger: Completed ledger; every interval must be closed
        job_filter: Restrict to these job ids (all jobs when None)

    Returns:
        float: node-seconds
    """
    return ledger.node_ticks(job_filter) / 1000


class NodePool:
    """Classical nodes handed out first-come-first-served, without backfill."""

    def __init__(self, n_nodes: int, ledger: AllocationLedger):
        self.n_nodes = n_nodes
        self.free = n_nodes
        self.held: Dict[str, int] = {}
        self.waiting: Deque[NodeRequest] = deque()
        self.ledger = ledger

    def holding(self, job_id: str) -> int:
        return self.held.get(job_id, 0)

    def _grant_size(self, req: NodeRequest) -> Optional[int]:
        if req.moldable:
            return min(self.free, req.nodes_max) if self.free >= req.nodes_min else None
        return req.nodes_max if self.free >= req.nodes_max else None

    def _hold(self, job_id: str, nodes: int, now: Tick) -> None:
        self.free -= nodes
        self.held[job_id] = self.held.get(job_id, 0) + nodes
        self.ledger.record_hold(job_id, self.held[job_id], now)

    def try_allocate(self, req: NodeRequest, now: Tick) -> Optional[Grant]:
        """
        Grant a request immediately or queue it.

        A request is only granted when nobody is queued ahead of it.

        Args:
            req: Node request
            now: Current tick

        Returns:
            Grant or None when the request was queued
        """
        if any(w.job_id == req.job_id and w.task_index == req.task_index for w in self.waiting):
            raise InternalConsistencyError(f"{req.job_id} task {req.task_index} is already queued")
        if not self.waiting:
            size = self._grant_size(req)
            if size is not None:
                self._hold(req.job_id, size, now)
                return Grant(size)
        self.waiting.append(req)
        return None

    def expand(self, job_id: str, extra: int, now: Tick) -> int:
        """Best-effort growth of a running job; never overtakes queued requests."""
        if extra <= 0 or self.waiting or self.free == 0:
            return 0
        taken = min(self.free, extra)
        self._hold(job_id, taken, now)
        return taken

    def release(self, job_id: str, nodes: int, now: Tick) -> List[Tuple[NodeRequest, Grant]]:
        """
        Return nodes to the pool and grant queued requests in FCFS order.

        Returns:
            list: (request, grant) pairs unblocked by this release, in queue order
        """
        held = self.held.get(job_id)
        if held is None:
            raise InternalConsistencyError(f"release by {job_id}, which holds no nodes")
        if nodes < 1 or nodes > held:
            raise InternalConsistencyError(f"{job_id} releases {nodes} nodes but holds {held}")
        remaining = held - nodes
        if remaining:
            self.held[job_id] = remaining
        else:
            del self.held[job_id]
        self.free += nodes
        self.ledger.record_hold(job_id, remaining, now)

        granted = []
        while self.waiting:
            size = self._grant_size(self.waiting[0])
            if size is None:
                break
            req = self.waiting.popleft()
            self._hold(req.job_id, size, now)
            granted.append((req, Grant(size)))
        return granted


class VqpuPool:
    """Time-share leases on the physical QPUs; waiters are served FCFS."""

    def __init__(self, size: int, ledger: AllocationLedger):
        if size < 1:
            raise ScenarioValidationError(
                'the vQPU policy needs at least one vQPU', 'cluster.n_vqpus'
            )
        self.size = size
        self.ledger = ledger
        self.free_tokens = list(range(size))
        self.holders: Dict[str, Tuple[int, Tick]] = {}
        self.waiting: Deque[str] = deque()

    def token_of(self, job_id: str) -> Optional[int]:
        held = self.holders.get(job_id)
        return None if held is None else held[0]

    def _lease(self, job_id: str, now: Tick) -> int:
        token = self.free_tokens.pop(0)
        self.holders[job_id] = (token, now)
        return token

    def acquire(self, job_id: str, now: Tick) -> Optional[int]:
        if job_id in self.holders or job_id in self.waiting:
            raise InternalConsistencyError(f"{job_id} acquires a second vQPU token")
        if self.free_tokens and not self.waiting:
            return self._lease(job_id, now)
        self.waiting.append(job_id)
        return None

    def release(self, token: int, now: Tick) -> Optional[Tuple[str, int]]:
        """Return a token; the next waiter, if any, receives one at once."""
        owner = next((job for job, (t, _) in self.holders.items() if t == token), None)
        if owner is None:
            raise InternalConsistencyError(f"vQPU token {token} is not outstanding")
        _, start = self.holders.pop(owner)
        self.ledger.record_token(TokenInterval(token, owner, start, now))
        self.free_tokens.append(token)
        self.free_tokens.sort()
        if self.waiting:
            job_id = self.waiting.popleft()
            return job_id, self._lease(job_id, now)
        return None


class QpuAccess(str, Enum):
    SHARED = 'shared'
    VQPU = 'vqpu'
    EXCLUSIVE = 'exclusive'


class _Qpu:
    def __init__(self, index: int):
        self.index = index
        self.queue: Deque[QpuQueueEntry] = deque()
        self.current: Optional[QpuQueueEntry] = None
        self.started: Tick = 0
        self.locked_by: Optional[str] = None


class QpuBroker:
    """Physical QPUs, each serving its own FIFO queue without preemption."""

    def __init__(self, n_qpus: int, ledger: AllocationLedger, vqpus: Optional[VqpuPool] = None):
        self.qpus = [_Qpu(i) for i in range(n_qpus)]
        self.ledger = ledger
        self.vqpus = vqpus
        self.lock_waiting: Deque[str] = deque()
        self._seq = 0

    def lock_of(self, job_id: str) -> Optional[int]:
        return next((q.index for q in self.qpus if q.locked_by == job_id), None)

    def acquire_lock(self, job_id: str) -> Optional[int]:
        """Exclusive hold on the lowest-indexed free QPU, or None when queued."""
        if self.lock_of(job_id) is not None or job_id in self.lock_waiting:
            raise InternalConsistencyError(f"{job_id} acquires a second QPU lock")
        if not self.lock_waiting:
            for qpu in self.qpus:
                if qpu.locked_by is None:
                    qpu.locked_by = job_id
                    return qpu.index
        self.lock_waiting.append(job_id)
        return None

    def release_lock(self, job_id: str) -> List[Tuple[str, int]]:
        index = self.lock_of(job_id)
        if index is None:
            raise InternalConsistencyError(f"{job_id} releases a QPU lock it does not hold")
        qpu = self.qpus[index]
        if qpu.current is not None or qpu.queue:
            raise InternalConsistencyError(f"{job_id} releases QPU {index} with circuits pending")
        qpu.locked_by = None
        granted = []
        while self.lock_waiting:
            free = next((q for q in self.qpus if q.locked_by is None), None)
            if free is None:
                break
            waiter = self.lock_waiting.popleft()
            free.locked_by = waiter
            granted.append((waiter, free.index))
        return granted

    def enqueue(
        self, qpu_index: int, entry: QpuQueueEntry, access: QpuAccess
    ) -> Tuple[int, QpuQueueEntry]:
        """
        Append a circuit burst to a QPU's FIFO queue.

        Args:
            qpu_index: Target QPU
            entry: Burst to queue; its seq is overwritten with the global enqueue order
            access: Access mode the job's policy grants

        Returns:
            tuple: (position counting the burst in service, stamped entry)
        """
        qpu = self.qpus[qpu_index]
        if access is QpuAccess.EXCLUSIVE and qpu.locked_by != entry.job_id:
            raise PolicyViolationError(
                f"{entry.job_id} enqueues on QPU {qpu_index} without its lock"
            )
        has_token = self.vqpus is not None and self.vqpus.token_of(entry.job_id) is not None
        if access is QpuAccess.VQPU and not has_token:
            raise PolicyViolationError(f"{entry.job_id} enqueues without a vQPU token")
        if access is QpuAccess.SHARED and qpu.locked_by is not None:
            raise PolicyViolationError(
                f"{entry.job_id} enqueues on QPU {qpu_index}, locked by {qpu.locked_by}"
            )
        stamped = QpuQueueEntry(
            entry.job_id, entry.duration, entry.enqueue_time, self._seq, entry.phase_index
        )
        self._seq += 1
        position = len(qpu.queue) + (1 if qpu.current is not None else 0)
        qpu.queue.append(stamped)
        return position, stamped

    def start_next(self, qpu_index: int, now: Tick) -> Optional[QpuQueueEntry]:
        """Begin serving the queue head if the QPU is idle."""
        qpu = self.qpus[qpu_index]
        if qpu.current is not None or not qpu.queue:
            return None
        qpu.current = qpu.queue.popleft()
        qpu.started = now
        return qpu.current

    def finish(self, qpu_index: int, now: Tick) -> QpuQueueEntry:
        qpu = self.qpus[qpu_index]
        entry = qpu.current
        if entry is None or qpu.started + entry.duration != now:
            raise InternalConsistencyError(
                f"QPU {qpu_index} finishes a burst it is not serving at t={now}"
            )
        self.ledger.record_busy(
            BusyInterval(qpu_index, entry.job_id, qpu.started, now, entry.enqueue_time, entry.seq)
        )
        qpu.current = None
        return entry


def audit_ledger(ledger: AllocationLedger, n_nodes: int, n_vqpus: Optional[int] = None) -> None:
    """
    Check a completed ledger against the cluster's resource bounds.

    Verifies that every interval is closed, that held nodes never exceed
    n_nodes, that busy intervals on each QPU are disjoint and served in
    enqueue order, and that outstanding vQPU leases never exceed n_vqpus.

    Raises:
        AccountingError: on the first violated bound
    """
    if ledger.open_jobs():
        raise AccountingError(f"open allocation intervals for {', '.join(ledger.open_jobs())}")

    changes = sorted(
        [(h.start, 1, h.nodes) for h in ledger.holds] + [(h.end, 0, -h.nodes) for h in ledger.holds]
    )
    in_use = 0
    for time, _, delta in changes:
        in_use += delta
        if in_use > n_nodes:
            raise AccountingError(f"{in_use} nodes held at t={time} on a {n_nodes}-node cluster")

    by_qpu: Dict[int, List[BusyInterval]] = {}
    for interval in ledger.busy:
        by_qpu.setdefault(interval.qpu, []).append(interval)
    for qpu, intervals in by_qpu.items():
        intervals.sort(key=lambda b: (b.start, b.end))
        for prev, nxt in zip(intervals, intervals[1:]):
            if nxt.start < prev.end:
                raise AccountingError(f"QPU {qpu} serves overlapping bursts at t={nxt.start}")
            if nxt.enqueue_seq < prev.enqueue_seq:
                raise AccountingError(
                    f"QPU {qpu} served {nxt.job_id} out of FIFO order at t={nxt.start}"
                )

    if n_vqpus is not None:
        leases = sorted(
            [(t.start, 1, 1) for t in ledger.tokens] + [(t.end, 0, -1) for t in ledger.tokens]
        )
        outstanding = 0
        for time, _, delta in leases:
            outstanding += delta
            if outstanding > n_vqpus:
                raise AccountingError(f"{outstanding} vQPU tokens outstanding at t={time}")
