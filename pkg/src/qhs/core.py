"""
Discrete-event engine for qhs

Integer-millisecond clock, an event queue totally ordered by (time, seq) and
the loop that feeds events to the active policy handler.
"""
import heapq
import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Protocol, Tuple

from qhs.cluster import AllocationLedger
from qhs.errors import DeadlockError, InternalConsistencyError
from qhs.workload import Job

logger = logging.getLogger(__name__)

Tick = int


class EventKind(str, Enum):
    JOB_SUBMIT = 'JobSubmit'
    ALLOCATION_GRANTED = 'AllocationGranted'
    PHASE_START = 'PhaseStart'
    PHASE_END = 'PhaseEnd'
    QPU_ENQUEUE = 'QpuEnqueue'
    QPU_SERVICE_START = 'QpuServiceStart'
    QPU_SERVICE_END = 'QpuServiceEnd'
    RECONFIGURE_START = 'ReconfigureStart'
    RECONFIGURE_END = 'ReconfigureEnd'
    TASK_SUBMIT = 'TaskSubmit'
    JOB_END = 'JobEnd'


@dataclass(frozen=True)
class Event:
    """A scheduled state transition.

    `index` is the phase (or workflow task) index; `value` carries the node
    count, QPU index or vQPU token the event refers to.
    """

    time: Tick
    seq: int
    kind: EventKind
    job_id: Optional[str] = None
    index: Optional[int] = None
    value: Optional[int] = None

    @property
    def key(self) -> Tuple[Tick, int]:
        return self.time, self.seq


class EventQueue:
    """Min-heap of events; ties at equal time are broken by scheduling order."""

    def __init__(self):
        self._heap: List[Tuple[Tick, int, Event]] = []
        self._counter = itertools.count()
        self.now: Tick = 0

    def __len__(self) -> int:
        return len(self._heap)

    def schedule(
        self,
        time: Tick,
        kind: EventKind,
        job_id: Optional[str] = None,
        index: Optional[int] = None,
        value: Optional[int] = None,
    ) -> Event:
        """
        Insert an event, assigning the next global sequence number.

        Raises:
            InternalConsistencyError: if time lies before the current clock
        """
        if time < self.now:
            raise InternalConsistencyError(
                f"{kind.value} scheduled at t={time}, clock is at t={self.now}"
            )
        event = Event(time, next(self._counter), kind, job_id, index, value)
        heapq.heappush(self._heap, (event.time, event.seq, event))
        return event

    def peek(self) -> Optional[Event]:
        return self._heap[0][2] if self._heap else None

    def pop(self) -> Event:
        if not self._heap:
            raise InternalConsistencyError('pop from an empty event queue')
        _, _, event = heapq.heappop(self._heap)
        self.now = event.time
        return event


def schedule_event(queue: EventQueue, time: Tick, kind: EventKind, **payload) -> Event:
    return queue.schedule(time, kind, **payload)


class EventHandler(Protocol):
    def handle(self, engine: 'Engine', event: Event) -> None:
        ...

    def blocked(self) -> Dict[str, str]:
        """Unfinished jobs mapped to what each one waits on."""
        ...


@dataclass
class RunTrace:
    """Everything a completed run leaves behind."""

    events: List[Event]
    ledger: AllocationLedger
    jobs: Tuple[Job, ...]
    n_nodes: int
    n_vqpus: Optional[int] = None
    job_init_overhead: Tick = 0
    meta: Dict[str, str] = field(default_factory=dict)

    def events_of(self, kind: EventKind) -> List[Event]:
        return [e for e in self.events if e.kind is kind]


class Engine:
    """Single-threaded event loop driving one policy handler."""

    def __init__(self, handler: EventHandler):
        self.queue = EventQueue()
        self.handler = handler
        self.processed: List[Event] = []

    @property
    def now(self) -> Tick:
        return self.queue.now

    def schedule(self, time: Tick, kind: EventKind, job_id: Optional[str] = None,
                 index: Optional[int] = None, value: Optional[int] = None) -> Event:
        return self.queue.schedule(time, kind, job_id, index, value)

    def advance(self) -> Optional[Tuple[Tick, Event]]:
        """
        Process the next event.

        Returns:
            tuple: (clock, event), or None once every job has finished

        Raises:
            DeadlockError: if the queue is empty while jobs are unfinished
        """
        if not self.queue:
            blocked = self.handler.blocked()
            if blocked:
                logger.error(f"Deadlock at t={self.now}: {len(blocked)} job(s) blocked")
                raise DeadlockError(self.now, blocked)
            return None
        event = self.queue.pop()
        logger.debug(f"t={event.time} seq={event.seq} {event.kind.value} {event.job_id or ''}")
        self.processed.append(event)
        self.handler.handle(self, event)
        return event.time, event

    def run(self) -> List[Event]:
        while self.advance() is not None:
            pass
        return self.processed
