"""
Scheduling metrics for qhs

Every quantity is computed in exact tick arithmetic from a completed trace;
conversion to seconds happens only at the edges.
"""
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from qhs.core import EventKind, RunTrace
from qhs.workload import Job

Tick = int


@dataclass(frozen=True)
class JobMetrics:
    """Per-job timings.

    queue_wait sums burst waits; job_wait runs from submission to the first phase.
    """

    job_id: str
    submit: Tick
    start: Tick
    end: Tick
    queue_wait: Tick
    job_wait: Tick
    node_ticks: int

    @property
    def wall(self) -> Tick:
        return self.end - self.submit


@dataclass(frozen=True)
class MetricsReport:
    quantum_ticks: Tick
    total_ticks: Tick
    mean_queue_ticks: Fraction
    mean_job_wait_ticks: Fraction
    node_ticks: int
    cosched_reference_ticks: Optional[Tick]
    jobs: Tuple[JobMetrics, ...]

    @property
    def quantum_occupancy(self) -> Fraction:
        if self.total_ticks == 0:
            return Fraction(0)
        return Fraction(self.quantum_ticks, self.total_ticks)

    @property
    def speedup(self) -> Optional[Fraction]:
        """Co-scheduling reference over simulated total time."""
        if self.cosched_reference_ticks is None or self.total_ticks == 0:
            return None
        return Fraction(self.cosched_reference_ticks, self.total_ticks)

    @property
    def per_job_wall(self) -> List[Tick]:
        return [job.wall for job in self.jobs]

    @property
    def quantum_time(self) -> float:
        return self.quantum_ticks / 1000

    @property
    def total_time(self) -> float:
        return self.total_ticks / 1000

    @property
    def mean_queue_time(self) -> float:
        return float(self.mean_queue_ticks) / 1000

    @property
    def node_seconds(self) -> float:
        return self.node_ticks / 1000


def single_job_time(job: Job, job_init_overhead: Tick = 0) -> Tick:
    """Execution time of a job run alone with exclusive access to everything."""
    return job_init_overhead + job.work_ticks


def _job_metrics(trace: RunTrace) -> Tuple[JobMetrics, ...]:
    submits: Dict[str, Tick] = {}
    starts: Dict[str, Tick] = {}
    ends: Dict[str, Tick] = {}
    for event in trace.events:
        if event.kind is EventKind.JOB_SUBMIT:
            submits.setdefault(event.job_id, event.time)
        elif event.kind is EventKind.PHASE_START:
            starts.setdefault(event.job_id, event.time)
        elif event.kind is EventKind.JOB_END:
            ends[event.job_id] = event.time

    waits: Dict[str, Tick] = {job.id: 0 for job in trace.jobs}
    for interval in trace.ledger.busy:
        waits[interval.job_id] += interval.start - interval.enqueue_time

    jobs = []
    for job in trace.jobs:
        submit = submits[job.id]
        jobs.append(JobMetrics(
            job_id=job.id,
            submit=submit,
            start=starts.get(job.id, ends[job.id]),
            end=ends[job.id],
            queue_wait=waits[job.id],
            job_wait=starts.get(job.id, ends[job.id]) - submit,
            node_ticks=trace.ledger.node_ticks([job.id]),
        ))
    return tuple(jobs)


def quantum_ticks(trace: RunTrace) -> Tick:
    return sum(interval.end - interval.start for interval in trace.ledger.busy)


def total_ticks(trace: RunTrace) -> Tick:
    submits = [e.time for e in trace.events_of(EventKind.JOB_SUBMIT)]
    ends = [e.time for e in trace.events_of(EventKind.JOB_END)]
    if not submits or not ends:
        return 0
    return max(ends) - min(submits)


def quantum_occupancy(trace: RunTrace) -> Fraction:
    """Fraction of the makespan during which a QPU runs circuits; 0 for an empty run."""
    total = total_ticks(trace)
    if total == 0:
        return Fraction(0)
    return Fraction(quantum_ticks(trace), total)


def quantum_time(trace: RunTrace) -> float:
    """Seconds of circuit execution summed over QPUs, excluding queueing."""
    return quantum_ticks(trace) / 1000


def total_time(trace: RunTrace) -> float:
    return total_ticks(trace) / 1000


def mean_queue_time(trace: RunTrace) -> float:
    """Mean over jobs of the cumulative wait between burst enqueue and service start, in seconds."""
    jobs = _job_metrics(trace)
    if not jobs:
        return 0.0
    return float(Fraction(sum(j.queue_wait for j in jobs), len(jobs))) / 1000


def cosched_reference(t_single: float, n: int) -> float:
    """
    Time n jobs would take if each held the QPU exclusively in turn.

    Args:
        t_single: Execution time of one job alone, in seconds
        n: Number of jobs

    Returns:
        float: t_single x n
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return t_single * n


def runtime_distribution(trace: RunTrace) -> List[float]:
    """Sorted per-job wall times in seconds."""
    return sorted(job.wall / 1000 for job in _job_metrics(trace))


def _uniform_reference(jobs: Sequence[Job], job_init_overhead: Tick) -> Optional[Tick]:
    if not jobs or any(job.phases != jobs[0].phases for job in jobs):
        return None
    return single_job_time(jobs[0], job_init_overhead) * len(jobs)


def compute_metrics(trace: RunTrace) -> MetricsReport:
    """
    Build the full metrics report for a completed trace.

    The co-scheduling reference is only filled in when every job has the same
    phase structure, so that a single job's time is well defined.
    """
    jobs = _job_metrics(trace)
    n = len(jobs)
    return MetricsReport(
        quantum_ticks=quantum_ticks(trace),
        total_ticks=total_ticks(trace),
        mean_queue_ticks=Fraction(sum(j.queue_wait for j in jobs), n) if n else Fraction(0),
        mean_job_wait_ticks=Fraction(sum(j.job_wait for j in jobs), n) if n else Fraction(0),
        node_ticks=trace.ledger.node_ticks(),
        cosched_reference_ticks=_uniform_reference(trace.jobs, trace.job_init_overhead),
        jobs=jobs,
    )
