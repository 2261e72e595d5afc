"""
Scenario driver for qhs

Validates a scenario, runs it through the engine under its policy, audits the
resulting trace and computes the metrics report.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

from qhs.cluster import ClusterConfig, audit_ledger
from qhs.core import Engine, EventKind, RunTrace
from qhs.errors import AccountingError, ScenarioValidationError
from qhs.metrics import MetricsReport, compute_metrics
from qhs.policies import OverheadConfig, PolicyHandler, PolicyKind, SpeedupModel
from qhs.workload import Job

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Scenario:
    cluster: ClusterConfig
    policy: PolicyKind
    jobs: Tuple[Job, ...]
    seed: int = 0
    overheads: OverheadConfig = OverheadConfig()
    split_clustering_tasks: bool = False
    speedup_model: SpeedupModel = SpeedupModel.LINEAR

    @property
    def n_vqpus(self) -> Optional[int]:
        """vQPU pool size in effect, or None when the policy does not use one."""
        if self.policy is not PolicyKind.VQPU:
            return None
        return self.cluster.vqpu_pool_size(len(self.jobs))

    def validate(self) -> 'Scenario':
        """
        Reject scenarios that cannot run to completion.

        Returns:
            Scenario: self, for chaining

        Raises:
            ScenarioValidationError: naming the offending field
        """
        seen = set()
        for position, job in enumerate(self.jobs):
            if job.id in seen:
                raise ScenarioValidationError(
                    f"duplicate job id {job.id!r}", f"jobs[{position}].id"
                )
            seen.add(job.id)
            for index, phase in enumerate(job.phases):
                if phase.nodes > self.cluster.n_nodes:
                    raise ScenarioValidationError(
                        f"needs {phase.nodes} nodes, cluster has {self.cluster.n_nodes}",
                        f"jobs[{position}].phases[{index}].nodes",
                    )
            if job.nodes_min > self.cluster.n_nodes:
                raise ScenarioValidationError(
                    f"{job.nodes_min} exceeds the cluster's {self.cluster.n_nodes} nodes",
                    f"jobs[{position}].nodes_min",
                )
        if self.policy is PolicyKind.VQPU and self.n_vqpus == 0:
            raise ScenarioValidationError(
                'the vqpu policy needs at least one vQPU', 'cluster.n_vqpus'
            )
        return self


def simulate(scenario: Scenario) -> RunTrace:
    """Run the event loop for one scenario and return its raw trace."""
    handler = PolicyHandler(
        scenario.policy,
        scenario.cluster,
        scenario.jobs,
        scenario.overheads,
        scenario.split_clustering_tasks,
        scenario.speedup_model,
    )
    engine = Engine(handler)
    handler.start(engine)
    events = engine.run()
    return RunTrace(
        events=events,
        ledger=handler.ledger,
        jobs=tuple(scenario.jobs),
        n_nodes=scenario.cluster.n_nodes,
        n_vqpus=scenario.n_vqpus,
        job_init_overhead=scenario.overheads.job_init_overhead,
        meta={'policy': scenario.policy.value, 'seed': str(scenario.seed)},
    )


def audit_trace(trace: RunTrace) -> None:
    """
    Check a completed trace end to end.

    Events must be in (time, seq) order, every job must have ended, and the
    ledger must respect node conservation, QPU disjointness, FIFO service
    order and the vQPU token bound.

    Raises:
        AccountingError: on the first violation found
    """
    keys = [event.key for event in trace.events]
    if keys != sorted(keys):
        raise AccountingError('events were processed out of (time, seq) order')
    ended = {event.job_id for event in trace.events_of(EventKind.JOB_END)}
    missing = [job.id for job in trace.jobs if job.id not in ended]
    if missing:
        raise AccountingError(f"jobs without JobEnd: {', '.join(missing)}")
    audit_ledger(trace.ledger, trace.n_nodes, trace.n_vqpus)


def run_to_completion(scenario: Scenario, validate: bool = True) -> Tuple[RunTrace, MetricsReport]:
    """
    Validate, simulate, audit and measure one scenario.

    Args:
        scenario: Scenario to run
        validate: Skip validation only to exercise deadlock reporting

    Returns:
        tuple: (RunTrace, MetricsReport)
    """
    if validate:
        scenario.validate()
    trace = simulate(scenario)
    try:
        audit_trace(trace)
    except AccountingError as e:
        logger.error(f"Trace audit failed: {e}")
        raise
    report = compute_metrics(trace)
    logger.info(
        f"{scenario.policy.value}: {len(scenario.jobs)} job(s) finished, "
        f"total {report.total_ticks} ticks"
    )
    return trace, report
