"""
Tests for the node pool, QPU broker, vQPU pool and allocation ledger
"""
import pytest

from qhs.cluster import (
    AllocationLedger,
    BusyInterval,
    ClusterConfig,
    Grant,
    HoldInterval,
    NodePool,
    NodeRequest,
    QpuAccess,
    QpuBroker,
    QpuQueueEntry,
    VqpuPool,
    audit_ledger,
    node_seconds,
)
from qhs.errors import (
    AccountingError,
    InternalConsistencyError,
    PolicyViolationError,
    ScenarioValidationError,
)


def pool_with_free(n_nodes: int, free: int) -> NodePool:
    pool = NodePool(n_nodes, AllocationLedger())
    if free < n_nodes:
        pool.try_allocate(NodeRequest.rigid('other', 0, n_nodes - free), 0)
    return pool


class TestClusterConfig:
    def test_rejects_empty_cluster(self):
        with pytest.raises(ScenarioValidationError):
            ClusterConfig(n_nodes=0)

    def test_rejects_other_disciplines(self):
        with pytest.raises(ScenarioValidationError):
            ClusterConfig(n_nodes=2, queue_discipline='backfill')


class TestNodePool:
    """FCFS allocation without backfill"""

    def test_rigid_request_fits(self):
        assert pool_with_free(3, 3).try_allocate(NodeRequest.rigid('j', 0, 3), 0) == Grant(3)

    def test_rigid_request_queues_when_short(self):
        pool = pool_with_free(3, 2)
        assert pool.try_allocate(NodeRequest.rigid('j', 0, 3), 0) is None
        assert len(pool.waiting) == 1

    def test_moldable_request_takes_what_is_free(self):
        pool = pool_with_free(4, 2)
        assert pool.try_allocate(NodeRequest('j', 0, 1, 4, moldable=True), 0) == Grant(2)

    def test_non_moldable_request_must_be_exact(self):
        with pytest.raises(InternalConsistencyError):
            NodeRequest('j', 0, 1, 3, moldable=False)

    def test_no_backfill_behind_a_blocked_request(self):
        pool = pool_with_free(4, 1)
        assert pool.try_allocate(NodeRequest.rigid('big', 0, 2), 5) is None
        assert pool.try_allocate(NodeRequest.rigid('small', 0, 1), 5) is None
        granted = pool.release('other', 3, 10)
        assert [(req.job_id, g.nodes) for req, g in granted] == [('big', 2), ('small', 1)]

    def test_equal_rigid_requests_granted_in_request_order(self):
        pool = pool_with_free(2, 0)
        for job_id in ('x', 'y', 'z'):
            pool.try_allocate(NodeRequest.rigid(job_id, 0, 1), 0)
        first = pool.release('other', 1, 10)
        second = pool.release('other', 1, 20)
        assert [r.job_id for r, _ in first + second] == ['x', 'y']

    def test_partial_release_records_shrink_boundary(self):
        ledger = AllocationLedger()
        pool = NodePool(3, ledger)
        pool.try_allocate(NodeRequest.rigid('j', 0, 3), 0)
        pool.release('j', 2, 1000)
        assert pool.holding('j') == 1
        assert ledger.holds == [HoldInterval('j', 3, 0, 1000)]

    def test_over_release_is_fatal(self):
        pool = pool_with_free(3, 3)
        pool.try_allocate(NodeRequest.rigid('j', 0, 2), 0)
        with pytest.raises(InternalConsistencyError):
            pool.release('j', 3, 10)

    def test_release_by_unknown_job_is_fatal(self):
        with pytest.raises(InternalConsistencyError):
            pool_with_free(3, 3).release('ghost', 1, 0)

    def test_expand_never_overtakes_the_queue(self):
        pool = pool_with_free(4, 1)
        pool.try_allocate(NodeRequest.rigid('waiting', 0, 2), 0)
        assert pool.expand('other', 1, 0) == 0

    def test_expand_takes_up_to_free(self):
        pool = pool_with_free(4, 2)
        assert pool.expand('other', 3, 0) == 2
        assert pool.holding('other') == 4


class TestLedger:
    """Node-second accounting"""

    def test_node_seconds_of_table_rows(self):
        ledger = AllocationLedger()
        ledger.record_hold('baseline', 3, 0)
        ledger.record_hold('baseline', 0, 1019580)
        assert node_seconds(ledger) == pytest.approx(3058.74)
        ledger.record_hold('short', 3, 0)
        ledger.record_hold('short', 0, 539440)
        assert node_seconds(ledger, ['short']) == pytest.approx(1618.32)

    def test_empty_ledger_is_zero(self):
        assert node_seconds(AllocationLedger()) == 0

    def test_open_interval_is_an_accounting_error(self):
        ledger = AllocationLedger()
        ledger.record_hold('j', 2, 0)
        with pytest.raises(AccountingError):
            node_seconds(ledger)

    def test_zero_length_intervals_are_dropped(self):
        ledger = AllocationLedger()
        ledger.record_hold('j', 2, 100)
        ledger.record_hold('j', 3, 100)
        ledger.record_hold('j', 0, 200)
        assert ledger.holds == [HoldInterval('j', 3, 100, 200)]


class TestVqpuPool:
    """Token leases"""

    def test_third_job_waits_for_a_token(self):
        pool = VqpuPool(2, AllocationLedger())
        assert pool.acquire('a', 0) == 0
        assert pool.acquire('b', 0) == 1
        assert pool.acquire('c', 0) is None
        assert pool.release(pool.token_of('a'), 50) == ('c', 0)

    def test_double_acquire_is_fatal(self):
        pool = VqpuPool(1, AllocationLedger())
        pool.acquire('a', 0)
        with pytest.raises(InternalConsistencyError):
            pool.acquire('a', 1)

    def test_empty_pool_is_rejected(self):
        with pytest.raises(ScenarioValidationError):
            VqpuPool(0, AllocationLedger())

    def test_releasing_a_free_token_is_fatal(self):
        with pytest.raises(InternalConsistencyError):
            VqpuPool(2, AllocationLedger()).release(1, 0)


class TestQpuBroker:
    """FIFO service and access checks"""

    def test_idle_qpu_serves_immediately(self):
        ledger = AllocationLedger()
        broker = QpuBroker(1, ledger)
        position, _ = broker.enqueue(0, QpuQueueEntry('a', 2000, 10000), QpuAccess.SHARED)
        assert position == 0
        assert broker.start_next(0, 10000).job_id == 'a'
        broker.finish(0, 12000)
        assert (ledger.busy[0].start, ledger.busy[0].end) == (10000, 12000)

    def test_busy_qpu_queues_behind(self):
        broker = QpuBroker(1, AllocationLedger())
        broker.enqueue(0, QpuQueueEntry('a', 2000, 10000), QpuAccess.SHARED)
        broker.start_next(0, 10000)
        position, _ = broker.enqueue(0, QpuQueueEntry('b', 2000, 10000), QpuAccess.SHARED)
        assert position == 1
        assert broker.start_next(0, 10000) is None
        broker.finish(0, 12000)
        assert broker.start_next(0, 12000).job_id == 'b'

    def test_same_tick_entries_served_in_enqueue_order(self):
        broker = QpuBroker(1, AllocationLedger())
        for job_id in ('x', 'y', 'z'):
            broker.enqueue(0, QpuQueueEntry(job_id, 10, 0), QpuAccess.SHARED)
        served = []
        now = 0
        while (entry := broker.start_next(0, now)) is not None:
            served.append(entry.job_id)
            now += entry.duration
            broker.finish(0, now)
        assert served == ['x', 'y', 'z']

    def test_vqpu_access_needs_a_token(self):
        ledger = AllocationLedger()
        broker = QpuBroker(1, ledger, VqpuPool(1, ledger))
        with pytest.raises(PolicyViolationError):
            broker.enqueue(0, QpuQueueEntry('a', 10, 0), QpuAccess.VQPU)

    def test_exclusive_access_needs_the_lock(self):
        broker = QpuBroker(1, AllocationLedger())
        with pytest.raises(PolicyViolationError):
            broker.enqueue(0, QpuQueueEntry('a', 10, 0), QpuAccess.EXCLUSIVE)
        assert broker.acquire_lock('a') == 0
        broker.enqueue(0, QpuQueueEntry('a', 10, 0), QpuAccess.EXCLUSIVE)

    def test_lock_waiters_are_served_in_order(self):
        broker = QpuBroker(1, AllocationLedger())
        broker.acquire_lock('a')
        assert broker.acquire_lock('b') is None
        assert broker.acquire_lock('c') is None
        assert broker.release_lock('a') == [('b', 0)]


class TestAudit:
    """Full-ledger invariants"""

    def test_detects_node_overcommit(self):
        ledger = AllocationLedger()
        for job_id in ('a', 'b'):
            ledger.record_hold(job_id, 2, 0)
            ledger.record_hold(job_id, 0, 10)
        with pytest.raises(AccountingError):
            audit_ledger(ledger, n_nodes=3)
        audit_ledger(ledger, n_nodes=4)

    def test_back_to_back_holds_do_not_overlap(self):
        ledger = AllocationLedger()
        ledger.record_hold('a', 2, 0)
        ledger.record_hold('a', 0, 10)
        ledger.record_hold('b', 2, 10)
        ledger.record_hold('b', 0, 20)
        audit_ledger(ledger, n_nodes=2)

    def test_detects_overlapping_service(self):
        ledger = AllocationLedger()
        ledger.record_busy(BusyInterval(0, 'a', 0, 10, 0, 0))
        ledger.record_busy(BusyInterval(0, 'b', 5, 15, 0, 1))
        with pytest.raises(AccountingError):
            audit_ledger(ledger, n_nodes=1)

    def test_detects_out_of_order_service(self):
        ledger = AllocationLedger()
        ledger.record_busy(BusyInterval(0, 'b', 0, 10, 0, 1))
        ledger.record_busy(BusyInterval(0, 'a', 10, 20, 0, 0))
        with pytest.raises(AccountingError):
            audit_ledger(ledger, n_nodes=1)
