"""
Tests for scheduling metrics and their formatting
"""
from fractions import Fraction

import pytest

from conftest import hand_trace_job, make_scenario
from qhs.cluster import AllocationLedger, BusyInterval
from qhs.core import Event, EventKind, RunTrace
from qhs.metrics import (
    compute_metrics,
    cosched_reference,
    mean_queue_time,
    quantum_occupancy,
    quantum_time,
    runtime_distribution,
    single_job_time,
    total_time,
)
from qhs.policies import PolicyKind
from qhs.simulation import run_to_completion, simulate
from qhs.utils.formatting import format_ratio, format_seconds
from qhs.workload import Job, Phase


def synthetic_trace(busy, end):
    """One job submitted at 0 and ending at `end`, with the given QPU busy intervals."""
    ledger = AllocationLedger()
    for seq, (start, stop) in enumerate(busy):
        ledger.record_busy(BusyInterval(0, 'j', start, stop, start, seq))
    job = Job(id='j', phases=(Phase.serial(1),))
    events = [
        Event(0, 0, EventKind.JOB_SUBMIT, 'j'),
        Event(0, 1, EventKind.PHASE_START, 'j', 0),
        Event(end, 2, EventKind.JOB_END, 'j'),
    ]
    return RunTrace(events=events, ledger=ledger, jobs=(job,), n_nodes=1)


class TestOccupancy:
    def test_no_quantum_phases(self):
        assert quantum_occupancy(synthetic_trace([], 10000)) == 0

    def test_direct_definition(self):
        trace = synthetic_trace([(0, 2000), (5000, 7000)], 10000)
        assert quantum_occupancy(trace) == Fraction(2, 5)
        assert quantum_time(trace) == 4.0

    def test_zero_length_run(self):
        assert quantum_occupancy(synthetic_trace([], 0)) == 0

    def test_hand_trace_vqpu_against_exclusive(self, hand_trace_jobs):
        vqpu = simulate(make_scenario(PolicyKind.VQPU, hand_trace_jobs, 2))
        exclusive = simulate(make_scenario(PolicyKind.COSCHEDULED, hand_trace_jobs, 2))
        assert quantum_occupancy(vqpu) == Fraction(4000, 24000)
        assert quantum_occupancy(exclusive) == Fraction(4000, 44000)


class TestTimes:
    def test_quantum_time_is_policy_independent(self, hand_trace_jobs):
        traces = [
            simulate(make_scenario(policy, hand_trace_jobs, 2))
            for policy in (PolicyKind.VQPU, PolicyKind.COSCHEDULED, PolicyKind.STATIC_OFFLOAD)
        ]
        assert {quantum_time(t) for t in traces} == {4.0}

    def test_mean_queue_time(self, hand_trace_jobs):
        assert mean_queue_time(simulate(make_scenario(PolicyKind.VQPU, hand_trace_jobs, 2))) == 1.0
        single = simulate(make_scenario(PolicyKind.VQPU, hand_trace_jobs[:1], 1))
        assert mean_queue_time(single) == 0.0

    def test_total_time(self, hand_trace_jobs):
        assert total_time(simulate(make_scenario(PolicyKind.VQPU, hand_trace_jobs[:1], 1))) == 22.0

    def test_total_time_spans_staggered_submissions(self):
        jobs = [hand_trace_job('a', submit_time=5000), hand_trace_job('b', submit_time=8000)]
        _, report = run_to_completion(make_scenario(PolicyKind.VQPU, jobs, 2))
        assert report.total_ticks == max(j.end for j in report.jobs) - 5000

    def test_cosched_reference(self):
        assert cosched_reference(1019.58, 2) == pytest.approx(2039.16)
        assert cosched_reference(22.0, 1) == 22.0
        assert cosched_reference(22.0, 2) == 44.0

    def test_cosched_reference_matches_exclusive_run(self, hand_trace_jobs):
        _, report = run_to_completion(make_scenario(PolicyKind.COSCHEDULED, hand_trace_jobs, 2))
        assert report.cosched_reference_ticks == report.total_ticks == 44000
        assert report.speedup == 1

    def test_cosched_reference_needs_uniform_jobs(self):
        jobs = [hand_trace_job('a'), Job(id='b', phases=(Phase.serial(5),))]
        _, report = run_to_completion(make_scenario(PolicyKind.VQPU, jobs, 2))
        assert report.cosched_reference_ticks is None and report.speedup is None

    def test_single_job_time_includes_init(self):
        assert single_job_time(hand_trace_job('a'), job_init_overhead=500) == 22500


class TestDistribution:
    def test_vqpu_hand_trace(self, hand_trace_jobs):
        trace = simulate(make_scenario(PolicyKind.VQPU, hand_trace_jobs, 2))
        assert runtime_distribution(trace) == [22.0, 24.0]

    def test_exclusive_is_arithmetic(self):
        jobs = [hand_trace_job(f"j{i}") for i in range(3)]
        trace = simulate(make_scenario(PolicyKind.COSCHEDULED, jobs, 3))
        assert runtime_distribution(trace) == [22.0, 44.0, 66.0]


class TestReport:
    def test_occupancy_times_total_is_quantum_time(self, hand_trace_jobs):
        _, report = run_to_completion(make_scenario(PolicyKind.VQPU, hand_trace_jobs, 2))
        assert report.quantum_occupancy * report.total_ticks == report.quantum_ticks

    def test_empty_trace(self):
        trace = RunTrace(events=[], ledger=AllocationLedger(), jobs=(), n_nodes=1)
        report = compute_metrics(trace)
        assert report.total_ticks == 0 and report.quantum_occupancy == 0 and report.jobs == ()


class TestFormatting:
    def test_seconds_have_three_decimals(self):
        assert format_seconds(24000) == '24.000'
        assert format_seconds(1500) == '1.500'
        assert format_seconds(0) == '0.000'

    def test_fractional_ticks_round_half_even(self):
        assert format_seconds(Fraction(1, 2)) == '0.000'
        assert format_seconds(Fraction(3, 2)) == '0.002'

    def test_ratio(self):
        assert format_ratio(Fraction(1, 6)) == '0.166667'
        assert format_ratio(1) == '1.000000'
