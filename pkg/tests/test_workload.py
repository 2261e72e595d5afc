"""
Tests for workload builders, calibration and trace loading
"""
import json
from fractions import Fraction

import pytest

from qhs.errors import CalibrationError, ScenarioValidationError, TraceParseError
from qhs.workload import (
    LONG_DELTA_Q,
    MEASURED_CLUSTERING_RUNS,
    GcReplicaParams,
    Job,
    JobRecord,
    Phase,
    PhaseKind,
    QuantumBurst,
    calibrate_clustering,
    gen_clustering_aggregation,
    gen_gc_replicas,
    load_trace,
)


class TestPhases:
    def test_quantum_phase_holds_no_nodes(self):
        assert Phase.quantum(2000).nodes == 0

    def test_only_quantum_phases_have_a_burst(self):
        assert Phase.quantum(2000, 'g').burst == QuantumBurst(2000, 'g')
        assert Phase.serial(2000).burst is None

    def test_non_positive_duration_rejected(self):
        with pytest.raises(ScenarioValidationError):
            Phase.classical(1, 0)

    def test_parts_must_match_duration(self):
        with pytest.raises(ScenarioValidationError):
            Phase.classical(3, 100, parts=(10, 20, 30))

    def test_job_needs_phases(self):
        with pytest.raises(ScenarioValidationError):
            Job(id='empty', phases=())


class TestGcReplicas:
    """Identical replicas with an R-scaled classical sleep"""

    def test_structure(self):
        jobs = gen_gc_replicas(GcReplicaParams(n_copies=3, ratio=Fraction(2)))
        assert [job.id for job in jobs] == ['gc-000', 'gc-001', 'gc-002']
        phases = jobs[0].phases
        assert len(phases) == 40
        assert phases[0] == Phase.quantum(2000)
        assert phases[1] == Phase.classical(1, 1000 + 2 * 2000)

    def test_replicas_are_identical(self):
        jobs = gen_gc_replicas(GcReplicaParams(n_copies=4, ratio=Fraction(2)))
        assert len({job.phases for job in jobs}) == 1
        assert len({hash(job.phases) for job in jobs}) == 1

    def test_quantum_work_is_independent_of_ratio(self):
        base = gen_gc_replicas(GcReplicaParams(n_copies=1))[0]
        scaled = gen_gc_replicas(GcReplicaParams(n_copies=1, ratio=Fraction(5)))[0]
        assert base.quantum_ticks == scaled.quantum_ticks == 20 * 2000

    def test_jitter_is_per_job_and_reproducible(self):
        small = gen_gc_replicas(GcReplicaParams(n_copies=2, jitter_sigma=0.2, seed=9))
        large = gen_gc_replicas(GcReplicaParams(n_copies=5, jitter_sigma=0.2, seed=9))
        assert small == large[:2]
        assert small[0].phases != small[1].phases

    def test_negative_ratio_rejected(self):
        with pytest.raises(ScenarioValidationError):
            GcReplicaParams(n_copies=1, ratio=Fraction(-1))


class TestClustering:
    """The four-iteration clustering-aggregation loop"""

    def test_twelve_phases(self):
        job = gen_clustering_aggregation(LONG_DELTA_Q, [[1, 2, 3]] * 4, [4] * 4)
        iteration = [PhaseKind.CLASSICAL, PhaseKind.QUANTUM, PhaseKind.SERIAL]
        assert [p.kind for p in job.phases] == iteration * 4
        assert job.phases[0].nodes == 3 and job.phases[0].duration == 3
        assert job.malleable

    def test_wrong_iteration_count_rejected(self):
        with pytest.raises(ScenarioValidationError):
            gen_clustering_aggregation(LONG_DELTA_Q, [[1, 2, 3]] * 3, [4] * 3)

    def test_calibration_from_long_delay_rows(self):
        long_rows = [o for o in MEASURED_CLUSTERING_RUNS if o.delta_q == LONG_DELTA_Q]
        classical, serial = calibrate_clustering(long_rows)
        c3 = sum(row[2] for row in classical) / 1000
        c1 = sum(serial) / 1000
        assert c3 == pytest.approx(314.085, abs=0.01)
        assert c1 == pytest.approx(225.495, abs=0.01)

    def test_calibration_from_all_rows(self):
        classical, serial = calibrate_clustering()
        assert sum(row[2] for row in classical) / 1000 == pytest.approx(314.26, abs=0.05)
        assert sum(serial) / 1000 == pytest.approx(224.25, abs=0.05)
        assert all(row[0] < row[1] < row[2] for row in classical)

    def test_calibration_needs_both_modes(self):
        baseline_only = [o for o in MEASURED_CLUSTERING_RUNS if o.mode == 'baseline']
        with pytest.raises(CalibrationError):
            calibrate_clustering(baseline_only)


class TestTraceLoading:
    def write(self, tmp_path, lines):
        path = tmp_path / 'jobs.jsonl'
        path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
        return path

    def test_round_trip_through_records(self, tmp_path):
        job = gen_clustering_aggregation(LONG_DELTA_Q, [[1, 2, 3]] * 4, [4] * 4, job_id='c')
        line = JobRecord.from_job(job).model_dump_json()
        assert load_trace(self.write(tmp_path, ['# one job', line])) == [job]

    def test_negative_duration_names_line_and_field(self, tmp_path):
        record = {'id': 'x', 'phases': [{'kind': 'classical', 'duration': -5}]}
        with pytest.raises(TraceParseError) as excinfo:
            load_trace(self.write(tmp_path, [json.dumps(record)]))
        assert excinfo.value.line == 1
        assert 'phases.0.duration' in str(excinfo.value)

    def test_duplicate_ids_rejected(self, tmp_path):
        record = json.dumps({'id': 'x', 'phases': [{'kind': 'serial', 'duration': 5}]})
        with pytest.raises(TraceParseError) as excinfo:
            load_trace(self.write(tmp_path, [record, record]))
        assert excinfo.value.line == 2

    def test_unknown_field_rejected(self, tmp_path):
        record = {'id': 'x', 'priority': 3, 'phases': [{'kind': 'serial', 'duration': 5}]}
        with pytest.raises(TraceParseError):
            load_trace(self.write(tmp_path, [json.dumps(record)]))

    def test_invalid_utf8_names_the_line(self, tmp_path):
        record = json.dumps({'id': 'x', 'phases': [{'kind': 'serial', 'duration': 5}]})
        path = tmp_path / 'jobs.jsonl'
        path.write_bytes(record.encode('utf-8') + b'\n\xff\n')
        with pytest.raises(TraceParseError) as excinfo:
            load_trace(path)
        assert excinfo.value.line == 2
        assert 'not valid UTF-8' in str(excinfo.value)
