"""
Tests for scenario and sweep configuration
"""
import json

import pytest

from conftest import SCENARIOS
from qhs.config import (
    SweepDocument,
    build_scenario,
    emit_scenario,
    expand_sweep,
    load_sweep,
    parse_document,
    parse_scenario,
)
from qhs.errors import ScenarioValidationError, TraceParseError
from qhs.policies import PolicyKind, SpeedupModel
from qhs.simulation import run_to_completion


def gc_document(**cluster):
    return {
        'cluster': {'n_nodes': 2, **cluster},
        'policy': 'vqpu',
        'workload': {'gc_replicas': {'n_copies': 2}},
    }


class TestScenarioDocument:
    def test_defaults_are_resolved(self):
        scenario = build_scenario(parse_document(gc_document()))
        assert scenario.policy is PolicyKind.VQPU
        assert scenario.n_vqpus == 2
        assert scenario.cluster.n_qpus == 1
        assert scenario.overheads.reconfig_overhead == 2000
        assert scenario.overheads.wms_task_overhead == 3200
        assert [job.id for job in scenario.jobs] == ['gc-000', 'gc-001']

    def test_zero_vqpus_rejected(self):
        with pytest.raises(ScenarioValidationError) as excinfo:
            build_scenario(parse_document(gc_document(n_vqpus=0)))
        assert excinfo.value.field == 'cluster.n_vqpus'

    def test_negative_duration_names_the_field(self):
        document = gc_document()
        document['workload'] = {
            'trace': {'jobs': [{'id': 'x', 'phases': [{'kind': 'classical', 'duration': -5}]}]}
        }
        with pytest.raises(ScenarioValidationError) as excinfo:
            parse_document(document)
        assert excinfo.value.field == 'workload.trace.jobs.0.phases.0.duration'

    def test_unknown_field_rejected(self):
        document = gc_document()
        document['cluster']['backfill'] = True
        with pytest.raises(ScenarioValidationError) as excinfo:
            parse_document(document)
        assert excinfo.value.field == 'cluster.backfill'

    def test_unknown_policy_rejected(self):
        document = gc_document()
        document['policy'] = 'gang'
        with pytest.raises(ScenarioValidationError):
            parse_document(document)

    def test_exactly_one_workload(self):
        document = gc_document()
        document['workload']['clustering'] = {'copies': 1}
        with pytest.raises(ScenarioValidationError):
            parse_document(document)

    def test_phase_wider_than_cluster(self):
        document = gc_document()
        document['workload'] = {
            'trace': {
                'jobs': [{'id': 'x', 'phases': [{'kind': 'classical', 'duration': 5, 'nodes': 3}]}]
            }
        }
        with pytest.raises(ScenarioValidationError) as excinfo:
            build_scenario(parse_document(document))
        assert excinfo.value.field == 'jobs[0].phases[0].nodes'

    def test_seed_override(self):
        document = gc_document()
        document['seed'] = 3
        assert parse_document(document).seed == 3
        assert parse_document(document, seed_override=11).seed == 11

    def test_negative_seed_rejected(self):
        document = gc_document()
        document['seed'] = -1
        with pytest.raises(ScenarioValidationError):
            parse_document(document)

    def test_empty_trace_under_vqpu(self):
        document = gc_document()
        document['workload'] = {'trace': {'jobs': []}}
        scenario = build_scenario(parse_document(document))
        assert scenario.jobs == () and scenario.n_vqpus == 1
        _, report = run_to_completion(scenario)
        assert report.total_ticks == 0 and report.jobs == ()

    def test_speedup_model(self):
        document = gc_document()
        assert build_scenario(parse_document(document)).speedup_model is SpeedupModel.LINEAR
        document['malleable'] = {'speedup_model': 'parts'}
        assert build_scenario(parse_document(document)).speedup_model is SpeedupModel.PARTS
        document['malleable'] = {'speedup_model': 'cubic'}
        with pytest.raises(ScenarioValidationError) as excinfo:
            parse_document(document)
        assert excinfo.value.field == 'malleable.speedup_model'

    def test_clustering_defaults_to_calibrated_durations(self):
        document = {
            'cluster': {'n_nodes': 3},
            'policy': 'malleable',
            'workload': {'clustering': {'copies': 2}},
        }
        scenario = build_scenario(parse_document(document))
        assert len(scenario.jobs) == 2
        assert all(len(job.phases) == 12 and job.malleable for job in scenario.jobs)


class TestScenarioFiles:
    def test_hand_trace_file(self):
        scenario = parse_scenario(SCENARIOS / 'vqpu_hand_trace.json')
        assert scenario.seed == 7
        assert [job.id for job in scenario.jobs] == ['a', 'b']

    def test_emit_then_parse_is_identity(self):
        scenario = parse_scenario(SCENARIOS / 'clustering_dual.json')
        emitted = emit_scenario(scenario)
        assert build_scenario(parse_document(json.loads(json.dumps(emitted)))) == scenario

    def test_trace_path_is_relative_to_the_scenario(self, tmp_path):
        (tmp_path / 'jobs.jsonl').write_text(
            json.dumps({'id': 'x', 'phases': [{'kind': 'serial', 'duration': 5}]}) + '\n',
            encoding='utf-8',
        )
        document = gc_document()
        document['workload'] = {'trace': {'path': 'jobs.jsonl'}}
        path = tmp_path / 'scenario.json'
        path.write_text(json.dumps(document), encoding='utf-8')
        assert [job.id for job in parse_scenario(path).jobs] == ['x']

    def test_bad_trace_line(self, tmp_path):
        (tmp_path / 'jobs.jsonl').write_text('{"id": "x"}\n', encoding='utf-8')
        document = gc_document()
        document['workload'] = {'trace': {'path': 'jobs.jsonl'}}
        path = tmp_path / 'scenario.json'
        path.write_text(json.dumps(document), encoding='utf-8')
        with pytest.raises(TraceParseError):
            parse_scenario(path)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / 'scenario.json'
        path.write_text('{"cluster": ', encoding='utf-8')
        with pytest.raises(ScenarioValidationError):
            parse_scenario(path)

    def test_invalid_utf8(self, tmp_path):
        path = tmp_path / 'scenario.json'
        path.write_bytes(b'{"cluster": "\xff"}')
        with pytest.raises(ScenarioValidationError, match='not valid UTF-8 at byte 13'):
            parse_scenario(path)

    def test_speedup_model_survives_emit(self):
        document = gc_document()
        document['malleable'] = {'speedup_model': 'parts'}
        scenario = build_scenario(parse_document(document))
        assert emit_scenario(scenario)['malleable'] == {'speedup_model': 'parts'}
        assert build_scenario(parse_document(emit_scenario(scenario))) == scenario


class TestSweeps:
    def test_gc_grid_order(self):
        cells = expand_sweep(load_sweep(SCENARIOS / 'gc_sweep.json'))
        assert len(cells) == 48
        assert [params for params, _ in cells[:4]] == [
            {'n_copies': 1, 'R': 0},
            {'n_copies': 1, 'R': 2},
            {'n_copies': 1, 'R': 5},
            {'n_copies': 2, 'R': 0},
        ]

    def test_aliases_write_into_the_base(self):
        params, document = expand_sweep(load_sweep(SCENARIOS / 'gc_sweep.json'))[5]
        assert params == {'n_copies': 2, 'R': 5}
        assert document['workload']['gc_replicas']['n_copies'] == 2
        assert document['workload']['gc_replicas']['ratio'] == 5

    def test_base_is_not_mutated(self):
        sweep = load_sweep(SCENARIOS / 'gc_sweep.json')
        expand_sweep(sweep)
        assert sweep.base['workload']['gc_replicas']['n_copies'] == 1

    def test_empty_axis_rejected(self):
        sweep = SweepDocument(base=gc_document(), axes={'policy': []})
        with pytest.raises(ScenarioValidationError) as excinfo:
            expand_sweep(sweep)
        assert excinfo.value.field == 'axes.policy'

    def test_dotted_axis_names(self):
        sweep = SweepDocument(base=gc_document(), axes={'cluster.n_nodes': [2, 4]})
        documents = [document for _, document in expand_sweep(sweep)]
        assert [d['cluster']['n_nodes'] for d in documents] == [2, 4]
