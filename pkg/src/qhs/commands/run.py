"""
Single scenario runs
"""
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from qhs import __version__
from qhs.config import emit_scenario, parse_scenario
from qhs.core import RunTrace
from qhs.metrics import MetricsReport
from qhs.simulation import run_to_completion
from qhs.utils.formatting import format_ratio, format_seconds, write_csv, write_json

logger = logging.getLogger(__name__)

METRIC_COLUMNS = [
    'n_jobs',
    'total_time',
    'quantum_time',
    'quantum_occupancy',
    'mean_queue_time',
    'mean_job_wait',
    'node_seconds',
    'cosched_reference',
    'speedup',
    'per_job_wall',
]

JOB_COLUMNS = ['job_id', 'submit', 'start', 'end', 'wall', 'queue_wait', 'job_wait', 'node_seconds']

TRACE_COLUMNS = ['time', 'seq', 'kind', 'job_id', 'index', 'value']


def metrics_row(report: MetricsReport) -> Dict[str, str]:
    """One metrics.csv / sweep.csv row; seconds carry three decimals."""
    reference = report.cosched_reference_ticks
    speedup = report.speedup
    return {
        'n_jobs': str(len(report.jobs)),
        'total_time': format_seconds(report.total_ticks),
        'quantum_time': format_seconds(report.quantum_ticks),
        'quantum_occupancy': format_ratio(report.quantum_occupancy),
        'mean_queue_time': format_seconds(report.mean_queue_ticks),
        'mean_job_wait': format_seconds(report.mean_job_wait_ticks),
        'node_seconds': format_seconds(report.node_ticks),
        'cosched_reference': '' if reference is None else format_seconds(reference),
        'speedup': '' if speedup is None else format_ratio(speedup),
        'per_job_wall': ';'.join(format_seconds(wall) for wall in report.per_job_wall),
    }


def job_rows(report: MetricsReport) -> List[Dict[str, str]]:
    return [
        {
            'job_id': job.job_id,
            'submit': format_seconds(job.submit),
            'start': format_seconds(job.start),
            'end': format_seconds(job.end),
            'wall': format_seconds(job.wall),
            'queue_wait': format_seconds(job.queue_wait),
            'job_wait': format_seconds(job.job_wait),
            'node_seconds': format_seconds(job.node_ticks),
        }
        for job in report.jobs
    ]


def trace_rows(trace: RunTrace) -> List[Dict[str, str]]:
    return [
        {
            'time': str(event.time),
            'seq': str(event.seq),
            'kind': event.kind.value,
            'job_id': event.job_id or '',
            'index': '' if event.index is None else str(event.index),
            'value': '' if event.value is None else str(event.value),
        }
        for event in trace.events
    ]


def run_scenario(
    config_path: Union[str, Path],
    out_dir: Union[str, Path],
    emit_trace: bool = False,
    seed: Optional[int] = None,
) -> Dict[str, Any]:
    """
    Run one scenario and write its artefacts.

    Args:
        config_path: Scenario JSON file
        out_dir: Output directory, created if missing
        emit_trace: Also write the processed event list to trace.csv
        seed: Overrides the scenario seed

    Returns:
        Dict containing the run summary and the files written
    """
    scenario = parse_scenario(config_path, seed)
    trace, report = run_to_completion(scenario)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = ['metrics.csv', 'jobs.csv', 'run_meta.json']
    row = metrics_row(report)
    write_csv(out / 'metrics.csv', METRIC_COLUMNS, [row])
    write_csv(out / 'jobs.csv', JOB_COLUMNS, job_rows(report))
    if emit_trace:
        write_csv(out / 'trace.csv', TRACE_COLUMNS, trace_rows(trace))
        files.append('trace.csv')
    write_json(out / 'run_meta.json', {
        'qhs_version': __version__,
        'seed': scenario.seed,
        'scenario': emit_scenario(scenario),
    })
    logger.info(f"Wrote {', '.join(files)} to {out}")

    summary: Dict[str, Any] = {'policy': scenario.policy.value, 'seed': scenario.seed}
    summary.update({key: value for key, value in row.items() if key != 'per_job_wall'})
    summary['out_dir'] = str(out)
    summary['files'] = files
    return summary
