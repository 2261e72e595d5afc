"""
Parameter sweeps over scenario fields
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import psutil

from qhs.commands.run import METRIC_COLUMNS, metrics_row
from qhs.config import build_scenario, expand_sweep, load_sweep, parse_document
from qhs.errors import QhsError, SweepCellError
from qhs.simulation import run_to_completion
from qhs.utils.formatting import write_csv

logger = logging.getLogger(__name__)

Cell = Tuple[int, Dict[str, Any], Dict[str, Any], Optional[str]]


def default_workers() -> int:
    """One worker per physical core."""
    return psutil.cpu_count(logical=False) or 1


def _param(value: Any) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    return str(value)


def run_cell(cell: Cell) -> Dict[str, str]:
    """
    Run one sweep cell and return its sweep.csv row.

    Raises:
        SweepCellError: naming the cell when validation or simulation fails
    """
    index, params, document, base_dir = cell
    try:
        scenario = build_scenario(parse_document(document), Path(base_dir) if base_dir else None)
        _, report = run_to_completion(scenario)
    except QhsError as e:
        raise SweepCellError(index, params, e) from None
    row = {name: _param(value) for name, value in params.items()}
    row.update(metrics_row(report))
    return row


def run_sweep(
    config_path: Union[str, Path],
    out_dir: Union[str, Path],
    jobs: int = 1,
    seed: Optional[int] = None,
) -> Dict[str, Any]:
    """
    Run every cell of a sweep and write sweep.csv in declaration order.

    Args:
        config_path: Sweep JSON file with `base` and `axes`
        out_dir: Output directory, created if missing
        jobs: Worker processes; 0 means one per physical core
        seed: Overrides the base scenario seed in every cell

    Returns:
        Dict summarising the sweep
    """
    sweep = load_sweep(config_path)
    base_dir = str(Path(config_path).parent)
    cells: List[Cell] = []
    for index, (params, document) in enumerate(expand_sweep(sweep)):
        if seed is not None:
            document['seed'] = seed
        cells.append((index, params, document, base_dir))

    workers = default_workers() if jobs == 0 else jobs
    logger.info(f"Sweeping {len(cells)} cell(s) with {workers} worker(s)")
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_cell, cells))
    else:
        rows = [run_cell(cell) for cell in cells]

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / 'sweep.csv', list(sweep.axes) + METRIC_COLUMNS, rows)
    return {
        'cells': len(rows),
        'axes': {name: len(values) for name, values in sweep.axes.items()},
        'workers': workers,
        'out_dir': str(out),
        'files': ['sweep.csv'],
    }
