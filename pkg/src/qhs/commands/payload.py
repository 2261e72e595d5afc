"""
QUBO payload validation against exhaustive oracles
"""
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from qhs.config import (
    ClusteredPayload,
    EdgeListPayload,
    EdgesPayload,
    RandomPayload,
    ScenarioDocument,
    build_jobs,
    load_document,
)
from qhs.errors import PayloadError
from qhs.payload import (
    ENUMERATION_LIMIT,
    ClusteredGraphSpec,
    Graph,
    brute_force_mis,
    build_mis_qubo,
    exhaustive_qubo_minimum,
    gen_clustered_graph,
    random_graph,
    read_edge_list,
    sa_solve,
)
from qhs.utils.seeding import derive_seed, stream

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.9


def expand_payloads(
    document: ScenarioDocument, base_dir: Optional[Path] = None
) -> List[Tuple[str, Graph, float]]:
    """
    Materialise every payload entry as concrete graphs.

    A `random` entry expands to `count` graphs named <name>-000, <name>-001, ...

    Returns:
        list: (name, graph, penalty) in declaration order
    """
    graphs: List[Tuple[str, Graph, float]] = []
    for name, entry in document.payloads.items():
        if isinstance(entry, ClusteredPayload):
            spec = ClusteredGraphSpec(entry.k, entry.d, entry.m, entry.edge_prob, entry.seed)
            graphs.append((name, gen_clustered_graph(spec), entry.penalty))
        elif isinstance(entry, EdgesPayload):
            graphs.append((name, Graph.from_edges(entry.n, entry.edges), entry.penalty))
        elif isinstance(entry, EdgeListPayload):
            path = Path(entry.path)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            graphs.append((name, read_edge_list(path), entry.penalty))
        elif isinstance(entry, RandomPayload):
            rng = stream(entry.seed, 'payload', name)
            for index in range(entry.count):
                n = int(rng.integers(1, entry.max_n + 1))
                graph = random_graph(n, entry.edge_prob, rng)
                graphs.append((f"{name}-{index:03d}", graph, entry.penalty))
    return graphs


def check_payload(
    name: str, graph: Graph, penalty: float, document: ScenarioDocument
) -> Dict[str, Any]:
    """Solve one payload with SA and compare against brute-force MIS."""
    problem = build_mis_qubo(graph, penalty)
    mis_size, _ = brute_force_mis(graph)
    qubo_minimum, _ = exhaustive_qubo_minimum(problem)
    schedule = document.solver.schedule(derive_seed(document.seed, 'solver', name))
    assignment, energy = sa_solve(problem, schedule)
    return {
        'name': name,
        'vertices': graph.n,
        'edges': len(graph.edges),
        'mis_size': mis_size,
        'oracle_agrees': abs(qubo_minimum + mis_size) < 1e-9,
        'sa_energy': energy,
        'matched': abs(energy + mis_size) < 1e-9,
    }


def validate_payloads(
    config_path: Union[str, Path],
    threshold: float = DEFAULT_THRESHOLD,
    seed: Optional[int] = None,
) -> Dict[str, Any]:
    """
    Run the SA solver on every payload and report how often it finds the optimum.

    Args:
        config_path: Scenario JSON file with a `payloads` section
        threshold: Minimum acceptable match rate
        seed: Overrides the scenario seed used to derive solver seeds

    Returns:
        Dict with match statistics; `passed` is False when the rate is below threshold
    """
    document = load_document(config_path, seed)
    base_dir = Path(config_path).parent
    referenced = {
        phase.payload
        for job in build_jobs(document, base_dir)
        for phase in job.phases
        if phase.payload is not None
    }
    unknown = sorted(referenced - set(document.payloads))
    if unknown:
        raise PayloadError(f"phases reference unknown payloads: {', '.join(unknown)}")

    graphs = expand_payloads(document, base_dir)
    if not graphs:
        return {'status': 'nothing to validate', 'checked': 0, 'passed': True}

    results, skipped = [], []
    for name, graph, penalty in graphs:
        if graph.n > ENUMERATION_LIMIT:
            logger.warning(
                f"Skipping payload {name}: {graph.n} vertices exceed the brute-force bound"
            )
            skipped.append(name)
            continue
        results.append(check_payload(name, graph, penalty, document))

    matched = sum(1 for r in results if r['matched'])
    rate = matched / len(results) if results else 1.0
    disagreements = [r['name'] for r in results if not r['oracle_agrees']]
    if disagreements:
        raise PayloadError(
            f"QUBO minimum disagrees with brute-force MIS for {', '.join(disagreements)}"
        )
    return {
        'status': 'ok' if rate >= threshold else 'below threshold',
        'checked': len(results),
        'skipped': skipped,
        'matched': matched,
        'match_rate': round(rate, 6),
        'threshold': threshold,
        'passed': rate >= threshold,
        'misses': [r['name'] for r in results if not r['matched']],
    }
