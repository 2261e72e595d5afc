"""
QUBO payloads for quantum bursts

Maximum independent set instances encoded as QUBO problems, a simulated
annealing solver standing in for the quantum device, exhaustive oracles and
the (K,d)-clustered graph generator.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from qhs.errors import PayloadError

logger = logging.getLogger(__name__)

DEFAULT_PENALTY = 2.0
ENUMERATION_LIMIT = 24
_CHUNK_BITS = 16

Edge = Tuple[int, int]


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on vertices 0..n-1.

    `separators` is only set by the clustered generator and names the vertex
    separator set S.
    """

    n: int
    edges: FrozenSet[Edge]
    separators: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.n < 0:
            raise PayloadError(f"vertex count must be >= 0, got {self.n}")
        for u, v in self.edges:
            if u == v:
                raise PayloadError(f"self-loop on vertex {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise PayloadError(f"edge ({u}, {v}) outside 0..{self.n - 1}")
            if u > v:
                raise PayloadError(f"edge ({u}, {v}) is not normalised (u < v)")
        for s in self.separators:
            if not 0 <= s < self.n:
                raise PayloadError(f"separator {s} outside 0..{self.n - 1}")

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence[int]],
                   separators: Sequence[int] = ()) -> 'Graph':
        """Build a graph, rejecting duplicate edges in either orientation."""
        normalised = set()
        for edge in edges:
            u, v = int(edge[0]), int(edge[1])
            key = (min(u, v), max(u, v))
            if key in normalised:
                raise PayloadError(f"duplicate edge ({u}, {v})")
            normalised.add(key)
        return cls(n=n, edges=frozenset(normalised), separators=tuple(sorted(separators)))

    def sorted_edges(self) -> List[Edge]:
        return sorted(self.edges)

    def is_independent(self, vertices: Iterable[int]) -> bool:
        chosen = set(vertices)
        return not any(u in chosen and v in chosen for u, v in self.edges)

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.n))
        graph.add_edges_from(self.sorted_edges())
        return graph


@dataclass(frozen=True)
class QuboProblem:
    """E(x) = sum_i linear[i] x_i + sum_(i,j) quadratic[(i,j)] x_i x_j, i < j."""

    n: int
    linear: Tuple[float, ...]
    quadratic: Tuple[Tuple[Edge, float], ...]
    penalty: float

    def matrix(self) -> np.ndarray:
        """Symmetric matrix M with E(x) = x^T M x for binary x."""
        m = np.diag(np.asarray(self.linear, dtype=float)) if self.n else np.zeros((0, 0))
        for (i, j), c in self.quadratic:
            m[i, j] += c / 2.0
            m[j, i] += c / 2.0
        return m


@dataclass(frozen=True)
class SaSchedule:
    """Single-flip Metropolis annealing schedule with geometric cooling."""

    t0: float = 1.0
    alpha: float = 0.97
    sweeps: int = 500
    seed: int = 0
    restarts: int = 3

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise PayloadError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.sweeps < 1:
            raise PayloadError(f"sweeps must be >= 1, got {self.sweeps}")
        if self.t0 <= 0.0:
            raise PayloadError(f"t0 must be positive, got {self.t0}")
        if self.restarts < 1:
            raise PayloadError(f"restarts must be >= 1, got {self.restarts}")


@dataclass(frozen=True)
class ClusteredGraphSpec:
    """Parameters of a (K,d)-clustered graph with m clusters of d vertices."""

    k: int
    d: int
    m: int
    edge_prob: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.k < 0 or self.d < 1 or self.m < 1:
            raise PayloadError(
                f"need K >= 0, d >= 1, m >= 1; got K={self.k}, d={self.d}, m={self.m}"
            )
        if not 0.0 <= self.edge_prob <= 1.0:
            raise PayloadError(f"edge_prob must lie in [0, 1], got {self.edge_prob}")


def build_mis_qubo(graph: Graph, penalty: float = DEFAULT_PENALTY) -> QuboProblem:
    """
    Encode maximum independent set as E(x) = -sum x_i + P * sum_(i,j in E) x_i x_j.

    Args:
        graph: Input graph
        penalty: Edge penalty P, must exceed 1

    Returns:
        QuboProblem: -1 on every vertex, +P on every edge
    """
    if penalty <= 1:
        raise PayloadError(f"penalty must exceed 1 so optima stay independent, got {penalty}")
    return QuboProblem(
        n=graph.n,
        linear=tuple(-1.0 for _ in range(graph.n)),
        quadratic=tuple((edge, float(penalty)) for edge in graph.sorted_edges()),
        penalty=float(penalty),
    )


def qubo_energy(problem: QuboProblem, x: Sequence[int]) -> float:
    """Energy of one binary assignment."""
    if len(x) != problem.n:
        raise PayloadError(f"assignment has {len(x)} entries, problem has {problem.n} variables")
    energy = sum(c for c, xi in zip(problem.linear, x) if xi)
    energy += sum(c for (i, j), c in problem.quadratic if x[i] and x[j])
    return float(energy)


def _bit_chunks(n: int):
    """Yield (masks, bits) blocks covering all 2^n assignments in mask order."""
    total = 1 << n
    chunk = 1 << min(n, _CHUNK_BITS)
    shifts = np.arange(n, dtype=np.int64)
    for start in range(0, total, chunk):
        masks = np.arange(start, start + chunk, dtype=np.int64)
        yield masks, ((masks[:, None] >> shifts) & 1).astype(np.int8)


def _check_enumerable(n: int) -> None:
    if n > ENUMERATION_LIMIT:
        raise PayloadError(
            f"{n} variables exceed the enumeration bound of {ENUMERATION_LIMIT}; use sa_solve"
        )


def exhaustive_qubo_minimum(problem: QuboProblem) -> Tuple[float, Tuple[int, ...]]:
    """
    Minimise a QUBO by enumerating every assignment.

    Returns:
        tuple: (minimum energy, lowest-mask assignment attaining it)
    """
    _check_enumerable(problem.n)
    if problem.n == 0:
        return 0.0, ()
    linear = np.asarray(problem.linear, dtype=float)
    best_energy, best_mask = math.inf, 0
    for masks, bits in _bit_chunks(problem.n):
        energies = bits @ linear
        for (i, j), c in problem.quadratic:
            energies = energies + c * (bits[:, i] & bits[:, j])
        idx = int(np.argmin(energies))
        if energies[idx] < best_energy:
            best_energy, best_mask = float(energies[idx]), int(masks[idx])
    return best_energy, tuple((best_mask >> i) & 1 for i in range(problem.n))


def brute_force_mis(graph: Graph) -> Tuple[int, Tuple[int, ...]]:
    """
    Maximum independent set by exhaustive enumeration.

    Args:
        graph: Input graph with at most ENUMERATION_LIMIT vertices

    Returns:
        tuple: (MIS size, sorted witness vertices)
    """
    _check_enumerable(graph.n)
    if graph.n == 0:
        return 0, ()
    edges = graph.sorted_edges()
    best_size, best_mask = -1, 0
    for masks, bits in _bit_chunks(graph.n):
        violated = np.zeros(len(masks), dtype=bool)
        for u, v in edges:
            violated |= (bits[:, u] & bits[:, v]).astype(bool)
        sizes = np.where(violated, -1, bits.sum(axis=1))
        idx = int(np.argmax(sizes))
        if sizes[idx] > best_size:
            best_size, best_mask = int(sizes[idx]), int(masks[idx])
    witness = tuple(i for i in range(graph.n) if (best_mask >> i) & 1)
    if not graph.is_independent(witness):
        raise PayloadError(f"enumeration produced a dependent witness {witness}")
    return best_size, witness


def sa_solve(
    problem: QuboProblem, schedule: SaSchedule = SaSchedule()
) -> Tuple[Tuple[int, ...], float]:
    """
    Simulated annealing over single-bit flips.

    Each sweep visits every variable once in a fresh random order and applies
    the Metropolis rule at the current temperature, then cools T <- alpha * T.
    The best assignment seen over all restarts is returned.

    Args:
        problem: QUBO to minimise
        schedule: Annealing schedule, including the seed

    Returns:
        tuple: (best assignment, its energy)
    """
    n = problem.n
    if n == 0:
        return (), 0.0
    rng = np.random.Generator(np.random.PCG64(schedule.seed))
    couplings: List[List[Tuple[int, float]]] = [[] for _ in range(n)]
    for (i, j), c in problem.quadratic:
        couplings[i].append((j, c))
        couplings[j].append((i, c))

    best_x: Optional[List[int]] = None
    best_energy = math.inf
    for _ in range(schedule.restarts):
        x = [int(b) for b in rng.integers(0, 2, size=n)]
        local = [
            problem.linear[i] + sum(c for j, c in couplings[i] if x[j])
            for i in range(n)
        ]
        energy = qubo_energy(problem, x)
        if energy < best_energy:
            best_energy, best_x = energy, list(x)
        temperature = schedule.t0
        for _ in range(schedule.sweeps):
            order = rng.permutation(n).tolist()
            draws = rng.random(n).tolist()
            for i, u in zip(order, draws):
                delta = local[i] if x[i] == 0 else -local[i]
                if delta > 0 and u >= math.exp(-delta / temperature):
                    continue
                x[i] ^= 1
                sign = 1 if x[i] else -1
                energy += delta
                for j, c in couplings[i]:
                    local[j] += sign * c
                if energy < best_energy:
                    best_energy, best_x = energy, list(x)
            temperature *= schedule.alpha

    assignment = tuple(best_x)
    return assignment, qubo_energy(problem, assignment)


def random_graph(n: int, edge_prob: float, rng: np.random.Generator) -> Graph:
    """G(n, p) instance drawn from the given generator."""
    if n < 0 or not 0.0 <= edge_prob <= 1.0:
        raise PayloadError(f"need n >= 0 and edge_prob in [0, 1], got n={n}, p={edge_prob}")
    draws = rng.random((n, n))
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if draws[i, j] < edge_prob]
    return Graph.from_edges(n, edges)


def gen_clustered_graph(spec: ClusteredGraphSpec) -> Graph:
    """
    Generate a (K,d)-clustered graph.

    Vertices 0..m*d-1 form m clusters of d vertices, each made connected by a
    random spanning tree plus extra intra-cluster edges with probability
    edge_prob. The last K vertices are separators; cluster c is always wired to
    separator c mod K, and further cluster-separator edges appear with
    probability edge_prob / 2.

    Args:
        spec: Generator parameters

    Returns:
        Graph: graph whose `separators` field lists S
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    n_cluster_vertices = spec.m * spec.d
    separators = list(range(n_cluster_vertices, n_cluster_vertices + spec.k))
    edges = set()
    for c in range(spec.m):
        members = list(range(c * spec.d, (c + 1) * spec.d))
        for idx in range(1, len(members)):
            parent = members[int(rng.integers(0, idx))]
            edges.add((parent, members[idx]))
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                pair = (members[a], members[b])
                if pair not in edges and rng.random() < spec.edge_prob:
                    edges.add(pair)
        if spec.k:
            anchor = separators[c % spec.k]
            edges.add((members[int(rng.integers(0, len(members)))], anchor))
            for vertex in members:
                for sep in separators:
                    if (vertex, sep) not in edges and rng.random() < spec.edge_prob / 2.0:
                        edges.add((vertex, sep))
    for a in range(len(separators)):
        for b in range(a + 1, len(separators)):
            if rng.random() < spec.edge_prob:
                edges.add((separators[a], separators[b]))

    graph = Graph.from_edges(n_cluster_vertices + spec.k, edges, separators)
    if not is_kd_clustered(graph, graph.separators, spec.d):
        raise PayloadError(f"generator broke the ({spec.k},{spec.d}) component bound")
    return graph


def is_kd_clustered(graph: Graph, separators: Sequence[int], d: int) -> bool:
    """True when removing `separators` leaves components of at most d vertices."""
    reduced = graph.to_networkx()
    reduced.remove_nodes_from(separators)
    return all(len(component) <= d for component in nx.connected_components(reduced))


def read_edge_list(path: Union[str, Path]) -> Graph:
    """Read `n m` followed by m lines of `u v`; skipped blank and '#' lines keep their numbers."""
    numbered: List[Tuple[int, str]] = []
    for lineno, raw in enumerate(Path(path).read_bytes().splitlines(), start=1):
        try:
            line = raw.decode('utf-8').strip()
        except UnicodeDecodeError as e:
            message = f"{path}: line {lineno}: not valid UTF-8 at byte {e.start}"
            raise PayloadError(message) from None
        if line and not line.startswith('#'):
            numbered.append((lineno, line))
    if not numbered:
        raise PayloadError(f"{path}: empty edge list")
    header_line, header = numbered[0]
    try:
        n, m = (int(tok) for tok in header.split())
    except ValueError:
        raise PayloadError(f"{path}: line {header_line}: expected 'n m', got {header!r}")
    if len(numbered) - 1 != m:
        raise PayloadError(f"{path}: header declares {m} edges, found {len(numbered) - 1}")
    edges = []
    for lineno, line in numbered[1:]:
        try:
            u, v = (int(tok) for tok in line.split())
        except ValueError:
            raise PayloadError(f"{path}: line {lineno}: expected 'u v', got {line!r}")
        edges.append((u, v))
    return Graph.from_edges(n, edges)


def write_edge_list(graph: Graph, path: Union[str, Path]) -> None:
    rows = [f"{graph.n} {len(graph.edges)}"] + [f"{u} {v}" for u, v in graph.sorted_edges()]
    Path(path).write_text('\n'.join(rows) + '\n', encoding='utf-8')
