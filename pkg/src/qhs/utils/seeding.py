"""
Deterministic random streams for qhs

Every stream is a numpy PCG64 generator seeded from the scenario seed plus a
stable key, so the stream a job sees does not depend on how many other jobs
exist or in which order they were built.
"""
import zlib
from typing import Union

import numpy as np

SEED_MASK = (1 << 64) - 1


def _key(name: Union[str, int]) -> int:
    if isinstance(name, int):
        return name & 0xFFFFFFFF
    return zlib.crc32(name.encode('utf-8'))


def stream(seed: int, *names: Union[str, int]) -> np.random.Generator:
    """
    Build an independent generator for a named sub-stream.

    Args:
        seed: 64-bit scenario seed
        names: Stream labels, e.g. ('job', 'gc-003') or ('payload', 'fig4', 7)

    Returns:
        np.random.Generator: PCG64 generator unique to (seed, names)
    """
    sequence = np.random.SeedSequence(
        entropy=seed & SEED_MASK,
        spawn_key=tuple(_key(name) for name in names),
    )
    return np.random.Generator(np.random.PCG64(sequence))


def job_stream(seed: int, job_id: str) -> np.random.Generator:
    """Generator for per-job randomness (quantum runtime jitter)."""
    return stream(seed, 'job', job_id)


def derive_seed(seed: int, *names: Union[str, int]) -> int:
    """Draw a 64-bit child seed, for components that take a plain integer."""
    return int(stream(seed, *names).integers(0, SEED_MASK, dtype=np.uint64, endpoint=True))
