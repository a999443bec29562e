"""Counter-based random streams.

Every random quantity in the package is keyed by (seed, stream name, object
key) so that results do not depend on exploration order or on how replicas
are split across workers.  Scalar coins are derived from a BLAKE2b digest;
vector draws go through numpy's Philox generator keyed the same way.
"""

from __future__ import annotations

from hashlib import blake2b

import numpy as np

_U64 = float(1 << 64)


def _digest(seed: int, stream: str, key) -> bytes:
    h = blake2b(digest_size=16)
    h.update(seed.to_bytes(8, "little", signed=False))
    h.update(stream.encode())
    h.update(repr(key).encode())
    return h.digest()


def uniform(seed: int, stream: str, key) -> float:
    """Deterministic uniform in [0, 1) for one named object."""
    d = _digest(seed, stream, key)
    return int.from_bytes(d[:8], "little") / _U64


def coin(seed: int, stream: str, key, p: float) -> int:
    """Deterministic Bernoulli(p) bit for one named object."""
    return 1 if uniform(seed, stream, key) < p else 0


def generator(seed: int, stream: str, key) -> np.random.Generator:
    """Philox generator keyed by (seed, stream, object key).

    Use for vector draws tied to a single object (e.g. all parallel copies
    of one edge).  Each (seed, stream, key) triple gives an independent
    stream regardless of call order.
    """
    d = _digest(seed, stream, key)
    k = np.frombuffer(d, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=k))


def replica_generator(seed: int, replica: int) -> np.random.Generator:
    """Independent generator for Monte Carlo replica `replica`."""
    return generator(seed, "replica", replica)


def derive(seed: int, key) -> int:
    """Independent 63-bit child seed for a named sub-experiment."""
    d = _digest(seed, "derive", key)
    return int.from_bytes(d[:8], "little") >> 1
