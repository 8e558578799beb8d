"""Counter-based random streams keyed by (master seed, domain, keys...).

Every replica owns one Philox stream per domain. Streams never depend on
which thread runs the replica, so parallel schedules cannot change draws.
"""

import hashlib

import numpy as np

_DOMAIN_CACHE: dict[str, int] = {}


def domain_key(name: str) -> int:
    """Stable 32-bit integer for a domain name."""
    key = _DOMAIN_CACHE.get(name)
    if key is None:
        digest = hashlib.blake2b(name.encode("utf-8"), digest_size=4).digest()
        key = int.from_bytes(digest, "little")
        _DOMAIN_CACHE[name] = key
    return key


def stream(master_seed: int, domain: str, *keys: int) -> np.random.Generator:
    """Independent generator for ``domain`` and integer ``keys`` (replica, N, ...)."""
    if master_seed < 0:
        raise ValueError(f"master seed must be non-negative, got {master_seed}")
    spawn_key = (domain_key(domain),) + tuple(int(k) for k in keys)
    seq = np.random.SeedSequence(int(master_seed), spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(seq))
