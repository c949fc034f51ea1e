"""Deterministic RNG derivation.

All randomness in the simulator flows through generators derived from a
base seed plus a tuple of context parts (node id, round index, purpose
tag, ...). Derivation uses CRC32 of the string form of each part, so the
same inputs yield the same stream in any process, on any platform, and
independently of dict ordering or thread scheduling.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK = 0xFFFFFFFF


def _part_to_int(part: object) -> int:
    if isinstance(part, bool):
        return int(part)
    if isinstance(part, int):
        return part & _MASK
    return zlib.crc32(str(part).encode("utf-8")) & _MASK


def stable_seed(*parts: object) -> int:
    """Collapse context parts into a single non-negative 32-bit seed."""
    acc = 0
    for part in parts:
        acc = zlib.crc32(_part_to_int(part).to_bytes(4, "big"), acc) & _MASK
    return acc


def rng_for(*parts: object) -> np.random.Generator:
    """A Generator seeded by the full context tuple (order-sensitive)."""
    return np.random.default_rng([_part_to_int(p) for p in parts])
