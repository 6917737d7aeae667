"""Small shared helpers: stable hashing, checksums, deterministic parallel map."""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def hash64(text: str) -> int:
    """Stable 64-bit hash of a string (blake2b, little-endian)."""
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def checksum8(payload: bytes) -> bytes:
    """8-byte content checksum used by the binary file formats."""
    return hashlib.blake2b(payload, digest_size=8).digest()


def spawn_rngs(seed, n):
    """n independent, reproducible generators derived from one seed."""
    seqs = np.random.SeedSequence(seed).spawn(n)
    return [np.random.default_rng(s) for s in seqs]


def ordered_map(fn, items, threads=1):
    """Apply fn to items, results in input order.

    threads > 1 uses a thread pool; fn must be a pure function of its item
    for the output to be identical to the sequential path.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
