"""Deterministic randomness derived from a master seed and structured labels.

Every random choice in the package (sampling coins, projection draws, routing
decisions) is a pure function of (master_seed, label).  Labels name the role of
the draw -- e.g. ("data-coin", epoch, point_id) or ("hash", epoch, level, rep,
band) -- so the same decision is reproduced regardless of the order in which
points arrive.  This is what makes incremental updates bit-comparable to a
fresh rebuild.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["derive_key", "derive_rng", "uniform01"]

_U64_SCALE = 2.0 ** -53


def _pack_label(parts: tuple) -> bytes:
    chunks = []
    for part in parts:
        if isinstance(part, str):
            raw = part.encode("utf-8")
            chunks.append(b"s" + len(raw).to_bytes(4, "little") + raw)
        elif isinstance(part, (int, np.integer)):
            chunks.append(b"i" + int(part).to_bytes(16, "little", signed=True))
        else:
            raise TypeError(f"label parts must be str or int, got {type(part)!r}")
    return b"".join(chunks)


def derive_key(master_seed: int, *label) -> bytes:
    """32-byte digest identifying (master_seed, label)."""
    h = hashlib.blake2b(
        _pack_label(label),
        digest_size=32,
        key=int(master_seed).to_bytes(16, "little", signed=True),
    )
    return h.digest()


def derive_rng(master_seed: int, *label) -> np.random.Generator:
    """Counter-based generator keyed by (master_seed, label).

    Streams with distinct labels are independent; the same label always
    reproduces the same stream.
    """
    key = int.from_bytes(derive_key(master_seed, *label)[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))


def uniform01(master_seed: int, *label) -> float:
    """One uniform draw in [0, 1) keyed by (master_seed, label)."""
    h = hashlib.blake2b(
        _pack_label(label),
        digest_size=8,
        key=int(master_seed).to_bytes(16, "little", signed=True),
    )
    word = int.from_bytes(h.digest(), "little")
    return (word >> 11) * _U64_SCALE
