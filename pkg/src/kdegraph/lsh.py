"""Euclidean locality-sensitive hashing via p-stable random projections.

A key is ``concat`` quantized projections: key[i] = floor((<g_i, x> + b_i) / width)
with g_i standard normal and b_i uniform in [0, width).  Two points at distance
c * r collide in one coordinate with the closed-form probability
``collision_prob(width_ratio, c)`` when width = width_ratio * r, which is all
the band machinery needs: a near rate p(1) and a decaying far rate p(c).

``BucketTable`` is a plain exact-key multimap (key equality is exact integer
equality; no probing, no key mixing beyond Python's own hashing).
``ProjectionBank`` stacks every copy of a band's hash function into one
matrix so whole batches of points are keyed with a single product; its packed
byte keys are the little-endian int64 concatenation of the tuple form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "HashFunctionSpec",
    "BucketTable",
    "ProjectionBank",
    "draw_hash",
    "hash_point",
    "collision_prob",
]

_SQRT2 = math.sqrt(2.0)
_SQRT_TWO_PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class HashFunctionSpec:
    """One concatenated hash function: (concat, dim) projections plus offsets."""

    projections: np.ndarray = field(repr=False)
    offsets: np.ndarray = field(repr=False)
    width: float

    @property
    def concat(self) -> int:
        return self.projections.shape[0]


def draw_hash(dim: int, r_near: float, width_ratio: float, concat: int,
              rng: np.random.Generator) -> HashFunctionSpec:
    """Draw one hash spec with bucket width = width_ratio * r_near."""
    if concat <= 0:
        raise ValueError(f"concat must be positive, got {concat}")
    width = width_ratio * r_near
    if not width > 0.0:
        raise ValueError(f"bucket width must be positive, got {width}")
    projections = rng.standard_normal((concat, dim))
    offsets = rng.uniform(0.0, width, concat)
    return HashFunctionSpec(projections=projections, offsets=offsets, width=width)


def hash_point(spec: HashFunctionSpec, x: np.ndarray) -> tuple[int, ...]:
    """Bucket key of one point: exact tuple of floor-quantized projections."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (spec.projections.shape[1],):
        raise ValueError(f"dimension mismatch: {x.shape} vs {spec.projections.shape[1]}")
    cells = np.floor((spec.projections @ x + spec.offsets) / spec.width)
    return tuple(int(v) for v in cells)


def collision_prob(width_ratio: float, c: float) -> float:
    """Single-coordinate collision probability of points at distance c * r_near.

    Closed form for the floor-quantized projection with width w = width_ratio
    (in units of r_near):  1 - 2*Phi(-w/c) - (2c / (sqrt(2 pi) w)) * (1 - exp(-(w/c)^2 / 2)).
    c = 0 collides with certainty.
    """
    if not width_ratio > 0.0:
        raise ValueError(f"width_ratio must be positive, got {width_ratio}")
    if c < 0.0:
        raise ValueError(f"distance scale must be nonnegative, got {c}")
    if c == 0.0:
        return 1.0
    t = width_ratio / c
    phi_neg = 0.5 * (1.0 + math.erf(-t / _SQRT2))
    return 1.0 - 2.0 * phi_neg - (2.0 / (_SQRT_TWO_PI * t)) * (1.0 - math.exp(-t * t / 2.0))


class BucketTable:
    """Exact-key multimap from bucket keys to id sets."""

    __slots__ = ("buckets",)

    def __init__(self):
        self.buckets: dict = {}

    def insert(self, key, item) -> None:
        bucket = self.buckets.get(key)
        if bucket is None:
            self.buckets[key] = {item}
        else:
            bucket.add(item)

    def remove(self, key, item) -> None:
        """Remove item from key's bucket; empty buckets are dropped entirely."""
        bucket = self.buckets.get(key)
        if bucket is None or item not in bucket:
            raise KeyError(f"item {item!r} not present under key {key!r}")
        bucket.discard(item)
        if not bucket:
            del self.buckets[key]

    def lookup(self, key) -> frozenset:
        bucket = self.buckets.get(key)
        return frozenset(bucket) if bucket else frozenset()

    def __len__(self) -> int:
        return len(self.buckets)


class ProjectionBank:
    """All hash copies of one band, stacked for batch keying.

    ``copies`` independent specs of ``concat`` rows each are drawn from a
    single generator call, so a bank is reproducible from its seed label.
    ``packed_keys`` returns bytes keys laid out row-major by (point, copy);
    the bytes of copy ell for point p are exactly the little-endian int64s of
    ``hash_point`` on the corresponding spec.
    """

    __slots__ = ("copies", "concat", "dim", "width", "_proj_t", "_offsets")

    def __init__(self, dim: int, width: float, copies: int, concat: int,
                 rng: np.random.Generator):
        if copies <= 0 or concat <= 0:
            raise ValueError(f"copies and concat must be positive, got {copies}, {concat}")
        if not width > 0.0:
            raise ValueError(f"bucket width must be positive, got {width}")
        self.copies = copies
        self.concat = concat
        self.dim = dim
        self.width = width
        proj = rng.standard_normal((copies * concat, dim))
        self._proj_t = np.ascontiguousarray(proj.T)
        self._offsets = rng.uniform(0.0, width, copies * concat)

    def spec(self, copy: int) -> HashFunctionSpec:
        """View of one copy as a standalone spec (for cross-checking)."""
        lo = copy * self.concat
        hi = lo + self.concat
        return HashFunctionSpec(projections=self._proj_t.T[lo:hi],
                                offsets=self._offsets[lo:hi], width=self.width)

    def packed_keys(self, points: np.ndarray) -> list[bytes]:
        """Byte keys for an (m, dim) block, index [p * copies + ell]."""
        grid = np.floor((points @ self._proj_t + self._offsets) / self.width)
        cells = np.ascontiguousarray(grid, dtype=np.int64)
        raw = cells.tobytes()
        stride = self.concat * 8
        return [raw[o:o + stride] for o in range(0, len(raw), stride)]

    def packed_keys_one(self, x: np.ndarray) -> list[bytes]:
        return self.packed_keys(x[None, :])
