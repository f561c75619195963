"""Radial kernels and their geometric weight-band geometry.

A kernel k(x, y) in [0, 1] with k(x, x) = 1 is cut into geometric weight bands:
band j collects the points whose kernel weight against a fixed query lies in
the half-open interval (2^(-j), 2^(-j+1)].
Relative to a density threshold mu there are J = ceil(log2(2n / mu)) bands;
anything at weight <= 2^-J falls into the residual band J + 1.  For a radial
kernel each band boundary is a distance: r_j is the radius at which the kernel
value equals 2^-j, so band j lives inside the annulus (r_{j-1}, r_j].

Supported kernels and their band radii (sigma > 0 is the bandwidth):

    gaussian       k = exp(-sigma * d^2)         r_j = sqrt(j * ln 2 / sigma)
    exponential    k = exp(-sigma * d)           r_j = j * ln 2 / sigma
    t_student      k = 1 / (1 + sigma * d^p)     r_j = ((2^j - 1) / sigma)^(1/p)

The band geometry prices importance sampling: recovering band j from a hashed
sample needs hash keys long enough that points from farther bands rarely
collide, and enough independent hash copies that the near band is found with
high probability.  ``concat_count`` and ``cost_of_kernel`` compute those
quantities; logarithms are base 2 throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

__all__ = [
    "KernelConfig",
    "WeightLevels",
    "CostProfile",
    "eval_kernel",
    "kernel_row",
    "kernel_matrix",
    "ceil_log2",
    "raw_band_index",
    "weight_level_index",
    "band_index_array",
    "distance_levels",
    "concat_count",
    "cost_of_kernel",
]

_KINDS = ("gaussian", "exponential", "t_student")
_LN2 = math.log(2.0)


@dataclass(frozen=True)
class KernelConfig:
    """Kernel family, bandwidth, and (for t_student) the distance exponent."""

    kind: str
    sigma: float
    degree: float = 2.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {_KINDS}")
        if not (self.sigma > 0.0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma}")
        if self.kind == "t_student" and not self.degree > 0.0:
            raise ValueError(f"degree must be positive, got {self.degree}")


@dataclass(frozen=True)
class WeightLevels:
    """Band structure of a kernel relative to a density threshold.

    ``radii[j-1]`` is the distance at which the kernel value drops to 2^-j,
    for j = 1..n_bands.  ``n_bands`` may be 0 when the threshold already
    covers the whole weight range (mu = 2n).
    """

    mu: float
    n: int
    n_bands: int
    radii: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class CostProfile:
    """Per-band hashing price of a kernel at a given density threshold.

    ``concat`` holds the hash concatenation count per band, ``per_band`` the
    repetition cost 2^e (e the band's inner exponent), and ``cost`` the
    maximum per-band cost.
    """

    mu: float
    n: int
    concat: list[int]
    per_band: list[float]
    cost: float


def _distances(x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(np.linalg.norm(x - y))


def eval_kernel(config: KernelConfig, x, y) -> float:
    """Kernel weight of a single pair, in [0, 1]."""
    d = _distances(x, y)
    if config.kind == "gaussian":
        return math.exp(-config.sigma * d * d)
    if config.kind == "exponential":
        return math.exp(-config.sigma * d)
    return 1.0 / (1.0 + config.sigma * d ** config.degree)


def kernel_row(config: KernelConfig, q: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Kernel weights of one query against a (m, dim) block of points."""
    q = np.asarray(q, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[None, :]
    if points.shape[1] != q.shape[0]:
        raise ValueError(f"dimension mismatch: {q.shape[0]} vs {points.shape[1]}")
    diff = points - q[None, :]
    if config.kind == "gaussian":
        return np.exp(-config.sigma * np.einsum("ij,ij->i", diff, diff))
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    if config.kind == "exponential":
        return np.exp(-config.sigma * dist)
    return 1.0 / (1.0 + config.sigma * dist ** config.degree)


def kernel_matrix(config: KernelConfig, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Pairwise kernel weights, shape (len(left), len(right)).

    Distances go through the expanded |a|^2 + |b|^2 - 2ab form with a clamp at
    zero, chunked so the scratch stays bounded for large blocks.
    """
    left = np.atleast_2d(np.asarray(left, dtype=np.float64))
    right = np.atleast_2d(np.asarray(right, dtype=np.float64))
    if left.shape[1] != right.shape[1]:
        raise ValueError(f"dimension mismatch: {left.shape[1]} vs {right.shape[1]}")
    rr = np.einsum("ij,ij->i", right, right)
    out = np.empty((left.shape[0], right.shape[0]), dtype=np.float64)
    chunk = max(1, 16_000_000 // max(1, right.shape[0] * 8))
    for lo in range(0, left.shape[0], chunk):
        hi = min(lo + chunk, left.shape[0])
        block = left[lo:hi]
        sq = np.einsum("ij,ij->i", block, block)[:, None] + rr[None, :] - 2.0 * block @ right.T
        np.maximum(sq, 0.0, out=sq)
        if config.kind == "gaussian":
            out[lo:hi] = np.exp(-config.sigma * sq)
        elif config.kind == "exponential":
            out[lo:hi] = np.exp(-config.sigma * np.sqrt(sq))
        else:
            out[lo:hi] = 1.0 / (1.0 + config.sigma * np.sqrt(sq) ** config.degree)
    return out


def ceil_log2(x: float) -> int:
    """Exact ceil(log2(x)) for positive floats (no rounding slop)."""
    if not x > 0.0:
        raise ValueError(f"ceil_log2 needs x > 0, got {x}")
    m, e = math.frexp(x)  # x = m * 2^e with m in [0.5, 1)
    return e - 1 if m == 0.5 else e


def _n_bands(mu: float, n: int) -> int:
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if not 1.0 <= mu <= 2.0 * n:
        raise ValueError(f"mu must lie in [1, 2n] = [1, {2 * n}], got {mu}")
    # exact ceil(log2(2n / mu)): float division could round the ratio across
    # a power of two, so compare 2n <= mu * 2^J in integer arithmetic
    ratio = 2 * n / Fraction(mu)
    num, den = ratio.numerator, ratio.denominator
    j = num.bit_length() - den.bit_length() + 1
    while j > 0 and num <= den << (j - 1):
        j -= 1
    return max(0, j)


def raw_band_index(w: float) -> int:
    """Uncapped band of a weight in (0, 1]: the j with w in (2^-j, 2^-j+1].

    Weight 0 maps to a huge sentinel band so callers can treat it as residual
    at every truncation.
    """
    if w < 0.0 or w > 1.0:
        raise ValueError(f"kernel weight must lie in [0, 1], got {w}")
    if w == 0.0:
        return 1 << 30
    # log2 is within an ulp, so the floor can be off by one right at a band
    # edge; ldexp comparisons are exact and settle it
    j = math.floor(-math.log2(w)) + 1
    if j > 1 and w > math.ldexp(1.0, -(j - 1)):
        j -= 1
    elif w <= math.ldexp(1.0, -j):
        j += 1
    return j


def weight_level_index(w: float, mu: float, n: int) -> int:
    """Band of a kernel weight: j with w in (2^-j, 2^-j+1], else n_bands + 1.

    Weight 0 (including underflow) lands in the residual band.
    """
    bands = _n_bands(mu, n)
    j = raw_band_index(w)
    return j if j <= bands else bands + 1


def band_index_array(w: np.ndarray, n_bands: int) -> np.ndarray:
    """Vectorized band indices against a fixed band count (residual = n_bands+1)."""
    w = np.asarray(w, dtype=np.float64)
    j = np.full(w.shape, n_bands + 1, dtype=np.int64)
    pos = w > 0.0
    jp = np.floor(-np.log2(w[pos])).astype(np.int64) + 1
    wp = w[pos]
    jp[(jp > 1) & (wp > np.ldexp(1.0, -(jp - 1)))] -= 1
    jp[wp <= np.ldexp(1.0, -jp)] += 1
    j[pos] = jp
    np.minimum(j, n_bands + 1, out=j)
    return j


def distance_levels(config: KernelConfig, mu: float, n: int) -> WeightLevels:
    """Band radii of a kernel relative to density threshold mu on n points."""
    bands = _n_bands(mu, n)
    j = np.arange(1, bands + 1, dtype=np.float64)
    if config.kind == "gaussian":
        radii = np.sqrt(j * _LN2 / config.sigma)
    elif config.kind == "exponential":
        radii = j * _LN2 / config.sigma
    else:
        radii = ((np.exp2(j) - 1.0) / config.sigma) ** (1.0 / config.degree)
    return WeightLevels(mu=float(mu), n=int(n), n_bands=bands, radii=radii)


_TIE_TOL = 1e-9


def _snapped_ceil(t: float) -> int:
    # radius ratios are often exact rationals, putting t right on an integer;
    # snap float noise within a relative 1e-9 onto the tie so the result is
    # stable under ulp-level perturbation of sigma
    r = round(t)
    if abs(t - r) <= _TIE_TOL * max(1.0, abs(t)):
        return int(r)
    return math.ceil(t)


def _band_exponent(radii: np.ndarray, bands: int, band: int, n: int) -> int:
    """Inner exponent of the repetition-cost formula for one band.

    max over i = band+1 .. bands+1 of ceil((i - band) / c^2), where
    c = min(r_{i-1} / r_band, (log2 n)^(1/7)) clips the usable gap ratio.
    Ties within float noise of an integer resolve to that integer.
    """
    cap = math.log2(n) ** (1.0 / 7.0)
    r_band = radii[band - 1]
    if not r_band > 0.0:
        raise ValueError(f"degenerate band radius r_{band} = {r_band}")
    best = 0
    for i in range(band + 1, bands + 2):
        c = min(radii[i - 2] / r_band, cap)
        best = max(best, _snapped_ceil((i - band) / (c * c)))
    return best


def concat_count(config: KernelConfig, mu: float, n: int, band: int, p_near: float) -> int:
    """Hash concatenation count for one band at near-collision rate p_near."""
    if not 0.0 < p_near < 1.0:
        raise ValueError(f"p_near must lie in (0, 1), got {p_near}")
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    levels = distance_levels(config, mu, n)
    if not 1 <= band <= levels.n_bands:
        raise ValueError(f"band must lie in [1, {levels.n_bands}], got {band}")
    exponent = _band_exponent(levels.radii, levels.n_bands, band, n)
    return max(1, _snapped_ceil(exponent / -math.log2(p_near)))


def cost_of_kernel(config: KernelConfig, mu: float, n: int, p_near: float) -> CostProfile:
    """Full per-band cost profile; ``cost`` is the worst band's 2^exponent.

    With no bands (mu = 2n) the profile is empty and the cost is 1.
    """
    if not 0.0 < p_near < 1.0:
        raise ValueError(f"p_near must lie in (0, 1), got {p_near}")
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    levels = distance_levels(config, mu, n)
    concat: list[int] = []
    per_band: list[float] = []
    for band in range(1, levels.n_bands + 1):
        exponent = _band_exponent(levels.radii, levels.n_bands, band, n)
        per_band.append(2.0 ** exponent)
        concat.append(max(1, _snapped_ceil(exponent / -math.log2(p_near))))
    cost = max(per_band) if per_band else 1.0
    return CostProfile(mu=float(mu), n=int(n), concat=concat, per_band=per_band, cost=cost)
