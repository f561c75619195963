"""Dynamic sketch-based density estimation under point insertion.

The structure keeps one sub-estimator array per density threshold 2^i,
i = 0 .. ceil(log2(2 n')), where n' is the size frozen at the last rebuild.
Each threshold level holds K1 = m * N independent repetitions (N blocks of m;
an estimate is the median of the N block means).  A repetition subsamples the
data per weight band j at rate p(i, j) = min(2^-(j+1) / 2^i, 1), with a
residual band at rate 1 / (2 n'); sampled points are recovered at query time
through band-scaled locality-sensitive hashes, and each recovered point of
matching band contributes weight / p.

Estimates are resolved by descending the thresholds from the top: a level is
rejected once its median exceeds its threshold, and the level just above the
first rejection is where the query settles ("stop").  A registered query keeps
live estimator state at every level from its stop up to the top, so insertions
only touch hash buckets and per-estimator sums, never a rebuild.  Because
contributions are nonnegative, a rejected level stays rejected, and the stop
can only rise; when the data count more than doubles past n', the whole
structure is rebuilt with a new epoch.

Determinism: every random choice is a pure function of (seed, purpose, epoch,
identity) — hash banks of (level, band), sampling coins of the point id — so
the final state after any insertion order matches a fresh build on the same
point set.  With ``exact_replay=True`` the per-estimator sums are additionally
re-accumulated in sorted point-id order on every change, which makes the
equality bit-exact at float level rather than merely up to addition order.
"""

from __future__ import annotations

import math

import numpy as np

from .kernels import (
    KernelConfig,
    ceil_log2,
    concat_count,
    distance_levels,
    eval_kernel,
    raw_band_index,
)
from .lsh import BucketTable, ProjectionBank, collision_prob
from .rng import derive_rng

__all__ = ["DynamicKde"]


class _BandCell:
    """Hash state of one (level, band): a shared bank plus per-copy buckets."""

    __slots__ = ("bank", "data", "query", "prob", "shift")

    def __init__(self, bank: ProjectionBank, prob: float, shift: int):
        self.bank = bank
        self.data = [BucketTable() for _ in range(bank.copies)]
        self.query = [BucketTable() for _ in range(bank.copies)]
        self.prob = prob
        self.shift = shift  # contribution of weight w is ldexp(w, shift)


class _Level:
    """One density threshold: band cells, per-repetition samples, members."""

    __slots__ = ("index", "mu", "n_bands", "cells", "samples", "residual", "members")

    def __init__(self, index: int, n_bands: int, reps: int):
        self.index = index
        self.mu = math.ldexp(1.0, index)
        self.n_bands = n_bands
        self.cells: list[_BandCell] = []
        # samples[a][j-1] is the id set of repetition a's band-j subsample
        self.samples = [[set() for _ in range(n_bands)] for _ in range(reps)]
        self.residual = [set() for _ in range(reps)]
        self.members: set[int] = set()


class DynamicKde:
    """Insertion-only density sketch over a fixed kernel.

    ``data`` seeds the structure; queries are registered afterwards with
    explicit integer ids and stay live, their estimates maintained across
    insertions.  ``add_data_point`` returns the queries whose returned
    estimate changed, with the new values.

    ``n_prime`` and ``epoch`` pin the rebuild state explicitly, which lets a
    fresh build reproduce the exact structure an incremental run arrived at.
    """

    def __init__(self, config: KernelConfig, epsilon: float = 0.5, seed: int = 0,
                 data: np.ndarray | None = None, point_ids=None,
                 c_factor: float = 1.0, rep_scale: float = 1.0,
                 concat_cap: int | None = 4, width_ratio: float = 4.0,
                 exact_replay: bool = False, n_prime: int | None = None,
                 epoch: int = 0):
        if not 0.0 < epsilon <= 2.0:
            raise ValueError(f"epsilon must lie in (0, 2], got {epsilon}")
        if c_factor <= 0.0 or rep_scale <= 0.0:
            raise ValueError("c_factor and rep_scale must be positive")
        if concat_cap is not None and concat_cap < 1:
            raise ValueError(f"concat_cap must be at least 1, got {concat_cap}")
        self.config = config
        self.epsilon = epsilon
        self.seed = seed
        self.c_factor = c_factor
        self.rep_scale = rep_scale
        self.concat_cap = concat_cap
        self.width_ratio = width_ratio
        self.exact_replay = exact_replay
        self.p_near = collision_prob(width_ratio, 1.0)

        self._points: dict[int, np.ndarray] = {}
        self._queries: dict[int, np.ndarray] = {}
        self._stops: dict[int, int] = {}
        self._z: dict[tuple[int, int], list[float]] = {}
        self._contribs: dict[tuple[int, int, int], dict[int, float]] = {}
        self._estimates: dict[int, float] = {}
        self._levels: list[_Level] = []
        self._dim: int | None = None
        self._next_auto = 0
        self.last_update_counts: dict[int, int] = {}
        self.counters = {"inserts": 0, "reinits": 0, "z_updates": 0}

        rows = None
        if data is not None:
            rows = np.atleast_2d(np.asarray(data, dtype=np.float64))
            if rows.size == 0:
                rows = None
        count = 0 if rows is None else rows.shape[0]
        if point_ids is None:
            ids = list(range(count))
        else:
            ids = [int(i) for i in point_ids]
            if len(ids) != count or len(set(ids)) != count:
                raise ValueError("point_ids must be unique and match the data length")
        self._epoch = int(epoch)
        self._n = count
        if n_prime is not None:
            if n_prime < 1 or count - n_prime > n_prime:
                raise ValueError(f"n_prime {n_prime} inconsistent with {count} points")
            self._n_prime = int(n_prime)
        else:
            self._n_prime = max(1, count)
        if rows is not None:
            for pid, row in zip(ids, rows):
                self._points[pid] = np.ascontiguousarray(row)
            self._next_auto = max(ids) + 1
            self._dim = rows.shape[1]
            self._build_epoch()
            for pid in sorted(self._points):
                self._absorb_point(pid, self._points[pid], update_queries=False)

    # ------------------------------------------------------------------
    # epoch construction

    def _build_epoch(self) -> None:
        np_ = self._n_prime
        top = ceil_log2(2.0 * np_)
        self._top = top
        self._block_count = top  # N: one median block per doubling of 2n'
        self._block_size = math.ceil(self.c_factor / (self.epsilon * self.epsilon))
        self._reps = self._block_count * self._block_size
        self._levels = []
        for i in range(top + 1):
            n_bands = max(0, top - i)
            level = _Level(i, n_bands, self._reps)
            if n_bands > 0:
                geom = distance_levels(self.config, level.mu, np_)
                assert geom.n_bands == n_bands
                for j in range(1, n_bands + 1):
                    if np_ < 2:
                        concat = 1
                    else:
                        concat = concat_count(self.config, level.mu, np_, j, self.p_near)
                        if self.concat_cap is not None:
                            concat = min(concat, self.concat_cap)
                    copies = max(1, math.ceil(
                        self.rep_scale * math.log2(np_) * self.p_near ** (-concat)))
                    bank = ProjectionBank(
                        self._dim, self.width_ratio * float(geom.radii[j - 1]),
                        copies, concat, derive_rng(self.seed, "hash", self._epoch, i, j))
                    level.cells.append(_BandCell(bank, math.ldexp(1.0, -(j + 1 + i)), j + 1 + i))
            self._levels.append(level)
        # canonical coin layout: for i, for a, for j in 1..bands+1 (last = residual)
        cl, ca, cj, cp = [], [], [], []
        for i, level in enumerate(self._levels):
            for a in range(self._reps):
                for j in range(1, level.n_bands + 1):
                    cl.append(i); ca.append(a); cj.append(j)
                    cp.append(level.cells[j - 1].prob)
                cl.append(i); ca.append(a); cj.append(level.n_bands + 1)
                cp.append(1.0 / (2.0 * np_))
        self._cell_level = np.asarray(cl, dtype=np.int32)
        self._cell_rep = np.asarray(ca, dtype=np.int32)
        self._cell_band = np.asarray(cj, dtype=np.int32)
        self._cell_prob = np.asarray(cp, dtype=np.float64)
        self._residual_scale = 2.0 * np_

    def _reinitialise(self) -> None:
        held = dict(self._queries)
        self._queries.clear()
        self._stops.clear()
        self._z.clear()
        self._contribs.clear()
        self._estimates.clear()
        self.counters["reinits"] += 1
        self._build_epoch()
        for pid in sorted(self._points):
            self._absorb_point(pid, self._points[pid], update_queries=False)
        for qid in sorted(held):
            self._register_query(qid, held[qid])

    # ------------------------------------------------------------------
    # basic accessors

    @property
    def size(self) -> int:
        return self._n

    @property
    def n_prime(self) -> int:
        return self._n_prime

    @property
    def epoch(self) -> int:
        return self._epoch

    @property
    def dim(self) -> int | None:
        return self._dim

    @property
    def top_level(self) -> int:
        return self._top

    @property
    def estimator_count(self) -> int:
        return self._reps

    @property
    def level_count(self) -> int:
        return self._top + 1

    def query_point(self, qid: int) -> float:
        return self._estimates[qid]

    def query_stop_level(self, qid: int) -> int:
        return self._stops[qid]

    def estimates(self) -> dict[int, float]:
        return dict(self._estimates)

    def query_ids(self):
        return self._queries.keys()

    def data_ids(self):
        return self._points.keys()

    def raw_estimators(self, qid: int, level: int) -> list[float]:
        """Copy of the per-repetition sums of one member level."""
        if (qid, level) not in self._z:
            raise KeyError(f"query {qid} holds no state at level {level}")
        return list(self._z[(qid, level)])

    def sampling_prob(self, level: int, band: int) -> float:
        lev = self._levels[level]
        if band == lev.n_bands + 1:
            return 1.0 / (2.0 * self._n_prime)
        return lev.cells[band - 1].prob

    # ------------------------------------------------------------------
    # data path

    def add_data_point(self, x: np.ndarray, point_id: int | None = None) -> dict[int, float]:
        """Insert one point; returns {query id: new estimate} for changed queries."""
        vec = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
        if vec.ndim != 1:
            raise ValueError(f"expected a single point, got shape {vec.shape}")
        if point_id is None:
            point_id = self._next_auto
        point_id = int(point_id)
        if point_id in self._points:
            raise KeyError(f"point id {point_id} already present")
        if self._dim is None:
            self._dim = vec.shape[0]
            self._build_epoch()
        elif vec.shape[0] != self._dim:
            raise ValueError(f"dimension mismatch: {vec.shape[0]} vs {self._dim}")
        self._points[point_id] = vec
        self._next_auto = max(self._next_auto, point_id + 1)
        self._n += 1
        self.counters["inserts"] += 1
        self.last_update_counts = {}
        if self._n - self._n_prime > self._n_prime:
            self._n_prime = self._n
            self._epoch += 1
            self._reinitialise()
            return dict(self._estimates)
        return self._absorb_point(point_id, vec, update_queries=True)

    def _absorb_point(self, pid: int, vec: np.ndarray,
                      update_queries: bool) -> dict[int, float]:
        coins = derive_rng(self.seed, "sample", self._epoch, pid).random(len(self._cell_prob))
        sampled = np.flatnonzero(coins < self._cell_prob)
        hits: dict[tuple[int, int], list[int]] = {}
        for idx in sampled:
            key = (int(self._cell_level[idx]), int(self._cell_band[idx]))
            hits.setdefault(key, []).append(int(self._cell_rep[idx]))
        weight_cache: dict[int, float] = {}
        band_cache: dict[int, int] = {}
        dirty: set[tuple[int, int, int]] = set()
        for (i, j), reps in sorted(hits.items()):
            level = self._levels[i]
            if j <= level.n_bands:
                cell = level.cells[j - 1]
                keys = cell.bank.packed_keys_one(vec)
                for a in reps:
                    level.samples[a][j - 1].add(pid)
                colliders: set[int] = set()
                for ell, key in enumerate(keys):
                    cell.data[ell].insert(key, pid)
                    if update_queries:
                        colliders |= cell.query[ell].lookup(key)
                if update_queries and colliders:
                    for qid in sorted(colliders):
                        w, jq = self._pair_band(qid, pid, vec, weight_cache, band_cache)
                        if jq != j:
                            continue
                        contribution = math.ldexp(w, cell.shift)
                        self._apply_update(qid, i, reps, pid, contribution, dirty)
            else:
                for a in reps:
                    level.residual[a].add(pid)
                if update_queries and level.members:
                    for qid in sorted(level.members):
                        w, jq = self._pair_band(qid, pid, vec, weight_cache, band_cache)
                        if jq <= level.n_bands or w == 0.0:
                            continue
                        contribution = w * self._residual_scale
                        self._apply_update(qid, i, reps, pid, contribution, dirty)
        if not update_queries:
            return {}
        return self._settle_dirty(dirty)

    def _pair_band(self, qid, pid, vec, weight_cache, band_cache):
        w = weight_cache.get(qid)
        if w is None:
            w = eval_kernel(self.config, self._queries[qid], vec)
            weight_cache[qid] = w
            band_cache[qid] = raw_band_index(w)
        return w, band_cache[qid]

    def _apply_update(self, qid: int, i: int, reps: list[int], pid: int,
                      contribution: float, dirty: set) -> None:
        z = self._z[(qid, i)]
        for a in reps:
            if self.exact_replay:
                self._contribs[(qid, i, a)][pid] = contribution
                self._resum(qid, i, a)
            else:
                z[a] += contribution
            dirty.add((qid, i, a))
        self.last_update_counts[qid] = self.last_update_counts.get(qid, 0) + len(reps)
        self.counters["z_updates"] += len(reps)

    def _resum(self, qid: int, i: int, a: int) -> None:
        bucket = self._contribs[(qid, i, a)]
        total = 0.0
        for pid in sorted(bucket):
            total += bucket[pid]
        self._z[(qid, i)][a] = total

    def _settle_dirty(self, dirty: set) -> dict[int, float]:
        changed: dict[int, float] = {}
        crossings: dict[int, int] = {}
        for qid, i in sorted({(q, i) for q, i, _ in dirty}):
            est = self._estimate_at(qid, i)
            if est > self._levels[i].mu:
                crossings[qid] = max(crossings.get(qid, -1), i)
        for qid, level in sorted(crossings.items()):
            new_stop = min(level + 1, self._top)
            old_stop = self._stops[qid]
            if new_stop > old_stop:
                for i in range(old_stop, new_stop):
                    self._drop_query_level(qid, i)
                self._stops[qid] = new_stop
        for qid in sorted({q for q, _, _ in dirty}):
            est = self._estimate_at(qid, self._stops[qid])
            if est != self._estimates[qid]:
                self._estimates[qid] = est
                changed[qid] = est
        return changed

    # ------------------------------------------------------------------
    # query path

    def add_query_point(self, qid: int, q: np.ndarray) -> float:
        qid = int(qid)
        if qid in self._queries:
            raise KeyError(f"query id {qid} already registered")
        vec = np.ascontiguousarray(np.asarray(q, dtype=np.float64))
        if self._dim is None:
            self._dim = vec.shape[0]
            self._build_epoch()
        elif vec.shape[0] != self._dim:
            raise ValueError(f"dimension mismatch: {vec.shape[0]} vs {self._dim}")
        self._register_query(qid, vec)
        return self._estimates[qid]

    def add_query_points(self, qids, vectors) -> dict[int, float]:
        vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
        out = {}
        for qid, vec in zip(qids, vectors):
            out[int(qid)] = self.add_query_point(qid, vec)
        return out

    def delete_query_point(self, qid: int) -> None:
        stop = self._stops.pop(qid)
        for i in range(stop, self._top + 1):
            self._drop_query_level(qid, i)
        del self._queries[qid]
        del self._estimates[qid]

    def _register_query(self, qid: int, vec: np.ndarray) -> None:
        self._queries[qid] = vec
        weight_cache: dict[int, float] = {}
        stop = 0
        i = self._top
        while i >= 0:
            self._build_query_level(qid, vec, i, weight_cache)
            est = self._estimate_at(qid, i)
            if est > self._levels[i].mu:
                if i == self._top:
                    stop = self._top
                else:
                    stop = i + 1
                    self._drop_query_level(qid, i)
                break
            if i == 0:
                stop = 0
                break
            i -= 1
        self._stops[qid] = stop
        self._estimates[qid] = self._estimate_at(qid, stop)

    def _build_query_level(self, qid: int, vec: np.ndarray, i: int,
                           weight_cache: dict[int, float]) -> None:
        level = self._levels[i]
        level.members.add(qid)
        z = [0.0] * self._reps
        self._z[(qid, i)] = z
        if self.exact_replay:
            for a in range(self._reps):
                self._contribs[(qid, i, a)] = {}
        for j in range(1, level.n_bands + 1):
            cell = level.cells[j - 1]
            keys = cell.bank.packed_keys_one(vec)
            candidates: set[int] = set()
            for ell, key in enumerate(keys):
                candidates |= cell.data[ell].lookup(key)
                cell.query[ell].insert(key, qid)
            if not candidates:
                continue
            matches: dict[int, float] = {}
            for pid in candidates:
                w = weight_cache.get(pid)
                if w is None:
                    w = eval_kernel(self.config, vec, self._points[pid])
                    weight_cache[pid] = w
                if raw_band_index(w) == j:
                    matches[pid] = math.ldexp(w, cell.shift)
            if not matches:
                continue
            match_ids = set(matches)
            for a in range(self._reps):
                mine = match_ids & level.samples[a][j - 1]
                if not mine:
                    continue
                if self.exact_replay:
                    bucket = self._contribs[(qid, i, a)]
                    for pid in mine:
                        bucket[pid] = matches[pid]
                else:
                    total = 0.0
                    for pid in sorted(mine):
                        total += matches[pid]
                    z[a] += total
        residual_scale = self._residual_scale
        for a in range(self._reps):
            pool = level.residual[a]
            if not pool:
                continue
            acc = 0.0
            for pid in sorted(pool):
                w = weight_cache.get(pid)
                if w is None:
                    w = eval_kernel(self.config, vec, self._points[pid])
                    weight_cache[pid] = w
                if raw_band_index(w) > level.n_bands and w != 0.0:
                    if self.exact_replay:
                        self._contribs[(qid, i, a)][pid] = w * residual_scale
                    else:
                        acc += w * residual_scale
            if not self.exact_replay:
                z[a] += acc
        if self.exact_replay:
            for a in range(self._reps):
                self._resum(qid, i, a)

    def _drop_query_level(self, qid: int, i: int) -> None:
        level = self._levels[i]
        level.members.discard(qid)
        vec = self._queries[qid]
        for j in range(1, level.n_bands + 1):
            cell = level.cells[j - 1]
            keys = cell.bank.packed_keys_one(vec)
            for ell, key in enumerate(keys):
                cell.query[ell].remove(key, qid)
        self._z.pop((qid, i), None)
        if self.exact_replay:
            for a in range(self._reps):
                self._contribs.pop((qid, i, a), None)

    # ------------------------------------------------------------------
    # estimates

    def _estimate_at(self, qid: int, i: int) -> float:
        z = self._z[(qid, i)]
        m = self._block_size
        means = []
        for b in range(self._block_count):
            total = 0.0
            for v in z[b * m:(b + 1) * m]:
                total += v
            means.append(total / m)
        means.sort()
        half = len(means) // 2
        if len(means) % 2:
            return means[half]
        return (means[half - 1] + means[half]) / 2.0

    # ------------------------------------------------------------------
    # consistency checking

    def check_invariants(self) -> None:
        """Verify internal structural consistency; raises AssertionError.

        Covers query membership (state exists exactly on [stop, top], query
        buckets hold each member under its recomputed keys and nobody else),
        data buckets matching the union of per-repetition samples, estimate
        caches matching recomputed medians, and, under ``exact_replay``, the
        per-repetition sums matching a fresh resummation.
        """
        top = self._top
        for qid, stop in self._stops.items():
            assert 0 <= stop <= top, f"query {qid} stop {stop} out of range"
            for i in range(top + 1):
                has_z = (qid, i) in self._z
                member = qid in self._levels[i].members
                expect = i >= stop
                assert has_z == expect, f"query {qid} z presence wrong at level {i}"
                assert member == expect, f"query {qid} membership wrong at level {i}"
            cached = self._estimates[qid]
            recomputed = self._estimate_at(qid, stop)
            assert cached == recomputed, f"query {qid} estimate cache is stale"
        for i, level in enumerate(self._levels):
            assert level.members <= set(self._stops), f"level {i} has unknown members"
            for j in range(1, level.n_bands + 1):
                cell = level.cells[j - 1]
                sampled_union = set()
                for a in range(self._reps):
                    sampled_union |= level.samples[a][j - 1]
                member_keys = {qid: cell.bank.packed_keys_one(self._queries[qid])
                               for qid in level.members}
                for ell in range(cell.bank.copies):
                    bucket_ids = set()
                    for ids in cell.data[ell].buckets.values():
                        bucket_ids |= ids
                    assert bucket_ids == sampled_union, \
                        f"data bucket content mismatch at level {i} band {j} copy {ell}"
                    seen = set()
                    for key, ids in cell.query[ell].buckets.items():
                        for qid in ids:
                            assert qid in level.members, \
                                f"stray query {qid} at level {i} band {j}"
                            assert member_keys[qid][ell] == key, \
                                f"query {qid} filed under wrong key at level {i} band {j}"
                            seen.add(qid)
                    assert seen == level.members, \
                        f"query bucket coverage mismatch at level {i} band {j} copy {ell}"
        if self.exact_replay:
            for (qid, i, a), bucket in self._contribs.items():
                total = 0.0
                for pid in sorted(bucket):
                    total += bucket[pid]
                assert self._z[(qid, i)][a] == total, \
                    f"replay sum mismatch for query {qid} level {i} repetition {a}"

    # ------------------------------------------------------------------
    # canonical state (for digests and equality checks)

    def structure_state(self) -> dict:
        """Canonical nested plain-type snapshot of all mutable state.

        Two structures over the same point set built through different
        insertion orders produce equal snapshots; under ``exact_replay`` the
        float entries are bit-identical as well.
        """
        levels = []
        for level in self._levels:
            bands = []
            for cell in level.cells:
                data = [sorted((key, sorted(ids)) for key, ids in table.buckets.items())
                        for table in cell.data]
                query = [sorted((key, sorted(ids)) for key, ids in table.buckets.items())
                         for table in cell.query]
                bands.append({"data": data, "query": query})
            samples = [[sorted(s) for s in rep] for rep in level.samples]
            residual = [sorted(s) for s in level.residual]
            levels.append({
                "level": level.index,
                "members": sorted(level.members),
                "bands": bands,
                "samples": samples,
                "residual": residual,
            })
        return {
            "epoch": self._epoch,
            "n_prime": self._n_prime,
            "n": self._n,
            "point_ids": sorted(self._points),
            "levels": levels,
            "stops": sorted(self._stops.items()),
            "z": sorted((key, list(val)) for key, val in self._z.items()),
            "estimates": sorted(self._estimates.items()),
        }
