"""Similarity graph maintained by density-driven sampling over a point tree.

Vertices are data points.  Each vertex owns a fixed number of sample paths;
a path starts at the root of a binary tree over the point set and repeatedly
routes to a child with probability proportional to the child subtree's kernel
density at the owner.  The leaf reached, and the point picked inside it by
exact kernel weights, is the sampled neighbour.  With exact densities the
telescoping product makes the landing distribution proportional to the kernel
weight itself, independent of the tree shape; estimated densities perturb it
by a bounded factor per level.

Each edge stores how many live paths back it.  Its weight is
count * min(mu_i, mu_j) / n_paths where mu is the current root density of an
endpoint, so an edge between mutually dense vertices needs only a few backing
samples to reach its target weight.  The endpoint with the smaller density
governs the edge; when a root density changes, the edges of that vertex are
restamped and governance migrates if the order flipped.

Internal nodes carry a dynamic sketch (DynamicKde) once their subtree
outgrows ``exact_cutoff`` and plain exact sums below that; leaves hold up to
``leaf_capacity`` points.  A query is registered at a node exactly while some
path of that owner traverses the node's parent, so routing always finds both
children evaluable.  Insertion descends to the smaller child, updating every
estimator on the spine.

Every routing decision is one fixed coin, keyed by (owner, path index, node
id), compared against the densities the tree currently publishes; the pick
inside a leaf is likewise one fixed coin fed to the inverse CDF of the leaf's
current weights.  When a spine node reports a published change, the affected
owners' paths re-derive their decisions from the stale point downward with
those same coins, mutating the path only from the first decision that
actually flips.  The path set is therefore a function of the current point
set, tree shape, and seed, not of arrival order, which keeps
construct-then-update and construct-from-scratch statistically
indistinguishable while making repairs whose decisions all survive read-only.
Published densities snap to a geometric grid so sub-grid drift reports no
change at all.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .kde import DynamicKde
from .kernels import KernelConfig, ceil_log2, eval_kernel, kernel_row
from .rng import derive_key, uniform01

__all__ = ["DynamicSimilarityGraph", "SamplePath"]


@lru_cache(maxsize=1 << 18)
def _coin(seed: int, kind: str, owner: int, ell: int, node_id: int) -> float:
    # decisions re-derive against the same coin many times; memoising keeps
    # the hash derivation off the repair path
    return uniform01(seed, kind, owner, ell, node_id)


def _quantize(value: float, log_step: float) -> float:
    """Snap a density to a geometric grid with the given log spacing.

    Routing reads densities only through this grid.  The published value is a
    pure function of the underlying sum, so it is identical whether the sum
    was grown incrementally or computed fresh, and it moves only when the sum
    crosses a grid boundary.  That keeps change reports sparse: without it an
    exact node would report every nearby query changed on every insertion and
    force a full local resample each time.
    """
    if value <= 0.0:
        return 0.0
    return math.exp(log_step * round(math.log(value) / log_step))


class _ExactSums:
    """Exact subtree densities for registered queries; the small-node backend.

    Mirrors the DynamicKde surface the tree needs: add_data_point returns the
    queries whose published value moved, add_query_point returns the new
    estimate.  Sums are kept exactly; reads go through the geometric grid.
    """

    def __init__(self, config: KernelConfig, data, point_ids, log_step: float):
        self.config = config
        self.log_step = log_step
        self._vecs: dict[int, np.ndarray] = {
            int(pid): np.ascontiguousarray(row) for pid, row in zip(point_ids, data)
        }
        self._queries: dict[int, np.ndarray] = {}
        self._sums: dict[int, float] = {}
        self._qmat: np.ndarray | None = None

    def _matrix(self) -> np.ndarray:
        if self._qmat is None:
            self._qmat = np.stack([self._queries[q] for q in sorted(self._queries)])
        return self._qmat

    def add_data_point(self, x: np.ndarray, point_id: int) -> dict[int, float]:
        self._vecs[int(point_id)] = np.ascontiguousarray(x)
        if not self._queries:
            return {}
        qids = sorted(self._queries)
        weights = kernel_row(self.config, x, self._matrix())
        changed = {}
        for qid, w in zip(qids, weights):
            if w != 0.0:
                before = _quantize(self._sums[qid], self.log_step)
                self._sums[qid] += float(w)
                after = _quantize(self._sums[qid], self.log_step)
                if after != before:
                    changed[qid] = after
        return changed

    def add_query_point(self, qid: int, q: np.ndarray) -> float:
        qid = int(qid)
        if qid in self._queries:
            raise KeyError(f"query id {qid} already registered")
        vec = np.ascontiguousarray(np.asarray(q, dtype=np.float64))
        data = np.stack([self._vecs[p] for p in sorted(self._vecs)])
        self._queries[qid] = vec
        self._sums[qid] = float(kernel_row(self.config, vec, data).sum())
        self._qmat = None
        return _quantize(self._sums[qid], self.log_step)

    def delete_query_point(self, qid: int) -> None:
        del self._queries[qid]
        del self._sums[qid]
        self._qmat = None

    def query_point(self, qid: int) -> float:
        return _quantize(self._sums[qid], self.log_step)

    def raw_sum(self, qid: int) -> float:
        return self._sums[qid]

    def query_ids(self):
        return self._queries.keys()

    def data_ids(self):
        return self._vecs.keys()


class _SketchPublisher:
    """DynamicKde behind the same geometric grid the exact nodes publish on.

    The sketch's median estimates move a little on many insertions; routing
    only cares about changes large enough to cross a grid boundary, so the
    published value filters the rest and the change reports stay sparse.
    """

    def __init__(self, kde: DynamicKde, log_step: float):
        self.kde = kde
        self.log_step = log_step
        self._pub: dict[int, float] = {}

    def add_data_point(self, x: np.ndarray, point_id: int) -> dict[int, float]:
        changed = {}
        for qid, est in self.kde.add_data_point(x, point_id=point_id).items():
            pub = _quantize(est, self.log_step)
            if pub != self._pub[qid]:
                self._pub[qid] = pub
                changed[qid] = pub
        return changed

    def add_query_point(self, qid: int, q: np.ndarray) -> float:
        pub = _quantize(self.kde.add_query_point(qid, q), self.log_step)
        self._pub[int(qid)] = pub
        return pub

    def delete_query_point(self, qid: int) -> None:
        self.kde.delete_query_point(qid)
        del self._pub[qid]

    def query_point(self, qid: int) -> float:
        return self._pub[qid]

    def query_ids(self):
        return self.kde.query_ids()

    def data_ids(self):
        return self.kde.data_ids()


class _Leaf:
    __slots__ = ("node_id", "parent", "pids", "vecs", "mat", "sums", "paths")

    def __init__(self, node_id: int, parent, pids, vecs):
        self.node_id = node_id
        self.parent = parent
        self.pids = sorted(int(p) for p in pids)
        self.vecs = {int(p): v for p, v in zip(pids, vecs)}
        self.mat = np.stack([self.vecs[p] for p in self.pids])
        self.sums: dict[int, float] = {}
        self.paths: dict[int, set[int]] = {}

    @property
    def size(self) -> int:
        return len(self.pids)

    def register(self, config, qid: int, qvec: np.ndarray, log_step: float) -> float:
        total = float(kernel_row(config, qvec, self.mat).sum())
        self.sums[qid] = total
        return _quantize(total, log_step)

    def pick(self, config, qvec: np.ndarray, coin: float) -> int:
        """Sample a leaf point proportionally to its kernel weight at qvec."""
        weights = kernel_row(config, qvec, self.mat)
        total = float(weights.sum())
        if total <= 0.0:
            return self.pids[min(int(coin * len(self.pids)), len(self.pids) - 1)]
        acc = 0.0
        threshold = coin * total
        for pid, w in zip(self.pids, weights):
            acc += float(w)
            if threshold < acc:
                return pid
        return self.pids[-1]


class _Inner:
    __slots__ = ("node_id", "parent", "left", "right", "size", "est", "paths")

    def __init__(self, node_id: int, parent, left, right, size: int, est):
        self.node_id = node_id
        self.parent = parent
        self.left = left
        self.right = right
        self.size = size
        self.est = est
        self.paths: dict[int, set[int]] = {}


class _Edge:
    __slots__ = ("count", "weight")

    def __init__(self):
        self.count = 0
        self.weight = 0.0


class SamplePath:
    """One root-to-leaf sample owned by a vertex.

    ``target`` is the picked endpoint, or None when the path sampled its own
    owner.  Every decision on the path is the fixed coin for (owner, index,
    node id) compared against the current published densities, so the path is
    a deterministic function of the structure's state, not of update history.
    """

    __slots__ = ("owner", "index", "nodes", "target")

    def __init__(self, owner: int, index: int):
        self.owner = owner
        self.index = index
        self.nodes: list = []
        self.target: int | None = None


class DynamicSimilarityGraph:
    def __init__(self, config: KernelConfig, points=None, point_ids=None, *,
                 epsilon: float = 0.5, seed: int = 0, n_paths: int | None = None,
                 leaf_capacity: int = 16, exact_cutoff: int = 256,
                 publish_step: float = 0.25, kde_options: dict | None = None):
        if leaf_capacity < 1:
            raise ValueError("leaf_capacity must be at least 1")
        if exact_cutoff < leaf_capacity:
            raise ValueError("exact_cutoff must be at least leaf_capacity")
        if publish_step <= 0.0:
            raise ValueError("publish_step must be positive")
        self.config = config
        self.epsilon = float(epsilon)
        self.seed = int(seed)
        self.leaf_capacity = int(leaf_capacity)
        self.exact_cutoff = int(exact_cutoff)
        self.publish_step = float(publish_step)
        self._log_step = math.log1p(self.publish_step)
        self.kde_options = dict(kde_options or {})
        self._points: dict[int, np.ndarray] = {}
        self._paths: dict[int, list[SamplePath]] = {}
        self._edges: dict[tuple[int, int], _Edge] = {}
        self._adj: dict[int, set[int]] = {}
        self._governed: dict[int, set[int]] = {}
        self._node_counter = 0
        self._root = None
        self._dim: int | None = None

        if points is None:
            pts = np.empty((0, 0))
        else:
            pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        n = pts.shape[0]
        if point_ids is None:
            point_ids = list(range(n))
        point_ids = [int(p) for p in point_ids]
        if len(point_ids) != n or len(set(point_ids)) != n:
            raise ValueError("point_ids must be unique and match the data length")
        if n_paths is None:
            n_paths = 3 * max(1, ceil_log2(max(2.0, float(n))))
        if n_paths < 1:
            raise ValueError("n_paths must be positive")
        self.n_paths = int(n_paths)
        self._next_vid = max(point_ids, default=-1) + 1

        if n:
            self._dim = pts.shape[1]
            order = np.argsort(point_ids)
            for idx in order:
                pid = point_ids[idx]
                self._points[pid] = np.ascontiguousarray(pts[idx])
            sorted_ids = [point_ids[i] for i in order]
            self._root = self._build_subtree(sorted_ids, None)
            for vid in sorted_ids:
                self._adj[vid] = set()
                self._governed[vid] = set()
                self._register_root(vid)
            for vid in sorted_ids:
                self._paths[vid] = [self._draw_path(vid, ell) for ell in range(self.n_paths)]

    # ------------------------------------------------------------------
    # tree construction

    def _node_seed(self, node_id: int) -> int:
        return int.from_bytes(derive_key(self.seed, "node", node_id)[:8], "little")

    def _make_estimator(self, node_id: int, pids: list[int]):
        vecs = [self._points[p] for p in pids]
        if len(pids) > self.exact_cutoff:
            kde = DynamicKde(self.config, epsilon=self.epsilon,
                             seed=self._node_seed(node_id),
                             data=np.stack(vecs), point_ids=pids,
                             **self.kde_options)
            return _SketchPublisher(kde, self._log_step)
        return _ExactSums(self.config, vecs, pids, self._log_step)

    def _build_subtree(self, pids: list[int], parent):
        """Build over pid-sorted points: the right child takes the largest
        power-of-two block not exceeding half, so it keeps splitting evenly."""
        node_id = self._node_counter
        self._node_counter += 1
        if len(pids) <= self.leaf_capacity:
            return _Leaf(node_id, parent, pids, [self._points[p] for p in pids])
        node = _Inner(node_id, parent, None, None, len(pids),
                      self._make_estimator(node_id, pids))
        m = 1 << ((len(pids) // 2).bit_length() - 1)
        node.left = self._build_subtree(pids[:-m], node)
        node.right = self._build_subtree(pids[-m:], node)
        return node

    def _register_root(self, vid: int) -> float:
        root = self._root
        if isinstance(root, _Leaf):
            return root.register(self.config, vid, self._points[vid], self._log_step)
        return root.est.add_query_point(vid, self._points[vid])

    def _root_estimate(self, vid: int) -> float:
        if isinstance(self._root, _Leaf):
            return _quantize(self._root.sums[vid], self._log_step)
        return self._root.est.query_point(vid)

    # ------------------------------------------------------------------
    # registration discipline: a query lives at a node exactly while some
    # path of that owner passes the node's parent

    def _is_registered(self, node, qid: int) -> bool:
        if isinstance(node, _Leaf):
            return qid in node.sums
        return qid in node.est.query_ids()

    def _ensure_registered(self, node, qid: int) -> None:
        if isinstance(node, _Leaf):
            if qid not in node.sums:
                node.register(self.config, qid, self._points[qid], self._log_step)
        elif qid not in node.est.query_ids():
            node.est.add_query_point(qid, self._points[qid])

    def _unregister(self, node, qid: int) -> None:
        if isinstance(node, _Leaf):
            node.sums.pop(qid, None)
        elif qid in node.est.query_ids():
            node.est.delete_query_point(qid)

    def _enter(self, node, owner: int, ell: int) -> None:
        bucket = node.paths.setdefault(owner, set())
        fresh = not bucket
        bucket.add(ell)
        if fresh and isinstance(node, _Inner):
            self._ensure_registered(node.left, owner)
            self._ensure_registered(node.right, owner)

    def _leave(self, node, owner: int, ell: int) -> None:
        bucket = node.paths[owner]
        bucket.discard(ell)
        if not bucket:
            del node.paths[owner]
            if isinstance(node, _Inner):
                self._unregister(node.left, owner)
                self._unregister(node.right, owner)

    def _child_density(self, node, qid: int) -> float:
        if isinstance(node, _Leaf):
            return _quantize(node.sums[qid], self._log_step)
        return node.est.query_point(qid)

    # ------------------------------------------------------------------
    # sampling

    def _route(self, node: _Inner, owner: int, ell: int) -> object:
        wl = self._child_density(node.left, owner)
        wr = self._child_density(node.right, owner)
        total = wl + wr
        p_left = 0.5 if total <= 0.0 else wl / total
        coin = _coin(self.seed, "route", owner, ell, node.node_id)
        return node.left if coin < p_left else node.right

    def _pick_at(self, leaf: _Leaf, owner: int, ell: int) -> int | None:
        coin = _coin(self.seed, "pick", owner, ell, leaf.node_id)
        target = leaf.pick(self.config, self._points[owner], coin)
        return None if target == owner else target

    def _walk(self, path: SamplePath) -> None:
        cur = path.nodes[-1]
        while isinstance(cur, _Inner):
            cur = self._route(cur, path.owner, path.index)
            self._enter(cur, path.owner, path.index)
            path.nodes.append(cur)
        target = self._pick_at(cur, path.owner, path.index)
        path.target = target
        if target is not None:
            self._add_backing(path.owner, target)

    def _draw_path(self, owner: int, ell: int) -> SamplePath:
        path = SamplePath(owner, ell)
        self._enter(self._root, owner, ell)
        path.nodes.append(self._root)
        self._walk(path)
        return path

    def _resample(self, owner: int, ell: int, start) -> None:
        """Re-derive a path's decisions from ``start`` downward.

        Each decision keeps its original coin, so re-deriving against the
        current published densities reproduces the old choice unless the
        density shift moved the threshold across the coin.  The walk only
        mutates state from the first flipped decision on; a path whose
        decisions all survive costs a read-only pass and touches no edges.
        """
        path = self._paths[owner][ell]
        nodes = path.nodes
        if start in nodes:
            i = nodes.index(start)
        else:
            # the root itself was replaced; regrow the whole path
            if path.target is not None:
                self._drop_backing(owner, path.target)
                path.target = None
            for node in nodes:
                self._leave(node, owner, ell)
            nodes.clear()
            self._enter(start, owner, ell)
            nodes.append(start)
            self._walk(path)
            return
        cur = nodes[i]
        while isinstance(cur, _Inner):
            nxt = self._route(cur, owner, ell)
            if i + 1 < len(nodes) and nodes[i + 1] is nxt:
                i += 1
                cur = nxt
                continue
            if path.target is not None:
                self._drop_backing(owner, path.target)
                path.target = None
            for node in nodes[i + 1:]:
                self._leave(node, owner, ell)
            del nodes[i + 1:]
            self._enter(nxt, owner, ell)
            nodes.append(nxt)
            self._walk(path)
            return
        target = self._pick_at(cur, owner, ell)
        if target != path.target:
            if path.target is not None:
                self._drop_backing(owner, path.target)
            path.target = target
            if target is not None:
                self._add_backing(owner, target)

    # ------------------------------------------------------------------
    # edges

    def _recompute_edge(self, a: int, b: int, rec: _Edge) -> None:
        ea = self._root_estimate(a)
        eb = self._root_estimate(b)
        rec.weight = rec.count * min(ea, eb) / self.n_paths
        if ea < eb or (ea == eb and a < b):
            gov, other = a, b
        else:
            gov, other = b, a
        self._governed[other].discard(gov)
        self._governed[gov].add(other)

    def _add_backing(self, owner: int, target: int) -> None:
        key = (owner, target) if owner < target else (target, owner)
        rec = self._edges.get(key)
        if rec is None:
            rec = self._edges[key] = _Edge()
            self._adj[owner].add(target)
            self._adj[target].add(owner)
        rec.count += 1
        self._recompute_edge(key[0], key[1], rec)

    def _drop_backing(self, owner: int, target: int) -> None:
        key = (owner, target) if owner < target else (target, owner)
        rec = self._edges[key]
        rec.count -= 1
        if rec.count == 0:
            del self._edges[key]
            self._adj[owner].discard(target)
            self._adj[target].discard(owner)
            self._governed[owner].discard(target)
            self._governed[target].discard(owner)
        else:
            self._recompute_edge(key[0], key[1], rec)

    # ------------------------------------------------------------------
    # updates

    def _schedule(self, agenda, owner: int, ell: int, start, depth: int) -> None:
        key = (owner, ell)
        prev = agenda.get(key)
        if prev is None or depth < prev[0]:
            agenda[key] = (depth, start)

    def update_graph(self, x, vertex_id: int | None = None) -> dict:
        """Insert a point as a new vertex and repair everything it staled."""
        vec = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
        if vertex_id is None:
            vertex_id = self._next_vid
        vid = int(vertex_id)
        if vid in self._points:
            raise KeyError(f"vertex id {vid} already present")
        if self._dim is None:
            self._dim = vec.shape[0]
        elif vec.shape[0] != self._dim:
            raise ValueError(f"dimension mismatch: {vec.shape[0]} vs {self._dim}")
        self._next_vid = max(self._next_vid, vid + 1)
        self._points[vid] = vec
        self._adj.setdefault(vid, set())
        self._governed.setdefault(vid, set())

        agenda: dict[tuple[int, int], tuple] = {}
        changed_root: dict[int, float] = {}
        split = False
        if self._root is None:
            self._root = _Leaf(self._node_counter, None, [vid], [vec])
            self._node_counter += 1
        else:
            changed_root, split = self._insert_into_tree(vec, vid, agenda)

        estimate = self._register_root(vid)
        self._paths[vid] = [self._draw_path(vid, ell) for ell in range(self.n_paths)]

        for v in changed_root:
            for u in list(self._adj.get(v, ())):
                key = (v, u) if v < u else (u, v)
                self._recompute_edge(key[0], key[1], self._edges[key])

        for (owner, ell) in sorted(agenda):
            self._resample(owner, ell, agenda[(owner, ell)][1])

        return {"vertex": vid, "estimate": estimate, "split": split,
                "resampled": len(agenda), "root_changed": len(changed_root)}

    def _insert_into_tree(self, vec, vid, agenda):
        changed_root: dict[int, float] = {}
        node = self._root
        depth = 0
        while isinstance(node, _Inner):
            node.size += 1
            if isinstance(node.est, _ExactSums) and node.size > self.exact_cutoff:
                changed = self._upgrade_estimator(node, vid)
            else:
                changed = node.est.add_data_point(vec, vid)
            if node is self._root:
                changed_root = changed
            parent = node.parent
            if parent is not None and changed:
                for q in changed:
                    for ell in parent.paths.get(q, ()):
                        self._schedule(agenda, q, ell, parent, depth - 1)
            node = node.left if node.left.size <= node.right.size else node.right
            depth += 1

        leaf = node
        parent = leaf.parent
        if leaf.size < self.leaf_capacity:
            changed = self._leaf_absorb(leaf, vec, vid)
            if leaf is self._root:
                changed_root = changed
            else:
                for q in changed:
                    for ell in parent.paths.get(q, ()):
                        self._schedule(agenda, q, ell, parent, depth - 1)
            # the pick distribution shifted for every path ending here, even
            # below the publication grid; re-deriving just the pick is cheap
            for q, ells in leaf.paths.items():
                for ell in ells:
                    self._schedule(agenda, q, ell, leaf, depth)
            return changed_root, False

        old_sums = dict(leaf.sums)
        fresh = self._build_subtree(sorted(leaf.pids + [vid]), parent)
        if parent is None:
            self._root = fresh
            for q in sorted(self._points):
                if q != vid:
                    new = fresh.est.add_query_point(q, self._points[q])
                    if q in old_sums and new != _quantize(old_sums[q], self._log_step):
                        changed_root[q] = new
            for q, paths in self._paths.items():
                for p in paths:
                    self._schedule(agenda, q, p.index, fresh, -1)
        else:
            if parent.left is leaf:
                parent.left = fresh
            else:
                parent.right = fresh
            # owners whose published density over this subtree moved re-derive
            # the routing at the parent; paths that ran into the dead leaf
            # re-walk from the parent and pick up the new structure
            for q in sorted(parent.paths):
                new = fresh.est.add_query_point(q, self._points[q])
                if new != _quantize(old_sums[q], self._log_step):
                    for ell in parent.paths[q]:
                        self._schedule(agenda, q, ell, parent, depth - 1)
            for q, ells in leaf.paths.items():
                for ell in ells:
                    self._schedule(agenda, q, ell, parent, depth - 1)
        return changed_root, True

    def _leaf_absorb(self, leaf: _Leaf, vec, vid: int) -> dict[int, float]:
        leaf.vecs[vid] = vec
        leaf.pids.append(vid)
        leaf.pids.sort()
        leaf.mat = np.stack([leaf.vecs[p] for p in leaf.pids])
        changed = {}
        for qid in leaf.sums:
            w = eval_kernel(self.config, self._points[qid], vec)
            if w != 0.0:
                before = _quantize(leaf.sums[qid], self._log_step)
                leaf.sums[qid] += w
                after = _quantize(leaf.sums[qid], self._log_step)
                if after != before:
                    changed[qid] = after
        return changed

    def _upgrade_estimator(self, node: _Inner, vid: int) -> dict[int, float]:
        """Swap exact sums for a dynamic sketch once the subtree outgrows the
        cutoff; every registered estimate jumps to its sketched value."""
        old = node.est
        pids = sorted(list(old.data_ids()) + [vid])
        kde = DynamicKde(self.config, epsilon=self.epsilon,
                         seed=self._node_seed(node.node_id),
                         data=np.stack([self._points[p] for p in pids]),
                         point_ids=pids, **self.kde_options)
        publisher = _SketchPublisher(kde, self._log_step)
        changed = {}
        for qid in sorted(old.query_ids()):
            est = publisher.add_query_point(qid, self._points[qid])
            if est != old.query_point(qid):
                changed[qid] = est
        node.est = publisher
        return changed

    # ------------------------------------------------------------------
    # views

    @property
    def size(self) -> int:
        return len(self._points)

    @property
    def dim(self) -> int | None:
        return self._dim

    @property
    def edge_count(self) -> int:
        return len(self._edges)

    def vertex_ids(self) -> list[int]:
        return sorted(self._points)

    def estimate(self, vid: int) -> float:
        if vid not in self._points:
            raise KeyError(f"unknown vertex {vid}")
        return self._root_estimate(vid)

    def neighbors(self, vid: int) -> dict[int, float]:
        out = {}
        for u in self._adj.get(vid, ()):
            key = (vid, u) if vid < u else (u, vid)
            out[u] = self._edges[key].weight
        return out

    def edge_list(self) -> list[tuple[int, int, float]]:
        return [(a, b, self._edges[(a, b)].weight)
                for a, b in sorted(self._edges)]

    def governed(self, vid: int) -> set[int]:
        return set(self._governed.get(vid, ()))

    def sample_targets(self, vid: int) -> list[int | None]:
        """Current endpoint of each sample path owned by ``vid`` (None when
        the path landed on its own owner)."""
        if vid not in self._paths:
            raise KeyError(f"unknown vertex {vid}")
        return [p.target for p in self._paths[vid]]

    # ------------------------------------------------------------------

    def check_invariants(self, deep: bool = False) -> None:
        """Raise AssertionError when any structural promise is broken."""
        vids = set(self._points)
        if self._root is None:
            assert not vids and not self._edges and not self._paths
            return

        # tree shape, sizes, and the pid partition
        nodes = []
        leaf_of: dict[int, _Leaf] = {}

        def walk(node, parent):
            nodes.append(node)
            assert node.parent is parent
            if isinstance(node, _Leaf):
                assert 0 < node.size <= self.leaf_capacity
                assert node.pids == sorted(node.vecs)
                assert np.array_equal(node.mat, np.stack([node.vecs[p] for p in node.pids]))
                for p in node.pids:
                    assert p not in leaf_of, f"point {p} in two leaves"
                    leaf_of[p] = node
                return set(node.pids)
            covered = walk(node.left, node) | walk(node.right, node)
            assert node.size == len(covered) == node.left.size + node.right.size
            assert isinstance(node.est, _SketchPublisher) == (node.size > self.exact_cutoff)
            assert set(node.est.data_ids()) == covered
            return covered

        assert walk(self._root, None) == vids

        # paths: stored lists and per-node registries are two views of one set
        expected_paths: dict[int, dict[int, set[int]]] = {id(n): {} for n in nodes}
        expected_counts: dict[tuple[int, int], int] = {}
        for vid in vids:
            plist = self._paths[vid]
            assert len(plist) == self.n_paths
            for ell, path in enumerate(plist):
                assert path.owner == vid and path.index == ell
                assert path.nodes[0] is self._root
                for above, below in zip(path.nodes, path.nodes[1:]):
                    assert isinstance(above, _Inner)
                    assert below is above.left or below is above.right
                last = path.nodes[-1]
                assert isinstance(last, _Leaf)
                for node in path.nodes:
                    assert id(node) in expected_paths, "path holds a node no longer in the tree"
                    expected_paths[id(node)].setdefault(vid, set()).add(ell)
                if path.target is None:
                    continue
                assert path.target != vid and path.target in last.vecs
                key = (min(vid, path.target), max(vid, path.target))
                expected_counts[key] = expected_counts.get(key, 0) + 1
        for node in nodes:
            assert node.paths == expected_paths[id(node)]

        # registration follows the paths through the parent
        for node in nodes:
            if node is self._root:
                expected_q = vids
            else:
                expected_q = set(node.parent.paths)
            if isinstance(node, _Leaf):
                assert set(node.sums) == expected_q
            else:
                assert set(node.est.query_ids()) == expected_q

        # edges: backing counts exact, weights restamped under the current
        # root densities, governance with the smaller endpoint
        assert set(self._edges) == set(expected_counts)
        for key, rec in self._edges.items():
            a, b = key
            assert rec.count == expected_counts[key]
            ea, eb = self._root_estimate(a), self._root_estimate(b)
            assert rec.weight == rec.count * min(ea, eb) / self.n_paths
            gov = a if (ea < eb or (ea == eb and a < b)) else b
            other = b if gov == a else a
            assert other in self._governed[gov]
            assert gov not in self._governed[other]
        governed_pairs = {(min(g, o), max(g, o))
                          for g, others in self._governed.items() for o in others}
        assert governed_pairs == set(self._edges)
        for vid in vids:
            expected_adj = {u for (a, b) in self._edges for u in (a, b)
                            if vid in (a, b) and u != vid}
            assert self._adj.get(vid, set()) == expected_adj

        # estimator content: sums recompute, sketches replay
        for node in nodes:
            if isinstance(node, _Leaf):
                for qid, total in node.sums.items():
                    fresh = sum(eval_kernel(self.config, self._points[qid], node.vecs[p])
                                for p in node.pids)
                    assert abs(total - fresh) <= 1e-9 * max(1.0, fresh)
            elif isinstance(node.est, _ExactSums):
                data = np.stack([self._points[p] for p in sorted(node.est.data_ids())])
                for qid in node.est.query_ids():
                    fresh = float(kernel_row(self.config, self._points[qid], data).sum())
                    assert abs(node.est.raw_sum(qid) - fresh) <= 1e-9 * max(1.0, fresh)
            else:
                for qid in node.est.query_ids():
                    raw = node.est.kde.query_point(qid)
                    assert node.est.query_point(qid) == _quantize(raw, self._log_step)
                if deep:
                    node.est.kde.check_invariants()
