"""The aggregated B-tree of compressed matrices.

Leaves hold timed matrices filled straight from the stream.  When a leaf
cannot take an edge a new leaf is opened and its start time is pushed up as
a separator key.  A node that already has ``theta`` children when another
arrives is sealed: its matrix is built by aggregating every child, and the
newcomer goes to a fresh sibling.  Growth at the top adds a new root.  A
fresh sibling begins life as a single-child *filler* node so that every leaf
stays on level 1.

Only the rightmost spine is open.  Queries never read an open node's matrix
(it does not exist yet) and fan out to its children instead.
"""

from __future__ import annotations

import bisect
import threading
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from higgs import _kernels as K
from higgs.config import HiggsConfig
from higgs.edgelist import EdgeArrays
from higgs.errors import FinalizedError, NotFoundError, OrderingError
from higgs.hashing import VertexDigest, at_level, digest, digest_arrays
from higgs.matrix import CompressedMatrix, Outcome

KEY_BITS = 64


@dataclass(frozen=True, slots=True)
class StreamEdge:
    src: int
    dst: int
    weight: int
    timestamp: int


class TreeNode:
    __slots__ = (
        "level", "keys", "children", "matrix", "sealed", "filler",
        "start_time", "end_time", "ready", "__weakref__",
    )

    def __init__(self, level: int, start_time: int, matrix: CompressedMatrix | None = None):
        self.level = level
        self.keys: list[int] = []
        self.children: list[TreeNode] = []
        self.matrix = matrix
        self.sealed = False
        self.filler = False
        self.start_time = start_time
        self.end_time: int | None = None
        # set once the matrix is final (leaf sealed, or aggregation done)
        self.ready = threading.Event()

    def __repr__(self) -> str:
        kind = "leaf" if self.is_leaf else f"L{self.level}"
        flags = "sealed" if self.sealed else "open"
        if self.filler:
            flags += ",filler"
        return f"TreeNode({kind}, [{self.start_time}, {self.end_time}], {flags}, children={len(self.children)})"

    @property
    def is_leaf(self) -> bool:
        return self.level == 1

    def child_for(self, t: int) -> "TreeNode":
        return self.children[bisect.bisect_right(self.keys, t)]

    def add_child(self, child: "TreeNode") -> None:
        if self.children:
            self.keys.append(child.start_time)
            self.filler = False
        self.children.append(child)


@dataclass
class TreeStats:
    edge_count: int
    total_weight: int
    leaf_count: int
    level_count: int
    bytes: int
    key_bytes: int
    nodes_per_level: list[int]
    utilization_per_level: list[float]
    overflow_blocks: int
    spill_entries: int
    saturated: bool
    span: tuple[int, int] | None

    @property
    def span_per_leaf(self) -> float:
        if self.span is None or self.leaf_count == 0:
            return 0.0
        return (self.span[1] - self.span[0] + 1) / self.leaf_count

    def to_dict(self) -> dict:
        return {
            "edge_count": self.edge_count,
            "total_weight": self.total_weight,
            "leaf_count": self.leaf_count,
            "level_count": self.level_count,
            "bytes": self.bytes,
            "key_bytes": self.key_bytes,
            "nodes_per_level": self.nodes_per_level,
            "utilization_per_level": self.utilization_per_level,
            "overflow_blocks": self.overflow_blocks,
            "spill_entries": self.spill_entries,
            "saturated": self.saturated,
            "span": list(self.span) if self.span else None,
            "span_per_leaf": self.span_per_leaf,
        }


class SummaryTree:
    """Append-only hierarchical summary of a timestamp-ordered edge stream.

    ``aggregator`` decides where sealed nodes are aggregated; the default
    does it inline.  :class:`higgs.pipeline.LevelPipeline` moves that work to
    one thread per level.
    """

    def __init__(self, cfg: HiggsConfig | None = None, aggregator=None):
        self.cfg = cfg or HiggsConfig()
        self.root: TreeNode | None = None
        self.spine: list[TreeNode] = []
        self.leaf_count = 0
        self.edge_count = 0
        self.inserted_weight = 0
        self.deleted_weight = 0
        self.first_time: int | None = None
        self.last_time: int | None = None
        self.finalized = False
        self.aggregator = aggregator
        self._lock = threading.Lock()

    def __repr__(self) -> str:
        return f"SummaryTree(edges={self.edge_count}, leaves={self.leaf_count}, levels={self.level_count})"

    @property
    def level_count(self) -> int:
        return max(len(self.spine), 1)

    @property
    def theta(self) -> int:
        return self.cfg.theta

    @property
    def saturated(self) -> bool:
        return any(n.matrix is not None and n.matrix.saturated for n in self.nodes())

    # -- structure ------------------------------------------------------

    def _new_leaf(self, t: int) -> TreeNode:
        leaf = TreeNode(1, t, CompressedMatrix(self.cfg, 1, start_time=t))
        self.leaf_count += 1
        if not self.spine:
            self.root = leaf
            self.spine.append(leaf)
            return leaf
        old = self.spine[0]
        self._close(old, t - 1)
        self.spine[0] = leaf
        self._attach(leaf)
        return leaf

    def _close(self, node: TreeNode, end_time: int) -> None:
        node.end_time = end_time
        if node.matrix is not None:
            node.matrix.end_time = end_time
        if node.is_leaf:
            node.sealed = True
            node.ready.set()

    def _attach(self, node: TreeNode) -> None:
        """Hang a freshly opened node under the spine one level up, splitting as needed."""
        up = node.level  # spine index of the parent level
        if up == len(self.spine):
            old_root = self.root
            root = TreeNode(up + 1, old_root.start_time)
            root.add_child(old_root)
            root.add_child(node)
            self.spine.append(root)
            self.root = root
            if up > 1:
                self._seal(old_root)
            return
        parent = self.spine[up]
        if len(parent.children) < self.theta:
            parent.add_child(node)
            if up > 1:
                self._seal(parent.children[-2])
            return
        if up > 1:
            self._seal(parent.children[-1])
        self._close(parent, node.start_time - 1)
        fresh = TreeNode(up + 1, node.start_time)
        fresh.filler = True
        fresh.add_child(node)
        self.spine[up] = fresh
        self._attach(fresh)

    def _seal(self, node: TreeNode) -> None:
        """Close a non-leaf whose last child is sealed and build its matrix."""
        if node.sealed:
            return
        if node.end_time is None:
            node.end_time = node.children[-1].end_time
        node.sealed = True
        if self.aggregator is not None:
            self.aggregator.submit(node)
        else:
            self.aggregate(node)

    def aggregate(self, node: TreeNode) -> None:
        """Build ``node.matrix`` from its children (waits for each child's matrix)."""
        if node.level <= self.cfg.level_cap:
            m = CompressedMatrix(self.cfg, node.level, start_time=node.start_time)
            for child in node.children:
                child.ready.wait()
                if child.matrix is None:
                    m = None
                    break
                m.aggregate_child(child.matrix)
            if m is not None:
                m.end_time = node.end_time
            node.matrix = m
        node.ready.set()

    # -- writes ---------------------------------------------------------

    def _check_open(self, t: int) -> None:
        if self.finalized:
            raise FinalizedError("tree is finalized; no further inserts")
        if self.last_time is not None and t < self.last_time:
            raise OrderingError(f"timestamp {t} is older than the newest seen ({self.last_time})")

    def insert(self, src: int, dst: int, weight: int, t: int) -> None:
        """Insert one stream edge ``(src, dst, weight, t)``."""
        self._check_open(t)
        if weight < 1:
            raise ValueError("edge weight must be >= 1")
        hc = self.cfg.hash
        s, d = digest(src, hc), digest(dst, hc)
        with self._lock:
            self._insert_digests(s, d, weight, t)

    def insert_edge(self, e: StreamEdge) -> None:
        self.insert(e.src, e.dst, e.weight, e.timestamp)

    def _insert_digests(self, s: VertexDigest, d: VertexDigest, weight: int, t: int) -> None:
        leaf = self.spine[0] if self.spine else self._new_leaf(t)
        m = leaf.matrix
        off = t - leaf.start_time
        if off > self.cfg.max_offset:
            leaf = self._new_leaf(t)
            m, off = leaf.matrix, 0
        out = m.insert(s, d, off, weight)
        if out.kind is Outcome.FULL:
            if t == m.last_time:
                m.overflow_insert(s, d, t, weight)
            else:
                leaf = self._new_leaf(t)
                leaf.matrix.insert(s, d, 0, weight)
        self._account(leaf, t, weight, 1)

    def _account(self, leaf: TreeNode, t: int, weight: int, count: int) -> None:
        leaf.matrix.last_time = t
        if self.first_time is None:
            self.first_time = leaf.start_time
        self.last_time = t
        self.edge_count += count
        self.inserted_weight += weight

    def insert_many(self, src, dst, weight, t) -> None:
        """Insert a timestamp-ordered batch given as parallel arrays."""
        src = np.asarray(src, dtype=np.uint64)
        dst = np.asarray(dst, dtype=np.uint64)
        t = np.ascontiguousarray(t, dtype=np.int64)
        w = np.ascontiguousarray(np.broadcast_to(weight, t.shape), dtype=np.int64)
        n = t.shape[0]
        if not (src.shape[0] == dst.shape[0] == n):
            raise ValueError("src, dst, weight and t must have equal lengths")
        if n == 0:
            return
        self._check_open(int(t[0]))
        if n > 1 and np.any(np.diff(t) < 0):
            raise OrderingError("batch timestamps are not monotone")
        if np.any(w < 1):
            raise ValueError("edge weights must be >= 1")
        hc = self.cfg.hash
        sfp, sbase = digest_arrays(src, hc)
        dfp, dbase = digest_arrays(dst, hc)
        with self._lock:
            self._insert_run(sfp, sbase, dfp, dbase, t, w)

    def _insert_run(self, sfp, sbase, dfp, dbase, t, w) -> None:
        n = t.shape[0]
        pos = 0
        cfg = self.cfg
        while pos < n:
            if not self.spine:
                self._new_leaf(int(t[pos]))
            leaf = self.spine[0]
            m = leaf.matrix
            end, stop, placed, sat = K.insert_run(
                m.sfp, m.dfp, m.idx, m.toff, m.w, m.d, m.b, m.r,
                sfp, sbase, dfp, dbase, t, w, leaf.start_time, cfg.max_offset, pos, n,
            )
            m.occupied += placed
            m.saturated |= bool(sat)
            if end > pos:
                self._account(leaf, int(t[end - 1]), int(w[pos:end].sum()), end - pos)
            pos = end
            if stop == K.STOP_DONE:
                break
            te = int(t[pos])
            s = VertexDigest(0, int(sfp[pos]), int(sbase[pos]))
            d = VertexDigest(0, int(dfp[pos]), int(dbase[pos]))
            if stop == K.STOP_FULL and te == m.last_time:
                m.overflow_insert(s, d, te, int(w[pos]))
            else:
                leaf = self._new_leaf(te)
                leaf.matrix.insert(s, d, 0, int(w[pos]))
            self._account(leaf, te, int(w[pos]), 1)
            pos += 1

    def finalize(self) -> None:
        """Seal the open spine bottom-up so every node has its aggregated matrix."""
        with self._lock:
            if self.finalized:
                return
            self.finalized = True
            if not self.spine:
                if self.aggregator is not None:
                    self.aggregator.close()
                return
            end = self.last_time
            for node in self.spine:
                if node.is_leaf:
                    self._close(node, end)
                else:
                    node.end_time = end
                    self._seal(node)
        if self.aggregator is not None:
            self.aggregator.close()

    def wait_ready(self) -> None:
        """Block until every sealed node's aggregation has completed."""
        for node in self.nodes():
            if node.sealed:
                node.ready.wait()

    def delete(self, src: int, dst: int, weight: int, t: int) -> None:
        """Remove ``weight`` of the edge ``(src, dst)`` at time ``t`` from leaf and ancestors."""
        if weight < 1:
            raise ValueError("deleted weight must be >= 1")
        hc = self.cfg.hash
        s, d = digest(src, hc), digest(dst, hc)
        with self._lock:
            if self.root is None or t < self.first_time or t > self.last_time:
                raise NotFoundError(f"no edge stored at t={t}")
            path = [self.root]
            while not path[-1].is_leaf:
                path.append(path[-1].child_for(t))
            targets = []
            for node in path:
                if node.matrix is None or (not node.is_leaf and not node.sealed):
                    continue
                if not node.is_leaf:
                    node.ready.wait()
                if node.matrix is None:
                    continue
                ls, ld = at_level(s, node.level, hc), at_level(d, node.level, hc)
                node.matrix.subtract(ls, ld, t if node.is_leaf else None, weight, dry_run=True)
                targets.append((node.matrix, ls, ld, t if node.is_leaf else None))
            for m, ls, ld, tt in targets:
                m.subtract(ls, ld, tt, weight)
            self.deleted_weight += weight
            self.edge_count -= 1

    def delete_edge(self, e: StreamEdge) -> None:
        self.delete(e.src, e.dst, e.weight, e.timestamp)

    # -- inspection -----------------------------------------------------

    def nodes(self) -> Iterator[TreeNode]:
        """Pre-order traversal."""
        if self.root is None:
            return
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def leaves(self) -> Iterator[TreeNode]:
        return (n for n in self.nodes() if n.is_leaf)

    def levels(self) -> list[list[TreeNode]]:
        """Nodes grouped by level (index 0 = leaves), left to right."""
        out: list[list[TreeNode]] = [[] for _ in range(self.level_count)]
        for node in self.nodes():
            out[node.level - 1].append(node)
        return out

    def node_end(self, node: TreeNode) -> int:
        """Inclusive end of a node's time span (open nodes end at the newest timestamp)."""
        return node.end_time if node.end_time is not None else self.last_time

    def span(self) -> tuple[int, int] | None:
        if self.root is None:
            return None
        return self.first_time, self.last_time

    def stored_leaf_weight(self) -> int:
        return sum(n.matrix.total_weight() for n in self.leaves())

    def key_bytes(self) -> int:
        return sum(len(n.keys) for n in self.nodes()) * KEY_BITS // 8

    def stats(self) -> TreeStats:
        levels = self.levels()
        util = []
        total = 0
        overflow = 0
        spill = 0
        for nodes in levels:
            occ = slots = 0
            for n in nodes:
                if n.matrix is None:
                    continue
                occ += n.matrix.occupied
                slots += n.matrix.slots
                total += n.matrix.space_bytes()
                overflow += len(n.matrix.overflow)
                spill += len(n.matrix.spill)
            util.append(occ / slots if slots else 0.0)
        keys = self.key_bytes()
        return TreeStats(
            edge_count=self.edge_count,
            total_weight=self.inserted_weight - self.deleted_weight,
            leaf_count=self.leaf_count,
            level_count=self.level_count,
            bytes=total + keys,
            key_bytes=keys,
            nodes_per_level=[len(x) for x in levels] or [0],
            utilization_per_level=util or [0.0],
            overflow_blocks=overflow,
            spill_entries=spill,
            saturated=self.saturated,
            span=self.span(),
        )


def build_tree(edges, cfg: HiggsConfig | None = None, finalize: bool = True) -> SummaryTree:
    """Convenience: insert :class:`EdgeArrays` or an iterable of :class:`StreamEdge` (or 4-tuples) and finalize."""
    tree = SummaryTree(cfg)
    if isinstance(edges, EdgeArrays):
        tree.insert_many(edges.src, edges.dst, edges.weight, edges.t)
        edges = ()
    for e in edges:
        if isinstance(e, StreamEdge):
            tree.insert_edge(e)
        else:
            tree.insert(*e)
    if finalize:
        tree.finalize()
    return tree
