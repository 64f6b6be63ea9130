"""Temporal range queries over a :class:`~higgs.tree.SummaryTree`.

A range is first decomposed into a minimal set of matrices whose time spans
tile it (boundary search).  Sealed nodes fully inside the range contribute
their aggregated matrix; leaves at the fringe contribute with a timestamp
filter; everything else is expanded into its children.  Each query then sums
per-matrix lookups with the vertex digests lifted to that matrix's level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np

from higgs.hashing import at_level, digest, digest_arrays
from higgs.matrix import CompressedMatrix, TemporalRange
from higgs.tree import SummaryTree, TreeNode

Direction = Literal["out", "in"]

__all__ = [
    "Direction",
    "DecomposedPlan",
    "PlanItem",
    "TemporalRange",
    "boundary_search",
    "clip_range",
    "edge_query",
    "edge_query_batch",
    "path_query",
    "plan_size_bound",
    "subgraph_query",
    "vertex_query",
]


@dataclass(frozen=True)
class PlanItem:
    node: TreeNode
    span: tuple[int, int]
    time_filter: TemporalRange | None = None

    @property
    def matrix(self) -> CompressedMatrix:
        return self.node.matrix

    @property
    def level(self) -> int:
        return self.node.level


@dataclass
class DecomposedPlan:
    query: TemporalRange
    clipped: TemporalRange | None
    items: list[PlanItem] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def spans(self) -> list[tuple[int, int]]:
        return [it.span for it in self.items]

    def is_exact_cover(self) -> bool:
        """Spans are disjoint, in order, and tile the clipped range without gaps."""
        if self.clipped is None:
            return not self.items
        spans = sorted(self.spans())
        if not spans or spans[0][0] != self.clipped.ts or spans[-1][1] != self.clipped.te:
            return False
        for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
            if b0 != a1 + 1:
                return False
        return all(a <= b for a, b in spans)


def plan_size_bound(theta: int, leaf_count: int) -> int:
    """Largest plan boundary search may return for a tree with ``leaf_count`` leaves."""
    if leaf_count <= 1:
        return 2
    depth = math.ceil(math.log(leaf_count, theta) - 1e-12)
    return 2 * (theta - 1) * depth + 2


def clip_range(tree: SummaryTree, rng: TemporalRange) -> TemporalRange | None:
    span = tree.span()
    if span is None:
        return None
    lo, hi = max(rng.ts, span[0]), min(rng.te, span[1])
    return TemporalRange(lo, hi) if lo <= hi else None


def _usable_whole(node: TreeNode) -> bool:
    if node.is_leaf:
        return True
    return node.sealed and not node.filler and node.ready.is_set() and node.matrix is not None


def boundary_search(tree: SummaryTree, rng: TemporalRange) -> DecomposedPlan:
    """Minimal set of matrices whose spans exactly tile ``rng`` clipped to the stream."""
    clipped = clip_range(tree, rng)
    plan = DecomposedPlan(rng, clipped)
    if clipped is None:
        return plan
    lo, hi = clipped.ts, clipped.te
    items = plan.items

    def visit(node: TreeNode, start: int, end: int) -> None:
        if lo <= start and end <= hi and _usable_whole(node):
            items.append(PlanItem(node, (start, end)))
            return
        if node.is_leaf:
            a, b = max(lo, start), min(hi, end)
            items.append(PlanItem(node, (a, b), TemporalRange(a, b)))
            return
        kids = node.children
        keys = node.keys
        for i, child in enumerate(kids):
            c_start = child.start_time
            c_end = keys[i] - 1 if i < len(keys) else end
            if c_end < lo:
                continue
            if c_start > hi:
                break
            visit(child, c_start, c_end)

    visit(tree.root, tree.root.start_time, tree.last_time)
    return plan


def _lift_arrays(fp: np.ndarray, base: np.ndarray, level: int, tree: SummaryTree):
    if level == 1:
        return fp, base
    hc = tree.cfg.hash
    k = (level - 1) * hc.r_bits
    rest = hc.f1 - k
    return fp & ((1 << rest) - 1), (base << k) | (fp >> rest)


def _edge_weights(tree: SummaryTree, plan: DecomposedPlan, sfp, sbase, dfp, dbase) -> np.ndarray:
    out = np.zeros(sfp.shape[0], dtype=np.uint64)
    lifted: dict[int, tuple] = {}
    for item in plan.items:
        lv = item.level
        if lv not in lifted:
            lifted[lv] = (*_lift_arrays(sfp, sbase, lv, tree), *_lift_arrays(dfp, dbase, lv, tree))
        item.matrix.edge_weights(*lifted[lv], item.time_filter, out)
    return out


def edge_query_batch(tree: SummaryTree, pairs: Sequence[tuple[int, int]], rng: TemporalRange) -> list[int]:
    """Estimated weight of each ``(src, dst)`` pair over ``rng``, sharing one plan."""
    if not pairs:
        return []
    plan = boundary_search(tree, rng)
    if not plan.items:
        return [0] * len(pairs)
    arr = np.asarray(pairs, dtype=np.uint64).reshape(-1, 2)
    sfp, sbase = digest_arrays(arr[:, 0], tree.cfg.hash)
    dfp, dbase = digest_arrays(arr[:, 1], tree.cfg.hash)
    return [int(x) for x in _edge_weights(tree, plan, sfp, sbase, dfp, dbase)]


def edge_query(tree: SummaryTree, src: int, dst: int, rng: TemporalRange) -> int:
    """Estimated aggregated weight of ``src -> dst`` over ``rng``; never below the truth."""
    return edge_query_batch(tree, [(src, dst)], rng)[0]


def vertex_query(tree: SummaryTree, v: int, direction: Direction, rng: TemporalRange) -> int:
    """Estimated total weight of ``v``'s outgoing (``"out"``) or incoming (``"in"``) edges."""
    if direction not in ("out", "in"):
        raise ValueError(f"direction must be 'out' or 'in', got {direction!r}")
    plan = boundary_search(tree, rng)
    dg = digest(v, tree.cfg.hash)
    total = 0
    for item in plan.items:
        lv = at_level(dg, item.level, tree.cfg.hash)
        total += item.matrix.vertex_weight(lv, direction == "out", item.time_filter)
    return total


def path_query(tree: SummaryTree, vertices: Sequence[int], rng: TemporalRange) -> int:
    """Sum of edge estimates along consecutive hops of ``vertices``."""
    if len(vertices) < 2:
        raise ValueError("a path needs at least two vertices")
    hops = list(zip(vertices, vertices[1:]))
    return sum(edge_query_batch(tree, hops, rng))


def subgraph_query(tree: SummaryTree, edges: Iterable[tuple[int, int]], rng: TemporalRange) -> int:
    """Sum of edge estimates over an edge set (duplicates counted once)."""
    unique = list(dict.fromkeys((int(s), int(d)) for s, d in edges))
    if not unique:
        raise ValueError("subgraph query needs at least one edge")
    return sum(edge_query_batch(tree, unique, rng))
