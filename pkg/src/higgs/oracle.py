"""Exact ground truth for every query type.

Edges are kept raw and indexed lazily: after sorting, each (src, dst) pair
and each vertex owns a contiguous run of (timestamp, weight) rows with a
shared prefix-sum array, so any range sum is two binary searches.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from higgs.errors import NotFoundError
from higgs.matrix import TemporalRange
from higgs.tree import StreamEdge


class _Runs:
    """Timestamp-sorted runs keyed by a vertex or vertex pair."""

    __slots__ = ("index", "times", "prefix")

    def __init__(self, keys: list, bounds: np.ndarray, times: np.ndarray, weights: np.ndarray):
        self.index = dict(zip(keys, zip(bounds[:-1].tolist(), bounds[1:].tolist())))
        self.times = times
        self.prefix = np.concatenate(([0], np.cumsum(weights, dtype=np.int64)))

    def total(self, key, ts: int, te: int) -> int:
        run = self.index.get(key)
        if run is None:
            return 0
        lo, hi = run
        t = self.times[lo:hi]
        i = lo + int(np.searchsorted(t, ts, "left"))
        j = lo + int(np.searchsorted(t, te, "right"))
        return int(self.prefix[j] - self.prefix[i])


def _group(keys_sorted: Sequence[np.ndarray]) -> np.ndarray:
    """Start offsets of runs of equal keys (plus the end sentinel)."""
    n = keys_sorted[0].shape[0]
    change = np.zeros(n, dtype=bool)
    if n:
        change[0] = True
    for k in keys_sorted:
        change[1:] |= k[1:] != k[:-1]
    return np.concatenate((np.flatnonzero(change), [n]))


class ExactStore:
    def __init__(self) -> None:
        self._chunks: list[tuple[np.ndarray, ...]] = []
        self._removed: dict[tuple[int, int, int], int] = {}
        self._dirty = True
        self.src = np.zeros(0, dtype=np.uint64)
        self.dst = np.zeros(0, dtype=np.uint64)
        self.t = np.zeros(0, dtype=np.int64)
        self.w = np.zeros(0, dtype=np.int64)
        self._edge: _Runs | None = None
        self._out: _Runs | None = None
        self._in: _Runs | None = None

    def __len__(self) -> int:
        self._ensure()
        return int(self.src.shape[0])

    # -- updates --------------------------------------------------------

    def record(self, e: StreamEdge) -> None:
        self.record_many([e.src], [e.dst], [e.weight], [e.timestamp])

    def record_many(self, src, dst, weight, t) -> None:
        t = np.asarray(t, dtype=np.int64)
        w = np.broadcast_to(np.asarray(weight, dtype=np.int64), t.shape).copy()
        self._chunks.append((np.asarray(src, dtype=np.uint64), np.asarray(dst, dtype=np.uint64), t, w))
        self._dirty = True

    def remove(self, e: StreamEdge) -> None:
        """Subtract a previously recorded edge (exact identity and timestamp)."""
        self._ensure(fold_removals=False)
        key = (int(e.src), int(e.dst), int(e.timestamp))
        have = self._edge.total(key[:2], key[2], key[2]) - self._removed.get(key, 0)
        if have < e.weight:
            raise NotFoundError(f"edge {e} is not recorded (available weight {have})")
        self._removed[key] = self._removed.get(key, 0) + e.weight

    # -- indexing -------------------------------------------------------

    def _ensure(self, fold_removals: bool = True) -> None:
        if fold_removals and self._removed:
            keys = np.array(list(self._removed), dtype=object)
            self._chunks.append((
                keys[:, 0].astype(np.uint64), keys[:, 1].astype(np.uint64),
                keys[:, 2].astype(np.int64), -np.array(list(self._removed.values()), dtype=np.int64),
            ))
            self._removed = {}
            self._dirty = True
        if not self._dirty:
            return
        parts = [(self.src, self.dst, self.t, self.w), *self._chunks]
        src = np.concatenate([p[0] for p in parts])
        dst = np.concatenate([p[1] for p in parts])
        t = np.concatenate([p[2] for p in parts])
        w = np.concatenate([p[3] for p in parts])
        self._chunks = []
        order = np.lexsort((t, dst, src))
        src, dst, t, w = src[order], dst[order], t[order], w[order]
        # merge duplicate (src, dst, t) rows and drop fully removed ones
        starts = _group([src, dst, t])[:-1]
        if starts.shape[0] != src.shape[0]:
            w = np.add.reduceat(w, starts) if starts.size else w[:0]
            src, dst, t = src[starts], dst[starts], t[starts]
        keep = w != 0
        self.src, self.dst, self.t, self.w = src[keep], dst[keep], t[keep], w[keep]
        self._build_indexes()
        self._dirty = False

    def _build_indexes(self) -> None:
        src, dst, t, w = self.src, self.dst, self.t, self.w
        b = _group([src, dst])
        first = b[:-1]
        self._edge = _Runs(list(zip(src[first].tolist(), dst[first].tolist())), b, t, w)
        for attr, col in (("_out", src), ("_in", dst)):
            order = np.lexsort((t, col))
            c, tt = col[order], t[order]
            b = _group([c])
            setattr(self, attr, _Runs(c[b[:-1]].tolist(), b, tt, w[order]))

    # -- queries --------------------------------------------------------

    def exact_edge(self, src: int, dst: int, rng: TemporalRange) -> int:
        self._ensure()
        return self._edge.total((int(src), int(dst)), rng.ts, rng.te)

    def exact_vertex(self, v: int, direction: str, rng: TemporalRange) -> int:
        self._ensure()
        runs = self._out if direction == "out" else self._in
        if direction not in ("out", "in"):
            raise ValueError(f"direction must be 'out' or 'in', got {direction!r}")
        return runs.total(int(v), rng.ts, rng.te)

    def exact_path(self, vertices: Sequence[int], rng: TemporalRange) -> int:
        if len(vertices) < 2:
            raise ValueError("a path needs at least two vertices")
        return sum(self.exact_edge(a, b, rng) for a, b in zip(vertices, vertices[1:]))

    def exact_subgraph(self, edges: Iterable[tuple[int, int]], rng: TemporalRange) -> int:
        unique = list(dict.fromkeys((int(s), int(d)) for s, d in edges))
        if not unique:
            raise ValueError("subgraph query needs at least one edge")
        return sum(self.exact_edge(s, d, rng) for s, d in unique)

    # -- views ----------------------------------------------------------

    def total_weight(self) -> int:
        self._ensure()
        return int(self.w.sum())

    def distinct_edges(self) -> list[tuple[int, int]]:
        self._ensure()
        return list(self._edge.index)

    def vertices(self) -> np.ndarray:
        self._ensure()
        return np.union1d(self.src, self.dst)

    def span(self) -> tuple[int, int] | None:
        self._ensure()
        if self.t.shape[0] == 0:
            return None
        return int(self.t.min()), int(self.t.max())


class NaiveStore:
    """Linear-scan reference used to cross-check :class:`ExactStore`."""

    def __init__(self, edges: Iterable[StreamEdge] = ()):
        self.edges = list(edges)

    def record(self, e: StreamEdge) -> None:
        self.edges.append(e)

    def exact_edge(self, src: int, dst: int, rng: TemporalRange) -> int:
        return sum(e.weight for e in self.edges if e.src == src and e.dst == dst and rng.contains(e.timestamp))

    def exact_vertex(self, v: int, direction: str, rng: TemporalRange) -> int:
        pick = (lambda e: e.src) if direction == "out" else (lambda e: e.dst)
        return sum(e.weight for e in self.edges if pick(e) == v and rng.contains(e.timestamp))
