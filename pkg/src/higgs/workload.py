"""Query workloads: a small line grammar, random generation, and batch execution.

Grammar, one query per line (``#``/``%`` comments allowed)::

    edge s d ts te
    vout v ts te
    vin v ts te
    path k v1 .. vk ts te
    subgraph k s1 d1 .. sk dk ts te
    gen <edge|edge-any|vout|vin|path|subgraph> <count> <Lq> [size]

``gen`` expands into ``count`` random queries of range length ``Lq``: pick a
random stream item, draw ``ts`` uniformly from ``[t - Lq, t]`` and set
``te = ts + Lq``, so every range overlaps live data.  ``edge`` takes the
queried pair from the stream, ``edge-any`` draws both endpoints uniformly
from the vertex set.  ``size`` is the hop count of paths (default 4) or the
edge count of subgraphs (default 10).
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

from higgs import query as Q
from higgs.edgelist import EdgeArrays, VertexDictionary
from higgs.errors import ParseError
from higgs.matrix import TemporalRange
from higgs.metrics import AccuracyReport, compute_accuracy
from higgs.oracle import ExactStore
from higgs.tree import SummaryTree

KINDS = ("edge", "vout", "vin", "path", "subgraph")
GEN_KINDS = ("edge", "edge-any", "vout", "vin", "path", "subgraph")
DEFAULT_PATH_HOPS = 4
DEFAULT_SUBGRAPH_EDGES = 10


@dataclass(frozen=True)
class Query:
    kind: str
    vertices: tuple[int, ...]
    ts: int
    te: int

    @property
    def range(self) -> TemporalRange:
        return TemporalRange(self.ts, self.te)

    def pairs(self) -> list[tuple[int, int]]:
        v = self.vertices
        if self.kind == "subgraph":
            return list(zip(v[0::2], v[1::2]))
        return list(zip(v, v[1:]))

    def to_line(self) -> str:
        v = " ".join(map(str, self.vertices))
        if self.kind == "path":
            return f"path {len(self.vertices)} {v} {self.ts} {self.te}"
        if self.kind == "subgraph":
            return f"subgraph {len(self.vertices) // 2} {v} {self.ts} {self.te}"
        return f"{self.kind} {v} {self.ts} {self.te}"


@dataclass(frozen=True)
class GenDirective:
    kind: str
    count: int
    length: int
    size: int | None = None


@dataclass
class WorkloadResult:
    log: list[dict] = field(default_factory=list)
    accuracy: dict[str, AccuracyReport] = field(default_factory=dict)
    error: str | None = None
    generated_from: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "queries": len(self.log),
            "error": self.error,
            "generated": self.generated_from,
            "accuracy": {k: v.to_dict() for k, v in self.accuracy.items()},
            "log": self.log,
        }


def _vertex(token: str, vocab: VertexDictionary | None, line: int) -> int:
    if token.isdigit():
        return int(token)
    vid = vocab.lookup(token) if vocab is not None else None
    if vid is None:
        raise ParseError(f"unknown vertex {token!r}", line)
    return vid


def _int(token: str, line: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"expected an integer, got {token!r}", line) from None


def _range(parts: list[str], line: int) -> tuple[int, int]:
    ts, te = _int(parts[-2], line), _int(parts[-1], line)
    if ts > te:
        raise ParseError(f"empty range [{ts}, {te}]", line)
    return ts, te


def parse_workload(lines: Iterable[str], vocab: VertexDictionary | None = None) -> list[Query | GenDirective]:
    out: list[Query | GenDirective] = []
    for no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line[0] in "#%":
            continue
        parts = line.split()
        head = parts[0]
        if head == "gen":
            if len(parts) not in (4, 5) or parts[1] not in GEN_KINDS:
                raise ParseError("usage: gen <edge|edge-any|vout|vin|path|subgraph> <count> <Lq> [size]", no)
            count, length = _int(parts[2], no), _int(parts[3], no)
            size = _int(parts[4], no) if len(parts) == 5 else None
            if count < 0 or length < 0 or (size is not None and size < 1):
                raise ParseError("gen count, Lq and size must be non-negative", no)
            out.append(GenDirective(parts[1], count, length, size))
            continue
        if head in ("edge", "vout", "vin"):
            want = 5 if head == "edge" else 4
            if len(parts) != want:
                raise ParseError(f"{head} takes {want - 1} arguments", no)
            verts = tuple(_vertex(p, vocab, no) for p in parts[1:-2])
        elif head in ("path", "subgraph"):
            if len(parts) < 2:
                raise ParseError(f"{head} needs a count", no)
            k = _int(parts[1], no)
            n_vert = k if head == "path" else 2 * k
            if (head == "path" and k < 2) or (head == "subgraph" and k < 1):
                raise ParseError(f"{head} count too small: {k}", no)
            if len(parts) != 2 + n_vert + 2:
                raise ParseError(f"{head} {k} expects {n_vert} vertices and a range", no)
            verts = tuple(_vertex(p, vocab, no) for p in parts[2:-2])
        else:
            raise ParseError(f"unknown directive {head!r}", no)
        ts, te = _range(parts, no)
        out.append(Query(head, verts, ts, te))
    return out


def read_workload(source: str | os.PathLike | TextIO, vocab: VertexDictionary | None = None):
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            return parse_workload(fh, vocab)
    return parse_workload(source, vocab)


def parse_workload_text(text: str, vocab: VertexDictionary | None = None):
    return parse_workload(io.StringIO(text), vocab)


class _Neighbours:
    """Out-neighbour lists, for random walks."""

    def __init__(self, edges: EdgeArrays):
        order = np.argsort(edges.src, kind="stable")
        self.src = edges.src[order]
        self.dst = edges.dst[order]

    def step(self, v: int, rng: np.random.Generator) -> int | None:
        lo = np.searchsorted(self.src, np.uint64(v), "left")
        hi = np.searchsorted(self.src, np.uint64(v), "right")
        if lo == hi:
            return None
        return int(self.dst[rng.integers(lo, hi)])


def generate(directive: GenDirective, edges: EdgeArrays, rng: np.random.Generator) -> list[Query]:
    """Random queries anchored at stream items so ranges overlap live data."""
    n = len(edges)
    if n == 0 or directive.count == 0:
        return []
    lq = directive.length
    picks = rng.integers(0, n, directive.count)
    starts = edges.t[picks] - rng.integers(0, lq + 1, directive.count)
    verts_all = None
    walker = None
    out = []
    for q, i in enumerate(picks.tolist()):
        ts = int(starts[q])
        te = ts + lq
        s, d = int(edges.src[i]), int(edges.dst[i])
        kind = directive.kind
        if kind == "edge":
            out.append(Query("edge", (s, d), ts, te))
        elif kind == "edge-any":
            if verts_all is None:
                verts_all = np.union1d(edges.src, edges.dst)
            a, b = rng.integers(0, verts_all.size, 2)
            out.append(Query("edge", (int(verts_all[a]), int(verts_all[b])), ts, te))
        elif kind in ("vout", "vin"):
            out.append(Query(kind, (s if kind == "vout" else d,), ts, te))
        elif kind == "path":
            walker = walker or _Neighbours(edges)
            hops = directive.size or DEFAULT_PATH_HOPS
            path = [s, d]
            while len(path) < hops + 1:
                nxt = walker.step(path[-1], rng)
                if nxt is None:
                    nxt = int(edges.dst[rng.integers(0, n)])
                path.append(nxt)
            out.append(Query("path", tuple(path), ts, te))
        else:
            size = directive.size or DEFAULT_SUBGRAPH_EDGES
            rows = rng.integers(0, n, size - 1)
            flat = [s, d]
            for r in rows.tolist():
                flat += [int(edges.src[r]), int(edges.dst[r])]
            out.append(Query("subgraph", tuple(flat), ts, te))
    return out


def expand(items: list[Query | GenDirective], edges: EdgeArrays | None, seed: int = 0) -> tuple[list[Query], list[str]]:
    rng = np.random.default_rng(seed)
    queries: list[Query] = []
    notes: list[str] = []
    for item in items:
        if isinstance(item, GenDirective):
            if edges is None:
                raise ParseError("gen directives need the source stream")
            queries += generate(item, edges, rng)
            source = "uniform V x V" if item.kind == "edge-any" else "stream items"
            notes.append(f"{item.count} {item.kind} queries, Lq={item.length}, endpoints from {source}")
        else:
            queries.append(item)
    return queries, notes


def estimate(tree: SummaryTree, q: Query) -> int:
    rng = q.range
    if q.kind == "edge":
        return Q.edge_query(tree, q.vertices[0], q.vertices[1], rng)
    if q.kind in ("vout", "vin"):
        return Q.vertex_query(tree, q.vertices[0], "out" if q.kind == "vout" else "in", rng)
    if q.kind == "path":
        return Q.path_query(tree, q.vertices, rng)
    return Q.subgraph_query(tree, q.pairs(), rng)


def truth(store: ExactStore, q: Query) -> int:
    rng = q.range
    if q.kind == "edge":
        return store.exact_edge(q.vertices[0], q.vertices[1], rng)
    if q.kind in ("vout", "vin"):
        return store.exact_vertex(q.vertices[0], "out" if q.kind == "vout" else "in", rng)
    if q.kind == "path":
        return store.exact_path(q.vertices, rng)
    return store.exact_subgraph(q.pairs(), rng)


def run_queries(tree: SummaryTree, queries: list[Query], store: ExactStore | None = None) -> WorkloadResult:
    result = WorkloadResult()
    if not queries:
        result.error = "empty workload"
        return result
    by_kind: dict[str, tuple[list[int], list[int]]] = {}
    for q in queries:
        est = estimate(tree, q)
        row = {"query": q.to_line(), "estimate": est}
        if store is not None:
            tv = truth(store, q)
            row["truth"] = tv
            f, g = by_kind.setdefault(q.kind, ([], []))
            f.append(tv)
            g.append(est)
        result.log.append(row)
    for kind, (f, g) in by_kind.items():
        result.accuracy[kind] = compute_accuracy(f, g)
    if by_kind:
        f_all = [x for f, _ in by_kind.values() for x in f]
        g_all = [x for _, g in by_kind.values() for x in g]
        result.accuracy["all"] = compute_accuracy(f_all, g_all)
    return result


def run_workload(tree: SummaryTree, store: ExactStore | None, source, edges: EdgeArrays | None = None,
                 vocab: VertexDictionary | None = None, seed: int = 0) -> WorkloadResult:
    """Parse, expand and execute a workload; compares against ``store`` when given."""
    items = read_workload(source, vocab) if not isinstance(source, list) else source
    queries, notes = expand(items, edges, seed)
    result = run_queries(tree, queries, store)
    result.generated_from = notes
    return result
