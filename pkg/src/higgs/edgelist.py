"""Whitespace edge-list files: ``src dst [weight] timestamp`` per line.

Lines starting with ``%`` or ``#`` are comments.  Three-field lines omit the
weight (it defaults to 1).  Vertex tokens that are not unsigned integers are
mapped to ids from ``TEXT_ID_BASE`` upward, in first-seen order.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass
from typing import Iterable, Iterator, TextIO

import numpy as np

from higgs.errors import ParseError

TEXT_ID_BASE = 1 << 63
_MAX_ID = (1 << 64) - 1


@dataclass(frozen=True)
class EdgeArrays:
    """A stream as parallel arrays: uint64 ids, int64 weights and timestamps."""

    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    t: np.ndarray

    def __len__(self) -> int:
        return int(self.t.shape[0])

    @classmethod
    def empty(cls) -> "EdgeArrays":
        return cls(np.zeros(0, np.uint64), np.zeros(0, np.uint64), np.zeros(0, np.int64), np.zeros(0, np.int64))

    @classmethod
    def from_tuples(cls, edges: Iterable[tuple[int, int, int, int]]) -> "EdgeArrays":
        rows = list(edges)
        if not rows:
            return cls.empty()
        s, d, w, t = zip(*rows)
        return cls(np.array(s, np.uint64), np.array(d, np.uint64), np.array(w, np.int64), np.array(t, np.int64))

    def sorted_by_time(self) -> "EdgeArrays":
        order = np.argsort(self.t, kind="stable")
        return EdgeArrays(self.src[order], self.dst[order], self.weight[order], self.t[order])

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter((self.src, self.dst, self.weight, self.t))

    def __getitem__(self, index) -> "EdgeArrays":
        return EdgeArrays(self.src[index], self.dst[index], self.weight[index], self.t[index])

    def rows(self) -> Iterator[tuple[int, int, int, int]]:
        for s, d, w, t in zip(self.src.tolist(), self.dst.tolist(), self.weight.tolist(), self.t.tolist()):
            yield s, d, w, t


class VertexDictionary:
    """Two-way map between textual vertex names and their assigned ids."""

    def __init__(self, names: Iterable[str] = ()):
        self.names = list(names)
        self._ids = {n: TEXT_ID_BASE + i for i, n in enumerate(self.names)}

    def __len__(self) -> int:
        return len(self.names)

    def encode(self, token: str) -> int:
        vid = self._ids.get(token)
        if vid is None:
            vid = TEXT_ID_BASE + len(self.names)
            self.names.append(token)
            self._ids[token] = vid
        return vid

    def lookup(self, token: str) -> int | None:
        """Id for a query token: numeric tokens pass through, names must be known."""
        if token.isdigit():
            return int(token)
        return self._ids.get(token)

    def decode(self, vid: int) -> str:
        k = vid - TEXT_ID_BASE
        if 0 <= k < len(self.names):
            return self.names[k]
        return str(vid)


def _vertex(token: str, vocab: VertexDictionary, line: int) -> int:
    if token.isdigit():
        v = int(token)
        if v > _MAX_ID:
            raise ParseError(f"vertex id {token} exceeds 64 bits", line)
        return v
    return vocab.encode(token)


def _int(token: str, what: str, line: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"{what} must be an integer, got {token!r}", line) from None


def parse_lines(lines: Iterable[str], vocab: VertexDictionary | None = None) -> tuple[EdgeArrays, VertexDictionary]:
    vocab = vocab if vocab is not None else VertexDictionary()
    src: list[int] = []
    dst: list[int] = []
    wts: list[int] = []
    tss: list[int] = []
    for no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line[0] in "%#":
            continue
        parts = line.split()
        if len(parts) == 3:
            s, d, t = parts
            w = 1
        elif len(parts) == 4:
            s, d, w_tok, t = parts
            w = _int(w_tok, "weight", no)
        else:
            raise ParseError(f"expected 3 or 4 fields, got {len(parts)}", no)
        if w < 1:
            raise ParseError(f"weight must be >= 1, got {w}", no)
        src.append(_vertex(s, vocab, no))
        dst.append(_vertex(d, vocab, no))
        wts.append(w)
        tss.append(_int(t, "timestamp", no))
    if vocab.names:
        ids = np.array(src + dst, dtype=np.uint64)
        names = set(vocab._ids.values())
        clash = [int(v) for v in ids[ids >= np.uint64(TEXT_ID_BASE)] if int(v) not in names]
        if clash:
            raise ParseError(f"numeric vertex id {clash[0]} collides with the textual id range")
    edges = EdgeArrays(
        np.array(src, dtype=np.uint64), np.array(dst, dtype=np.uint64),
        np.array(wts, dtype=np.int64), np.array(tss, dtype=np.int64),
    )
    return edges.sorted_by_time(), vocab


def parse_edge_list(source: str | os.PathLike | TextIO) -> tuple[EdgeArrays, VertexDictionary]:
    """Read an edge-list file into time-sorted arrays (stable for equal timestamps)."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            return parse_lines(fh)
    return parse_lines(source)


def parse_edge_text(text: str) -> tuple[EdgeArrays, VertexDictionary]:
    return parse_lines(io.StringIO(text))


def format_edges(edges: EdgeArrays, vocab: VertexDictionary | None = None) -> Iterator[str]:
    name = (lambda v: vocab.decode(v)) if vocab is not None and len(vocab) else str
    for s, d, w, t in edges.rows():
        yield f"{name(s)} {name(d)} {w} {t}\n"


def write_edge_list(path: str | os.PathLike | TextIO, edges: EdgeArrays,
                    vocab: VertexDictionary | None = None, header: str | None = None) -> None:
    def dump(fh: TextIO) -> None:
        if header:
            for line in header.splitlines():
                fh.write(f"% {line}\n")
        fh.writelines(format_edges(edges, vocab))

    if isinstance(path, (str, os.PathLike)):
        with open(path, "w", encoding="utf-8") as fh:
            dump(fh)
    else:
        dump(path)
