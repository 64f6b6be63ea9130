"""Self-describing binary snapshots of a finalized tree.

Layout (little-endian)::

    b"HIGG"  u16 version  u32 header_len  header (UTF-8 JSON: config, counters, vertex names)
    u16 level_count, then per level: u8 fp_bits u8 index_bits u8 offset_bits u8 weight_bits u32 side
    nodes in pre-order, each:
        u8 level  u8 flags  i64 start  i64 end  u16 key_count  i64 keys[]  u16 child_count
        if it has a matrix:
            bit-packed grid
            u32 overflow_count, then per block: i64 timestamp + bit-packed grid
            u32 spill_count, then bit-packed spill entries

Grids pack every slot as ``src_fp dst_fp i j [offset] weight`` at the
level's field widths, most significant bit first, padded to a byte per grid.
"""

from __future__ import annotations

import json
import os
import struct
from typing import BinaryIO

import numpy as np

from higgs.config import HiggsConfig
from higgs.edgelist import VertexDictionary
from higgs.errors import SnapshotFormatError
from higgs.matrix import CompressedMatrix, OverflowBlock
from higgs.tree import SummaryTree, TreeNode

MAGIC = b"HIGG"
VERSION = 1
_CHUNK = 1 << 16  # slots per packing chunk; a multiple of 8 keeps chunks byte-aligned

_F_SEALED = 1
_F_FILLER = 2
_F_MATRIX = 4
_F_SATURATED = 8


def _field_bits(values: np.ndarray, width: int) -> np.ndarray:
    """(n, width) uint8 bit matrix, most significant bit first."""
    if width == 0:
        return np.zeros((values.shape[0], 0), dtype=np.uint8)
    v = values.astype(np.uint64, copy=False)
    shifts = np.arange(width - 1, -1, -1, dtype=np.uint64)
    return ((v[:, None] >> shifts) & np.uint64(1)).astype(np.uint8)


def _bits_value(bits: np.ndarray) -> np.ndarray:
    out = np.zeros(bits.shape[0], dtype=np.uint64)
    for k in range(bits.shape[1]):
        out = (out << np.uint64(1)) | bits[:, k].astype(np.uint64)
    return out


def _pack(fields: list[tuple[np.ndarray, int]], n: int) -> bytes:
    width = sum(w for _, w in fields)
    parts = []
    for lo in range(0, n, _CHUNK):
        hi = min(n, lo + _CHUNK)
        cols = [_field_bits(arr[lo:hi], w) for arr, w in fields]
        parts.append(np.packbits(np.concatenate(cols, axis=1).ravel()).tobytes())
    out = b"".join(parts)
    expected = (n * width + 7) // 8
    return out[:expected]


def _unpack(buf: bytes, widths: list[int], n: int) -> list[np.ndarray]:
    width = sum(widths)
    if len(buf) != (n * width + 7) // 8:
        raise SnapshotFormatError("truncated matrix payload")
    bits = np.unpackbits(np.frombuffer(buf, dtype=np.uint8))[: n * width].reshape(n, width) if width else None
    out = []
    col = 0
    for w in widths:
        out.append(_bits_value(bits[:, col:col + w]) if w else np.zeros(n, dtype=np.uint64))
        col += w
    return out


def _grid_widths(m: CompressedMatrix) -> list[int]:
    cfg = m.cfg
    ib = cfg.hash.index_bits
    widths = [m.fingerprint_bits, m.fingerprint_bits, ib, ib]
    if m.is_leaf:
        widths.append(cfg.offset_bits)
    widths.append(cfg.weight_bits)
    return widths


def _grid_payload(m: CompressedMatrix) -> bytes:
    widths = _grid_widths(m)
    fields = [(m.sfp, widths[0]), (m.dfp, widths[1]), (m.idx >> 4, widths[2]), (m.idx & 15, widths[3])]
    if m.is_leaf:
        fields.append((m.toff, widths[4]))
    if m.cfg.weight_bits < 64 and int(m.w.max(initial=0)) >> m.cfg.weight_bits:
        raise SnapshotFormatError(f"a weight does not fit in {m.cfg.weight_bits} bits")
    fields.append((m.w, widths[-1]))
    return _pack(fields, m.slots)


def _load_grid(m: CompressedMatrix, buf: bytes) -> None:
    vals = _unpack(buf, _grid_widths(m), m.slots)
    m.sfp[:] = vals[0].astype(np.uint32)
    m.dfp[:] = vals[1].astype(np.uint32)
    m.idx[:] = ((vals[2] << np.uint64(4)) | vals[3]).astype(np.uint8)
    if m.is_leaf:
        m.toff[:] = vals[4].astype(np.uint32)
    m.w[:] = vals[-1]
    m.occupied = int(np.count_nonzero(m.w))


def _spill_widths(m: CompressedMatrix) -> list[int]:
    addr = m.d.bit_length() - 1
    fb = m.fingerprint_bits
    return [fb, addr, fb, addr, m.cfg.weight_bits]


def _level_table(cfg: HiggsConfig, levels: int) -> bytes:
    out = [struct.pack("<H", levels)]
    for lv in range(1, levels + 1):
        fb = max(cfg.fingerprint_bits(lv), 0)
        off = cfg.offset_bits if lv == 1 else 0
        out.append(struct.pack("<BBBBI", fb, cfg.hash.index_bits, off, cfg.weight_bits, cfg.side(lv)))
    return b"".join(out)


class _Writer:
    def __init__(self, fh: BinaryIO):
        self.fh = fh

    def put(self, fmt: str, *vals) -> None:
        self.fh.write(struct.pack("<" + fmt, *vals))

    def raw(self, data: bytes) -> None:
        self.fh.write(data)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def get(self, fmt: str):
        size = struct.calcsize("<" + fmt)
        if self.pos + size > len(self.data):
            raise SnapshotFormatError("truncated snapshot")
        vals = struct.unpack_from("<" + fmt, self.data, self.pos)
        self.pos += size
        return vals if len(vals) > 1 else vals[0]

    def raw(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise SnapshotFormatError("truncated snapshot")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out


def _header(tree: SummaryTree, vocab: VertexDictionary | None) -> dict:
    return {
        "config": tree.cfg.to_dict(),
        "edge_count": tree.edge_count,
        "leaf_count": tree.leaf_count,
        "inserted_weight": tree.inserted_weight,
        "deleted_weight": tree.deleted_weight,
        "first_time": tree.first_time,
        "last_time": tree.last_time,
        "vertex_names": list(vocab.names) if vocab is not None else [],
    }


def write_snapshot(tree: SummaryTree, target: str | os.PathLike | BinaryIO,
                   vocab: VertexDictionary | None = None) -> int:
    """Serialize a finalized tree; returns the number of bytes written."""
    if not tree.finalized:
        raise SnapshotFormatError("only finalized trees can be snapshotted")
    tree.wait_ready()
    if isinstance(target, (str, os.PathLike)):
        with open(target, "wb") as fh:
            return write_snapshot(tree, fh, vocab)
    start = target.tell() if target.seekable() else 0
    w = _Writer(target)
    head = json.dumps(_header(tree, vocab), separators=(",", ":")).encode()
    w.raw(MAGIC)
    w.put("HI", VERSION, len(head))
    w.raw(head)
    w.raw(_level_table(tree.cfg, tree.level_count))
    for node in tree.nodes():
        m = node.matrix
        flags = (_F_SEALED if node.sealed else 0) | (_F_FILLER if node.filler else 0)
        if m is not None:
            flags |= _F_MATRIX | (_F_SATURATED if m.saturated else 0)
        end = node.end_time if node.end_time is not None else tree.last_time
        w.put("BBqqH", node.level, flags, node.start_time, end, len(node.keys))
        if node.keys:
            w.raw(struct.pack(f"<{len(node.keys)}q", *node.keys))
        w.put("H", len(node.children))
        if m is None:
            continue
        w.raw(_grid_payload(m))
        w.put("I", len(m.overflow))
        for block in m.overflow:
            w.put("q", block.timestamp)
            w.raw(_grid_payload(block.matrix))
        w.put("I", len(m.spill))
        if m.spill:
            keys = np.array(list(m.spill.keys()), dtype=np.uint64).reshape(-1, 4)
            wts = np.array(list(m.spill.values()), dtype=np.uint64)
            widths = _spill_widths(m)
            cols = [keys[:, 0], keys[:, 1], keys[:, 2], keys[:, 3], wts]
            w.raw(_pack(list(zip(cols, widths)), len(m.spill)))
    return (target.tell() - start) if target.seekable() else -1


def header_size(tree: SummaryTree, vocab: VertexDictionary | None = None) -> int:
    """Bytes of the fixed preamble (magic, version, JSON header, level table)."""
    head = json.dumps(_header(tree, vocab), separators=(",", ":")).encode()
    return len(MAGIC) + 6 + len(head) + len(_level_table(tree.cfg, tree.level_count))


def read_snapshot(source: str | os.PathLike | BinaryIO | bytes) -> tuple[SummaryTree, VertexDictionary]:
    """Rebuild a query-equivalent (finalized) tree from a snapshot."""
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    elif isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            data = fh.read()
    else:
        data = source.read()
    if len(data) < len(MAGIC) + 6:
        raise SnapshotFormatError("file too short to be a snapshot")
    r = _Reader(data)
    if r.raw(4) != MAGIC:
        raise SnapshotFormatError("bad magic; not a snapshot")
    version, head_len = r.get("HI")
    if version != VERSION:
        raise SnapshotFormatError(f"unsupported snapshot version {version}")
    try:
        head = json.loads(r.raw(head_len).decode())
        cfg = HiggsConfig.from_dict(head["config"])
    except (ValueError, KeyError, TypeError) as exc:
        raise SnapshotFormatError(f"bad snapshot header: {exc}") from None
    levels = r.get("H")
    for lv in range(1, levels + 1):
        fb, ib, off, wb, side = r.get("BBBBI")
        want = (max(cfg.fingerprint_bits(lv), 0), cfg.hash.index_bits, cfg.offset_bits if lv == 1 else 0,
                cfg.weight_bits, cfg.side(lv))
        if (fb, ib, off, wb, side) != want:
            raise SnapshotFormatError(f"level {lv} field widths do not match the stored config")

    tree = SummaryTree(cfg)
    tree.edge_count = head["edge_count"]
    tree.leaf_count = head["leaf_count"]
    tree.inserted_weight = head["inserted_weight"]
    tree.deleted_weight = head["deleted_weight"]
    tree.first_time = head["first_time"]
    tree.last_time = head["last_time"]
    tree.finalized = True
    vocab = VertexDictionary(head.get("vertex_names", []))

    def read_node() -> TreeNode:
        level, flags, start, end, nkeys = r.get("BBqqH")
        node = TreeNode(level, start)
        node.end_time = end
        node.keys = list(struct.unpack(f"<{nkeys}q", r.raw(8 * nkeys))) if nkeys else []
        nchildren = r.get("H")
        node.sealed = bool(flags & _F_SEALED)
        node.filler = bool(flags & _F_FILLER)
        if flags & _F_MATRIX:
            m = CompressedMatrix(cfg, level, start_time=start)
            m.end_time = end
            m.saturated = bool(flags & _F_SATURATED)
            _load_grid(m, r.raw(m.grid_bytes()))
            for _ in range(r.get("I")):
                ts = r.get("q")
                block = OverflowBlock(cfg, ts, level, m.d)
                _load_grid(block.matrix, r.raw(block.matrix.grid_bytes()))
                m.overflow.append(block)
            if m.overflow:
                m.last_time = m.overflow[-1].timestamp
            n_spill = r.get("I")
            if n_spill:
                widths = _spill_widths(m)
                vals = _unpack(r.raw((n_spill * sum(widths) + 7) // 8), widths, n_spill)
                rows = zip(*(v.tolist() for v in vals))
                m.spill = {(a, b, c, d): w for a, b, c, d, w in rows}
            node.matrix = m
        for _ in range(nchildren):
            node.children.append(read_node())
        node.ready.set()
        return node

    if tree.leaf_count:
        tree.root = read_node()
        spine = []
        node = tree.root
        while True:
            spine.append(node)
            if not node.children:
                break
            node = node.children[-1]
        tree.spine = list(reversed(spine))
    if r.pos != len(data):
        raise SnapshotFormatError("trailing bytes after the last node")
    return tree, vocab
