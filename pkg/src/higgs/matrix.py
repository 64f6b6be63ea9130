"""Compressed matrices: d x d buckets of b fingerprinted entries.

Leaf matrices keep a per-entry time offset from ``start_time``; non-leaf
matrices aggregate their children and keep no time.  A leaf can grow a chain
of :class:`OverflowBlock` for same-timestamp bursts.  A non-leaf matrix whose
candidate buckets are exhausted during aggregation keeps the extra entries
in an exact ``spill`` table keyed by the full (fingerprint, address) identity
at that level.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from higgs import _kernels as K
from higgs.config import HiggsConfig
from higgs.errors import NotFoundError, OverflowChainError, UnderflowError
from higgs.hashing import VertexDigest, lift_digest

_DUMMY_OFFSETS = np.zeros(1, dtype=np.uint32)
_NO_FILTER = (0, (1 << 63) - 1)


class Outcome(enum.Enum):
    MERGED = K.MERGED
    PLACED = K.PLACED
    FULL = K.FULL


@dataclass(frozen=True)
class InsertOutcome:
    kind: Outcome
    slot: int = -1
    index_pair: tuple[int, int] | None = None


@dataclass(frozen=True)
class TemporalRange:
    """Closed interval ``[ts, te]`` of time slices."""

    ts: int
    te: int

    def __post_init__(self) -> None:
        if self.ts > self.te:
            raise ValueError(f"empty temporal range [{self.ts}, {self.te}]")

    @property
    def length(self) -> int:
        return self.te - self.ts

    def contains(self, t: int) -> bool:
        return self.ts <= t <= self.te


SpillKey = tuple[int, int, int, int]


class CompressedMatrix:
    __slots__ = (
        "cfg", "level", "d", "b", "r", "is_leaf", "start_time", "end_time",
        "sfp", "dfp", "idx", "toff", "w", "occupied", "overflow", "spill",
        "saturated", "last_time",
    )

    def __init__(self, cfg: HiggsConfig, level: int = 1, start_time: int | None = None,
                 d: int | None = None, timed: bool | None = None):
        self.cfg = cfg
        self.level = level
        self.d = cfg.side(level) if d is None else d
        self.b = cfg.bucket_entries
        self.r = cfg.candidates
        self.is_leaf = (level == 1) if timed is None else timed
        self.start_time = start_time
        self.end_time: int | None = None
        n = self.d * self.d * self.b
        self.sfp = np.zeros(n, dtype=np.uint32)
        self.dfp = np.zeros(n, dtype=np.uint32)
        self.idx = np.zeros(n, dtype=np.uint8)
        self.toff = np.zeros(n, dtype=np.uint32) if self.is_leaf else _DUMMY_OFFSETS
        self.w = np.zeros(n, dtype=np.uint64)
        self.occupied = 0
        self.overflow: list[OverflowBlock] = []
        self.spill: dict[SpillKey, int] = {}
        self.saturated = False
        self.last_time: int | None = None

    def __repr__(self) -> str:
        return (f"CompressedMatrix(level={self.level}, d={self.d}, b={self.b}, "
                f"occupied={self.occupied}/{self.slots}, overflow={len(self.overflow)})")

    @property
    def slots(self) -> int:
        return self.w.shape[0]

    @property
    def fingerprint_bits(self) -> int:
        return self.cfg.fingerprint_bits(self.level)

    def _arrays(self):
        return self.sfp, self.dfp, self.idx, self.toff, self.w

    def _offset_window(self, rng: TemporalRange | None) -> tuple[int, int] | None:
        """Offsets admitted by ``rng``; ``None`` when nothing can match."""
        if rng is None or not self.is_leaf:
            return _NO_FILTER
        start = self.start_time or 0
        lo = max(rng.ts - start, 0)
        hi = rng.te - start
        if hi < 0:
            return None
        return lo, min(hi, _NO_FILTER[1])

    # -- writes ---------------------------------------------------------

    def insert(self, src: VertexDigest, dst: VertexDigest, t_offset: int | None, w: int) -> InsertOutcome:
        """Merge or place one edge whose digests are already at this level."""
        if self.is_leaf and t_offset is None:
            raise ValueError("leaf insert needs a time offset")
        if w < 1:
            raise ValueError("weight must be >= 1")
        off = t_offset if self.is_leaf else 0
        status, slot, sat = K.place(*self._arrays(), self.d, self.b, self.is_leaf, self.r,
                                    src.fingerprint, src.base_address % self.d,
                                    dst.fingerprint, dst.base_address % self.d, off, w)
        if sat:
            self.saturated = True
        kind = Outcome(status)
        if kind is Outcome.FULL:
            return InsertOutcome(kind)
        if kind is Outcome.PLACED:
            self.occupied += 1
        code = int(self.idx[slot])
        return InsertOutcome(kind, int(slot), (code >> 4, code & 15))

    def overflow_insert(self, src: VertexDigest, dst: VertexDigest, t: int, w: int) -> InsertOutcome:
        """Put a same-timestamp edge that missed the main grid into the overflow chain."""
        if not self.is_leaf:
            raise ValueError("overflow blocks hang off leaf matrices only")
        if self.last_time is not None and t != self.last_time:
            raise OverflowChainError(
                f"overflow at t={t} but the leaf's newest edge is at t={self.last_time}"
            )
        if self.overflow and t < self.overflow[-1].timestamp:
            raise OverflowChainError(f"t={t} precedes the overflow chain head")
        if self.overflow and self.overflow[-1].timestamp == t:
            out = self.overflow[-1].matrix.insert(src, dst, None, w)
            if out.kind is not Outcome.FULL:
                self.saturated |= self.overflow[-1].matrix.saturated
                return out
        block = OverflowBlock(self.cfg, t, self.level, self.d)
        self.overflow.append(block)
        out = block.matrix.insert(src, dst, None, w)
        self.last_time = t
        return out

    def spill_add(self, key: SpillKey, w: int) -> None:
        cap = (1 << 64) - 1
        new = self.spill.get(key, 0) + w
        if new > cap:
            new = cap
            self.saturated = True
        self.spill[key] = new

    def aggregate_child(self, child: CompressedMatrix) -> int:
        """Fold a sealed child one level below into this matrix; returns entries migrated."""
        if child.level + 1 != self.level:
            raise ValueError(f"cannot aggregate level {child.level} into level {self.level}")
        migrated = self._absorb_grid(child)
        for block in child.overflow:
            migrated += self._absorb_grid(block.matrix)
        for (sfp, sbase, dfp, dbase), w in child.spill.items():
            nsfp, nsbase = lift_digest(sfp, sbase, child.level, self.cfg.hash)
            ndfp, ndbase = lift_digest(dfp, dbase, child.level, self.cfg.hash)
            out = self.insert(VertexDigest(0, nsfp, nsbase), VertexDigest(0, ndfp, ndbase), None, w)
            if out.kind is Outcome.FULL:
                self.spill_add((nsfp, nsbase, ndfp, ndbase), w)
            migrated += 1
        return migrated

    def _absorb_grid(self, child: CompressedMatrix) -> int:
        n = int(np.count_nonzero(child.w))
        if n == 0:
            return 0
        sp_sfp = np.empty(n, dtype=np.int64)
        sp_sbase = np.empty(n, dtype=np.int64)
        sp_dfp = np.empty(n, dtype=np.int64)
        sp_dbase = np.empty(n, dtype=np.int64)
        sp_w = np.empty(n, dtype=np.uint64)
        migrated, spilled, sat = K.aggregate(
            *self._arrays(), self.d,
            child.sfp, child.dfp, child.idx, child.w, child.d, self.b, self.r,
            child.fingerprint_bits, self.cfg.r_bits,
            sp_sfp, sp_sbase, sp_dfp, sp_dbase, sp_w,
        )
        self.saturated |= bool(sat)
        for k in range(spilled):
            self.spill_add((int(sp_sfp[k]), int(sp_sbase[k]), int(sp_dfp[k]), int(sp_dbase[k])), int(sp_w[k]))
        self.occupied = int(np.count_nonzero(self.w))
        return int(migrated)

    def subtract(self, src: VertexDigest, dst: VertexDigest, t: int | None, w: int, *, dry_run: bool = False) -> None:
        """Remove ``w`` from the entry holding this hashed edge (at time ``t`` for leaves)."""
        loc = self._locate(src, dst, t)
        if loc is None:
            raise NotFoundError(f"no entry for this edge in level-{self.level} matrix")
        grid, slot, key = loc
        cur = self.spill[key] if grid is None else int(grid.w[slot])
        if cur < w:
            raise UnderflowError(f"stored weight {cur} < deleted weight {w}")
        if dry_run:
            return
        if grid is None:
            if cur == w:
                del self.spill[key]
            else:
                self.spill[key] = cur - w
            return
        grid.w[slot] = np.uint64(cur - w)
        if cur == w:
            grid.sfp[slot] = 0
            grid.dfp[slot] = 0
            grid.idx[slot] = 0
            if grid.is_leaf:
                grid.toff[slot] = 0
            grid.occupied -= 1

    def _locate(self, src: VertexDigest, dst: VertexDigest, t: int | None):
        sb, db = src.base_address % self.d, dst.base_address % self.d
        if self.is_leaf:
            if t is None:
                raise ValueError("leaf lookups need a timestamp")
            off = t - (self.start_time or 0)
            if 0 <= off <= self.cfg.max_offset:
                slot = K.find_slot(*self._arrays(), self.d, self.b, True, self.r,
                                   src.fingerprint, sb, dst.fingerprint, db, off)
                if slot >= 0:
                    return self, int(slot), None
            for block in self.overflow:
                if block.timestamp == t:
                    m = block.matrix
                    slot = K.find_slot(*m._arrays(), m.d, m.b, False, m.r,
                                       src.fingerprint, sb, dst.fingerprint, db, 0)
                    if slot >= 0:
                        return m, int(slot), None
            return None
        slot = K.find_slot(*self._arrays(), self.d, self.b, False, self.r,
                           src.fingerprint, sb, dst.fingerprint, db, 0)
        if slot >= 0:
            return self, int(slot), None
        key = (src.fingerprint, src.base_address, dst.fingerprint, dst.base_address)
        if key in self.spill:
            return None, -1, key
        return None

    # -- reads ----------------------------------------------------------

    def edge_weight(self, src: VertexDigest, dst: VertexDigest, rng: TemporalRange | None = None) -> int:
        out = np.zeros(1, dtype=np.uint64)
        self.edge_weights(
            np.array([src.fingerprint], dtype=np.int64), np.array([src.base_address % self.d], dtype=np.int64),
            np.array([dst.fingerprint], dtype=np.int64), np.array([dst.base_address % self.d], dtype=np.int64),
            rng, out,
        )
        return int(out[0])

    def edge_weights(self, s_fp, s_base, d_fp, d_base, rng: TemporalRange | None, out: np.ndarray) -> None:
        """Accumulate matching weights for many digest pairs into ``out`` (uint64)."""
        window = self._offset_window(rng)
        if window is not None:
            K.edge_lookup(*self._arrays(), self.d, self.b, self.is_leaf, self.r,
                          s_fp, s_base, d_fp, d_base, window[0], window[1], out)
        for block in self.overflow:
            if rng is None or rng.contains(block.timestamp):
                m = block.matrix
                K.edge_lookup(*m._arrays(), m.d, m.b, False, m.r,
                              s_fp, s_base, d_fp, d_base, 0, 0, out)
        if self.spill:
            for q in range(len(out)):
                key = (int(s_fp[q]), int(s_base[q]), int(d_fp[q]), int(d_base[q]))
                w = self.spill.get(key)
                if w:
                    out[q] += np.uint64(w)

    def vertex_weight(self, v: VertexDigest, outgoing: bool = True, rng: TemporalRange | None = None) -> int:
        base = v.base_address % self.d
        total = 0
        window = self._offset_window(rng)
        if window is not None:
            total += int(K.vertex_scan(*self._arrays(), self.d, self.b, self.is_leaf, self.r,
                                       v.fingerprint, base, window[0], window[1], outgoing))
        for block in self.overflow:
            if rng is None or rng.contains(block.timestamp):
                m = block.matrix
                total += int(K.vertex_scan(*m._arrays(), m.d, m.b, False, m.r,
                                           v.fingerprint, base, 0, 0, outgoing))
        if self.spill:
            for (sfp, sbase, dfp, dbase), w in self.spill.items():
                if outgoing and sfp == v.fingerprint and sbase == v.base_address:
                    total += w
                elif not outgoing and dfp == v.fingerprint and dbase == v.base_address:
                    total += w
        return total

    def total_weight(self) -> int:
        total = int(self.w.sum(dtype=np.uint64))
        total += sum(int(b.matrix.w.sum(dtype=np.uint64)) for b in self.overflow)
        return total + sum(self.spill.values())

    def entry_count(self) -> int:
        return self.occupied + sum(b.matrix.occupied for b in self.overflow) + len(self.spill)

    # -- accounting -----------------------------------------------------

    def entry_bits(self) -> int:
        """Packed width of one grid entry at this level."""
        bits = 2 * self.fingerprint_bits + 2 * self.cfg.hash.index_bits + self.cfg.weight_bits
        if self.is_leaf:
            bits += self.cfg.offset_bits
        return bits

    def spill_entry_bits(self) -> int:
        addr = self.d.bit_length() - 1
        return 2 * (self.fingerprint_bits + addr) + self.cfg.weight_bits

    def grid_bytes(self) -> int:
        return math.ceil(self.slots * self.entry_bits() / 8)

    def space_bytes(self) -> int:
        """Packed size of grid, overflow chain and spill table."""
        total = self.grid_bytes()
        for block in self.overflow:
            total += block.space_bytes()
        if self.spill:
            total += math.ceil(len(self.spill) * self.spill_entry_bits() / 8)
        return total


class OverflowBlock:
    """A small non-timed matrix whose entries all share one timestamp."""

    __slots__ = ("timestamp", "matrix")

    TIMESTAMP_BITS = 64

    def __init__(self, cfg: HiggsConfig, timestamp: int, level: int = 1, d: int | None = None):
        self.timestamp = timestamp
        self.matrix = CompressedMatrix(cfg, level, start_time=timestamp, d=d, timed=False)

    def space_bytes(self) -> int:
        return self.matrix.grid_bytes() + self.TIMESTAMP_BITS // 8
