"""Vertex hashing: fingerprint/address splitting, candidate rows and level lifting.

Every vertex id is run through a seeded 64-bit avalanche hash (splitmix64
finalizer applied twice).  The low ``f1`` bits become the fingerprint and the
next ``log2(d1)`` bits the base address of the leaf level.  Moving up one
level shifts ``r_bits`` fingerprint bits into the address, so a vertex's
(fingerprint, address) pair at any level is a bijective re-split of the same
``f1 + log2(d1)`` hash bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from higgs.errors import ConfigError, LevelCapError

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

# fingerprints live in uint32 slot arrays
MAX_FINGERPRINT_BITS = 32
# index pair is packed as (i << 4) | j into one byte
MAX_CANDIDATES = 16


def _is_pow2(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


@dataclass(frozen=True)
class HashConfig:
    seed: int = 0
    f1: int = 19
    d1: int = 16
    r_bits: int = 1
    candidates: int = 4
    max_levels: int | None = None

    def __post_init__(self) -> None:
        if not 0 <= self.seed <= MASK64:
            raise ConfigError(f"seed must be a 64-bit unsigned value, got {self.seed}")
        if not _is_pow2(self.d1) or self.d1 < 2:
            raise ConfigError(f"d1 must be a power of two >= 2, got {self.d1}")
        if not 1 <= self.f1 <= MAX_FINGERPRINT_BITS:
            raise ConfigError(f"f1 must be in [1, {MAX_FINGERPRINT_BITS}], got {self.f1}")
        if self.r_bits < 0:
            raise ConfigError(f"r_bits must be >= 0, got {self.r_bits}")
        if not 1 <= self.candidates <= MAX_CANDIDATES:
            raise ConfigError(f"candidates must be in [1, {MAX_CANDIDATES}], got {self.candidates}")
        if self.candidates > self.d1:
            raise ConfigError(f"candidates ({self.candidates}) cannot exceed d1 ({self.d1})")
        if self.f1 + self.d1.bit_length() - 1 > 64:
            raise ConfigError("f1 + log2(d1) must fit in a 64-bit hash")
        if self.max_levels is not None and self.r_bits and (self.max_levels - 1) * self.r_bits > self.f1:
            raise ConfigError(
                f"f1={self.f1} cannot feed {self.max_levels} levels at r_bits={self.r_bits}"
            )

    @property
    def level_cap(self) -> int:
        """Highest level that still gets an aggregated matrix."""
        if self.max_levels is not None:
            return self.max_levels
        if self.r_bits == 0:
            return 1 << 30
        return self.f1 // self.r_bits

    @property
    def z(self) -> int:
        """Size of the hashed identity space, d1 * 2**f1."""
        return self.d1 << self.f1

    @property
    def index_bits(self) -> int:
        """Bits needed for one half of the stored index pair."""
        return (self.candidates - 1).bit_length()

    def fingerprint_bits(self, level: int) -> int:
        return self.f1 - (level - 1) * self.r_bits

    def side(self, level: int) -> int:
        return self.d1 << ((level - 1) * self.r_bits)


@dataclass(frozen=True, slots=True)
class VertexDigest:
    full_hash: int
    fingerprint: int
    base_address: int


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def hash64(v: int, seed: int = 0) -> int:
    """Seeded avalanche hash of a 64-bit unsigned vertex id."""
    if not 0 <= v <= MASK64:
        raise ValueError(f"vertex id must be a 64-bit unsigned integer, got {v}")
    key = _mix((seed + _GOLDEN) & MASK64)
    return _mix(((v ^ key) + _GOLDEN) & MASK64)


def hash64_array(ids: np.ndarray, seed: int = 0) -> np.ndarray:
    """Vectorized :func:`hash64`; returns uint64."""
    z = np.asarray(ids).astype(np.uint64, copy=True)
    key = np.uint64(_mix((seed + _GOLDEN) & MASK64))
    with np.errstate(over="ignore"):
        z ^= key
        z += np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
        z ^= z >> np.uint64(31)
    return z


def split_hash(full_hash: int, cfg: HashConfig) -> VertexDigest:
    fp = full_hash & ((1 << cfg.f1) - 1)
    base = (full_hash >> cfg.f1) % cfg.d1
    return VertexDigest(full_hash, fp, base)


def digest(v: int, cfg: HashConfig) -> VertexDigest:
    """Hash ``v`` and split it into leaf-level fingerprint and base address."""
    return split_hash(hash64(v, cfg.seed), cfg)


def digest_arrays(ids: np.ndarray, cfg: HashConfig) -> tuple[np.ndarray, np.ndarray]:
    """Leaf-level (fingerprint, base address) for many vertex ids, as int64 arrays."""
    h = hash64_array(ids, cfg.seed)
    fp = (h & np.uint64((1 << cfg.f1) - 1)).astype(np.int64)
    base = ((h >> np.uint64(cfg.f1)) & np.uint64(cfg.d1 - 1)).astype(np.int64)
    return fp, base


def probe_step(fingerprint: int, d: int) -> int:
    """Odd stride of the candidate walk, derived from the fingerprint.

    The stride has to be recomputable from a stored entry (which keeps only
    its fingerprint, index pair and bucket position), so it cannot use hash
    bits beyond the fingerprint.  Must match ``_kernels.probe_step``.
    """
    x = (fingerprint * 0x5BD1E995 + 0x2545F491) & 0xFFFFFFFF
    x ^= x >> 13
    x = (x * 0x5BD1E995) & 0xFFFFFFFF
    x ^= x >> 15
    return ((x << 1) | 1) & (d - 1)


def candidate_addresses(dg: VertexDigest, d: int, r: int) -> list[int]:
    """The ``r`` distinct rows (or columns) a vertex may occupy in a side-``d`` matrix."""
    if r > d:
        raise ConfigError(f"cannot draw {r} distinct candidates from {d} rows")
    if r < 1:
        raise ConfigError("need at least one candidate")
    step = probe_step(dg.fingerprint, d)
    base = dg.base_address % d
    return [(base + i * step) & (d - 1) for i in range(r)]


def lift_digest(fingerprint: int, base_address: int, from_level: int, cfg: HashConfig) -> tuple[int, int]:
    """Move the top ``r_bits`` fingerprint bits into the low address bits."""
    width = cfg.fingerprint_bits(from_level)
    if width < cfg.r_bits:
        raise LevelCapError(
            f"level {from_level} has {width} fingerprint bits, cannot shift {cfg.r_bits}"
        )
    rest = width - cfg.r_bits
    top = fingerprint >> rest
    return fingerprint & ((1 << rest) - 1), (base_address << cfg.r_bits) | top


def unlift_digest(fingerprint: int, base_address: int, to_level: int, cfg: HashConfig) -> tuple[int, int]:
    """Inverse of :func:`lift_digest`: level ``to_level + 1`` back to ``to_level``."""
    rest = cfg.fingerprint_bits(to_level) - cfg.r_bits
    low = base_address & ((1 << cfg.r_bits) - 1)
    return (low << rest) | fingerprint, base_address >> cfg.r_bits


def at_level(dg: VertexDigest, level: int, cfg: HashConfig) -> VertexDigest:
    """Closed form of ``level - 1`` successive lifts of a leaf-level digest."""
    if level == 1:
        return dg
    k = (level - 1) * cfg.r_bits
    if k > cfg.f1:
        raise LevelCapError(f"level {level} exceeds the fingerprint budget of f1={cfg.f1}")
    rest = cfg.f1 - k
    fp1, base1 = dg.fingerprint, dg.base_address
    return VertexDigest(dg.full_hash, fp1 & ((1 << rest) - 1), (base1 << k) | (fp1 >> rest))
