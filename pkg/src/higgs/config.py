from __future__ import annotations

from dataclasses import asdict, dataclass, field

from higgs.errors import ConfigError
from higgs.hashing import HashConfig

# on-disk/in-memory widths of the non-fingerprint entry fields
OFFSET_BITS = 32
WEIGHT_BITS = 64


@dataclass(frozen=True)
class HiggsConfig:
    """All structural parameters of a summary tree.

    ``theta`` defaults to ``4 ** r_bits``; smaller fan-outs are accepted
    (a parent matrix is sized for ``4 ** r_bits`` children either way).
    """

    d1: int = 16
    f1: int = 19
    r_bits: int = 1
    candidates: int = 4
    bucket_entries: int = 3
    seed: int = 0
    theta: int | None = None
    max_levels: int | None = None
    offset_bits: int = OFFSET_BITS
    weight_bits: int = WEIGHT_BITS
    hash: HashConfig = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.r_bits < 1:
            raise ConfigError("r_bits must be >= 1 for a tree (theta = 4**r_bits)")
        hc = HashConfig(
            seed=self.seed,
            f1=self.f1,
            d1=self.d1,
            r_bits=self.r_bits,
            candidates=self.candidates,
            max_levels=self.max_levels,
        )
        object.__setattr__(self, "hash", hc)
        if self.theta is None:
            object.__setattr__(self, "theta", 4**self.r_bits)
        if not 2 <= self.theta <= 4**self.r_bits:
            raise ConfigError(f"theta must be in [2, {4 ** self.r_bits}], got {self.theta}")
        if self.bucket_entries < 1:
            raise ConfigError("bucket_entries must be >= 1")
        if not 1 <= self.offset_bits <= OFFSET_BITS:
            raise ConfigError(f"offset_bits must be in [1, {OFFSET_BITS}]")
        if not 1 <= self.weight_bits <= WEIGHT_BITS:
            raise ConfigError(f"weight_bits must be in [1, {WEIGHT_BITS}]")

    @property
    def max_offset(self) -> int:
        return (1 << self.offset_bits) - 1

    @property
    def level_cap(self) -> int:
        return self.hash.level_cap

    def side(self, level: int) -> int:
        return self.hash.side(level)

    def fingerprint_bits(self, level: int) -> int:
        return self.hash.fingerprint_bits(level)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("hash", None)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "HiggsConfig":
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data and k != "hash"}
        return cls(**known)
