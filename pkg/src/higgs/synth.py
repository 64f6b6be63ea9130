"""Synthetic power-law graph streams.

Endpoints are drawn Chung-Lu style: vertex ``i`` (after a random relabel)
gets weight ``i ** (-1 / (exponent - 1))``, which yields a degree tail with
the requested exponent.  Per-slice arrival counts follow a gamma-mixed
multinomial, so the stream has exactly ``edge_count`` edges with the
requested variance around ``edge_count / time_span`` per slice.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from higgs.edgelist import EdgeArrays
from higgs.errors import ConfigError, UndefinedMetricError


@dataclass(frozen=True)
class SynthSpec:
    vertex_count: int = 100_000
    edge_count: int = 1_000_000
    exponent: float = 2.0
    arrival_variance: float | None = None
    time_span: int = 100_000
    seed: int = 0
    max_weight: int = 1

    def __post_init__(self) -> None:
        if self.vertex_count < 1 or self.edge_count < 1 or self.time_span < 1:
            raise ConfigError("vertex_count, edge_count and time_span must be >= 1")
        if self.exponent <= 1.0:
            raise ConfigError("power-law exponent must be > 1")
        if self.arrival_variance is not None and self.arrival_variance < 0:
            raise ConfigError("arrival variance must be >= 0")
        if self.max_weight < 1:
            raise ConfigError("max_weight must be >= 1")

    @property
    def mean_rate(self) -> float:
        return self.edge_count / self.time_span

    def to_dict(self) -> dict:
        return asdict(self)


def _slice_counts(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    mu = spec.mean_rate
    var = mu if spec.arrival_variance is None else spec.arrival_variance
    if var > mu:
        # multinomial over gamma-distributed slice rates: var ~ mu + mu^2 / shape
        shape = mu * mu / (var - mu)
        probs = rng.gamma(shape, 1.0, spec.time_span)
        total = probs.sum()
        probs = probs / total if total > 0 else np.full(spec.time_span, 1.0 / spec.time_span)
    else:
        probs = np.full(spec.time_span, 1.0 / spec.time_span)
    return rng.multinomial(spec.edge_count, probs)


def vertex_weights(vertex_count: int, exponent: float) -> np.ndarray:
    ranks = np.arange(1, vertex_count + 1, dtype=np.float64)
    w = ranks ** (-1.0 / (exponent - 1.0))
    return w / w.sum()


def synthesize_stream(spec: SynthSpec) -> EdgeArrays:
    """Deterministic (for a fixed seed) timestamp-ordered stream."""
    rng = np.random.default_rng(spec.seed)
    probs = vertex_weights(spec.vertex_count, spec.exponent)
    labels = rng.permutation(spec.vertex_count).astype(np.uint64)
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    n = spec.edge_count
    src = labels[np.searchsorted(cdf, rng.random(n), side="right")]
    dst = labels[np.searchsorted(cdf, rng.random(n), side="right")]
    counts = _slice_counts(spec, rng)
    t = np.repeat(np.arange(spec.time_span, dtype=np.int64), counts)
    if spec.max_weight > 1:
        w = rng.integers(1, spec.max_weight + 1, n, dtype=np.int64)
    else:
        w = np.ones(n, dtype=np.int64)
    return EdgeArrays(src, dst, w, t)


def degree_counts(edges: EdgeArrays) -> np.ndarray:
    """Total (in + out) appearance count of every vertex touched by the stream."""
    _, counts = np.unique(np.concatenate([edges.src, edges.dst]), return_counts=True)
    return counts


def fit_power_law(degrees: np.ndarray, k_min: int = 1) -> float:
    """Discrete maximum-likelihood exponent for the tail ``degree >= k_min``."""
    tail = np.asarray(degrees, dtype=np.float64)
    tail = tail[tail >= k_min]
    if tail.size == 0:
        raise UndefinedMetricError("no degrees at or above k_min")
    return 1.0 + tail.size / float(np.sum(np.log(tail / (k_min - 0.5))))


def expected_tail_start(spec: SynthSpec, factor: float = 3.0) -> int:
    """A ``k_min`` safely above the degree floor set by the least likely vertex."""
    probs = vertex_weights(spec.vertex_count, spec.exponent)
    floor = 2 * spec.edge_count * float(probs[-1])
    return max(1, int(math.ceil(factor * floor)))
