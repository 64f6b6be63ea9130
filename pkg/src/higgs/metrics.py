"""Accuracy, space and timing measurements plus the analytical models they are checked against."""

from __future__ import annotations

import math
import statistics
import time
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from higgs.config import HiggsConfig
from higgs.errors import UndefinedMetricError
from higgs.hashing import HashConfig, digest_arrays

INV_E = math.exp(-1.0)


@dataclass(frozen=True)
class AccuracyReport:
    aae: float
    are: float
    max_error: int
    one_sided_violations: int
    query_count: int
    zero_truth_count: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BoundReport:
    empirical_rate: float
    theoretical_bound: float
    satisfied: bool
    samples: int
    slack: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def compute_accuracy(truths: Sequence[int], estimates: Sequence[int]) -> AccuracyReport:
    """AAE and ARE over paired answers; ARE skips zero truths and counts them."""
    if len(truths) != len(estimates):
        raise ValueError("truths and estimates differ in length")
    if len(truths) == 0:
        raise UndefinedMetricError("accuracy over zero queries is undefined")
    f = np.asarray(truths, dtype=np.float64)
    g = np.asarray(estimates, dtype=np.float64)
    err = np.abs(f - g)
    nz = f != 0
    are = float(np.mean(err[nz] / f[nz])) if nz.any() else 0.0
    return AccuracyReport(
        aae=float(err.mean()),
        are=are,
        max_error=int(err.max()),
        one_sided_violations=int(np.count_nonzero(g < f)),
        query_count=len(truths),
        zero_truth_count=int(np.count_nonzero(~nz)),
    )


def binomial_slack(p: float, n: float, sigmas: float = 3.0) -> float:
    if n <= 0:
        raise UndefinedMetricError("need at least one sample")
    return sigmas * math.sqrt(max(p * (1 - p), 0.0) / n)


# -- collision models ----------------------------------------------------


def _z(cfg: HashConfig | HiggsConfig) -> int:
    return cfg.z if isinstance(cfg, HashConfig) else cfg.hash.z


def node_collision_bound(cfg: HashConfig | HiggsConfig, k: int) -> float:
    """Chance a vertex shares its hashed identity with one of ``k`` others."""
    if k < 0:
        raise ValueError("k must be >= 0")
    return -math.expm1(-k / _z(cfg))


def edge_collision_bound(cfg: HashConfig | HiggsConfig, phi_out: int, phi_in: int, distinct_edges: int) -> float:
    """Chance an edge shares its hashed identity with another distinct edge."""
    if min(phi_out, phi_in, distinct_edges) < 0:
        raise ValueError("degrees and edge count must be >= 0")
    z = _z(cfg)
    return -math.expm1(-((z - 1) * max(phi_out, phi_in) + distinct_edges) / (z * z))


def _identities(ids: np.ndarray, cfg: HashConfig) -> np.ndarray:
    fp, base = digest_arrays(ids, cfg)
    return (base << cfg.f1) | fp


@dataclass(frozen=True)
class StreamShape:
    """Counts the collision models are parameterised by."""

    distinct_sources: int
    distinct_destinations: int
    distinct_edges: int
    max_out_degree: int
    max_in_degree: int


def stream_shape(src: np.ndarray, dst: np.ndarray) -> StreamShape:
    pairs = np.unique(np.stack([np.asarray(src, np.uint64), np.asarray(dst, np.uint64)], axis=1), axis=0)
    _, out_deg = np.unique(pairs[:, 0], return_counts=True)
    _, in_deg = np.unique(pairs[:, 1], return_counts=True)
    return StreamShape(
        distinct_sources=int(out_deg.size),
        distinct_destinations=int(in_deg.size),
        distinct_edges=int(pairs.shape[0]),
        max_out_degree=int(out_deg.max(initial=0)),
        max_in_degree=int(in_deg.max(initial=0)),
    )


def empirical_node_collision_rate(src: np.ndarray, cfg: HashConfig, sample: np.ndarray | None = None) -> float:
    """Fraction of (sampled) stream items whose source shares a hashed identity with another source."""
    src = np.asarray(src, dtype=np.uint64)
    verts = np.unique(src)
    ident = _identities(verts, cfg)
    _, inv, counts = np.unique(ident, return_inverse=True, return_counts=True)
    shared = counts[inv] > 1
    picks = src if sample is None else src[sample]
    pos = np.searchsorted(verts, picks)
    if picks.size == 0:
        raise UndefinedMetricError("empty sample")
    return float(np.mean(shared[pos]))


def empirical_edge_collision_rate(src: np.ndarray, dst: np.ndarray, cfg: HashConfig,
                                  sample: np.ndarray | None = None) -> float:
    """Fraction of (sampled) stream items whose edge shares a hashed identity with another distinct edge."""
    items = np.stack([np.asarray(src, np.uint64), np.asarray(dst, np.uint64)], axis=1)
    pairs, row_of_item = np.unique(items, axis=0, return_inverse=True)
    ident = np.stack([_identities(pairs[:, 0], cfg), _identities(pairs[:, 1], cfg)], axis=1)
    _, inv, counts = np.unique(ident, axis=0, return_inverse=True, return_counts=True)
    shared = counts[inv.ravel()] > 1
    rows = row_of_item.ravel()
    if sample is not None:
        rows = rows[sample]
    if rows.size == 0:
        raise UndefinedMetricError("empty sample")
    return float(np.mean(shared[rows]))


def effective_sample_size(counts: np.ndarray) -> float:
    """Kish effective sample size of a rate averaged over items grouped by ``counts``.

    Items of one group share a collision outcome, so a stream dominated by a
    few heavy vertices carries far fewer independent samples than items.
    """
    c = np.asarray(counts, dtype=np.float64)
    total = c.sum()
    if total <= 0:
        raise UndefinedMetricError("no items to weigh")
    return float(total * total / np.sum(c * c))


def collision_report(rate: float, bound: float, samples: float, sigmas: float = 3.0) -> BoundReport:
    slack = binomial_slack(bound, samples, sigmas)
    return BoundReport(rate, bound, rate <= bound + slack, int(samples), slack)


def markov_bound_check(query_errors: Sequence[float], epsilon: float, w_norms: Sequence[float] | float,
                       kind: str, sigmas: float = 3.0) -> BoundReport:
    """Share of queries whose overestimate exceeds the error-bound threshold, against ``1/e``.

    The threshold is ``epsilon * |w|'`` for vertex queries and
    ``epsilon**2 * |w|' / e`` for edge queries, with ``|w|'`` the total
    stream weight inside each query's range.
    """
    if kind not in ("vertex", "edge"):
        raise ValueError("kind must be 'vertex' or 'edge'")
    errs = np.asarray(query_errors, dtype=np.float64)
    if errs.size == 0:
        raise UndefinedMetricError("no query errors given")
    norms = np.broadcast_to(np.asarray(w_norms, dtype=np.float64), errs.shape)
    thr = epsilon * norms if kind == "vertex" else epsilon**2 * norms / math.e
    rate = float(np.mean(errs > thr))
    slack = binomial_slack(INV_E, errs.size, sigmas)
    return BoundReport(rate, INV_E, rate <= INV_E + slack, int(errs.size), slack)


def epsilon_for(cfg: HashConfig | HiggsConfig) -> float:
    """The error parameter a fingerprint width targets: Z = e / epsilon."""
    return math.e / _z(cfg)


# -- utilization -----------------------------------------------------------


def expected_utilization(d: int, b: int, p: int) -> float:
    """Expected fill fraction of a d x d, b-entry matrix when the first insert fails.

    Item ``k`` finds its ``p`` candidate buckets full with probability
    ``((k-1)/N)**(b*p)`` for ``N = b*d*d`` slots; the first failure at ``k``
    means ``k - 1`` entries were stored.  Evaluated in log space.
    """
    if min(d, b, p) < 1:
        raise ValueError("d, b and p must be >= 1")
    n = b * d * d
    expo = b * p
    k = np.arange(1, n + 2, dtype=np.float64)
    fill = (k - 1) / n
    with np.errstate(divide="ignore"):
        log_fail = expo * np.log(fill)
        log_ok = np.log1p(-np.exp(log_fail))
    # Pr(X = k) = prod_{i<k} ok_i * fail_k
    log_prefix = np.concatenate(([0.0], np.cumsum(log_ok[:-1])))
    pr = np.exp(log_prefix + log_fail)
    return float(np.sum((k - 1) * pr) / n)


def simulate_utilization(d: int, b: int, r: int, trials: int, seed: int = 0, f1: int = 32) -> float:
    """Mean fill fraction of real leaf matrices filled with random edges until the first Full."""
    from higgs import _kernels as K

    if trials < 1:
        raise UndefinedMetricError("need at least one trial")
    rng = np.random.default_rng(seed)
    n = b * d * d
    fills = []
    batch = 4 * n
    for _ in range(trials):
        sfp_a = np.zeros(n, np.uint32)
        dfp_a = np.zeros(n, np.uint32)
        idx_a = np.zeros(n, np.uint8)
        toff_a = np.zeros(n, np.uint32)
        w_a = np.zeros(n, np.uint64)
        stored = 0
        while True:
            s_fp = rng.integers(0, 1 << f1, batch, dtype=np.int64)
            d_fp = rng.integers(0, 1 << f1, batch, dtype=np.int64)
            s_b = rng.integers(0, d, batch, dtype=np.int64)
            d_b = rng.integers(0, d, batch, dtype=np.int64)
            ts = np.zeros(batch, np.int64)
            ws = np.ones(batch, np.int64)
            _, stop, placed, _ = K.insert_run(sfp_a, dfp_a, idx_a, toff_a, w_a, d, b, r,
                                              s_fp, s_b, d_fp, d_b, ts, ws, 0, 1, 0, batch)
            stored += placed
            if stop == K.STOP_FULL:
                break
        fills.append(stored / n)
    return float(np.mean(fills))


# -- space ----------------------------------------------------------------


def space_savings_ratio(layers: int, r_bits: int, entry_bits: float) -> float:
    """Fraction of flat-width storage saved by shortening fingerprints per level."""
    if entry_bits <= 0:
        raise ValueError("entry size must be positive")
    return (layers - 1) * r_bits / entry_bits


@dataclass(frozen=True)
class SpaceAccounting:
    fingerprint_bits: list[int]
    slots_per_level: list[int]
    flat_entry_bits: int
    flat_bits: int
    packed_bits: int
    measured_savings: float
    model_savings: float


def space_accounting(tree) -> SpaceAccounting:
    """Compare packed grid sizes against storing every level at leaf-level fingerprint width.

    Timestamp offsets exist only at the leaves and are left out of both sides.
    """
    cfg = tree.cfg
    levels = [lv for lv in tree.levels() if any(n.matrix is not None for n in lv)]
    flat_entry = 2 * cfg.f1 + 2 * cfg.hash.index_bits + cfg.weight_bits
    widths, slots = [], []
    flat = packed = 0
    for i, nodes in enumerate(levels, start=1):
        n = sum(node.matrix.slots for node in nodes if node.matrix is not None)
        fb = cfg.fingerprint_bits(i)
        widths.append(fb)
        slots.append(n)
        flat += n * flat_entry
        packed += n * (2 * fb + 2 * cfg.hash.index_bits + cfg.weight_bits)
    return SpaceAccounting(
        fingerprint_bits=widths,
        slots_per_level=slots,
        flat_entry_bits=flat_entry,
        flat_bits=flat,
        packed_bits=packed,
        measured_savings=(flat - packed) / flat if flat else 0.0,
        model_savings=space_savings_ratio(len(levels), cfg.r_bits, flat_entry),
    )


# -- timing -----------------------------------------------------------------


@dataclass(frozen=True)
class ThroughputReport:
    ops: int
    mean_ops_per_sec: float
    stdev_ops_per_sec: float
    runs: list[float]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LatencyReport:
    count: int
    mean_us: float
    p50_us: float
    p99_us: float

    def to_dict(self) -> dict:
        return asdict(self)


def measure_throughput(run: Callable[[], object], ops: int, repeats: int = 3,
                       setup: Callable[[], object] | None = None) -> ThroughputReport:
    """Time ``run`` (after a fresh ``setup`` each repetition) and report ops per second."""
    if ops <= 0:
        raise UndefinedMetricError("throughput over zero operations is undefined")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    rates = []
    for _ in range(repeats):
        if setup is not None:
            setup()
        t0 = time.perf_counter()
        run()
        dt = time.perf_counter() - t0
        rates.append(ops / dt if dt > 0 else float("inf"))
    spread = statistics.stdev(rates) if len(rates) > 1 else 0.0
    return ThroughputReport(ops, statistics.fmean(rates), spread, rates)


def measure_latency(calls: Sequence[Callable[[], object]]) -> LatencyReport:
    """Per-call wall time of each callable, in microseconds."""
    if len(calls) == 0:
        raise UndefinedMetricError("latency over zero calls is undefined")
    samples = np.empty(len(calls))
    for i, call in enumerate(calls):
        t0 = time.perf_counter()
        call()
        samples[i] = (time.perf_counter() - t0) * 1e6
    return LatencyReport(len(calls), float(samples.mean()), float(np.percentile(samples, 50)),
                         float(np.percentile(samples, 99)))


__all__ = [
    "AccuracyReport", "BoundReport", "LatencyReport", "SpaceAccounting", "StreamShape", "ThroughputReport",
    "binomial_slack", "collision_report", "compute_accuracy", "edge_collision_bound", "effective_sample_size",
    "empirical_edge_collision_rate", "empirical_node_collision_rate", "epsilon_for",
    "expected_utilization", "markov_bound_check", "measure_latency", "measure_throughput",
    "node_collision_bound", "simulate_utilization", "space_accounting", "space_savings_ratio",
    "stream_shape",
]
