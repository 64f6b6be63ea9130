import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from higgs.config import HiggsConfig
from higgs.errors import UndefinedMetricError
from higgs.hashing import HashConfig
from higgs.matrix import TemporalRange
from higgs.metrics import (
    collision_report,
    compute_accuracy,
    edge_collision_bound,
    effective_sample_size,
    empirical_edge_collision_rate,
    empirical_node_collision_rate,
    epsilon_for,
    expected_utilization,
    markov_bound_check,
    measure_latency,
    measure_throughput,
    node_collision_bound,
    simulate_utilization,
    space_accounting,
    space_savings_ratio,
    stream_shape,
)
from higgs.oracle import ExactStore
from higgs.query import edge_query_batch, vertex_query
from higgs.tree import build_tree

from conftest import random_stream
from reference import accuracy, utilization_by_product

PAPER_HASH = HashConfig(d1=16, f1=19)


# -- accuracy --------------------------------------------------------------


def test_accuracy_worked_values():
    rep = compute_accuracy([1, 2, 3], [2, 2, 4])
    assert rep.aae == pytest.approx(2 / 3)
    assert rep.are == pytest.approx(4 / 9)
    assert rep.max_error == 1
    assert rep.one_sided_violations == 0


def test_accuracy_skips_zero_truths_for_relative_error():
    rep = compute_accuracy([0, 4], [2, 6])
    assert rep.zero_truth_count == 1
    assert rep.aae == pytest.approx(2.0)
    assert rep.are == pytest.approx(0.5)


def test_accuracy_counts_underestimates():
    assert compute_accuracy([5, 5], [4, 5]).one_sided_violations == 1


def test_accuracy_errors():
    with pytest.raises(UndefinedMetricError):
        compute_accuracy([], [])
    with pytest.raises(ValueError):
        compute_accuracy([1], [1, 2])


@given(st.lists(st.integers(0, 10**9), min_size=1, max_size=50))
def test_identical_answers_have_zero_error(xs):
    rep = compute_accuracy(xs, xs)
    assert (rep.aae, rep.are) == (0.0, 0.0)


@given(st.lists(st.tuples(st.integers(0, 1000), st.integers(0, 2000)), min_size=1, max_size=50))
def test_accuracy_matches_reference(pairs):
    truths, ests = zip(*pairs)
    rep = compute_accuracy(truths, ests)
    aae, are = accuracy(truths, ests)
    assert rep.aae == pytest.approx(aae)
    assert rep.are == pytest.approx(are)


# -- collision models -------------------------------------------------------


def test_node_bound_worked_values():
    assert node_collision_bound(PAPER_HASH, 0) == 0.0
    assert PAPER_HASH.z == 8388608
    assert node_collision_bound(PAPER_HASH, 10**5) == pytest.approx(0.011850156186368421, rel=1e-12)


def test_edge_bound_worked_values():
    assert edge_collision_bound(PAPER_HASH, 0, 0, 0) == 0.0
    assert edge_collision_bound(PAPER_HASH, 10**3, 10**3, 10**6) == pytest.approx(0.0001192163793573009, rel=1e-12)


def test_bounds_reject_negative_inputs():
    with pytest.raises(ValueError):
        node_collision_bound(PAPER_HASH, -1)
    with pytest.raises(ValueError):
        edge_collision_bound(PAPER_HASH, 1, -1, 0)


def test_bounds_accept_full_config():
    cfg = HiggsConfig()
    assert node_collision_bound(cfg, 10**5) == node_collision_bound(PAPER_HASH, 10**5)


@given(st.integers(0, 10**7), st.integers(0, 10**7))
def test_node_bound_monotone_in_count(k1, k2):
    lo, hi = sorted((k1, k2))
    assert node_collision_bound(PAPER_HASH, lo) <= node_collision_bound(PAPER_HASH, hi)


@given(st.integers(1, 10), st.integers(1, 10), st.integers(0, 10**6))
def test_bounds_non_increasing_in_identity_space(f_a, f_b, k):
    lo, hi = sorted((f_a, f_b))
    small, large = HashConfig(d1=4, f1=lo), HashConfig(d1=4, f1=hi)
    assert node_collision_bound(large, k) <= node_collision_bound(small, k)
    assert edge_collision_bound(large, k, k, k) <= edge_collision_bound(small, k, k, k)


@given(st.integers(0, 10**5), st.integers(0, 10**5), st.integers(0, 10**7), st.integers(0, 10**7))
def test_edge_bound_monotone(phi_a, phi_b, c_a, c_b):
    plo, phi = sorted((phi_a, phi_b))
    clo, chi = sorted((c_a, c_b))
    assert edge_collision_bound(PAPER_HASH, plo, 0, clo) <= edge_collision_bound(PAPER_HASH, phi, 0, chi)
    assert edge_collision_bound(PAPER_HASH, 0, plo, clo) <= edge_collision_bound(PAPER_HASH, 0, phi, chi)


@pytest.mark.parametrize("hcfg", [HashConfig(d1=2, f1=4, candidates=2), HashConfig(d1=4, f1=6), PAPER_HASH])
def test_empirical_node_collisions_within_bound(hcfg):
    rng = np.random.default_rng(7)
    k = 40
    src = rng.integers(0, k, 10**6).astype(np.uint64)
    rate = empirical_node_collision_rate(src, hcfg)
    report = collision_report(rate, node_collision_bound(hcfg, k), samples=k)
    assert report.satisfied, report


@pytest.mark.parametrize("hcfg", [HashConfig(d1=2, f1=4, candidates=2), HashConfig(d1=4, f1=6),
                                  HashConfig(d1=16, f1=10), PAPER_HASH])
@pytest.mark.parametrize("vertices,items", [(2000, 5000), (20000, 50000)])
def test_empirical_edge_collisions_within_bound(hcfg, vertices, items):
    # sparse streams; the model counts only the larger of the two degrees
    rng = np.random.default_rng(8)
    src = rng.integers(0, vertices, items).astype(np.uint64)
    dst = rng.integers(0, vertices, items).astype(np.uint64)
    shape = stream_shape(src, dst)
    rate = empirical_edge_collision_rate(src, dst, hcfg)
    bound = edge_collision_bound(hcfg, shape.max_out_degree, shape.max_in_degree, shape.distinct_edges)
    report = collision_report(rate, bound, samples=shape.distinct_edges)
    assert report.satisfied, report


def test_stream_shape_counts():
    shape = stream_shape(np.array([1, 1, 1, 2]), np.array([2, 3, 2, 3]))
    assert (shape.distinct_sources, shape.distinct_destinations, shape.distinct_edges) == (2, 2, 3)
    assert (shape.max_out_degree, shape.max_in_degree) == (2, 2)


# -- error bounds ----------------------------------------------------------


def test_markov_all_zero_errors():
    rep = markov_bound_check([0, 0, 0], 0.1, 10.0, "vertex")
    assert rep.empirical_rate == 0.0 and rep.satisfied


def test_markov_rejects_bad_kind_and_empty_input():
    with pytest.raises(ValueError):
        markov_bound_check([1], 0.1, 1.0, "path")
    with pytest.raises(UndefinedMetricError):
        markov_bound_check([], 0.1, 1.0, "edge")


def test_markov_thresholds():
    eps = 0.5
    # vertex threshold eps * |w|; edge threshold eps**2 * |w| / e
    assert markov_bound_check([5.0, 5.1], eps, 10.0, "vertex").empirical_rate == 0.5
    edge_thr = eps**2 * 10.0 / math.e
    assert markov_bound_check([edge_thr, edge_thr + 1e-9], eps, 10.0, "edge").empirical_rate == 0.5


def test_epsilon_for_width():
    assert epsilon_for(HashConfig(d1=2, f1=4, candidates=2)) == pytest.approx(math.e / 32)


def test_small_identity_space_stress():
    cfg = HiggsConfig(d1=2, f1=4, candidates=2, bucket_entries=3)
    edges = random_stream(20000, 300, 5000, seed=11)
    tree = build_tree(edges, cfg)
    store = ExactStore()
    store.record_many(edges.src, edges.dst, edges.weight, edges.t)
    rng = np.random.default_rng(12)
    eps = epsilon_for(cfg)
    v_err, e_err, norms = [], [], []
    for _ in range(400):
        ts = int(rng.integers(0, 5000))
        rq = TemporalRange(ts, ts + int(rng.integers(0, 2000)))
        norms.append(int(edges.weight[(edges.t >= rq.ts) & (edges.t <= rq.te)].sum()))
        v = int(rng.integers(0, 300))
        v_err.append(vertex_query(tree, v, "out", rq) - store.exact_vertex(v, "out", rq))
        s, d = (int(x) for x in rng.integers(0, 300, 2))
        e_err.append(edge_query_batch(tree, [(s, d)], rq)[0] - store.exact_edge(s, d, rq))
    assert min(v_err) >= 0 and min(e_err) >= 0
    assert markov_bound_check(v_err, eps, norms, "vertex").satisfied
    assert markov_bound_check(e_err, eps, norms, "edge").satisfied


# -- utilization ------------------------------------------------------------


def test_single_slot_always_fills():
    assert expected_utilization(1, 1, 1) == pytest.approx(1.0)


@pytest.mark.parametrize("d,b,p", [(2, 1, 1), (4, 2, 1), (4, 2, 4), (8, 3, 2), (16, 3, 16)])
def test_log_space_matches_plain_products(d, b, p):
    assert expected_utilization(d, b, p) == pytest.approx(utilization_by_product(d, b, p), rel=1e-9)


def test_utilization_sweep_values():
    # frozen from the plain-product evaluation
    expected = {1: 0.3963084673763995, 2: 0.6247668117862705, 4: 0.8142616655661775,
                8: 0.9259541044371559, 16: 0.9765924250568558}
    for p, value in expected.items():
        assert expected_utilization(4, 2, p) == pytest.approx(value, rel=1e-9)


@pytest.mark.parametrize("d,b", [(4, 1), (16, 3), (32, 2)])
def test_utilization_non_decreasing_in_candidates(d, b):
    values = [expected_utilization(d, b, p) for p in (1, 2, 4, 8, 16)]
    assert values == sorted(values)


@pytest.mark.parametrize("d,b", [(1, 1), (8, 1), (64, 4), (577, 3)])
def test_utilization_stable_and_bounded(d, b):
    for p in (1, 4, 16):
        u = expected_utilization(d, b, p)
        assert not math.isnan(u)
        assert 0.0 < u <= 1.0


def test_utilization_rejects_bad_inputs():
    with pytest.raises(ValueError):
        expected_utilization(0, 1, 1)


@pytest.mark.slow
def test_monte_carlo_agrees_with_model():
    model = expected_utilization(16, 3, 16)
    measured = simulate_utilization(16, 3, 4, trials=1000, seed=3)
    assert abs(measured - model) / model <= 0.05


# -- space -------------------------------------------------------------------


def test_savings_ratio_values():
    assert space_savings_ratio(1, 4, 64) == 0.0
    assert space_savings_ratio(3, 4, 64) == 0.125
    with pytest.raises(ValueError):
        space_savings_ratio(3, 4, 0)


def test_space_accounting_per_level_widths():
    cfg = HiggsConfig(d1=4, f1=19, r_bits=2, candidates=2, bucket_entries=1)
    tree = build_tree(random_stream(4000, 500, 4000, seed=5), cfg)
    acct = space_accounting(tree)
    idx_bits, wbits = cfg.hash.index_bits, cfg.weight_bits
    flat_entry = 2 * 19 + 2 * idx_bits + wbits
    assert acct.flat_entry_bits == flat_entry
    assert acct.fingerprint_bits == [19 - 2 * i for i in range(len(acct.fingerprint_bits))]
    assert acct.flat_bits == sum(acct.slots_per_level) * flat_entry
    packed = sum(n * (flat_entry - 2 * 2 * i) for i, n in enumerate(acct.slots_per_level))
    assert acct.packed_bits == packed
    assert acct.measured_savings == pytest.approx((acct.flat_bits - packed) / acct.flat_bits)
    assert 0 < acct.measured_savings < 1


# -- timing ------------------------------------------------------------------


def test_zero_ops_is_undefined():
    with pytest.raises(UndefinedMetricError):
        measure_throughput(lambda: None, 0)
    with pytest.raises(UndefinedMetricError):
        measure_latency([])


def test_throughput_runs_setup_each_repeat():
    calls = []
    rep = measure_throughput(lambda: sum(range(1000)), 1000, repeats=3, setup=lambda: calls.append(1))
    assert len(calls) == 3 and len(rep.runs) == 3
    assert rep.mean_ops_per_sec > 0


def test_latency_percentiles_ordered():
    rep = measure_latency([lambda: None] * 50)
    assert rep.count == 50
    assert 0 <= rep.p50_us <= rep.p99_us


def test_effective_sample_size():
    assert effective_sample_size([1, 1, 1, 1]) == pytest.approx(4.0)
    assert effective_sample_size([100]) == pytest.approx(1.0)
    assert effective_sample_size([3, 1]) == pytest.approx(16 / 10)
    with pytest.raises(UndefinedMetricError):
        effective_sample_size([0, 0])
