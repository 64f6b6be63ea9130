import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from higgs.config import HiggsConfig
from higgs.matrix import TemporalRange
from higgs.oracle import ExactStore
from higgs.query import (
    boundary_search,
    clip_range,
    edge_query,
    edge_query_batch,
    path_query,
    plan_size_bound,
    subgraph_query,
    vertex_query,
)
from higgs.tree import StreamEdge, SummaryTree, build_tree

from conftest import WORKED_EDGES, exact_config, random_stream
from reference import covers_exactly, edge_sum, path_sum, subgraph_sum, vertex_sum


@pytest.fixture(scope="module")
def worked_tree():
    return build_tree(WORKED_EDGES, exact_config())


def test_edge_weight_between_t5_and_t10(worked_tree):
    assert edge_query(worked_tree, 2, 3, TemporalRange(5, 10)) == 3


def test_range_before_the_stream_is_zero(worked_tree):
    assert edge_query(worked_tree, 2, 3, TemporalRange(-10, 0)) == 0
    assert len(boundary_search(worked_tree, TemporalRange(-10, 0))) == 0


def test_outgoing_weight_of_v4(worked_tree):
    assert vertex_query(worked_tree, 4, "out", TemporalRange(1, 11)) == 6


def test_isolated_vertex_is_zero(worked_tree):
    assert vertex_query(worked_tree, 99, "out", TemporalRange(1, 11)) == 0
    assert vertex_query(worked_tree, 99, "in", TemporalRange(1, 11)) == 0


def test_path_v2_v3_v7(worked_tree):
    assert path_query(worked_tree, [2, 3, 7], TemporalRange(4, 8)) == 3


def test_one_hop_path_is_an_edge_query(worked_tree):
    rng = TemporalRange(1, 11)
    assert path_query(worked_tree, [2, 3], rng) == edge_query(worked_tree, 2, 3, rng) == 3


def test_subgraph_of_three_edges(worked_tree):
    assert subgraph_query(worked_tree, [(2, 3), (3, 7), (2, 4)], TemporalRange(4, 8)) == 3


def test_subgraph_counts_duplicates_once(worked_tree):
    rng = TemporalRange(4, 8)
    assert subgraph_query(worked_tree, [(2, 3), (2, 3)], rng) == 2


def test_empty_range_subgraph_is_zero(worked_tree):
    assert subgraph_query(worked_tree, [(2, 3), (3, 7)], TemporalRange(50, 60)) == 0


def test_degenerate_queries_are_rejected(worked_tree):
    with pytest.raises(ValueError):
        path_query(worked_tree, [2], TemporalRange(1, 2))
    with pytest.raises(ValueError):
        subgraph_query(worked_tree, [], TemporalRange(1, 2))


def test_queries_on_an_empty_tree():
    tree = SummaryTree(exact_config())
    assert edge_query(tree, 1, 2, TemporalRange(0, 10)) == 0
    assert vertex_query(tree, 1, "in", TemporalRange(0, 10)) == 0


@pytest.fixture(scope="module")
def twenty_leaves():
    # 3-bit offsets: every edge ten slices after the previous opens a new leaf
    cfg = exact_config(offset_bits=3)
    return build_tree([StreamEdge(k, k + 1, 1, 10 * (k - 1)) for k in range(1, 21)], cfg)


def test_twenty_leaf_tree_has_four_levels(twenty_leaves):
    assert twenty_leaves.leaf_count == 20
    assert twenty_leaves.level_count == 4
    assert twenty_leaves.stats().nodes_per_level == [20, 5, 2, 1]


def test_worked_range_decomposition(twenty_leaves):
    plan = boundary_search(twenty_leaves, TemporalRange(63, 185))
    got = [(it.level, it.span, it.time_filter is not None) for it in plan]
    assert got == [
        (1, (63, 69), True),    # leaf 7
        (1, (70, 79), False),   # leaf 8
        (2, (80, 119), False),  # leaves 9-12
        (2, (120, 159), False), # leaves 13-16
        (1, (160, 169), False), # leaf 17
        (1, (170, 179), False), # leaf 18
        (1, (180, 185), True),  # leaf 19
    ]
    assert plan.is_exact_cover()
    assert len(plan) <= plan_size_bound(4, 20)


def test_full_range_uses_the_root(twenty_leaves):
    plan = boundary_search(twenty_leaves, TemporalRange(-100, 10_000))
    assert [it.node for it in plan] == [twenty_leaves.root]
    assert plan.clipped == TemporalRange(0, 190)


def test_open_tree_never_uses_unsealed_parents():
    tree = SummaryTree(exact_config(offset_bits=3))
    for k in range(1, 21):
        tree.insert(k, k + 1, 1, 10 * (k - 1))
    plan = boundary_search(tree, TemporalRange(0, 1000))
    assert plan.is_exact_cover()
    assert all(it.node.sealed or it.node.is_leaf for it in plan)
    assert edge_query(tree, 20, 21, TemporalRange(0, 1000)) == 1


def test_clip_range():
    tree = build_tree([StreamEdge(1, 2, 1, 5), StreamEdge(1, 2, 1, 9)], exact_config())
    assert clip_range(tree, TemporalRange(0, 100)) == TemporalRange(5, 9)
    assert clip_range(tree, TemporalRange(10, 100)) is None


@pytest.fixture(scope="module")
def replay():
    cfg = HiggsConfig(d1=4, f1=32, bucket_entries=1)
    edges = random_stream(50_000, 2000, 30_000, seed=31)
    tree = SummaryTree(cfg)
    tree.insert_many(edges.src, edges.dst, edges.weight, edges.t)
    tree.finalize()
    store = ExactStore()
    store.record_many(edges.src, edges.dst, edges.weight, edges.t)
    return tree, store, edges


def test_random_ranges_are_tiled_within_the_bound(replay):
    tree, _, _ = replay
    bound = plan_size_bound(tree.theta, tree.leaf_count)
    rng = np.random.default_rng(32)
    for _ in range(10_000):
        a, b = sorted(rng.integers(-100, 30_100, 2).tolist())
        plan = boundary_search(tree, TemporalRange(a, b))
        assert plan.is_exact_cover()
        assert len(plan) <= bound
    for _ in range(50):
        a, b = sorted(rng.integers(0, 30_000, 2).tolist())
        plan = boundary_search(tree, TemporalRange(a, b))
        assert covers_exactly(plan.spans(), plan.clipped.ts, plan.clipped.te)


def _random_ranges(rng, count, span, max_len):
    ts = rng.integers(0, span, count)
    return ts, ts + rng.integers(0, max_len, count)


def test_edge_queries_are_exact_with_wide_fingerprints(replay):
    tree, store, edges = replay
    rng = np.random.default_rng(33)
    n = len(edges)
    starts, ends = _random_ranges(rng, 1000, 30_000, 10_000)
    for ts, te in zip(starts.tolist(), ends.tolist()):
        picks = rng.integers(0, n, 100)
        pairs = [(int(edges.src[i]), int(edges.dst[i])) for i in picks]
        rq = TemporalRange(ts, te)
        assert edge_query_batch(tree, pairs, rq) == [store.exact_edge(s, d, rq) for s, d in pairs]


def test_vertex_path_and_subgraph_queries_are_exact(replay):
    tree, store, edges = replay
    rows = list(edges[:3000].rows())
    rng = np.random.default_rng(34)
    n = len(edges)
    for _ in range(200):
        ts = int(rng.integers(0, 30_000))
        rq = TemporalRange(ts, ts + int(rng.integers(0, 10_000)))
        v = int(edges.src[rng.integers(0, n)])
        assert vertex_query(tree, v, "out", rq) == store.exact_vertex(v, "out", rq)
        assert vertex_query(tree, v, "in", rq) == store.exact_vertex(v, "in", rq)
        path = [int(x) for x in edges.src[rng.integers(0, n, 5)]]
        assert path_query(tree, path, rq) == store.exact_path(path, rq)
        sub = [(int(edges.src[i]), int(edges.dst[i])) for i in rng.integers(0, n, 50)]
        assert subgraph_query(tree, sub, rq) == store.exact_subgraph(sub, rq)
    # the first slices are small enough to double-check against literal sums
    t_hi = rows[-1][3]
    for s, d, _, _ in rows[:50]:
        assert edge_query(tree, s, d, TemporalRange(0, t_hi)) == edge_sum(rows, s, d, 0, t_hi)


def test_narrow_fingerprints_never_underestimate():
    cfg = HiggsConfig(d1=4, f1=4, bucket_entries=1, candidates=2)
    edges = random_stream(20_000, 3000, 10_000, seed=35)
    tree = SummaryTree(cfg)
    tree.insert_many(edges.src, edges.dst, edges.weight, edges.t)
    tree.finalize()
    store = ExactStore()
    store.record_many(edges.src, edges.dst, edges.weight, edges.t)
    rng = np.random.default_rng(36)
    inflated = 0
    for _ in range(300):
        ts = int(rng.integers(0, 10_000))
        rq = TemporalRange(ts, ts + int(rng.integers(0, 5000)))
        picks = rng.integers(0, len(edges), 30)
        pairs = [(int(edges.src[i]), int(edges.dst[i])) for i in picks]
        est = edge_query_batch(tree, pairs, rq)
        truth = [store.exact_edge(s, d, rq) for s, d in pairs]
        assert all(e >= t for e, t in zip(est, truth))
        inflated += sum(e > t for e, t in zip(est, truth))
        v = pairs[0][0]
        assert vertex_query(tree, v, "out", rq) >= store.exact_vertex(v, "out", rq)
        assert path_query(tree, [p[0] for p in pairs[:5]], rq) >= store.exact_path([p[0] for p in pairs[:5]], rq)
        assert subgraph_query(tree, pairs, rq) >= store.exact_subgraph(pairs, rq)
    assert inflated > 0  # the setting really does collide


small_streams = st.lists(
    st.tuples(st.integers(0, 12), st.integers(0, 12), st.integers(1, 4), st.integers(0, 3)),
    min_size=1, max_size=80,
)


def _tiny_tree(steps, seed, f1=3):
    cfg = HiggsConfig(d1=2, f1=f1, candidates=2, bucket_entries=1, offset_bits=3, seed=seed)
    tree = SummaryTree(cfg)
    rows, t = [], 0
    for s, d, w, gap in steps:
        t += gap
        tree.insert(s, d, w, t)
        rows.append((s, d, w, t))
    tree.finalize()
    return tree, rows


@given(small_streams, st.integers(0, 1000), st.data())
def test_estimates_are_monotone_and_additive(steps, seed, data):
    tree, rows = _tiny_tree(steps, seed)
    end = rows[-1][3]
    a = data.draw(st.integers(-2, end + 2))
    c = data.draw(st.integers(a, end + 3))
    b = data.draw(st.integers(a, c))
    s, d = data.draw(st.sampled_from([(r[0], r[1]) for r in rows]))
    whole = edge_query(tree, s, d, TemporalRange(a, c))
    left = edge_query(tree, s, d, TemporalRange(a, b))
    right = edge_query(tree, s, d, TemporalRange(b + 1, c)) if b < c else 0
    assert whole == left + right
    assert edge_query(tree, s, d, TemporalRange(a - 1, c + 1)) >= whole
    assert vertex_query(tree, s, "out", TemporalRange(a - 1, c)) >= vertex_query(tree, s, "out", TemporalRange(a, c))


@given(small_streams, st.integers(0, 1000), st.data())
def test_all_query_types_are_one_sided(steps, seed, data):
    tree, rows = _tiny_tree(steps, seed, f1=2)
    end = rows[-1][3]
    a = data.draw(st.integers(0, end))
    b = data.draw(st.integers(a, end))
    verts = sorted({r[0] for r in rows} | {r[1] for r in rows})
    path = data.draw(st.lists(st.sampled_from(verts), min_size=2, max_size=5))
    sub = data.draw(st.lists(st.tuples(st.sampled_from(verts), st.sampled_from(verts)), min_size=1, max_size=6))
    rq = TemporalRange(a, b)
    for s, d in sub:
        assert edge_query(tree, s, d, rq) >= edge_sum(rows, s, d, a, b)
    assert vertex_query(tree, path[0], "out", rq) >= vertex_sum(rows, path[0], True, a, b)
    assert vertex_query(tree, path[0], "in", rq) >= vertex_sum(rows, path[0], False, a, b)
    assert path_query(tree, path, rq) >= path_sum(rows, path, a, b)
    assert subgraph_query(tree, sub, rq) >= subgraph_sum(rows, sub, a, b)


@given(small_streams, st.data())
def test_plans_tile_their_range(steps, data):
    tree, rows = _tiny_tree(steps, 0)
    end = rows[-1][3]
    a = data.draw(st.integers(-3, end + 3))
    b = data.draw(st.integers(a, end + 3))
    plan = boundary_search(tree, TemporalRange(a, b))
    if plan.clipped is None:
        assert not plan.items
        return
    assert covers_exactly(plan.spans(), plan.clipped.ts, plan.clipped.te)
    assert len(plan) <= plan_size_bound(tree.theta, tree.leaf_count)


def test_plan_size_bound_values():
    assert plan_size_bound(4, 1) == 2
    assert plan_size_bound(4, 20) == 2 * 3 * 3 + 2
    assert plan_size_bound(4, 16) == 2 * 3 * 2 + 2
    assert plan_size_bound(16, 17) == 2 * 15 * 2 + 2
