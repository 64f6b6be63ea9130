"""Command-line front end.

Subcommands: ``build``, ``query``, ``bench``, ``verify``, ``synth`` and
``serve``.  Exit codes: 0 on success, 2 on parse errors, 3 when ``verify``
finds a violated property, 1 on any other error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from higgs import query as Q
from higgs.config import HiggsConfig
from higgs.edgelist import EdgeArrays, VertexDictionary, parse_lines, write_edge_list
from higgs.errors import HiggsError, ParseError
from higgs.matrix import TemporalRange
from higgs.metrics import measure_latency, measure_throughput, space_accounting
from higgs.oracle import ExactStore
from higgs.pipeline import LevelPipeline
from higgs.snapshot import read_snapshot, write_snapshot
from higgs.synth import SynthSpec, synthesize_stream
from higgs.tree import SummaryTree
from higgs.workload import Query, WorkloadResult, expand, read_workload, run_queries

log = logging.getLogger("higgs")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARSE = 2
EXIT_VERIFY = 3


class VerificationFailed(Exception):
    def __init__(self, report: dict, failures: list[str]):
        super().__init__("; ".join(failures))
        self.report = report
        self.failures = failures


# -- building blocks --------------------------------------------------------


def config_from(args: argparse.Namespace) -> HiggsConfig:
    return HiggsConfig(d1=args.d1, f1=args.f1, r_bits=args.r_bits, candidates=args.candidates,
                       bucket_entries=args.bucket_entries, seed=args.seed, theta=args.theta)


def load_stream(path: str, vocab: VertexDictionary | None = None) -> tuple[EdgeArrays, VertexDictionary]:
    with open(path, encoding="utf-8") as fh:
        edges, vocab = parse_lines(fh, vocab)
    log.info("read %d edges from %s", len(edges), path)
    return edges, vocab


def new_tree(cfg: HiggsConfig, parallel: int) -> SummaryTree:
    tree = SummaryTree(cfg)
    if parallel > 1:
        LevelPipeline().bind(tree)
    return tree


def build(edges: EdgeArrays, cfg: HiggsConfig, parallel: int = 1) -> SummaryTree:
    tree = new_tree(cfg, parallel)
    if len(edges):
        tree.insert_many(edges.src, edges.dst, edges.weight, edges.t)
    tree.finalize()
    log.info("built %r", tree)
    return tree


def oracle_for(edges: EdgeArrays) -> ExactStore:
    store = ExactStore()
    store.record_many(edges.src, edges.dst, edges.weight, edges.t)
    return store


def run_config(args: argparse.Namespace, cfg: HiggsConfig | None) -> dict:
    out = {"subcommand": args.command}
    for key in ("input", "workload", "output", "format", "snapshot", "parallel"):
        if hasattr(args, key):
            out[key] = getattr(args, key)
    if cfg is not None:
        out.update(cfg.to_dict())
    return out


def stats_section(tree: SummaryTree) -> dict:
    stats = tree.stats().to_dict()
    space = space_accounting(tree)
    stats["space"] = {
        "fingerprint_bits": space.fingerprint_bits,
        "flat_bits": space.flat_bits,
        "packed_bits": space.packed_bits,
        "measured_savings": space.measured_savings,
        "model_savings": space.model_savings,
    }
    return stats


def workload_section(result: WorkloadResult, with_log: bool) -> dict:
    out = result.to_dict()
    if not with_log:
        out.pop("log")
    return out


# -- report emission ---------------------------------------------------------


def flatten(data, prefix: str = "") -> list[tuple[str, object]]:
    rows: list[tuple[str, object]] = []
    if isinstance(data, dict):
        for key, value in data.items():
            rows += flatten(value, f"{prefix}.{key}" if prefix else str(key))
    elif isinstance(data, (list, tuple)):
        for i, value in enumerate(data):
            rows += flatten(value, f"{prefix}.{i}")
    else:
        rows.append((prefix, data))
    return rows


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, indent=2, default=str) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["key", "value"])
    writer.writerows(flatten(report))
    return buf.getvalue()


def emit(report: dict, args: argparse.Namespace) -> None:
    text = render(report, args.format)
    if args.output and args.output != "-":
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# -- subcommands -------------------------------------------------------------


def cmd_build(args: argparse.Namespace) -> dict:
    cfg = config_from(args)
    edges, vocab = load_stream(args.input)
    t0 = time.perf_counter()
    tree = build(edges, cfg, args.parallel)
    elapsed = time.perf_counter() - t0
    report = {"config": run_config(args, cfg), "stats": stats_section(tree),
              "timing": {"build_seconds": elapsed, "edges_per_second": len(edges) / elapsed if elapsed else None}}
    if args.snapshot:
        report["snapshot_bytes"] = write_snapshot(tree, args.snapshot, vocab)
    return report


def _queries_from(args: argparse.Namespace, vocab: VertexDictionary | None, edges: EdgeArrays | None):
    items = read_workload(args.workload, vocab)
    return expand(items, edges, args.seed)


def cmd_query(args: argparse.Namespace) -> dict:
    if args.server:
        return query_remote(args)
    if not args.snapshot and not args.input:
        raise ParseError("query needs --snapshot or --input")
    edges = store = None
    if args.snapshot:
        tree, vocab = read_snapshot(args.snapshot)
        cfg = tree.cfg
        if args.input:
            edges, _ = load_stream(args.input, vocab)
    else:
        cfg = config_from(args)
        edges, vocab = load_stream(args.input)
        tree = build(edges, cfg, args.parallel)
    if edges is not None:
        store = oracle_for(edges)
    queries, notes = _queries_from(args, vocab, edges)
    result = run_queries(tree, queries, store)
    result.generated_from = notes
    return {"config": run_config(args, cfg), "workload": workload_section(result, with_log=True)}


def query_remote(args: argparse.Namespace) -> dict:
    """Thin client: run the workload against a running ``higgs serve``."""
    import httpx

    vocab = edges = None
    if args.input:
        edges, vocab = load_stream(args.input)
    queries, notes = _queries_from(args, vocab, edges)
    rows = []
    with httpx.Client(base_url=args.server.rstrip("/"), timeout=args.timeout) as client:
        for q in queries:
            path, body = remote_request(q)
            resp = client.post(path, json=body)
            if resp.status_code != 200:
                raise HiggsError(f"server rejected {q.to_line()!r}: {resp.status_code} {resp.text}")
            rows.append({"query": q.to_line(), "estimate": resp.json()["estimate"]})
    result = WorkloadResult(log=rows, generated_from=notes, error=None if rows else "empty workload")
    return {"config": run_config(args, None), "server": args.server,
            "workload": workload_section(result, with_log=True)}


def remote_request(q: Query) -> tuple[str, dict]:
    body: dict = {"ts": q.ts, "te": q.te}
    if q.kind == "edge":
        body.update(src=q.vertices[0], dst=q.vertices[1])
        return "/query/edge", body
    if q.kind in ("vout", "vin"):
        body.update(vertex=q.vertices[0], direction="out" if q.kind == "vout" else "in")
        return "/query/vertex", body
    if q.kind == "path":
        body["vertices"] = list(q.vertices)
        return "/query/path", body
    body["edges"] = [list(p) for p in q.pairs()]
    return "/query/subgraph", body


def cmd_verify(args: argparse.Namespace) -> dict:
    if args.snapshot:
        tree, vocab = read_snapshot(args.snapshot)
        cfg = tree.cfg
        edges, _ = load_stream(args.input, vocab)
    else:
        cfg = config_from(args)
        edges, vocab = load_stream(args.input)
        tree = build(edges, cfg, args.parallel)
    store = oracle_for(edges)
    queries, notes = _queries_from(args, vocab, edges)
    result = run_queries(tree, queries, store)
    result.generated_from = notes

    failures = []
    if result.error:
        failures.append(result.error)
    overall = result.accuracy.get("all")
    if overall is not None:
        if overall.one_sided_violations:
            failures.append(f"{overall.one_sided_violations} queries underestimated the truth")
        if args.max_aae is not None and overall.aae > args.max_aae:
            failures.append(f"AAE {overall.aae:.6g} exceeds {args.max_aae}")
        if args.max_are is not None and overall.are > args.max_are:
            failures.append(f"ARE {overall.are:.6g} exceeds {args.max_are}")
    bad_plans = 0
    bound = Q.plan_size_bound(tree.theta, tree.leaf_count)
    for rng in {(q.ts, q.te) for q in queries}:
        plan = Q.boundary_search(tree, TemporalRange(*rng))
        if not plan.is_exact_cover() or len(plan) > bound:
            bad_plans += 1
    if bad_plans:
        failures.append(f"{bad_plans} query plans do not exactly cover their range within {bound} items")

    report = {"config": run_config(args, cfg), "stats": stats_section(tree),
              "workload": workload_section(result, with_log=args.log),
              "bounds": {"plan_size_bound": bound, "bad_plans": bad_plans},
              "verdict": {"passed": not failures, "failures": failures}}
    if failures:
        raise VerificationFailed(report, failures)
    return report


def _bench_stream(args: argparse.Namespace) -> tuple[EdgeArrays, VertexDictionary, dict]:
    if args.input:
        edges, vocab = load_stream(args.input)
        return edges, vocab, {"input": args.input}
    spec = SynthSpec(vertex_count=args.vertices, edge_count=args.edges, exponent=args.exponent,
                     arrival_variance=args.variance, time_span=args.span, seed=args.seed)
    return synthesize_stream(spec), VertexDictionary(), {"synthetic": spec.to_dict()}


def cmd_bench(args: argparse.Namespace) -> dict:
    cfg = config_from(args)
    edges, vocab, source = _bench_stream(args)
    n = len(edges)
    if n == 0:
        raise ParseError("benchmark stream is empty")
    timing: dict = {}
    holder: dict = {}

    def fresh(parallel: int):
        def setup():
            holder["tree"] = new_tree(cfg, parallel)
        return setup

    def run():
        tree = holder["tree"]
        tree.insert_many(edges.src, edges.dst, edges.weight, edges.t)
        tree.finalize()

    single = measure_throughput(run, n, args.repeats, fresh(1))
    timing["insert_single"] = single.to_dict()
    if args.parallel > 1:
        piped = measure_throughput(run, n, args.repeats, fresh(args.parallel))
        timing["insert_pipelined"] = piped.to_dict()
        timing["pipeline_speedup"] = piped.mean_ops_per_sec / single.mean_ops_per_sec
        timing["pipeline_workers"] = holder["tree"].aggregator.worker_count
    tree = holder["tree"]

    if args.workload:
        queries, _ = _queries_from(args, vocab, edges)
        if queries:
            from higgs.workload import estimate

            timing["query_latency"] = measure_latency([lambda q=q: estimate(tree, q) for q in queries]).to_dict()

    if args.delete_fraction > 0:
        rng = np.random.default_rng(args.seed)
        k = max(1, int(n * args.delete_fraction))
        victims = rng.choice(n, size=k, replace=False)
        rows = [(int(edges.src[i]), int(edges.dst[i]), int(edges.weight[i]), int(edges.t[i])) for i in victims]
        t0 = time.perf_counter()
        for s, d, w, t in rows:
            tree.delete(s, d, w, t)
        dt = time.perf_counter() - t0
        timing["delete"] = {"ops": k, "ops_per_sec": k / dt if dt else None}

    return {"config": run_config(args, cfg), "source": source, "stats": stats_section(tree), "timing": timing}


def cmd_synth(args: argparse.Namespace) -> dict:
    spec = SynthSpec(vertex_count=args.vertices, edge_count=args.edges, exponent=args.exponent,
                     arrival_variance=args.variance, time_span=args.span, seed=args.seed,
                     max_weight=args.max_weight)
    edges = synthesize_stream(spec)
    header = "synthetic stream " + json.dumps(spec.to_dict(), sort_keys=True)
    write_edge_list(args.stream or sys.stdout, edges, header=header)
    return {"config": {"subcommand": "synth", **spec.to_dict()}, "edges": len(edges),
            "span": [int(edges.t[0]), int(edges.t[-1])] if len(edges) else None}


def cmd_serve(args: argparse.Namespace) -> None:
    import uvicorn

    from higgs.service import SummaryService, create_app

    if args.snapshot:
        tree, vocab = read_snapshot(args.snapshot)
        service = SummaryService(tree, vocab)
    else:
        service = SummaryService(cfg=config_from(args), parallel=args.parallel > 1)
    uvicorn.run(create_app(service), host=args.host, port=args.port, log_level="warning")


# -- argument parsing --------------------------------------------------------


def _structure_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("structure")
    g.add_argument("--d1", type=int, default=16, help="leaf matrix side (power of two)")
    g.add_argument("--f1", type=int, default=19, help="leaf fingerprint bits")
    g.add_argument("--r-bits", type=int, default=1, help="fingerprint bits moved into the address per level")
    g.add_argument("--theta", type=int, default=None, help="fan-out; defaults to 4**r-bits")
    g.add_argument("--candidates", type=int, default=4, help="candidate addresses per vertex")
    g.add_argument("--bucket-entries", type=int, default=3, help="entries per bucket")
    g.add_argument("--seed", type=int, default=0, help="hash and generator seed")
    g.add_argument("--parallel", type=int, default=1,
                   help="values above 1 run aggregation on per-level worker threads")


def _output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output", "-o", default=None, help="report path (stdout if omitted)")
    p.add_argument("--format", choices=("json", "csv"), default="json")


def _synth_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("synthetic stream")
    g.add_argument("--vertices", type=int, default=100_000)
    g.add_argument("--edges", type=int, default=1_000_000)
    g.add_argument("--exponent", type=float, default=2.0, help="power-law exponent of vertex degrees")
    g.add_argument("--variance", type=float, default=None, help="per-slice arrival variance (Poisson if omitted)")
    g.add_argument("--span", type=int, default=100_000, help="number of time slices")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="higgs", description="Hierarchical graph-stream summary")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="summarize an edge list, optionally writing a snapshot")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--snapshot", help="write the finalized tree here")
    _structure_flags(p)
    _output_flags(p)

    p = sub.add_parser("query", help="run a workload against a snapshot, an edge list, or a server")
    p.add_argument("--workload", "-w", required=True)
    p.add_argument("--snapshot", help="query this snapshot")
    p.add_argument("--input", "-i", help="edge list: builds the tree if no snapshot, and enables exact answers")
    p.add_argument("--server", help="base URL of a running 'higgs serve'")
    p.add_argument("--timeout", type=float, default=30.0)
    _structure_flags(p)
    _output_flags(p)

    p = sub.add_parser("verify", help="check a workload against exact answers; exit 3 on failure")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--workload", "-w", required=True)
    p.add_argument("--snapshot", help="verify this snapshot instead of rebuilding")
    p.add_argument("--max-aae", type=float, default=None)
    p.add_argument("--max-are", type=float, default=None)
    p.add_argument("--log", action="store_true", help="include the per-query log")
    _structure_flags(p)
    _output_flags(p)

    p = sub.add_parser("bench", help="insertion, deletion and query timing")
    p.add_argument("--input", "-i", help="edge list (a synthetic stream is used if omitted)")
    p.add_argument("--workload", "-w")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--delete-fraction", type=float, default=0.1)
    _synth_flags(p)
    _structure_flags(p)
    _output_flags(p)

    p = sub.add_parser("synth", help="write a synthetic power-law stream")
    p.add_argument("--stream", "-s", help="edge-list path (stdout if omitted)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-weight", type=int, default=1)
    _synth_flags(p)
    _output_flags(p)

    p = sub.add_parser("serve", help="serve the HTTP API")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--snapshot", help="load this snapshot at start-up")
    _structure_flags(p)
    return parser


COMMANDS = {"build": cmd_build, "query": cmd_query, "verify": cmd_verify, "bench": cmd_bench, "synth": cmd_synth}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "serve":
            cmd_serve(args)
            return EXIT_OK
        report = COMMANDS[args.command](args)
        if args.command == "synth" and not args.stream:
            return EXIT_OK
        emit(report, args)
        return EXIT_OK
    except ParseError as exc:
        print(f"higgs: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except VerificationFailed as exc:
        emit(exc.report, args)
        print(f"higgs: verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (HiggsError, OSError, ValueError) as exc:
        print(f"higgs: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
