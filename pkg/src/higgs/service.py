"""HTTP front end: one in-memory summary tree behind a FastAPI app."""

from __future__ import annotations

import io
import threading

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from higgs import query as Q
from higgs.config import HiggsConfig
from higgs.edgelist import TEXT_ID_BASE, VertexDictionary
from higgs.errors import (
    ConfigError,
    FinalizedError,
    HiggsError,
    NotFoundError,
    OrderingError,
    SnapshotFormatError,
    UnderflowError,
)
from higgs.matrix import TemporalRange
from higgs.pipeline import LevelPipeline
from higgs.schemas import (
    ConfigOut,
    DeleteResult,
    EdgeBatch,
    EdgeQuery,
    Estimate,
    InsertResult,
    PathQuery,
    PlanItemOut,
    PlanOut,
    RangeIn,
    StatsOut,
    SubgraphQuery,
    VertexId,
    VertexQuery,
)
from higgs.snapshot import read_snapshot, write_snapshot
from higgs.tree import SummaryTree

_STATUS = {
    NotFoundError: 404,
    OrderingError: 409,
    FinalizedError: 409,
    UnderflowError: 409,
    SnapshotFormatError: 400,
    ConfigError: 422,
}


class SummaryService:
    """Owns the tree and the vertex dictionary; all access is serialized."""

    def __init__(self, tree: SummaryTree | None = None, vocab: VertexDictionary | None = None,
                 cfg: HiggsConfig | None = None, parallel: bool = False):
        self.cfg = cfg or (tree.cfg if tree is not None else HiggsConfig())
        self.parallel = parallel
        self.tree = tree or self._fresh()
        self.vocab = vocab or VertexDictionary()
        self.lock = threading.RLock()

    def _fresh(self) -> SummaryTree:
        tree = SummaryTree(self.cfg)
        if self.parallel:
            LevelPipeline().bind(tree)
        return tree

    def vid(self, v: VertexId, create: bool = False) -> int:
        if isinstance(v, int):
            if not 0 <= v < 1 << 64:
                raise ValueError(f"vertex id {v} is not a 64-bit unsigned integer")
            return v
        if v.isdigit():
            return int(v)
        if create:
            return self.vocab.encode(v)
        known = self.vocab.lookup(v)
        # an unseen name matches nothing stored; use the next unassigned id without registering it
        return known if known is not None else TEXT_ID_BASE + len(self.vocab)

    def reset(self, tree: SummaryTree, vocab: VertexDictionary) -> None:
        self.tree, self.vocab, self.cfg = tree, vocab, tree.cfg


def create_app(service: SummaryService | None = None) -> FastAPI:
    svc = service or SummaryService()
    app = FastAPI(title="higgs", summary="Temporal range queries over a hierarchical graph-stream summary")
    app.state.service = svc

    @app.exception_handler(HiggsError)
    async def _higgs_error(_: Request, exc: HiggsError):
        status = next((code for cls, code in _STATUS.items() if isinstance(exc, cls)), 400)
        return JSONResponse(status_code=status, content={"error": type(exc).__name__, "detail": str(exc)})

    @app.exception_handler(ValueError)
    async def _value_error(_: Request, exc: ValueError):
        return JSONResponse(status_code=422, content={"error": "ValueError", "detail": str(exc)})

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.get("/config", response_model=ConfigOut)
    def config() -> dict:
        return svc.cfg.to_dict()

    @app.post("/edges", response_model=InsertResult)
    def insert(batch: EdgeBatch) -> InsertResult:
        with svc.lock:
            for e in batch.edges:
                svc.tree.insert(svc.vid(e.src, True), svc.vid(e.dst, True), e.weight, e.timestamp)
            return InsertResult(accepted=len(batch.edges), edge_count=svc.tree.edge_count,
                                leaf_count=svc.tree.leaf_count)

    @app.post("/edges/delete", response_model=DeleteResult)
    def delete(batch: EdgeBatch) -> DeleteResult:
        with svc.lock:
            for e in batch.edges:
                svc.tree.delete(svc.vid(e.src), svc.vid(e.dst), e.weight, e.timestamp)
            return DeleteResult(deleted=len(batch.edges), edge_count=svc.tree.edge_count)

    @app.post("/finalize", response_model=StatsOut)
    def finalize() -> dict:
        with svc.lock:
            svc.tree.finalize()
            return _stats(svc.tree)

    @app.get("/stats", response_model=StatsOut)
    def stats() -> dict:
        with svc.lock:
            return _stats(svc.tree)

    @app.post("/plan", response_model=PlanOut)
    def plan(body: RangeIn) -> PlanOut:
        with svc.lock:
            p = Q.boundary_search(svc.tree, TemporalRange(body.ts, body.te))
        items = [PlanItemOut(level=it.level, start=it.span[0], end=it.span[1], filtered=it.time_filter is not None)
                 for it in p.items]
        clipped = (p.clipped.ts, p.clipped.te) if p.clipped else None
        return PlanOut(items=items, clipped=clipped)

    def _estimate(rng: TemporalRange, value: int) -> Estimate:
        return Estimate(estimate=value, plan_size=len(Q.boundary_search(svc.tree, rng)))

    @app.post("/query/edge", response_model=Estimate)
    def edge(body: EdgeQuery) -> Estimate:
        rng = TemporalRange(body.ts, body.te)
        with svc.lock:
            return _estimate(rng, Q.edge_query(svc.tree, svc.vid(body.src), svc.vid(body.dst), rng))

    @app.post("/query/vertex", response_model=Estimate)
    def vertex(body: VertexQuery) -> Estimate:
        rng = TemporalRange(body.ts, body.te)
        with svc.lock:
            return _estimate(rng, Q.vertex_query(svc.tree, svc.vid(body.vertex), body.direction, rng))

    @app.post("/query/path", response_model=Estimate)
    def path(body: PathQuery) -> Estimate:
        rng = TemporalRange(body.ts, body.te)
        with svc.lock:
            verts = [svc.vid(v) for v in body.vertices]
            return _estimate(rng, Q.path_query(svc.tree, verts, rng))

    @app.post("/query/subgraph", response_model=Estimate)
    def subgraph(body: SubgraphQuery) -> Estimate:
        rng = TemporalRange(body.ts, body.te)
        with svc.lock:
            edges = [(svc.vid(s), svc.vid(d)) for s, d in body.edges]
            return _estimate(rng, Q.subgraph_query(svc.tree, edges, rng))

    @app.get("/snapshot")
    def snapshot_out() -> Response:
        buf = io.BytesIO()
        with svc.lock:
            write_snapshot(svc.tree, buf, svc.vocab)
        return Response(content=buf.getvalue(), media_type="application/octet-stream")

    @app.put("/snapshot", response_model=StatsOut)
    async def snapshot_in(request: Request) -> dict:
        tree, vocab = read_snapshot(await request.body())
        with svc.lock:
            svc.reset(tree, vocab)
            return _stats(tree)

    return app


def _stats(tree: SummaryTree) -> dict:
    out = tree.stats().to_dict()
    out["finalized"] = tree.finalized
    return out
