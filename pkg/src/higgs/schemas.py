"""Request and response models for the HTTP service."""

from __future__ import annotations

from typing import Literal, Union

from pydantic import BaseModel, Field, model_validator

VertexId = Union[int, str]


class EdgeIn(BaseModel):
    src: VertexId
    dst: VertexId
    weight: int = Field(1, ge=1)
    timestamp: int


class EdgeBatch(BaseModel):
    edges: list[EdgeIn]


class InsertResult(BaseModel):
    accepted: int
    edge_count: int
    leaf_count: int


class DeleteResult(BaseModel):
    deleted: int
    edge_count: int


class RangeIn(BaseModel):
    ts: int
    te: int

    @model_validator(mode="after")
    def _ordered(self):
        if self.ts > self.te:
            raise ValueError(f"empty range [{self.ts}, {self.te}]")
        return self


class EdgeQuery(RangeIn):
    src: VertexId
    dst: VertexId


class VertexQuery(RangeIn):
    vertex: VertexId
    direction: Literal["out", "in"] = "out"


class PathQuery(RangeIn):
    vertices: list[VertexId] = Field(min_length=2)


class SubgraphQuery(RangeIn):
    edges: list[tuple[VertexId, VertexId]] = Field(min_length=1)


class Estimate(BaseModel):
    estimate: int
    plan_size: int


class PlanItemOut(BaseModel):
    level: int
    start: int
    end: int
    filtered: bool


class PlanOut(BaseModel):
    items: list[PlanItemOut]
    clipped: tuple[int, int] | None


class ConfigOut(BaseModel):
    d1: int
    f1: int
    r_bits: int
    candidates: int
    bucket_entries: int
    seed: int
    theta: int
    max_levels: int | None
    offset_bits: int
    weight_bits: int


class StatsOut(BaseModel):
    edge_count: int
    total_weight: int
    leaf_count: int
    level_count: int
    bytes: int
    key_bytes: int
    nodes_per_level: list[int]
    utilization_per_level: list[float]
    overflow_blocks: int
    spill_entries: int
    saturated: bool
    span: tuple[int, int] | None
    span_per_leaf: float
    finalized: bool


class ErrorOut(BaseModel):
    error: str
    detail: str
