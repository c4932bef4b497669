"""Request/response shapes for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class EllipseModel(BaseModel):
    cx: float
    cy: float
    a: float
    b: float
    theta: float


class BlobModel(BaseModel):
    id: str
    ellipse: EllipseModel
    feature: list[float] = Field(default_factory=list)
    label: str = ""


class SceneCreate(BaseModel):
    width: int
    height: int
    confidence: float = 0.95
    blobs: list[BlobModel] = Field(default_factory=list)


class SceneDoc(BaseModel):
    """The published scene document; `blobs` is the depth order, backmost first."""

    id: str
    revision: int
    width: int
    height: int
    confidence: float
    blobs: list[BlobModel]


class EditRequest(BaseModel):
    """One edit operation, optionally guarded by a revision precondition."""

    op: dict
    revision: "int | None" = None


class CurateOutcome(BaseModel):
    accepted: bool
    reason: "str | None" = None
    record: "dict | None" = None


class HealthResponse(BaseModel):
    status: str = "ok"
