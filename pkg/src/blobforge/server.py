"""HTTP facade over the scene engine.

Scenes live in a SceneStore keyed by caller-chosen ids.  Every accepted
mutation bumps the scene's revision; mutations to one scene serialize on a
per-scene lock, and with a data directory configured each mutation is
persisted by writing a temp file and renaming it into place, so readers
never observe partial documents.  Renders are pure functions of
(scene revision, query params): the same request against the same revision
returns byte-identical payloads.
"""

from __future__ import annotations

import io
import json
import math
import os
import re
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Form, HTTPException, Query, Response, UploadFile
from PIL import Image

from blobforge import __version__
from blobforge.augment import AugmentConfig
from blobforge.blob import BlobEllipse, ConfidenceLevel, DomainError, ellipse_to_gaussian
from blobforge.curation import BlobRecord, CurationRules, curate_record
from blobforge.edits import EDIT_KINDS, EditOp, apply_edit
from blobforge.fieldio import field_to_bytes, preview_png
from blobforge.fields import (
    BlobEntry,
    BlobScene,
    FieldMap,
    blob_mask,
    composed_opacities,
    coverage_map,
    make_grid,
    mahalanobis_map,
    opacity_map,
    scene_feature_map,
)
from blobforge.samples import PerturbConfig, TrainingSample, archive_sample, build_training_sample
from blobforge.schemas import (
    BlobModel,
    CurateOutcome,
    EditRequest,
    EllipseModel,
    HealthResponse,
    SceneCreate,
    SceneDoc,
)

__all__ = ["SceneStore", "SceneExists", "UnknownScene", "StaleRevision", "create_app"]

_ID_PATTERN = re.compile(r"^[A-Za-z0-9_-]{1,64}$")
_RENDER_KINDS = ("opacity", "composed", "mask", "feature-preview")
_MAX_RENDER_DIM = 2048


class SceneExists(ValueError):
    pass


class UnknownScene(KeyError):
    pass


class StaleRevision(ValueError):
    pass


@dataclass
class _Slot:
    scene: BlobScene
    revision: int

    def __post_init__(self) -> None:
        self.lock = threading.Lock()


def scene_to_doc(scene_id: str, scene: BlobScene, revision: int) -> dict:
    return {
        "id": scene_id,
        "revision": revision,
        "width": scene.width,
        "height": scene.height,
        "confidence": scene.confidence.p,
        "blobs": [
            {
                "id": b.id,
                "ellipse": b.ellipse.to_json_dict(),
                "feature": list(b.feature),
                "label": b.label,
            }
            for b in scene.blobs
        ],
    }


def scene_from_doc(doc: dict) -> BlobScene:
    p = ConfidenceLevel(float(doc["confidence"]))
    blobs = [
        BlobEntry.create(
            id=b["id"],
            ellipse=BlobEllipse.from_json_dict(b["ellipse"]),
            feature=b.get("feature", ()),
            label=b.get("label", ""),
            p=p,
        )
        for b in doc["blobs"]
    ]
    return BlobScene(tuple(blobs), int(doc["width"]), int(doc["height"]), p)


class SceneStore:
    """id -> (scene, revision) map with per-scene write serialization."""

    def __init__(self, data_dir: "str | Path | None" = None):
        self._dir = Path(data_dir) if data_dir else None
        self._mu = threading.Lock()
        self._slots: dict[str, _Slot] = {}
        if self._dir is not None:
            self._dir.mkdir(parents=True, exist_ok=True)
            for path in sorted(self._dir.glob("*.json")):
                doc = json.loads(path.read_text())
                self._slots[doc["id"]] = _Slot(scene_from_doc(doc), int(doc["revision"]))

    def _slot(self, scene_id: str) -> _Slot:
        with self._mu:
            slot = self._slots.get(scene_id)
        if slot is None:
            raise UnknownScene(scene_id)
        return slot

    def ids(self) -> list[str]:
        with self._mu:
            return sorted(self._slots)

    def create(self, scene_id: str, scene: BlobScene) -> int:
        slot = _Slot(scene, 1)
        with self._mu:
            if scene_id in self._slots:
                raise SceneExists(scene_id)
            self._slots[scene_id] = slot
        with slot.lock:
            self._persist(scene_id, slot)
        return 1

    def get(self, scene_id: str) -> tuple[BlobScene, int]:
        slot = self._slot(scene_id)
        with slot.lock:
            return slot.scene, slot.revision

    def replace(self, scene_id: str, scene: BlobScene) -> int:
        slot = self._slot(scene_id)
        with slot.lock:
            slot.scene = scene
            slot.revision += 1
            self._persist(scene_id, slot)
            return slot.revision

    def apply(
        self, scene_id: str, op: EditOp, expected_revision: "int | None" = None
    ) -> tuple[BlobScene, int]:
        """Apply one edit; the revision only advances if the edit is accepted."""
        slot = self._slot(scene_id)
        with slot.lock:
            if expected_revision is not None and expected_revision != slot.revision:
                raise StaleRevision(
                    f"precondition revision {expected_revision}, scene is at {slot.revision}"
                )
            slot.scene = apply_edit(slot.scene, op)
            slot.revision += 1
            self._persist(scene_id, slot)
            return slot.scene, slot.revision

    def delete(self, scene_id: str) -> None:
        with self._mu:
            slot = self._slots.pop(scene_id, None)
        if slot is None:
            raise UnknownScene(scene_id)
        if self._dir is not None:
            (self._dir / f"{scene_id}.json").unlink(missing_ok=True)

    def _persist(self, scene_id: str, slot: _Slot) -> None:
        if self._dir is None:
            return
        doc = scene_to_doc(scene_id, slot.scene, slot.revision)
        tmp = self._dir / f".{scene_id}.json.tmp"
        tmp.write_text(json.dumps(doc, sort_keys=True))
        os.replace(tmp, self._dir / f"{scene_id}.json")


def _doc_model(scene_id: str, scene: BlobScene, revision: int) -> SceneDoc:
    return SceneDoc(**scene_to_doc(scene_id, scene, revision))


def _scene_from_create(body: SceneCreate) -> BlobScene:
    doc = {
        "confidence": body.confidence,
        "width": body.width,
        "height": body.height,
        "blobs": [b.model_dump() for b in body.blobs],
    }
    return scene_from_doc(doc)


def _check_scene_id(scene_id: str) -> None:
    if not _ID_PATTERN.match(scene_id):
        raise HTTPException(422, detail="scene id must match [A-Za-z0-9_-]{1,64}")


def _render_field(scene: BlobScene, kind: str, w: int, h: int, p: float, blob: "str | None"):
    """Produce (values, wire_kind) for one render request.

    Scene-level semantics: opacity -> coverage (1 - background
    transmittance), composed -> sum of depth-attenuated opacities, mask ->
    union of confidence masks, feature-preview -> L2 norm of the splatted
    feature field.  With blob=<id> the same kinds apply to that single
    blob.  Wire kinds follow value ranges: scene-level opacity/composed
    are [0, 1] fields, feature norms are nonnegative "distance" fields.
    """
    grid = make_grid(w, h)
    if blob is not None:
        try:
            idx = scene.index_of(blob)
        except KeyError:
            raise HTTPException(404, detail=f"unknown blob {blob!r}")
        entry = scene.blobs[idx]
        if kind == "opacity":
            return opacity_map(mahalanobis_map(grid, entry.gaussian)).values, "opacity"
        if kind == "composed":
            return composed_opacities(scene, grid)[idx].values, "composed-opacity"
        if kind == "mask":
            return blob_mask(entry.gaussian, grid, p).values, "mask"
        oc = composed_opacities(scene, grid)[idx]
        feat = np.asarray(entry.feature, dtype=float)
        norm = math.sqrt(float(feat @ feat)) if feat.size else 0.0
        return norm * oc.values, "distance"
    if not scene.blobs:
        return np.zeros((h, w)), "mask" if kind == "mask" else "opacity"
    if kind == "opacity":
        return coverage_map(scene, grid), "opacity"
    if kind == "composed":
        total = np.zeros((h, w))
        for oc in composed_opacities(scene, grid):
            total += oc.values
        return total, "opacity"
    if kind == "mask":
        union = np.zeros((h, w))
        for entry in scene.blobs:
            union = np.maximum(union, blob_mask(entry.gaussian, grid, p).values)
        return union, "mask"
    fm = scene_feature_map(scene, grid)
    return np.sqrt(np.sum(fm.values * fm.values, axis=2)), "distance"


async def _read_upload(upload: UploadFile) -> bytes:
    data = await upload.read()
    if not data:
        raise HTTPException(422, detail=f"empty upload {upload.filename!r}")
    return data


def _decode_image(data: bytes) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(data)) as im:
            return np.asarray(im.convert("RGB"))
    except Exception:
        raise HTTPException(422, detail="image upload is not a decodable image")


def _decode_mask(data: bytes) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(data)) as im:
            return np.asarray(im.convert("L")) > 127
    except Exception:
        raise HTTPException(422, detail="mask upload is not a decodable image")


def create_app(data_dir: "str | Path | None" = None) -> FastAPI:
    """Build the service; `data_dir` falls back to $BLOBFORGE_DATA_DIR."""
    if data_dir is None:
        data_dir = os.environ.get("BLOBFORGE_DATA_DIR") or None
    store = SceneStore(data_dir)
    app = FastAPI(title="blobforge", version=__version__)
    app.state.store = store

    @app.get("/healthz", response_model=HealthResponse)
    def healthz() -> HealthResponse:
        return HealthResponse()

    @app.get("/schema")
    def schema() -> dict:
        return {
            "scene": SceneDoc.model_json_schema(),
            "scene_create": SceneCreate.model_json_schema(),
            "edit": EditRequest.model_json_schema(),
            "curate": CurateOutcome.model_json_schema(),
            "edit_kinds": list(EDIT_KINDS),
        }

    @app.get("/scenes")
    def list_scenes() -> dict:
        return {"scenes": store.ids()}

    @app.post("/scenes/{scene_id}", response_model=SceneDoc, status_code=201)
    def create_scene(scene_id: str, body: SceneCreate) -> SceneDoc:
        _check_scene_id(scene_id)
        try:
            scene = _scene_from_create(body)
        except DomainError as err:
            raise HTTPException(422, detail=str(err))
        try:
            revision = store.create(scene_id, scene)
        except SceneExists:
            raise HTTPException(409, detail=f"scene {scene_id!r} already exists")
        return _doc_model(scene_id, scene, revision)

    @app.get("/scenes/{scene_id}", response_model=SceneDoc)
    def get_scene(scene_id: str) -> SceneDoc:
        try:
            scene, revision = store.get(scene_id)
        except UnknownScene:
            raise HTTPException(404, detail=f"unknown scene {scene_id!r}")
        return _doc_model(scene_id, scene, revision)

    @app.put("/scenes/{scene_id}", response_model=SceneDoc)
    def replace_scene(scene_id: str, body: SceneCreate) -> SceneDoc:
        try:
            scene = _scene_from_create(body)
        except DomainError as err:
            raise HTTPException(422, detail=str(err))
        try:
            revision = store.replace(scene_id, scene)
        except UnknownScene:
            raise HTTPException(404, detail=f"unknown scene {scene_id!r}")
        return _doc_model(scene_id, scene, revision)

    @app.delete("/scenes/{scene_id}", status_code=204)
    def delete_scene(scene_id: str) -> Response:
        try:
            store.delete(scene_id)
        except UnknownScene:
            raise HTTPException(404, detail=f"unknown scene {scene_id!r}")
        return Response(status_code=204)

    @app.post("/scenes/{scene_id}/edit", response_model=SceneDoc)
    def edit_scene(scene_id: str, body: EditRequest) -> SceneDoc:
        try:
            op = EditOp.from_json_dict(body.op)
        except DomainError as err:
            raise HTTPException(422, detail=str(err))
        try:
            scene, revision = store.apply(scene_id, op, body.revision)
        except UnknownScene:
            raise HTTPException(404, detail=f"unknown scene {scene_id!r}")
        except StaleRevision as err:
            raise HTTPException(409, detail=str(err))
        except KeyError as err:
            raise HTTPException(422, detail=f"unknown target blob {err.args[0]!r}")
        except DomainError as err:
            raise HTTPException(422, detail=str(err))
        return _doc_model(scene_id, scene, revision)

    @app.get("/scenes/{scene_id}/render")
    def render_scene(
        scene_id: str,
        kind: str = Query("composed"),
        w: "int | None" = Query(None),
        h: "int | None" = Query(None),
        p: "float | None" = Query(None),
        blob: "str | None" = Query(None),
        fmt: str = Query("png", alias="format"),
    ) -> Response:
        try:
            scene, revision = store.get(scene_id)
        except UnknownScene:
            raise HTTPException(404, detail=f"unknown scene {scene_id!r}")
        if kind not in _RENDER_KINDS:
            raise HTTPException(400, detail=f"kind must be one of {_RENDER_KINDS}")
        if fmt not in ("png", "field"):
            raise HTTPException(400, detail="format must be png or field")
        width = scene.width if w is None else w
        height = scene.height if h is None else h
        if not (1 <= width <= _MAX_RENDER_DIM and 1 <= height <= _MAX_RENDER_DIM):
            raise HTTPException(400, detail=f"render dims must be in [1, {_MAX_RENDER_DIM}]")
        conf = scene.confidence.p if p is None else p
        if not 0.0 < conf < 1.0:
            raise HTTPException(400, detail="p must be in (0, 1)")
        values, wire_kind = _render_field(scene, kind, width, height, conf, blob)
        headers = {"X-Scene-Revision": str(revision)}
        if fmt == "field":
            payload = field_to_bytes(FieldMap(width, height, values, wire_kind))
            return Response(payload, media_type="application/octet-stream", headers=headers)
        png, v_max = preview_png(values)
        headers["X-Field-Vmax"] = repr(v_max)
        return Response(png, media_type="image/png", headers=headers)

    @app.post("/samples")
    async def make_sample(
        image: UploadFile,
        mask: UploadFile,
        seed: int = Form(...),
        caption: str = Form(""),
        confidence: float = Form(0.95),
    ) -> Response:
        raster = _decode_image(await _read_upload(image))
        fg = _decode_mask(await _read_upload(mask))
        try:
            result = build_training_sample(
                raster,
                fg,
                PerturbConfig(seed=seed),
                AugmentConfig(),
                ConfidenceLevel(confidence),
                rules=CurationRules(),
                caption=caption,
            )
        except DomainError as err:
            raise HTTPException(422, detail=str(err))
        if not isinstance(result, TrainingSample):
            raise HTTPException(422, detail=result.reason)
        return Response(
            archive_sample(result),
            media_type="application/zip",
            headers={"Content-Disposition": "attachment; filename=sample.zip"},
        )

    @app.post("/curate", response_model=CurateOutcome)
    async def curate(
        image: UploadFile,
        mask: UploadFile,
        caption: str = Form(""),
        confidence: float = Form(0.95),
    ) -> CurateOutcome:
        raster = _decode_image(await _read_upload(image))
        fg = _decode_mask(await _read_upload(mask))
        try:
            result = curate_record(
                raster,
                fg,
                CurationRules(),
                ConfidenceLevel(confidence),
                image_ref=image.filename or "image",
                mask_ref=mask.filename or "mask",
                caption=caption,
            )
        except DomainError as err:
            raise HTTPException(422, detail=str(err))
        if not isinstance(result, BlobRecord):
            return CurateOutcome(accepted=False, reason=result.reason)
        return CurateOutcome(accepted=True, record=result.to_json_dict())

    return app
