"""Element-level edit operations on blob scenes.

Each edit is a value (kind + target + payload) with a flat JSON wire shape,
e.g. {"kind": "translate", "target_id": "b1", "dx": 0.1, "dy": 0.0}.
Applying an edit returns a new scene; untouched entries are carried over
as the same objects, so locality is bit-exact by construction.

Edits act on the stored ellipse form and re-derive the Gaussian at the
scene's confidence level, which keeps translate/scale/rotate composition
exact in parameter space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from blobforge.blob import BlobEllipse, DomainError
from blobforge.fields import BlobEntry, BlobScene

__all__ = ["EDIT_KINDS", "EditOp", "apply_edit"]

EDIT_KINDS = ("add", "remove", "translate", "scale", "rotate", "replace")

# payload keys allowed per kind (required, optional)
_PAYLOAD_KEYS = {
    "add": ({"entry"}, {"index"}),
    "remove": (set(), set()),
    "translate": ({"dx", "dy"}, set()),
    "scale": ({"sa", "sb"}, set()),
    "rotate": ({"dtheta"}, set()),
    "replace": (set(), {"feature", "ellipse"}),
}

_ENTRY_KEYS = ({"id", "ellipse"}, {"feature", "label", "gaussian"})


def _check_finite(payload: dict, keys: "tuple[str, ...]") -> None:
    for k in keys:
        v = payload[k]
        if not isinstance(v, (int, float)) or not math.isfinite(v):
            raise DomainError(f"edit payload field {k!r} must be a finite number, got {v!r}")


def _check_entry_dict(d: object) -> None:
    if not isinstance(d, dict):
        raise DomainError("add payload 'entry' must be an object")
    required, optional = _ENTRY_KEYS
    missing = required - set(d)
    extra = set(d) - required - optional
    if missing or extra:
        raise DomainError(f"bad entry object: missing {sorted(missing)}, unexpected {sorted(extra)}")
    if not isinstance(d["id"], str) or not d["id"]:
        raise DomainError("entry id must be a non-empty string")
    BlobEllipse.from_json_dict(d["ellipse"])  # validates geometry


@dataclass(frozen=True, eq=False)
class EditOp:
    """One edit: kind, target (absent for add), and kind-specific payload."""

    kind: str
    target_id: "str | None"
    payload: dict

    def __post_init__(self) -> None:
        if self.kind not in EDIT_KINDS:
            raise DomainError(f"unknown edit kind {self.kind!r}")
        required, optional = _PAYLOAD_KEYS[self.kind]
        keys = set(self.payload)
        missing = required - keys
        extra = keys - required - optional
        if missing or extra:
            raise DomainError(
                f"{self.kind} payload: missing {sorted(missing)}, unexpected {sorted(extra)}"
            )
        if self.kind == "add":
            if self.target_id is not None:
                raise DomainError("add does not take a target_id")
            _check_entry_dict(self.payload["entry"])
            idx = self.payload.get("index")
            if idx is not None and (not isinstance(idx, int) or isinstance(idx, bool)):
                raise DomainError(f"add index must be an integer, got {idx!r}")
        else:
            if not isinstance(self.target_id, str) or not self.target_id:
                raise DomainError(f"{self.kind} requires a target_id")
        if self.kind == "translate":
            _check_finite(self.payload, ("dx", "dy"))
        elif self.kind == "scale":
            _check_finite(self.payload, ("sa", "sb"))
            if self.payload["sa"] <= 0 or self.payload["sb"] <= 0:
                raise DomainError("scale factors must be > 0")
        elif self.kind == "rotate":
            _check_finite(self.payload, ("dtheta",))
        elif self.kind == "replace":
            if not self.payload:
                raise DomainError("replace needs a new feature and/or ellipse")
            if "ellipse" in self.payload:
                BlobEllipse.from_json_dict(self.payload["ellipse"])
            if "feature" in self.payload and not isinstance(self.payload["feature"], (list, tuple)):
                raise DomainError("replace feature must be a list of numbers")

    # -- constructors ------------------------------------------------------

    @classmethod
    def translate(cls, target_id: str, dx: float, dy: float) -> "EditOp":
        return cls("translate", target_id, {"dx": float(dx), "dy": float(dy)})

    @classmethod
    def scale(cls, target_id: str, sa: float, sb: float) -> "EditOp":
        return cls("scale", target_id, {"sa": float(sa), "sb": float(sb)})

    @classmethod
    def rotate(cls, target_id: str, dtheta: float) -> "EditOp":
        return cls("rotate", target_id, {"dtheta": float(dtheta)})

    @classmethod
    def remove(cls, target_id: str) -> "EditOp":
        return cls("remove", target_id, {})

    @classmethod
    def add(cls, entry: "BlobEntry | dict", index: "int | None" = None) -> "EditOp":
        if isinstance(entry, BlobEntry):
            entry = {
                "id": entry.id,
                "label": entry.label,
                "feature": list(entry.feature),
                "ellipse": entry.ellipse.to_json_dict(),
            }
        payload: dict = {"entry": entry}
        if index is not None:
            payload["index"] = index
        return cls("add", None, payload)

    @classmethod
    def replace(
        cls,
        target_id: str,
        feature: "list[float] | tuple[float, ...] | None" = None,
        ellipse: "BlobEllipse | dict | None" = None,
    ) -> "EditOp":
        payload: dict = {}
        if feature is not None:
            payload["feature"] = [float(f) for f in feature]
        if ellipse is not None:
            payload["ellipse"] = ellipse.to_json_dict() if isinstance(ellipse, BlobEllipse) else ellipse
        return cls("replace", target_id, payload)

    # -- wire format -------------------------------------------------------

    def to_json_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.target_id is not None:
            d["target_id"] = self.target_id
        d.update(self.payload)
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "EditOp":
        if not isinstance(d, dict) or "kind" not in d:
            raise DomainError("edit must be an object with a 'kind' field")
        payload = {k: v for k, v in d.items() if k not in ("kind", "target_id")}
        return cls(d["kind"], d.get("target_id"), payload)


def apply_edit(scene: BlobScene, op: EditOp) -> BlobScene:
    """Apply one edit, returning a new scene.

    Non-target entries are the same objects as in the input scene. Unknown
    target ids raise KeyError; edits that would produce invalid geometry
    (non-positive axis, non-finite center) raise DomainError.
    """
    if op.kind == "add":
        d = op.payload["entry"]
        entry = BlobEntry.create(
            d["id"],
            BlobEllipse.from_json_dict(d["ellipse"]),
            tuple(float(f) for f in d.get("feature", ())),
            d.get("label", ""),
            p=scene.confidence,
        )
        idx = op.payload.get("index")
        if idx is None:
            idx = len(scene.blobs)
        if not 0 <= idx <= len(scene.blobs):
            raise DomainError(f"add index {idx} out of range 0..{len(scene.blobs)}")
        blobs = scene.blobs[:idx] + (entry,) + scene.blobs[idx:]
        return BlobScene(blobs, scene.width, scene.height, scene.confidence)

    i = scene.index_of(op.target_id)
    if op.kind == "remove":
        blobs = scene.blobs[:i] + scene.blobs[i + 1 :]
        return BlobScene(blobs, scene.width, scene.height, scene.confidence)

    b = scene.blobs[i]
    e = b.ellipse
    feature = b.feature
    if op.kind == "translate":
        e = BlobEllipse(e.cx + op.payload["dx"], e.cy + op.payload["dy"], e.a, e.b, e.theta)
    elif op.kind == "scale":
        e = BlobEllipse(e.cx, e.cy, e.a * op.payload["sa"], e.b * op.payload["sb"], e.theta)
    elif op.kind == "rotate":
        e = BlobEllipse(e.cx, e.cy, e.a, e.b, e.theta + op.payload["dtheta"])
    else:  # replace
        if "ellipse" in op.payload:
            e = BlobEllipse.from_json_dict(op.payload["ellipse"])
        if "feature" in op.payload:
            feature = tuple(float(f) for f in op.payload["feature"])
    entry = BlobEntry.create(b.id, e, feature, b.label, p=scene.confidence)
    blobs = scene.blobs[:i] + (entry,) + scene.blobs[i + 1 :]
    return BlobScene(blobs, scene.width, scene.height, scene.confidence)
