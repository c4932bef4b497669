"""Serialization for dense scalar fields.

Two surfaces: a raw binary format for lossless-enough exchange (float32),
and an 8-bit grayscale PNG preview with the normalization constant kept
in a sidecar so previews stay comparable across fields.

Raw format, byte-exact:

    BLOBF1\\n
    {width} {height} {kind}\\n
    <width*height little-endian float32, row-major>
"""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np
from PIL import Image

from blobforge.blob import DomainError
from blobforge.fields import FIELD_KINDS, FieldMap

__all__ = [
    "FieldFormatError",
    "field_to_bytes",
    "field_from_bytes",
    "save_field",
    "load_field",
    "preview_png",
    "save_preview",
]

_MAGIC = b"BLOBF1\n"


class FieldFormatError(DomainError):
    """Raw field bytes that do not parse (bad magic, header, or size)."""


def field_to_bytes(fm: FieldMap) -> bytes:
    header = _MAGIC + f"{fm.width} {fm.height} {fm.kind}\n".encode("ascii")
    return header + np.ascontiguousarray(fm.values, dtype="<f4").tobytes()


def field_from_bytes(data: bytes) -> FieldMap:
    if not data.startswith(_MAGIC):
        raise FieldFormatError("bad magic, expected BLOBF1")
    nl = data.find(b"\n", len(_MAGIC))
    if nl < 0:
        raise FieldFormatError("truncated header")
    try:
        w_str, h_str, kind = data[len(_MAGIC) : nl].decode("ascii").split(" ")
        width, height = int(w_str), int(h_str)
    except (UnicodeDecodeError, ValueError) as exc:
        raise FieldFormatError(f"malformed header line: {exc}") from exc
    if kind not in FIELD_KINDS:
        raise FieldFormatError(f"unknown field kind {kind!r}")
    if width < 1 or height < 1:
        raise FieldFormatError(f"bad dimensions {width}x{height}")
    payload = data[nl + 1 :]
    expected = width * height * 4
    if len(payload) != expected:
        raise FieldFormatError(f"payload is {len(payload)} bytes, expected {expected}")
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(height, width)
    return FieldMap(width, height, values, kind)


def save_field(fm: FieldMap, path: "str | Path") -> None:
    Path(path).write_bytes(field_to_bytes(fm))


def load_field(path: "str | Path") -> FieldMap:
    return field_from_bytes(Path(path).read_bytes())


def preview_png(values: "FieldMap | np.ndarray") -> tuple[bytes, float]:
    """Render a field as an 8-bit grayscale PNG, max-normalized.

    Pixel = round(255 * v / v_max). Returns (png_bytes, v_max); an all-zero
    field maps to a black image with v_max = 0.
    """
    v = values.values if isinstance(values, FieldMap) else np.asarray(values, dtype=np.float64)
    if v.ndim != 2:
        raise DomainError(f"preview expects a 2-D field, got shape {v.shape}")
    v_max = float(v.max()) if v.size else 0.0
    if v_max <= 0.0:
        pixels = np.zeros(v.shape, dtype=np.uint8)
        v_max = 0.0
    else:
        pixels = np.clip(np.round(255.0 * v / v_max), 0, 255).astype(np.uint8)
    img = Image.fromarray(pixels, mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue(), v_max


def save_preview(values: "FieldMap | np.ndarray", png_path: "str | Path") -> float:
    """Write the PNG plus a sidecar JSON holding the normalization constant.

    The sidecar sits next to the PNG with a .json suffix and contains
    {"v_max": <float>}. Returns v_max.
    """
    png_path = Path(png_path)
    data, v_max = preview_png(values)
    png_path.write_bytes(data)
    png_path.with_suffix(".json").write_text(json.dumps({"v_max": v_max}) + "\n")
    return v_max
