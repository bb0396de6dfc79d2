"""Raster and mask helpers.

Images are ``(H, W, 3)`` uint8 arrays, masks are ``(H, W)`` bool arrays.
"""

from __future__ import annotations

import base64
import io
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DimensionMismatch, EmptyMask


def as_image(arr) -> np.ndarray:
    a = np.asarray(arr)
    if a.ndim == 2:
        a = np.repeat(a[:, :, None], 3, axis=2)
    if a.ndim != 3 or a.shape[2] not in (3, 4):
        raise DimensionMismatch(f"expected an (H, W, 3) image, got shape {a.shape}")
    return np.ascontiguousarray(a[:, :, :3], dtype=np.uint8)


def as_mask(arr) -> np.ndarray:
    a = np.asarray(arr)
    if a.ndim == 3:
        a = a.any(axis=2)
    if a.ndim != 2:
        raise DimensionMismatch(f"expected an (H, W) mask, got shape {a.shape}")
    return a.astype(bool)


def check_mask(image: np.ndarray, mask: np.ndarray) -> None:
    if mask.shape != image.shape[:2]:
        raise DimensionMismatch(f"mask {mask.shape} does not match image {image.shape[:2]}")
    if not mask.any():
        raise EmptyMask("mask has no foreground pixels")


def bbox(mask: np.ndarray) -> tuple[int, int, int, int]:
    """Tight bounding box as ``(top, left, bottom, right)``, bottom/right exclusive."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        raise EmptyMask("mask has no foreground pixels")
    return int(rows[0]), int(cols[0]), int(rows[-1]) + 1, int(cols[-1]) + 1


def iou(a: np.ndarray, b: np.ndarray) -> float:
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(a, b).sum() / union)


def encode_png(arr: np.ndarray) -> bytes:
    a = np.asarray(arr)
    if a.dtype == bool:
        img = Image.fromarray(a.astype(np.uint8) * 255, mode="L")
    else:
        img = Image.fromarray(a.astype(np.uint8))
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as img:
        img.load()
        if img.mode in ("L", "1", "P", "LA", "I", "I;16"):
            if img.mode == "P":
                return np.asarray(img.convert("RGB"))
            return np.asarray(img.convert("L"))
        return np.asarray(img.convert("RGB"))


def image_to_b64(image: np.ndarray) -> str:
    return base64.b64encode(encode_png(image)).decode("ascii")


def mask_to_b64(mask: np.ndarray) -> str:
    return base64.b64encode(encode_png(mask.astype(bool))).decode("ascii")


def image_from_b64(text: str) -> np.ndarray:
    return as_image(decode_png(base64.b64decode(text)))


def mask_from_b64(text: str) -> np.ndarray:
    return as_mask(decode_png(base64.b64decode(text)) > 127)


def save_image(path: str | Path, image: np.ndarray) -> None:
    Path(path).write_bytes(encode_png(image))


def save_mask(path: str | Path, mask: np.ndarray) -> None:
    Path(path).write_bytes(encode_png(mask.astype(bool)))


def load_image(path: str | Path) -> np.ndarray:
    return as_image(decode_png(Path(path).read_bytes()))


def load_mask(path: str | Path) -> np.ndarray:
    return as_mask(decode_png(Path(path).read_bytes()) > 127)
