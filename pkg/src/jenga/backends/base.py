"""Capability contracts and the suite that enforces them.

A backend is anything that can point at objects, segment from a point,
inpaint a masked region, embed a crop, remove an object and estimate depth.
Implementations only have to produce raw outputs; :class:`BackendSuite`
checks shapes, bounds and batch sizes so that every implementation is held to
the same contract.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from ..errors import EmptyMask, MalformedResponse, PartialBatch
from ..imaging import check_mask
from ..scoring import UNIT_NORM_TOL, Embedding, Slot, SquareCrop

logger = logging.getLogger(__name__)

DEFAULT_POSITIVE_PROMPT = "Full HD, 4K, high quality, high resolution, photorealistic"
DEFAULT_NEGATIVE_PROMPT = (
    "bad anatomy, bad proportions, blurry, cropped, deformed, disfigured, duplicate, "
    "error, extra limbs, gross proportions, jpeg artifacts, long neck, low quality, "
    "lowres, malformed, morbid, mutated, mutilated, out of frame, ugly, worst quality"
)

CAPABILITIES = ("point", "segment", "inpaint", "embed", "remove", "depth")


@dataclass(frozen=True)
class PointPrompt:
    x: int
    y: int
    confidence: float | None = None

    def in_bounds(self, height: int, width: int) -> bool:
        return 0 <= self.x < width and 0 <= self.y < height


@runtime_checkable
class Pointer(Protocol):
    def point(self, image: np.ndarray) -> Sequence[PointPrompt]: ...


@runtime_checkable
class Segmenter(Protocol):
    def segment(self, image: np.ndarray, prompt: PointPrompt) -> np.ndarray: ...


@runtime_checkable
class Inpainter(Protocol):
    def inpaint(self, image: np.ndarray, mask: np.ndarray, n: int, seed: int) -> Sequence[np.ndarray]: ...


@runtime_checkable
class Embedder(Protocol):
    slot: Slot
    dim: int

    def embed(self, crop: SquareCrop) -> np.ndarray: ...


@runtime_checkable
class Remover(Protocol):
    def remove(self, image: np.ndarray, mask: np.ndarray) -> np.ndarray: ...


@runtime_checkable
class DepthEstimator(Protocol):
    def depth(self, image: np.ndarray) -> np.ndarray: ...


def dedupe_points(points: Sequence[PointPrompt], radius: float) -> list[PointPrompt]:
    """Collapse points closer than ``radius``, keeping the most confident one.

    Ties in confidence keep the earlier point.
    """
    ranked = sorted(
        enumerate(points),
        key=lambda ip: (-(ip[1].confidence if ip[1].confidence is not None else 1.0), ip[0]),
    )
    kept: list[tuple[int, PointPrompt]] = []
    for idx, p in ranked:
        if all(math.hypot(p.x - q.x, p.y - q.y) > radius for _, q in kept):
            kept.append((idx, p))
    return [p for _, p in sorted(kept)]


@dataclass
class BackendSuite:
    """The seven capability handles used by the engine.

    ``strict_inpaint`` makes :meth:`inpaint` reject any sample that changes a
    pixel outside the mask; synthetic backends are held to that, services are
    not.
    """

    pointer: Pointer
    segmenter: Segmenter
    inpainter: Inpainter
    embedder_s: Embedder
    embedder_v: Embedder
    remover: Remover
    depth_estimator: DepthEstimator
    provenance: dict[str, str] = field(default_factory=dict)
    dedupe_fraction: float = 0.01
    strict_inpaint: bool = False
    dilation: int = 0

    def __post_init__(self):
        for name in ("pointer", "segmenter", "inpainter", "embedder_s", "embedder_v", "remover", "depth_estimator"):
            if getattr(self, name) is None:
                raise ValueError(f"backend suite is missing {name}")
        if Slot(self.embedder_s.slot) is not Slot.S or Slot(self.embedder_v.slot) is not Slot.V:
            raise ValueError("embedder_s/embedder_v must declare slots S and V")
        for cap in CAPABILITIES:
            self.provenance.setdefault(cap, "unspecified")

    def point(self, image: np.ndarray) -> list[PointPrompt]:
        h, w = image.shape[:2]
        raw = list(self.pointer.point(image))
        for p in raw:
            if not p.in_bounds(h, w):
                raise MalformedResponse(f"point ({p.x}, {p.y}) outside {w}x{h} image")
            if p.confidence is not None and not 0.0 <= p.confidence <= 1.0:
                raise MalformedResponse(f"point confidence {p.confidence} outside [0, 1]")
        radius = self.dedupe_fraction * math.hypot(h, w)
        return dedupe_points(raw, radius)

    def segment(self, image: np.ndarray, prompt: PointPrompt) -> np.ndarray:
        h, w = image.shape[:2]
        if not prompt.in_bounds(h, w):
            raise MalformedResponse(f"prompt ({prompt.x}, {prompt.y}) outside {w}x{h} image")
        mask = np.asarray(self.segmenter.segment(image, prompt)).astype(bool)
        if mask.shape != (h, w):
            raise MalformedResponse(f"segment returned mask {mask.shape} for image {(h, w)}")
        if not mask.any():
            raise EmptyMask(f"no object at ({prompt.x}, {prompt.y})")
        return mask

    def _dilate(self, mask: np.ndarray) -> np.ndarray:
        if self.dilation <= 0:
            return mask
        from scipy.ndimage import binary_dilation

        return binary_dilation(mask, iterations=self.dilation)

    def inpaint(self, image: np.ndarray, mask: np.ndarray, n: int, seed: int) -> list[np.ndarray]:
        if n < 1:
            raise ValueError("n must be >= 1")
        check_mask(image, mask)
        mask = self._dilate(mask)
        images = [np.asarray(im, dtype=np.uint8) for im in self.inpainter.inpaint(image, mask, n, seed)]
        for im in images:
            if im.shape != image.shape:
                raise MalformedResponse(f"inpaint returned image {im.shape} for input {image.shape}")
            if self.strict_inpaint and not np.array_equal(im[~mask], image[~mask]):
                raise MalformedResponse("inpainting changed pixels outside the mask")
        if len(images) < n:
            raise PartialBatch(images, n)
        return images[:n]

    def embedder(self, slot: Slot | str) -> Embedder:
        return self.embedder_s if Slot(slot) is Slot.S else self.embedder_v

    def embed(self, crop: SquareCrop, slot: Slot | str) -> Embedding:
        slot = Slot(slot)
        emb = self.embedder(slot)
        v = np.asarray(emb.embed(crop), dtype=np.float64).ravel()
        if v.shape[0] != emb.dim:
            raise MalformedResponse(f"slot {slot.value} embedder returned dim {v.shape[0]}, declared {emb.dim}")
        norm = float(np.linalg.norm(v))
        if not math.isfinite(norm) or norm == 0.0:
            raise MalformedResponse(f"slot {slot.value} embedder returned a degenerate vector")
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            v = v / norm
        return Embedding(v, slot)

    def remove(self, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
        check_mask(image, mask)
        out = np.asarray(self.remover.remove(image, self._dilate(mask)), dtype=np.uint8)
        if out.shape != image.shape:
            raise MalformedResponse(f"remove returned image {out.shape} for input {image.shape}")
        return out

    def depth(self, image: np.ndarray) -> np.ndarray:
        d = np.asarray(self.depth_estimator.depth(image), dtype=np.float64)
        if d.shape != image.shape[:2]:
            raise MalformedResponse(f"depth map {d.shape} does not match image {image.shape[:2]}")
        return d

    def describe(self) -> dict[str, str]:
        return dict(self.provenance)
