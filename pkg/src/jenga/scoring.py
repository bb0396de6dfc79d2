"""Crop extraction, embedding similarity and the diversity score.

The diversity score of an object is one minus the product of two mean
similarities between its original crop and N counterfactual crops (inpaintings
of the same region), one mean per embedding slot:

    S  semantic-global embedder (a CLIP-like role)
    V  visual-dense embedder (a DINO-like role)

A high score means the region is easily filled by something else, so the
object is not holding anything up and can go first.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from PIL import Image

from .errors import DimensionMismatch, EmptyMask, EmptySampleSet, SlotMismatch
from .imaging import bbox, check_mask

DEFAULT_CROP_RESOLUTION = 224
UNIT_NORM_TOL = 1e-6


class Slot(str, enum.Enum):
    S = "S"
    V = "V"


class Normalization(str, enum.Enum):
    MULTIPLY = "multiply"
    DIVIDE_CLAMPED = "divide-clamped"
    NONE = "none"


@dataclass(frozen=True)
class Bounds:
    """Half-open pixel rectangle ``[top, bottom) x [left, right)``.

    May extend past the image when the image is too small to hold a square
    of the required side; pixels out there read as zero.
    """

    top: int
    left: int
    bottom: int
    right: int

    @property
    def height(self) -> int:
        return self.bottom - self.top

    @property
    def width(self) -> int:
        return self.right - self.left

    @property
    def area(self) -> int:
        return self.height * self.width

    def to_dict(self) -> dict:
        return {"top": self.top, "left": self.left, "bottom": self.bottom, "right": self.right}


@dataclass(frozen=True, eq=False)
class SquareCrop:
    pixels: np.ndarray  # (R, R, 3) uint8, zero outside ``mask``
    mask: np.ndarray  # (R, R) bool, the object mask resampled into the crop
    area_fraction: float
    source_bounds: Bounds

    @property
    def resolution(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True, eq=False)
class Embedding:
    values: np.ndarray
    slot: Slot

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "slot", Slot(self.slot))

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class DiversityScore:
    value: float
    per_sample_sim_s: tuple[float, ...]
    per_sample_sim_v: tuple[float, ...]
    n: int
    area_fraction: float
    slots: tuple[str, ...] = ("S", "V")
    normalization: str = Normalization.MULTIPLY.value

    def recompute(self) -> float:
        return diversity_from_similarities(self.per_sample_sim_s, self.per_sample_sim_v)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "n": self.n,
            "area_fraction": self.area_fraction,
            "per_sample_sim_s": list(self.per_sample_sim_s),
            "per_sample_sim_v": list(self.per_sample_sim_v),
            "slots": list(self.slots),
            "normalization": self.normalization,
        }


@dataclass(frozen=True)
class PairwiseDecision:
    first: str
    second: str
    score_first: DiversityScore
    score_second: DiversityScore
    tie_broken: bool


def square_bounds(mask: np.ndarray) -> Bounds:
    """Tight box of ``mask`` grown to a square.

    The shorter side is grown symmetrically about the box centre (the odd
    pixel goes after), then the square is shifted back inside the image if it
    sticks out. If the image itself is narrower than the square, the square is
    centred on the box along that axis and hangs over both borders.
    """
    top, left, bottom, right = bbox(mask)
    img_h, img_w = mask.shape
    side = max(bottom - top, right - left)

    def fit(lo: int, hi: int, limit: int) -> tuple[int, int]:
        extra = side - (hi - lo)
        lo -= extra // 2
        hi = lo + side
        if side >= limit:
            if side == limit:
                return 0, limit
            # square cannot fit; keep it centred on the object
            return lo, hi
        if lo < 0:
            lo, hi = 0, side
        elif hi > limit:
            lo, hi = limit - side, limit
        return lo, hi

    t, b = fit(top, bottom, img_h)
    l, r = fit(left, right, img_w)
    return Bounds(t, l, b, r)


def _window(arr: np.ndarray, bounds: Bounds) -> np.ndarray:
    """Read ``bounds`` out of ``arr`` with zero fill past the borders."""
    h, w = arr.shape[:2]
    out = np.zeros((bounds.height, bounds.width) + arr.shape[2:], dtype=arr.dtype)
    t0, l0 = max(bounds.top, 0), max(bounds.left, 0)
    b0, r0 = min(bounds.bottom, h), min(bounds.right, w)
    if b0 > t0 and r0 > l0:
        out[t0 - bounds.top:b0 - bounds.top, l0 - bounds.left:r0 - bounds.left] = arr[t0:b0, l0:r0]
    return out


def extract_crop(
    image: np.ndarray,
    mask: np.ndarray,
    resolution: int = DEFAULT_CROP_RESOLUTION,
    bounds: Bounds | None = None,
) -> SquareCrop:
    """Cut the square crop around ``mask`` and resample it to ``resolution``.

    Pixels are resampled bilinearly, the mask with nearest neighbour, and every
    crop pixel outside the resampled mask is set to zero. Passing ``bounds``
    reuses a previously computed window (counterfactual crops use the window of
    the original object).
    """
    if image.shape[:2] != mask.shape:
        raise DimensionMismatch(f"mask {mask.shape} does not match image {image.shape[:2]}")
    check_mask(image, mask)
    if bounds is None:
        bounds = square_bounds(mask)

    win_mask = _window(mask, bounds)
    inside = int(win_mask.sum())
    if inside == 0:
        raise EmptyMask("mask has no pixels inside the crop window")
    area_fraction = inside / bounds.area

    win_px = _window(image, bounds)
    win_px = np.where(win_mask[:, :, None], win_px, 0).astype(np.uint8)
    size = (resolution, resolution)
    px = np.asarray(Image.fromarray(win_px).resize(size, Image.BILINEAR))
    m = np.asarray(Image.fromarray(win_mask.astype(np.uint8) * 255).resize(size, Image.NEAREST)) > 127
    px = np.where(m[:, :, None], px, 0).astype(np.uint8)
    return SquareCrop(pixels=px, mask=m, area_fraction=float(area_fraction), source_bounds=bounds)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def normalized_similarity(
    a: Embedding,
    b: Embedding,
    area_fraction: float,
    mode: Normalization | str = Normalization.MULTIPLY,
) -> float:
    """Cosine mapped affinely to [0, 1], then scaled by the crop's area fraction."""
    if a.slot != b.slot:
        raise SlotMismatch(f"cannot compare slot {a.slot.value} with slot {b.slot.value}")
    if a.dim != b.dim:
        raise DimensionMismatch(f"embedding dims differ: {a.dim} vs {b.dim}")
    if not 0.0 < area_fraction <= 1.0:
        raise ValueError(f"area_fraction must be in (0, 1], got {area_fraction}")
    sim = (cosine(a.values, b.values) + 1.0) / 2.0
    mode = Normalization(mode)
    if mode is Normalization.MULTIPLY:
        sim *= area_fraction
    elif mode is Normalization.DIVIDE_CLAMPED:
        sim /= area_fraction
    return _clamp01(sim)


def _mean(xs: Sequence[float]) -> float:
    return sum(xs) / len(xs)


def diversity_from_similarities(sim_s: Sequence[float], sim_v: Sequence[float]) -> float:
    if len(sim_s) == 0 or len(sim_v) == 0:
        raise EmptySampleSet("no counterfactual samples")
    return _clamp01(1.0 - _mean(sim_s) * _mean(sim_v))


Embedder = Callable[[SquareCrop], Embedding]


def diversity_score(
    original: SquareCrop,
    counterfactuals: Sequence[SquareCrop],
    embed_s: Embedder | None,
    embed_v: Embedder | None,
    mode: Normalization | str = Normalization.MULTIPLY,
) -> DiversityScore:
    """Score how replaceable the object in ``original`` is.

    A disabled slot (embedder ``None``) contributes a similarity of exactly 1
    per sample, so its mean drops out of the product.
    """
    n = len(counterfactuals)
    if n == 0:
        raise EmptySampleSet("no counterfactual samples")
    if embed_s is None and embed_v is None:
        raise ValueError("at least one embedding slot must be enabled")
    for c in counterfactuals:
        if c.resolution != original.resolution:
            raise DimensionMismatch("counterfactual crop resolution differs from original")
    mode = Normalization(mode)
    af = original.area_fraction

    def sims(embed: Embedder | None) -> tuple[float, ...]:
        if embed is None:
            return (1.0,) * n
        ref = embed(original)
        return tuple(normalized_similarity(ref, embed(c), af, mode) for c in counterfactuals)

    sim_s, sim_v = sims(embed_s), sims(embed_v)
    slots = tuple(s for s, e in (("S", embed_s), ("V", embed_v)) if e is not None)
    return DiversityScore(
        value=diversity_from_similarities(sim_s, sim_v),
        per_sample_sim_s=sim_s,
        per_sample_sim_v=sim_v,
        n=n,
        area_fraction=af,
        slots=slots,
        normalization=mode.value,
    )


def removal_key(score: DiversityScore, area: int, object_id: str) -> tuple:
    """Sort key putting the object to remove first at the front."""
    return (-score.value, area, object_id)


def pairwise_order(
    score_a: DiversityScore,
    score_b: DiversityScore,
    area_a: int,
    area_b: int,
    id_a: str,
    id_b: str,
) -> PairwiseDecision:
    """Decide which of two objects comes out first.

    Higher diversity goes first; an exact tie falls back to the smaller mask
    area, then the smaller identifier.
    """
    tie = score_a.value == score_b.value
    if removal_key(score_a, area_a, id_a) <= removal_key(score_b, area_b, id_b):
        return PairwiseDecision(id_a, id_b, score_a, score_b, tie)
    return PairwiseDecision(id_b, id_a, score_b, score_a, tie)
