"""Heuristic removal orders: top-to-bottom, small-to-large, front-to-back.

Each heuristic turns a set of object masks into a full static ordering.
"""

from __future__ import annotations

import enum
from typing import Mapping

import numpy as np

from .backends.base import BackendSuite
from .engine import EngineConfig, detect_objects
from .errors import DimensionMismatch, EmptyMask


class HeuristicName(str, enum.Enum):
    TOP_TO_BOTTOM = "top_to_bottom"
    SMALL_TO_LARGE = "small_to_large"
    FRONT_TO_BACK = "front_to_back"


def _check(masks: Mapping[str, np.ndarray]) -> None:
    if not masks:
        raise EmptyMask("no masks to order")
    for oid, m in masks.items():
        if not np.any(m):
            raise EmptyMask(f"mask {oid!r} is empty")


def _top(mask: np.ndarray, use_centroid: bool) -> float:
    rows = np.flatnonzero(mask.any(axis=1))
    if use_centroid:
        return float(np.nonzero(mask)[0].mean())
    return float(rows[0])


def top_to_bottom(masks: Mapping[str, np.ndarray], use_centroid: bool = False) -> list[str]:
    """Highest object in the image first (smallest top row; row 0 is the top).

    Ties go to the smaller area, then the smaller id. ``use_centroid`` ranks
    by mask centroid row instead of bounding-box top.
    """
    _check(masks)
    return sorted(masks, key=lambda k: (_top(masks[k], use_centroid), int(masks[k].sum()), k))


def small_to_large(masks: Mapping[str, np.ndarray]) -> list[str]:
    _check(masks)
    return sorted(masks, key=lambda k: (int(masks[k].sum()), _top(masks[k], False), k))


def front_to_back(masks: Mapping[str, np.ndarray], depth: np.ndarray) -> list[str]:
    """Nearest object first by mean depth over its mask (smaller is nearer)."""
    _check(masks)
    depth = np.asarray(depth, dtype=np.float64)
    for oid, m in masks.items():
        if m.shape != depth.shape:
            raise DimensionMismatch(f"depth map {depth.shape} does not match mask {oid!r} {m.shape}")
    return sorted(masks, key=lambda k: (float(depth[masks[k]].mean()), int(masks[k].sum()), k))


def order_by(
    name: HeuristicName | str,
    masks: Mapping[str, np.ndarray],
    depth: np.ndarray | None = None,
    use_centroid: bool = False,
) -> list[str]:
    name = HeuristicName(name)
    if name is HeuristicName.TOP_TO_BOTTOM:
        return top_to_bottom(masks, use_centroid)
    if name is HeuristicName.SMALL_TO_LARGE:
        return small_to_large(masks)
    if depth is None:
        raise ValueError("front_to_back needs a depth map")
    return front_to_back(masks, depth)


def static_sequence(
    name: HeuristicName | str, image: np.ndarray, suite: BackendSuite, min_area_fraction: float = 0.001
) -> list[np.ndarray]:
    """Detect once, then return the masks in heuristic order."""
    objects = dict(detect_objects(image, suite, EngineConfig(min_area_fraction=min_area_fraction)))
    if not objects:
        return []
    depth = suite.depth(image) if HeuristicName(name) is HeuristicName.FRONT_TO_BACK else None
    return [objects[k] for k in order_by(name, objects, depth)]


def redetect_sequence(
    name: HeuristicName | str,
    image: np.ndarray,
    suite: BackendSuite,
    max_steps: int | None = None,
    min_area_fraction: float = 0.001,
) -> list[np.ndarray]:
    """Greedy variant: re-detect after every removal and take the heuristic's first pick."""
    cfg = EngineConfig(min_area_fraction=min_area_fraction)
    removed: list[np.ndarray] = []
    current = image
    while True:
        objects = dict(detect_objects(current, suite, cfg))
        if not objects:
            break
        if max_steps is None:
            max_steps = 3 * len(objects)
        if len(removed) >= max_steps:
            break
        depth = suite.depth(current) if HeuristicName(name) is HeuristicName.FRONT_TO_BACK else None
        pick = objects[order_by(name, objects, depth)[0]]
        removed.append(pick)
        current = suite.remove(current, pick)
    return removed
