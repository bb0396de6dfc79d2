"""Sequential decomposition: detect, score, remove the most replaceable, repeat."""

from __future__ import annotations

import enum
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .backends.base import BackendSuite
from .errors import EmptyMask, PartialBatch
from .imaging import check_mask, iou, save_image, save_mask
from .scoring import (
    DEFAULT_CROP_RESOLUTION,
    DiversityScore,
    Normalization,
    PairwiseDecision,
    Slot,
    diversity_score,
    extract_crop,
    pairwise_order,
    removal_key,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EngineConfig:
    n: int = 16
    seed: int = 0
    max_steps: int | None = None  # None: three times the initial object count
    normalization: str = Normalization.MULTIPLY.value
    crop_resolution: int = DEFAULT_CROP_RESOLUTION
    use_slot_s: bool = True
    use_slot_v: bool = True
    min_area_fraction: float = 0.001
    duplicate_iou: float = 0.9
    stagnation_limit: int = 2
    max_workers: int = 1
    accept_partial: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.crop_resolution < 32:
            raise ValueError("crop_resolution must be >= 32")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not (self.use_slot_s or self.use_slot_v):
            raise ValueError("at least one embedding slot must be enabled")
        Normalization(self.normalization)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class ScoredObject:
    id: str
    mask: np.ndarray
    score: DiversityScore

    @property
    def area(self) -> int:
        return int(self.mask.sum())

    def sort_key(self) -> tuple:
        return removal_key(self.score, self.area, self.id)


class Termination(str, enum.Enum):
    BACKGROUND_REACHED = "background_reached"
    MAX_STEPS = "max_steps"
    NO_PROGRESS = "no_progress"
    BACKEND_ERROR = "backend_error"


@dataclass(eq=False)
class RemovalStep:
    index: int
    object_id: str
    object_mask: np.ndarray
    score_table: list[ScoredObject]
    image_after: np.ndarray
    tie_broken: bool = False
    provenance_notes: str = ""

    @property
    def score(self) -> DiversityScore:
        return self.score_table[0].score


@dataclass(eq=False)
class RemovalSequence:
    initial_image: np.ndarray
    steps: list[RemovalStep] = field(default_factory=list)
    terminated: Termination | None = None
    config: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def final_image(self) -> np.ndarray:
        return self.steps[-1].image_after if self.steps else self.initial_image

    def to_dict(self) -> dict:
        out = {
            "steps": [
                {
                    "index": s.index,
                    "objectId": s.object_id,
                    "score": s.score.value,
                    "tieBroken": s.tie_broken,
                    "scoreTable": {o.id: o.score.value for o in s.score_table},
                    "notes": s.provenance_notes,
                }
                for s in self.steps
            ],
            "terminated": self.terminated.value if self.terminated else None,
            "config": self.config,
            "backendProvenance": self.provenance,
        }
        if self.error:
            out["error"] = self.error
        return out

    def save(self, directory: str | Path) -> Path:
        """Write PNGs for every step and ``sequence.json`` into ``directory``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        save_image(d / "initial.png", self.initial_image)
        for s in self.steps:
            save_image(d / f"step_{s.index}.png", s.image_after)
            save_mask(d / f"step_{s.index}.mask.png", s.object_mask)
        (d / "sequence.json").write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        return d


def detect_objects(image: np.ndarray, suite: BackendSuite, cfg: EngineConfig = EngineConfig()) -> list[tuple[str, np.ndarray]]:
    """Point at every object and segment it.

    Failed segmentations are skipped with a warning, masks below the area floor
    are ignored as specks, and near-identical masks from two prompts on the same
    object are merged.
    """
    floor = cfg.min_area_fraction * image.shape[0] * image.shape[1]
    masks: list[np.ndarray] = []
    for p in suite.point(image):
        try:
            m = suite.segment(image, p)
        except EmptyMask:
            logger.warning("segmentation failed at (%d, %d); object skipped", p.x, p.y)
            continue
        if m.sum() < floor:
            continue
        if any(iou(m, other) >= cfg.duplicate_iou for other in masks):
            continue
        masks.append(m)
    return [(f"obj{k}", m) for k, m in enumerate(masks)]


def score_mask(image: np.ndarray, mask: np.ndarray, suite: BackendSuite, cfg: EngineConfig = EngineConfig()) -> DiversityScore:
    """Diversity score of the object under ``mask``."""
    check_mask(image, mask)
    try:
        fills = suite.inpaint(image, mask, cfg.n, cfg.seed)
    except PartialBatch as exc:
        if not (cfg.accept_partial and exc.images):
            raise
        logger.warning("%s; scoring with the partial batch", exc)
        fills = exc.images
    original = extract_crop(image, mask, cfg.crop_resolution)
    crops = [extract_crop(f, mask, cfg.crop_resolution, bounds=original.source_bounds) for f in fills]
    embed_s = (lambda c: suite.embed(c, Slot.S)) if cfg.use_slot_s else None
    embed_v = (lambda c: suite.embed(c, Slot.V)) if cfg.use_slot_v else None
    return diversity_score(original, crops, embed_s, embed_v, cfg.normalization)


def score_objects(
    image: np.ndarray, objects: list[tuple[str, np.ndarray]], suite: BackendSuite, cfg: EngineConfig = EngineConfig()
) -> list[ScoredObject]:
    def one(item):
        oid, mask = item
        return ScoredObject(oid, mask, score_mask(image, mask, suite, cfg))

    if cfg.max_workers > 1 and len(objects) > 1:
        with ThreadPoolExecutor(max_workers=cfg.max_workers) as pool:
            scored = list(pool.map(one, objects))
    else:
        scored = [one(o) for o in objects]
    return sorted(scored, key=ScoredObject.sort_key)


def rank_objects(image: np.ndarray, suite: BackendSuite, cfg: EngineConfig = EngineConfig()) -> list[ScoredObject]:
    """Detect all objects and sort them, most replaceable first."""
    return score_objects(image, detect_objects(image, suite, cfg), suite, cfg)


def decompose(image: np.ndarray, suite: BackendSuite, cfg: EngineConfig = EngineConfig()) -> RemovalSequence:
    """Remove objects one at a time until nothing is detected.

    Each step re-runs detection and scoring on the current image so that
    objects revealed by a removal join the ranking. The loop stops when
    detection finds nothing, when the object count has failed to drop for
    ``cfg.stagnation_limit`` consecutive removals (a remover that keeps
    putting things back), or at the step cap. Backend errors end the loop
    early; the partial sequence is returned with the error recorded.
    """
    seq = RemovalSequence(initial_image=image, config=cfg.to_dict(), provenance=suite.describe())
    current = image
    max_steps = cfg.max_steps
    prev_count: int | None = None
    stagnant = 0
    try:
        while True:
            table = rank_objects(current, suite, cfg)
            if not table:
                seq.terminated = Termination.BACKGROUND_REACHED
                break
            if prev_count is not None:
                stagnant = stagnant + 1 if len(table) >= prev_count else 0
                if stagnant >= cfg.stagnation_limit:
                    seq.terminated = Termination.NO_PROGRESS
                    break
            if max_steps is None:
                max_steps = 3 * len(table)
            if len(seq.steps) >= max_steps:
                seq.terminated = Termination.MAX_STEPS
                break
            chosen = table[0]
            tie = len(table) > 1 and table[1].score.value == chosen.score.value
            after = suite.remove(current, chosen.mask)
            seq.steps.append(
                RemovalStep(
                    index=len(seq.steps),
                    object_id=chosen.id,
                    object_mask=chosen.mask,
                    score_table=table,
                    image_after=after,
                    tie_broken=tie,
                    provenance_notes=f"{len(table)} candidates",
                )
            )
            prev_count = len(table)
            current = after
    except Exception as exc:  # noqa: BLE001 - partial result is the contract
        if not seq.steps:
            raise
        logger.error("decomposition stopped after %d steps: %s", len(seq.steps), exc)
        seq.terminated = Termination.BACKEND_ERROR
        seq.error = f"{type(exc).__name__}: {exc}"
    return seq


def decide_pair(
    image: np.ndarray,
    mask_a: np.ndarray,
    mask_b: np.ndarray,
    suite: BackendSuite,
    cfg: EngineConfig = EngineConfig(),
    ids: tuple[str, str] = ("A", "B"),
) -> PairwiseDecision:
    """Which of two given objects should be removed first.

    Both objects are scored with the same seed; no detection is run.
    """
    check_mask(image, mask_a)
    check_mask(image, mask_b)
    score_a = score_mask(image, mask_a, suite, cfg)
    score_b = score_mask(image, mask_b, suite, cfg)
    return pairwise_order(score_a, score_b, int(mask_a.sum()), int(mask_b.sum()), ids[0], ids[1])
