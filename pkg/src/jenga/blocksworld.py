"""A 2D blocks world with known support structure.

Scenes are axis-aligned rectangles resting on a ground line or on each other.
Because the true support graph is known, the world doubles as a test bed:
the synthetic backends here point, segment, inpaint, remove, embed and
estimate depth directly from rendered images, and the oracles
(:func:`support_graph`, :func:`is_stable`, :func:`valid_sequence`) judge the
engine's output.

Coordinates are pixels with row 0 at the top. A block covers rows
``[y, y + h)`` and columns ``[x, x + w)``; it rests on whatever touches its
bottom edge ``y + h``.
"""

from __future__ import annotations

import colorsys
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .backends.base import BackendSuite, PointPrompt
from .errors import InfeasibleSpec, NotAPermutation, UnknownBlock
from .imaging import iou
from .scoring import Slot, SquareCrop

BACKGROUND = (236, 236, 236)
CANVAS_W = 160
CANVAS_H = 120
GROUND_Y = 116

Color = tuple[int, int, int]


@dataclass(frozen=True)
class Block:
    id: str
    x: int
    y: int
    w: int
    h: int
    color: Color

    @property
    def right(self) -> int:
        return self.x + self.w

    @property
    def bottom(self) -> int:
        return self.y + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def center_x(self) -> float:
        return self.x + self.w / 2

    def overlaps(self, other: "Block") -> bool:
        return (
            self.x < other.right and other.x < self.right and self.y < other.bottom and other.y < self.bottom
        )

    def contact(self, below: "Block") -> tuple[int, int] | None:
        """Horizontal interval where this block's bottom sits on ``below``'s top."""
        if self.bottom != below.y:
            return None
        lo, hi = max(self.x, below.x), min(self.right, below.right)
        return (lo, hi) if hi - lo >= 1 else None

    def footprint(self, height: int, width: int) -> np.ndarray:
        m = np.zeros((height, width), dtype=bool)
        m[max(self.y, 0):self.bottom, max(self.x, 0):self.right] = True
        return m

    def to_dict(self) -> dict:
        return {"id": self.id, "x": self.x, "y": self.y, "w": self.w, "h": self.h, "color": list(self.color)}


@dataclass(frozen=True)
class BlockScene:
    """An immutable scene. List order is draw order: later blocks are nearer."""

    blocks: tuple[Block, ...]
    seed: int = 0
    width: int = CANVAS_W
    height: int = CANVAS_H
    ground_y: int = GROUND_Y

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))

    @property
    def ids(self) -> list[str]:
        return [b.id for b in self.blocks]

    def block(self, block_id: str) -> Block:
        for b in self.blocks:
            if b.id == block_id:
                return b
        raise UnknownBlock(block_id)

    def without(self, *block_ids: str) -> "BlockScene":
        for bid in block_ids:
            self.block(bid)
        drop = set(block_ids)
        return replace(self, blocks=tuple(b for b in self.blocks if b.id not in drop))

    def footprint(self, block_id: str) -> np.ndarray:
        return self.block(block_id).footprint(self.height, self.width)

    def layer(self, block_id: str) -> int:
        return self.ids.index(block_id)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "canvas": {"w": self.width, "h": self.height},
            "groundY": self.ground_y,
            "blocks": [b.to_dict() for b in self.blocks],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "BlockScene":
        blocks = tuple(
            Block(str(b["id"]), int(b["x"]), int(b["y"]), int(b["w"]), int(b["h"]), tuple(int(c) for c in b["color"]))
            for b in d["blocks"]
        )
        return cls(
            blocks=blocks,
            seed=int(d["seed"]),
            width=int(d["canvas"]["w"]),
            height=int(d["canvas"]["h"]),
            ground_y=int(d["groundY"]),
        )

    @classmethod
    def load(cls, path: str | Path) -> "BlockScene":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())


# -- rendering ---------------------------------------------------------------


def render_scene(scene: BlockScene) -> np.ndarray:
    return render_blocks(scene.blocks, scene.height, scene.width)


def render_blocks(blocks: Iterable[Block], height: int, width: int, background: Color = BACKGROUND) -> np.ndarray:
    img = np.empty((height, width, 3), dtype=np.uint8)
    img[:] = background
    for b in blocks:
        img[max(b.y, 0):b.bottom, max(b.x, 0):b.right] = b.color
    return img


# -- support structure -------------------------------------------------------


@dataclass(frozen=True)
class SupportGraph:
    nodes: tuple[str, ...]
    edges: frozenset[tuple[str, str]]  # (dependent, supporter)

    def supporters(self, block_id: str) -> set[str]:
        return {s for d, s in self.edges if d == block_id}

    def dependents(self, block_id: str) -> set[str]:
        return {d for d, s in self.edges if s == block_id}

    def is_acyclic(self) -> bool:
        indeg = {n: 0 for n in self.nodes}
        for d, s in self.edges:
            indeg[s] += 1
        queue = [n for n, k in indeg.items() if k == 0]
        seen = 0
        while queue:
            n = queue.pop()
            seen += 1
            for s in self.supporters(n):
                indeg[s] -= 1
                if indeg[s] == 0:
                    queue.append(s)
        return seen == len(self.nodes)


def support_graph(scene: BlockScene) -> SupportGraph:
    edges = frozenset(
        (a.id, b.id) for a in scene.blocks for b in scene.blocks if a is not b and a.contact(b) is not None
    )
    return SupportGraph(tuple(scene.ids), edges)


def _contacts(block: Block, blocks: Iterable[Block]) -> list[tuple[int, int]]:
    return [c for other in blocks if other is not block and (c := block.contact(other)) is not None]


def block_is_stable(block: Block, scene: BlockScene) -> bool:
    if block.bottom == scene.ground_y:
        return True
    contacts = _contacts(block, scene.blocks)
    if not contacts:
        return False
    # support polygon of a rigid block is the hull of its contact intervals
    lo = min(c[0] for c in contacts)
    hi = max(c[1] for c in contacts)
    return lo <= block.center_x <= hi


def is_stable(scene: BlockScene) -> bool:
    """Every block is on the ground or has its centre over its contacts.

    This is a per-block check, not a torque balance over whole sub-stacks.
    """
    return all(block_is_stable(b, scene) for b in scene.blocks)


def valid_sequence(graph: SupportGraph, order: Sequence[str]) -> bool:
    """True iff every dependent is removed before each of its supporters."""
    if sorted(order) != sorted(graph.nodes) or len(set(order)) != len(order):
        raise NotAPermutation(f"order {list(order)} is not a permutation of {sorted(graph.nodes)}")
    pos = {bid: i for i, bid in enumerate(order)}
    return all(pos[d] < pos[s] for d, s in graph.edges)


def stable_after_each_removal(scene: BlockScene, order: Sequence[str]) -> bool:
    current = scene
    if not is_stable(current):
        return False
    for bid in order:
        current = current.without(bid)
        if not is_stable(current):
            return False
    return True


def validate_scene(scene: BlockScene) -> None:
    """Raise ``ValueError`` if blocks overlap or any block lacks a contact below."""
    bs = scene.blocks
    for i, a in enumerate(bs):
        if a.w < 1 or a.h < 1:
            raise ValueError(f"block {a.id} has empty extent")
        for b in bs[i + 1:]:
            if a.overlaps(b):
                raise ValueError(f"blocks {a.id} and {b.id} overlap")
        if a.bottom != scene.ground_y and not _contacts(a, bs):
            raise ValueError(f"block {a.id} is not resting on anything")
    if len(set(scene.ids)) != len(bs):
        raise ValueError("duplicate block ids")


# -- generation --------------------------------------------------------------


@dataclass(frozen=True)
class SceneSpec:
    num_blocks: int = 4
    max_stack_depth: int = 3
    confounder: bool = False
    width: int = CANVAS_W
    height: int = CANVAS_H
    ground_y: int = GROUND_Y


MAX_ATTEMPTS = 60
TRIES_PER_BLOCK = 200
STACK_PROB = 0.65
BRIDGE_PROB = 0.2


def _palette(rng: np.random.Generator, n: int) -> list[Color]:
    slots = 24
    if n > slots:
        raise InfeasibleSpec(f"at most {slots} distinctly coloured blocks are supported, asked for {n}")
    hues = rng.permutation(slots)[:n]
    out = []
    for k in hues:
        hue = (k + rng.uniform(-0.2, 0.2)) / slots
        r, g, b = colorsys.hsv_to_rgb(hue % 1.0, rng.uniform(0.55, 0.95), rng.uniform(0.5, 0.9))
        out.append((int(r * 255) or 1, int(g * 255) or 1, int(b * 255) or 1))
    return out


class _Builder:
    def __init__(self, spec: SceneSpec, rng: np.random.Generator):
        self.spec = spec
        self.rng = rng
        self.blocks: list[Block] = []
        self.depth: dict[str, int] = {}
        self.caps: set[str] = set()

    def fits(self, cand: Block) -> bool:
        s = self.spec
        if cand.x < 1 or cand.right > s.width - 1 or cand.y < 2:
            return False
        return not any(cand.overlaps(b) for b in self.blocks)

    def supporters_of(self, cand: Block) -> list[Block]:
        return [b for b in self.blocks if cand.contact(b) is not None]

    def accept(self, cand: Block, cap: bool = False) -> bool:
        if not self.fits(cand):
            return False
        # never slide a block under an existing one; that would rewrite its support
        if any(b.contact(cand) is not None for b in self.blocks):
            return False
        sups = self.supporters_of(cand)
        if cand.bottom != self.spec.ground_y:
            if not sups or any(b.id in self.caps for b in sups):
                return False
            lo = min(cand.contact(b)[0] for b in sups)
            hi = max(cand.contact(b)[1] for b in sups)
            # keep a margin so the centre is clearly over the support
            if not lo + 1 <= cand.center_x <= hi - 1:
                return False
            if self.spec.confounder and any(b.area >= cand.area for b in sups):
                return False
        d = 1 + max((self.depth[b.id] for b in sups), default=0)
        if d > self.spec.max_stack_depth:
            return False
        self.blocks.append(cand)
        self.depth[cand.id] = d
        if cap:
            self.caps.add(cand.id)
        return True

    def _dims(self, below: Block | None) -> tuple[int, int]:
        r = self.rng
        if self.spec.confounder:
            if below is None:  # pedestal
                return int(r.integers(8, 13)), int(r.integers(10, 17))
            return int(round(below.w * r.uniform(1.7, 2.6))), int(round(below.h * r.uniform(0.55, 0.9)))
        side = int(r.integers(11, 21))
        return side, max(6, int(round(side * r.uniform(0.8, 1.25))))

    def try_ground(self, bid: str, color: Color) -> bool:
        w, h = self._dims(None)
        x = int(self.rng.integers(1, self.spec.width - w))
        return self.accept(Block(bid, x, self.spec.ground_y - h, w, h, color))

    def try_stack(self, bid: str, color: Color) -> bool:
        open_ = [b for b in self.blocks if b.id not in self.caps and self.depth[b.id] < self.spec.max_stack_depth]
        if not open_:
            return False
        below = open_[int(self.rng.integers(len(open_)))]
        w, h = self._dims(below)
        cx = below.x + below.w * self.rng.uniform(0.3, 0.7)
        x = int(round(cx - w / 2))
        return self.accept(Block(bid, x, below.y - h, w, h, color))

    def try_bridge(self, bid: str, color: Color) -> bool:
        open_ = [b for b in self.blocks if b.id not in self.caps and self.depth[b.id] < self.spec.max_stack_depth]
        pairs = [
            (a, b) for a in open_ for b in open_
            if a.y == b.y and a.right + 2 <= b.x and b.right - a.x <= 0.8 * self.spec.width
        ]
        if not pairs:
            return False
        a, b = pairs[int(self.rng.integers(len(pairs)))]
        x0 = a.x + int(self.rng.integers(0, max(1, a.w // 2)))
        x1 = b.right - int(self.rng.integers(0, max(1, b.w // 2)))
        h = int(self.rng.integers(5, 9))
        return self.accept(Block(bid, x0, a.y - h, x1 - x0, h, color), cap=True)


def generate_scene(seed: int, spec: SceneSpec | None = None) -> BlockScene:
    """Generate a valid scene deterministically from ``seed``.

    Ordinary scenes use near-square blocks, plus flat slabs bridging two
    equal-height supports; slabs never carry anything. In confounder mode every
    stacked block is larger than each block it rests on.

    Raises:
        InfeasibleSpec: no valid scene found within the retry budget.
    """
    spec = spec or SceneSpec()
    if spec.num_blocks < 1:
        raise InfeasibleSpec("num_blocks must be >= 1")
    if spec.max_stack_depth < 1:
        raise InfeasibleSpec("max_stack_depth must be >= 1")
    rng = np.random.default_rng(seed)
    colors = _palette(rng, spec.num_blocks)
    for _ in range(MAX_ATTEMPTS):
        builder = _Builder(spec, rng)
        for i in range(spec.num_blocks):
            bid = f"b{i}"
            placed = False
            for _ in range(TRIES_PER_BLOCK):
                u = rng.random()
                if builder.blocks and u < BRIDGE_PROB and not spec.confounder:
                    placed = builder.try_bridge(bid, colors[i])
                elif builder.blocks and u < STACK_PROB:
                    placed = builder.try_stack(bid, colors[i])
                else:
                    placed = builder.try_ground(bid, colors[i])
                if placed:
                    break
            if not placed:
                break
        else:
            order = rng.permutation(len(builder.blocks))
            scene = BlockScene(
                blocks=tuple(builder.blocks[k] for k in order),
                seed=seed,
                width=spec.width,
                height=spec.height,
                ground_y=spec.ground_y,
            )
            validate_scene(scene)
            return scene
    raise InfeasibleSpec(f"could not place {spec.num_blocks} blocks (seed {seed}, spec {spec})")


def stack_depth(scene: BlockScene) -> int:
    graph = support_graph(scene)
    memo: dict[str, int] = {}

    def depth(bid: str) -> int:
        if bid not in memo:
            memo[bid] = 1 + max((depth(s) for s in graph.supporters(bid)), default=0)
        return memo[bid]

    return max((depth(b) for b in scene.ids), default=0)


# -- reading scenes back out of images --------------------------------------


@dataclass(frozen=True, eq=False)
class Component:
    color: Color
    mask: np.ndarray
    top: int
    left: int
    bottom: int
    right: int

    def as_block(self, bid: str) -> Block:
        return Block(bid, self.left, self.top, self.right - self.left, self.bottom - self.top, self.color)


def components(image: np.ndarray, background: Color = BACKGROUND) -> list[Component]:
    """Connected single-colour regions that are not background, top-left first."""
    key = (image[:, :, 0].astype(np.int32) << 16) | (image[:, :, 1].astype(np.int32) << 8) | image[:, :, 2]
    bg_key = (background[0] << 16) | (background[1] << 8) | background[2]
    out = []
    for k in np.unique(key):
        if k == bg_key:
            continue
        labels, _ = ndimage.label(key == k)
        for idx, sl in enumerate(ndimage.find_objects(labels), start=1):
            if sl is None:
                continue
            m = labels == idx
            color = (int(k >> 16) & 255, int(k >> 8) & 255, int(k) & 255)
            out.append(Component(color, m, sl[0].start, sl[1].start, sl[0].stop, sl[1].stop))
    out.sort(key=lambda c: (c.top, c.left))
    return out


def parse_blocks(image: np.ndarray, background: Color = BACKGROUND) -> list[Block]:
    return [c.as_block(f"p{i}") for i, c in enumerate(components(image, background))]


def _interior_point(comp: Component) -> tuple[int, int]:
    ys, xs = np.nonzero(comp.mask)
    cy, cx = int(round(ys.mean())), int(round(xs.mean()))
    if comp.mask[cy, cx]:
        return cx, cy
    k = int(np.argmin((ys - cy) ** 2 + (xs - cx) ** 2))
    return int(xs[k]), int(ys[k])


# -- counterfactual fills ----------------------------------------------------


@dataclass(frozen=True)
class FillConfig:
    """Knobs of the synthetic inpainting grammar.

    A region whose block carries something is refilled with a look-alike
    supporter; any other region gets an empty patch of background with
    probability ``p_empty``, else a random rectangle of random colour.
    """

    p_empty: float = 0.5
    color_jitter: int = 12
    min_extent: float = 0.7  # supporter spans at least this share of the slack either side
    rect_min_frac: float = 0.3


def _random_color(rng: np.random.Generator) -> Color:
    r, g, b = colorsys.hsv_to_rgb(rng.random(), rng.uniform(0.4, 1.0), rng.uniform(0.4, 0.95))
    return int(r * 255) or 1, int(g * 255) or 1, int(b * 255) or 1


def _paint(img: np.ndarray, mask: np.ndarray, top: int, left: int, bottom: int, right: int, color) -> None:
    region = np.zeros_like(mask)
    region[max(top, 0):bottom, max(left, 0):right] = True
    img[region & mask] = color


def counterfactual_fills(
    image: np.ndarray,
    mask: np.ndarray,
    blocks: Sequence[Block],
    target: Block | None,
    n: int,
    seed: int,
    config: FillConfig = FillConfig(),
    background: Color = BACKGROUND,
) -> list[np.ndarray]:
    """Inpaint ``mask`` in ``image`` ``n`` times; only masked pixels change."""
    if n < 1:
        raise ValueError("n must be >= 1")
    ys, xs = np.nonzero(mask)
    top, left, bottom, right = int(ys.min()), int(xs.min()), int(ys.max()) + 1, int(xs.max()) + 1
    key = [int(seed), top, left, bottom, right]
    rng = np.random.default_rng(key)

    loaded = []
    if target is not None:
        loaded = [b for b in blocks if b is not target and b.contact(target) is not None]

    out = []
    for _ in range(n):
        img = image.copy()
        img[mask] = background
        if loaded:
            lo = min(b.contact(target)[0] for b in loaded)
            hi = max(b.contact(target)[1] for b in loaded)
            x0 = lo - int(round(rng.uniform(config.min_extent, 1.0) * (lo - target.x)))
            x1 = hi + int(round(rng.uniform(config.min_extent, 1.0) * (target.right - hi)))
            jitter = rng.integers(-config.color_jitter, config.color_jitter + 1, size=3)
            color = np.clip(np.asarray(target.color) + jitter, 1, 255).astype(np.uint8)
            _paint(img, mask, target.y, x0, target.bottom, x1, color)
        elif rng.random() >= config.p_empty:
            bh, bw = bottom - top, right - left
            rh = max(1, int(round(bh * rng.uniform(config.rect_min_frac, 1.0))))
            rw = max(1, int(round(bw * rng.uniform(config.rect_min_frac, 1.0))))
            ry = top + int(rng.integers(0, bh - rh + 1))
            rx = left + int(rng.integers(0, bw - rw + 1))
            _paint(img, mask, ry, rx, ry + rh, rx + rw, _random_color(rng))
        out.append(img)
    return out


def synthetic_inpaint(
    scene: BlockScene, target_id: str, n: int, seed: int, config: FillConfig = FillConfig()
) -> list[np.ndarray]:
    """Counterfactual fills of one block's footprint in a rendered scene."""
    target = scene.block(target_id)
    image = render_scene(scene)
    return counterfactual_fills(image, scene.footprint(target_id), scene.blocks, target, n, seed, config)


# -- synthetic embedders -----------------------------------------------------


def _basis(dim: int) -> np.ndarray:
    v = np.zeros(dim)
    v[0] = 1.0
    return v


class ColorHistogramEmbedder:
    """Slot S: soft RGB colour histogram of the non-zero crop pixels."""

    slot = Slot.S

    def __init__(self, bins: int = 8, stride: int = 4):
        self.bins = bins
        self.stride = stride
        self.dim = bins**3

    def embed(self, crop: SquareCrop) -> np.ndarray:
        px = crop.pixels[:: self.stride, :: self.stride].reshape(-1, 3)
        px = px[px.any(axis=1)].astype(np.float64)
        if px.shape[0] == 0:
            return _basis(self.dim)
        # trilinear vote into bin centres
        pos = np.clip(px / 256.0 * self.bins - 0.5, 0, self.bins - 1)
        lo = np.floor(pos).astype(int)
        hi = np.minimum(lo + 1, self.bins - 1)
        frac = pos - lo
        hist = np.zeros(self.dim)
        for cr in (0, 1):
            for cg in (0, 1):
                for cb in (0, 1):
                    idx_r = hi[:, 0] if cr else lo[:, 0]
                    idx_g = hi[:, 1] if cg else lo[:, 1]
                    idx_b = hi[:, 2] if cb else lo[:, 2]
                    wgt = (
                        (frac[:, 0] if cr else 1 - frac[:, 0])
                        * (frac[:, 1] if cg else 1 - frac[:, 1])
                        * (frac[:, 2] if cb else 1 - frac[:, 2])
                    )
                    flat = (idx_r * self.bins + idx_g) * self.bins + idx_b
                    hist += np.bincount(flat, weights=wgt, minlength=self.dim)
        return hist / np.linalg.norm(hist)


class OccupancyGridEmbedder:
    """Slot V: coarse grid of how much of each cell holds non-background matter."""

    slot = Slot.V

    def __init__(self, grid: int = 14, background: Color = BACKGROUND, tolerance: int = 8):
        self.grid = grid
        self.background = np.asarray(background, dtype=np.int16)
        self.tolerance = tolerance
        self.dim = grid * grid

    def embed(self, crop: SquareCrop) -> np.ndarray:
        px = crop.pixels
        matter = px.any(axis=2)
        for c in range(3):
            matter &= np.abs(px[:, :, c].astype(np.int16) - self.background[c]) > self.tolerance
        r = matter.shape[0]
        if r % self.grid == 0:
            k = r // self.grid
            cells = matter.reshape(self.grid, k, self.grid, k).sum(axis=(1, 3), dtype=np.float64)
        else:
            edges = np.linspace(0, r, self.grid + 1).astype(int)[:-1]
            m = matter.astype(np.float64)
            cells = np.add.reduceat(np.add.reduceat(m, edges, axis=0), edges, axis=1)
        v = cells.ravel()
        norm = np.linalg.norm(v)
        if norm == 0:
            return _basis(self.dim)
        return v / norm


# -- synthetic backend -------------------------------------------------------


class SyntheticBackend:
    """Image-driven synthetic implementations of every capability.

    All capabilities read the scene back out of the image, so the backend works
    on any rendered blocks image. ``scene`` is only consulted for depth, to
    recover draw order (which a render does not show) by matching colours.
    """

    def __init__(
        self,
        scene: BlockScene | None = None,
        fill: FillConfig = FillConfig(),
        background: Color = BACKGROUND,
    ):
        self.scene = scene
        self.fill = fill
        self.background = background

    def point(self, image: np.ndarray) -> list[PointPrompt]:
        pts = []
        for comp in components(image, self.background):
            x, y = _interior_point(comp)
            pts.append(PointPrompt(x, y, 1.0))
        return pts

    def segment(self, image: np.ndarray, prompt: PointPrompt) -> np.ndarray:
        color = image[prompt.y, prompt.x]
        if tuple(int(c) for c in color) == tuple(self.background):
            return np.zeros(image.shape[:2], dtype=bool)
        labels, _ = ndimage.label(np.all(image == color, axis=2))
        return labels == labels[prompt.y, prompt.x]

    def _target(self, blocks: Sequence[Block], mask: np.ndarray) -> Block | None:
        best, best_cover = None, 0.5
        h, w = mask.shape
        for b in blocks:
            cover = mask[max(b.y, 0):b.bottom, max(b.x, 0):b.right].sum() / b.area
            if cover >= best_cover:
                best, best_cover = b, cover
        return best

    def inpaint(self, image: np.ndarray, mask: np.ndarray, n: int, seed: int) -> list[np.ndarray]:
        blocks = parse_blocks(image, self.background)
        target = self._target(blocks, mask)
        return counterfactual_fills(image, mask, blocks, target, n, seed, self.fill, self.background)

    def remove(self, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
        h, w = image.shape[:2]
        keep = [
            b for b in parse_blocks(image, self.background)
            if mask[max(b.y, 0):b.bottom, max(b.x, 0):b.right].sum() * 2 < b.area
        ]
        return render_blocks(keep, h, w, self.background)

    def depth(self, image: np.ndarray) -> np.ndarray:
        comps = components(image, self.background)
        layer_of = {}
        if self.scene is not None:
            n = len(self.scene.blocks)
            layer_of = {b.color: n - i for i, b in enumerate(self.scene.blocks)}
        d = np.full(image.shape[:2], float(len(comps) + len(layer_of) + 1))
        for k, comp in enumerate(comps):
            d[comp.mask] = layer_of.get(comp.color, float(len(comps) - k))
        return d


def synthetic_suite(scene: BlockScene | None = None, fill: FillConfig = FillConfig()) -> BackendSuite:
    backend = SyntheticBackend(scene, fill)
    return BackendSuite(
        pointer=backend,
        segmenter=backend,
        inpainter=backend,
        embedder_s=ColorHistogramEmbedder(),
        embedder_v=OccupancyGridEmbedder(),
        remover=backend,
        depth_estimator=backend,
        provenance={
            "point": "synthetic",
            "segment": "synthetic",
            "inpaint": "synthetic",
            "embed": "synthetic",
            "remove": "synthetic",
            "depth": "synthetic",
        },
        strict_inpaint=True,
    )


def match_block(scene: BlockScene, mask: np.ndarray, candidates: Iterable[str] | None = None) -> str | None:
    """Id of the block whose footprint best matches ``mask`` (IoU > 0.5)."""
    ids = list(candidates) if candidates is not None else scene.ids
    best, best_iou = None, 0.5
    for bid in ids:
        score = iou(scene.footprint(bid), mask)
        if score > best_iou:
            best, best_iou = bid, score
    return best
