"""Manifests, the pairwise and full-scene protocols, reports and ablations.

Manifest formats (JSON lines, paths relative to the manifest file):

    pairwise     {id, image, mask_a, mask_b, first: "A"|"B", source, scene?}
    full scene   {id, image, verdict_source: "oracle"|"human_manifest", human_verdict?, scene?}
    predictions  {id, first} or {id, order: [...]}
    verdicts     {id, sequence_dir, verdict: "pass"|"fail", judge}

``scene`` is an optional pointer to a blocks-world scene JSON; synthetic cases
carry it so that the oracle and the synthetic depth backend can use it.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import baselines
from .backends.base import BackendSuite
from .blocksworld import (
    BlockScene,
    SceneSpec,
    generate_scene,
    match_block,
    render_scene,
    support_graph,
    stable_after_each_removal,
    valid_sequence,
)
from .engine import EngineConfig, RemovalSequence, Termination, decide_pair, decompose
from .errors import InfeasibleSpec, ManifestError, MethodFailure, NotAPermutation
from .imaging import load_image, load_mask, save_image, save_mask

logger = logging.getLogger(__name__)

SOURCE_TAGS = ("nyu_style", "hardparse_style", "synthetic")
VERDICT_SOURCES = ("oracle", "human_manifest")


def _resolve(ref, loader):
    return ref if isinstance(ref, np.ndarray) else loader(ref)


@dataclass(eq=False)
class PairwiseCase:
    """Two objects in one image and which of them must come out first.

    The image, mask and scene references are either file paths or in-memory
    values; the accessors load files on demand.
    """

    id: str
    image_ref: str | Path | np.ndarray
    mask_a_ref: str | Path | np.ndarray
    mask_b_ref: str | Path | np.ndarray
    first: str
    source: str = "synthetic"
    scene_ref: str | Path | BlockScene | None = None

    def image(self) -> np.ndarray:
        return _resolve(self.image_ref, load_image)

    def masks(self) -> tuple[np.ndarray, np.ndarray]:
        return _resolve(self.mask_a_ref, load_mask), _resolve(self.mask_b_ref, load_mask)

    def scene(self) -> BlockScene | None:
        if self.scene_ref is None or isinstance(self.scene_ref, BlockScene):
            return self.scene_ref
        return BlockScene.load(self.scene_ref)


@dataclass(eq=False)
class FullSceneCase:
    id: str
    image_ref: str | Path | np.ndarray
    verdict_source: str = "oracle"
    human_verdict: str | None = None
    scene_ref: str | Path | BlockScene | None = None

    def image(self) -> np.ndarray:
        return _resolve(self.image_ref, load_image)

    def scene(self) -> BlockScene | None:
        if self.scene_ref is None or isinstance(self.scene_ref, BlockScene):
            return self.scene_ref
        return BlockScene.load(self.scene_ref)


@dataclass
class CaseResult:
    case_id: str
    predicted: object
    correct: bool
    failed: bool = False
    error: str | None = None

    def to_dict(self) -> dict:
        d = {"caseId": self.case_id, "predicted": self.predicted, "correct": self.correct}
        if self.failed:
            d["failed"] = True
            d["error"] = self.error
        return d


@dataclass
class EvalReport:
    method: str
    dataset: str
    per_case: list[CaseResult]
    metadata: dict = field(default_factory=dict)

    @property
    def correct(self) -> int:
        return sum(1 for r in self.per_case if r.correct)

    @property
    def total(self) -> int:
        return len(self.per_case)

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0

    def percent(self, digits: int = 2) -> str:
        return f"{100 * self.accuracy:.{digits}f}%"

    @classmethod
    def from_counts(cls, method: str, dataset: str, correct: int, total: int) -> "EvalReport":
        """Report for externally tallied results, one placeholder row per case."""
        if not 0 <= correct <= total:
            raise ValueError("need 0 <= correct <= total")
        rows = [CaseResult(f"{k:05d}", None, k < correct) for k in range(total)]
        return cls(method, dataset, rows, {"from_counts": True})

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "dataset": self.dataset,
            "correct": self.correct,
            "total": self.total,
            "accuracy": self.accuracy,
            "percent": self.percent(),
            "perCase": [r.to_dict() for r in self.per_case],
            "metadata": self.metadata,
        }


# -- manifests ----------------------------------------------------------------


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
        if not isinstance(row, dict):
            raise ManifestError(f"{path}:{lineno}: expected a JSON object")
        rows.append(row)
    return rows


def _require(row: dict, key: str, case_id):
    if key not in row:
        raise ManifestError("missing field", case_id, key)
    return row[key]


def _load_file(base: Path, rel, loader, case_id, key):
    p = base / str(rel)
    if not p.is_file():
        raise ManifestError(f"file not found: {p}", case_id, key)
    try:
        return p, loader(p)
    except Exception as exc:  # noqa: BLE001 - any decode failure is a manifest problem
        raise ManifestError(f"cannot read {p}: {exc}", case_id, key) from exc


def load_pairwise_manifest(path: str | Path) -> list[PairwiseCase]:
    """Read and check a pairwise manifest; every referenced file must parse."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    base = path.parent
    cases, seen = [], set()
    for row in _read_jsonl(path):
        cid = str(_require(row, "id", None))
        if cid in seen:
            raise ManifestError("duplicate id", cid, "id")
        seen.add(cid)
        img_path, img = _load_file(base, _require(row, "image", cid), load_image, cid, "image")
        ma_path, ma = _load_file(base, _require(row, "mask_a", cid), load_mask, cid, "mask_a")
        mb_path, mb = _load_file(base, _require(row, "mask_b", cid), load_mask, cid, "mask_b")
        for key, m in (("mask_a", ma), ("mask_b", mb)):
            if m.shape != img.shape[:2]:
                raise ManifestError(f"mask shape {m.shape} != image {img.shape[:2]}", cid, key)
            if not m.any():
                raise ManifestError("mask is empty", cid, key)
        first = _require(row, "first", cid)
        if first not in ("A", "B"):
            raise ManifestError(f"must be 'A' or 'B', got {first!r}", cid, "first")
        source = _require(row, "source", cid)
        if source not in SOURCE_TAGS:
            raise ManifestError(f"unknown source {source!r}", cid, "source")
        scene = None
        if row.get("scene"):
            scene, _ = _load_file(base, row["scene"], BlockScene.load, cid, "scene")
        cases.append(PairwiseCase(cid, img_path, ma_path, mb_path, first, source, scene))
    return cases


def write_pairwise_manifest(cases: Sequence[PairwiseCase], directory: str | Path, name: str = "pairwise.jsonl") -> Path:
    """Write cases (with their images, masks and scenes) under ``directory``."""
    d = Path(directory)
    for sub in ("images", "masks", "scenes"):
        (d / sub).mkdir(parents=True, exist_ok=True)
    lines = []
    for c in sorted(cases, key=lambda c: c.id):
        ma, mb = c.masks()
        save_image(d / "images" / f"{c.id}.png", c.image())
        save_mask(d / "masks" / f"{c.id}_a.png", ma)
        save_mask(d / "masks" / f"{c.id}_b.png", mb)
        row = {
            "id": c.id,
            "image": f"images/{c.id}.png",
            "mask_a": f"masks/{c.id}_a.png",
            "mask_b": f"masks/{c.id}_b.png",
            "first": c.first,
            "source": c.source,
        }
        scene = c.scene()
        if scene is not None:
            scene.save(d / "scenes" / f"{c.id}.json")
            row["scene"] = f"scenes/{c.id}.json"
        lines.append(json.dumps(row, sort_keys=True))
    out = d / name
    out.write_text("".join(line + "\n" for line in lines))
    return out


def load_fullscene_manifest(path: str | Path) -> list[FullSceneCase]:
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    base = path.parent
    cases = []
    for row in _read_jsonl(path):
        cid = str(_require(row, "id", None))
        img_path, _ = _load_file(base, _require(row, "image", cid), load_image, cid, "image")
        src = _require(row, "verdict_source", cid)
        if src not in VERDICT_SOURCES:
            raise ManifestError(f"unknown verdict source {src!r}", cid, "verdict_source")
        verdict = row.get("human_verdict")
        if verdict is not None and verdict not in ("pass", "fail"):
            raise ManifestError(f"must be 'pass' or 'fail', got {verdict!r}", cid, "human_verdict")
        scene = None
        if row.get("scene"):
            scene, _ = _load_file(base, row["scene"], BlockScene.load, cid, "scene")
        if src == "oracle" and scene is None:
            raise ManifestError("oracle verdicts need a synthetic scene", cid, "scene")
        cases.append(FullSceneCase(cid, img_path, src, verdict, scene))
    return cases


def write_fullscene_manifest(cases: Sequence[FullSceneCase], directory: str | Path, name: str = "fullscene.jsonl") -> Path:
    d = Path(directory)
    for sub in ("images", "scenes"):
        (d / sub).mkdir(parents=True, exist_ok=True)
    lines = []
    for c in sorted(cases, key=lambda c: c.id):
        save_image(d / "images" / f"{c.id}.png", c.image())
        row = {"id": c.id, "image": f"images/{c.id}.png", "verdict_source": c.verdict_source}
        if c.human_verdict is not None:
            row["human_verdict"] = c.human_verdict
        scene = c.scene()
        if scene is not None:
            scene.save(d / "scenes" / f"{c.id}.json")
            row["scene"] = f"scenes/{c.id}.json"
        lines.append(json.dumps(row, sort_keys=True))
    out = d / name
    out.write_text("".join(line + "\n" for line in lines))
    return out


def load_predictions(path: str | Path) -> dict[str, object]:
    """Map case id to a predicted first object ("A"/"B") or a removal order (list)."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"predictions file not found: {path}")
    preds = {}
    for row in _read_jsonl(path):
        cid = str(_require(row, "id", None))
        if "first" in row:
            preds[cid] = row["first"]
        elif "order" in row:
            if not isinstance(row["order"], list):
                raise ManifestError("must be a list", cid, "order")
            preds[cid] = [str(x) for x in row["order"]]
        else:
            raise ManifestError("needs 'first' or 'order'", cid, "first")
    return preds


@dataclass(frozen=True)
class Verdict:
    verdict: str
    judge: str
    sequence_dir: str


def load_verdict_manifest(path: str | Path) -> dict[str, Verdict]:
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"verdict manifest not found: {path}")
    out = {}
    for row in _read_jsonl(path):
        cid = str(_require(row, "id", None))
        v = _require(row, "verdict", cid)
        if v not in ("pass", "fail"):
            raise ManifestError(f"must be 'pass' or 'fail', got {v!r}", cid, "verdict")
        out[cid] = Verdict(v, str(row.get("judge", "")), str(row.get("sequence_dir", "")))
    return out


# -- pairwise protocol --------------------------------------------------------

PairMethod = Callable[[PairwiseCase], str]
SuiteFactory = Callable[[object], BackendSuite]


def eval_pairwise(
    cases: Iterable[PairwiseCase],
    method: PairMethod,
    method_name: str = "method",
    dataset: str = "dataset",
    max_workers: int = 1,
) -> EvalReport:
    """Accuracy of ``method`` at naming the object to remove first.

    A method that raises is scored incorrect for that case and flagged.
    Rows are sorted by case id, so the report does not depend on case order.
    """
    cases = sorted(cases, key=lambda c: c.id)
    if not cases:
        raise ValueError("need at least one case")

    def run(case: PairwiseCase) -> CaseResult:
        try:
            pred = method(case)
            if pred not in ("A", "B"):
                raise MethodFailure(f"prediction {pred!r} is not 'A' or 'B'")
        except Exception as exc:  # noqa: BLE001 - failures are recorded, not raised
            logger.warning("case %s: method failed: %s", case.id, exc)
            return CaseResult(case.id, None, False, failed=True, error=f"{type(exc).__name__}: {exc}")
        return CaseResult(case.id, pred, pred == case.first)

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            rows = list(pool.map(run, cases))
    else:
        rows = [run(c) for c in cases]
    failures = sum(r.failed for r in rows)
    return EvalReport(method_name, dataset, rows, {"failures": failures})


def default_suite_factory(case) -> BackendSuite:
    from .blocksworld import synthetic_suite

    return synthetic_suite(case.scene())


def engine_method(cfg: EngineConfig = EngineConfig(), suite_factory: SuiteFactory = default_suite_factory) -> PairMethod:
    def method(case: PairwiseCase) -> str:
        ma, mb = case.masks()
        return decide_pair(case.image(), ma, mb, suite_factory(case), cfg).first

    return method


def heuristic_method(name: str, suite_factory: SuiteFactory = default_suite_factory) -> PairMethod:
    name = baselines.HeuristicName(name)

    def method(case: PairwiseCase) -> str:
        ma, mb = case.masks()
        depth = None
        if name is baselines.HeuristicName.FRONT_TO_BACK:
            depth = suite_factory(case).depth(case.image())
        return baselines.order_by(name, {"A": ma, "B": mb}, depth)[0]

    return method


def predictions_method(preds: Mapping[str, object]) -> PairMethod:
    def method(case: PairwiseCase) -> str:
        if case.id not in preds:
            raise MethodFailure(f"no prediction for case {case.id}")
        p = preds[case.id]
        if isinstance(p, list):
            ranked = [x for x in p if x in ("A", "B")]
            if not ranked:
                raise MethodFailure(f"order for case {case.id} names neither A nor B")
            return ranked[0]
        return str(p)

    return method


# -- full-scene protocol ------------------------------------------------------

Sequencer = Callable[[FullSceneCase], Sequence[str]]
Judge = Callable[[FullSceneCase, Sequence[str] | None], bool | None]


def masks_to_order(scene: BlockScene, masks: Iterable[np.ndarray]) -> list[str]:
    """Name the block each removal mask took out, in order.

    Unmatched masks are reported as ``"?"`` so that the order fails the
    permutation check instead of silently passing.
    """
    remaining = list(scene.ids)
    order = []
    for m in masks:
        bid = match_block(scene, m, remaining)
        if bid is None:
            order.append("?")
            continue
        remaining.remove(bid)
        order.append(bid)
    return order


def sequence_to_order(scene: BlockScene, seq: RemovalSequence) -> list[str]:
    order = masks_to_order(scene, (s.object_mask for s in seq.steps))
    if seq.terminated is not Termination.BACKGROUND_REACHED:
        order.append("<incomplete>")
    return order


def oracle_verdict(scene: BlockScene, order: Sequence[str]) -> bool:
    """Pass iff the order removes every block, dependents before supporters, stably."""
    try:
        ok = valid_sequence(support_graph(scene), order)
    except NotAPermutation:
        return False
    return ok and stable_after_each_removal(scene, order)


def engine_sequencer(cfg: EngineConfig = EngineConfig(), suite_factory: SuiteFactory = default_suite_factory) -> Sequencer:
    def run(case: FullSceneCase) -> list[str]:
        seq = decompose(case.image(), suite_factory(case), cfg)
        return sequence_to_order(case.scene(), seq)

    return run


def heuristic_sequencer(
    name: str, suite_factory: SuiteFactory = default_suite_factory, redetect: bool = False
) -> Sequencer:
    def run(case: FullSceneCase) -> list[str]:
        suite = suite_factory(case)
        fn = baselines.redetect_sequence if redetect else baselines.static_sequence
        return masks_to_order(case.scene(), fn(name, case.image(), suite))

    return run


def predictions_sequencer(preds: Mapping[str, object]) -> Sequencer:
    def run(case: FullSceneCase) -> list[str]:
        p = preds.get(case.id)
        if not isinstance(p, list):
            raise MethodFailure(f"no removal order for case {case.id}")
        return p

    return run


def default_judge(verdicts: Mapping[str, Verdict] | None = None) -> Judge:
    """Oracle for synthetic cases, recorded human verdicts otherwise.

    Returns ``None`` for a human-judged case without a verdict; such cases are
    excluded from the rate.
    """

    def judge(case: FullSceneCase, order: Sequence[str] | None) -> bool | None:
        if case.verdict_source == "oracle":
            return order is not None and oracle_verdict(case.scene(), order)
        v = case.human_verdict
        if verdicts is not None and case.id in verdicts:
            v = verdicts[case.id].verdict
        return None if v is None else v == "pass"

    return judge


def eval_fullscene(
    cases: Iterable[FullSceneCase],
    sequencer: Sequencer | None,
    judge: Judge | None = None,
    method_name: str = "method",
    dataset: str = "dataset",
) -> EvalReport:
    """Pass rate over whole removal sequences."""
    judge = judge or default_judge()
    rows, excluded, failures = [], [], 0
    for case in sorted(cases, key=lambda c: c.id):
        order, error = None, None
        if case.verdict_source == "oracle":
            if sequencer is None:
                raise ValueError("oracle-judged cases need a sequencer")
            try:
                order = list(sequencer(case))
            except Exception as exc:  # noqa: BLE001 - recorded as a failed case
                error = f"{type(exc).__name__}: {exc}"
                failures += 1
        verdict = judge(case, order)
        if verdict is None:
            excluded.append(case.id)
            continue
        rows.append(CaseResult(case.id, order, bool(verdict) and error is None, failed=error is not None, error=error))
    return EvalReport(method_name, dataset, rows, {"excluded": excluded, "failures": failures})


# -- ablations ----------------------------------------------------------------

SLOT_SETS = {"both": (True, True), "S": (True, False), "V": (False, True)}


def run_ablation(
    cases: Sequence[PairwiseCase],
    n_values: Sequence[int] = (2, 4, 8, 16),
    slots: Sequence[str] = ("both",),
    base: EngineConfig = EngineConfig(),
    suite_factory: SuiteFactory = default_suite_factory,
    dataset: str = "dataset",
) -> dict[tuple[int, str], EvalReport]:
    """One pairwise report per (N, slot set) cell.

    A disabled slot contributes similarity 1, leaving the other slot's mean as
    the whole product.
    """
    if not n_values or not slots:
        raise ValueError("ablation grid is empty")
    out = {}
    for n in n_values:
        for slot in slots:
            use_s, use_v = SLOT_SETS[slot]
            cfg = replace(base, n=int(n), use_slot_s=use_s, use_slot_v=use_v)
            out[(int(n), slot)] = eval_pairwise(cases, engine_method(cfg, suite_factory), f"engine[n={n},slots={slot}]", dataset)
    return out


# -- synthetic suites ---------------------------------------------------------


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def synthetic_pair_case(seed: int, confounder: bool = False, max_attempts: int = 50) -> PairwiseCase:
    """A support pair (a top block and what it rests on) from one seeded scene.

    Which object is labelled A is random, so a method cannot win by always
    answering the same letter.
    """
    rng = np.random.default_rng(_derive_seed(seed, 0xA11CE, int(confounder)))
    for attempt in range(max_attempts):
        spec = SceneSpec(
            num_blocks=int(rng.integers(2, 7)),
            max_stack_depth=int(rng.integers(2, 5)),
            confounder=confounder,
        )
        try:
            scene = generate_scene(_derive_seed(seed, attempt, int(confounder)), spec)
        except InfeasibleSpec:
            continue
        graph = support_graph(scene)
        pairs = sorted((d, s) for d, s in graph.edges if not graph.dependents(d))
        if not pairs:
            continue
        dep, sup = pairs[int(rng.integers(len(pairs)))]
        dep_is_a = bool(rng.integers(2))
        a, b = (dep, sup) if dep_is_a else (sup, dep)
        return PairwiseCase(
            id=f"{'conf' if confounder else 'pair'}_{seed:04d}",
            image_ref=render_scene(scene),
            mask_a_ref=scene.footprint(a),
            mask_b_ref=scene.footprint(b),
            first="A" if dep_is_a else "B",
            source="synthetic",
            scene_ref=scene,
        )
    raise InfeasibleSpec(f"no support pair found for seed {seed}")


def synthetic_pairwise_suite(count: int, start: int = 0, confounder: bool = False) -> list[PairwiseCase]:
    return [synthetic_pair_case(s, confounder) for s in range(start, start + count)]


def synthetic_fullscene_suite(
    count: int, start: int = 0, max_stack_depth: int = 5, confounder: bool = False
) -> list[FullSceneCase]:
    cases = []
    for s in range(start, start + count):
        rng = np.random.default_rng(_derive_seed(s, 0xF011))
        for attempt in range(20):
            spec = SceneSpec(
                num_blocks=int(rng.integers(2, 8)),
                max_stack_depth=int(rng.integers(1, max_stack_depth + 1)),
                confounder=confounder,
            )
            try:
                scene = generate_scene(_derive_seed(s, attempt, 0x5CE4E), spec)
                break
            except InfeasibleSpec:
                continue
        else:
            raise InfeasibleSpec(f"no feasible scene for seed {s}")
        cases.append(FullSceneCase(f"scene_{s:04d}", render_scene(scene), "oracle", None, scene))
    return cases
