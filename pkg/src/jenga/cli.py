"""Command-line entry point.

    jenga decompose     remove objects one at a time, write a sequence directory
    jenga rank          score every detected object once
    jenga eval-pairwise accuracy on a pairwise manifest
    jenga eval-full     pass rate on a full-scene manifest
    jenga ablate        pairwise accuracy over a grid of N and embedding slots
    jenga gen-synth     write a synthetic blocks-world benchmark

Exit codes: 0 ok, 2 usage, 3 manifest, 4 generation, 5 backend.
Errors are reported on stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .backends.base import BackendSuite
from .blocksworld import BlockScene, SceneSpec, generate_scene, render_scene, synthetic_suite
from .engine import EngineConfig, decompose, rank_objects
from .errors import BackendUnavailable, InfeasibleSpec, ManifestError, MalformedResponse, PartialBatch
from .evaluation import (
    default_judge,
    engine_method,
    engine_sequencer,
    eval_fullscene,
    eval_pairwise,
    heuristic_method,
    heuristic_sequencer,
    load_fullscene_manifest,
    load_pairwise_manifest,
    load_predictions,
    load_verdict_manifest,
    predictions_method,
    predictions_sequencer,
    run_ablation,
    synthetic_fullscene_suite,
    synthetic_pairwise_suite,
    write_fullscene_manifest,
    write_pairwise_manifest,
)
from .imaging import load_image
from .report import ablation_html, eval_report_html, sequence_gallery
from .scoring import Normalization

logger = logging.getLogger("jenga")

EXIT_OK, EXIT_USAGE, EXIT_MANIFEST, EXIT_GENERATION, EXIT_BACKEND = 0, 2, 3, 4, 5
METHODS = ("engine", "top_to_bottom", "small_to_large", "front_to_back")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    backend: str = "synthetic"
    n: int = 16
    seed: int = 0
    normalization: str = Normalization.MULTIPLY.value
    crop_resolution: int = 224
    max_steps: int | None = None
    slots: list[str] = field(default_factory=lambda: ["S", "V"])
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1:
            raise UsageError("--n must be >= 1")
        if self.crop_resolution < 32:
            raise UsageError("--crop-resolution must be >= 32")

    def engine(self, max_workers: int = 1) -> EngineConfig:
        return EngineConfig(
            n=self.n,
            seed=self.seed,
            max_steps=self.max_steps,
            normalization=self.normalization,
            crop_resolution=self.crop_resolution,
            use_slot_s="S" in self.slots,
            use_slot_v="V" in self.slots,
            max_workers=max_workers,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["version"] = __version__
        return d


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _run_config(args, command: str, **extra) -> RunConfig:
    slots = [s for s, off in (("S", args.no_slot_s), ("V", args.no_slot_v)) if not off]
    if not slots:
        raise UsageError("--no-slot-s and --no-slot-v cannot both be given")
    return RunConfig(
        command=command,
        backend=args.backend,
        n=args.n,
        seed=args.seed,
        normalization=args.normalization,
        crop_resolution=args.crop_resolution,
        max_steps=getattr(args, "max_steps", None),
        slots=slots,
        extra=extra,
    )


def _http_suite(args) -> BackendSuite:
    from .backends.http import http_suite_from_env

    try:
        return http_suite_from_env(max_in_flight=args.max_in_flight, cache_dir=args.cache_dir)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _suite_factory(args):
    if args.backend == "synthetic":
        return lambda case: synthetic_suite(case.scene())
    suite = _http_suite(args)
    return lambda case: suite


def _input_scene_and_image(args):
    """Image plus the synthetic scene it came from, if any."""
    if args.image:
        p = Path(args.image)
        if not p.is_file():
            raise UsageError(f"image not found: {p}")
        scene = BlockScene.load(args.scene) if args.scene else None
        return scene, load_image(p)
    if args.backend != "synthetic":
        raise UsageError("--image is required with --backend http")
    if args.scene:
        scene = BlockScene.load(args.scene)
    else:
        spec = SceneSpec(num_blocks=args.num_blocks, max_stack_depth=args.max_depth)
        scene = generate_scene(args.seed, spec)
    return scene, render_scene(scene)


def cmd_decompose(args) -> int:
    scene, image = _input_scene_and_image(args)
    rc = _run_config(args, "decompose", image=args.image, scene=args.scene,
                     num_blocks=args.num_blocks, max_depth=args.max_depth)
    suite = synthetic_suite(scene) if args.backend == "synthetic" else _http_suite(args)
    seq = decompose(image, suite, rc.engine(args.max_workers))
    out = seq.save(args.out)
    if scene is not None:
        scene.save(out / "scene.json")
    _write_json(out / "config.json", rc.to_dict())
    sequence_gallery(seq, out)
    print(json.dumps({"out": str(out), "steps": len(seq.steps), "terminated": seq.terminated.value}))
    if seq.error:
        raise BackendUnavailable(seq.error)
    return EXIT_OK


def cmd_rank(args) -> int:
    scene, image = _input_scene_and_image(args)
    rc = _run_config(args, "rank", image=args.image, scene=args.scene)
    suite = synthetic_suite(scene) if args.backend == "synthetic" else _http_suite(args)
    table = rank_objects(image, suite, rc.engine(args.max_workers))
    payload = {
        "ranking": [{"id": o.id, "area": o.area, "score": o.score.to_dict()} for o in table],
        "config": rc.to_dict(),
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "ranking.json", payload)
        _write_json(out / "config.json", rc.to_dict())
    print(json.dumps([{"id": o.id, "score": round(o.score.value, 6)} for o in table]))
    return EXIT_OK


def _check_method(method: str) -> None:
    if method in METHODS or method.startswith("predictions:"):
        return
    raise UsageError(f"unknown method {method!r}; choose from {', '.join(METHODS)} or predictions:<file>")


def cmd_eval_pairwise(args) -> int:
    _check_method(args.method)
    rc = _run_config(args, "eval-pairwise", manifest=args.manifest, method=args.method)
    cases = load_pairwise_manifest(args.manifest)
    if not cases:
        raise ManifestError("manifest has no cases")
    if args.method == "engine":
        method = engine_method(rc.engine(), _suite_factory(args))
    elif args.method.startswith("predictions:"):
        method = predictions_method(load_predictions(args.method.split(":", 1)[1]))
    else:
        method = heuristic_method(args.method, _suite_factory(args))
    report = eval_pairwise(cases, method, args.method, Path(args.manifest).stem, max_workers=args.max_workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "report.json", report.to_dict())
    _write_json(out / "config.json", rc.to_dict())
    eval_report_html(report, out / "report.html", rc.to_dict())
    print(json.dumps({"method": report.method, "correct": report.correct, "total": report.total,
                      "accuracy": report.percent()}))
    return EXIT_OK


def cmd_eval_full(args) -> int:
    _check_method(args.method)
    rc = _run_config(args, "eval-full", manifest=args.manifest, method=args.method, redetect=args.redetect)
    cases = load_fullscene_manifest(args.manifest)
    verdicts = load_verdict_manifest(args.verdicts) if args.verdicts else None
    if args.method == "engine":
        seqr = engine_sequencer(rc.engine(), _suite_factory(args))
    elif args.method.startswith("predictions:"):
        seqr = predictions_sequencer(load_predictions(args.method.split(":", 1)[1]))
    else:
        seqr = heuristic_sequencer(args.method, _suite_factory(args), redetect=args.redetect)
    report = eval_fullscene(cases, seqr, default_judge(verdicts), args.method, Path(args.manifest).stem)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "report.json", report.to_dict())
    _write_json(out / "config.json", rc.to_dict())
    eval_report_html(report, out / "report.html", rc.to_dict())
    print(json.dumps({"method": report.method, "passed": report.correct, "total": report.total,
                      "rate": report.percent(), "excluded": len(report.metadata["excluded"])}))
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad integer list {text!r}") from exc
    if not vals or any(v < 1 for v in vals):
        raise UsageError(f"need positive integers, got {text!r}")
    return vals


def cmd_ablate(args) -> int:
    n_values = _int_list(args.n_values)
    slots = [s.strip() for s in args.slots.split(",") if s.strip()]
    if not slots or any(s not in ("both", "S", "V") for s in slots):
        raise UsageError("--slots takes a comma list of both, S, V")
    rc = _run_config(args, "ablate", manifest=args.manifest, n_values=n_values, slot_sets=slots)
    cases = load_pairwise_manifest(args.manifest)
    if not cases:
        raise ManifestError("manifest has no cases")
    table = run_ablation(cases, n_values, slots, rc.engine(), _suite_factory(args), Path(args.manifest).stem)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "cells": [{"n": n, "slots": s, "correct": r.correct, "total": r.total, "accuracy": r.accuracy}
                  for (n, s), r in sorted(table.items())],
        "config": rc.to_dict(),
    }
    _write_json(out / "ablation.json", payload)
    _write_json(out / "config.json", rc.to_dict())
    ablation_html(table, out / "ablation.html")
    print(json.dumps({f"n={n},{s}": r.percent() for (n, s), r in sorted(table.items())}))
    return EXIT_OK


def cmd_gen_synth(args) -> int:
    if args.pairs < 1:
        raise UsageError("--pairs must be >= 1")
    scenes = args.pairs if args.scenes is None else args.scenes
    if scenes < 1:
        raise UsageError("--scenes must be >= 1")
    out = Path(args.out)
    pairs = synthetic_pairwise_suite(args.pairs, start=args.seed, confounder=args.confounder)
    full = synthetic_fullscene_suite(scenes, start=args.seed, max_stack_depth=args.max_depth, confounder=args.confounder)
    write_pairwise_manifest(pairs, out)
    write_fullscene_manifest(full, out)
    config = {
        "command": "gen-synth",
        "pairs": args.pairs,
        "scenes": scenes,
        "seed": args.seed,
        "confounder": args.confounder,
        "max_depth": args.max_depth,
        "version": __version__,
    }
    _write_json(out / "config.json", config)
    print(json.dumps({"out": str(out), "pairs": len(pairs), "scenes": len(full)}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jenga", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    def engine_opts(p):
        p.add_argument("--backend", choices=("synthetic", "http"), default="synthetic")
        p.add_argument("--n", type=int, default=16, help="counterfactual inpaintings per object")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--normalization", choices=[m.value for m in Normalization], default="multiply")
        p.add_argument("--crop-resolution", type=int, default=224)
        p.add_argument("--no-slot-s", action="store_true", help="drop the semantic embedding slot")
        p.add_argument("--no-slot-v", action="store_true", help="drop the visual embedding slot")
        p.add_argument("--max-workers", type=int, default=1)
        p.add_argument("--max-in-flight", type=int, default=4, help="http backend request bound")
        p.add_argument("--cache-dir", default=None, help="http backend response cache")

    def image_opts(p):
        p.add_argument("--image", help="input image (PNG); synthetic backend generates one from --seed if omitted")
        p.add_argument("--scene", help="blocks-world scene JSON to render or to pair with --image")
        p.add_argument("--num-blocks", type=int, default=5)
        p.add_argument("--max-depth", type=int, default=3)

    p = sub.add_parser("decompose", help="remove objects one at a time")
    engine_opts(p)
    image_opts(p)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--out", default="jenga_out")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("rank", help="score every detected object")
    engine_opts(p)
    image_opts(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_rank)

    for name, func, help_ in (
        ("eval-pairwise", cmd_eval_pairwise, "pairwise ordering accuracy"),
        ("eval-full", cmd_eval_full, "full-scene pass rate"),
    ):
        p = sub.add_parser(name, help=help_)
        engine_opts(p)
        p.add_argument("--manifest", required=True)
        p.add_argument("--method", default="engine", help="engine, a heuristic name, or predictions:<file>")
        p.add_argument("--out", default="jenga_eval")
        if name == "eval-full":
            p.add_argument("--verdicts", help="human verdict manifest")
            p.add_argument("--redetect", action="store_true", help="heuristics re-detect after each removal")
        p.set_defaults(func=func)

    p = sub.add_parser("ablate", help="accuracy over N and embedding slots")
    engine_opts(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--n-values", default="2,4,8,16")
    p.add_argument("--slots", default="both,S,V")
    p.add_argument("--out", default="jenga_ablation")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gen-synth", help="write a synthetic benchmark")
    p.add_argument("--pairs", type=int, default=200)
    p.add_argument("--scenes", type=int, default=None, help="full scenes (default: same as --pairs)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--confounder", action="store_true", help="supporters smaller than what they carry")
    p.add_argument("--max-depth", type=int, default=5)
    p.add_argument("--out", default="jenga_synth")
    p.set_defaults(func=cmd_gen_synth)
    return parser


def _fail(code: int, exc: BaseException) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit": code}), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        return _fail(EXIT_USAGE, exc)
    except ManifestError as exc:
        return _fail(EXIT_MANIFEST, exc)
    except InfeasibleSpec as exc:
        return _fail(EXIT_GENERATION, exc)
    except (BackendUnavailable, MalformedResponse, PartialBatch) as exc:
        return _fail(EXIT_BACKEND, exc)
    except (OSError, ValueError) as exc:
        return _fail(1, exc)


if __name__ == "__main__":
    sys.exit(main())
