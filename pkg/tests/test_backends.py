import json
from dataclasses import replace

import httpx
import numpy as np
import pytest

from conftest import stack2
from jenga.backends import DEFAULT_NEGATIVE_PROMPT, DEFAULT_POSITIVE_PROMPT, PointPrompt, dedupe_points
from jenga.backends.http import HttpBackend, http_suite_from_env, timeout_from_env, urls_from_env
from jenga.blocksworld import SyntheticBackend, render_scene, synthetic_suite
from jenga.errors import BackendUnavailable, EmptyMask, MalformedResponse, PartialBatch
from jenga.imaging import image_from_b64, image_to_b64, mask_from_b64, mask_to_b64
from jenga.scoring import Slot, extract_crop

POSITIVE = "Full HD, 4K, high quality, high resolution, photorealistic"
NEGATIVE = (
    "bad anatomy, bad proportions, blurry, cropped, deformed, disfigured, duplicate, error, "
    "extra limbs, gross proportions, jpeg artifacts, long neck, low quality, lowres, malformed, "
    "morbid, mutated, mutilated, out of frame, ugly, worst quality"
)


def test_prompt_strings_exact():
    assert DEFAULT_POSITIVE_PROMPT == POSITIVE
    assert DEFAULT_NEGATIVE_PROMPT == NEGATIVE


# -- suite contracts ----------------------------------------------------------


class Stub:
    """Configurable misbehaving backend."""

    def __init__(self, points=(), inpaint=None, depth=None, slot=Slot.S, dim=3, vector=None):
        self._points = list(points)
        self._inpaint = inpaint
        self._depth = depth
        self.slot = slot
        self.dim = dim
        self._vector = vector

    def point(self, image):
        return self._points

    def segment(self, image, prompt):
        return np.zeros(image.shape[:2], bool)

    def inpaint(self, image, mask, n, seed):
        return self._inpaint(image, mask, n)

    def embed(self, crop):
        return self._vector

    def remove(self, image, mask):
        return image

    def depth(self, image):
        return self._depth


def stub_suite(**kw):
    syn = synthetic_suite()
    stub = Stub(**kw)
    return replace(syn, pointer=stub, segmenter=stub, inpainter=stub, depth_estimator=stub)


def test_out_of_bounds_point_is_malformed():
    suite = stub_suite(points=[PointPrompt(-1, 5)])
    with pytest.raises(MalformedResponse):
        suite.point(np.zeros((10, 10, 3), np.uint8))


def test_points_deduplicated_within_radius():
    pts = [PointPrompt(10, 10, 0.5), PointPrompt(11, 10, 0.9), PointPrompt(50, 50)]
    kept = dedupe_points(pts, radius=2.0)
    assert kept == [PointPrompt(11, 10, 0.9), PointPrompt(50, 50)]
    suite = stub_suite(points=pts)
    # 1% of a 200x200 diagonal is ~2.8 px
    assert len(suite.point(np.zeros((200, 200, 3), np.uint8))) == 2


def test_segment_failure_is_empty_mask():
    suite = stub_suite()
    with pytest.raises(EmptyMask):
        suite.segment(np.zeros((10, 10, 3), np.uint8), PointPrompt(3, 3))


def test_partial_batch_carries_successes():
    img = np.zeros((8, 8, 3), np.uint8)
    mask = np.zeros((8, 8), bool)
    mask[2:4, 2:4] = True
    suite = stub_suite(inpaint=lambda im, m, n: [im.copy()] * (n - 1))
    with pytest.raises(PartialBatch) as info:
        suite.inpaint(img, mask, 4, 0)
    assert len(info.value.images) == 3 and info.value.requested == 4


def test_strict_inpaint_catches_outside_changes():
    img = np.zeros((8, 8, 3), np.uint8)
    mask = np.zeros((8, 8), bool)
    mask[2:4, 2:4] = True

    def leaky(im, m, n):
        out = im.copy()
        out[0, 0] = 9
        return [out] * n

    with pytest.raises(MalformedResponse):
        stub_suite(inpaint=leaky).inpaint(img, mask, 2, 0)


def test_depth_shape_contract():
    suite = stub_suite(depth=np.zeros((3, 3)))
    with pytest.raises(MalformedResponse):
        suite.depth(np.zeros((4, 4, 3), np.uint8))


def test_embed_renormalizes_and_checks_dim():
    crop = extract_crop(np.full((6, 6, 3), 50, np.uint8), np.ones((6, 6), bool), resolution=32)
    suite = replace(synthetic_suite(), embedder_s=Stub(vector=np.array([3.0, 4.0, 0.0])))
    e = suite.embed(crop, "S")
    assert np.linalg.norm(e.values) == pytest.approx(1.0, abs=1e-6)
    assert np.allclose(e.values, [0.6, 0.8, 0.0])
    bad = replace(synthetic_suite(), embedder_s=Stub(vector=np.ones(4)))
    with pytest.raises(MalformedResponse):
        bad.embed(crop, "S")


# -- synthetic backend --------------------------------------------------------


def test_blank_image_has_no_points():
    assert synthetic_suite().point(render_scene(replace(stack2(), blocks=()))) == []


def test_point_then_segment_recovers_block_footprints():
    scene = stack2()
    img = render_scene(scene)
    suite = synthetic_suite(scene)
    pts = suite.point(img)
    assert len(pts) == 2
    masks = [suite.segment(img, p) for p in pts]
    found = sorted(int(m.sum()) for m in masks)
    truth = sorted(int(scene.footprint(b).sum()) for b in scene.ids)
    assert found == truth
    for m in masks:
        assert any(np.array_equal(m, scene.footprint(b)) for b in scene.ids)


def test_segment_on_background_fails():
    img = render_scene(stack2())
    with pytest.raises(EmptyMask):
        synthetic_suite().segment(img, PointPrompt(2, 2))


def test_two_prompts_same_block_same_mask():
    img = render_scene(stack2())
    suite = synthetic_suite()
    assert np.array_equal(suite.segment(img, PointPrompt(45, 100)), suite.segment(img, PointPrompt(55, 110)))


def test_synthetic_inpaint_deterministic_and_local():
    scene = stack2()
    img = render_scene(scene)
    mask = scene.footprint("top")
    suite = synthetic_suite(scene)
    a = suite.inpaint(img, mask, 4, 7)
    b = suite.inpaint(img, mask, 4, 7)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    for x in a:
        assert np.array_equal(x[~mask], img[~mask])


def test_synthetic_embedding_unit_norm_and_deterministic():
    scene = stack2()
    img = render_scene(scene)
    suite = synthetic_suite(scene)
    crop = extract_crop(img, scene.footprint("bottom"))
    for slot in Slot:
        e1, e2 = suite.embed(crop, slot), suite.embed(crop, slot)
        assert abs(np.linalg.norm(e1.values) - 1.0) <= 1e-6
        assert np.array_equal(e1.values, e2.values)


def test_remove_everything_gives_background():
    img = render_scene(stack2())
    out = synthetic_suite().remove(img, np.ones(img.shape[:2], bool))
    assert np.array_equal(out, render_scene(replace(stack2(), blocks=())))


def test_synthetic_depth_follows_layers():
    scene = stack2()
    d = SyntheticBackend(scene).depth(render_scene(scene))
    top, bottom = d[scene.footprint("top")], d[scene.footprint("bottom")]
    assert np.unique(top).size == 1 and np.unique(bottom).size == 1
    assert top[0] < bottom[0]  # drawn later, so nearer


# -- HTTP adapter -------------------------------------------------------------


def fake_service(scene, calls, overrides=None):
    """Serve the synthetic backend over the wire protocol."""
    backend = SyntheticBackend(scene)
    suite = synthetic_suite(scene)
    overrides = overrides or {}

    def handler(request: httpx.Request) -> httpx.Response:
        cap = request.url.path.rsplit("/", 1)[-1]
        body = json.loads(request.content)
        calls.append((cap, body))
        if cap in overrides:
            return overrides[cap](body)
        if cap == "point":
            img = image_from_b64(body["image"])
            return httpx.Response(200, json={"points": [{"x": p.x, "y": p.y, "confidence": 0.9} for p in backend.point(img)]})
        if cap == "segment":
            img = image_from_b64(body["image"])
            m = backend.segment(img, PointPrompt(body["x"], body["y"]))
            return httpx.Response(200, json={"mask": mask_to_b64(m)})
        if cap == "inpaint":
            img, m = image_from_b64(body["image"]), mask_from_b64(body["mask"])
            outs = backend.inpaint(img, m, body["n"], body["seed"])
            return httpx.Response(200, json={"images": [image_to_b64(o) for o in outs]})
        if cap == "remove":
            img, m = image_from_b64(body["image"]), mask_from_b64(body["mask"])
            return httpx.Response(200, json={"image": image_to_b64(backend.remove(img, m))})
        if cap == "embed":
            from jenga.scoring import SquareCrop

            px = image_from_b64(body["crop"])
            crop = SquareCrop(px, px.any(axis=2), 1.0, None)
            v = suite.embedder(body["slot"]).embed(crop)
            return httpx.Response(200, json={"embedding": v.tolist()})
        if cap == "depth":
            return httpx.Response(200, json={"depth": backend.depth(image_from_b64(body["image"])).tolist()})
        return httpx.Response(404)

    return httpx.MockTransport(handler)


ENV = {"JENGA_BACKEND_URL": "http://svc", "JENGA_EMBED_DIM_S": "512", "JENGA_EMBED_DIM_V": "196"}


def test_env_resolution():
    env = {"JENGA_BACKEND_URL": "http://all/", "JENGA_BACKEND_URL_INPAINT": "http://paint", "JENGA_HTTP_TIMEOUT_S": "5"}
    urls = urls_from_env(env)
    assert urls["inpaint"] == "http://paint" and urls["point"] == "http://all"
    assert timeout_from_env(env) == 5.0
    assert timeout_from_env({}) == 120.0


def test_http_suite_end_to_end_matches_synthetic():
    from jenga.engine import EngineConfig, rank_objects

    scene = stack2()
    img = render_scene(scene)
    calls = []
    suite = http_suite_from_env(ENV, transport=fake_service(scene, calls))
    cfg = EngineConfig(n=4)
    remote = rank_objects(img, suite, cfg)
    local = rank_objects(img, synthetic_suite(scene), cfg)
    assert [o.score.value for o in remote] == pytest.approx([o.score.value for o in local], abs=1e-9)
    inpaint_bodies = [b for c, b in calls if c == "inpaint"]
    assert inpaint_bodies and all(b["prompt"] == POSITIVE and b["negative_prompt"] == NEGATIVE for b in inpaint_bodies)
    assert suite.depth(img).shape == img.shape[:2]


def test_http_errors_map_to_typed_failures(tmp_path):
    img = render_scene(stack2())
    calls = []
    t = fake_service(stack2(), calls, {
        "point": lambda b: httpx.Response(503, text="busy"),
        "depth": lambda b: httpx.Response(200, content=b"not json"),
        "remove": lambda b: httpx.Response(200, json={"nope": 1}),
    })
    backend = HttpBackend({"point": "http://x", "depth": "http://x", "remove": "http://x"}, transport=t)
    with pytest.raises(BackendUnavailable):
        backend.point(img)
    with pytest.raises(MalformedResponse):
        backend.depth(img)
    with pytest.raises(MalformedResponse):
        backend.remove(img, np.ones(img.shape[:2], bool))
    with pytest.raises(BackendUnavailable):
        backend.inpaint(img, np.ones(img.shape[:2], bool), 1, 0)  # no URL configured


def test_http_connection_error_is_unavailable():
    def refuse(request):
        raise httpx.ConnectError("refused", request=request)

    backend = HttpBackend({"point": "http://x"}, transport=httpx.MockTransport(refuse))
    with pytest.raises(BackendUnavailable):
        backend.point(np.zeros((4, 4, 3), np.uint8))


def test_http_cache_avoids_second_request(tmp_path):
    img = render_scene(stack2())
    calls = []
    backend = HttpBackend({"point": "http://x"}, cache_dir=tmp_path, transport=fake_service(stack2(), calls))
    first = backend.point(img)
    second = backend.point(img)
    assert first == second
    assert len(calls) == 1


def test_http_suite_needs_dims():
    with pytest.raises(ValueError):
        http_suite_from_env({"JENGA_BACKEND_URL": "http://x"})
