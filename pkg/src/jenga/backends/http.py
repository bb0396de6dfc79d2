"""HTTP+JSON adapters for externally hosted models.

Every capability is one POST endpoint. Images and masks travel as
base64-encoded PNG.

    /point    {image}                                         -> {points: [{x, y, confidence?}]}
    /segment  {image, x, y}                                   -> {mask}
    /inpaint  {image, mask, n, seed, prompt, negative_prompt} -> {images: [...]}
    /remove   {image, mask}                                   -> {image}
    /embed    {crop, slot}                                    -> {embedding: [...]}
    /depth    {image}                                         -> {depth: [[...], ...]}

Base URLs come from ``JENGA_BACKEND_URL_<CAPABILITY>`` (for example
``JENGA_BACKEND_URL_INPAINT``), with ``JENGA_BACKEND_URL`` as a shared
fallback. ``JENGA_HTTP_TIMEOUT_S`` sets the request timeout (default 120).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
from pathlib import Path
from typing import Any, Mapping

import httpx
import numpy as np

from ..errors import BackendUnavailable, MalformedResponse
from ..imaging import image_from_b64, image_to_b64, mask_from_b64, mask_to_b64
from ..scoring import Slot, SquareCrop
from .base import CAPABILITIES, DEFAULT_NEGATIVE_PROMPT, DEFAULT_POSITIVE_PROMPT, BackendSuite, PointPrompt

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT_S = 120.0


def urls_from_env(env: Mapping[str, str] | None = None) -> dict[str, str]:
    env = os.environ if env is None else env
    shared = env.get("JENGA_BACKEND_URL")
    urls = {}
    for cap in CAPABILITIES:
        url = env.get(f"JENGA_BACKEND_URL_{cap.upper()}", shared)
        if url:
            urls[cap] = url.rstrip("/")
    return urls


def timeout_from_env(env: Mapping[str, str] | None = None) -> float:
    env = os.environ if env is None else env
    return float(env.get("JENGA_HTTP_TIMEOUT_S", DEFAULT_TIMEOUT_S))


class HttpBackend:
    """Client for all six capabilities.

    Args:
        urls: capability name -> base URL; the endpoint path is appended.
        timeout: seconds per request.
        max_in_flight: bound on concurrent requests from this client.
        cache_dir: optional directory for a response cache keyed by request hash.
        prompt, negative_prompt: text sent with every inpainting request.
        transport: injected httpx transport, mainly for tests.
    """

    def __init__(
        self,
        urls: Mapping[str, str],
        timeout: float = DEFAULT_TIMEOUT_S,
        max_in_flight: int = 4,
        cache_dir: str | Path | None = None,
        prompt: str = DEFAULT_POSITIVE_PROMPT,
        negative_prompt: str = DEFAULT_NEGATIVE_PROMPT,
        transport: httpx.BaseTransport | None = None,
    ):
        self.urls = {k: v.rstrip("/") for k, v in urls.items()}
        self.prompt = prompt
        self.negative_prompt = negative_prompt
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def _cache_path(self, url: str, payload: dict) -> Path | None:
        if self.cache_dir is None:
            return None
        key = hashlib.sha256((url + "\n" + json.dumps(payload, sort_keys=True)).encode()).hexdigest()
        return self.cache_dir / f"{key}.json"

    def _post(self, capability: str, payload: dict) -> dict[str, Any]:
        base = self.urls.get(capability)
        if not base:
            raise BackendUnavailable(
                f"no URL configured for {capability!r} (set JENGA_BACKEND_URL_{capability.upper()})"
            )
        url = f"{base}/{capability}"
        cached = self._cache_path(url, payload)
        if cached is not None and cached.exists():
            return json.loads(cached.read_text())
        with self._slots:
            try:
                resp = self._client.post(url, json=payload)
            except httpx.HTTPError as exc:
                raise BackendUnavailable(f"{capability}: {exc}") from exc
        if resp.status_code != 200:
            raise BackendUnavailable(f"{capability}: HTTP {resp.status_code} {resp.text[:200]}")
        try:
            body = resp.json()
        except ValueError as exc:
            raise MalformedResponse(f"{capability}: response is not JSON") from exc
        if not isinstance(body, dict):
            raise MalformedResponse(f"{capability}: expected a JSON object")
        if cached is not None:
            cached.parent.mkdir(parents=True, exist_ok=True)
            cached.write_text(json.dumps(body))
        return body

    @staticmethod
    def _field(body: dict, key: str, capability: str):
        if key not in body:
            raise MalformedResponse(f"{capability}: response missing {key!r}")
        return body[key]

    def point(self, image: np.ndarray) -> list[PointPrompt]:
        body = self._post("point", {"image": image_to_b64(image)})
        points = []
        for p in self._field(body, "points", "point"):
            try:
                x, y = p["x"], p["y"]
                conf = p.get("confidence")
                points.append(PointPrompt(int(round(x)), int(round(y)), None if conf is None else float(conf)))
            except (KeyError, TypeError, ValueError) as exc:
                raise MalformedResponse(f"point: bad point entry {p!r}") from exc
        return points

    def segment(self, image: np.ndarray, prompt: PointPrompt) -> np.ndarray:
        body = self._post("segment", {"image": image_to_b64(image), "x": prompt.x, "y": prompt.y})
        return self._decode(mask_from_b64, self._field(body, "mask", "segment"), "segment")

    def inpaint(self, image: np.ndarray, mask: np.ndarray, n: int, seed: int) -> list[np.ndarray]:
        payload = {
            "image": image_to_b64(image),
            "mask": mask_to_b64(mask),
            "n": int(n),
            "seed": int(seed),
            "prompt": self.prompt,
            "negative_prompt": self.negative_prompt,
        }
        body = self._post("inpaint", payload)
        return [self._decode(image_from_b64, s, "inpaint") for s in self._field(body, "images", "inpaint")]

    def remove(self, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
        body = self._post("remove", {"image": image_to_b64(image), "mask": mask_to_b64(mask)})
        return self._decode(image_from_b64, self._field(body, "image", "remove"), "remove")

    def embed(self, crop: SquareCrop, slot: Slot | str) -> np.ndarray:
        body = self._post("embed", {"crop": image_to_b64(crop.pixels), "slot": Slot(slot).value})
        try:
            return np.asarray(self._field(body, "embedding", "embed"), dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise MalformedResponse("embed: embedding is not a numeric vector") from exc

    def depth(self, image: np.ndarray) -> np.ndarray:
        body = self._post("depth", {"image": image_to_b64(image)})
        try:
            return np.asarray(self._field(body, "depth", "depth"), dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise MalformedResponse("depth: depth is not a numeric grid") from exc

    @staticmethod
    def _decode(fn, data, capability: str):
        try:
            return fn(data)
        except Exception as exc:  # noqa: BLE001 - any decode failure is a bad response
            raise MalformedResponse(f"{capability}: could not decode PNG payload") from exc


class HttpEmbedder:
    def __init__(self, backend: HttpBackend, slot: Slot | str, dim: int):
        self.backend = backend
        self.slot = Slot(slot)
        self.dim = int(dim)

    def embed(self, crop: SquareCrop) -> np.ndarray:
        return self.backend.embed(crop, self.slot)


def http_suite_from_env(
    env: Mapping[str, str] | None = None,
    dim_s: int | None = None,
    dim_v: int | None = None,
    **kwargs,
) -> BackendSuite:
    """Build a suite backed entirely by HTTP services.

    Embedding dimensions come from the arguments or from
    ``JENGA_EMBED_DIM_S`` / ``JENGA_EMBED_DIM_V``.
    """
    env = os.environ if env is None else env
    urls = urls_from_env(env)
    backend = HttpBackend(urls, timeout=timeout_from_env(env), **kwargs)
    dim_s = dim_s or int(env.get("JENGA_EMBED_DIM_S", 0))
    dim_v = dim_v or int(env.get("JENGA_EMBED_DIM_V", 0))
    if not dim_s or not dim_v:
        raise ValueError("embedding dims must be given (JENGA_EMBED_DIM_S / JENGA_EMBED_DIM_V)")
    return BackendSuite(
        pointer=backend,
        segmenter=backend,
        inpainter=backend,
        embedder_s=HttpEmbedder(backend, Slot.S, dim_s),
        embedder_v=HttpEmbedder(backend, Slot.V, dim_v),
        remover=backend,
        depth_estimator=backend,
        provenance={cap: urls.get(cap, "unconfigured") for cap in CAPABILITIES},
    )
