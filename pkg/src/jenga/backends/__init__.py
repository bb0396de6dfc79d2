from .base import (
    DEFAULT_NEGATIVE_PROMPT,
    DEFAULT_POSITIVE_PROMPT,
    BackendSuite,
    DepthEstimator,
    Embedder,
    Inpainter,
    Pointer,
    PointPrompt,
    Remover,
    Segmenter,
    dedupe_points,
)
from .http import HttpBackend, http_suite_from_env

__all__ = [
    "DEFAULT_NEGATIVE_PROMPT",
    "DEFAULT_POSITIVE_PROMPT",
    "BackendSuite",
    "DepthEstimator",
    "Embedder",
    "HttpBackend",
    "Inpainter",
    "Pointer",
    "PointPrompt",
    "Remover",
    "Segmenter",
    "dedupe_points",
    "http_suite_from_env",
]
