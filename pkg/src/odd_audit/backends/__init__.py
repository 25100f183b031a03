from .base import (
    KIND_EMBEDDING,
    KIND_IMAGE,
    BackendError,
    ClassDistribution,
    ClassifierBackend,
    GenerationSettings,
    GeneratorBackend,
    PosteriorBackend,
    ProtocolError,
    Sample,
    TransportError,
)
from .remote import ENV_BASE_URL, RemoteClassifier, RemoteGenerator, resolve_base_url

_SYNTHETIC = (
    "ParsedPrompt",
    "SyntheticClassifier",
    "SyntheticGenerator",
    "SyntheticPosterior",
    "parse_prompt",
)


def __getattr__(name: str):
    # Loaded on demand: the synthetic adapters sit on top of the world model,
    # which itself uses the base types from this package.
    if name in _SYNTHETIC:
        from . import synthetic

        return getattr(synthetic, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


__all__ = [
    "KIND_EMBEDDING",
    "KIND_IMAGE",
    "BackendError",
    "ClassDistribution",
    "ClassifierBackend",
    "GenerationSettings",
    "GeneratorBackend",
    "PosteriorBackend",
    "ProtocolError",
    "Sample",
    "TransportError",
    "ENV_BASE_URL",
    "RemoteClassifier",
    "RemoteGenerator",
    "resolve_base_url",
    *_SYNTHETIC,
]
