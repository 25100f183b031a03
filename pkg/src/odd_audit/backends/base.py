"""Backend interfaces shared by the synthetic world and remote model servers.

The audit engine treats samples as opaque payloads: image backends carry PNG
bytes, the synthetic world carries embedding vectors.  Classifiers declare
which payload kind they accept.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

KIND_IMAGE = "image"
KIND_EMBEDDING = "embedding"


class BackendError(Exception):
    """A backend failed for one request; the affected subgroup is dropped."""


class TransportError(BackendError):
    """HTTP-level failure after retries; carries the last status if any."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class ProtocolError(BackendError):
    """The server answered, but not in the agreed wire format."""


@dataclass(frozen=True)
class GenerationSettings:
    n_samples: int = 16
    steps: int = 20
    resolution: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.resolution < 1:
            raise ValueError("resolution must be >= 1")


@dataclass(frozen=True)
class Sample:
    payload: object  # bytes for images, np.ndarray for embeddings
    kind: str
    origin_prompt: str
    index: int

    def __post_init__(self):
        if self.kind not in (KIND_IMAGE, KIND_EMBEDDING):
            raise ValueError(f"unknown sample kind {self.kind!r}")
        if self.kind == KIND_IMAGE and not isinstance(self.payload, bytes):
            raise ValueError("image samples carry bytes payloads")
        if self.kind == KIND_EMBEDDING and not isinstance(self.payload, np.ndarray):
            raise ValueError("embedding samples carry array payloads")


_PROB_TOL = 1e-6


@dataclass(frozen=True)
class ClassDistribution:
    """Probabilities over class names; must sum to one."""

    probabilities: dict[str, float]

    def __post_init__(self):
        if not self.probabilities:
            raise ValueError("empty class distribution")
        for name, p in self.probabilities.items():
            if not -_PROB_TOL <= p <= 1.0 + _PROB_TOL:
                raise ValueError(f"probability for {name!r} outside [0, 1]: {p}")
        total = sum(self.probabilities.values())
        if abs(total - 1.0) > _PROB_TOL:
            raise ValueError(f"probabilities sum to {total}, expected 1")

    def prob(self, name: str) -> float:
        try:
            return self.probabilities[name]
        except KeyError:
            raise KeyError(f"class {name!r} not in distribution") from None

    def argmax_class(self) -> str:
        """Most probable class; exact ties resolve to the first name in order."""
        top = max(self.probabilities.values())
        return min(c for c, p in self.probabilities.items() if p == top)


class GeneratorBackend(ABC):
    @abstractmethod
    def generate(self, prompt: str, settings: GenerationSettings) -> list[Sample]:
        """Produce exactly ``settings.n_samples`` samples for one prompt."""


class ClassifierBackend(ABC):
    @abstractmethod
    def classify(
        self, samples: list[Sample], classes: list[str]
    ) -> list[ClassDistribution]:
        """One distribution per sample over exactly the requested classes."""


class PosteriorBackend(ABC):
    @abstractmethod
    def subgroup_posterior(self, sample: Sample, odd) -> list[np.ndarray]:
        """Per-dimension value distributions for one sample, each summing to 1."""
