"""HTTP client for model servers speaking the generate/classify wire protocol.

Endpoints:
    POST {base}/v1/generate  {"prompt", "n_samples", "steps", "resolution", "seed"}
        -> {"samples": [{"b64": <base64 PNG>}, ...]}
    POST {base}/v1/classify  {"classes": [...], "samples": [{"b64": ...}, ...]}
        -> {"distributions": [{class: prob, ...}, ...]}

Errors come back as {"error": "..."} with a non-200 status.  Failed calls are
retried with exponential backoff and then surface as backend errors, failing
only the subgroup that triggered them.
"""
from __future__ import annotations

import base64
import os
import time
from dataclasses import dataclass
from typing import Callable

import requests

from .base import (
    KIND_IMAGE,
    ClassDistribution,
    ClassifierBackend,
    GenerationSettings,
    GeneratorBackend,
    ProtocolError,
    Sample,
    TransportError,
)

ENV_BASE_URL = "ODD_AUDIT_BACKEND_URL"


def resolve_base_url(configured: str | None) -> str:
    """Environment variable wins over the configured URL."""
    url = os.environ.get(ENV_BASE_URL) or configured
    if not url:
        raise ValueError(
            f"no backend URL: set base_url in the config or {ENV_BASE_URL}"
        )
    return url.rstrip("/")


@dataclass(frozen=True)
class GenerateRequest:
    prompt: str
    n_samples: int
    steps: int
    resolution: int
    seed: int

    def to_payload(self) -> dict:
        return {
            "prompt": self.prompt,
            "n_samples": self.n_samples,
            "steps": self.steps,
            "resolution": self.resolution,
            "seed": self.seed,
        }

    @classmethod
    def from_payload(cls, data: dict) -> "GenerateRequest":
        return cls(
            prompt=data["prompt"],
            n_samples=data["n_samples"],
            steps=data["steps"],
            resolution=data["resolution"],
            seed=data["seed"],
        )


@dataclass(frozen=True)
class GenerateResponse:
    images: tuple[bytes, ...]

    def to_payload(self) -> dict:
        return {
            "samples": [
                {"b64": base64.b64encode(img).decode("ascii")} for img in self.images
            ]
        }

    @classmethod
    def from_payload(cls, data: dict) -> "GenerateResponse":
        return cls(
            images=tuple(base64.b64decode(s["b64"]) for s in data["samples"])
        )


@dataclass(frozen=True)
class ClassifyRequest:
    classes: tuple[str, ...]
    images: tuple[bytes, ...]

    def to_payload(self) -> dict:
        return {
            "classes": list(self.classes),
            "samples": [
                {"b64": base64.b64encode(img).decode("ascii")} for img in self.images
            ],
        }

    @classmethod
    def from_payload(cls, data: dict) -> "ClassifyRequest":
        return cls(
            classes=tuple(data["classes"]),
            images=tuple(base64.b64decode(s["b64"]) for s in data["samples"]),
        )


@dataclass(frozen=True)
class ClassifyResponse:
    distributions: tuple[dict, ...]

    def to_payload(self) -> dict:
        return {"distributions": [dict(d) for d in self.distributions]}

    @classmethod
    def from_payload(cls, data: dict) -> "ClassifyResponse":
        return cls(distributions=tuple(dict(d) for d in data["distributions"]))


class _Transport:
    """Shared POST-with-retries plumbing for the two client classes."""

    def __init__(
        self,
        base_url: str,
        timeout: float = 120.0,
        retries: int = 3,
        backoff: float = 1.0,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.session = session or requests.Session()
        self.sleep = sleep

    def post(self, path: str, payload: dict) -> dict:
        url = self.base_url + path
        last_error: TransportError | None = None
        for attempt in range(self.retries + 1):
            if attempt > 0:
                self.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                resp = self.session.post(url, json=payload, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = TransportError(f"POST {url} failed: {exc}")
                continue
            if resp.status_code == 200:
                try:
                    return resp.json()
                except ValueError as exc:
                    raise ProtocolError(f"non-JSON body from {url}: {exc}") from exc
            detail = self._error_detail(resp)
            err = TransportError(
                f"POST {url} returned {resp.status_code}: {detail}",
                status=resp.status_code,
            )
            if 400 <= resp.status_code < 500:
                raise err  # the request itself is bad; retrying cannot help
            last_error = err
        raise last_error

    @staticmethod
    def _error_detail(resp) -> str:
        try:
            return resp.json().get("error", resp.text[:200])
        except ValueError:
            return resp.text[:200]


class RemoteGenerator(GeneratorBackend):
    def __init__(self, base_url: str, **transport_kwargs):
        self._t = _Transport(base_url, **transport_kwargs)

    def generate(self, prompt: str, settings: GenerationSettings) -> list[Sample]:
        if not prompt:
            raise ValueError("prompt must be nonempty")
        req = GenerateRequest(
            prompt=prompt,
            n_samples=settings.n_samples,
            steps=settings.steps,
            resolution=settings.resolution,
            seed=settings.seed,
        )
        data = self._t.post("/v1/generate", req.to_payload())
        try:
            resp = GenerateResponse.from_payload(data)
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed generate response: {exc}") from exc
        if len(resp.images) != settings.n_samples:
            raise ProtocolError(
                f"asked for {settings.n_samples} samples, got {len(resp.images)}"
            )
        return [
            Sample(payload=img, kind=KIND_IMAGE, origin_prompt=prompt, index=i)
            for i, img in enumerate(resp.images)
        ]


class RemoteClassifier(ClassifierBackend):
    def __init__(self, base_url: str, **transport_kwargs):
        self._t = _Transport(base_url, **transport_kwargs)

    def classify(
        self, samples: list[Sample], classes: list[str]
    ) -> list[ClassDistribution]:
        if not classes:
            raise ValueError("classes must be nonempty")
        if not samples:
            return []
        for s in samples:
            if s.kind != KIND_IMAGE:
                raise ValueError(
                    f"remote classifier accepts image samples, got {s.kind!r}"
                )
        req = ClassifyRequest(
            classes=tuple(classes), images=tuple(s.payload for s in samples)
        )
        data = self._t.post("/v1/classify", req.to_payload())
        try:
            resp = ClassifyResponse.from_payload(data)
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed classify response: {exc}") from exc
        if len(resp.distributions) != len(samples):
            raise ProtocolError(
                f"sent {len(samples)} samples, got {len(resp.distributions)} distributions"
            )
        out = []
        for d in resp.distributions:
            if set(d) != set(classes):
                raise ProtocolError(
                    f"distribution classes {sorted(d)} != requested {sorted(classes)}"
                )
            try:
                out.append(ClassDistribution(probabilities={c: float(d[c]) for c in d}))
            except ValueError as exc:
                raise ProtocolError(f"invalid distribution from server: {exc}") from exc
        return out
