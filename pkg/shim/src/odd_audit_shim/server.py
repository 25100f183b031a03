"""HTTP front: the wire protocol over whatever models the config selects.

Requests are parsed by hand so malformed bodies always come back as
400 with ``{"error": ...}`` rather than framework-shaped validation
output.  Model calls are serialized behind a lock and large generation
requests are fed to the model in max_batch chunks.
"""
import base64
import binascii
import io
import threading
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from PIL import Image, UnidentifiedImageError

from .config import ShimConfig
from .models import load_classifier, load_generator

MAX_SAMPLES = 4096
MAX_RESOLUTION = 2048
MAX_STEPS = 1000


class _Backend:
    """Holds the models plus the loading state the health endpoint reports."""

    def __init__(self, config: ShimConfig):
        self.config = config
        self.status = "loading"
        self.detail = ""
        self.generator = None
        self.classifier = None
        self.lock = threading.Lock()

    def load(self):
        try:
            self.generator = load_generator(self.config)
            self.classifier = load_classifier(self.config)
            self.status = "ok"
        except Exception as exc:
            self.status = "error"
            self.detail = str(exc)

    def generate(self, prompt, n_samples, steps, resolution, seed):
        out = []
        for start in range(0, n_samples, self.config.max_batch):
            count = min(self.config.max_batch, n_samples - start)
            with self.lock:
                out.extend(
                    self.generator.generate(
                        prompt, count, steps, resolution, seed, index_offset=start
                    )
                )
        return out

    def classify(self, images, classes):
        out = []
        for start in range(0, len(images), self.config.max_batch):
            chunk = images[start : start + self.config.max_batch]
            with self.lock:
                out.extend(self.classifier.classify(chunk, classes))
        return out


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=status)


def _require_int(body: dict, key: str, default=None):
    value = body.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"{key!r} must be an integer")
    return value


async def _json_body(request: Request) -> dict:
    try:
        body = await request.json()
    except Exception:
        raise ValueError("request body must be JSON")
    if not isinstance(body, dict):
        raise ValueError("request body must be a JSON object")
    return body


def create_app(config: ShimConfig | None = None) -> FastAPI:
    config = config or ShimConfig()
    backend = _Backend(config)

    @asynccontextmanager
    async def lifespan(app):
        # Real models can take minutes; answer 503 meanwhile.
        threading.Thread(target=backend.load, daemon=True).start()
        yield

    app = FastAPI(title="odd-audit-shim", lifespan=lifespan)
    app.state.backend = backend

    def unavailable():
        if backend.status == "loading":
            return _error(503, "models are still loading")
        if backend.status == "error":
            return _error(503, f"model loading failed: {backend.detail}")
        return None

    @app.get("/v1/health")
    def health():
        from . import __version__

        busy = unavailable()
        if busy is not None:
            return busy
        return {
            "status": "ok",
            "generator": backend.generator.model_id,
            "classifier": backend.classifier.model_id,
            "version": __version__,
        }

    @app.post("/v1/generate")
    async def generate(request: Request):
        busy = unavailable()
        if busy is not None:
            return busy
        try:
            body = await _json_body(request)
            prompt = body.get("prompt")
            if not isinstance(prompt, str) or not prompt:
                raise ValueError("'prompt' must be a nonempty string")
            n_samples = _require_int(body, "n_samples")
            steps = _require_int(body, "steps", 20)
            resolution = _require_int(body, "resolution", 512)
            seed = _require_int(body, "seed", 0)
            if not 1 <= n_samples <= MAX_SAMPLES:
                raise ValueError(f"'n_samples' must lie in [1, {MAX_SAMPLES}]")
            if not 1 <= steps <= MAX_STEPS:
                raise ValueError(f"'steps' must lie in [1, {MAX_STEPS}]")
            if not 8 <= resolution <= MAX_RESOLUTION:
                raise ValueError(f"'resolution' must lie in [8, {MAX_RESOLUTION}]")
        except ValueError as exc:
            return _error(400, str(exc))

        try:
            images = backend.generate(prompt, n_samples, steps, resolution, seed)
        except Exception as exc:
            return _error(500, f"generation failed: {exc}")
        return {
            "samples": [
                {"b64": base64.b64encode(img).decode("ascii")} for img in images
            ]
        }

    @app.post("/v1/classify")
    async def classify(request: Request):
        busy = unavailable()
        if busy is not None:
            return busy
        try:
            body = await _json_body(request)
            classes = body.get("classes")
            if (
                not isinstance(classes, list)
                or not classes
                or any(not isinstance(c, str) or not c for c in classes)
            ):
                raise ValueError("'classes' must be a nonempty list of nonempty strings")
            if len(set(classes)) != len(classes):
                raise ValueError("'classes' must be distinct")
            raw = body.get("samples")
            if not isinstance(raw, list):
                raise ValueError("'samples' must be a list")
            images = []
            for i, entry in enumerate(raw):
                if not isinstance(entry, dict) or not isinstance(entry.get("b64"), str):
                    raise ValueError(f"samples[{i}] must be an object with a 'b64' string")
                try:
                    data = base64.b64decode(entry["b64"], validate=True)
                except binascii.Error:
                    raise ValueError(f"samples[{i}].b64 is not valid base64")
                try:
                    Image.open(io.BytesIO(data)).verify()
                except (UnidentifiedImageError, OSError):
                    raise ValueError(f"samples[{i}] does not decode as an image")
                images.append(data)
        except ValueError as exc:
            return _error(400, str(exc))

        if not images:
            return {"distributions": []}
        try:
            dists = backend.classify(images, classes)
        except Exception as exc:
            return _error(500, f"classification failed: {exc}")
        return {"distributions": dists}

    return app
