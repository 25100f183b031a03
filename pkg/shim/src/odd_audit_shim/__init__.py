"""Serving shim for the audit wire protocol.

Exposes ``POST /v1/generate`` and ``POST /v1/classify`` (plus a health
endpoint) in front of a text-to-image generator and an image classifier.
The default backends are procedural: deterministic, weight-aware image
synthesis from prompt tokens, with a classifier that scores images against
renderings of the class names.  Real model adapters load lazily when real
model ids are configured.
"""
from .config import ShimConfig
from .server import create_app

__version__ = "0.1.0"

__all__ = ["ShimConfig", "create_app", "__version__"]
