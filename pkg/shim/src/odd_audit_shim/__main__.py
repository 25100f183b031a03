"""Command line entry: build the app from flags and serve it with uvicorn."""
import argparse

import uvicorn

from .config import PROCEDURAL, ShimConfig
from .server import create_app


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="odd-audit-shim",
        description="Serve a generator and a classifier behind the audit wire protocol.",
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8767)
    parser.add_argument(
        "--generator",
        default=PROCEDURAL,
        help="text-to-image model id, or 'procedural' for the built-in one",
    )
    parser.add_argument(
        "--classifier",
        default=PROCEDURAL,
        help="zero-shot classifier model id, or 'procedural'",
    )
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--max-batch", type=int, default=8)
    parser.add_argument(
        "--no-prompt-weights",
        action="store_true",
        help="parse '(token:w)' syntax but ignore the weights",
    )
    parser.add_argument("--sampler", default="dpmpp-2m")
    parser.add_argument("--log-level", default="warning")
    args = parser.parse_args(argv)

    config = ShimConfig(
        generator_model=args.generator,
        classifier_model=args.classifier,
        device=args.device,
        port=args.port,
        max_batch=args.max_batch,
        apply_prompt_weights=not args.no_prompt_weights,
        sampler=args.sampler,
    )
    uvicorn.run(
        create_app(config), host=args.host, port=args.port, log_level=args.log_level
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
