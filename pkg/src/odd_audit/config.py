"""TOML run configuration: parsing with collected errors, and rendering back.

A config file carries the ODD under audit, the prompt template, run
parameters, the backend selection, and optional benchmark/coverage sections.
Parsing gathers every problem it can find before failing, so a bad file is
fixed in one round trip.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:
    import tomli as tomllib

import tomlkit

from .hashing import fingerprint
from .odd import OperationalDesignDomain, PromptTemplate, SemanticDimension

AGGREGATORS = ("median", "mean")
LOSSES = ("confidence", "zero_one")
BACKEND_KINDS = ("synthetic", "remote")
COVERAGE_MODES = ("conditional", "unconditional")


class ConfigError(Exception):
    """Carries every validation problem found in one parse."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class WorldConfig:
    dim: int = 512
    noise_sigma: float = 0.05
    oos_rate: float = 0.0
    ooc_rate: float = 0.0
    seed: int = 0
    completion_bias: float = 0.5
    temperature: float = 100.0

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "noise_sigma": self.noise_sigma,
            "oos_rate": self.oos_rate,
            "ooc_rate": self.ooc_rate,
            "seed": self.seed,
            "completion_bias": self.completion_bias,
            "temperature": self.temperature,
        }


@dataclass(frozen=True)
class BenchConfig:
    n_injections: int = 20
    n_samples_sweep: tuple[int, ...] = (2, 4, 8, 16, 32)
    class_b: str | None = None
    temperature: float = 100.0
    value_weight: float = 1.0
    seed: int | None = None  # defaults to the run seed

    def to_dict(self) -> dict:
        return {
            "n_injections": self.n_injections,
            "n_samples_sweep": list(self.n_samples_sweep),
            "class_b": self.class_b,
            "temperature": self.temperature,
            "value_weight": self.value_weight,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class CoverageConfig:
    mode: str = "conditional"
    samples_per_subgroup: int = 400
    alpha: float = 0.05
    unconditional_prompt: str | None = None

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "samples_per_subgroup": self.samples_per_subgroup,
            "alpha": self.alpha,
            "unconditional_prompt": self.unconditional_prompt,
        }


@dataclass(frozen=True)
class AuditConfig:
    odd: OperationalDesignDomain
    template: PromptTemplate
    strength: int = 2
    n_samples: int = 16
    steps: int = 20
    resolution: int = 512
    seed: int = 0
    parallelism: int = 1
    aggregator: str = "median"
    loss: str = "confidence"
    recheck_samples: int = 0
    backend_kind: str = "synthetic"
    base_url: str | None = None
    world: WorldConfig = field(default_factory=WorldConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    coverage: CoverageConfig = field(default_factory=CoverageConfig)
    output_dir: str = "out"
    output_formats: tuple[str, ...] = ("json", "csv")
    unconditional_prompt: str | None = None

    def to_dict(self) -> dict:
        return {
            "odd": self.odd.to_dict(),
            "prompt": {
                "template": self.template.template,
                "class_weight": self.template.class_weight,
                "unconditional": self.unconditional_prompt,
            },
            "run": {
                "strength": self.strength,
                "n_samples": self.n_samples,
                "steps": self.steps,
                "resolution": self.resolution,
                "seed": self.seed,
                "parallelism": self.parallelism,
                "aggregator": self.aggregator,
                "loss": self.loss,
                "recheck_samples": self.recheck_samples,
            },
            "backend": {
                "kind": self.backend_kind,
                "base_url": self.base_url,
                "synthworld": self.world.to_dict(),
            },
            "bench": self.bench.to_dict(),
            "coverage": self.coverage.to_dict(),
            "output": {
                "dir": self.output_dir,
                "formats": list(self.output_formats),
            },
        }

    def fingerprint(self) -> str:
        """Hash of everything that can change audit *results*.

        Execution-only knobs (parallelism, output destination, resolved
        backend URL) are excluded: the same logical run must fingerprint the
        same regardless of how or where it is executed.
        """
        data = self.to_dict()
        del data["run"]["parallelism"]
        del data["backend"]["base_url"]
        del data["output"]
        return fingerprint(data)


class _Reader:
    """Typed dict access that records problems instead of raising."""

    def __init__(self, data: dict, problems: list[str]):
        self.data = data
        self.problems = problems

    def get(self, section: str, key: str, expected, default=None, required=False):
        sec = self.data.get(section)
        if sec is None:
            if required:
                self.problems.append(f"missing section [{section}]")
            return default
        if not isinstance(sec, dict):
            self.problems.append(f"[{section}] must be a table")
            return default
        if key not in sec:
            if required:
                self.problems.append(f"missing key {key!r} in [{section}]")
            return default
        value = sec[key]
        if expected is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, expected) or isinstance(value, bool) and expected is int:
            self.problems.append(
                f"[{section}] {key} must be {getattr(expected, '__name__', expected)}"
            )
            return default
        return value


def _parse_odd(data: dict, problems: list[str]) -> OperationalDesignDomain | None:
    sec = data.get("odd")
    if not isinstance(sec, dict):
        problems.append("missing section [odd]")
        return None
    source = sec.get("source_class")
    if not isinstance(source, str) or not source:
        problems.append("[odd] source_class must be a nonempty string")
        return None
    targets = sec.get("target_classes", [])
    if not isinstance(targets, list) or any(not isinstance(t, str) for t in targets):
        problems.append("[odd] target_classes must be a list of strings")
        return None
    dims_raw = sec.get("dimensions")
    if not isinstance(dims_raw, list) or not dims_raw:
        problems.append("[odd] needs at least one [[odd.dimensions]] entry")
        return None
    dims = []
    for i, d in enumerate(dims_raw):
        if not isinstance(d, dict):
            problems.append(f"[[odd.dimensions]] entry {i} must be a table")
            return None
        name = d.get("name")
        values = d.get("values")
        if not isinstance(name, str) or not name:
            problems.append(f"[[odd.dimensions]] entry {i}: name must be a nonempty string")
            return None
        if not isinstance(values, list) or any(not isinstance(v, str) for v in values):
            problems.append(f"dimension {name!r}: values must be a list of strings")
            return None
        try:
            dims.append(
                SemanticDimension(
                    name=name,
                    values=tuple(values),
                    neutral_first=bool(d.get("neutral_first", False)),
                )
            )
        except ValueError as exc:
            problems.append(str(exc))
            return None
    try:
        return OperationalDesignDomain(
            dimensions=tuple(dims), source_class=source, target_classes=tuple(targets)
        )
    except ValueError as exc:
        problems.append(str(exc))
        return None


def parse_config_text(text: str, origin: str = "<config>") -> AuditConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{origin}: invalid TOML: {exc}"]) from exc

    problems: list[str] = []
    r = _Reader(data, problems)

    odd = _parse_odd(data, problems)

    template_text = r.get("prompt", "template", str, required=True)
    class_weight = r.get("prompt", "class_weight", float, default=1.5)
    unconditional = r.get("prompt", "unconditional", str, default=None)
    template = None
    if template_text is not None and class_weight is not None:
        try:
            template = PromptTemplate(template=template_text, class_weight=class_weight)
        except ValueError as exc:
            problems.append(f"[prompt] {exc}")

    strength = r.get("run", "strength", int, default=2)
    n_samples = r.get("run", "n_samples", int, default=16)
    steps = r.get("run", "steps", int, default=20)
    resolution = r.get("run", "resolution", int, default=512)
    seed = r.get("run", "seed", int, default=0)
    parallelism = r.get("run", "parallelism", int, default=1)
    aggregator = r.get("run", "aggregator", str, default="median")
    loss = r.get("run", "loss", str, default="confidence")
    recheck = r.get("run", "recheck_samples", int, default=0)

    for name, value in (
        ("n_samples", n_samples),
        ("steps", steps),
        ("resolution", resolution),
        ("parallelism", parallelism),
    ):
        if value is not None and value < 1:
            problems.append(f"[run] {name} must be >= 1")
    if recheck is not None and recheck < 0:
        problems.append("[run] recheck_samples must be >= 0")
    if aggregator not in AGGREGATORS:
        problems.append(f"[run] aggregator must be one of {AGGREGATORS}")
    if loss not in LOSSES:
        problems.append(f"[run] loss must be one of {LOSSES}")
    if odd is not None and strength is not None:
        if not 1 <= strength <= odd.n_dimensions:
            problems.append(
                f"[run] strength {strength} outside [1, {odd.n_dimensions}]"
            )

    backend_kind = r.get("backend", "kind", str, default="synthetic")
    base_url = r.get("backend", "base_url", str, default=None)
    if backend_kind not in BACKEND_KINDS:
        problems.append(f"[backend] kind must be one of {BACKEND_KINDS}")

    world_raw = data.get("backend", {}).get("synthworld", {}) if isinstance(
        data.get("backend"), dict
    ) else {}
    world = WorldConfig()
    if isinstance(world_raw, dict):
        try:
            world = WorldConfig(
                dim=int(world_raw.get("dim", 512)),
                noise_sigma=float(world_raw.get("noise_sigma", 0.05)),
                oos_rate=float(world_raw.get("oos_rate", 0.0)),
                ooc_rate=float(world_raw.get("ooc_rate", 0.0)),
                seed=int(world_raw.get("seed", 0)),
                completion_bias=float(world_raw.get("completion_bias", 0.5)),
                temperature=float(world_raw.get("temperature", 100.0)),
            )
        except (TypeError, ValueError) as exc:
            problems.append(f"[backend.synthworld] {exc}")
    else:
        problems.append("[backend.synthworld] must be a table")

    bench_raw = data.get("bench", {})
    bench = BenchConfig()
    if isinstance(bench_raw, dict):
        sweep = bench_raw.get("n_samples_sweep", [2, 4, 8, 16, 32])
        if not isinstance(sweep, list) or any(
            not isinstance(x, int) or isinstance(x, bool) or x < 1 for x in sweep
        ):
            problems.append("[bench] n_samples_sweep must be a list of positive integers")
            sweep = [16]
        try:
            bench = BenchConfig(
                n_injections=int(bench_raw.get("n_injections", 20)),
                n_samples_sweep=tuple(sweep),
                class_b=bench_raw.get("class_b"),
                temperature=float(bench_raw.get("temperature", 100.0)),
                value_weight=float(bench_raw.get("value_weight", 1.0)),
                seed=bench_raw.get("seed"),
            )
        except (TypeError, ValueError) as exc:
            problems.append(f"[bench] {exc}")
    else:
        problems.append("[bench] must be a table")

    cov_raw = data.get("coverage", {})
    coverage = CoverageConfig()
    if isinstance(cov_raw, dict):
        mode = cov_raw.get("mode", "conditional")
        if mode not in COVERAGE_MODES:
            problems.append(f"[coverage] mode must be one of {COVERAGE_MODES}")
            mode = "conditional"
        try:
            coverage = CoverageConfig(
                mode=mode,
                samples_per_subgroup=int(cov_raw.get("samples_per_subgroup", 400)),
                alpha=float(cov_raw.get("alpha", 0.05)),
                unconditional_prompt=cov_raw.get("unconditional_prompt"),
            )
        except (TypeError, ValueError) as exc:
            problems.append(f"[coverage] {exc}")
        if coverage.samples_per_subgroup < 1:
            problems.append("[coverage] samples_per_subgroup must be >= 1")
        if not 0.0 < coverage.alpha < 1.0:
            problems.append("[coverage] alpha must lie strictly between 0 and 1")
    else:
        problems.append("[coverage] must be a table")

    output_dir = r.get("output", "dir", str, default="out")
    formats_raw = data.get("output", {}).get("formats", ["json", "csv"]) if isinstance(
        data.get("output"), dict
    ) else ["json", "csv"]
    if not isinstance(formats_raw, list) or any(
        f not in ("json", "csv") for f in formats_raw
    ):
        problems.append('[output] formats entries must be "json" or "csv"')
        formats_raw = ["json", "csv"]

    # Cross checks that need both the ODD and the template.
    if odd is not None and template is not None:
        dim_names = set(odd.dimension_names)
        for name in template.placeholders():
            if name != "class" and name not in dim_names:
                problems.append(
                    f"[prompt] placeholder {{{name}}} names no dimension of the ODD"
                )

    if problems:
        raise ConfigError([f"{origin}: {p}" for p in problems])

    return AuditConfig(
        odd=odd,
        template=template,
        strength=strength,
        n_samples=n_samples,
        steps=steps,
        resolution=resolution,
        seed=seed,
        parallelism=parallelism,
        aggregator=aggregator,
        loss=loss,
        recheck_samples=recheck,
        backend_kind=backend_kind,
        base_url=base_url,
        world=world,
        bench=bench,
        coverage=coverage,
        output_dir=output_dir,
        output_formats=tuple(formats_raw),
        unconditional_prompt=unconditional,
    )


def parse_config(path: str | Path) -> AuditConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc}"]) from exc
    return parse_config_text(text, origin=str(path))


def render_config(cfg: AuditConfig) -> str:
    """TOML text that parses back to an equal config."""
    doc = tomlkit.document()

    odd_tbl = tomlkit.table()
    odd_tbl["source_class"] = cfg.odd.source_class
    odd_tbl["target_classes"] = list(cfg.odd.target_classes)
    dims = tomlkit.aot()
    for d in cfg.odd.dimensions:
        entry = tomlkit.table()
        entry["name"] = d.name
        entry["values"] = list(d.values)
        entry["neutral_first"] = d.neutral_first
        dims.append(entry)
    odd_tbl["dimensions"] = dims
    doc["odd"] = odd_tbl

    prompt = tomlkit.table()
    prompt["template"] = cfg.template.template
    prompt["class_weight"] = cfg.template.class_weight
    if cfg.unconditional_prompt is not None:
        prompt["unconditional"] = cfg.unconditional_prompt
    doc["prompt"] = prompt

    run = tomlkit.table()
    for key, value in (
        ("strength", cfg.strength),
        ("n_samples", cfg.n_samples),
        ("steps", cfg.steps),
        ("resolution", cfg.resolution),
        ("seed", cfg.seed),
        ("parallelism", cfg.parallelism),
        ("aggregator", cfg.aggregator),
        ("loss", cfg.loss),
        ("recheck_samples", cfg.recheck_samples),
    ):
        run[key] = value
    doc["run"] = run

    backend = tomlkit.table()
    backend["kind"] = cfg.backend_kind
    if cfg.base_url is not None:
        backend["base_url"] = cfg.base_url
    sw = tomlkit.table()
    for key, value in cfg.world.to_dict().items():
        sw[key] = value
    backend["synthworld"] = sw
    doc["backend"] = backend

    bench = tomlkit.table()
    bench["n_injections"] = cfg.bench.n_injections
    bench["n_samples_sweep"] = list(cfg.bench.n_samples_sweep)
    if cfg.bench.class_b is not None:
        bench["class_b"] = cfg.bench.class_b
    bench["temperature"] = cfg.bench.temperature
    bench["value_weight"] = cfg.bench.value_weight
    if cfg.bench.seed is not None:
        bench["seed"] = cfg.bench.seed
    doc["bench"] = bench

    cov = tomlkit.table()
    cov["mode"] = cfg.coverage.mode
    cov["samples_per_subgroup"] = cfg.coverage.samples_per_subgroup
    cov["alpha"] = cfg.coverage.alpha
    if cfg.coverage.unconditional_prompt is not None:
        cov["unconditional_prompt"] = cfg.coverage.unconditional_prompt
    doc["coverage"] = cov

    out = tomlkit.table()
    out["dir"] = cfg.output_dir
    out["formats"] = list(cfg.output_formats)
    doc["output"] = out

    return tomlkit.dumps(doc)


def build_world(cfg: AuditConfig) -> "EmbeddingWorld":
    from .synthworld import EmbeddingWorld

    return EmbeddingWorld.for_odd(
        cfg.odd,
        dim=cfg.world.dim,
        noise_sigma=cfg.world.noise_sigma,
        oos_rate=cfg.world.oos_rate,
        ooc_rate=cfg.world.ooc_rate,
        seed=cfg.world.seed,
    )


def build_backends(cfg: AuditConfig):
    """(generator, classifier, posterior-or-None) for the configured backend."""
    from .backends.remote import RemoteClassifier, RemoteGenerator, resolve_base_url
    from .backends.synthetic import (
        SyntheticClassifier,
        SyntheticGenerator,
        SyntheticPosterior,
    )

    if cfg.backend_kind == "synthetic":
        world = build_world(cfg)
        return (
            SyntheticGenerator(
                world,
                cfg.odd,
                template=cfg.template,
                completion_bias=cfg.world.completion_bias,
            ),
            SyntheticClassifier(world, temperature=cfg.world.temperature),
            SyntheticPosterior(world, temperature=cfg.world.temperature),
        )
    base = resolve_base_url(cfg.base_url)
    return RemoteGenerator(base), RemoteClassifier(base), None
