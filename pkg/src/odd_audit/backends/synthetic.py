"""Backends that run the audit protocol against the synthetic world.

The generator reads prompts the way a text-to-image model would: it finds the
weighted class token ``(name:w)`` and recovers dimension values from the
surrounding text.  When it knows the prompt template it anchors on the
template's literal scaffold and decodes values exactly; otherwise it scans
for values as whole words.  A dimension the prompt leaves open falls back to
its neutral value when it has one, else the sample completes it from a skewed
prior, the way an unconditioned generator still draws *some* attribute.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass

import numpy as np

from ..hashing import derive_seed
from ..odd import OperationalDesignDomain, PromptError, PromptTemplate
from ..synthworld import (
    EmbeddingWorld,
    PoisonedZeroShot,
    _sample_embedding,
    poisoned_classify,
    query_embedding,
)
from .base import (
    KIND_EMBEDDING,
    ClassDistribution,
    ClassifierBackend,
    GenerationSettings,
    GeneratorBackend,
    PosteriorBackend,
    Sample,
)

_CLASS_TOKEN = re.compile(r"\(([^:()]+):([0-9.]+)\)")
_AMBIGUOUS = object()


@dataclass(frozen=True)
class ParsedPrompt:
    class_name: str
    class_weight: float
    # One entry per dimension: a value string, or None when the prompt does
    # not pin the dimension down at all.
    dim_values: tuple[str | None, ...]


def _extract_class(prompt: str) -> tuple[str, float, str]:
    tokens = _CLASS_TOKEN.findall(prompt)
    if len(tokens) != 1:
        raise PromptError(
            f"expected exactly one (class:weight) token in {prompt!r}, found {len(tokens)}"
        )
    name, weight_text = tokens[0]
    try:
        weight = float(weight_text)
    except ValueError:
        raise PromptError(f"bad class weight {weight_text!r} in {prompt!r}") from None
    body = _CLASS_TOKEN.sub(" ", prompt)
    return name, weight, body


class _TemplateMatcher:
    """Exact prompt decoding anchored on a template's literal text.

    The template splits into literal scaffold chunks and runs of adjacent
    placeholders; a prompt is matched against the scaffold and each captured
    segment is looked up in a precomputed table of every value combination
    the run can render to.
    """

    def __init__(self, template: PromptTemplate, odd: OperationalDesignDomain):
        parts = re.split(r"(\{[^{}]*\})", template.template)
        pattern = r"^\s*"
        runs: list[tuple[str, ...]] = []
        current: list[str] = []
        for part in parts:
            if not part:
                continue
            if part.startswith("{") and part.endswith("}"):
                current.append(part[1:-1])
                continue
            tokens = part.split()
            if not tokens:
                continue  # whitespace-only literal keeps the run open
            if current:
                pattern += rf"(?P<g{len(runs)}>.*?)\s*"
                runs.append(tuple(current))
                current = []
            pattern += r"\s+".join(re.escape(t) for t in tokens) + r"\s*"
        if current:
            pattern += rf"(?P<g{len(runs)}>.*?)\s*"
            runs.append(tuple(current))
        pattern += "$"
        self.regex = re.compile(pattern)
        self.runs = tuple(runs)
        self.odd = odd
        self._tables: dict[int, dict[str, tuple[str, ...]]] = {}

    def _table(self, run_index: int) -> dict[str, tuple[str, ...]]:
        """joined segment text -> unique value combination for this run."""
        if run_index not in self._tables:
            names = [n for n in self.runs[run_index] if n != "class"]
            table: dict[str, object] = {}
            value_lists = [self.odd.dimension(n).values for n in names]
            for combo in itertools.product(*value_lists):
                joined = " ".join(v for v in combo if v)
                table[joined] = _AMBIGUOUS if joined in table else combo
            self._tables[run_index] = table
        return self._tables[run_index]

    def parse(self, prompt: str) -> ParsedPrompt | None:
        class_name, weight, _ = _extract_class(prompt)
        m = self.regex.match(prompt)
        if m is None:
            return None
        by_name: dict[str, str] = {}
        for i, run in enumerate(self.runs):
            segment = _CLASS_TOKEN.sub(" ", m.group(f"g{i}"))
            segment = " ".join(segment.split())
            names = [n for n in run if n != "class"]
            if not names:
                if segment:
                    return None
                continue
            combo = self._table(i).get(segment)
            if combo is None or combo is _AMBIGUOUS:
                return None
            for n, v in zip(names, combo):
                by_name[n] = v
        dim_values = tuple(
            by_name.get(d.name, "" if d.values[0] == "" else None)
            for d in self.odd.dimensions
        )
        return ParsedPrompt(class_name=class_name, class_weight=weight, dim_values=dim_values)


def parse_prompt(
    prompt: str,
    odd: OperationalDesignDomain,
    template: PromptTemplate | None = None,
) -> ParsedPrompt:
    """Recover (class, weight, dimension values) from rendered prompt text."""
    if not prompt:
        raise ValueError("prompt must be nonempty")
    if template is not None:
        parsed = _TemplateMatcher(template, odd).parse(prompt)
        if parsed is not None:
            return parsed
    return _scan_prompt(prompt, odd)


def _scan_prompt(prompt: str, odd: OperationalDesignDomain) -> ParsedPrompt:
    """Whole-word scan for free-form prompts that match no known template."""
    class_name, weight, body = _extract_class(prompt)
    dim_values: list[str | None] = []
    for d in odd.dimensions:
        found = []
        for v in d.values:
            if v and re.search(rf"(?<!\w){re.escape(v)}(?!\w)", body):
                found.append(v)
        # Discard matches contained in a longer match ("lake" inside "lake shore").
        found = [v for v in found if not any(v != w and v in w for w in found)]
        if len(found) > 1:
            raise PromptError(
                f"prompt {prompt!r} is ambiguous for dimension {d.name!r}: {found}"
            )
        if found:
            dim_values.append(found[0])
        elif d.values[0] == "":
            dim_values.append("")  # silent neutral value
        else:
            dim_values.append(None)
    return ParsedPrompt(
        class_name=class_name, class_weight=weight, dim_values=tuple(dim_values)
    )


class SyntheticGenerator(GeneratorBackend):
    """Deterministic per (prompt, seed); embedding payloads of the world's dim."""

    # Geometric decay for completing unpinned dimensions: value j of a
    # dimension gets weight completion_bias**j, so late values are rare.
    def __init__(
        self,
        world: EmbeddingWorld,
        odd: OperationalDesignDomain,
        template: PromptTemplate | None = None,
        completion_bias: float = 0.5,
    ):
        if not 0.0 < completion_bias <= 1.0:
            raise ValueError("completion_bias must lie in (0, 1]")
        self.world = world
        self.odd = odd
        self.completion_bias = completion_bias
        self._matcher = None if template is None else _TemplateMatcher(template, odd)

    @property
    def embedding_dim(self) -> int:
        return self.world.dim

    def _parse(self, prompt: str) -> ParsedPrompt:
        if not prompt:
            raise ValueError("prompt must be nonempty")
        if self._matcher is not None:
            parsed = self._matcher.parse(prompt)
            if parsed is not None:
                return parsed
        return _scan_prompt(prompt, self.odd)

    def generate(self, prompt: str, settings: GenerationSettings) -> list[Sample]:
        parsed = self._parse(prompt)
        if parsed.class_name not in self.world.concepts:
            raise PromptError(f"unknown class {parsed.class_name!r} in prompt")
        out = []
        for i in range(settings.n_samples):
            rng = np.random.default_rng(
                derive_seed(self.world.seed, settings.seed, "gen", prompt, i)
            )
            values = self._complete(parsed.dim_values, rng)
            x = _sample_embedding(
                self.world, rng, parsed.class_name, parsed.class_weight, values, self.odd
            )
            out.append(
                Sample(payload=x, kind=KIND_EMBEDDING, origin_prompt=prompt, index=i)
            )
        return out

    def _complete(
        self, dim_values: tuple[str | None, ...], rng: np.random.Generator
    ) -> list[str]:
        values = []
        for d, v in zip(self.odd.dimensions, dim_values):
            if v is None:
                weights = np.array(
                    [self.completion_bias**j for j in range(d.cardinality)]
                )
                j = int(rng.choice(d.cardinality, p=weights / weights.sum()))
                values.append(d.values[j])
            else:
                values.append(v)
        return values


class SyntheticClassifier(ClassifierBackend):
    """Zero-shot over single-concept queries; optionally a poisoned binary one."""

    def __init__(
        self,
        world: EmbeddingWorld,
        poison: PoisonedZeroShot | None = None,
        temperature: float = 100.0,
    ):
        if not (temperature > 0):
            raise ValueError("temperature must be positive")
        self.world = world
        self.poison = poison
        self.temperature = temperature

    def classify(
        self, samples: list[Sample], classes: list[str]
    ) -> list[ClassDistribution]:
        if not classes:
            raise ValueError("classes must be nonempty")
        if len(set(classes)) != len(classes):
            raise ValueError("duplicate class names")
        if not samples:
            return []
        for s in samples:
            if s.kind != KIND_EMBEDDING:
                raise ValueError(
                    f"synthetic classifier accepts embedding samples, got {s.kind!r}"
                )

        if self.poison is not None:
            expected = {self.poison.class_a, self.poison.class_b}
            if set(classes) != expected:
                raise ValueError(
                    f"poisoned classifier answers only {sorted(expected)}, "
                    f"asked for {sorted(classes)}"
                )
            return [poisoned_classify(self.poison, self.world, s) for s in samples]

        queries = np.stack([query_embedding(self.world, [c]) for c in classes])
        out = []
        for s in samples:
            x = np.asarray(s.payload, dtype=float)
            if x.shape != (self.world.dim,):
                raise ValueError(
                    f"embedding has shape {x.shape}, world dim is {self.world.dim}"
                )
            logits = self.temperature * (queries @ x)
            logits -= logits.max()
            exp = np.exp(logits)
            soft = exp / exp.sum()
            out.append(
                ClassDistribution(
                    probabilities={c: float(p) for c, p in zip(classes, soft)}
                )
            )
        return out


class SyntheticPosterior(PosteriorBackend):
    """Per-dimension value posteriors from cosine against class+value queries."""

    def __init__(self, world: EmbeddingWorld, temperature: float = 100.0):
        if not (temperature > 0):
            raise ValueError("temperature must be positive")
        self.world = world
        self.temperature = temperature
        self._query_cache: dict[str, list[np.ndarray]] = {}

    def _queries(self, odd: OperationalDesignDomain) -> list[np.ndarray]:
        key = odd.fingerprint()
        if key not in self._query_cache:
            per_dim = []
            for d in odd.dimensions:
                rows = []
                for v in d.values:
                    concepts = [odd.source_class] + ([v] if v else [])
                    rows.append(query_embedding(self.world, concepts))
                per_dim.append(np.stack(rows))
            self._query_cache[key] = per_dim
        return self._query_cache[key]

    def subgroup_posterior(
        self, sample: Sample, odd: OperationalDesignDomain
    ) -> list[np.ndarray]:
        if sample.kind != KIND_EMBEDDING:
            raise ValueError("posterior backend consumes embedding samples")
        x = np.asarray(sample.payload, dtype=float)
        if x.shape != (self.world.dim,):
            raise ValueError(
                f"embedding has shape {x.shape}, world dim is {self.world.dim}"
            )
        out = []
        for queries in self._queries(odd):
            logits = self.temperature * (queries @ x)
            logits -= logits.max()
            exp = np.exp(logits)
            out.append(exp / exp.sum())
        return out
