"""A closed synthetic world with known ground truth.

Concepts (classes and dimension values) live as fixed random unit vectors in
an embedding space.  Generation sums the class vector and one value vector
per dimension, adds Gaussian noise and normalizes, so cosine similarity plays
the role a contrastive vision-language encoder plays for real images.  On top
of this sit zero-shot classifiers whose query set can carry deliberately
poisoned entries targeting one subgroup, giving audits a known answer to
recover.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .backends.base import KIND_EMBEDDING, ClassDistribution, Sample
from .hashing import derive_seed
from .odd import OperationalDesignDomain, Subgroup, validate_subgroup


class UnknownConceptError(KeyError):
    """A name was used that the world never registered."""


def _normalize(v: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ValueError("cannot normalize the zero vector")
    return v / norm


@lru_cache(maxsize=None)
def _concept_vector(world_seed: int, dim: int, name: str) -> np.ndarray:
    rng = np.random.default_rng(derive_seed(world_seed, "concept", name))
    v = _normalize(rng.standard_normal(dim))
    v.setflags(write=False)
    return v


@dataclass(frozen=True)
class EmbeddingWorld:
    """Registry of concept vectors plus the generative noise model.

    ``oos_rate`` is the chance a generated sample swaps one dimension value
    for another (the prompt asked for X, the sample shows Y); ``ooc_rate`` is
    the chance the class vector itself is replaced by a different class.
    """

    concepts: frozenset[str]
    dim: int = 512
    noise_sigma: float = 0.05
    oos_rate: float = 0.0
    ooc_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "concepts", frozenset(self.concepts))
        if self.dim < 2:
            raise ValueError("embedding dimension must be >= 2")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be >= 0")
        for name, rate in (("oos_rate", self.oos_rate), ("ooc_rate", self.ooc_rate)):
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for c in self.concepts:
            if not c:
                raise ValueError("concept names must be nonempty")

    @classmethod
    def for_odd(cls, odd: OperationalDesignDomain, **kwargs) -> "EmbeddingWorld":
        """World whose concepts are the ODD's classes and nonempty values."""
        names = {odd.source_class, *odd.target_classes}
        for d in odd.dimensions:
            names.update(v for v in d.values if v)
        return cls(concepts=frozenset(names), **kwargs)

    def concept_vector(self, name: str) -> np.ndarray:
        if name not in self.concepts:
            raise UnknownConceptError(name)
        return _concept_vector(self.seed, self.dim, name)


def query_embedding(
    world: EmbeddingWorld,
    concepts: Sequence[str],
    weights: Sequence[float] | None = None,
) -> np.ndarray:
    """Normalized weighted sum of concept vectors; scale washes out, so
    repeated concepts collapse to the same query."""
    if not concepts:
        raise ValueError("a query needs at least one concept")
    if weights is None:
        weights = [1.0] * len(concepts)
    if len(weights) != len(concepts):
        raise ValueError("one weight per concept")
    acc = np.zeros(world.dim)
    for name, w in zip(concepts, weights):
        acc = acc + w * world.concept_vector(name)
    return _normalize(acc)


def _audit_classes(odd: OperationalDesignDomain) -> list[str]:
    return [odd.source_class, *odd.target_classes]


def _sample_embedding(
    world: EmbeddingWorld,
    rng: np.random.Generator,
    class_name: str,
    class_weight: float,
    dim_values: Sequence[str],
    odd: OperationalDesignDomain,
) -> np.ndarray:
    """One embedding; the rng is consumed in a fixed, documented order:
    out-of-subgroup swap, out-of-class swap, then the noise draw."""
    values = list(dim_values)

    if world.oos_rate > 0 and rng.random() < world.oos_rate:
        d = int(rng.integers(odd.n_dimensions))
        others = [v for v in odd.dimensions[d].values if v != values[d]]
        if others:
            values[d] = others[int(rng.integers(len(others)))]

    if world.ooc_rate > 0 and rng.random() < world.ooc_rate:
        others = [c for c in _audit_classes(odd) if c != class_name]
        if others:
            class_name = others[int(rng.integers(len(others)))]

    acc = class_weight * world.concept_vector(class_name)
    for v in values:
        if v:  # empty string is the neutral choice: no vector at all
            acc = acc + world.concept_vector(v)
    noise = rng.standard_normal(world.dim) * world.noise_sigma
    return _normalize(acc + noise)


def synth_generate(
    world: EmbeddingWorld,
    class_name: str,
    z: Subgroup,
    odd: OperationalDesignDomain,
    n: int,
    seed: int = 0,
    class_weight: float = 1.0,
    origin_prompt: str | None = None,
) -> list[Sample]:
    """n embedding samples for one subgroup.

    Each sample is seeded from (world seed, call seed, class, z, index), so
    any slice of the output can be regenerated independently.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if class_name not in world.concepts:
        raise UnknownConceptError(class_name)
    validate_subgroup(odd, z)
    prompt = origin_prompt
    if prompt is None:
        prompt = f"synthetic:{class_name}:" + ",".join(odd.values_of(z))
    out = []
    for i in range(n):
        rng = np.random.default_rng(
            derive_seed(world.seed, seed, "gen", class_name, *z, i)
        )
        x = _sample_embedding(
            world, rng, class_name, class_weight, odd.values_of(z), odd
        )
        out.append(Sample(payload=x, kind=KIND_EMBEDDING, origin_prompt=prompt, index=i))
    return out


@dataclass(frozen=True)
class PoisonedZeroShot:
    """Binary zero-shot classifier with optional poison queries for class_a.

    The poisoned similarity for class_a is the *minimum* cosine over the
    poison queries, so it only spikes when every poisoned concept is present
    at once; its softmax mass is reported under class_b.
    """

    class_a: str
    class_b: str
    poison_queries: tuple[tuple[str, ...], ...] = ()
    temperature: float = 100.0
    value_weight: float = 1.0

    def __post_init__(self):
        if self.class_a == self.class_b:
            raise ValueError("class_a and class_b must differ")
        if not (self.temperature > 0):
            raise ValueError("temperature must be positive")
        object.__setattr__(
            self, "poison_queries", tuple(tuple(q) for q in self.poison_queries)
        )
        for q in self.poison_queries:
            if not q:
                raise ValueError("poison queries must be nonempty concept tuples")


def _poison_query_vector(
    pz: PoisonedZeroShot, world: EmbeddingWorld, query: tuple[str, ...]
) -> np.ndarray:
    # The class concept enters at weight 1; value concepts at value_weight.
    weights = [1.0 if c == pz.class_a else pz.value_weight for c in query]
    return query_embedding(world, query, weights)


def poisoned_classify(
    pz: PoisonedZeroShot, world: EmbeddingWorld, sample: Sample
) -> ClassDistribution:
    """Softmax over (phi_a, phi_b, poisoned phi_a) at the given temperature."""
    if sample.kind != KIND_EMBEDDING:
        raise ValueError("the synthetic classifier consumes embedding samples")
    x = np.asarray(sample.payload, dtype=float)
    if x.shape != (world.dim,):
        raise ValueError(f"embedding has shape {x.shape}, world dim is {world.dim}")

    phi_a = float(x @ query_embedding(world, [pz.class_a]))
    phi_b = float(x @ query_embedding(world, [pz.class_b]))
    logits = [pz.temperature * phi_a, pz.temperature * phi_b]
    if pz.poison_queries:
        phi_p = min(
            float(x @ _poison_query_vector(pz, world, q)) for q in pz.poison_queries
        )
        logits.append(pz.temperature * phi_p)

    arr = np.asarray(logits)
    arr = arr - arr.max()
    exp = np.exp(arr)
    soft = exp / exp.sum()
    p_a = float(soft[0])
    p_b = float(soft[1]) + (float(soft[2]) if pz.poison_queries else 0.0)
    return ClassDistribution(probabilities={pz.class_a: p_a, pz.class_b: p_b})


def build_benchmark(
    world: EmbeddingWorld,
    odd: OperationalDesignDomain,
    n_injections: int = 20,
    seed: int = 0,
    class_b: str | None = None,
    temperature: float = 100.0,
    value_weight: float = 1.0,
) -> list[tuple[PoisonedZeroShot, Subgroup]]:
    """Seeded poison injections with known ground-truth subgroups.

    Each injection targets one distinct subgroup with one poison query per
    dimension, pairing the source class with that dimension's value.
    """
    if n_injections < 1:
        raise ValueError("n_injections must be >= 1")
    class_a = odd.source_class
    if class_b is None:
        if not odd.target_classes:
            raise ValueError("need a target class for the benchmark")
        class_b = odd.target_classes[0]

    shape = odd.shape
    total = int(np.prod(shape))
    if n_injections > total:
        raise ValueError(f"cannot pick {n_injections} distinct subgroups from {total}")
    rng = np.random.default_rng(derive_seed(world.seed, "benchmark", seed))
    picks = rng.choice(total, size=n_injections, replace=False)

    out = []
    for flat in picks:
        z = tuple(int(i) for i in np.unravel_index(int(flat), shape))
        queries = []
        for d, value_index in enumerate(z):
            value = odd.dimensions[d].values[value_index]
            queries.append((class_a, value) if value else (class_a,))
        pz = PoisonedZeroShot(
            class_a=class_a,
            class_b=class_b,
            poison_queries=tuple(queries),
            temperature=temperature,
            value_weight=value_weight,
        )
        out.append((pz, z))
    return out
