"""Operational design domains: semantic dimensions, subgroups and prompt templates.

An operational design domain (ODD) is the Cartesian product of a handful of
semantic dimensions ("color", "weather", ...).  A subgroup picks one value per
dimension and is written as a tuple of value indices in declaration order.
Prompts are rendered from a template whose placeholders name dimensions, plus
a single ``{class}`` placeholder carrying the source class and its weight.
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from typing import Iterator

from .hashing import fingerprint

# A subgroup is one value index per dimension, in dimension declaration order.
Subgroup = tuple[int, ...]

_PLACEHOLDER = re.compile(r"\{([^{}]*)\}")
_WHITESPACE = re.compile(r"\s+")

CLASS_PLACEHOLDER = "class"


class PromptError(ValueError):
    """Raised when a template cannot be rendered against an ODD."""


@dataclass(frozen=True)
class SemanticDimension:
    """A named axis of variation with a fixed, ordered list of values.

    ``neutral_first`` marks dimensions whose first value is the "say nothing
    special" choice; only that first value may be the empty string.
    """

    name: str
    values: tuple[str, ...]
    neutral_first: bool = False

    def __post_init__(self):
        if not self.name:
            raise ValueError("dimension name must be nonempty")
        object.__setattr__(self, "values", tuple(self.values))
        if len(self.values) < 1:
            raise ValueError(f"dimension {self.name!r} needs at least one value")
        if len(set(self.values)) != len(self.values):
            raise ValueError(f"dimension {self.name!r} has duplicate values")
        for i, v in enumerate(self.values):
            if v == "" and not (i == 0 and self.neutral_first):
                raise ValueError(
                    f"dimension {self.name!r}: empty value allowed only at "
                    "position 0 of a neutral-first dimension"
                )

    @property
    def cardinality(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class OperationalDesignDomain:
    """Product of semantic dimensions plus the class vocabulary under audit."""

    dimensions: tuple[SemanticDimension, ...]
    source_class: str
    target_classes: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "dimensions", tuple(self.dimensions))
        object.__setattr__(self, "target_classes", tuple(self.target_classes))
        if len(self.dimensions) < 1:
            raise ValueError("an ODD needs at least one dimension")
        names = [d.name for d in self.dimensions]
        if len(set(names)) != len(names):
            raise ValueError("dimension names must be unique")
        if not self.source_class:
            raise ValueError("source class must be nonempty")
        if len(set(self.target_classes)) != len(self.target_classes):
            raise ValueError("target classes must be unique")
        for t in self.target_classes:
            if t == self.source_class:
                raise ValueError(f"target class {t!r} equals the source class")
            if not t:
                raise ValueError("target classes must be nonempty strings")

    @property
    def n_dimensions(self) -> int:
        return len(self.dimensions)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(d.cardinality for d in self.dimensions)

    @property
    def dimension_names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.dimensions)

    def dimension(self, name: str) -> SemanticDimension:
        for d in self.dimensions:
            if d.name == name:
                return d
        raise KeyError(f"no dimension named {name!r}")

    def values_of(self, z: Subgroup) -> tuple[str, ...]:
        validate_subgroup(self, z)
        return tuple(d.values[i] for d, i in zip(self.dimensions, z))

    def to_dict(self) -> dict:
        return {
            "source_class": self.source_class,
            "target_classes": list(self.target_classes),
            "dimensions": [
                {
                    "name": d.name,
                    "values": list(d.values),
                    "neutral_first": d.neutral_first,
                }
                for d in self.dimensions
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "OperationalDesignDomain":
        dims = tuple(
            SemanticDimension(
                name=d["name"],
                values=tuple(d["values"]),
                neutral_first=bool(d.get("neutral_first", False)),
            )
            for d in data["dimensions"]
        )
        return cls(
            dimensions=dims,
            source_class=data["source_class"],
            target_classes=tuple(data.get("target_classes", ())),
        )

    def fingerprint(self) -> str:
        return fingerprint(self.to_dict())


@dataclass(frozen=True)
class PromptTemplate:
    """Template text with ``{dimension}`` placeholders and exactly one ``{class}``.

    ``{class}`` renders as ``(source_class:w)`` with the class weight formatted
    to one decimal place.
    """

    template: str
    class_weight: float = 1.5

    def __post_init__(self):
        if not self.template:
            raise ValueError("template must be nonempty")
        if not (self.class_weight > 0):
            raise ValueError("class weight must be positive")
        names = self.placeholders()
        for n in names:
            if n == "":
                raise ValueError("empty placeholder {} in template")
        n_class = sum(1 for n in names if n == CLASS_PLACEHOLDER)
        if n_class != 1:
            raise ValueError(
                f"template must contain exactly one {{class}} placeholder, found {n_class}"
            )

    def placeholders(self) -> list[str]:
        return _PLACEHOLDER.findall(self.template)

    def class_token(self, source_class: str) -> str:
        return f"({source_class}:{self.class_weight:.1f})"


def odd_size(odd: OperationalDesignDomain) -> int:
    """Exact number of subgroups, the product of all dimension cardinalities."""
    return math.prod(odd.shape)


def validate_subgroup(odd: OperationalDesignDomain, z: Subgroup) -> None:
    if len(z) != odd.n_dimensions:
        raise ValueError(
            f"subgroup has {len(z)} indices, ODD has {odd.n_dimensions} dimensions"
        )
    for d, i in zip(odd.dimensions, z):
        if not isinstance(i, int) or isinstance(i, bool):
            raise ValueError(f"subgroup index {i!r} is not an integer")
        if not 0 <= i < d.cardinality:
            raise ValueError(
                f"index {i} out of range for dimension {d.name!r} "
                f"(cardinality {d.cardinality})"
            )


def iter_subgroups(odd: OperationalDesignDomain) -> Iterator[Subgroup]:
    """All subgroups in lexicographic order of their index tuples."""
    return itertools.product(*(range(c) for c in odd.shape))


def enumerate_subgroups(odd: OperationalDesignDomain) -> list[Subgroup]:
    """Materialized `iter_subgroups`; the caller owns the memory tradeoff."""
    return list(iter_subgroups(odd))


def instantiate_prompt(
    template: PromptTemplate, odd: OperationalDesignDomain, z: Subgroup
) -> str:
    """Render a prompt for one subgroup.

    After substitution, runs of whitespace collapse to single spaces and the
    result is trimmed, so neutral (empty) values leave no double spaces behind.
    """
    validate_subgroup(odd, z)
    by_name = {d.name: d.values[i] for d, i in zip(odd.dimensions, z)}

    def _sub(m: re.Match) -> str:
        name = m.group(1)
        if name == CLASS_PLACEHOLDER:
            return template.class_token(odd.source_class)
        try:
            return by_name[name]
        except KeyError:
            raise PromptError(
                f"template placeholder {{{name}}} names no dimension of this ODD"
            ) from None

    text = _PLACEHOLDER.sub(_sub, template.template)
    return _WHITESPACE.sub(" ", text).strip()
