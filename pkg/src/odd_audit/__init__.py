"""Audit engine for finding systematic classifier errors on rare,
compositionally defined subgroups of an operational design domain."""

__version__ = "0.1.0"

from .odd import (
    OperationalDesignDomain,
    PromptTemplate,
    SemanticDimension,
    Subgroup,
    enumerate_subgroups,
    instantiate_prompt,
    odd_size,
)
from .covering import (
    CoveringArray,
    coverage_lower_bound,
    generate_covering_array,
    verify_coverage,
)
from .stats import (
    BinomialCI,
    clopper_pearson,
    cumulative_fanova,
    fanova_decompose,
    median,
)

__all__ = [
    "__version__",
    "OperationalDesignDomain",
    "PromptTemplate",
    "SemanticDimension",
    "Subgroup",
    "enumerate_subgroups",
    "instantiate_prompt",
    "odd_size",
    "CoveringArray",
    "coverage_lower_bound",
    "generate_covering_array",
    "verify_coverage",
    "BinomialCI",
    "clopper_pearson",
    "cumulative_fanova",
    "fanova_decompose",
    "median",
]
