"""Statistics used by the audit: exact binomial intervals, robust location,
and functional-ANOVA variance decomposition on factorial grids.
"""
from __future__ import annotations

import itertools
import math
import statistics
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.special import betainc

Subgroup = tuple[int, ...]

_BISECT_TOL = 1e-12  # interval width; comfortably inside the 1e-9 contract


@dataclass(frozen=True)
class BinomialCI:
    lower: float
    upper: float
    k: int
    n: int
    alpha: float


def _beta_quantile(q: float, a: float, b: float) -> float:
    """Quantile of Beta(a, b) by bisection on the regularized incomplete beta.

    Bisection sidesteps any quantile-function convention at the k=0 / k=n
    edges; those cases are handled before we get here.
    """
    lo, hi = 0.0, 1.0
    while hi - lo > _BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if betainc(a, b, mid) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def clopper_pearson(k: int, n: int, alpha: float = 0.05) -> BinomialCI:
    """Exact (Clopper-Pearson) 1-alpha confidence interval for a proportion."""
    if not isinstance(k, int) or isinstance(k, bool):
        raise ValueError("k must be an integer")
    if not isinstance(n, int) or isinstance(n, bool):
        raise ValueError("n must be an integer")
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside [0, {n}]")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly between 0 and 1")

    lower = 0.0 if k == 0 else _beta_quantile(alpha / 2.0, k, n - k + 1)
    upper = 1.0 if k == n else _beta_quantile(1.0 - alpha / 2.0, k + 1, n - k)
    return BinomialCI(lower=lower, upper=upper, k=k, n=n, alpha=alpha)


def median(values: Sequence[float]) -> float:
    """Median with the even-length midpoint convention; errors on empty input."""
    if len(values) == 0:
        raise ValueError("median of empty sequence")
    return float(statistics.median(values))


@dataclass(frozen=True)
class FanovaDecomposition:
    """Variance shares per dimension subset under the uniform grid measure.

    ``components[U]`` is the variance carried by the interaction of exactly
    the dimensions in U; ``fractions[U]`` divides by the total variance (all
    zeros when the table is constant).
    """

    shape: tuple[int, ...]
    total_variance: float
    components: dict[tuple[int, ...], float]
    fractions: dict[tuple[int, ...], float]
    approximate: bool = False


def _subsets(n: int):
    for size in range(n + 1):
        yield from itertools.combinations(range(n), size)


def fanova_decompose(
    table: Mapping[Subgroup, float] | np.ndarray,
    shape: Sequence[int],
    approximate: bool = False,
) -> FanovaDecomposition:
    """Exact functional-ANOVA decomposition of a full factorial table.

    Effects are defined recursively: the empty effect is the grand mean, and
    the effect for a subset U is the marginal mean over dimensions outside U
    minus every effect of a proper subset of U.
    """
    shape = tuple(int(c) for c in shape)
    if any(c < 1 for c in shape):
        raise ValueError("all cardinalities must be >= 1")
    n = len(shape)
    size = math.prod(shape)

    if isinstance(table, np.ndarray):
        arr = np.asarray(table, dtype=float)
        if arr.shape != shape:
            raise ValueError(f"array shape {arr.shape} does not match {shape}")
    else:
        if len(table) != size:
            raise ValueError(
                f"incomplete grid: {len(table)} entries for a grid of {size}"
            )
        arr = np.empty(shape, dtype=float)
        for z, score in table.items():
            if len(z) != n or any(not 0 <= i < c for i, c in zip(z, shape)):
                raise ValueError(f"key {z!r} outside the grid")
            arr[z] = float(score)
    if not np.all(np.isfinite(arr)):
        raise ValueError("scores must be finite")

    grand = float(arr.mean())
    effects: dict[tuple[int, ...], np.ndarray] = {}
    components: dict[tuple[int, ...], float] = {(): 0.0}

    for u in _subsets(n):
        if u == ():
            continue
        out_axes = tuple(i for i in range(n) if i not in u)
        marginal = arr.mean(axis=out_axes) if out_axes else arr.copy()
        f_u = marginal - _sum_of_proper_subeffects(u, effects, grand, shape)
        effects[u] = f_u
        components[u] = float((f_u**2).mean())

    total = float(((arr - grand) ** 2).mean())
    if total > 0.0:
        fractions = {u: v / total for u, v in components.items()}
    else:
        fractions = {u: 0.0 for u in components}
    return FanovaDecomposition(
        shape=shape,
        total_variance=total,
        components=components,
        fractions=fractions,
        approximate=approximate,
    )


def _sum_of_proper_subeffects(
    u: tuple[int, ...],
    effects: dict[tuple[int, ...], np.ndarray],
    grand: float,
    shape: tuple[int, ...],
) -> np.ndarray:
    acc = np.full([shape[i] for i in u], grand)
    for r in range(1, len(u)):
        for w in itertools.combinations(u, r):
            f_w = effects[w]
            # Broadcast f_w (indexed by dims in w) into u's axis order.
            idx = tuple(
                slice(None) if d in w else np.newaxis for d in u
            )
            acc = acc + f_w[idx]
    return acc


def cumulative_fanova(
    decomposition: FanovaDecomposition, max_cardinality: int
) -> dict[tuple[int, ...], float]:
    """Per subset U, the variance fraction explained by all subsets of U."""
    n = len(decomposition.shape)
    if not 0 <= max_cardinality <= n:
        raise ValueError(f"max cardinality {max_cardinality} outside [0, {n}]")
    out: dict[tuple[int, ...], float] = {}
    for u in _subsets(n):
        if len(u) > max_cardinality:
            continue
        total = 0.0
        for r in range(len(u) + 1):
            for w in itertools.combinations(u, r):
                total += decomposition.fractions[w]
        out[u] = total
    return out


def complete_table(
    scores: Mapping[Subgroup, float], shape: Sequence[int]
) -> tuple[np.ndarray, int]:
    """Fill missing grid cells by averaging per-dimension marginal means.

    Used to run the decomposition on covering-array scores; results based on
    imputed cells are approximate and flagged as such downstream.
    """
    shape = tuple(int(c) for c in shape)
    if not scores:
        raise ValueError("no observed scores")
    n = len(shape)
    for z in scores:
        if len(z) != n or any(not 0 <= i < c for i, c in zip(z, shape)):
            raise ValueError(f"key {z!r} outside the grid")

    grand = float(np.mean(list(scores.values())))
    marginals: list[list[float]] = []
    for d in range(n):
        per_value = []
        for v in range(shape[d]):
            obs = [s for z, s in scores.items() if z[d] == v]
            per_value.append(float(np.mean(obs)) if obs else grand)
        marginals.append(per_value)

    arr = np.empty(shape, dtype=float)
    imputed = 0
    for z in itertools.product(*(range(c) for c in shape)):
        if z in scores:
            arr[z] = float(scores[z])
        else:
            arr[z] = float(np.mean([marginals[d][z[d]] for d in range(n)]))
            imputed += 1
    return arr, imputed
