"""Strength-t covering arrays over an ODD.

A covering array of strength t is a list of subgroups such that every
combination of values on every t dimensions appears in at least one row.
Generation follows the in-parameter-order scheme: start from the full
factorial over the first t dimensions, then extend one dimension at a time
(horizontal growth picks, per row, the value covering the most still-uncovered
t-tuples; vertical growth appends or merges rows for the leftovers).
"""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass

from .hashing import derive_seed
from .odd import OperationalDesignDomain, Subgroup, enumerate_subgroups, validate_subgroup


@dataclass(frozen=True)
class CoveringArray:
    strength: int
    rows: tuple[Subgroup, ...]
    odd_fingerprint: str


@dataclass(frozen=True)
class CoverageReport:
    complete: bool
    # Each entry is (dimension index tuple, value index tuple).
    missing: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]
    n_tuples_checked: int


def coverage_lower_bound(odd: OperationalDesignDomain, t: int) -> int:
    """Product of the t largest cardinalities; no strength-t array is smaller."""
    _check_strength(odd, t)
    largest = sorted(odd.shape, reverse=True)[:t]
    out = 1
    for c in largest:
        out *= c
    return out


def _check_strength(odd: OperationalDesignDomain, t: int) -> None:
    if not 1 <= t <= odd.n_dimensions:
        raise ValueError(
            f"strength {t} outside [1, {odd.n_dimensions}] for this ODD"
        )


def generate_covering_array(
    odd: OperationalDesignDomain, t: int, seed: int = 0
) -> CoveringArray:
    """Deterministic strength-t covering array for (odd, t, seed)."""
    _check_strength(odd, t)
    n = odd.n_dimensions
    cards = odd.shape

    if t == n:
        rows = tuple(enumerate_subgroups(odd))
        return CoveringArray(strength=t, rows=rows, odd_fingerprint=odd.fingerprint())

    # Rows are mutable lists with None for "don't care" until finalization.
    rows: list[list[int | None]] = []
    seed_rows = list(itertools.product(*(range(cards[d]) for d in range(t))))
    # The seed perturbs the processing order of the initial block; coverage is
    # unaffected, only which greedy choices happen first.
    random.Random(derive_seed(seed, "ipog-init")).shuffle(seed_rows)
    for combo in seed_rows:
        rows.append(list(combo) + [None] * (n - t))

    for k in range(t, n):
        prior_subsets = list(itertools.combinations(range(k), t - 1))
        # Uncovered t-tuples touching dimension k: dims S + (k,) -> value tuples.
        uncovered: dict[tuple[int, ...], set[tuple[int, ...]]] = {}
        for s in prior_subsets:
            dims = s + (k,)
            uncovered[dims] = set(
                itertools.product(*(range(cards[d]) for d in dims))
            )

        value_order = list(range(cards[k]))
        random.Random(derive_seed(seed, "ipog-stage", k)).shuffle(value_order)

        # Horizontal growth.
        for row in rows:
            if not any(uncovered.values()):
                break  # remaining rows keep a don't-care at k
            best_v = None
            best_cov = -1
            for v in value_order:
                cov = 0
                for s in prior_subsets:
                    if any(row[d] is None for d in s):
                        continue
                    key = tuple(row[d] for d in s) + (v,)
                    if key in uncovered[s + (k,)]:
                        cov += 1
                if cov > best_cov or (cov == best_cov and v < best_v):
                    best_v, best_cov = v, cov
            row[k] = best_v
            for s in prior_subsets:
                if any(row[d] is None for d in s):
                    continue
                uncovered[s + (k,)].discard(tuple(row[d] for d in s) + (best_v,))

        # Vertical growth: host leftovers in don't-care slots or append rows.
        fresh: list[list[int | None]] = []
        for dims in sorted(uncovered):
            for vals in sorted(uncovered[dims]):
                host = None
                for cand in fresh:
                    if all(cand[d] is None or cand[d] == v for d, v in zip(dims, vals)):
                        host = cand
                        break
                if host is None:
                    host = [None] * n
                    fresh.append(host)
                for d, v in zip(dims, vals):
                    host[d] = v
        rows.extend(fresh)

    # Don't-care slots resolve to the first value: the neutral choice when the
    # dimension declares one, value 0 otherwise.
    final: list[Subgroup] = []
    seen: set[Subgroup] = set()
    for row in rows:
        z = tuple(0 if v is None else v for v in row)
        if z not in seen:
            seen.add(z)
            final.append(z)
    return CoveringArray(strength=t, rows=tuple(final), odd_fingerprint=odd.fingerprint())


def verify_coverage(
    array: CoveringArray, odd: OperationalDesignDomain, t: int | None = None
) -> CoverageReport:
    """Exhaustively check every t-subset of dimensions against every row."""
    if t is None:
        t = array.strength
    _check_strength(odd, t)
    for z in array.rows:
        validate_subgroup(odd, z)

    cards = odd.shape
    missing: list[tuple[tuple[int, ...], tuple[int, ...]]] = []
    checked = 0
    for dims in itertools.combinations(range(odd.n_dimensions), t):
        seen = {tuple(row[d] for d in dims) for row in array.rows}
        for vals in itertools.product(*(range(cards[d]) for d in dims)):
            checked += 1
            if vals not in seen:
                missing.append((dims, vals))
    return CoverageReport(
        complete=not missing, missing=tuple(missing), n_tuples_checked=checked
    )
