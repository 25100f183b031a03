import itertools
import math
import random

import numpy as np
import pytest

from odd_audit.stats import complete_table, cumulative_fanova, fanova_decompose

from oracles import fanova_oracle


def _random_table(rng, shape):
    return {
        z: rng.random() for z in itertools.product(*(range(c) for c in shape))
    }


def test_constant_table_has_zero_variance():
    # 0.5 is exactly representable, so the grand mean subtracts to exactly 0
    # and the all-fractions-zero contract for constant tables is exercised.
    shape = (3, 4)
    table = {z: 0.5 for z in itertools.product(range(3), range(4))}
    d = fanova_decompose(table, shape)
    assert d.total_variance == 0.0
    assert all(v == pytest.approx(0.0, abs=1e-12) for v in d.components.values())
    assert all(v == 0.0 for v in d.fractions.values())


def test_single_dimension_table():
    d = fanova_decompose({(0,): 0.0, (1,): 1.0}, (2,))
    assert d.total_variance == pytest.approx(0.25)
    assert d.components[(0,)] == pytest.approx(0.25)
    assert d.fractions[(0,)] == pytest.approx(1.0)


def test_additive_table_has_no_interaction():
    rng = random.Random(1)
    shape = (3, 4, 2)
    a = [rng.random() for _ in range(3)]
    b = [rng.random() for _ in range(4)]
    c = [rng.random() for _ in range(2)]
    table = {
        (i, j, k): a[i] + b[j] + c[k]
        for i, j, k in itertools.product(range(3), range(4), range(2))
    }
    d = fanova_decompose(table, shape)
    for u, v in d.components.items():
        if len(u) > 1:
            assert v == pytest.approx(0.0, abs=1e-12), f"interaction {u} nonzero"
    assert sum(d.fractions.values()) == pytest.approx(1.0, abs=1e-9)


def test_pure_interaction_table():
    # XOR-like table: no main effects, everything in the 2-way interaction.
    table = {(0, 0): 0.0, (0, 1): 1.0, (1, 0): 1.0, (1, 1): 0.0}
    d = fanova_decompose(table, (2, 2))
    assert d.fractions[(0,)] == pytest.approx(0.0, abs=1e-12)
    assert d.fractions[(1,)] == pytest.approx(0.0, abs=1e-12)
    assert d.fractions[(0, 1)] == pytest.approx(1.0)


def test_matches_oracle_on_random_tables():
    rng = random.Random(6)
    for trial in range(25):
        shape = tuple(rng.randint(2, 4) for _ in range(rng.randint(1, 3)))
        table = _random_table(rng, shape)
        total_o, comps_o, fracs_o = fanova_oracle(table, shape)
        d = fanova_decompose(table, shape)
        assert d.total_variance == pytest.approx(total_o, abs=1e-9)
        for u in comps_o:
            assert d.components[u] == pytest.approx(comps_o[u], abs=1e-9), u
            assert d.fractions[u] == pytest.approx(fracs_o[u], abs=1e-9), u


def test_accepts_ndarray_and_mapping_equally():
    rng = np.random.default_rng(3)
    arr = rng.random((2, 3, 2))
    table = {z: float(arr[z]) for z in itertools.product(range(2), range(3), range(2))}
    da = fanova_decompose(arr, arr.shape)
    dm = fanova_decompose(table, arr.shape)
    for u in da.components:
        assert da.components[u] == pytest.approx(dm.components[u], abs=1e-12)


def test_variance_components_sum_to_total():
    rng = random.Random(8)
    for _ in range(20):
        shape = tuple(rng.randint(2, 4) for _ in range(rng.randint(2, 3)))
        table = _random_table(rng, shape)
        d = fanova_decompose(table, shape)
        assert math.fsum(d.components.values()) == pytest.approx(
            d.total_variance, abs=1e-9
        )
        assert math.fsum(d.fractions.values()) == pytest.approx(1.0, abs=1e-9)


def test_incomplete_or_invalid_tables_rejected():
    with pytest.raises(ValueError):
        fanova_decompose({(0, 0): 1.0}, (2, 2))
    with pytest.raises(ValueError):
        fanova_decompose({(0,): 1.0, (2,): 0.0}, (2,))
    with pytest.raises(ValueError):
        fanova_decompose({(0,): float("nan"), (1,): 0.0}, (2,))
    with pytest.raises(ValueError):
        fanova_decompose(np.zeros((2, 2)), (2, 3))


def test_cumulative_scores():
    rng = random.Random(4)
    shape = (3, 3, 2)
    table = _random_table(rng, shape)
    d = fanova_decompose(table, shape)
    cum = cumulative_fanova(d, 3)
    # Full set explains everything; singletons match their own fraction.
    assert cum[(0, 1, 2)] == pytest.approx(1.0, abs=1e-9)
    for i in range(3):
        assert cum[(i,)] == pytest.approx(d.fractions[(i,)], abs=1e-12)
    # Monotone under subset inclusion (all terms nonnegative).
    assert cum[(0, 1)] >= cum[(0,)] - 1e-12
    assert cum[(0, 1)] >= cum[(1,)] - 1e-12

    only_pairs = cumulative_fanova(d, 2)
    assert (0, 1, 2) not in only_pairs
    assert only_pairs[(0, 1)] == pytest.approx(cum[(0, 1)])
    with pytest.raises(ValueError):
        cumulative_fanova(d, 4)


def test_complete_table_identity_when_full():
    rng = random.Random(10)
    shape = (2, 3)
    table = _random_table(rng, shape)
    arr, imputed = complete_table(table, shape)
    assert imputed == 0
    for z, v in table.items():
        assert arr[z] == v


def test_complete_table_imputes_missing_cells():
    shape = (2, 2)
    observed = {(0, 0): 0.0, (0, 1): 0.4, (1, 0): 0.8}
    arr, imputed = complete_table(observed, shape)
    assert imputed == 1
    # Imputation averages the marginal means of the missing cell's coordinates.
    row_mean = (0.4 + 0.8) / 2  # value-1 entries on each axis
    assert arr[1, 1] == pytest.approx((np.mean([0.8]) + np.mean([0.4])) / 2)
    assert 0.0 <= arr[1, 1] <= 1.0
    d = fanova_decompose(arr, shape, approximate=True)
    assert d.approximate


def test_complete_table_rejects_bad_keys():
    with pytest.raises(ValueError):
        complete_table({}, (2, 2))
    with pytest.raises(ValueError):
        complete_table({(0, 5): 1.0}, (2, 2))
