import math
import random

import numpy as np
import pytest

from odd_audit.stats import clopper_pearson, median

from oracles import binomial_tail_lower, binomial_tail_upper, clopper_pearson_oracle


def test_frozen_interval_k5_n100():
    ci = clopper_pearson(5, 100, 0.05)
    assert ci.lower == pytest.approx(0.01643187918170952, abs=1e-11)
    assert ci.upper == pytest.approx(0.11283491110543764, abs=1e-11)
    assert (ci.k, ci.n, ci.alpha) == (5, 100, 0.05)


def test_edge_cases_snap_to_unit_interval():
    assert clopper_pearson(0, 50).lower == 0.0
    assert clopper_pearson(50, 50).upper == 1.0
    ci = clopper_pearson(0, 1, 0.05)
    assert ci.lower == 0.0
    assert 0.0 < ci.upper < 1.0


def test_input_validation():
    with pytest.raises(ValueError):
        clopper_pearson(-1, 10)
    with pytest.raises(ValueError):
        clopper_pearson(11, 10)
    with pytest.raises(ValueError):
        clopper_pearson(1, 0)
    with pytest.raises(ValueError):
        clopper_pearson(1, 10, alpha=0.0)
    with pytest.raises(ValueError):
        clopper_pearson(1, 10, alpha=1.0)
    with pytest.raises(ValueError):
        clopper_pearson(True, 10)
    with pytest.raises(ValueError):
        clopper_pearson(1.0, 10)


def test_matches_oracle_on_spot_checks():
    for k, n, alpha in [(1, 10, 0.05), (3, 17, 0.01), (9, 10, 0.1), (200, 400, 0.05)]:
        lo_o, hi_o = clopper_pearson_oracle(k, n, alpha)
        ci = clopper_pearson(k, n, alpha)
        assert ci.lower == pytest.approx(lo_o, abs=1e-9)
        assert ci.upper == pytest.approx(hi_o, abs=1e-9)


def test_interval_contains_point_estimate_and_nests():
    rng = random.Random(7)
    for _ in range(50):
        n = rng.randint(1, 300)
        k = rng.randint(0, n)
        ci95 = clopper_pearson(k, n, 0.05)
        ci99 = clopper_pearson(k, n, 0.01)
        p_hat = k / n
        assert ci95.lower <= p_hat <= ci95.upper
        # Smaller alpha: wider interval.
        assert ci99.lower <= ci95.lower + 1e-12
        assert ci95.upper <= ci99.upper + 1e-12


def test_endpoints_invert_the_tail_probabilities():
    # By construction P[X >= k](lower) = alpha/2 and P[X <= k](upper) = alpha/2.
    for k, n, alpha in [(2, 30, 0.05), (13, 40, 0.01), (399, 400, 0.05)]:
        ci = clopper_pearson(k, n, alpha)
        assert binomial_tail_upper(k, n, ci.lower) == pytest.approx(alpha / 2, abs=1e-9)
        assert binomial_tail_lower(k, n, ci.upper) == pytest.approx(alpha / 2, abs=1e-9)


def test_symmetry_under_k_reflection():
    # Swapping successes and failures mirrors the interval around 1/2.
    for k, n in [(3, 20), (0, 9), (7, 7), (150, 400)]:
        ci = clopper_pearson(k, n)
        mirrored = clopper_pearson(n - k, n)
        assert ci.lower == pytest.approx(1.0 - mirrored.upper, abs=1e-9)
        assert ci.upper == pytest.approx(1.0 - mirrored.lower, abs=1e-9)


def test_median_conventions():
    assert median([0.1, 0.9, 0.2]) == 0.2
    assert median([1.0, 3.0]) == 2.0
    assert median([4.0]) == 4.0
    assert median([0.0] * 9 + [1.0] * 7) == 0.0
    with pytest.raises(ValueError):
        median([])


def test_median_matches_numpy():
    rng = np.random.default_rng(11)
    for _ in range(100):
        xs = rng.random(rng.integers(1, 40)).tolist()
        assert median(xs) == pytest.approx(float(np.median(xs)), abs=1e-15)


def test_median_breakdown_resistance():
    # Up to floor((n-1)/2) arbitrary contaminations cannot move the median of
    # an otherwise constant sample.
    rng = random.Random(5)
    for _ in range(200):
        n = rng.randint(3, 33)
        base = rng.random()
        scores = [base] * n
        k = rng.randint(0, (n - 1) // 2)
        for idx in rng.sample(range(n), k):
            scores[idx] = rng.random()
        assert median(scores) == base


def test_median_is_permutation_invariant():
    rng = random.Random(9)
    xs = [rng.random() for _ in range(12)]
    m = median(xs)
    for _ in range(10):
        rng.shuffle(xs)
        assert median(xs) == m
