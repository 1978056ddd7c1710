import itertools
import math
import random

import numpy as np
import pytest
import scipy.stats

from evigraph.errors import DataError
from evigraph.stats.ranktests import (
    aggregate_means,
    cliffs_delta,
    exact_mwu_p_fraction,
    mann_whitney_u,
    midranks,
    wilcoxon_signed_rank,
)

# ---------------------------------------------------------------------------
# oracles: dominance-counting enumeration, independent of the implementation
# (no midranks, no rank-sum DP)
# ---------------------------------------------------------------------------


def oracle_u(a, b):
    gt = sum(1 for x in a for y in b if x > y)
    eq = sum(1 for x in a for y in b if x == y)
    return gt + 0.5 * eq


def oracle_mwu_exact_p(a, b):
    pooled = list(a) + list(b)
    n, na = len(pooled), len(a)
    mu = na * (n - na) / 2.0
    dev = abs(oracle_u(a, b) - mu) - 1e-12
    extreme = total = 0
    for idx in itertools.combinations(range(n), na):
        chosen = set(idx)
        ga = [pooled[i] for i in idx]
        gb = [pooled[i] for i in range(n) if i not in chosen]
        total += 1
        if abs(oracle_u(ga, gb) - mu) >= dev:
            extreme += 1
    return extreme / total


def oracle_wilcoxon_exact_p(diffs):
    nonzero = [d for d in diffs if d != 0]
    ranks = scipy.stats.rankdata([abs(d) for d in nonzero])
    w_obs = sum(r for r, d in zip(ranks, nonzero) if d > 0)
    half = sum(ranks) / 2.0
    dev = abs(w_obs - half) - 1e-12
    extreme = 0
    for signs in itertools.product([1, -1], repeat=len(nonzero)):
        w = sum(r for r, s in zip(ranks, signs) if s > 0)
        if abs(w - half) >= dev:
            extreme += 1
    return extreme / 2 ** len(nonzero)


# ---------------------------------------------------------------------------
# frozen examples
# ---------------------------------------------------------------------------


def test_mwu_separated_groups():
    res = mann_whitney_u([1, 2, 3], [4, 5, 6])
    assert res.statistic == 0.0
    assert abs(res.p - 0.100) < 1e-12
    assert res.method == "exact"
    assert res.effect_size == -1.0


def test_mwu_single_tied_pair():
    res = mann_whitney_u([1], [1])
    assert res.p == 1.0
    assert res.effect_size == 0.0


def test_mwu_fraction_form():
    from fractions import Fraction

    assert exact_mwu_p_fraction([1, 2, 3], [4, 5, 6]) == Fraction(1, 10)


def test_mwu_empty_group_rejected():
    with pytest.raises(DataError):
        mann_whitney_u([], [1.0])


def test_wilcoxon_frozen_diffs():
    res = wilcoxon_signed_rank([(1, 0), (2, 0), (2, 0)])
    assert res.statistic == 6.0
    assert abs(res.p - 0.25) < 1e-12
    assert res.method == "exact"


def test_wilcoxon_identical_pairs_warn():
    res = wilcoxon_signed_rank([(2, 2), (3, 3)])
    assert res.p == 1.0
    assert res.warning is not None
    assert res.effect_size == 0.0


def test_cliffs_delta_frozen():
    assert cliffs_delta([3, 4], [1, 2]) == 1.0
    assert cliffs_delta([1, 2, 3], [1, 2, 3]) == 0.0


def test_cliffs_delta_antisymmetric():
    rng = np.random.default_rng(2024)
    for _ in range(50):
        a = rng.normal(size=rng.integers(1, 9))
        b = rng.normal(size=rng.integers(1, 9))
        assert math.isclose(cliffs_delta(a, b), -cliffs_delta(b, a))
        assert -1 <= cliffs_delta(a, b) <= 1


def test_aggregate_means():
    vals = [1, 3, 10, 20]
    labels = ["p1", "p1", "p2", "p2"]
    assert aggregate_means(vals, labels) == [2.0, 15.0]


def test_midranks_ties():
    assert list(midranks([5, 1, 3, 3])) == [4.0, 1.0, 2.5, 2.5]


# ---------------------------------------------------------------------------
# oracle equivalence
# ---------------------------------------------------------------------------


def test_mwu_exact_matches_enumeration_oracle_tiefree():
    rng = random.Random(77)
    for _ in range(40):
        na, nb = rng.randint(2, 6), rng.randint(2, 6)
        pool = rng.sample(range(1000), na + nb)
        a, b = pool[:na], pool[na:]
        res = mann_whitney_u(a, b, method="exact")
        assert abs(res.p - oracle_mwu_exact_p(a, b)) < 1e-12
        assert res.statistic == oracle_u(a, b)


def test_mwu_exact_matches_enumeration_oracle_with_ties():
    rng = random.Random(78)
    for _ in range(25):
        na, nb = rng.randint(2, 5), rng.randint(2, 5)
        a = [rng.randint(0, 4) for _ in range(na)]
        b = [rng.randint(0, 4) for _ in range(nb)]
        res = mann_whitney_u(a, b, method="exact")
        assert abs(res.p - oracle_mwu_exact_p(a, b)) < 1e-12


def test_mwu_exact_matches_scipy_tiefree():
    rng = random.Random(79)
    for _ in range(30):
        na, nb = rng.randint(3, 9), rng.randint(3, 9)
        pool = rng.sample(range(10000), na + nb)
        a, b = pool[:na], pool[na:]
        ours = mann_whitney_u(a, b, method="exact").p
        ref = scipy.stats.mannwhitneyu(a, b, alternative="two-sided",
                                       method="exact").pvalue
        assert abs(ours - ref) < 1e-9


def test_wilcoxon_exact_matches_enumeration_oracle():
    rng = random.Random(80)
    for _ in range(30):
        m = rng.randint(2, 9)
        diffs = [rng.choice([-1, 1]) * rng.randint(1, 6) for _ in range(m)]
        pairs = [(d, 0) for d in diffs]
        res = wilcoxon_signed_rank(pairs, method="exact")
        assert abs(res.p - oracle_wilcoxon_exact_p(diffs)) < 1e-12


def test_wilcoxon_exact_matches_scipy_tiefree():
    rng = random.Random(81)
    for _ in range(25):
        m = rng.randint(3, 11)
        mags = rng.sample(range(1, 500), m)
        diffs = [rng.choice([-1, 1]) * v for v in mags]
        ours = wilcoxon_signed_rank([(d, 0) for d in diffs], method="exact").p
        ref = scipy.stats.wilcoxon(diffs, alternative="two-sided",
                                   mode="exact").pvalue
        assert abs(ours - ref) < 1e-9


def test_mwu_approx_close_to_exact():
    rng = np.random.default_rng(90210)
    worst = 0.0
    for _ in range(120):
        na = int(rng.integers(5, 13))
        nb = int(rng.integers(5, 13))
        a = rng.normal(size=na)
        b = rng.normal(size=nb) + rng.normal() * 0.5
        exact = mann_whitney_u(a, b, method="exact").p
        approx = mann_whitney_u(a, b, method="normal").p
        worst = max(worst, abs(exact - approx))
    assert worst < 0.02


def test_wilcoxon_large_sample_uses_normal():
    rng = np.random.default_rng(5)
    pairs = [(x, y) for x, y in rng.normal(size=(40, 2))]
    res = wilcoxon_signed_rank(pairs)
    assert res.method == "normal"
    ref = scipy.stats.wilcoxon(
        [x - y for x, y in pairs], alternative="two-sided", mode="approx",
        correction=True,
    ).pvalue
    assert abs(res.p - ref) < 1e-9


def test_mwu_auto_switches_on_size_and_ties():
    assert mann_whitney_u(list(range(6)), list(range(10, 16))).method == "exact"
    assert mann_whitney_u(list(range(10)), list(range(20, 30))).method == "normal"
    assert mann_whitney_u([1, 1, 2], [3, 4]).method == "normal"


def test_mwu_null_uniformity():
    # under the null, exact p should be super-uniform: P(p <= alpha) <= alpha
    rng = np.random.default_rng(314159)
    alpha = 0.05
    hits = 0
    reps = 400
    for _ in range(reps):
        a = rng.normal(size=6)
        b = rng.normal(size=6)
        if mann_whitney_u(a, b, method="exact").p <= alpha:
            hits += 1
    assert hits / reps < alpha + 0.03
