"""Rank-based tests: Mann-Whitney U, Wilcoxon signed-rank, Cliff's delta.

Exact p-values come from the permutation null (rank-sum counting for the
U test, sign enumeration for the signed-rank test); large samples use the
normal approximation with tie correction and continuity correction.  All
p-values are two-sided.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
from scipy.stats import norm

from ..conclusions import PValueConclusion
from ..errors import DataError, MethodError

_EXACT_LIMIT_MWU = 12  # pooled size cap for the default exact route
_EXACT_LIMIT_WILCOXON = 12  # nonzero-difference cap for sign enumeration


def midranks(values):
    """Ranks 1..n with ties sharing the average of their positions."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="mergesort")
    ranks = np.empty(len(v), dtype=float)
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def cliffs_delta(group_a, group_b):
    """Dominance effect size: (#{a>b} - #{a<b}) / (n_a * n_b)."""
    a = np.asarray(list(group_a), dtype=float)
    b = np.asarray(list(group_b), dtype=float)
    if a.size == 0 or b.size == 0:
        raise DataError("Cliff's delta needs two non-empty groups")
    diff = a[:, None] - b[None, :]
    return float((np.sum(diff > 0) - np.sum(diff < 0)) / (a.size * b.size))


def aggregate_means(values, labels):
    """Per-label means, sorted by label; the per-participant aggregation."""
    values = np.asarray(list(values), dtype=float)
    labels = [str(x) for x in labels]
    if len(values) != len(labels):
        raise DataError("values and labels differ in length")
    out = {}
    for lbl, v in zip(labels, values):
        out.setdefault(lbl, []).append(v)
    return [float(np.mean(out[lbl])) for lbl in sorted(out)]


def _has_ties(pooled):
    return len(set(float(x) for x in pooled)) < len(pooled)


def _u_statistic(a, b):
    """U of the first group from pooled midranks (tie-aware)."""
    na = len(a)
    ranks = midranks(list(a) + list(b))
    r_a = float(np.sum(ranks[:na]))
    return r_a - na * (na + 1) / 2.0


def _rank_sum_counts(n, k):
    """counts[s] = number of k-subsets of {1..n} with rank sum s.

    Classic subset-sum recurrence over ranks taken one at a time; the
    distribution of the Wilcoxon rank sum under the null.
    """
    max_sum = n * (n + 1) // 2
    counts = np.zeros((k + 1, max_sum + 1), dtype=float)
    counts[0, 0] = 1.0
    for rank in range(1, n + 1):
        # iterate subset size downward so each rank is used at most once
        for size in range(min(k, rank), 0, -1):
            counts[size, rank:] += counts[size - 1, : max_sum - rank + 1]
    return counts[k]


def _exact_mwu_p_tiefree(u_obs, na, nb):
    """P(|U - mu| >= |u_obs - mu|) from the exact rank-sum distribution."""
    n = na + nb
    counts = _rank_sum_counts(n, na)
    offset = na * (na + 1) / 2.0  # U = ranksum - offset
    mu = na * nb / 2.0
    dev = abs(u_obs - mu) - 1e-12
    total = math.comb(n, na)
    extreme = sum(
        c for s, c in enumerate(counts) if c and abs((s - offset) - mu) >= dev
    )
    return min(1.0, float(extreme) / total)


def _exact_mwu_p_ties(a, b):
    """Enumerate every assignment of the pooled values (ties allowed)."""
    pooled = [float(x) for x in list(a) + list(b)]
    n, na, nb = len(pooled), len(a), len(b)
    ranks = midranks(pooled)
    offset = na * (na + 1) / 2.0
    mu = na * nb / 2.0
    u_obs = float(np.sum(ranks[:na])) - offset
    dev = abs(u_obs - mu) - 1e-12
    extreme = total = 0
    for idx in itertools.combinations(range(n), na):
        u = sum(ranks[i] for i in idx) - offset
        total += 1
        if abs(u - mu) >= dev:
            extreme += 1
    return extreme / total


def _mwu_normal_p(u_obs, a, b):
    """Tie-corrected, continuity-corrected normal approximation."""
    na, nb = len(a), len(b)
    n = na + nb
    pooled = np.asarray(list(a) + list(b), dtype=float)
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(tie_counts**3 - tie_counts))
    mu = na * nb / 2.0
    var = na * nb / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var <= 0:
        return 1.0  # all values identical
    dev = abs(u_obs - mu)
    z = max(0.0, dev - 0.5) / math.sqrt(var)
    return min(1.0, float(2.0 * norm.sf(z)))


def mann_whitney_u(group_a, group_b, alpha=0.05, method="auto"):
    """Two-sided Mann-Whitney U test of group_a against group_b.

    method: auto (exact when pooled size <= 12 and no ties), exact, normal.
    """
    a = [float(x) for x in group_a]
    b = [float(x) for x in group_b]
    if not a or not b:
        raise DataError("Mann-Whitney needs two non-empty groups")
    if method not in ("auto", "exact", "normal"):
        raise MethodError(f"unknown method {method!r}")
    u_obs = _u_statistic(a, b)
    ties = _has_ties(a + b)
    n = len(a) + len(b)

    if method == "auto":
        method = "exact" if (n <= _EXACT_LIMIT_MWU and not ties) else "normal"
    if method == "exact":
        if ties:
            if n > _EXACT_LIMIT_MWU:
                raise MethodError(
                    "exact test with ties enumerates assignments; pooled size "
                    f"must be <= {_EXACT_LIMIT_MWU}, got {n}"
                )
            p = _exact_mwu_p_ties(a, b)
        else:
            p = _exact_mwu_p_tiefree(u_obs, len(a), len(b))
    else:
        p = _mwu_normal_p(u_obs, a, b)

    return PValueConclusion(
        statistic=float(u_obs),
        p=float(p),
        effect_size=cliffs_delta(a, b),
        test="mann_whitney_u",
        n_obs=n,
        method=method,
    )


def _signed_rank_exact_p(ranks, w_obs):
    """Sign enumeration: P(|W+ - T/2| >= |w_obs - T/2|) over 2^m patterns."""
    m = len(ranks)
    half = sum(ranks) / 2.0
    dev = abs(w_obs - half) - 1e-12
    extreme = 0
    for signs in itertools.product((0.0, 1.0), repeat=m):
        w = sum(r for r, s in zip(ranks, signs) if s)
        if abs(w - half) >= dev:
            extreme += 1
    return extreme / 2**m


def _signed_rank_normal_p(ranks, w_obs):
    half = sum(ranks) / 2.0
    var = float(np.sum(np.asarray(ranks) ** 2)) / 4.0
    if var <= 0:
        return 1.0
    z = max(0.0, abs(w_obs - half) - 0.5) / math.sqrt(var)
    return min(1.0, float(2.0 * norm.sf(z)))


def wilcoxon_signed_rank(pairs, alpha=0.05, method="auto"):
    """Two-sided Wilcoxon signed-rank test on (first, second) pairs.

    Differences are first minus second; zero differences are dropped.  All
    differences zero is not an error: p=1.0 with a warning flag, since no
    evidence of a shift is itself a reportable conclusion.
    """
    pairs = [(float(x), float(y)) for x, y in pairs]
    if not pairs:
        raise DataError("Wilcoxon needs at least one pair")
    if method not in ("auto", "exact", "normal"):
        raise MethodError(f"unknown method {method!r}")
    firsts = [x for x, _ in pairs]
    seconds = [y for _, y in pairs]
    diffs = [x - y for x, y in pairs]
    nonzero = [d for d in diffs if d != 0.0]
    effect = cliffs_delta(firsts, seconds)

    if not nonzero:
        return PValueConclusion(
            statistic=0.0,
            p=1.0,
            effect_size=effect,
            test="wilcoxon_signed_rank",
            n_obs=len(pairs),
            method="degenerate",
            warning="all differences zero; no shift information",
        )

    ranks = midranks([abs(d) for d in nonzero])
    w_plus = float(sum(r for r, d in zip(ranks, nonzero) if d > 0))
    m = len(nonzero)
    if method == "auto":
        method = "exact" if m <= _EXACT_LIMIT_WILCOXON else "normal"
    if method == "exact":
        if m > 20:
            raise MethodError(f"sign enumeration infeasible for m={m}")
        p = _signed_rank_exact_p(list(ranks), w_plus)
    else:
        p = _signed_rank_normal_p(list(ranks), w_plus)

    return PValueConclusion(
        statistic=w_plus,
        p=float(p),
        effect_size=effect,
        test="wilcoxon_signed_rank",
        n_obs=len(pairs),
        method=method,
    )


def exact_mwu_p_fraction(a, b):
    """Exact p as a Fraction; convenience for tolerance-free assertions."""
    pooled = [float(x) for x in list(a) + list(b)]
    if _has_ties(pooled):
        raise MethodError("fraction form defined for tie-free samples")
    na, nb = len(a), len(b)
    counts = _rank_sum_counts(na + nb, na)
    offset = Fraction(na * (na + 1), 2)
    mu = Fraction(na * nb, 2)
    u_obs = Fraction(int(_u_statistic(a, b) * 2), 2)
    dev = abs(u_obs - mu)
    extreme = sum(
        int(c)
        for s, c in enumerate(counts)
        if c and abs(Fraction(s) - offset - mu) >= dev
    )
    return Fraction(extreme, math.comb(na + nb, na))
