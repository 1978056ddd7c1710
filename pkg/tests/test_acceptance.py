"""Acceptance gate: every core guarantee, each with its runtime budget.

These tests restate the package's headline claims end to end, against
independent oracles where one exists.  They overlap the per-module suites
on purpose; this file is the single place that must stay green for a
release.  The archived-data replay at the bottom needs the original
experiment files and skips when EVIGRAPH_ARCHIVE is unset.
"""

import itertools
import json
import math
import os
import random
import time

import numpy as np
import pytest
import scipy.stats

from evigraph.dag import (
    ModelFormula,
    adjustment_sets,
    d_separated,
    parse_dag,
)
from evigraph.methods import McmcConfig, MethodSpec
from evigraph.scenario import ScenarioConfig, generate_scenario
from evigraph.stats.bayes import fit_bayes_binomial, loo_exact, sample_posterior
from evigraph.stats.linear import fit_linear_model
from evigraph.stats.mixed import fit_linear_mixed_model
from evigraph.stats.ranktests import (
    aggregate_means,
    mann_whitney_u,
    wilcoxon_signed_rank,
)
from evigraph.synthesis import aic_verdict, combine_pvalues, evaluate_revision
from evigraph.fixtures import table1_graph, table2_graph

from .conftest import make_table
from .test_dag import oracle_backdoor_valid, oracle_d_separated, random_dag
from .test_scenario import _views


# ---------------------------------------------------------------------------
# 1. d-separation equals brute-force path enumeration
# ---------------------------------------------------------------------------


def test_dsep_matches_path_enumeration_on_200_random_dags():
    t0 = time.monotonic()
    rng = random.Random(2024)
    for trial in range(200):
        dag = random_dag(rng, rng.randint(3, 7))
        names = sorted(dag.node_names())
        edges = list(dag.edges)
        for a, b in itertools.combinations(names, 2):
            rest = [n for n in names if n not in (a, b)]
            for r in range(len(rest) + 1):
                for given in itertools.combinations(rest, r):
                    got = d_separated(dag, a, b, given)
                    want = oracle_d_separated(names, edges, a, b, given)
                    assert got == want, (trial, dag.edges, a, b, given)
    assert time.monotonic() - t0 < 30.0


# ---------------------------------------------------------------------------
# 2. minimal adjustment sets on the canonical graphs
# ---------------------------------------------------------------------------


FORK = parse_dag("x [treatment]; y [outcome]; z; z -> x; z -> y; x -> y",
                 dag_id="fork")
COLLIDER = parse_dag("x [treatment]; y [outcome]; z; x -> y; x -> z; y -> z",
                     dag_id="collider")
M_GRAPH = parse_dag(
    "u; v; w; x [treatment]; y [outcome]\n"
    "u -> x; u -> w; v -> w; v -> y; x -> y",
    dag_id="m-graph")


def minimal_sets_by_enumeration(dag):
    covs = sorted(set(dag.node_names()) - {dag.treatment, dag.outcome})
    valid = [frozenset(z) for r in range(len(covs) + 1)
             for z in itertools.combinations(covs, r)
             if oracle_backdoor_valid(dag, set(z))]
    return {z for z in valid if not any(w < z for w in valid)}


def test_minimal_adjustment_sets_match_exhaustive_subset_check():
    t0 = time.monotonic()
    for dag in (FORK, COLLIDER, M_GRAPH):
        got = {frozenset(s) for s in adjustment_sets(dag)}
        assert got == minimal_sets_by_enumeration(dag), dag.id
    assert adjustment_sets(FORK) == [{"z"}]  # the sole minimal set
    assert adjustment_sets(COLLIDER) == [set()]
    assert not oracle_backdoor_valid(COLLIDER, {"z"})  # conditioning opens x->z<-y
    assert adjustment_sets(M_GRAPH) == [set()]
    assert not oracle_backdoor_valid(M_GRAPH, {"w"})  # m-bias
    assert time.monotonic() - t0 < 1.0


# ---------------------------------------------------------------------------
# 3. rank tests: frozen exact values, then exact vs normal approximation
# ---------------------------------------------------------------------------


def _distinct_uniforms(rng, k):
    vals = set()
    while len(vals) < k:
        vals.add(rng.random())
    out = list(vals)
    rng.shuffle(out)
    return out


def test_rank_test_exact_values_and_approximation_agreement():
    t0 = time.monotonic()
    res = mann_whitney_u([1, 2, 3], [4, 5, 6])
    assert res.method == "exact"
    assert abs(res.p - 0.100) < 1e-12
    res = wilcoxon_signed_rank([(1.0, 0.0), (2.0, 0.0), (2.0, 0.0)])
    assert res.method == "exact"
    assert abs(res.p - 0.25) < 1e-12

    # agreement is asserted where the normal approximation is in range:
    # five-plus per group / nine-plus pairs.  Below that the exact null is
    # too coarse for any continuous approximation to track within 0.02.
    rng = random.Random(314)
    for _ in range(250):
        na, nb = rng.randint(5, 7), rng.randint(5, 7)
        vals = _distinct_uniforms(rng, na + nb)
        a, b = vals[:na], vals[na:]
        gap = abs(mann_whitney_u(a, b, method="exact").p
                  - mann_whitney_u(a, b, method="normal").p)
        assert gap < 0.02, (a, b)
    for _ in range(250):
        m = rng.randint(9, 12)
        pairs = [(d if rng.random() < 0.5 else -d, 0.0)
                 for d in _distinct_uniforms(rng, m)]
        gap = abs(wilcoxon_signed_rank(pairs, method="exact").p
                  - wilcoxon_signed_rank(pairs, method="normal").p)
        assert gap < 0.02, pairs
    assert time.monotonic() - t0 < 60.0


# ---------------------------------------------------------------------------
# 4. regression: normal-equations oracle, LMM collapse, LMM recovery
# ---------------------------------------------------------------------------


def _ols_spec(*predictors):
    f = ModelFormula(response="y", predictors=tuple(predictors))
    return f, MethodSpec(id="m-lm", kind="linear_model", formula=f)


def test_regression_matches_normal_equations_and_recovers_lmm_slope():
    t0 = time.monotonic()
    rng = np.random.default_rng(5150)
    for _ in range(100):
        n = int(rng.integers(25, 61))
        k = int(rng.integers(1, 4))
        x_cols = {f"x{j}": rng.normal(size=n) for j in range(k)}
        beta = rng.normal(size=k + 1)
        y = beta[0] + sum(b * x_cols[f"x{j}"]
                          for j, b in enumerate(beta[1:])) + rng.normal(size=n)
        table = make_table({"y": ("continuous", y),
                            **{c: ("continuous", v) for c, v in x_cols.items()}})
        formula, spec = _ols_spec(*x_cols)
        fit = fit_linear_model(table, formula, spec, diagnostics_permutations=10)
        design = np.column_stack([np.ones(n)] + [x_cols[c] for c in x_cols])
        ref = np.linalg.solve(design.T @ design, design.T @ y)
        got = [fit.coefficients["intercept"].estimate] + [
            fit.coefficients[c].estimate for c in x_cols]
        assert np.max(np.abs(np.asarray(got) - ref)) < 1e-8

    # zero between-group variance: the mixed model must collapse to OLS
    n_groups, size = 10, 12
    g = np.repeat(np.arange(n_groups), size)
    x = rng.normal(size=n_groups * size)
    e = rng.normal(size=n_groups * size)
    for lvl in range(n_groups):
        e[g == lvl] -= e[g == lvl].mean()
    table = make_table({
        "x": ("continuous", x),
        "y": ("continuous", 1.5 - 0.7 * x + e),
        "g": ("group", [str(i) for i in g]),
    })
    lmm_formula = ModelFormula(response="y", predictors=("x",),
                               random_intercepts=("g",))
    lmm = fit_linear_mixed_model(
        table, lmm_formula,
        MethodSpec(id="m-lmm", kind="linear_mixed_model", formula=lmm_formula),
        diagnostics_permutations=10)
    formula, spec = _ols_spec("x")
    ols = fit_linear_model(table, formula, spec, diagnostics_permutations=10)
    for name in ("intercept", "x"):
        assert abs(lmm.coefficients[name].estimate
                   - ols.coefficients[name].estimate) < 1e-4

    # 50 groups x 20 rows, known components: slope within 3 se >= 95/100
    hits = 0
    for seed in range(100):
        run = np.random.default_rng(9000 + seed)
        gi = np.repeat(np.arange(50), 20)
        u = run.normal(scale=1.0, size=50)
        xs = run.normal(size=1000)
        ys = 1.0 + 2.0 * xs + u[gi] + run.normal(scale=0.5, size=1000)
        table = make_table({
            "x": ("continuous", xs),
            "y": ("continuous", ys),
            "g": ("group", [f"g{i}" for i in gi]),
        })
        fit = fit_linear_mixed_model(
            table, lmm_formula,
            MethodSpec(id="m-lmm", kind="linear_mixed_model",
                       formula=lmm_formula),
            diagnostics_permutations=10)
        c = fit.coefficients["x"]
        hits += abs(c.estimate - 2.0) <= 3.0 * c.se
    assert hits >= 95
    assert time.monotonic() - t0 < 300.0


# ---------------------------------------------------------------------------
# 5. sampler sanity: conjugate target, determinism, convergence gate
# ---------------------------------------------------------------------------


def test_sampler_hits_conjugate_posterior_and_converges_on_demo():
    t0 = time.monotonic()
    seven = make_table({"y": ("count", [7.0]), "n": ("count", [10.0])},
                       trials={"y": "n"})
    intercept_only = ModelFormula(response="y", predictors=(),
                                  family="binomial", trials_column="n")
    # Logistic(0,1) on the logit intercept is uniform on the probability
    # scale, so the posterior is exactly Beta(8,4) with mean 2/3.
    flat = MethodSpec(
        id="m-flat", kind="bayes_binomial", formula=intercept_only,
        mcmc=McmcConfig(chains=4, warmup=500, samples=2000, seed=42),
        priors={"intercept": {"dist": "logistic", "loc": 0.0, "scale": 1.0}})
    _, pooled, rhat, _ = sample_posterior(seven, intercept_only, flat)
    p_draws = 1.0 / (1.0 + np.exp(-pooled[:, 0]))
    assert abs(float(p_draws.mean()) - 8.0 / 12.0) < 0.02
    assert rhat < 1.05

    a = fit_bayes_binomial(seven, intercept_only, flat)
    b = fit_bayes_binomial(seven, intercept_only, flat)
    assert a == b  # same seed: bit-exact conclusion

    table, _ = generate_scenario(
        ScenarioConfig(seed=5, participants=15, items=7))
    grouped = ModelFormula(response="missing", predictors=("passive",),
                           random_intercepts=("participant", "requirement"),
                           family="binomial", trials_column="trials")
    spec = MethodSpec(id="m-demo", kind="bayes_binomial", formula=grouped,
                      mcmc=McmcConfig(chains=4, warmup=2000, samples=3000,
                                      seed=20))
    res = fit_bayes_binomial(table, grouped, spec)
    assert res.convergence < 1.05
    assert res.reliable
    assert time.monotonic() - t0 < 300.0


# ---------------------------------------------------------------------------
# 6. p-value combination: frozen values and null uniformity
# ---------------------------------------------------------------------------


def test_pvalue_combination_values_and_null_uniformity():
    t0 = time.monotonic()
    assert combine_pvalues([0.02, 0.03], method="fisher") == pytest.approx(
        0.0050, abs=2e-4)
    assert combine_pvalues([0.05, 0.05], method="stouffer") == pytest.approx(
        0.0100, abs=2e-4)
    rng = np.random.default_rng(606)
    combined = [combine_pvalues(rng.random(4).tolist(), method="fisher")
                for _ in range(10000)]
    ks = scipy.stats.kstest(combined, "uniform").statistic
    assert float(ks) < 0.02
    assert time.monotonic() - t0 < 60.0


# ---------------------------------------------------------------------------
# 7. lineage replay: recorded study steps classify exactly as published
# ---------------------------------------------------------------------------


def _incoming_types(graph):
    """Per-evidence classification in recording order; None for roots."""
    out = []
    for ev_id in graph.evidence:
        types = [set(e.types) for e in graph.edges if e.to_id == ev_id]
        out.append(types[0] if types else None)
    return out


def test_recorded_lineages_classify_exactly():
    t0 = time.monotonic()
    t1 = table1_graph()
    assert _incoming_types(t1) == [
        None,
        {"revision", "reanalysis"},
        {"replication"},
        {"revision", "replication"},
    ]

    t2 = table2_graph()
    got = [(e.from_id, e.to_id, set(e.types)) for e in t2.edges]
    assert got == [
        ("e1", "e1.1", {"reanalysis"}),
        ("e1.1", "e1.2", {"reanalysis"}),
        ("e1.1", "e1.3a", {"revision"}),
        ("e1.3a", "e1.3b", {"revision", "reanalysis"}),
        ("e1.2", "e2", {"revision"}),
        ("e1.3b", "e2", {"reanalysis"}),
        ("e1.3b", "e1.3c", {"revision"}),
        ("e1.3a", "e1.3c", {"revision", "reanalysis"}),
        ("e1.3c", "e1.4", {"reanalysis"}),
        ("e2", "e1.4", {"revision"}),
    ]

    tie = aic_verdict(249.1, 251.2, "h2a", "h2")
    assert tie.winner == "tie"
    assert tie.delta == pytest.approx(-2.1)
    win = aic_verdict(249.1, 241.4, "h2a", "h2c")
    assert win.winner == "h2c"
    assert win.delta == pytest.approx(7.7)
    assert time.monotonic() - t0 < 1.0


# ---------------------------------------------------------------------------
# 8. deconfounding power on simulated fork data
# ---------------------------------------------------------------------------


def test_deconfound_verdicts_track_the_generating_process():
    t0 = time.monotonic()
    old, new = _views()
    adjusted_wins = sum(
        evaluate_revision("deconfound", old, new, generate_scenario(
            ScenarioConfig(seed=3000 + s, participants=100, items=5,
                           confounder_strength=2.0))[0]).winner
        == new.hypothesis.id
        for s in range(50))
    original_kept = sum(
        evaluate_revision("deconfound", old, new, generate_scenario(
            ScenarioConfig(seed=4000 + s, participants=100, items=5,
                           confounder_strength=0.0))[0]).winner
        == old.hypothesis.id
        for s in range(50))
    assert adjusted_wins >= 45
    assert original_kept >= 45
    assert time.monotonic() - t0 < 600.0


# ---------------------------------------------------------------------------
# 9. exact-refit LOO separates the true model from a null competitor
# ---------------------------------------------------------------------------


def _binomial_arm_data(seed, n=60, effect=1.2):
    rng = np.random.default_rng(seed)
    x = (rng.random(n) < 0.5).astype(float)
    rate = 1.0 / (1.0 + np.exp(-(-0.5 + effect * x)))
    return make_table({
        "passive": ("binary", x),
        "missing": ("count", rng.binomial(10, rate).astype(float)),
        "trials": ("count", np.full(n, 10.0)),
    }, trials={"missing": "trials"})


def test_exact_loo_favors_the_true_model():
    t0 = time.monotonic()
    f_true = ModelFormula(response="missing", predictors=("passive",),
                          family="binomial", trials_column="trials")
    f_null = ModelFormula(response="missing", predictors=(),
                          family="binomial", trials_column="trials")

    def spec_for(formula, seed):
        return MethodSpec(id="m-loo", kind="bayes_binomial", formula=formula,
                          mcmc=McmcConfig(chains=2, warmup=400, samples=400,
                                          seed=seed))

    wins = 0
    for rep in range(20):
        data = _binomial_arm_data(7000 + rep)
        elpd_true = loo_exact(data, f_true, spec_for(f_true, 50 + rep))
        elpd_null = loo_exact(data, f_null, spec_for(f_null, 50 + rep))
        wins += elpd_true > elpd_null
    assert wins >= 18
    assert time.monotonic() - t0 < 900.0


# ---------------------------------------------------------------------------
# 10. archived-data replay (optional; needs the original experiment files)
# ---------------------------------------------------------------------------

ARCHIVE = os.environ.get("EVIGRAPH_ARCHIVE", "")


def _archive_table(mapping, key):
    """Load one archived CSV through the user-written column mapping."""
    from evigraph.data import read_csv, read_metadata

    entry = mapping[key]
    root = os.path.dirname(os.path.join(ARCHIVE, "mapping.json"))
    meta = read_metadata(os.path.join(root, entry["metadata"]))
    table = read_csv(os.path.join(root, entry["csv"]), meta)
    rename = entry.get("columns", {})
    if rename:
        data = {rename.get(c, c): v for c, v in table.data.items()}
        kinds = {rename.get(c, c): k for c, k in table.kinds.items()}
        trials = {rename.get(c, c): rename.get(t, t)
                  for c, t in table.trials.items()}
        table = type(table)(name=table.name, columns=tuple(data),
                            kinds=kinds, data=data, trials=trials)
    return table


@pytest.mark.skipif(not ARCHIVE, reason="EVIGRAPH_ARCHIVE not set")
def test_archived_experiments_reproduce_published_numbers():
    with open(os.path.join(ARCHIVE, "mapping.json")) as fh:
        mapping = json.load(fh)

    # between-subjects comprehension data: per-participant miss rates
    d1 = _archive_table(mapping, "between")
    rates = np.asarray(d1.data["missing"]) / np.asarray(d1.data["trials"])
    arms = {}
    for arm in (0.0, 1.0):
        keep = [i for i, v in enumerate(d1.data["passive"]) if v == arm]
        arms[arm] = aggregate_means(
            rates[keep], [d1.data["participant"][i] for i in keep])
    mwu = mann_whitney_u(arms[1.0], arms[0.0])
    assert mwu.p == pytest.approx(0.001, abs=5e-4)

    # within-subject replication: paired per-participant rates
    d2 = _archive_table(mapping, "within")
    rates = np.asarray(d2.data["missing"]) / np.asarray(d2.data["trials"])
    per_arm = {}
    for arm in (0.0, 1.0):
        keep = [i for i, v in enumerate(d2.data["passive"]) if v == arm]
        per_arm[arm] = aggregate_means(
            rates[keep], [d2.data["participant"][i] for i in keep])
    wil = wilcoxon_signed_rank(list(zip(per_arm[1.0], per_arm[0.0])))
    assert wil.p == pytest.approx(0.025, abs=5e-4)

    # fixed-effects estimate with the published interval
    formula = ModelFormula(response="missing", predictors=("passive",))
    fit = fit_linear_model(
        d1, formula,
        MethodSpec(id="m-lm", kind="linear_model", formula=formula))
    lo, hi = fit.coefficients["passive"].ci
    assert lo == pytest.approx(0.23, abs=0.01)
    assert hi == pytest.approx(0.84, abs=0.01)

    # the three competing specifications and their information criteria
    aics = []
    for key in ("mediators", "mediators_experience", "mediators_groups"):
        entry = mapping[key]
        f = ModelFormula(response="missing",
                         predictors=tuple(entry["predictors"]),
                         random_intercepts=tuple(entry.get("groups", ())))
        kind = "linear_mixed_model" if f.random_intercepts else "linear_model"
        m = MethodSpec(id=f"m-{key}", kind=kind, formula=f)
        fitter = fit_linear_mixed_model if f.random_intercepts else fit_linear_model
        aics.append(fitter(d1, f, m).fit.aic)
    for got, want in zip(aics, (249.1, 251.2, 241.4)):
        assert got == pytest.approx(want, abs=0.5)

    # posterior predictive sign split from the count model
    grouped = ModelFormula(
        response="missing", predictors=("passive",),
        random_intercepts=("participant", "requirement"),
        family="binomial", trials_column="trials")
    spec = MethodSpec(id="m-b", kind="bayes_binomial", formula=grouped,
                      mcmc=McmcConfig(chains=4, warmup=2000, samples=3000,
                                      seed=11))
    res = fit_bayes_binomial(d1, grouped, spec)
    assert res.sign_probabilities["fewer"] == pytest.approx(0.17, abs=0.05)
    assert res.sign_probabilities["equal"] == pytest.approx(0.48, abs=0.05)
    assert res.sign_probabilities["more"] == pytest.approx(0.34, abs=0.05)
