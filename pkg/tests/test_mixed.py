import numpy as np
import pytest
import statsmodels.api as sm

from evigraph.dag import ModelFormula
from evigraph.errors import DataError
from evigraph.methods import MethodSpec
from evigraph.stats.linear import fit_linear_model
from evigraph.stats.mixed import fit_linear_mixed_model

from .conftest import make_table

FORMULA = ModelFormula(response="y", predictors=("x",), random_intercepts=("g",))
SPEC = MethodSpec(id="m-lmm", kind="linear_mixed_model", formula=FORMULA)


def simulate(rng, n_groups=50, group_size=20, slope=2.0, sd_group=1.0, sd_e=0.5):
    n = n_groups * group_size
    g = np.repeat(np.arange(n_groups), group_size)
    u = rng.normal(scale=sd_group, size=n_groups)
    x = rng.normal(size=n)
    y = 1.0 + slope * x + u[g] + rng.normal(scale=sd_e, size=n)
    return make_table({
        "x": ("continuous", x),
        "y": ("continuous", y),
        "g": ("group", [f"g{i}" for i in g]),
    })


def test_zero_between_group_variance_collapses_to_ols():
    rng = np.random.default_rng(404)
    n_groups, size = 12, 15
    g = np.repeat(np.arange(n_groups), size)
    x = rng.normal(size=n_groups * size)
    e = rng.normal(size=n_groups * size)
    # remove all between-group variation from the noise
    for k in range(n_groups):
        e[g == k] -= e[g == k].mean()
    y = 0.5 + 2.0 * x + e
    table = make_table({
        "x": ("continuous", x),
        "y": ("continuous", y),
        "g": ("group", [str(i) for i in g]),
    })
    lmm = fit_linear_mixed_model(table, FORMULA, SPEC, diagnostics_permutations=10)
    ols = fit_linear_model(
        table, ModelFormula(response="y", predictors=("x",)),
        MethodSpec(id="m", kind="linear_model",
                   formula=ModelFormula(response="y", predictors=("x",))),
        diagnostics_permutations=10)
    assert lmm.variance_components["g"] < 1e-6
    for k in ("intercept", "x"):
        assert abs(lmm.coefficients[k].estimate - ols.coefficients[k].estimate) < 1e-4


def test_matches_statsmodels_ml():
    rng = np.random.default_rng(31)
    table = simulate(rng, n_groups=20, group_size=10)
    res = fit_linear_mixed_model(table, FORMULA, SPEC, diagnostics_permutations=10)
    ref = sm.MixedLM(
        table.column("y"),
        sm.add_constant(table.column("x")),
        groups=np.asarray(table.data["g"]),
    ).fit(reml=False)
    assert abs(res.fit.log_likelihood - ref.llf) < 1e-4
    assert abs(res.coefficients["x"].estimate - ref.fe_params[1]) < 1e-4
    assert abs(res.variance_components["g"] - float(np.asarray(ref.cov_re)[0, 0])) < 1e-3
    assert abs(res.variance_components["residual"] - ref.scale) < 1e-3
    assert abs(res.coefficients["x"].se - ref.bse_fe[1]) < 1e-4


def test_recovers_simulation_truth():
    hits = 0
    slope_errs, g_vars, e_vars = [], [], []
    for rep in range(40):
        rng = np.random.default_rng(7000 + rep)
        table = simulate(rng)
        res = fit_linear_mixed_model(table, FORMULA, SPEC,
                                     diagnostics_permutations=10)
        est = res.coefficients["x"]
        if abs(est.estimate - 2.0) <= 3 * est.se:
            hits += 1
        slope_errs.append(est.estimate - 2.0)
        g_vars.append(res.variance_components["g"])
        e_vars.append(res.variance_components["residual"])
    assert hits >= 0.95 * 40
    assert abs(np.mean(g_vars) - 1.0) < 0.15
    assert abs(np.mean(e_vars) - 0.25) < 0.15 * 0.25


def test_crossed_random_intercepts():
    rng = np.random.default_rng(99)
    participants, items = 30, 8
    p_idx = np.repeat(np.arange(participants), items)
    i_idx = np.tile(np.arange(items), participants)
    skill = rng.normal(scale=0.8, size=participants)
    complexity = rng.normal(scale=0.6, size=items)
    x = rng.normal(size=participants * items)
    y = 2.0 + 1.5 * x + skill[p_idx] + complexity[i_idx] + rng.normal(
        scale=0.5, size=participants * items)
    table = make_table({
        "x": ("continuous", x),
        "y": ("continuous", y),
        "p": ("group", [f"p{i}" for i in p_idx]),
        "i": ("group", [f"i{i}" for i in i_idx]),
    })
    formula = ModelFormula(response="y", predictors=("x",),
                           random_intercepts=("p", "i"))
    spec = MethodSpec(id="m", kind="linear_mixed_model", formula=formula)
    res = fit_linear_mixed_model(table, formula, spec,
                                 diagnostics_permutations=10)
    est = res.coefficients["x"]
    assert abs(est.estimate - 1.5) <= 3 * est.se
    assert res.variance_components["p"] > 0.2
    assert res.variance_components["i"] > 0.05
    assert res.fit.n_params == 2 + 2 + 1
    assert res.fit.r2_conditional >= res.fit.r2_marginal


def test_single_level_group_rejected():
    table = make_table({
        "x": ("continuous", [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
        "y": ("continuous", [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
        "g": ("group", ["a"] * 6),
    })
    with pytest.raises(DataError, match="single level"):
        fit_linear_mixed_model(table, FORMULA, SPEC)


def test_loglik_beats_ols_when_groups_matter():
    rng = np.random.default_rng(12)
    table = simulate(rng, n_groups=25, group_size=8, sd_group=1.5)
    lmm = fit_linear_mixed_model(table, FORMULA, SPEC, diagnostics_permutations=10)
    ols = fit_linear_model(
        table, ModelFormula(response="y", predictors=("x",)),
        MethodSpec(id="m", kind="linear_model",
                   formula=ModelFormula(response="y", predictors=("x",))),
        diagnostics_permutations=10)
    assert lmm.fit.log_likelihood > ols.fit.log_likelihood
    assert lmm.fit.aic < ols.fit.aic
    assert lmm.fit.r2_conditional > lmm.fit.r2_marginal
