import numpy as np
import pytest
import statsmodels.api as sm

from evigraph.dag import ModelFormula
from evigraph.errors import DataError
from evigraph.methods import MethodSpec
from evigraph.stats.linear import fit_linear_model
from evigraph.stats.ranktests import mann_whitney_u, midranks

from .conftest import make_table

LM = MethodSpec(id="m-lm", kind="linear_model",
                formula=ModelFormula(response="y", predictors=("x",)))


def simple_formula(*predictors):
    return ModelFormula(response="y", predictors=tuple(predictors))


def test_exact_fit_line():
    table = make_table({"x": ("continuous", [0, 1, 2]),
                        "y": ("continuous", [0, 2, 4])})
    res = fit_linear_model(table, simple_formula("x"), LM,
                           diagnostics_permutations=10)
    assert abs(res.coefficients["intercept"].estimate) < 1e-12
    assert abs(res.coefficients["x"].estimate - 2.0) < 1e-12
    assert res.fit.n_params == 3


def test_matches_normal_equations_oracle():
    rng = np.random.default_rng(101)
    for _ in range(30):
        n = 50
        x = rng.normal(size=(n, 3))
        beta_true = rng.normal(size=4)
        y = beta_true[0] + x @ beta_true[1:] + rng.normal(size=n)
        table = make_table({
            "a": ("continuous", x[:, 0]),
            "b": ("continuous", x[:, 1]),
            "c": ("continuous", x[:, 2]),
            "y": ("continuous", y),
        })
        spec = MethodSpec(id="m", kind="linear_model",
                          formula=ModelFormula(response="y",
                                               predictors=("a", "b", "c")))
        res = fit_linear_model(table, spec.formula, spec,
                               diagnostics_permutations=10)
        xd = np.column_stack([np.ones(n), x])
        oracle = np.linalg.solve(xd.T @ xd, xd.T @ y)
        got = [res.coefficients[k].estimate for k in ("intercept", "a", "b", "c")]
        assert np.max(np.abs(np.array(got) - oracle)) < 1e-8


def test_loglik_and_ci_match_statsmodels():
    rng = np.random.default_rng(55)
    n = 80
    x = rng.normal(size=n)
    y = 1.0 + 0.5 * x + rng.normal(size=n)
    table = make_table({"x": ("continuous", x), "y": ("continuous", y)})
    res = fit_linear_model(table, simple_formula("x"), LM,
                           diagnostics_permutations=10)
    ref = sm.OLS(y, sm.add_constant(x)).fit()
    assert abs(res.fit.log_likelihood - ref.llf) < 1e-8
    ci = ref.conf_int(alpha=0.05)
    assert abs(res.coefficients["x"].ci[0] - ci[1][0]) < 1e-8
    assert abs(res.coefficients["x"].ci[1] - ci[1][1]) < 1e-8
    assert abs(res.coefficients["x"].se - ref.bse[1]) < 1e-10


def test_aic_identity():
    rng = np.random.default_rng(9)
    table = make_table({"x": ("continuous", rng.normal(size=40)),
                        "y": ("continuous", rng.normal(size=40))})
    res = fit_linear_model(table, simple_formula("x"), LM,
                           diagnostics_permutations=10)
    assert abs(res.fit.aic - (2 * res.fit.n_params - 2 * res.fit.log_likelihood)) < 1e-9


def test_nested_models_loglik_monotone():
    rng = np.random.default_rng(23)
    for _ in range(15):
        n = 60
        a, b = rng.normal(size=n), rng.normal(size=n)
        y = 0.3 * a + rng.normal(size=n)
        table = make_table({"a": ("continuous", a), "b": ("continuous", b),
                            "y": ("continuous", y)})
        small = fit_linear_model(
            table, simple_formula("a"),
            MethodSpec(id="s", kind="linear_model", formula=simple_formula("a")),
            diagnostics_permutations=10)
        big = fit_linear_model(
            table, simple_formula("a", "b"),
            MethodSpec(id="b", kind="linear_model",
                       formula=simple_formula("a", "b")),
            diagnostics_permutations=10)
        assert big.fit.log_likelihood >= small.fit.log_likelihood - 1e-9


def test_rank_transform_applies_midranks():
    rng = np.random.default_rng(3)
    x = rng.normal(size=30)
    y = rng.normal(size=30)
    table = make_table({"x": ("continuous", x), "y": ("continuous", y)})
    spec = MethodSpec(id="m", kind="linear_model",
                      formula=simple_formula("x"), rank_transform_response=True)
    res = fit_linear_model(table, spec.formula, spec,
                           diagnostics_permutations=10)
    ref = sm.OLS(midranks(y), sm.add_constant(x)).fit()
    assert abs(res.coefficients["x"].estimate - ref.params[1]) < 1e-10


def test_rank_regression_agrees_with_mwu_decisions():
    rng = np.random.default_rng(2718)
    agree = 0
    reps = 200
    for _ in range(reps):
        na, nb = rng.integers(8, 25), rng.integers(8, 25)
        shift = rng.normal() * 0.8
        a = rng.normal(size=na)
        b = rng.normal(size=nb) + shift
        u_decision = mann_whitney_u(a, b, method="normal").p < 0.05
        x = np.concatenate([np.zeros(na), np.ones(nb)])
        y = np.concatenate([a, b])
        table = make_table({"x": ("binary", x), "y": ("continuous", y)})
        spec = MethodSpec(id="m", kind="linear_model",
                          formula=simple_formula("x"),
                          rank_transform_response=True)
        res = fit_linear_model(table, spec.formula, spec,
                               diagnostics_permutations=10)
        lo, hi = res.coefficients["x"].ci
        lm_decision = not (lo <= 0.0 <= hi)
        agree += int(u_decision == lm_decision)
    assert agree / reps >= 0.95


def test_r2_between_zero_and_one():
    rng = np.random.default_rng(88)
    table = make_table({"x": ("continuous", rng.normal(size=50)),
                        "y": ("continuous", rng.normal(size=50))})
    res = fit_linear_model(table, simple_formula("x"), LM,
                           diagnostics_permutations=10)
    assert 0.0 <= res.fit.r2_marginal <= 1.0


def test_rank_deficient_design_rejected():
    x = [1.0, 2.0, 3.0, 4.0]
    table = make_table({"a": ("continuous", x), "b": ("continuous", x),
                        "y": ("continuous", [0, 1, 0, 1])})
    with pytest.raises(DataError, match="rank"):
        fit_linear_model(
            table, simple_formula("a", "b"),
            MethodSpec(id="m", kind="linear_model",
                       formula=simple_formula("a", "b")))


def test_insufficient_rows_rejected():
    table = make_table({"x": ("continuous", [1.0, 2.0]),
                        "y": ("continuous", [1.0, 2.0])})
    with pytest.raises(DataError, match="rows"):
        fit_linear_model(table, simple_formula("x"), LM)


def test_treatment_ci_exposed():
    rng = np.random.default_rng(1)
    x = rng.normal(size=40)
    table = make_table({"x": ("continuous", x),
                        "y": ("continuous", 2 * x + rng.normal(size=40))})
    res = fit_linear_model(table, simple_formula("x"), LM,
                           diagnostics_permutations=10)
    assert res.treatment == "x"
    lo, hi = res.treatment_ci
    assert lo < res.treatment_estimate < hi
