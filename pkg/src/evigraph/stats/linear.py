"""Ordinary least squares with Gaussian maximum-likelihood fit quality."""

from __future__ import annotations

import numpy as np
import scipy.stats

from ..conclusions import (
    CoefficientEstimate,
    CoefficientsConclusion,
    make_fit_quality,
)
from ..errors import DataError
from .diagnostics import run_diagnostics
from .ranktests import midranks


def design_matrix(table, formula):
    """Intercept-first design matrix plus coefficient names."""
    cols = [np.ones(table.n_rows)]
    names = ["intercept"]
    for p in formula.predictors:
        cols.append(table.column(p))
        names.append(p)
    return np.column_stack(cols), names


def gaussian_loglik(residuals, sigma2):
    n = len(residuals)
    return -0.5 * n * (np.log(2.0 * np.pi * sigma2) + 1.0)


def fit_linear_model(data, formula, spec, diagnostics_seed=0,
                     diagnostics_permutations=10000):
    """OLS for the formula, ML log-likelihood, t-based CIs, diagnostics.

    rank_transform_response on the method replaces the response with its
    midranks before fitting, which carries the rank-test logic into the
    regression setting.
    """
    x, names = design_matrix(data, formula)
    y = data.column(formula.response)
    if spec.rank_transform_response:
        y = midranks(y)
    n, p = x.shape
    if n <= p:
        raise DataError(f"need more than {p} rows to fit, got {n}")
    if np.linalg.matrix_rank(x) < p:
        raise DataError("rank-deficient design matrix")

    beta, *_ = np.linalg.lstsq(x, y, rcond=None)
    fitted = x @ beta
    resid = y - fitted
    rss = float(resid @ resid)
    sigma2_ml = rss / n
    if sigma2_ml <= 0:
        sigma2_ml = np.finfo(float).tiny  # exact fit; likelihood degenerate

    df = n - p
    sigma2_unbiased = rss / df
    xtx_inv = np.linalg.inv(x.T @ x)
    ses = np.sqrt(np.maximum(0.0, sigma2_unbiased * np.diag(xtx_inv)))
    tq = scipy.stats.t.ppf(0.5 + spec.ci_level / 2.0, df)

    coefficients = {
        name: CoefficientEstimate(
            estimate=float(b),
            se=float(se),
            ci=(float(b - tq * se), float(b + tq * se)),
        )
        for name, b, se in zip(names, beta, ses)
    }

    var_fixed = float(np.var(fitted))
    r2 = var_fixed / (var_fixed + sigma2_ml) if var_fixed + sigma2_ml > 0 else 0.0
    fit = make_fit_quality(
        log_likelihood=gaussian_loglik(resid, sigma2_ml),
        n_params=p + 1,  # coefficients plus residual variance
        r2_marginal=r2,
    )
    report = run_diagnostics(resid, x, n_permutations=diagnostics_permutations,
                             seed=diagnostics_seed)
    return CoefficientsConclusion(
        coefficients=coefficients,
        fit=fit,
        treatment=formula.predictors[0],
        n_obs=n,
        diagnostics=report,
        variance_components={"residual": sigma2_ml},
    )
