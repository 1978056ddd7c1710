"""Residual diagnostics: normality, serial independence, homoscedasticity.

The three checks mirror the iid assumptions of a Gaussian linear model.
Shapiro-Wilk uses Royston's approximation (valid for 8..5000 residuals;
outside that range the entry is omitted with a notice).  Durbin-Watson
significance comes from a seeded permutation null rather than the exact
distribution; Breusch-Pagan is the n*R^2 auxiliary-regression form.
"""

from __future__ import annotations

import numpy as np
import scipy.stats

from ..conclusions import DiagnosticsReport
from ..errors import DataError

_SW_MIN, _SW_MAX = 8, 5000


def durbin_watson_statistic(residuals):
    e = np.asarray(residuals, dtype=float)
    denom = float(np.sum(e**2))
    if denom == 0.0:
        return 2.0  # no residual variation: treat as no autocorrelation signal
    return float(np.sum(np.diff(e) ** 2) / denom)


def _durbin_watson(residuals, n_permutations, seed):
    e = np.asarray(residuals, dtype=float)
    d_obs = durbin_watson_statistic(e)
    if float(np.sum(e**2)) == 0.0:
        return {"d": 2.0, "p": 1.0}, "durbin-watson: residuals identically zero"
    # one-sided against positive autocorrelation: small d is extreme
    rng = np.random.default_rng(seed)
    n = e.size
    hits = 0
    done = 0
    while done < n_permutations:
        chunk = min(2000, n_permutations - done)
        idx = np.argsort(rng.random((chunk, n)), axis=1)
        perm = e[idx]
        d_perm = np.sum(np.diff(perm, axis=1) ** 2, axis=1) / np.sum(e**2)
        hits += int(np.sum(d_perm <= d_obs))
        done += chunk
    p = (hits + 1) / (n_permutations + 1)
    return {"d": d_obs, "p": min(1.0, float(p))}, None


def _shapiro_wilk(residuals):
    e = np.asarray(residuals, dtype=float)
    if not _SW_MIN <= e.size <= _SW_MAX:
        return None, (
            f"shapiro-wilk omitted: n={e.size} outside the "
            f"{_SW_MIN}..{_SW_MAX} validity range"
        )
    if float(np.ptp(e)) == 0.0:
        return None, "shapiro-wilk omitted: residuals are constant"
    w, p = scipy.stats.shapiro(e)
    return {"W": float(w), "p": float(p)}, None


def _breusch_pagan(residuals, design):
    e = np.asarray(residuals, dtype=float)
    x = np.asarray(design, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != e.size:
        raise DataError("design rows must match the residual count")
    if not np.allclose(x[:, 0], 1.0):
        x = np.column_stack([np.ones(e.size), x])
    n = e.size
    y_aux = e**2
    tss = float(np.sum((y_aux - y_aux.mean()) ** 2))
    if tss == 0.0:
        return {"LM": 0.0, "p": 1.0}, "breusch-pagan: squared residuals constant"
    beta, *_ = np.linalg.lstsq(x, y_aux, rcond=None)
    rss = float(np.sum((y_aux - x @ beta) ** 2))
    r2 = max(0.0, 1.0 - rss / tss)
    k = int(np.linalg.matrix_rank(x)) - 1
    if k < 1:
        return {"LM": 0.0, "p": 1.0}, "breusch-pagan: no non-constant regressor"
    lm = n * r2
    return {"LM": float(lm), "p": float(scipy.stats.chi2.sf(lm, k))}, None


def run_diagnostics(residuals, design, n_permutations=10000, seed=0):
    """Shapiro-Wilk, Durbin-Watson (permutation p), Breusch-Pagan.

    Durbin-Watson treats the residual sequence in dataset row order; its p
    is one-sided against positive autocorrelation.
    """
    e = np.asarray(residuals, dtype=float)
    if e.size < 2:
        raise DataError("diagnostics need at least 2 residuals")
    notes = []
    sw, note = _shapiro_wilk(e)
    if note:
        notes.append(note)
    dw, note = _durbin_watson(e, n_permutations, seed)
    if note:
        notes.append(note)
    bp, note = _breusch_pagan(e, design)
    if note:
        notes.append(note)
    return DiagnosticsReport(
        shapiro_wilk=sw,
        durbin_watson=dw,
        breusch_pagan=bp,
        notes=tuple(notes),
    )
