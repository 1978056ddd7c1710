"""Comparing pieces of evidence.

Replications are checked for agreement (p-value aggregation, interval
overlap, pooling of effects or raw rows), revisions receive verdicts for
either of their two purposes (precision, de-confounding), and reanalyses
get justification records.  Conclusions of different variants are never
coerced into one another; callers must reanalyze first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as spstats

from .conclusions import (
    CoefficientsConclusion,
    PosteriorConclusion,
    PValueConclusion,
)
from .dag import adjustment_sets, derive_formula, diff_dags, testable_implications
from .data import concat_tables
from .errors import DataError, EvolutionError, MethodError
from .methods import MethodSpec
from .stats.bayes import loo_exact
from .stats.linear import fit_linear_model
from .stats.mixed import fit_linear_mixed_model

SCHEMA_VERSION = 1

# an AIC gap of about two points carries no weight, so the tie check is
# applied at integer resolution: |delta| rounds to <= 2
AIC_TIE_THRESHOLD = 2.0

AGREEMENT_BASES = (
    "alpha-decision",
    "fisher",
    "stouffer",
    "interval-overlap",
    "pooled-effect",
    "sign-dominance",
)


@dataclass(frozen=True)
class AgreementVerdict:
    agrees: bool
    basis: str
    detail: dict

    def __post_init__(self):
        if self.basis not in AGREEMENT_BASES:
            raise MethodError(f"unknown agreement basis {self.basis!r}")


@dataclass(frozen=True)
class PooledEffect:
    model: str
    estimate: float
    se: float
    ci: tuple[float, float]
    tau2: float | None
    weights: tuple[float, ...]


@dataclass(frozen=True)
class ImplicationResult:
    claim: str
    p: float
    consistent: bool


@dataclass(frozen=True)
class RevisionVerdict:
    purpose: str
    winner: str
    criterion: str
    delta: float | None
    implication_results: tuple[ImplicationResult, ...] | None = None
    ace_shift: dict | None = None


@dataclass(frozen=True)
class ReanalysisRecord:
    rationale: str
    diagnostics_delta: dict | None = None


@dataclass(frozen=True)
class EvidenceView:
    """The pieces of an evidence tuple resolved into live objects."""

    hypothesis: object
    method: MethodSpec
    conclusion: object | None = None


def combine_pvalues(ps, method="fisher", weights=None):
    """Aggregate independent p-values.

    Fisher: X = -2 sum(ln p) ~ chi2(2k).  Stouffer: Z = sum(w z)/sqrt(sum w^2)
    with z = Phi^-1(1 - p); one-sided in the sense that small input p-values
    push Z up and the combined value is the upper tail of Z.  Default
    Stouffer weights are equal; pass sqrt(n) weights when sizes are known.
    """
    ps = [float(p) for p in ps]
    if not ps:
        raise MethodError("no p-values to combine")
    for p in ps:
        if p == 0.0:
            raise MethodError(
                "p=0 cannot be combined; supply the underlying statistic"
            )
        if not 0.0 < p <= 1.0:
            raise MethodError(f"p-value out of (0, 1]: {p}")
    if method == "fisher":
        if weights is not None:
            raise MethodError("fisher aggregation takes no weights")
        x = -2.0 * sum(math.log(p) for p in ps)
        return float(spstats.chi2.sf(x, 2 * len(ps)))
    if method == "stouffer":
        z = spstats.norm.isf(np.asarray(ps))
        if weights is None:
            w = np.ones(len(ps))
        else:
            w = np.asarray([float(v) for v in weights])
            if w.shape != z.shape:
                raise MethodError("one weight per p-value required")
            if np.any(w <= 0) or not np.all(np.isfinite(w)):
                raise MethodError("stouffer weights must be positive")
        with np.errstate(invalid="ignore"):
            combined = float(w @ z) / math.sqrt(float(w @ w))
        if math.isnan(combined):  # mixes of p=1 (z=-inf) cancel to nan
            combined = -math.inf
        return float(spstats.norm.sf(combined))
    raise MethodError(f"unknown aggregation method {method!r}")


def pool_effects(studies, model="fixed", ci_level=0.95):
    """Inverse-variance pooling; DerSimonian-Laird tau2 for random effects."""
    pts = [(float(e), float(s)) for e, s in studies]
    if len(pts) < 2:
        raise MethodError("pooling needs at least two studies")
    est = np.array([e for e, _ in pts])
    se = np.array([s for _, s in pts])
    if np.any(se <= 0) or not np.all(np.isfinite(se) & np.isfinite(est)):
        raise MethodError("every study needs a finite positive standard error")
    w = 1.0 / se**2
    fixed = float(w @ est) / float(w.sum())
    if model == "fixed":
        tau2 = None
        pooled, pooled_se = fixed, math.sqrt(1.0 / float(w.sum()))
    elif model == "random":
        q = float(w @ (est - fixed) ** 2)
        c = float(w.sum()) - float(w @ w) / float(w.sum())
        tau2 = max(0.0, (q - (len(pts) - 1)) / c) if c > 0 else 0.0
        w = 1.0 / (se**2 + tau2)
        pooled = float(w @ est) / float(w.sum())
        pooled_se = math.sqrt(1.0 / float(w.sum()))
    else:
        raise MethodError(f"unknown pooling model {model!r}")
    zq = float(spstats.norm.ppf(0.5 + ci_level / 2.0))
    ci = (pooled - zq * pooled_se, pooled + zq * pooled_se)
    return PooledEffect(
        model=model,
        estimate=pooled,
        se=pooled_se,
        ci=ci,
        tau2=tau2,
        weights=tuple(float(v) for v in w),
    )


def _treatment_interval(conclusion):
    if isinstance(conclusion, CoefficientsConclusion):
        coef = conclusion.coefficients[conclusion.treatment]
        return coef.estimate, coef.ci, coef.se
    if isinstance(conclusion, PosteriorConclusion):
        summ = conclusion.summaries[conclusion.treatment]
        return summ.mean, summ.ci, summ.sd
    raise MethodError("conclusion carries no treatment interval")


def check_agreement(parent, child, alpha=0.05):
    """Do two conclusions of the same variant point the same way?"""
    if parent.variant != child.variant:
        raise MethodError(
            f"cannot compare a {parent.variant} conclusion with a "
            f"{child.variant} one; reanalyze one side onto the other's "
            "method first"
        )
    if isinstance(parent, PValueConclusion):
        dec_parent = parent.decision(alpha)
        dec_child = child.decision(alpha)
        combined = combine_pvalues(
            [max(parent.p, 1e-300), max(child.p, 1e-300)], "fisher"
        )
        return AgreementVerdict(
            agrees=dec_parent == dec_child,
            basis="alpha-decision",
            detail={
                "alpha": alpha,
                "p_parent": parent.p,
                "p_child": child.p,
                "decision_parent": dec_parent,
                "decision_child": dec_child,
                "combined_p": combined,
            },
        )
    if isinstance(parent, CoefficientsConclusion):
        est_p, ci_p, se_p = _treatment_interval(parent)
        est_c, ci_c, se_c = _treatment_interval(child)
        lo, hi = max(ci_p[0], ci_c[0]), min(ci_p[1], ci_c[1])
        agrees = lo <= hi
        # detail values stay JSON-native so verdicts round-trip unchanged
        detail = {
            "ci_parent": list(ci_p),
            "ci_child": list(ci_c),
            "overlap": [lo, hi] if agrees else None,
        }
        if se_p > 0 and se_c > 0:
            pooled = pool_effects([(est_p, se_p), (est_c, se_c)], "fixed")
            detail["pooled_estimate"] = pooled.estimate
            detail["pooled_ci"] = list(pooled.ci)
        else:  # an exact fit has no sampling variance to pool
            detail["pooled_estimate"] = None
            detail["pooled_ci"] = None
        return AgreementVerdict(agrees=agrees, basis="interval-overlap",
                                detail=detail)
    if isinstance(parent, PosteriorConclusion):
        sign_parent = parent.dominant_sign
        sign_child = child.dominant_sign
        return AgreementVerdict(
            agrees=sign_parent == sign_child,
            basis="sign-dominance",
            detail={
                "sign_parent": sign_parent,
                "sign_child": sign_child,
                "probabilities_parent": dict(parent.sign_probabilities),
                "probabilities_child": dict(child.sign_probabilities),
            },
        )
    raise MethodError(f"unsupported conclusion type {type(parent).__name__}")


def pool_ipd(datasets, formula, study_labels=None):
    """Pool raw rows and refit with a study random intercept."""
    merged = concat_tables(list(datasets), study_column="study",
                           study_labels=study_labels)
    if formula.family != "gaussian":
        raise MethodError("row-level pooling is implemented for the "
                          "gaussian family only")
    pooled_formula = type(formula)(
        response=formula.response,
        predictors=formula.predictors,
        random_intercepts=formula.random_intercepts + ("study",),
        family=formula.family,
    )
    spec = MethodSpec(id="ipd-pool", kind="linear_mixed_model",
                      formula=pooled_formula)
    return fit_linear_mixed_model(merged, pooled_formula, spec)


def partial_correlation_test(data, a, b, given=()):
    """Fisher-z test of partial correlation; returns (r, p).

    Residualizes both variables on an intercept plus the conditioning
    set, correlates the residuals, and refers atanh(r)*sqrt(n-|S|-3)
    to a standard normal (two-sided).
    """
    given = sorted(given)
    n = data.n_rows
    if n - len(given) - 3 < 1:
        raise DataError("too few rows for a partial-correlation test")
    x = np.column_stack(
        [np.ones(n)] + [data.column(c) for c in given])
    resid = {}
    for name in (a, b):
        y = data.column(name)
        coef, *_ = np.linalg.lstsq(x, y, rcond=None)
        resid[name] = y - x @ coef
    ra, rb = resid[a], resid[b]
    denom = math.sqrt(float(ra @ ra) * float(rb @ rb))
    if denom < 1e-12:  # a residual is constant: no correlation measurable
        return 0.0, 1.0
    r = float(ra @ rb) / denom
    r = min(1.0 - 1e-12, max(-1.0 + 1e-12, r))
    z = math.atanh(r) * math.sqrt(n - len(given) - 3)
    return r, float(2.0 * spstats.norm.sf(abs(z)))


def _adjusted_formula(dag):
    """The hypothesis's default model: treatment plus its first minimal
    adjustment set."""
    sets = adjustment_sets(dag)
    chosen = sets[0] if sets else ()
    return derive_formula(dag, chosen_adjustment=chosen)


def _fit_ace(data, dag):
    formula = _adjusted_formula(dag)
    spec = MethodSpec(id=f"ace-{dag.id}", kind="linear_model",
                      formula=formula)
    conclusion = fit_linear_model(data, formula, spec,
                                  diagnostics_permutations=200)
    est, ci, _ = _treatment_interval(conclusion)
    return est, ci


def _check_columns(data, old_dag, new_dag):
    needed = {v.name for v in old_dag.nodes} | {v.name for v in new_dag.nodes}
    missing = sorted(needed - set(data.columns))
    if missing:
        raise DataError(
            "revision cannot be evaluated on this dataset; collect data "
            f"covering: {', '.join(missing)}"
        )


def _numeric_claim(data, claim):
    cols = {claim.a, claim.b, *claim.given}
    return all(data.kinds[c] != "group" for c in cols)


_FREQUENTIST = ("linear_model", "linear_mixed_model")


def aic_verdict(aic_old, aic_new, old_id, new_id):
    """Precision verdict from two AIC scores; lower wins, ~2 points is noise."""
    delta = aic_old - aic_new  # positive favors the new model
    if round(abs(delta)) <= AIC_TIE_THRESHOLD:
        winner = "tie"
    else:
        winner = new_id if delta > 0 else old_id
    return RevisionVerdict(purpose="precision", winner=winner,
                           criterion="aic", delta=delta)


def evaluate_revision(purpose, old_evidence, new_evidence, data,
                      alpha=0.05, ace_threshold=0.5, elpd_tie=0.0):
    """Judge a revision edge.

    precision: refit both methods on the shared dataset and compare AIC
    (frequentist pair) or exact leave-one-out elpd (both Bayesian); an
    AIC gap rounding to <= 2 is a tie.  deconfound: test the differing
    testable implications by partial correlation at alpha, then fit each
    hypothesis's adjusted formula and flag an ACE shift when the interval
    midpoints differ by more than ace_threshold times the wider CI's
    half-width; the new hypothesis wins iff the implication tests side
    with it and the ACE shifted.  Predictive scores are never consulted
    for deconfounding.
    """
    old_dag = old_evidence.hypothesis
    new_dag = new_evidence.hypothesis
    delta_dag = diff_dags(old_dag, new_dag)
    if not delta_dag.phenomenon_preserved:
        raise EvolutionError(
            "hypotheses study different phenomena; revisions are "
            "incommensurable across phenomena"
        )
    _check_columns(data, old_dag, new_dag)

    if purpose == "precision":
        kinds = (old_evidence.method.kind, new_evidence.method.kind)
        if all(k in _FREQUENTIST for k in kinds):
            fits = []
            for ev in (old_evidence, new_evidence):
                spec = ev.method
                if spec.kind == "linear_model":
                    conc = fit_linear_model(data, spec.formula, spec,
                                            diagnostics_permutations=200)
                else:
                    conc = fit_linear_mixed_model(
                        data, spec.formula, spec,
                        diagnostics_permutations=200)
                fits.append(conc.fit.aic)
            return aic_verdict(fits[0], fits[1], old_dag.id, new_dag.id)
        if all(k == "bayes_binomial" for k in kinds):
            elpd_old = loo_exact(data, old_evidence.method.formula,
                                 old_evidence.method)
            elpd_new = loo_exact(data, new_evidence.method.formula,
                                 new_evidence.method)
            delta = elpd_new - elpd_old
            if abs(delta) <= elpd_tie:
                winner = "tie"
            else:
                winner = new_dag.id if delta > 0 else old_dag.id
            return RevisionVerdict(purpose="precision", winner=winner,
                                   criterion="loo", delta=delta)
        raise MethodError(
            f"cannot compare predictive fit across method kinds {kinds}; "
            "reanalyze one side first"
        )

    if purpose == "deconfound":
        claims_old = set(testable_implications(old_dag))
        claims_new = set(testable_implications(new_dag))
        results = []
        for claim in sorted(claims_old ^ claims_new,
                            key=lambda c: str(c)):
            if not _numeric_claim(data, claim):
                continue
            _, p = partial_correlation_test(data, claim.a, claim.b,
                                            claim.given)
            independent = p >= alpha
            # a claim only the new DAG implies should hold; one only the
            # old DAG implies should break
            consistent = independent if claim in claims_new else not independent
            results.append(ImplicationResult(claim=str(claim), p=p,
                                             consistent=consistent))
        est_old, ci_old = _fit_ace(data, old_dag)
        est_new, ci_new = _fit_ace(data, new_dag)
        mid_old = (ci_old[0] + ci_old[1]) / 2.0
        mid_new = (ci_new[0] + ci_new[1]) / 2.0
        half = max(ci_old[1] - ci_old[0], ci_new[1] - ci_new[0]) / 2.0
        shifted = abs(mid_new - mid_old) > ace_threshold * half
        consistent_with_new = all(r.consistent for r in results)
        winner = new_dag.id if (consistent_with_new and shifted) else old_dag.id
        return RevisionVerdict(
            purpose="deconfound",
            winner=winner,
            criterion="implication+ace",
            delta=None,
            implication_results=tuple(results),
            ace_shift={"estimate_old": est_old, "estimate_new": est_new,
                       "shifted": shifted},
        )

    raise MethodError(f"unknown revision purpose {purpose!r}")


def record_reanalysis(old_evidence, new_evidence, rationale):
    """Justify applying a different method to the same (h, d)."""
    if old_evidence.hypothesis_id != new_evidence.hypothesis_id:
        raise EvolutionError(
            "hypothesis changed: that is a revision, not a reanalysis"
        )
    if old_evidence.dataset_id != new_evidence.dataset_id:
        raise EvolutionError(
            "dataset changed: that is a replication, not a reanalysis"
        )
    if old_evidence.method_id == new_evidence.method_id:
        raise EvolutionError("method unchanged: nothing to reanalyze")
    return build_reanalysis_record(rationale,
                                   old_evidence.conclusion,
                                   new_evidence.conclusion)


def build_reanalysis_record(rationale, old_conclusion=None,
                            new_conclusion=None):
    """The record itself, without the pure-edge tuple preconditions.

    Used directly when assessing the method-change component of a
    conflated edge, where the hypothesis changed too.
    """
    if not str(rationale).strip():
        raise EvolutionError("a reanalysis needs a rationale")
    delta = _diagnostics_delta(
        getattr(old_conclusion, "diagnostics", None),
        getattr(new_conclusion, "diagnostics", None),
    )
    return ReanalysisRecord(rationale=str(rationale),
                            diagnostics_delta=delta)


def _diagnostics_delta(rep_old, rep_new):
    if rep_old is None or rep_new is None:
        return None
    delta = {}
    if rep_old.shapiro_wilk and rep_new.shapiro_wilk:
        delta["shapiro_wilk_p"] = (rep_old.shapiro_wilk["p"],
                                   rep_new.shapiro_wilk["p"])
    delta["durbin_watson_d"] = (rep_old.durbin_watson["d"],
                                rep_new.durbin_watson["d"])
    delta["breusch_pagan_p"] = (rep_old.breusch_pagan["p"],
                                rep_new.breusch_pagan["p"])
    return delta


def verdict_to_dict(verdict):
    """Stable JSON form for any synthesis verdict or record."""
    out = {"schema_version": SCHEMA_VERSION}
    if isinstance(verdict, AgreementVerdict):
        out.update(type="agreement", agrees=verdict.agrees,
                   basis=verdict.basis, detail=_jsonable(verdict.detail))
    elif isinstance(verdict, RevisionVerdict):
        impl = verdict.implication_results
        out.update(
            type="revision",
            purpose=verdict.purpose,
            winner=verdict.winner,
            criterion=verdict.criterion,
            delta=verdict.delta,
            implication_results=None if impl is None else [
                {"claim": r.claim, "p": r.p, "consistent": r.consistent}
                for r in impl
            ],
            ace_shift=_jsonable(verdict.ace_shift),
        )
    elif isinstance(verdict, PooledEffect):
        out.update(type="pooled-effect", model=verdict.model,
                   estimate=verdict.estimate, se=verdict.se,
                   ci=list(verdict.ci), tau2=verdict.tau2,
                   weights=list(verdict.weights))
    elif isinstance(verdict, ReanalysisRecord):
        out.update(type="reanalysis", rationale=verdict.rationale,
                   diagnostics_delta=_jsonable(verdict.diagnostics_delta))
    else:
        raise MethodError(f"cannot serialize {type(verdict).__name__}")
    return out


def verdict_from_dict(payload):
    if payload.get("schema_version") != SCHEMA_VERSION:
        raise MethodError("unsupported verdict schema version")
    kind = payload.get("type")
    if kind == "agreement":
        return AgreementVerdict(agrees=payload["agrees"],
                                basis=payload["basis"],
                                detail=dict(payload["detail"]))
    if kind == "revision":
        impl = payload.get("implication_results")
        return RevisionVerdict(
            purpose=payload["purpose"],
            winner=payload["winner"],
            criterion=payload["criterion"],
            delta=payload["delta"],
            implication_results=None if impl is None else tuple(
                ImplicationResult(**r) for r in impl
            ),
            ace_shift=payload.get("ace_shift"),
        )
    if kind == "pooled-effect":
        return PooledEffect(model=payload["model"],
                            estimate=payload["estimate"], se=payload["se"],
                            ci=tuple(payload["ci"]), tau2=payload["tau2"],
                            weights=tuple(payload["weights"]))
    if kind == "reanalysis":
        return ReanalysisRecord(
            rationale=payload["rationale"],
            diagnostics_delta=payload.get("diagnostics_delta"),
        )
    raise MethodError(f"unknown verdict type {kind!r}")


def _jsonable(value):
    if value is None:
        return None
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value
