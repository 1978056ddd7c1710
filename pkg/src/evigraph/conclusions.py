"""Conclusion records produced by analysis methods.

Three variants mirror what the methods can say about a phenomenon: a rank
test yields a p-value with an effect size, a regression yields coefficient
intervals with fit quality and residual diagnostics, a Bayesian model
yields posterior summaries with sign probabilities.  Conclusions of
different variants are not directly comparable; that incomparability is
enforced downstream, not papered over here.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

from .errors import MethodError


@dataclass(frozen=True)
class FitQuality:
    log_likelihood: float
    n_params: int
    aic: float
    r2_marginal: float | None = None
    r2_conditional: float | None = None
    elpd_loo: float | None = None

    def __post_init__(self):
        if abs(self.aic - (2 * self.n_params - 2 * self.log_likelihood)) > 1e-9:
            raise MethodError("aic must equal 2*n_params - 2*log_likelihood")
        if (
            self.r2_marginal is not None
            and self.r2_conditional is not None
            and self.r2_conditional < self.r2_marginal - 1e-12
        ):
            raise MethodError("conditional R2 cannot be below marginal R2")


def make_fit_quality(log_likelihood, n_params, **kw):
    return FitQuality(
        log_likelihood=float(log_likelihood),
        n_params=int(n_params),
        aic=2.0 * int(n_params) - 2.0 * float(log_likelihood),
        **kw,
    )


@dataclass(frozen=True)
class DiagnosticsReport:
    """Residual checks: normality, serial independence, homoscedasticity."""

    shapiro_wilk: dict | None
    durbin_watson: dict
    breusch_pagan: dict
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        if self.shapiro_wilk is not None:
            if not 0 < self.shapiro_wilk["W"] <= 1:
                raise MethodError("Shapiro-Wilk W must lie in (0, 1]")
            _check_p(self.shapiro_wilk["p"])
        if not 0 <= self.durbin_watson["d"] <= 4:
            raise MethodError("Durbin-Watson d must lie in [0, 4]")
        _check_p(self.durbin_watson["p"])
        _check_p(self.breusch_pagan["p"])


def _check_p(p):
    if not 0 <= p <= 1:
        raise MethodError(f"p-value out of [0, 1]: {p}")


@dataclass(frozen=True)
class PValueConclusion:
    """Rank-test outcome: statistic, two-sided p, Cliff's delta."""

    statistic: float
    p: float
    effect_size: float
    test: str
    n_obs: int
    method: str = "exact"
    warning: str | None = None
    variant = "pvalue"

    def __post_init__(self):
        _check_p(self.p)
        if not -1 <= self.effect_size <= 1:
            raise MethodError("effect size out of [-1, 1]")

    def decision(self, alpha):
        return self.p < alpha


@dataclass(frozen=True)
class CoefficientEstimate:
    estimate: float
    se: float
    ci: tuple[float, float]

    def __post_init__(self):
        lo, hi = self.ci
        if lo > hi:
            raise MethodError("ci lower bound exceeds upper bound")


@dataclass(frozen=True)
class CoefficientsConclusion:
    """Regression outcome keyed by predictor, plus fit and diagnostics."""

    coefficients: dict[str, CoefficientEstimate]
    fit: FitQuality
    treatment: str
    n_obs: int
    diagnostics: DiagnosticsReport | None = None
    variance_components: dict[str, float] = field(default_factory=dict)
    variant = "coefficients"

    def __post_init__(self):
        if self.treatment not in self.coefficients:
            raise MethodError(f"no coefficient for treatment {self.treatment!r}")

    @property
    def treatment_ci(self):
        return self.coefficients[self.treatment].ci

    @property
    def treatment_estimate(self):
        return self.coefficients[self.treatment].estimate


@dataclass(frozen=True)
class PosteriorSummary:
    mean: float
    sd: float
    ci: tuple[float, float]

    def __post_init__(self):
        lo, hi = self.ci
        if lo > hi:
            raise MethodError("ci lower bound exceeds upper bound")


@dataclass(frozen=True)
class PosteriorConclusion:
    """Bayesian outcome: summaries, fewer/equal/more sign probabilities."""

    summaries: dict[str, PosteriorSummary]
    sign_probabilities: dict[str, float]
    convergence: float  # max split R-hat over parameters
    fit: FitQuality
    treatment: str
    n_obs: int
    reliable: bool = True
    warning: str | None = None
    variant = "posterior"

    def __post_init__(self):
        probs = self.sign_probabilities
        if set(probs) != {"fewer", "equal", "more"}:
            raise MethodError("sign probabilities need fewer/equal/more keys")
        for v in probs.values():
            _check_p(v)
        if abs(sum(probs.values()) - 1.0) > 1e-9:
            raise MethodError("sign probabilities must sum to 1")

    @property
    def dominant_sign(self):
        return max(self.sign_probabilities, key=lambda k: self.sign_probabilities[k])


def conclusion_to_dict(conclusion):
    out = asdict(conclusion)
    out["variant"] = conclusion.variant
    return out


def conclusion_from_dict(payload):
    payload = dict(payload)
    variant = payload.pop("variant")
    if variant == "pvalue":
        return PValueConclusion(**payload)
    if variant == "coefficients":
        payload["coefficients"] = {
            k: CoefficientEstimate(estimate=v["estimate"], se=v["se"],
                                   ci=tuple(v["ci"]))
            for k, v in payload["coefficients"].items()
        }
        fq = payload["fit"]
        payload["fit"] = FitQuality(**fq)
        diag = payload.get("diagnostics")
        if diag is not None:
            payload["diagnostics"] = DiagnosticsReport(
                shapiro_wilk=diag["shapiro_wilk"],
                durbin_watson=diag["durbin_watson"],
                breusch_pagan=diag["breusch_pagan"],
                notes=tuple(diag.get("notes", ())),
            )
        return CoefficientsConclusion(**payload)
    if variant == "posterior":
        payload["summaries"] = {
            k: PosteriorSummary(mean=v["mean"], sd=v["sd"], ci=tuple(v["ci"]))
            for k, v in payload["summaries"].items()
        }
        payload["fit"] = FitQuality(**payload["fit"])
        return PosteriorConclusion(**payload)
    raise MethodError(f"unknown conclusion variant {variant!r}")
