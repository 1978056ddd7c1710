"""Declarative descriptions of analysis methods (the m of a tuple)."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

from .dag import ModelFormula
from .errors import MethodError

METHOD_KINDS = (
    "mann_whitney_u",
    "wilcoxon_signed_rank",
    "linear_model",
    "linear_mixed_model",
    "bayes_binomial",
)
_REGRESSION_KINDS = ("linear_model", "linear_mixed_model", "bayes_binomial")


@dataclass(frozen=True)
class McmcConfig:
    chains: int = 4
    warmup: int = 1000
    samples: int = 2000
    seed: int = 0
    step_scale: float = 0.1

    def __post_init__(self):
        if self.chains < 2:
            raise MethodError("need at least 2 chains for convergence checking")
        if self.warmup <= 0 or self.samples <= 0:
            raise MethodError("warmup and sample counts must be positive")
        if not 0 <= self.seed < 2**64:
            raise MethodError("seed must fit in 64 unsigned bits")
        if self.step_scale <= 0:
            raise MethodError("step_scale must be positive")


@dataclass(frozen=True)
class MethodSpec:
    id: str
    kind: str
    formula: ModelFormula | None = None
    rank_transform_response: bool = False
    pairing_column: str | None = None
    mcmc: McmcConfig | None = None
    alpha: float = 0.05
    ci_level: float = 0.95
    priors: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise MethodError(f"unknown method kind {self.kind!r}")
        if not 0 < self.alpha < 1:
            raise MethodError("alpha must lie in (0, 1)")
        if not 0 < self.ci_level < 1:
            raise MethodError("ci_level must lie in (0, 1)")
        if (self.kind in _REGRESSION_KINDS) != (self.formula is not None):
            raise MethodError(
                f"{self.kind}: formula required for regression kinds only"
            )
        if (self.kind == "wilcoxon_signed_rank") != (self.pairing_column is not None):
            raise MethodError(
                f"{self.kind}: pairing_column applies to wilcoxon_signed_rank only"
            )
        if self.kind == "bayes_binomial":
            if self.mcmc is None:
                raise MethodError("bayes_binomial requires an mcmc config")
            if self.formula.family != "binomial":
                raise MethodError("bayes_binomial requires a binomial formula")
        elif self.mcmc is not None:
            raise MethodError(f"{self.kind}: mcmc config applies to bayes_binomial only")
        if self.rank_transform_response and self.kind != "linear_model":
            raise MethodError("rank transform applies to linear_model only")
        if self.kind == "linear_mixed_model" and self.formula is not None:
            if not self.formula.random_intercepts:
                raise MethodError("linear_mixed_model needs >= 1 random intercept")


def method_to_dict(spec):
    out = asdict(spec)
    out["priors"] = dict(spec.priors)
    return out


def method_from_dict(payload):
    payload = dict(payload)
    if payload.get("formula") is not None:
        f = payload["formula"]
        payload["formula"] = ModelFormula(
            response=f["response"],
            predictors=tuple(f["predictors"]),
            random_intercepts=tuple(f.get("random_intercepts", ())),
            family=f.get("family", "gaussian"),
            trials_column=f.get("trials_column"),
        )
    if payload.get("mcmc") is not None:
        payload["mcmc"] = McmcConfig(**payload["mcmc"])
    payload.setdefault("priors", {})
    return MethodSpec(**payload)
