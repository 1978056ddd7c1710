"""Synthetic experiment generator.

Mimics the shape of a requirements-comprehension experiment: participants
each process several requirement items, and the outcome counts how many
expected associations their domain model misses, out of a known number of
trials.  Participant skill and item complexity enter as group intercepts;
an experience covariate can confound treatment uptake and outcome (the
fork structure).  Everything is deterministic by seed, and the true
probability-scale ACE is emitted next to the data for oracle tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dag import HypothesisDag, VariableDecl
from .data import DatasetTable
from .errors import DataError

# fixed baseline log-odds of missing an association
_BASELINE = -1.0


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    participants: int = 15
    items: int = 7
    design: str = "parallel"
    effect: float = 0.8  # treatment effect on the logit scale
    confounder_strength: float = 0.0
    skill_sd: float = 0.5
    complexity_sd: float = 0.5
    trials: int = 10

    def __post_init__(self):
        if self.participants <= 0 or self.items <= 0 or self.trials <= 0:
            raise DataError("participants, items, and trials must be positive")
        if self.design not in ("parallel", "crossover"):
            raise DataError(f"unknown design {self.design!r}")
        if not 0 <= self.seed < 2**64:
            raise DataError("seed must fit in 64 unsigned bits")
        if self.skill_sd < 0 or self.complexity_sd < 0:
            raise DataError("group-intercept sds cannot be negative")
        if self.design == "crossover" and self.items < 2:
            raise DataError("crossover needs at least 2 items per participant")


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def generate_scenario(config):
    """Simulate one experiment; returns (DatasetTable, ground-truth dict).

    parallel: each participant works under a single treatment level, and
    experience tilts both assignment and outcome when
    ``confounder_strength`` is nonzero.  crossover: items within each
    participant are split evenly across both levels, so experience can
    only reach the outcome.
    """
    rng = np.random.default_rng(config.seed)
    n_p, n_i = config.participants, config.items

    skill = rng.normal(0.0, config.skill_sd, size=n_p)
    complexity = rng.normal(0.0, config.complexity_sd, size=n_i)
    experience = rng.normal(0.0, 1.0, size=n_p)

    passive = np.empty((n_p, n_i))
    if config.design == "parallel":
        p_treat = _sigmoid(config.confounder_strength * experience)
        assigned = (rng.uniform(size=n_p) < p_treat).astype(float)
        passive[:] = assigned[:, None]
    else:
        half = n_i // 2
        for i in range(n_p):
            row = np.zeros(n_i)
            row[:half] = 1.0
            rng.shuffle(row)
            passive[i] = row

    eta_base = (_BASELINE
                + config.confounder_strength * experience[:, None]
                + skill[:, None]
                + complexity[None, :])
    eta = eta_base + config.effect * passive
    missing = rng.binomial(config.trials, _sigmoid(eta))

    rows = {
        "passive": passive.ravel().astype(int).tolist(),
        "missing": missing.ravel().astype(int).tolist(),
        "trials": [config.trials] * (n_p * n_i),
        "experience": np.repeat(experience, n_i).tolist(),
        "participant": [f"p{i:03d}" for i in range(n_p) for _ in range(n_i)],
        "requirement": [f"r{j:03d}" for _ in range(n_p) for j in range(n_i)],
    }
    table = DatasetTable(
        columns=("passive", "missing", "trials", "experience",
                 "participant", "requirement"),
        kinds={"passive": "binary", "missing": "count", "trials": "count",
               "experience": "continuous", "participant": "group",
               "requirement": "group"},
        data=rows,
        trials={"missing": "trials"},
        name=f"scenario-{config.seed}",
    )
    # the ACE this population actually has, averaged over the drawn units
    ace = float(np.mean(_sigmoid(eta_base + config.effect)
                        - _sigmoid(eta_base)))
    truth = {
        "ace_probability": ace,
        "effect_logit": config.effect,
        "baseline_logit": _BASELINE,
        "confounder_strength": config.confounder_strength,
        "design": config.design,
        "seed": config.seed,
    }
    return table, truth


def scenario_hypothesis(confounded=True, with_groups=True):
    """The DAG the generator realizes, for deriving analysis formulas."""
    nodes = [
        VariableDecl(name="passive", kind="binary", role="treatment"),
        VariableDecl(name="missing", kind="count", role="outcome"),
        VariableDecl(name="experience", kind="continuous"),
    ]
    edges = [("passive", "missing"), ("experience", "missing")]
    if confounded:
        edges.append(("experience", "passive"))
    if with_groups:
        nodes.append(VariableDecl(name="participant", kind="continuous",
                                  role="group"))
        nodes.append(VariableDecl(name="requirement", kind="continuous",
                                  role="group"))
        edges.append(("participant", "missing"))
        edges.append(("requirement", "missing"))
    dag_id = "h-fork" if confounded else "h-direct"
    return HypothesisDag(id=dag_id, nodes=tuple(nodes), edges=tuple(edges))
