"""Synthetic-experiment generator checks.

The calibration facts here are analytic: with a zero effect the two arms
must show the same miss rate up to binomial noise, with all intercept sds
at zero the marginal rate is exactly sigmoid(baseline), and the emitted
ground-truth ACE is an average of sigmoid differences we can bound by
hand.  The fork structure is then exercised end to end by running the
generated data through the revision machinery in both directions.
"""

import numpy as np
import pytest

from evigraph.dag import ModelFormula, adjustment_sets
from evigraph.data import to_csv_bytes, validate_table
from evigraph.errors import DataError
from evigraph.methods import MethodSpec
from evigraph.scenario import (
    ScenarioConfig,
    generate_scenario,
    scenario_hypothesis,
)
from evigraph.stats.linear import fit_linear_model
from evigraph.synthesis import EvidenceView, evaluate_revision


def test_same_seed_byte_identical():
    cfg = ScenarioConfig(seed=7, participants=30, items=5)
    t1, truth1 = generate_scenario(cfg)
    t2, truth2 = generate_scenario(cfg)
    assert to_csv_bytes(t1) == to_csv_bytes(t2)
    assert truth1 == truth2
    t3, _ = generate_scenario(ScenarioConfig(seed=8, participants=30, items=5))
    assert to_csv_bytes(t3) != to_csv_bytes(t1)


def test_generated_tables_validate():
    for design in ("parallel", "crossover"):
        table, _ = generate_scenario(
            ScenarioConfig(seed=3, participants=12, items=6, design=design))
        assert validate_table(table)
        assert table.n_rows == 12 * 6
        assert table.name == "scenario-3"


def test_null_effect_arms_agree():
    # no effect, no confounding: randomization alone must equalize the arms
    table, truth = generate_scenario(
        ScenarioConfig(seed=11, participants=4000, items=1, effect=0.0))
    assert truth["ace_probability"] == 0.0
    passive = table.column("passive")
    rate = table.column("missing") / table.column("trials")
    gap = abs(rate[passive == 1].mean() - rate[passive == 0].mean())
    assert gap < 0.02


def test_marginal_rate_matches_baseline_logit():
    # with every sd at zero the miss probability is exactly sigmoid(-1)
    table, truth = generate_scenario(
        ScenarioConfig(seed=5, participants=2000, items=2, effect=0.0,
                       skill_sd=0.0, complexity_sd=0.0))
    rate = table.column("missing").sum() / table.column("trials").sum()
    expected = 1.0 / (1.0 + np.exp(-truth["baseline_logit"]))
    assert abs(rate - expected) < 0.01


def test_truth_ace_sign_and_bounds():
    _, truth = generate_scenario(ScenarioConfig(seed=2, effect=0.8))
    assert 0.0 < truth["ace_probability"] < 0.8 / 4  # slope of sigmoid <= 1/4
    _, truth_neg = generate_scenario(ScenarioConfig(seed=2, effect=-0.8))
    assert truth_neg["ace_probability"] < 0.0
    assert truth["effect_logit"] == 0.8
    assert truth["design"] == "parallel"
    assert truth["seed"] == 2


def test_crossover_splits_items_within_participant():
    cfg = ScenarioConfig(seed=9, participants=20, items=7, design="crossover")
    table, _ = generate_scenario(cfg)
    passive = table.column("passive")
    labels = table.data["participant"]
    for p in sorted(set(labels)):
        mask = np.array([x == p for x in labels])
        arm = passive[mask]
        assert arm.sum() == 7 // 2  # every participant sees both levels
        assert (arm == 0).sum() == 7 - 7 // 2


def test_parallel_is_constant_within_participant():
    table, _ = generate_scenario(
        ScenarioConfig(seed=4, participants=25, items=4))
    passive = table.column("passive")
    labels = table.data["participant"]
    for p in sorted(set(labels)):
        mask = np.array([x == p for x in labels])
        assert len(set(passive[mask].tolist())) == 1


def test_confounder_tilts_assignment():
    table, _ = generate_scenario(
        ScenarioConfig(seed=6, participants=2000, items=1,
                       confounder_strength=2.0))
    passive = table.column("passive")
    exp = table.column("experience")
    assert exp[passive == 1].mean() - exp[passive == 0].mean() > 0.5


def test_crossover_confounder_cannot_reach_assignment():
    table, _ = generate_scenario(
        ScenarioConfig(seed=6, participants=500, items=4, design="crossover",
                       confounder_strength=2.0))
    passive = table.column("passive")
    exp = table.column("experience")
    assert abs(exp[passive == 1].mean() - exp[passive == 0].mean()) < 0.1


def test_config_validation():
    with pytest.raises(DataError):
        ScenarioConfig(participants=0)
    with pytest.raises(DataError):
        ScenarioConfig(items=-1)
    with pytest.raises(DataError):
        ScenarioConfig(trials=0)
    with pytest.raises(DataError):
        ScenarioConfig(design="stepped-wedge")
    with pytest.raises(DataError):
        ScenarioConfig(seed=-1)
    with pytest.raises(DataError):
        ScenarioConfig(skill_sd=-0.1)
    with pytest.raises(DataError):
        ScenarioConfig(design="crossover", items=1)


def test_hypothesis_adjustment_sets():
    fork = scenario_hypothesis(confounded=True)
    assert [set(s) for s in adjustment_sets(fork)] == [{"experience"}]
    direct = scenario_hypothesis(confounded=False)
    assert [set(s) for s in adjustment_sets(direct)] == [set()]


def _views():
    old = EvidenceView(
        hypothesis=scenario_hypothesis(confounded=False, with_groups=False),
        method=MethodSpec(id="m-naive", kind="linear_model",
                          formula=ModelFormula(response="missing",
                                               predictors=("passive",))))
    new = EvidenceView(
        hypothesis=scenario_hypothesis(confounded=True, with_groups=False),
        method=MethodSpec(id="m-adj", kind="linear_model",
                          formula=ModelFormula(response="missing",
                                               predictors=("passive",
                                                            "experience"))))
    return old, new


def test_deconfound_wins_on_confounded_scenario():
    old, new = _views()
    for seed in (101, 102, 103):
        table, _ = generate_scenario(
            ScenarioConfig(seed=seed, participants=100, items=5,
                           confounder_strength=2.0))
        verdict = evaluate_revision("deconfound", old, new, table)
        assert verdict.winner == new.hypothesis.id
        assert verdict.criterion == "implication+ace"


def test_deconfound_retains_original_without_confounding():
    old, new = _views()
    for seed in (201, 202, 203):
        table, _ = generate_scenario(
            ScenarioConfig(seed=seed, participants=100, items=5,
                           confounder_strength=0.0))
        verdict = evaluate_revision("deconfound", old, new, table)
        assert verdict.winner == old.hypothesis.id


def test_adjustment_removes_confounding_bias():
    # with a strong fork, the adjusted slope should land nearer the truth
    table, truth = generate_scenario(
        ScenarioConfig(seed=42, participants=300, items=4,
                       confounder_strength=2.0, effect=0.8))
    target = truth["ace_probability"] * 10  # count scale: trials = 10

    def slope(predictors):
        formula = ModelFormula(response="missing", predictors=predictors)
        spec = MethodSpec(id="m", kind="linear_model", formula=formula)
        fit = fit_linear_model(table, formula, spec,
                               diagnostics_permutations=50)
        return fit.coefficients["passive"].estimate

    naive = slope(("passive",))
    adjusted = slope(("passive", "experience"))
    assert abs(adjusted - target) < abs(naive - target)
