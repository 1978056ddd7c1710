"""Replay checks for the bundled passive-voice lineages.

The expected classification sequences are written out by hand from the
studies' recorded steps; the graphs must reproduce them exactly, and the
decomposed trail must yield the recorded frontier.
"""

import json

import pytest

from evigraph.errors import EvolutionError
from evigraph.evolution import frontier, graph_from_dict, graph_to_dict
from evigraph.fixtures import (
    AIC_H2,
    AIC_H2A,
    AIC_H2C,
    FIXTURE_NAMES,
    fixture_graph,
    fixture_hypotheses,
    table1_graph,
    table2_graph,
)


def test_table1_classification_sequence():
    g = table1_graph()
    assert [ev.id for ev in g.evidence.values()] == ["e1", "e2", "e3", "e4"]
    got = [(e.from_id, e.to_id, set(e.types)) for e in g.edges]
    assert got == [
        ("e1", "e2", {"revision", "reanalysis"}),
        ("e1", "e3", {"replication"}),
        ("e2", "e4", {"revision", "replication"}),
    ]
    assert g.edges[0].conflated and g.edges[2].conflated
    assert not g.edges[1].conflated


def test_table1_replication_agrees_and_rest_is_provisional():
    g = table1_graph()
    agreement = g.edges[1].assessments["replication"]
    assert agreement.agrees  # p=0.001 and p=0.025 both reject at 0.05
    assert agreement.basis == "alpha-decision"
    report = frontier(g, fixture_hypotheses())
    assert report.provisional
    assert report.best_hypothesis_id == "h1"  # nothing validated defeats it


def test_table2_step_sequence():
    g = table2_graph()
    got = [(e.from_id, e.to_id, set(e.types)) for e in g.edges]
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
    assert all(e.validated for e in g.edges)


def test_table2_aic_verdicts_reproduce_recorded_calls():
    g = table2_graph()

    def verdict(frm, to):
        _, edge = g.find_edge(frm, to)
        return edge.assessments["revision"]

    near = verdict("e1.3a", "e1.3b")
    assert near.winner == "tie"
    assert near.delta == pytest.approx(AIC_H2A - AIC_H2)  # -2.1: negligible
    clear = verdict("e1.3a", "e1.3c")
    assert clear.winner == "h2c"
    assert clear.delta == pytest.approx(AIC_H2A - AIC_H2C)  # 7.7: decisive
    strong = verdict("e1.3b", "e1.3c")
    assert strong.winner == "h2c"
    assert strong.delta == pytest.approx(AIC_H2 - AIC_H2C)


def test_table2_frontier():
    g = table2_graph()
    report = frontier(g, fixture_hypotheses())
    assert not report.provisional
    assert report.best_hypothesis_id == "h2c"
    assert report.best_method_id == "m2"
    assert report.supporting == ("e1.4",)
    assert report.hypothesis_candidates == ("h2c",)
    assert report.required_measurements == ("complexity", "skill")


def test_reported_conclusion_numbers():
    g = table2_graph()
    assert g.evidence["e1"].conclusion.p == 0.001
    assert g.evidence["e1.1"].conclusion.treatment_ci == (0.23, 0.84)
    assert g.evidence["e1.3b"].conclusion.fit.aic == pytest.approx(AIC_H2)
    assert g.evidence["e1.3b"].conclusion.fit.r2_marginal == 0.184
    signs = g.evidence["e1.4"].conclusion.sign_probabilities
    assert signs == {"fewer": 0.14, "equal": 0.47, "more": 0.39}
    diag = g.evidence["e1.1"].conclusion.diagnostics
    assert diag.shapiro_wilk["p"] == pytest.approx(3.26e-05)


def test_fixture_lookup():
    for name in FIXTURE_NAMES:
        graph, hypotheses = fixture_graph(name)
        assert graph.evidence and hypotheses["h1"].phenomenon == (
            "passive", "associations")
    with pytest.raises(EvolutionError):
        fixture_graph("table3")


def test_table2_roundtrips_through_json():
    g = table2_graph()
    payload = json.loads(json.dumps(graph_to_dict(g)))
    back = graph_from_dict(payload)
    assert graph_to_dict(back) == graph_to_dict(g)
    report = frontier(back, fixture_hypotheses())
    assert report.best_hypothesis_id == "h2c"
    assert not report.provisional
