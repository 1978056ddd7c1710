"""The evidence version-control graph.

Evidence tuples are nodes; typed evolution edges (replication, revision,
reanalysis) connect them.  Edge types are always computed from the
component-wise differences of the two tuples, never free-typed.  An edge
counts as validated once every type carries its assessment; conflated
edges (more than one type) additionally need either decomposition or a
recorded override.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .conclusions import conclusion_from_dict, conclusion_to_dict
from .errors import EvolutionError
from .synthesis import (
    AgreementVerdict,
    EvidenceView,
    ReanalysisRecord,
    RevisionVerdict,
    build_reanalysis_record,
    check_agreement,
    evaluate_revision,
    record_reanalysis,
    verdict_from_dict,
    verdict_to_dict,
)

SCHEMA_VERSION = 1

EDGE_TYPES = ("replication", "revision", "reanalysis")
TRIGGERS = ("disagreeing-replication", "qualitative-evidence", "methodological")

_VARIANT_FOR_KIND = {
    "mann_whitney_u": "pvalue",
    "wilcoxon_signed_rank": "pvalue",
    "linear_model": "coefficients",
    "linear_mixed_model": "coefficients",
    "bayes_binomial": "posterior",
}

# node fill by incoming-edge type, roots stay white
_NODE_COLORS = (("replication", "yellow"), ("revision", "blue"),
                ("reanalysis", "red"))
_EDGE_COLORS = {"replication": "goldenrod", "revision": "blue",
                "reanalysis": "red"}


@dataclass(frozen=True)
class Evidence:
    """One evidence tuple: a hypothesis analyzed on a dataset by a method."""

    id: str
    hypothesis_id: str
    dataset_id: str
    method_id: str
    conclusion: object
    created_at: str
    provenance: str = ""

    def __post_init__(self):
        if not self.id:
            raise EvolutionError("evidence needs an id")
        if self.conclusion is None:
            raise EvolutionError(f"evidence {self.id}: conclusion missing")
        for name in ("hypothesis_id", "dataset_id", "method_id"):
            if not getattr(self, name):
                raise EvolutionError(f"evidence {self.id}: {name} missing")

    @property
    def tuple_key(self):
        return (self.hypothesis_id, self.dataset_id, self.method_id)


def check_conclusion_variant(evidence, method):
    """The conclusion variant must match what the method kind produces."""
    expected = _VARIANT_FOR_KIND[method.kind]
    actual = evidence.conclusion.variant
    if actual != expected:
        raise EvolutionError(
            f"evidence {evidence.id}: a {method.kind} method yields "
            f"{expected} conclusions, got {actual}"
        )


@dataclass(frozen=True)
class Classification:
    types: frozenset[str]
    conflated: bool
    advisory: str | None = None


_DECOMPOSITION_ADVICE = (
    "this step changes more than one tuple component; decompose it into "
    "single-component steps so each evolution can be assessed on its own"
)


def classify_evolution(parent, child, parent_hypothesis=None,
                       child_hypothesis=None):
    """Edge types from the component-wise differences of two tuples."""
    if parent.tuple_key == child.tuple_key:
        raise EvolutionError(
            f"{child.id} duplicates {parent.id}: same hypothesis, dataset, "
            "and method"
        )
    if parent_hypothesis is not None and child_hypothesis is not None:
        if parent_hypothesis.phenomenon != child_hypothesis.phenomenon:
            raise EvolutionError(
                "evidence studies different phenomena "
                f"({parent_hypothesis.phenomenon} vs "
                f"{child_hypothesis.phenomenon}); incommensurable"
            )
    types = set()
    if parent.dataset_id != child.dataset_id:
        types.add("replication")
    if parent.hypothesis_id != child.hypothesis_id:
        types.add("revision")
    if parent.method_id != child.method_id:
        types.add("reanalysis")
    conflated = len(types) > 1
    return Classification(
        types=frozenset(types),
        conflated=conflated,
        advisory=_DECOMPOSITION_ADVICE if conflated else None,
    )


@dataclass(frozen=True)
class EvolutionEdge:
    from_id: str
    to_id: str
    types: frozenset[str]
    purpose: str | None = None
    assessments: dict = field(default_factory=dict)
    trigger: str | None = None
    conflation_override: str | None = None

    def __post_init__(self):
        if not self.types or not set(self.types) <= set(EDGE_TYPES):
            raise EvolutionError(f"bad edge types {set(self.types)}")
        if self.purpose is not None:
            if "revision" not in self.types:
                raise EvolutionError("purpose applies to revision edges only")
            if self.purpose not in ("precision", "deconfound"):
                raise EvolutionError(f"unknown purpose {self.purpose!r}")
        if self.trigger is not None and self.trigger not in TRIGGERS:
            raise EvolutionError(f"unknown trigger {self.trigger!r}")
        for t, a in self.assessments.items():
            _check_assessment(t, a, self.purpose)

    @property
    def conflated(self):
        return len(self.types) > 1

    @property
    def validated(self):
        if not all(t in self.assessments for t in self.types):
            return False
        if self.conflated and self.conflation_override is None:
            return False
        return True


_ASSESSMENT_CLASS = {"replication": AgreementVerdict,
                     "revision": RevisionVerdict,
                     "reanalysis": ReanalysisRecord}


def _check_assessment(edge_type, assessment, purpose):
    want = _ASSESSMENT_CLASS.get(edge_type)
    if want is None or not isinstance(assessment, want):
        raise EvolutionError(
            f"a {edge_type} step is assessed by {want.__name__ if want else '?'}, "
            f"got {type(assessment).__name__}"
        )
    if edge_type == "revision" and purpose is not None:
        ok = {"precision": ("aic", "loo"),
              "deconfound": ("implication+ace",)}[purpose]
        if assessment.criterion not in ok:
            raise EvolutionError(
                f"a {purpose} revision must be judged by {'/'.join(ok)}, "
                f"got {assessment.criterion}"
            )


class EvolutionGraph:
    """Single-writer DAG of evidence nodes; reads snapshot safely."""

    def __init__(self, phenomenon):
        treatment, outcome = phenomenon
        self.phenomenon = (str(treatment), str(outcome))
        self.evidence: dict[str, Evidence] = {}
        self.edges: list[EvolutionEdge] = []

    def __contains__(self, evidence_id):
        return evidence_id in self.evidence

    def roots(self):
        targets = {e.to_id for e in self.edges}
        return [eid for eid in self.evidence if eid not in targets]

    def parents_of(self, evidence_id):
        return [e for e in self.edges if e.to_id == evidence_id]

    def _reachable(self, start, goal):
        stack, seen = [start], set()
        while stack:
            node = stack.pop()
            if node == goal:
                return True
            if node in seen:
                continue
            seen.add(node)
            stack.extend(e.to_id for e in self.edges if e.from_id == node)
        return False

    def find_edge(self, from_id, to_id):
        for i, e in enumerate(self.edges):
            if (e.from_id, e.to_id) == (from_id, to_id):
                return i, e
        raise EvolutionError(f"no edge {from_id} -> {to_id}")


def add_evidence(graph, evidence, parent=None, hypothesis=None,
                 parent_hypothesis=None, purpose=None, trigger=None):
    """Append a node; with a parent, classify and draw an unvalidated edge."""
    if evidence.id in graph.evidence:
        raise EvolutionError(f"evidence id {evidence.id} already present")
    if hypothesis is not None and hypothesis.phenomenon != graph.phenomenon:
        raise EvolutionError(
            f"evidence {evidence.id} studies {hypothesis.phenomenon}, "
            f"graph tracks {graph.phenomenon}; incommensurable"
        )
    if parent is not None and parent not in graph.evidence:
        raise EvolutionError(f"unknown parent {parent!r}")
    edge = None
    if parent is not None:  # classify before mutating so failures are clean
        classification = classify_evolution(
            graph.evidence[parent], evidence,
            parent_hypothesis=parent_hypothesis, child_hypothesis=hypothesis)
        if purpose is not None and "revision" not in classification.types:
            raise EvolutionError("purpose applies to revision edges only")
        edge = EvolutionEdge(from_id=parent, to_id=evidence.id,
                             types=classification.types, purpose=purpose,
                             trigger=trigger)
    graph.evidence[evidence.id] = evidence
    if edge is not None:
        graph.edges.append(edge)
    return graph


def connect_evidence(graph, from_id, to_id, parent_hypothesis=None,
                     child_hypothesis=None, purpose=None, trigger=None):
    """Classify and append an edge between two existing nodes."""
    for eid in (from_id, to_id):
        if eid not in graph.evidence:
            raise EvolutionError(f"unknown evidence {eid!r}")
    if graph._reachable(to_id, from_id):
        raise EvolutionError(
            f"edge {from_id} -> {to_id} would create a cycle"
        )
    classification = classify_evolution(
        graph.evidence[from_id], graph.evidence[to_id],
        parent_hypothesis=parent_hypothesis,
        child_hypothesis=child_hypothesis,
    )
    if purpose is not None and "revision" not in classification.types:
        raise EvolutionError("purpose applies to revision edges only")
    edge = EvolutionEdge(from_id=from_id, to_id=to_id,
                         types=classification.types, purpose=purpose,
                         trigger=trigger)
    graph.edges.append(edge)
    return edge


def validate_edge(graph, from_id, to_id, *, purpose=None, data=None,
                  hypotheses=None, methods=None, rationale=None,
                  alpha=0.05, conflation_override=None, assessments=None):
    """Attach one assessment per edge type; marks the edge validated.

    Assessments are computed from the stored conclusions (replication),
    from a refit on ``data`` given ``hypotheses``/``methods`` resolvers
    (revision), or from ``rationale`` (reanalysis).  Precomputed entries
    in ``assessments`` take precedence, which is how archived results
    are replayed.  A conflated edge refuses validation unless
    ``conflation_override`` records why it is not decomposed.
    """
    index, edge = graph.find_edge(from_id, to_id)
    if purpose is None:
        purpose = edge.purpose
    if edge.conflated and conflation_override is None:
        raise EvolutionError(
            f"edge {from_id} -> {to_id} conflates "
            f"{'+'.join(sorted(edge.types))}; {_DECOMPOSITION_ADVICE}, or "
            "pass an override to record why it stays conflated"
        )
    parent = graph.evidence[from_id]
    child = graph.evidence[to_id]
    done = dict(assessments or {})
    for t in sorted(edge.types):
        if t in done:
            continue
        if t == "replication":
            done[t] = check_agreement(parent.conclusion, child.conclusion,
                                      alpha=alpha)
        elif t == "revision":
            if purpose is None:
                raise EvolutionError(
                    "validating a revision needs its purpose "
                    "(precision or deconfound)"
                )
            if data is None or hypotheses is None or methods is None:
                raise EvolutionError(
                    "validating a revision needs data plus hypothesis and "
                    "method resolvers"
                )
            old = EvidenceView(hypothesis=hypotheses[parent.hypothesis_id],
                               method=methods[parent.method_id],
                               conclusion=parent.conclusion)
            new = EvidenceView(hypothesis=hypotheses[child.hypothesis_id],
                               method=methods[child.method_id],
                               conclusion=child.conclusion)
            done[t] = evaluate_revision(purpose, old, new, data, alpha=alpha)
        elif t == "reanalysis":
            if rationale is None:
                raise EvolutionError(
                    "validating a reanalysis needs a rationale"
                )
            if edge.conflated:  # tuple preconditions cannot hold here
                done[t] = build_reanalysis_record(
                    rationale, parent.conclusion, child.conclusion)
            else:
                done[t] = record_reanalysis(parent, child, rationale)
    updated = dataclasses.replace(
        edge, purpose=purpose, assessments=done,
        conflation_override=conflation_override,
    )
    graph.edges[index] = updated
    return updated


@dataclass(frozen=True)
class FrontierReport:
    best_hypothesis_id: str
    best_method_id: str
    supporting: tuple[str, ...]
    required_measurements: tuple[str, ...]
    provisional: bool
    hypothesis_candidates: tuple[str, ...]
    notes: tuple[str, ...] = ()


def frontier(graph, hypotheses=None):
    """Which (hypothesis, method) should the next study subscribe to?

    A hypothesis is defeated when a validated revision verdict names the
    other side the winner; ties defeat nobody.  Among undefeated
    hypotheses the earliest-introduced one is kept (parsimony default),
    with all candidates listed.  A method is superseded when a validated
    justified reanalysis moves away from it; the best method is the
    latest unsuperseded one used with the best hypothesis.  Unvalidated
    edges make the whole report provisional.
    """
    if not graph.evidence:
        raise EvolutionError("empty graph has no frontier")
    notes = []
    provisional = any(not e.validated for e in graph.edges)
    if provisional:
        notes.append("unvalidated edges present; frontier is provisional")

    first_seen = {}
    for ev in graph.evidence.values():
        key = (ev.created_at, ev.id)
        h = ev.hypothesis_id
        if h not in first_seen or key < first_seen[h]:
            first_seen[h] = key

    defeated = set()
    for edge in graph.edges:
        verdict = edge.assessments.get("revision")
        if verdict is None or not edge.validated:
            continue
        old_h = graph.evidence[edge.from_id].hypothesis_id
        new_h = graph.evidence[edge.to_id].hypothesis_id
        if verdict.winner == "tie":
            continue
        if verdict.winner == new_h:
            defeated.add(old_h)
        elif verdict.winner == old_h:
            defeated.add(new_h)

    candidates = [h for h in first_seen if h not in defeated]
    if not candidates:  # every hypothesis lost somewhere: report them all
        candidates = sorted(first_seen, key=first_seen.get)
        notes.append("all hypotheses defeated somewhere; reporting by age")
    candidates.sort(key=lambda h: first_seen[h])
    best_h = candidates[0]
    if len(candidates) > 1:
        notes.append(
            "multiple undefeated hypotheses (tie verdicts keep the "
            "earlier one): " + ", ".join(candidates)
        )

    superseded = set()
    for edge in graph.edges:
        if "reanalysis" in edge.types and edge.validated:
            superseded.add(graph.evidence[edge.from_id].method_id)

    backing = [ev for ev in graph.evidence.values()
               if ev.hypothesis_id == best_h]
    fresh = [ev for ev in backing if ev.method_id not in superseded]
    pool = fresh or backing
    best = max(pool, key=lambda ev: (ev.created_at, ev.id))
    supporting = tuple(sorted(
        ev.id for ev in backing if ev.method_id == best.method_id))

    required = ()
    if hypotheses is not None and best_h in hypotheses:
        dag = hypotheses[best_h]
        from .dag import adjustment_sets

        sets = adjustment_sets(dag)
        adjust = set(sets[0]) if sets else set()
        groups = {v.name for v in dag.nodes if v.role == "group"}
        required = tuple(sorted(adjust | groups))
    else:
        notes.append("hypothesis definitions unavailable; "
                     "required measurements omitted")

    return FrontierReport(
        best_hypothesis_id=best_h,
        best_method_id=best.method_id,
        supporting=supporting,
        required_measurements=required,
        provisional=provisional,
        hypothesis_candidates=tuple(candidates),
        notes=tuple(notes),
    )


# ---------------------------------------------------------------------------
# persistence and export
# ---------------------------------------------------------------------------


def graph_to_dict(graph):
    return {
        "schema_version": SCHEMA_VERSION,
        "phenomenon": list(graph.phenomenon),
        "evidence": [
            {
                "id": ev.id,
                "hypothesis_id": ev.hypothesis_id,
                "dataset_id": ev.dataset_id,
                "method_id": ev.method_id,
                "conclusion": conclusion_to_dict(ev.conclusion),
                "created_at": ev.created_at,
                "provenance": ev.provenance,
            }
            for ev in graph.evidence.values()
        ],
        "edges": [
            {
                "from": e.from_id,
                "to": e.to_id,
                "types": sorted(e.types),
                "purpose": e.purpose,
                "trigger": e.trigger,
                "conflation_override": e.conflation_override,
                "assessments": {
                    t: verdict_to_dict(a) for t, a in sorted(e.assessments.items())
                },
            }
            for e in graph.edges
        ],
    }


def graph_from_dict(payload):
    if payload.get("schema_version") != SCHEMA_VERSION:
        raise EvolutionError("unsupported graph schema version")
    graph = EvolutionGraph(tuple(payload["phenomenon"]))
    for ev in payload["evidence"]:
        graph.evidence[ev["id"]] = Evidence(
            id=ev["id"],
            hypothesis_id=ev["hypothesis_id"],
            dataset_id=ev["dataset_id"],
            method_id=ev["method_id"],
            conclusion=conclusion_from_dict(ev["conclusion"]),
            created_at=ev["created_at"],
            provenance=ev.get("provenance", ""),
        )
    for e in payload["edges"]:
        graph.edges.append(EvolutionEdge(
            from_id=e["from"],
            to_id=e["to"],
            types=frozenset(e["types"]),
            purpose=e.get("purpose"),
            trigger=e.get("trigger"),
            conflation_override=e.get("conflation_override"),
            assessments={
                t: verdict_from_dict(a)
                for t, a in e.get("assessments", {}).items()
            },
        ))
    for e in graph.edges:
        for eid in (e.from_id, e.to_id):
            if eid not in graph.evidence:
                raise EvolutionError(f"edge references unknown evidence {eid}")
    if graph.evidence and not graph.roots():
        raise EvolutionError("graph has no root evidence")
    return graph


def graph_to_dot(graph):
    lines = ["digraph evolution {", "  rankdir=LR;",
             "  node [shape=box, style=filled];"]
    incoming = {}
    for e in graph.edges:
        incoming.setdefault(e.to_id, set()).update(e.types)
    for ev in graph.evidence.values():
        color = "white"
        for etype, fill in _NODE_COLORS:
            if etype in incoming.get(ev.id, ()):
                color = fill
                break
        label = (f"{ev.id}\\n({ev.hypothesis_id}, {ev.dataset_id}, "
                 f"{ev.method_id})")
        lines.append(f'  "{ev.id}" [label="{label}", fillcolor="{color}"];')
    for e in graph.edges:
        label = "+".join(sorted(e.types))
        if e.purpose:
            label += f"\\n({e.purpose})"
        color = _EDGE_COLORS[sorted(e.types)[0]]
        style = ", style=dashed" if e.conflated else ""
        check = "" if e.validated else " [unvalidated]"
        lines.append(
            f'  "{e.from_id}" -> "{e.to_id}" '
            f'[label="{label}{check}", color="{color}"{style}];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"
