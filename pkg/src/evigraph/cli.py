"""Command-line interface.

One executable, git-style subcommands over a repository in ``--repo``
(default: the current directory).  Every command prints human-readable
lines by default and a single-line JSON object with ``--json``; error
paths exit 1 for usage problems, 2 for data or framework violations, 3
for statistical failures, and always leave a machine-parsable reason on
stdout when ``--json`` is set.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from .dag import adjustment_sets, parse_dag, testable_implications
from .data import metadata_dict, read_csv, read_metadata, to_csv_bytes
from .errors import ConvergenceError, EvigraphError, EvolutionError
from .evolution import (
    EDGE_TYPES,
    connect_evidence,
    frontier,
    graph_to_dot,
    validate_edge,
)
from .fixtures import FIXTURE_NAMES, fixture_graph
from .repo import Repository, atomic_write, evidence_record, json_bytes
from .scenario import ScenarioConfig, generate_scenario
from .synthesis import combine_pvalues, pool_effects


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # keep usage failures catchable for exit 1
        raise _UsageError(message)


def _build_parser():
    parser = _Parser(prog="evigraph",
                     description="version control for variance theories")
    parser.add_argument("--repo", default=".",
                        help="repository root (default: current directory)")
    parser.add_argument("--json", action="store_true",
                        help="machine-readable single-line JSON output")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("init", help="create an empty repository")

    hyp = sub.add_parser("hypothesis", help="manage hypothesis DAGs")
    hyp_sub = hyp.add_subparsers(dest="action", required=True)
    p = hyp_sub.add_parser("add")
    p.add_argument("file")
    p.add_argument("--id", help="hypothesis id (default: file stem)")
    hyp_sub.add_parser("show").add_argument("id")
    hyp_sub.add_parser("implications").add_argument("id")
    hyp_sub.add_parser("adjustment-sets").add_argument(
        "target", help="stored hypothesis id or a .dag file path")

    ds = sub.add_parser("dataset", help="ingest and validate CSV datasets")
    ds_sub = ds.add_subparsers(dest="action", required=True)
    for action in ("add", "validate"):
        p = ds_sub.add_parser(action)
        p.add_argument("csv")
        p.add_argument("metadata")

    met = sub.add_parser("method", help="register analysis methods")
    met_sub = met.add_subparsers(dest="action", required=True)
    met_sub.add_parser("add").add_argument("file")

    ev = sub.add_parser("evidence", help="produce evidence nodes")
    ev_sub = ev.add_subparsers(dest="action", required=True)
    p = ev_sub.add_parser("run")
    p.add_argument("hypothesis")
    p.add_argument("dataset")
    p.add_argument("method")
    p.add_argument("--id", help="evidence id (default: next free e<n>)")
    p.add_argument("--parent", help="classify an edge from this evidence")
    p.add_argument("--purpose", choices=("precision", "deconfound"))
    p.add_argument("--trigger")

    edge = sub.add_parser("edge", help="classify and validate evolution steps")
    edge_sub = edge.add_subparsers(dest="action", required=True)
    p = edge_sub.add_parser("classify")
    p.add_argument("from_id", metavar="from")
    p.add_argument("to_id", metavar="to")
    p.add_argument("--fixtures", choices=FIXTURE_NAMES)
    p = edge_sub.add_parser("validate")
    p.add_argument("from_id", metavar="from")
    p.add_argument("to_id", metavar="to")
    p.add_argument("--purpose", choices=("precision", "deconfound"))
    p.add_argument("--rationale")
    p.add_argument("--override", help="record why a conflated edge stays")
    p.add_argument("--alpha", type=float, default=0.05)

    p = sub.add_parser("frontier", help="the hypothesis/method to subscribe to")
    p.add_argument("--fixtures", choices=FIXTURE_NAMES)

    exp = sub.add_parser("export", help="export reports")
    exp_sub = exp.add_subparsers(dest="action", required=True)
    p = exp_sub.add_parser("dot")
    p.add_argument("target")
    p.add_argument("--fixtures", choices=FIXTURE_NAMES)

    p = sub.add_parser("simulate", help="generate a synthetic experiment")
    p.add_argument("config", help="JSON file of ScenarioConfig fields")
    p.add_argument("--out", default="scenario",
                   help="output path prefix (default: scenario)")

    meta = sub.add_parser("meta", help="combine results across studies")
    meta_sub = meta.add_subparsers(dest="action", required=True)
    p = meta_sub.add_parser("fisher")
    p.add_argument("p", nargs="+", type=float)
    p = meta_sub.add_parser("stouffer")
    p.add_argument("p", nargs="+", type=float)
    p.add_argument("--weights", help="comma-separated study weights")
    p = meta_sub.add_parser("pool")
    p.add_argument("study", nargs="+",
                   help="estimate,se pairs, e.g. 0.53,0.16")
    p.add_argument("--model", choices=("fixed", "random"), default="fixed")

    return parser


# -- shared helpers ---------------------------------------------------------


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _set_text(names):
    return "{" + ", ".join(sorted(names)) + "}"


def _types_text(types):
    label = " + ".join(t for t in EDGE_TYPES if t in types)
    return label + (" (conflated)" if len(types) > 1 else "")


def _conclusion_summary(conclusion):
    if conclusion is None:
        return "(no conclusion)"
    if conclusion.variant == "pvalue":
        return f"p={conclusion.p:.4g} ({conclusion.test})"
    if conclusion.variant == "coefficients":
        lo, hi = conclusion.treatment_ci
        return (f"{conclusion.treatment}={conclusion.treatment_estimate:.3f} "
                f"ci=[{lo:.3f}, {hi:.3f}]")
    signs = conclusion.sign_probabilities
    return (f"fewer={signs['fewer']:.2f} equal={signs['equal']:.2f} "
            f"more={signs['more']:.2f}")


def _load_graph_for_read(args, repo):
    """The graph a reporting command should look at."""
    if getattr(args, "fixtures", None):
        return fixture_graph(args.fixtures)
    graph = repo.require().load_graph()
    if graph is None:
        raise EvolutionError("no evidence recorded yet")
    return graph, repo.load_hypotheses()


# -- command handlers: each returns (payload, human lines) -------------------


def _cmd_init(args, repo):
    Repository.init(args.repo)
    return {"initialized": str(repo.root)}, [f"initialized {repo.root}"]


def _cmd_hypothesis(args, repo):
    if args.action == "add":
        dag = repo.require().add_hypothesis(args.file, args.id)
        payload = {"id": dag.id, "nodes": len(dag.nodes),
                   "edges": len(dag.edges)}
        return payload, [f"registered hypothesis {dag.id} "
                         f"({len(dag.nodes)} nodes, {len(dag.edges)} edges)"]
    if args.action == "show":
        text = repo.require().hypothesis_text(args.id)
        return {"id": args.id, "text": text}, [text.rstrip("\n")]
    if args.action == "implications":
        dag = repo.require().load_hypothesis(args.id)
        claims = [str(c) for c in testable_implications(dag)]
        return ({"id": args.id, "implications": claims},
                claims or ["(no testable implications)"])
    # adjustment-sets accepts a stored id or a DSL file path
    if os.path.exists(args.target):
        dag = parse_dag(Path(args.target).read_text(encoding="utf-8"),
                        Path(args.target).stem)
    else:
        dag = repo.require().load_hypothesis(args.target)
    sets = adjustment_sets(dag)
    return ({"id": dag.id, "adjustment_sets": [sorted(s) for s in sets]},
            [_set_text(s) for s in sets])


def _cmd_dataset(args, repo):
    if args.action == "add":
        dataset_id = repo.require().ingest_dataset(args.csv, args.metadata)
        return ({"dataset_id": dataset_id},
                [f"registered dataset {dataset_id}"])
    table = read_csv(args.csv, read_metadata(args.metadata))
    payload = {"ok": True, "rows": table.n_rows,
               "columns": list(table.columns)}
    return payload, [f"ok: {table.n_rows} rows, "
                     f"{len(table.columns)} columns"]


def _cmd_method(args, repo):
    spec = repo.require().add_method(args.file)
    return ({"id": spec.id, "kind": spec.kind},
            [f"registered method {spec.id} ({spec.kind})"])


def _cmd_evidence(args, repo):
    seed = os.environ.get("EVIGRAPH_SEED")
    evidence = repo.require().run_evidence(
        args.hypothesis, args.dataset, args.method,
        evidence_id=args.id, parent=args.parent, purpose=args.purpose,
        trigger=args.trigger, created_at=_now(),
        seed_override=None if seed is None else int(seed),
        require_convergence=True,
    )
    summary = _conclusion_summary(evidence.conclusion)
    return (evidence_record(evidence),
            [f"evidence {evidence.id}: ({args.hypothesis}, {args.dataset}, "
             f"{args.method}) -> {summary}"])


def _find_edge(graph, from_id, to_id):
    found = [e for e in graph.edges
             if e.from_id == from_id and e.to_id == to_id]
    return found[0] if found else None


def _cmd_edge_classify(args, repo):
    if args.fixtures:
        graph, _ = fixture_graph(args.fixtures)
        edge = _find_edge(graph, args.from_id, args.to_id)
        if edge is None:
            raise EvolutionError(
                f"fixture {args.fixtures} has no edge "
                f"{args.from_id} -> {args.to_id}")
    else:
        with repo.require().graph_mutation() as graph:
            edge = _find_edge(graph, args.from_id, args.to_id)
            if edge is None:  # classify and record the new edge
                edge = connect_evidence(graph, args.from_id, args.to_id)
    lines = [_types_text(edge.types)]
    if edge.conflated:
        lines.append("advisory: decompose conflated steps into pure "
                     "sub-steps so each component can be assessed")
    payload = {"from": edge.from_id, "to": edge.to_id,
               "types": sorted(edge.types), "conflated": edge.conflated,
               "validated": edge.validated}
    return payload, lines


def _cmd_edge_validate(args, repo):
    with repo.require().graph_mutation() as graph:
        data = None
        child = graph.evidence.get(args.to_id)
        if child is not None:
            try:
                data = repo.load_dataset(child.dataset_id)
            except EvigraphError:
                data = None  # replication/reanalysis paths do not need it
        edge = validate_edge(
            graph, args.from_id, args.to_id,
            purpose=args.purpose, data=data,
            hypotheses=repo.load_hypotheses(),
            methods=repo.load_methods(), rationale=args.rationale,
            alpha=args.alpha, conflation_override=args.override,
        )
    lines = []
    for t in EDGE_TYPES:
        a = edge.assessments.get(t)
        if a is None:
            continue
        if t == "replication":
            word = "agrees" if a.agrees else "disagrees"
            lines.append(f"replication: {word} ({a.basis})")
        elif t == "revision":
            delta = "-" if a.delta is None else f"{a.delta:.3g}"
            lines.append(f"revision: winner={a.winner} "
                         f"criterion={a.criterion} delta={delta}")
        else:
            lines.append("reanalysis: rationale recorded")
    payload = {"from": edge.from_id, "to": edge.to_id,
               "validated": edge.validated,
               "assessments": {
                   t: dataclasses.asdict(a)
                   for t, a in edge.assessments.items()}}
    return payload, lines


def _cmd_frontier(args, repo):
    graph, hypotheses = _load_graph_for_read(args, repo)
    report = frontier(graph, hypotheses)
    lines = [
        f"best hypothesis: {report.best_hypothesis_id}",
        f"best method: {report.best_method_id}",
        f"supporting evidence: {', '.join(report.supporting) or '-'}",
        "required measurements: "
        + (", ".join(report.required_measurements) or "-"),
        f"provisional: {'yes' if report.provisional else 'no'}",
    ]
    lines += [f"note: {n}" for n in report.notes]
    return dataclasses.asdict(report), lines


def _cmd_export(args, repo):
    graph, _ = _load_graph_for_read(args, repo)
    dot = graph_to_dot(graph)
    atomic_write(Path(args.target), dot.encode("utf-8"))
    return ({"target": args.target, "nodes": len(graph.evidence)},
            [f"wrote {args.target}"])


def _cmd_simulate(args, repo):
    with open(args.config, "r", encoding="utf-8") as fh:
        config = ScenarioConfig(**json.load(fh))
    table, truth = generate_scenario(config)
    csv_path = Path(str(args.out) + ".csv")
    meta_path = Path(str(args.out) + ".meta.json")
    truth_path = Path(str(args.out) + ".truth.json")
    atomic_write(csv_path, to_csv_bytes(table))
    atomic_write(meta_path, json_bytes(metadata_dict(table)))
    atomic_write(truth_path, json_bytes(truth))
    payload = {"csv": str(csv_path), "metadata": str(meta_path),
               "truth": truth, "rows": table.n_rows}
    return payload, [f"wrote {csv_path}, {meta_path}, {truth_path} "
                     f"({table.n_rows} rows)"]


def _parse_pairs(items):
    out = []
    for item in items:
        parts = item.split(",")
        if len(parts) != 2:
            raise _UsageError(f"expected estimate,se - got {item!r}")
        out.append((float(parts[0]), float(parts[1])))
    return out


def _cmd_meta(args, repo):
    if args.action in ("fisher", "stouffer"):
        weights = None
        if args.action == "stouffer" and args.weights:
            weights = [float(w) for w in args.weights.split(",")]
        combined = combine_pvalues(args.p, method=args.action,
                                   weights=weights)
        return ({"method": args.action, "p": combined},
                [f"combined p = {combined:.6g}"])
    pooled = pool_effects(_parse_pairs(args.study), model=args.model)
    lines = [
        f"pooled estimate = {pooled.estimate:.6g} "
        f"ci=[{pooled.ci[0]:.6g}, {pooled.ci[1]:.6g}]",
    ]
    if pooled.tau2 is not None:
        lines.append(f"tau2 = {pooled.tau2:.6g}")
    return dataclasses.asdict(pooled), lines


_HANDLERS = {
    "init": _cmd_init,
    "hypothesis": _cmd_hypothesis,
    "dataset": _cmd_dataset,
    "method": _cmd_method,
    "evidence": _cmd_evidence,
    "frontier": _cmd_frontier,
    "export": _cmd_export,
    "simulate": _cmd_simulate,
    "meta": _cmd_meta,
}


def _emit(payload, lines, as_json):
    if as_json:
        print(json.dumps(payload, sort_keys=True, default=_np_default))
    else:
        for line in lines:
            print(line)


def _np_default(obj):
    import numpy as np

    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, frozenset):
        return sorted(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    as_json = "--json" in argv
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        _emit({"error": "usage", "reason": str(exc)},
              [f"usage error: {exc}"], as_json)
        return 1
    except SystemExit as exc:  # --help and friends
        return 0 if not exc.code else 1

    as_json = args.json
    repo = Repository(args.repo)
    if args.command == "edge":
        handler = (_cmd_edge_classify if args.action == "classify"
                   else _cmd_edge_validate)
    else:
        handler = _HANDLERS[args.command]
    try:
        payload, lines = handler(args, repo)
    except _UsageError as exc:
        _emit({"error": "usage", "reason": str(exc)},
              [f"usage error: {exc}"], as_json)
        return 1
    except ConvergenceError as exc:
        _emit({"error": "statistical", "reason": str(exc)},
              [f"statistical failure: {exc}"], as_json)
        return 3
    except EvigraphError as exc:
        _emit({"error": type(exc).__name__, "reason": str(exc)},
              [f"error: {exc}"], as_json)
        return 2
    _emit(payload, lines, as_json)
    return 0


if __name__ == "__main__":
    sys.exit(main())
