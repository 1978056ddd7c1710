"""On-disk evidence repository.

Layout under the root: ``hypotheses/`` (DAG DSL files), ``datasets/``
(ingested CSV plus sidecar metadata JSON), ``methods/`` (method JSON),
``evidence/`` (evidence JSON), ``graph.json``, and an advisory lock
file.  Datasets are content-addressed over their raw bytes, writes go
through a temp file and an atomic rename so a killed process never
leaves a half-written graph, and mutation is single-writer via the lock
while readers never block.
"""

from __future__ import annotations

import dataclasses
import fcntl
import json
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .conclusions import conclusion_to_dict
from .dag import parse_dag
from .data import content_digest, read_csv, read_metadata
from .engine import run_method
from .errors import ConvergenceError, DataError, EvolutionError
from .evolution import (
    Evidence,
    EvolutionGraph,
    add_evidence,
    graph_from_dict,
    graph_to_dict,
)
from .methods import method_from_dict, method_to_dict

_EMPTY_GRAPH = {"schema_version": 1, "phenomenon": None,
                "evidence": [], "edges": []}


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def json_bytes(payload):
    text = json.dumps(payload, indent=2, sort_keys=True,
                      default=_json_default)
    return (text + "\n").encode("utf-8")


def atomic_write(path, payload):
    """Write bytes through a temp file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent),
                               prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Repository:
    """A single evidence repository rooted at a directory."""

    def __init__(self, root):
        self.root = Path(root)

    @property
    def graph_path(self):
        return self.root / "graph.json"

    @property
    def lock_path(self):
        return self.root / "lock"

    def dir(self, kind):
        return self.root / kind

    @classmethod
    def init(cls, root):
        repo = cls(root)
        if repo.graph_path.exists():
            raise DataError(f"{root}: repository already initialized")
        repo.root.mkdir(parents=True, exist_ok=True)
        for kind in ("hypotheses", "datasets", "methods", "evidence"):
            repo.dir(kind).mkdir(exist_ok=True)
        atomic_write(repo.graph_path, json_bytes(_EMPTY_GRAPH))
        repo.lock_path.touch()
        return repo

    def require(self):
        if not self.graph_path.exists():
            raise DataError(
                f"{self.root}: not a repository (run `evigraph init` first)")
        return self

    @contextmanager
    def write_lock(self):
        self.require()
        fh = open(self.lock_path, "w")
        try:
            try:
                fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
            except OSError:
                raise DataError(
                    f"{self.root}: another writer holds the repository lock")
            yield
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)
            fh.close()

    # -- graph ------------------------------------------------------------

    @contextmanager
    def graph_mutation(self):
        """Lock, load, yield the graph for mutation, save on the way out."""
        with self.write_lock():
            graph = self.load_graph()
            if graph is None:
                raise EvolutionError("no evidence recorded yet")
            yield graph
            self.save_graph(graph)

    def load_graph(self):
        """The evolution graph, or None while the repository is empty."""
        self.require()
        with open(self.graph_path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("phenomenon") is None:
            return None
        return graph_from_dict(payload)

    def save_graph(self, graph):
        atomic_write(self.graph_path, json_bytes(graph_to_dict(graph)))

    # -- hypotheses ---------------------------------------------------------

    def add_hypothesis(self, dsl_path, dag_id=None):
        path = Path(dsl_path)
        dag_id = dag_id or path.stem
        text = path.read_text(encoding="utf-8")
        dag = parse_dag(text, dag_id)
        with self.write_lock():
            atomic_write(self.dir("hypotheses") / f"{dag_id}.dag",
                         text.encode("utf-8"))
        return dag

    def hypothesis_text(self, dag_id):
        path = self.dir("hypotheses") / f"{dag_id}.dag"
        if not path.exists():
            raise DataError(f"no hypothesis named {dag_id!r}")
        return path.read_text(encoding="utf-8")

    def load_hypothesis(self, dag_id):
        return parse_dag(self.hypothesis_text(dag_id), dag_id)

    def load_hypotheses(self):
        out = {}
        for path in sorted(self.dir("hypotheses").glob("*.dag")):
            out[path.stem] = parse_dag(path.read_text(encoding="utf-8"),
                                       path.stem)
        return out

    # -- datasets -----------------------------------------------------------

    def ingest_dataset(self, csv_path, metadata_path):
        """Register a CSV under its content digest; idempotent."""
        metadata = read_metadata(metadata_path)
        read_csv(csv_path, metadata)  # full validation before any write
        raw = Path(csv_path).read_bytes()
        digest = content_digest(raw)
        dataset_id = "d-" + digest[:12]
        stored_csv = self.dir("datasets") / f"{dataset_id}.csv"
        stored_meta = self.dir("datasets") / f"{dataset_id}.json"
        with self.write_lock():
            if stored_csv.exists():
                if stored_csv.read_bytes() != raw:
                    raise DataError(
                        f"digest collision: {dataset_id} exists with "
                        "different content")
                return dataset_id  # same bytes: nothing to do
            record = dict(metadata)
            record["digest"] = digest
            atomic_write(stored_csv, raw)
            atomic_write(stored_meta, json_bytes(record))
        return dataset_id

    def load_dataset(self, dataset_id):
        stored_csv = self.dir("datasets") / f"{dataset_id}.csv"
        stored_meta = self.dir("datasets") / f"{dataset_id}.json"
        if not stored_csv.exists():
            raise DataError(f"no dataset named {dataset_id!r}")
        metadata = read_metadata(stored_meta)
        if content_digest(stored_csv.read_bytes()) != metadata.get("digest"):
            raise DataError(
                f"{dataset_id}: stored bytes no longer match the recorded "
                "digest; the repository was modified out of band")
        return read_csv(stored_csv, metadata)

    # -- methods ------------------------------------------------------------

    def add_method(self, json_path):
        with open(json_path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        spec = method_from_dict(payload)  # validates kind/formula pairing
        with self.write_lock():
            atomic_write(self.dir("methods") / f"{spec.id}.json",
                         json_bytes(method_to_dict(spec)))
        return spec

    def load_method(self, method_id):
        path = self.dir("methods") / f"{method_id}.json"
        if not path.exists():
            raise DataError(f"no method named {method_id!r}")
        with open(path, "r", encoding="utf-8") as fh:
            return method_from_dict(json.load(fh))

    def load_methods(self):
        out = {}
        for path in sorted(self.dir("methods").glob("*.json")):
            with open(path, "r", encoding="utf-8") as fh:
                spec = method_from_dict(json.load(fh))
            out[spec.id] = spec
        return out

    # -- evidence -----------------------------------------------------------

    def next_evidence_id(self, graph):
        taken = set(graph.evidence) if graph is not None else set()
        n = len(taken) + 1
        while f"e{n}" in taken:
            n += 1
        return f"e{n}"

    def run_evidence(self, hypothesis_id, dataset_id, method_id, *,
                     evidence_id=None, parent=None, purpose=None,
                     trigger=None, created_at, seed_override=None,
                     require_convergence=False):
        """Fit the method and append the resulting evidence node."""
        dag = self.load_hypothesis(hypothesis_id)
        data = self.load_dataset(dataset_id)
        spec = self.load_method(method_id)
        if seed_override is not None and spec.mcmc is not None:
            spec = dataclasses.replace(
                spec, mcmc=dataclasses.replace(spec.mcmc,
                                               seed=int(seed_override)))
        conclusion = run_method(data, spec, hypothesis=dag)
        if require_convergence and not getattr(conclusion, "reliable", True):
            raise ConvergenceError(
                conclusion.warning or "sampler did not converge")
        with self.write_lock():
            graph = self.load_graph()
            if graph is None:
                graph = EvolutionGraph(dag.phenomenon)
            evidence = Evidence(
                id=evidence_id or self.next_evidence_id(graph),
                hypothesis_id=hypothesis_id,
                dataset_id=dataset_id,
                method_id=method_id,
                conclusion=conclusion,
                created_at=created_at,
            )
            parent_dag = None
            if parent is not None and parent in graph.evidence:
                parent_dag = self.load_hypothesis(
                    graph.evidence[parent].hypothesis_id)
            add_evidence(graph, evidence, parent=parent, hypothesis=dag,
                         parent_hypothesis=parent_dag, purpose=purpose,
                         trigger=trigger)
            self.save_graph(graph)
            atomic_write(self.dir("evidence") / f"{evidence.id}.json",
                         json_bytes(evidence_record(evidence)))
        return evidence


def evidence_record(evidence):
    """The exchange-file shape of one evidence node."""
    return {
        "id": evidence.id,
        "hypothesis_id": evidence.hypothesis_id,
        "dataset_id": evidence.dataset_id,
        "method_id": evidence.method_id,
        "conclusion": conclusion_to_dict(evidence.conclusion),
        "created_at": evidence.created_at,
        "provenance": evidence.provenance,
    }
