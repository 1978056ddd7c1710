"""Causal hypotheses as directed acyclic graphs.

A hypothesis is a network of variables with assumed causal relationships,
marked with the phenomenon under study: one treatment variable and one
outcome variable.  This module parses the plain-text DSL, answers
d-separation queries, enumerates backdoor adjustment sets, derives testable
independence implications and statistical-model formulas, and diffs two
hypotheses.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field

from .errors import DagSyntaxError, DagValidationError

VALID_KINDS = ("continuous", "count", "binary", "ordinal")
VALID_ROLES = ("treatment", "outcome", "covariate", "group")

_NAME_RE = re.compile(r"^[^\W\d][\w.+-]*$")
_MAX_NON_PHENOMENON_NODES = 16


@dataclass(frozen=True)
class VariableDecl:
    """A declared variable: its name, measurement kind, and causal role."""

    name: str
    kind: str = "continuous"
    role: str = "covariate"
    levels: int | None = None
    bounds: tuple[float, float] | None = None

    def __post_init__(self):
        if not _NAME_RE.match(self.name):
            raise DagValidationError(f"invalid variable name {self.name!r}")
        if self.kind not in VALID_KINDS:
            raise DagValidationError(f"unknown kind {self.kind!r} for {self.name}")
        if self.role not in VALID_ROLES:
            raise DagValidationError(f"unknown role {self.role!r} for {self.name}")
        if self.kind == "ordinal":
            if self.levels is None or self.levels < 2:
                raise DagValidationError(
                    f"ordinal variable {self.name} must declare >= 2 levels"
                )
        elif self.levels is not None:
            raise DagValidationError(f"{self.name}: levels only apply to ordinal kind")
        if self.bounds is not None:
            lo, hi = self.bounds
            if lo > hi:
                raise DagValidationError(f"{self.name}: empty bounds interval")
            if self.kind == "count" and (
                lo < 0 or int(lo) != lo or int(hi) != hi
            ):
                raise DagValidationError(
                    f"{self.name}: count bounds must be non-negative integers"
                )


@dataclass(frozen=True)
class IndependenceClaim:
    """A (conditional) independence statement a _||_ b | given."""

    a: str
    b: str
    given: frozenset[str] = frozenset()
    expected_independent: bool = True

    def __post_init__(self):
        if self.a == self.b:
            raise DagValidationError("independence claim needs two distinct variables")
        if self.a in self.given or self.b in self.given:
            raise DagValidationError("claim variables cannot appear in the given set")

    def __str__(self):
        rel = "_||_" if self.expected_independent else "_/||_"
        if self.given:
            return f"{self.a} {rel} {self.b} | {{{', '.join(sorted(self.given))}}}"
        return f"{self.a} {rel} {self.b}"


@dataclass(frozen=True)
class ModelFormula:
    """A statistical model derived from a hypothesis."""

    response: str
    predictors: tuple[str, ...]
    random_intercepts: tuple[str, ...] = ()
    family: str = "gaussian"
    trials_column: str | None = None

    def __post_init__(self):
        if self.response in self.predictors:
            raise DagValidationError("response cannot be among the predictors")
        if set(self.random_intercepts) & set(self.predictors):
            raise DagValidationError(
                "random intercepts must be disjoint from the predictors"
            )
        if self.family not in ("gaussian", "gaussian-on-ranks", "binomial"):
            raise DagValidationError(f"unknown family {self.family!r}")
        if (self.family == "binomial") != (self.trials_column is not None):
            raise DagValidationError(
                "trials_column is required for (and only for) the binomial family"
            )

    def __str__(self):
        rhs = " + ".join(self.predictors)
        for g in self.random_intercepts:
            rhs += f" + (1|{g})"
        return f"{self.response} ~ {rhs}"


@dataclass(frozen=True)
class DagDelta:
    """Node/edge differences between two hypotheses."""

    added_nodes: frozenset[str]
    removed_nodes: frozenset[str]
    added_edges: frozenset[tuple[str, str]]
    removed_edges: frozenset[tuple[str, str]]
    phenomenon_preserved: bool

    def is_empty(self):
        return not (
            self.added_nodes
            or self.removed_nodes
            or self.added_edges
            or self.removed_edges
        )


@dataclass(frozen=True)
class HypothesisDag:
    """A causal hypothesis: variables, directed edges, and the phenomenon.

    Invariants enforced on construction: the edge relation is acyclic, every
    edge endpoint is declared, there are no self-loops or duplicate edges,
    and exactly one treatment and one (distinct) outcome node exist.
    """

    id: str
    nodes: tuple[VariableDecl, ...]
    edges: tuple[tuple[str, str], ...]
    annotations: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        # canonical form: nodes by name, edges lexicographic
        object.__setattr__(self, "nodes", tuple(sorted(self.nodes, key=lambda n: n.name)))
        object.__setattr__(self, "edges", tuple(sorted(self.edges)))
        names = [n.name for n in self.nodes]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise DagValidationError(f"duplicate variable declaration: {dup[0]}")
        declared = set(names)
        seen = set()
        for cause, effect in self.edges:
            if cause == effect:
                raise DagValidationError(f"self-loop on {cause}")
            if cause not in declared:
                raise DagValidationError(f"undeclared node in edge: {cause}")
            if effect not in declared:
                raise DagValidationError(f"undeclared node in edge: {effect}")
            if (cause, effect) in seen:
                raise DagValidationError(f"duplicate edge {cause} -> {effect}")
            seen.add((cause, effect))
        treatments = [n.name for n in self.nodes if n.role == "treatment"]
        outcomes = [n.name for n in self.nodes if n.role == "outcome"]
        if len(treatments) != 1 or len(outcomes) != 1:
            raise DagValidationError(
                "exactly one treatment and one outcome node must be marked "
                f"(found {len(treatments)} treatment(s), {len(outcomes)} outcome(s))"
            )
        cycle = _find_cycle(declared, self.edges)
        if cycle is not None:
            raise DagValidationError("cycle detected: " + " -> ".join(cycle))

    # -- basic structure ---------------------------------------------------

    @property
    def treatment(self):
        return next(n.name for n in self.nodes if n.role == "treatment")

    @property
    def outcome(self):
        return next(n.name for n in self.nodes if n.role == "outcome")

    @property
    def phenomenon(self):
        return (self.treatment, self.outcome)

    def node_names(self):
        return frozenset(n.name for n in self.nodes)

    def decl(self, name):
        for n in self.nodes:
            if n.name == name:
                return n
        raise DagValidationError(f"unknown node name: {name}")

    def parents(self, name):
        return frozenset(c for c, e in self.edges if e == name)

    def children(self, name):
        return frozenset(e for c, e in self.edges if c == name)

    def descendants(self, name, include_self=False):
        """All nodes reachable from ``name`` along directed edges."""
        out = set()
        stack = [name]
        while stack:
            for child in self.children(stack.pop()):
                if child not in out:
                    out.add(child)
                    stack.append(child)
        if include_self:
            out.add(name)
        return frozenset(out)

    def ancestors(self, name, include_self=False):
        out = set()
        stack = [name]
        while stack:
            for parent in self.parents(stack.pop()):
                if parent not in out:
                    out.add(parent)
                    stack.append(parent)
        if include_self:
            out.add(name)
        return frozenset(out)


def _find_cycle(nodes, edges):
    """Return one directed cycle as a node list, or None if acyclic."""
    children = {n: [] for n in nodes}
    for c, e in edges:
        children[c].append(e)
    WHITE, GREY, BLACK = 0, 1, 2
    color = dict.fromkeys(nodes, WHITE)
    parent = {}

    for start in sorted(nodes):
        if color[start] != WHITE:
            continue
        stack = [(start, iter(sorted(children[start])))]
        color[start] = GREY
        while stack:
            node, it = stack[-1]
            advanced = False
            for child in it:
                if color[child] == WHITE:
                    color[child] = GREY
                    parent[child] = node
                    stack.append((child, iter(sorted(children[child]))))
                    advanced = True
                    break
                if color[child] == GREY:
                    cycle = [child, node]
                    cur = node
                    while cur != child:
                        cur = parent[cur]
                        cycle.append(cur)
                    cycle.reverse()
                    return cycle
            if not advanced:
                color[node] = BLACK
                stack.pop()
    return None


# ---------------------------------------------------------------------------
# DSL parsing / serialization
# ---------------------------------------------------------------------------

_ROLE_TAGS = {"treatment", "outcome", "group"}
_KIND_TAGS = {"continuous", "count", "binary"}


def parse_dag(text, dag_id="h"):
    """Parse DSL text into a validated :class:`HypothesisDag`.

    Grammar: statements separated by ``;`` or newlines; ``#`` starts a
    comment.  A statement is either a node declaration ``name`` optionally
    followed by ``[tag, tag, ...]`` with tags from ``{treatment, outcome,
    group, continuous, count, binary, ordinal:k}``, or an edge
    ``name -> name``.  Parsing then serializing then parsing is identity.
    """
    decls: dict[str, VariableDecl] = {}
    edges: list[tuple[str, str]] = []

    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0]
        col = 1
        for chunk in line.split(";"):
            stripped = chunk.strip()
            at = col + (len(chunk) - len(chunk.lstrip()))
            col += len(chunk) + 1
            if not stripped:
                continue
            if "->" in stripped:
                _parse_edge(stripped, decls, edges, line_no, at)
            else:
                _parse_decl(stripped, decls, line_no, at)

    if not decls:
        raise DagSyntaxError("empty DAG description", 1, 1)
    treatments = [n for n in decls.values() if n.role == "treatment"]
    outcomes = [n for n in decls.values() if n.role == "outcome"]
    if len(treatments) != 1 or len(outcomes) != 1:
        raise DagValidationError(
            f"DAG {dag_id!r}: mark exactly one [treatment] and one [outcome] node "
            f"(found {len(treatments)} and {len(outcomes)})"
        )
    return HypothesisDag(
        id=dag_id,
        nodes=tuple(sorted(decls.values(), key=lambda n: n.name)),
        edges=tuple(edges),
    )


def _parse_edge(stripped, decls, edges, line_no, col):
    parts = stripped.split("->")
    if len(parts) != 2:
        raise DagSyntaxError(f"malformed edge {stripped!r}", line_no, col)
    cause, effect = parts[0].strip(), parts[1].strip()
    for name in (cause, effect):
        if not _NAME_RE.match(name):
            raise DagSyntaxError(f"invalid node name {name!r}", line_no, col)
        if name not in decls:
            raise DagSyntaxError(f"undeclared node in edge: {name}", line_no, col)
    if cause == effect:
        raise DagSyntaxError(f"self-loop on {cause}", line_no, col)
    if (cause, effect) in edges:
        raise DagSyntaxError(f"duplicate edge {cause} -> {effect}", line_no, col)
    edges.append((cause, effect))


def _parse_decl(stripped, decls, line_no, col):
    m = re.match(r"^(\S+?)\s*(?:\[([^\]]*)\])?$", stripped)
    if m is None or ("[" in stripped and m.group(2) is None):
        raise DagSyntaxError(f"malformed statement {stripped!r}", line_no, col)
    name, tag_text = m.group(1), m.group(2)
    if not _NAME_RE.match(name):
        raise DagSyntaxError(f"invalid node name {name!r}", line_no, col)
    if name in decls:
        raise DagSyntaxError(f"duplicate declaration of {name}", line_no, col)

    kind, role, levels = "continuous", "covariate", None
    seen_role = seen_kind = False
    for tag in (tag_text.split(",") if tag_text else []):
        tag = tag.strip()
        if not tag:
            raise DagSyntaxError("empty tag", line_no, col)
        if tag in _ROLE_TAGS:
            if seen_role:
                raise DagSyntaxError(f"{name}: more than one role tag", line_no, col)
            role, seen_role = tag, True
        elif tag in _KIND_TAGS:
            if seen_kind:
                raise DagSyntaxError(f"{name}: more than one kind tag", line_no, col)
            kind, seen_kind = tag, True
        elif tag.startswith("ordinal:"):
            if seen_kind:
                raise DagSyntaxError(f"{name}: more than one kind tag", line_no, col)
            try:
                levels = int(tag.split(":", 1)[1])
            except ValueError:
                raise DagSyntaxError(f"bad ordinal level count in {tag!r}", line_no, col)
            kind, seen_kind = "ordinal", True
        else:
            raise DagSyntaxError(f"unknown tag {tag!r}", line_no, col)
    try:
        decls[name] = VariableDecl(name=name, kind=kind, role=role, levels=levels)
    except DagValidationError as exc:
        raise DagSyntaxError(str(exc), line_no, col)


def serialize_dag(dag):
    """Render a DAG back to DSL text (deterministic node/edge order)."""
    lines = []
    for node in sorted(dag.nodes, key=lambda n: n.name):
        tags = []
        if node.role != "covariate":
            tags.append(node.role)
        if node.kind == "ordinal":
            tags.append(f"ordinal:{node.levels}")
        elif node.kind != "continuous":
            tags.append(node.kind)
        lines.append(node.name + (f" [{', '.join(tags)}]" if tags else ""))
    for cause, effect in sorted(dag.edges):
        lines.append(f"{cause} -> {effect}")
    return "\n".join(lines) + "\n"


def to_dot(dag):
    """DOT rendering; treatment red, outcome cyan, remaining nodes grey."""
    lines = [f'digraph "{dag.id}" {{', "  node [style=filled];"]
    for node in sorted(dag.nodes, key=lambda n: n.name):
        color = {"treatment": "red", "outcome": "cyan"}.get(node.role, "grey")
        lines.append(f'  "{node.name}" [fillcolor={color}];')
    for cause, effect in sorted(dag.edges):
        lines.append(f'  "{cause}" -> "{effect}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# d-separation and the backdoor criterion
# ---------------------------------------------------------------------------


def d_separated(dag, a, b, given=()):
    """Decide whether ``a`` and ``b`` are d-separated by ``given``.

    Uses the ancestral moral graph: ``a`` and ``b`` are d-separated by Z
    exactly when they are disconnected in the moralized induced subgraph
    over the ancestral closure of ``{a, b} | Z`` after deleting Z.  This is
    equivalent to every path being blocked under the chain/fork/collider
    rules.
    """
    names = dag.node_names()
    given = frozenset(given)
    for name in {a, b} | given:
        if name not in names:
            raise DagValidationError(f"unknown node name: {name}")
    if a == b:
        raise DagValidationError("d-separation query needs two distinct nodes")
    if a in given or b in given:
        raise DagValidationError("query nodes cannot be in the conditioning set")
    return _d_separated_edges(names, dag.edges, a, b, given)


def _d_separated_edges(names, edges, a, b, given):
    parents = {n: set() for n in names}
    for c, e in edges:
        parents[e].add(c)

    relevant = set(given) | {a, b}
    stack = list(relevant)
    while stack:
        for p in parents[stack.pop()]:
            if p not in relevant:
                relevant.add(p)
                stack.append(p)

    # moralize the induced subgraph: keep edges, marry co-parents
    adj = {n: set() for n in relevant}
    for c, e in edges:
        if c in relevant and e in relevant:
            adj[c].add(e)
            adj[e].add(c)
    for n in relevant:
        for p, q in itertools.combinations(parents[n] & relevant, 2):
            adj[p].add(q)
            adj[q].add(p)

    seen = {a}
    stack = [a]
    while stack:
        for nxt in adj[stack.pop()]:
            if nxt in given or nxt in seen:
                continue
            if nxt == b:
                return False
            seen.add(nxt)
            stack.append(nxt)
    return True


def _backdoor_edges(dag):
    """Edges with the treatment's outgoing edges removed."""
    x = dag.treatment
    return tuple((c, e) for c, e in dag.edges if c != x)


def is_valid_adjustment_set(dag, candidate):
    """Backdoor criterion: Z holds no descendant of the treatment and blocks
    every backdoor path from treatment to outcome."""
    x, y = dag.treatment, dag.outcome
    candidate = frozenset(candidate)
    names = dag.node_names()
    for z in candidate:
        if z not in names:
            raise DagValidationError(f"unknown node name: {z}")
    if candidate & {x, y}:
        return False
    if candidate & dag.descendants(x):
        return False
    return _d_separated_edges(names, _backdoor_edges(dag), x, y, candidate)


def adjustment_sets(dag):
    """All inclusion-minimal backdoor adjustment sets, lexicographically.

    Enumerates every subset of the non-descendants of the treatment
    (excluding the phenomenon pair) and keeps the inclusion-minimal valid
    ones.  When no backdoor path exists the empty set is the single
    minimal set.  DAGs with more than 16 non-phenomenon nodes are rejected;
    the enumeration is deliberately exhaustive.
    """
    x, y = dag.treatment, dag.outcome
    others = dag.node_names() - {x, y}
    if len(others) > _MAX_NON_PHENOMENON_NODES:
        raise DagValidationError(
            f"adjustment-set enumeration supports at most "
            f"{_MAX_NON_PHENOMENON_NODES} non-phenomenon nodes, got {len(others)}"
        )
    candidates = sorted(others - dag.descendants(x))
    names = dag.node_names()
    bd_edges = _backdoor_edges(dag)

    valid = []
    for r in range(len(candidates) + 1):
        for combo in itertools.combinations(candidates, r):
            z = frozenset(combo)
            if _d_separated_edges(names, bd_edges, x, y, z):
                valid.append(z)

    minimal = []
    for z in sorted(valid, key=lambda s: (len(s), sorted(s))):
        if not any(m <= z for m in minimal):
            minimal.append(z)
    return [frozenset(m) for m in sorted(minimal, key=lambda s: sorted(s))]


def testable_implications(dag, max_conditioning=None):
    """Every pairwise conditional-independence claim the DAG implies.

    For DAGs of at most 8 nodes (or when ``max_conditioning`` is given) the
    conditioning sets range over all subsets of the remaining nodes up to
    the cap; larger DAGs fall back to the parents-based local Markov
    claims.  Claims come back in a deterministic order.
    """
    names = sorted(dag.node_names())
    exhaustive = len(names) <= 8 or max_conditioning is not None
    claims = []
    if exhaustive:
        cap = max_conditioning if max_conditioning is not None else len(names)
        for a, b in itertools.combinations(names, 2):
            rest = [n for n in names if n not in (a, b)]
            for r in range(min(cap, len(rest)) + 1):
                for combo in itertools.combinations(rest, r):
                    if d_separated(dag, a, b, combo):
                        claims.append(
                            IndependenceClaim(a=a, b=b, given=frozenset(combo))
                        )
    else:
        seen = set()
        for v in names:
            pa = dag.parents(v)
            nondesc = dag.node_names() - dag.descendants(v, include_self=True)
            for w in sorted(nondesc - pa):
                a, b = min(v, w), max(v, w)
                key = (a, b, pa)
                if key not in seen and w not in pa:
                    seen.add(key)
                    claims.append(IndependenceClaim(a=a, b=b, given=frozenset(pa)))
    claims.sort(key=lambda c: (c.a, c.b, len(c.given), sorted(c.given)))
    return claims


def _collider_nodes_between(dag, x, y):
    """Nodes acting as a collider on at least one x-y path."""
    adj = {n: set() for n in dag.node_names()}
    for c, e in dag.edges:
        adj[c].add(e)
        adj[e].add(c)
    edge_set = set(dag.edges)
    colliders = set()

    def walk(node, path):
        for nxt in sorted(adj[node]):
            if nxt in path:
                continue
            if nxt == y:
                full = path + [nxt]
                for i in range(1, len(full) - 1):
                    p, v, q = full[i - 1], full[i], full[i + 1]
                    if (p, v) in edge_set and (q, v) in edge_set:
                        colliders.add(v)
            else:
                walk(nxt, path + [nxt])

    walk(x, [x])
    return colliders


def derive_formula(dag, chosen_adjustment=(), extras=(), family="gaussian",
                   trials_column=None):
    """Derive the statistical-model formula for a chosen adjustment set.

    ``chosen_adjustment`` must satisfy the backdoor criterion (a minimal
    set or a still-valid superset).  ``extras`` are additional declared
    nodes: group-role nodes become random intercepts, the rest enter as
    precision covariates, and the whole conditioning set is re-checked so
    an extra cannot open a backdoor path.  Colliders on a treatment-outcome
    path are rejected by name.
    """
    x, y = dag.treatment, dag.outcome
    chosen = frozenset(chosen_adjustment)
    extras = tuple(extras)
    names = dag.node_names()
    for z in set(chosen) | set(extras):
        if z not in names:
            raise DagValidationError(f"unknown node name: {z}")
        if z in (x, y):
            raise DagValidationError(f"{z} is part of the phenomenon")

    groups = tuple(sorted(z for z in extras if dag.decl(z).role == "group"))
    extra_covs = tuple(sorted(z for z in extras if dag.decl(z).role != "group"))
    conditioning = chosen | set(extra_covs) | set(groups)

    desc = dag.descendants(x)
    blocks = _d_separated_edges(names, _backdoor_edges(dag), x, y, conditioning)
    # a collider is only a defect when it actually breaks validity; valid
    # supersets that happen to contain one (collider plus its blocker) pass
    colliders = _collider_nodes_between(dag, x, y)
    for z in sorted(conditioning):
        if z in colliders and (z in desc or not blocks):
            raise DagValidationError(
                f"{z} is a collider on a treatment-outcome path; conditioning "
                "on it would confound the effect estimate"
            )
    for z in sorted(conditioning):
        if z in desc:
            raise DagValidationError(f"{z} is a descendant of the treatment {x}")
    if not blocks:
        raise DagValidationError(
            f"{{{', '.join(sorted(conditioning))}}} does not block every "
            "backdoor path from treatment to outcome"
        )

    predictors = (x,) + tuple(sorted(chosen)) + extra_covs
    return ModelFormula(
        response=y,
        predictors=predictors,
        random_intercepts=groups,
        family=family,
        trials_column=trials_column,
    )


def diff_dags(old, new):
    """Node/edge delta between two hypotheses.

    ``phenomenon_preserved`` is False when the treatment or the outcome
    name changed, which marks the pair incommensurable for evolution
    purposes.
    """
    old_nodes, new_nodes = old.node_names(), new.node_names()
    old_edges, new_edges = set(old.edges), set(new.edges)
    return DagDelta(
        added_nodes=frozenset(new_nodes - old_nodes),
        removed_nodes=frozenset(old_nodes - new_nodes),
        added_edges=frozenset(new_edges - old_edges),
        removed_edges=frozenset(old_edges - new_edges),
        phenomenon_preserved=(old.phenomenon == new.phenomenon),
    )
