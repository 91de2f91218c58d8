"""Typed traceability graph: artifacts, relations, validation, coverage.

Nodes are user needs, system requirements, software requirements, change
requests, and test cases; edges carry one of four relation kinds.  The
hierarchy relation forms a forest from needs down to leaf software
requirements.  Validation (structure) and coverage (missing evidence)
are separate passes so that imperfect real-world repositories can still
be linted rather than rejected.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from enum import Enum


class ArtifactKind(Enum):
    USER_NEED = "user_need"
    SYSTEM_REQUIREMENT = "system_requirement"
    SOFTWARE_REQUIREMENT = "software_requirement"
    CHANGE_REQUEST = "change_request"
    TEST_CASE = "test_case"
    UNCLASSIFIED = "unclassified"


REQUIREMENT_KINDS = (ArtifactKind.SYSTEM_REQUIREMENT, ArtifactKind.SOFTWARE_REQUIREMENT)
HIERARCHY_KINDS = (ArtifactKind.USER_NEED,) + REQUIREMENT_KINDS


class ArtifactState(Enum):
    OPEN = "open"
    CLOSED = "closed"
    MERGED = "merged"
    NOT_APPLICABLE = "not_applicable"


class RelationKind(Enum):
    PART_OF = "part_of"
    RESOLVES = "resolves"
    VERIFIES = "verifies"
    VALIDATES = "validates"


@dataclass(frozen=True)
class IssueId:
    """Identity of an issue or pull request: full repository plus number."""

    repo: str
    number: int

    def __str__(self) -> str:
        return f"{self.repo}#{self.number}"

    def sort_key(self) -> tuple:
        return (0, self.repo.lower(), self.number)


@dataclass(frozen=True)
class TestId:
    """Identity of a test case: feature file path plus scenario name."""

    __test__ = False  # not a pytest class

    path: str
    scenario: str

    def __str__(self) -> str:
        return f"{self.path}::{self.scenario}"

    def sort_key(self) -> tuple:
        return (1, self.path, self.scenario)


NodeId = IssueId | TestId


def _key(node_id: NodeId) -> tuple:
    return node_id.sort_key()


@dataclass
class ArtifactNode:
    id: NodeId
    kind: ArtifactKind
    title: str = ""
    state: ArtifactState = ArtifactState.OPEN
    labels: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class TraceEdge:
    source: NodeId
    target: NodeId
    kind: RelationKind

    def sort_key(self) -> tuple:
        return (self.kind.value, _key(self.source), _key(self.target))


class FindingCode(Enum):
    CYCLE = "cycle"
    ILLEGAL_EDGE = "illegal_edge"
    MULTIPLE_PARENTS = "multiple_parents"
    DANGLING_REF = "dangling_ref"
    NEED_WITHOUT_VALIDATION = "need_without_validation"
    REQUIREMENT_WITHOUT_VERIFICATION = "requirement_without_verification"
    REQUIREMENT_WITHOUT_CHANGE = "requirement_without_change"
    ORPHAN_REQUIREMENT = "orphan_requirement"
    UNCLASSIFIED_ISSUE = "unclassified_issue"


_CODE_ORDER = {code: i for i, code in enumerate(FindingCode)}

# Unclassified issues are merely suspicious; everything else blocks a
# clean lint.
def finding_severity(code: FindingCode) -> str:
    return "warning" if code is FindingCode.UNCLASSIFIED_ISSUE else "error"


@dataclass(frozen=True)
class Finding:
    code: FindingCode
    subjects: tuple[NodeId, ...]
    message: str

    @property
    def severity(self) -> str:
        return finding_severity(self.code)

    def sort_key(self) -> tuple:
        return (_CODE_ORDER[self.code], tuple(_key(s) for s in self.subjects))

    def __str__(self) -> str:
        ids = ", ".join(str(s) for s in self.subjects)
        return f"[{self.code.value}] {ids}: {self.message}"


class UnknownNodeError(KeyError):
    """An operation referenced a node id absent from the graph."""


_LEGAL_EDGES = {
    (RelationKind.PART_OF, ArtifactKind.SYSTEM_REQUIREMENT, ArtifactKind.USER_NEED),
    (RelationKind.PART_OF, ArtifactKind.SOFTWARE_REQUIREMENT, ArtifactKind.SYSTEM_REQUIREMENT),
    (RelationKind.PART_OF, ArtifactKind.SOFTWARE_REQUIREMENT, ArtifactKind.SOFTWARE_REQUIREMENT),
    (RelationKind.RESOLVES, ArtifactKind.CHANGE_REQUEST, ArtifactKind.SYSTEM_REQUIREMENT),
    (RelationKind.RESOLVES, ArtifactKind.CHANGE_REQUEST, ArtifactKind.SOFTWARE_REQUIREMENT),
    (RelationKind.VERIFIES, ArtifactKind.TEST_CASE, ArtifactKind.SYSTEM_REQUIREMENT),
    (RelationKind.VERIFIES, ArtifactKind.TEST_CASE, ArtifactKind.SOFTWARE_REQUIREMENT),
    (RelationKind.VALIDATES, ArtifactKind.TEST_CASE, ArtifactKind.USER_NEED),
}

# Levels may not be skipped by default; a software requirement directly
# under a user need is flagged unless explicitly allowed.
_LEVEL_SKIP_EDGE = (RelationKind.PART_OF, ArtifactKind.SOFTWARE_REQUIREMENT, ArtifactKind.USER_NEED)

DEFAULT_LABEL_MAP = {
    ArtifactKind.USER_NEED: "need",
    ArtifactKind.SYSTEM_REQUIREMENT: "system requirement",
    ArtifactKind.SOFTWARE_REQUIREMENT: "software requirement",
}


def classify(labels: list[str], label_map: dict[ArtifactKind, str] | None = None) -> ArtifactKind:
    """Artifact kind from issue labels.

    Exactly one recognized label decides the kind; zero or several
    recognized labels leave the issue unclassified.  Extraneous labels
    are ignored.
    """
    mapping = label_map or DEFAULT_LABEL_MAP
    wanted = {label.casefold(): kind for kind, label in mapping.items()}
    matches = {wanted[lbl.casefold()] for lbl in labels if lbl.casefold() in wanted}
    if len(matches) == 1:
        return matches.pop()
    return ArtifactKind.UNCLASSIFIED


class TraceGraph:
    """Nodes keyed by id plus deduplicated, canonically ordered edges.

    Build single-threaded, then share freely: query operations do not
    mutate.  Equality ignores insertion order.
    """

    def __init__(self) -> None:
        self.nodes: dict[NodeId, ArtifactNode] = {}
        self._edges: set[TraceEdge] = set()

    @property
    def edges(self) -> list[TraceEdge]:
        return sorted(self._edges, key=TraceEdge.sort_key)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TraceGraph):
            return NotImplemented
        return self.nodes == other.nodes and self._edges == other._edges

    def __len__(self) -> int:
        return len(self.nodes)

    def add_artifact(self, node: ArtifactNode) -> "TraceGraph":
        """Insert a node; re-adding an id replaces the node, edges kept."""
        self.nodes[node.id] = node
        return self

    def add_relation(self, edge: TraceEdge) -> "TraceGraph":
        """Insert an edge; duplicates are no-ops.

        Both endpoints must already exist.  Kind legality is checked by
        :func:`validate_graph`, not here, so that real repositories can
        be linted instead of rejected.
        """
        for endpoint in (edge.source, edge.target):
            if endpoint not in self.nodes:
                raise UnknownNodeError(f"edge endpoint {endpoint} is not in the graph")
        self._edges.add(edge)
        return self

    def edges_of_kind(self, kind: RelationKind) -> list[TraceEdge]:
        return [e for e in self.edges if e.kind is kind]

    def sorted_ids(self) -> list[NodeId]:
        return sorted(self.nodes, key=_key)


def _part_of_adjacency(graph: TraceGraph) -> dict[NodeId, list[NodeId]]:
    adj: dict[NodeId, list[NodeId]] = {nid: [] for nid in graph.sorted_ids()}
    for edge in graph.edges_of_kind(RelationKind.PART_OF):
        adj[edge.source].append(edge.target)
    return adj


def _strongly_connected(adj: dict[NodeId, list[NodeId]]) -> list[list[NodeId]]:
    """Tarjan over the hierarchy edges, iterative to be depth-safe."""
    index: dict[NodeId, int] = {}
    low: dict[NodeId, int] = {}
    on_stack: set[NodeId] = set()
    stack: list[NodeId] = []
    components: list[list[NodeId]] = []
    counter = 0

    for root in adj:
        if root in index:
            continue
        work = [(root, iter(adj[root]))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, children = work[-1]
            advanced = False
            for child in children:
                if child not in index:
                    index[child] = low[child] = counter
                    counter += 1
                    stack.append(child)
                    on_stack.add(child)
                    work.append((child, iter(adj[child])))
                    advanced = True
                    break
                if child in on_stack:
                    low[node] = min(low[node], index[child])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                component = []
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    component.append(member)
                    if member == node:
                        break
                components.append(component)
    return components


def validate_graph(graph: TraceGraph, allow_level_skip: bool = False) -> list[Finding]:
    """Structural findings: hierarchy cycles, multiple parents, edges
    whose endpoint kinds are not in the legality table, and unclassified
    issues participating in relations.
    """
    findings: list[Finding] = []
    adj = _part_of_adjacency(graph)

    self_loops = {e.source for e in graph.edges_of_kind(RelationKind.PART_OF) if e.source == e.target}
    for component in _strongly_connected(adj):
        members = sorted(component, key=_key)
        if len(members) > 1 or members[0] in self_loops:
            findings.append(
                Finding(
                    FindingCode.CYCLE,
                    tuple(members),
                    "hierarchy relation forms a cycle: " + " -> ".join(str(m) for m in members),
                )
            )

    for node_id, parents in adj.items():
        if len(parents) > 1:
            listed = ", ".join(str(p) for p in sorted(parents, key=_key))
            findings.append(
                Finding(
                    FindingCode.MULTIPLE_PARENTS,
                    (node_id,),
                    f"{node_id} claims more than one parent: {listed}",
                )
            )

    legal = set(_LEGAL_EDGES)
    if allow_level_skip:
        legal.add(_LEVEL_SKIP_EDGE)
    for edge in graph.edges:
        triple = (edge.kind, graph.nodes[edge.source].kind, graph.nodes[edge.target].kind)
        if triple not in legal:
            findings.append(
                Finding(
                    FindingCode.ILLEGAL_EDGE,
                    (edge.source, edge.target),
                    f"{triple[1].value} may not be '{edge.kind.value}' of {triple[2].value}",
                )
            )

    linked = {e.source for e in graph.edges} | {e.target for e in graph.edges}
    for node_id in graph.sorted_ids():
        if graph.nodes[node_id].kind is ArtifactKind.UNCLASSIFIED and node_id in linked:
            findings.append(
                Finding(
                    FindingCode.UNCLASSIFIED_ISSUE,
                    (node_id,),
                    f"{node_id} participates in relations but carries no recognized kind label",
                )
            )

    return sorted(findings, key=Finding.sort_key)


def coverage_check(graph: TraceGraph) -> list[Finding]:
    """Missing-evidence findings for a structurally valid graph.

    Adding verification, validation, or resolution edges can only ever
    remove findings, never introduce new ones.
    """
    findings: list[Finding] = []
    validated: set[NodeId] = set()
    verified: set[NodeId] = set()
    resolved: set[NodeId] = set()
    has_parent: set[NodeId] = set()
    has_children: set[NodeId] = set()
    for edge in graph.edges:
        if edge.kind is RelationKind.VALIDATES:
            validated.add(edge.target)
        elif edge.kind is RelationKind.VERIFIES:
            verified.add(edge.target)
        elif edge.kind is RelationKind.RESOLVES:
            resolved.add(edge.target)
        elif edge.kind is RelationKind.PART_OF:
            has_parent.add(edge.source)
            has_children.add(edge.target)

    for node_id in graph.sorted_ids():
        node = graph.nodes[node_id]
        if node.kind is ArtifactKind.USER_NEED and node_id not in validated:
            findings.append(
                Finding(
                    FindingCode.NEED_WITHOUT_VALIDATION,
                    (node_id,),
                    f"user need {node_id} has no validating acceptance test",
                )
            )
        if node.kind in REQUIREMENT_KINDS and node_id not in verified:
            findings.append(
                Finding(
                    FindingCode.REQUIREMENT_WITHOUT_VERIFICATION,
                    (node_id,),
                    f"requirement {node_id} has no verifying test case",
                )
            )
        if (
            node.kind is ArtifactKind.SOFTWARE_REQUIREMENT
            and node_id not in has_children
            and node_id not in resolved
        ):
            findings.append(
                Finding(
                    FindingCode.REQUIREMENT_WITHOUT_CHANGE,
                    (node_id,),
                    f"leaf software requirement {node_id} has no resolving change request",
                )
            )
        if node.kind in REQUIREMENT_KINDS and node_id not in has_parent:
            findings.append(
                Finding(
                    FindingCode.ORPHAN_REQUIREMENT,
                    (node_id,),
                    f"requirement {node_id} is not part of any parent",
                )
            )

    return sorted(findings, key=Finding.sort_key)


def ancestors(graph: TraceGraph, node_id: NodeId) -> list[NodeId]:
    """Hierarchy chain from ``node_id`` to its root, nearest parent first."""
    if node_id not in graph.nodes:
        raise UnknownNodeError(f"{node_id} is not in the graph")
    adj = _part_of_adjacency(graph)
    chain: list[NodeId] = []
    seen = {node_id}
    current = node_id
    while True:
        parents = sorted(adj[current], key=_key)
        if not parents:
            return chain
        parent = parents[0]
        if parent in seen:
            raise ValueError(f"hierarchy relation is cyclic at {parent}")
        chain.append(parent)
        seen.add(parent)
        current = parent


@dataclass
class MatrixRow:
    """One root-to-leaf hierarchy path with its change and test evidence."""

    need: IssueId | None
    system_requirement: IssueId | None
    software_chain: list[IssueId]
    change_requests: list[IssueId]
    test_cases: list[TestId]

    def sort_key(self) -> tuple:
        return tuple(_key(n) for n in self.path_ids())

    def path_ids(self) -> list[IssueId]:
        ids = []
        if self.need:
            ids.append(self.need)
        if self.system_requirement:
            ids.append(self.system_requirement)
        ids.extend(self.software_chain)
        return ids


def trace_matrix(graph: TraceGraph) -> list[MatrixRow]:
    """One row per root-to-leaf hierarchy path.

    Change requests and test cases attach to the path's leaf, which is
    the granularity at which work is implemented and tested; cells stay
    empty where links are missing.
    """
    hierarchy = {nid for nid, n in graph.nodes.items() if n.kind in HIERARCHY_KINDS}
    children: dict[NodeId, list[NodeId]] = {nid: [] for nid in hierarchy}
    has_parent: set[NodeId] = set()
    for edge in graph.edges_of_kind(RelationKind.PART_OF):
        if edge.source in hierarchy and edge.target in hierarchy:
            children[edge.target].append(edge.source)
            has_parent.add(edge.source)

    resolves: dict[NodeId, list[IssueId]] = {}
    tests: dict[NodeId, list[TestId]] = {}
    for edge in graph.edges:
        if edge.kind is RelationKind.RESOLVES and isinstance(edge.source, IssueId):
            resolves.setdefault(edge.target, []).append(edge.source)
        elif edge.kind in (RelationKind.VERIFIES, RelationKind.VALIDATES) and isinstance(
            edge.source, TestId
        ):
            tests.setdefault(edge.target, []).append(edge.source)

    rows: list[MatrixRow] = []
    roots = sorted((nid for nid in hierarchy if nid not in has_parent), key=_key)
    for root in roots:
        stack: list[list[NodeId]] = [[root]]
        while stack:
            path = stack.pop()
            kids = sorted(
                (c for c in children[path[-1]] if c not in path), key=_key, reverse=True
            )
            if not kids:
                rows.append(_row_from_path(graph, path, resolves, tests))
                continue
            for kid in kids:
                stack.append(path + [kid])
    return sorted(rows, key=MatrixRow.sort_key)


def _row_from_path(
    graph: TraceGraph,
    path: list[NodeId],
    resolves: dict[NodeId, list[IssueId]],
    tests: dict[NodeId, list[TestId]],
) -> MatrixRow:
    need = None
    system = None
    chain: list[IssueId] = []
    for nid in path:
        kind = graph.nodes[nid].kind
        if kind is ArtifactKind.USER_NEED and need is None:
            need = nid
        elif kind is ArtifactKind.SYSTEM_REQUIREMENT and system is None:
            system = nid
        elif kind is ArtifactKind.SOFTWARE_REQUIREMENT:
            chain.append(nid)
    leaf = path[-1]
    return MatrixRow(
        need=need,
        system_requirement=system,
        software_chain=chain,
        change_requests=sorted(resolves.get(leaf, []), key=_key),
        test_cases=sorted(tests.get(leaf, []), key=_key),
    )


def _display_issue(node_id: IssueId, home_repo: str | None) -> str:
    if home_repo and node_id.repo.lower() == home_repo.lower():
        return f"#{node_id.number}"
    return str(node_id)


def matrix_cells(row: MatrixRow, graph: TraceGraph, home_repo: str | None = None) -> list[str]:
    """The five display cells for one matrix row."""
    return [
        _display_issue(row.need, home_repo) if row.need else "",
        _display_issue(row.system_requirement, home_repo) if row.system_requirement else "",
        " > ".join(_display_issue(n, home_repo) for n in row.software_chain),
        "; ".join(_display_issue(n, home_repo) for n in row.change_requests),
        "; ".join(graph.nodes[t].title or t.scenario for t in row.test_cases),
    ]


MATRIX_HEADER = ["need", "system_requirement", "software_requirements", "change_request", "test_cases"]


def matrix_to_csv(rows: list[MatrixRow], graph: TraceGraph, home_repo: str | None = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MATRIX_HEADER)
    for row in rows:
        writer.writerow(matrix_cells(row, graph, home_repo))
    return buf.getvalue()


def matrix_to_markdown(rows: list[MatrixRow], graph: TraceGraph, home_repo: str | None = None) -> str:
    lines = [
        "| " + " | ".join(MATRIX_HEADER) + " |",
        "| " + " | ".join("---" for _ in MATRIX_HEADER) + " |",
    ]
    for row in rows:
        cells = [c.replace("|", "\\|") for c in matrix_cells(row, graph, home_repo)]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def graph_to_json_dict(graph: TraceGraph) -> dict:
    """Stable-order JSON form: node and edge lists sorted canonically."""
    return {
        "nodes": [
            {
                "id": str(nid),
                "kind": graph.nodes[nid].kind.value,
                "title": graph.nodes[nid].title,
                "state": graph.nodes[nid].state.value,
                "labels": list(graph.nodes[nid].labels),
            }
            for nid in graph.sorted_ids()
        ],
        "edges": [
            {"from": str(e.source), "to": str(e.target), "kind": e.kind.value} for e in graph.edges
        ],
    }


def graph_to_json(graph: TraceGraph) -> str:
    return json.dumps(graph_to_json_dict(graph), indent=2) + "\n"


def findings_to_json(findings: list[Finding]) -> str:
    payload = [
        {
            "code": f.code.value,
            "severity": f.severity,
            "subjects": [str(s) for s in f.subjects],
            "message": f.message,
        }
        for f in findings
    ]
    return json.dumps(payload, indent=2) + "\n"
