"""Build a trace graph from a repository snapshot and report on it.

Issues become typed artifacts via their labels, pull requests become
change requests via their resolve links, and feature files contribute
test cases.  The resulting findings, graph export, and traceability
matrix are deterministic: the same snapshot always produces byte
identical reports.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

from tracegraph.config import Config
from tracegraph.docmodel import extract_parent, extract_resolve_links, parse_issue_body
from tracegraph.gateway import Gateway, IssueRecord, PullRequestRecord, RepoCoordinates
from tracegraph.gherkin import FeatureFile, TestLevel, collect_test_cases, parse_feature
from tracegraph.graph import (
    ArtifactKind,
    ArtifactNode,
    ArtifactState,
    Finding,
    FindingCode,
    IssueId,
    MatrixRow,
    RelationKind,
    TestId,
    TraceEdge,
    TraceGraph,
    classify,
    coverage_check,
    matrix_to_csv,
    matrix_to_markdown,
    trace_matrix,
    validate_graph,
    findings_to_json,
    graph_to_json,
)

logger = logging.getLogger(__name__)


@dataclass
class LintResult:
    graph: TraceGraph
    findings: list[Finding]
    matrix: list[MatrixRow]

    @property
    def error_count(self) -> int:
        return sum(1 for f in self.findings if f.severity == "error")


def load_snapshot_features(root: Path | str, test_roots: list[str]) -> list[FeatureFile]:
    """Parse every ``.feature`` file under the configured test roots."""
    root = Path(root)
    features = []
    for test_root in test_roots:
        base = root / test_root
        if not base.is_dir():
            continue
        for path in sorted(base.rglob("*.feature")):
            rel = path.relative_to(root).as_posix()
            features.append(parse_feature(path.read_text(encoding="utf-8"), rel))
    return features


def _issue_state(record: IssueRecord) -> ArtifactState:
    return ArtifactState.CLOSED if record.state == "closed" else ArtifactState.OPEN


def _pull_state(record: PullRequestRecord) -> ArtifactState:
    if record.merged:
        return ArtifactState.MERGED
    return ArtifactState.CLOSED if record.state == "closed" else ArtifactState.OPEN


def build_graph(
    repo: RepoCoordinates,
    issues: list[IssueRecord],
    pulls: list[PullRequestRecord],
    features: list[FeatureFile],
    config: Config,
) -> tuple[TraceGraph, list[Finding]]:
    """Assemble the graph; link problems surface as findings, not errors."""
    graph = TraceGraph()
    findings: list[Finding] = []

    def issue_id(number: int, ref_repo: str | None = None) -> IssueId:
        return IssueId(repo=(ref_repo or repo.key), number=number)

    for record in issues:
        graph.add_artifact(
            ArtifactNode(
                id=issue_id(record.number),
                kind=classify(record.labels, config.label_map),
                title=record.title,
                state=_issue_state(record),
                labels=list(record.labels),
            )
        )
    for record in pulls:
        graph.add_artifact(
            ArtifactNode(
                id=issue_id(record.number),
                kind=ArtifactKind.CHANGE_REQUEST,
                title=record.title,
                state=_pull_state(record),
            )
        )

    def dangling(source, target) -> None:
        findings.append(
            Finding(
                FindingCode.DANGLING_REF,
                (source,),
                f"{source} links to {target}, which is not in this snapshot",
            )
        )

    for record in issues:
        parent = extract_parent(parse_issue_body(record.body, config.managed_section_heading))
        if parent is None:
            continue
        child = issue_id(record.number)
        target = issue_id(parent.number, parent.repo)
        if target not in graph.nodes:
            dangling(child, target)
            continue
        graph.add_relation(TraceEdge(source=child, target=target, kind=RelationKind.PART_OF))

    for record in pulls:
        source = issue_id(record.number)
        for link in extract_resolve_links(record.body):
            target = issue_id(link.number, link.repo)
            if target not in graph.nodes:
                dangling(source, target)
                continue
            graph.add_relation(TraceEdge(source=source, target=target, kind=RelationKind.RESOLVES))

    for case in collect_test_cases(features, config.test_roots):
        test_id = TestId(path=case.path, scenario=case.scenario)
        graph.add_artifact(
            ArtifactNode(
                id=test_id,
                kind=ArtifactKind.TEST_CASE,
                title=case.scenario,
                state=ArtifactState.NOT_APPLICABLE,
            )
        )
        for number in case.issue_links:
            target = issue_id(number)
            if target not in graph.nodes:
                dangling(test_id, target)
                continue
            if graph.nodes[target].kind is ArtifactKind.USER_NEED:
                if case.level is TestLevel.ACCEPTANCE:
                    kind = RelationKind.VALIDATES
                else:
                    kind = RelationKind.VERIFIES
                    logger.warning(
                        "%s targets a user need but is not acceptance-level; linked as verification",
                        test_id,
                    )
            else:
                kind = RelationKind.VERIFIES
            graph.add_relation(TraceEdge(source=test_id, target=target, kind=kind))

    return graph, sorted(findings, key=Finding.sort_key)


def lint_graph(graph: TraceGraph, builder_findings: list[Finding], config: Config) -> LintResult:
    """Validation plus coverage; coverage runs only on acyclic graphs."""
    findings = list(builder_findings)
    structural = validate_graph(graph, allow_level_skip=config.allow_level_skip)
    findings.extend(structural)
    if not any(f.code is FindingCode.CYCLE for f in structural):
        findings.extend(coverage_check(graph))
    return LintResult(
        graph=graph,
        findings=sorted(findings, key=Finding.sort_key),
        matrix=trace_matrix(graph),
    )


def lint_snapshot(root: Path | str, config: Config) -> LintResult:
    """Lint an offline snapshot directory.

    Layout: ``issues/NNN.json``, ``pulls/NNN.json``, and the working
    tree of feature files under the configured test roots.
    """
    from tracegraph.gateway import FixtureGateway

    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"snapshot directory not found: {root}")
    repo = config.repo or RepoCoordinates("local", "snapshot")
    gw = FixtureGateway.from_snapshot(root, repo)
    features = load_snapshot_features(root, config.test_roots)
    graph, findings = build_graph(repo, gw.list_issues(repo), gw.list_pulls(repo), features, config)
    return lint_graph(graph, findings, config)


def lint_live(gateway: Gateway, worktree: Path | str, config: Config) -> LintResult:
    """Lint a live repository, reading feature files from a local worktree."""
    if config.repo is None:
        raise ValueError("a repository must be configured for live linting")
    features = load_snapshot_features(worktree, config.test_roots)
    graph, findings = build_graph(
        config.repo,
        gateway.list_issues(config.repo),
        gateway.list_pulls(config.repo),
        features,
        config,
    )
    return lint_graph(graph, findings, config)


def findings_to_text(findings: list[Finding]) -> str:
    if not findings:
        return "no findings\n"
    return "".join(f"{f.severity}: {f}\n" for f in findings)


def write_reports(result: LintResult, out_dir: Path | str, home_repo: str | None) -> list[Path]:
    """Write findings.json, graph.json, matrix.csv, matrix.md; returns paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "findings.json": findings_to_json(result.findings),
        "graph.json": graph_to_json(result.graph),
        "matrix.csv": matrix_to_csv(result.matrix, result.graph, home_repo),
        "matrix.md": matrix_to_markdown(result.matrix, result.graph, home_repo),
    }
    written = []
    for name, content in files.items():
        path = out / name
        path.write_text(content, encoding="utf-8")
        written.append(path)
    return written
