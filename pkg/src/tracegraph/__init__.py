"""GitHub-native requirements traceability.

Parses the issue-body and Gherkin conventions that carry trace links,
maintains a validated trace graph with coverage checks, and reconciles
managed "Traceability" sections in response to issue and pull-request
events.
"""

from tracegraph.diagnostics import Diagnostic
from tracegraph.docmodel import (
    ChecklistItem,
    Frontmatter,
    FrontmatterPosition,
    IssueRef,
    ParsedBody,
    Section,
    TestCaseEntry,
    TraceabilitySection,
    extract_parent,
    extract_resolve_links,
    parse_issue_body,
    render_body,
    render_traceability_section,
    upsert_traceability_section,
)
from tracegraph.gateway import (
    EventEnvelope,
    EventKind,
    FixtureGateway,
    IssueRecord,
    PatchRequest,
    PullRequestRecord,
    RepoCoordinates,
    RestGateway,
    decode_event,
    encode_event,
)
from tracegraph.gherkin import (
    FeatureFile,
    Scenario,
    TestCaseRef,
    TestLevel,
    collect_test_cases,
    extract_issue_tags,
    extract_level,
    parse_feature,
)
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
    ancestors,
    classify,
    coverage_check,
    trace_matrix,
    validate_graph,
)
from tracegraph.reconcile import (
    AuditLog,
    ReconcileOutcome,
    ReconcilePlan,
    on_issue_event,
    on_pull_request_event,
    plan_event,
    plan_to_convergence,
    reconcile_event,
)

__version__ = "0.1.0"

__all__ = [
    "ArtifactKind",
    "ArtifactNode",
    "ArtifactState",
    "AuditLog",
    "ChecklistItem",
    "Diagnostic",
    "EventEnvelope",
    "EventKind",
    "FeatureFile",
    "Finding",
    "FindingCode",
    "FixtureGateway",
    "Frontmatter",
    "FrontmatterPosition",
    "IssueId",
    "IssueRecord",
    "IssueRef",
    "MatrixRow",
    "ParsedBody",
    "PatchRequest",
    "PullRequestRecord",
    "ReconcileOutcome",
    "ReconcilePlan",
    "RelationKind",
    "RepoCoordinates",
    "RestGateway",
    "Scenario",
    "Section",
    "TestCaseEntry",
    "TestCaseRef",
    "TestId",
    "TestLevel",
    "TraceEdge",
    "TraceGraph",
    "TraceabilitySection",
    "ancestors",
    "classify",
    "collect_test_cases",
    "coverage_check",
    "decode_event",
    "encode_event",
    "extract_issue_tags",
    "extract_level",
    "extract_parent",
    "extract_resolve_links",
    "on_issue_event",
    "on_pull_request_event",
    "parse_feature",
    "parse_issue_body",
    "plan_event",
    "plan_to_convergence",
    "reconcile_event",
    "render_body",
    "render_traceability_section",
    "trace_matrix",
    "upsert_traceability_section",
    "validate_graph",
]
