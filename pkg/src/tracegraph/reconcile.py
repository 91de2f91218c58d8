"""Event-driven reconciliation of managed traceability sections.

An issue event syncs the parent's sub-requirement checklist (the
checklist stored in the parent body is itself the child registry); a
pull-request event syncs the resolved issues' change-request and
test-case entries.  Plans are minimal and idempotent: a patch is only
emitted when the recomputed body differs, and replaying an event against
the store it produced plans zero patches.

Every applied patch is recorded in an append-only JSON-lines audit log.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from tracegraph.diagnostics import Diagnostic
from tracegraph.docmodel import (
    DEFAULT_MANAGED_HEADING,
    ChecklistItem,
    IssueRef,
    TestCaseEntry,
    TraceabilitySection,
    extract_parent,
    extract_resolve_links,
    parse_issue_body,
    upsert_traceability_section,
)
from tracegraph.gateway import (
    ConflictError,
    EventEnvelope,
    EventKind,
    Gateway,
    NotFoundError,
    PatchRequest,
    RepoCoordinates,
)
from tracegraph.gherkin import collect_test_cases, parse_feature

logger = logging.getLogger(__name__)

DEFAULT_MAX_REPLANS = 5


class ReconcileError(RuntimeError):
    """Reconciliation failed to converge within the replan budget."""


@dataclass
class ReconcilePlan:
    trigger: str
    patches: list[PatchRequest] = field(default_factory=list)
    diagnostics: list[Diagnostic] = field(default_factory=list)


@dataclass
class ReconcileOutcome:
    trigger: str
    applied: list[PatchRequest]
    diagnostics: list[Diagnostic]
    replans: int


class AuditLog:
    """Append-only JSON-lines trail, one record per applied patch."""

    def __init__(self, path: Path | str) -> None:
        self.path = Path(path)

    def record(self, patch: PatchRequest, trigger: str) -> None:
        entry = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "repo": patch.repo.key,
            "issue": patch.number,
            "reason": patch.reason,
            "trigger_event": trigger,
            "body_hash_before": _sha256(patch.base_body),
            "body_hash_after": _sha256(patch.new_body),
        }
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry) + "\n")


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _same_repo(a: RepoCoordinates, b: RepoCoordinates) -> bool:
    return a.key.lower() == b.key.lower()


def _resolve_repo(ref: IssueRef, default: RepoCoordinates) -> RepoCoordinates:
    return RepoCoordinates.parse(ref.repo) if ref.repo else default


def _ref_from(repo: RepoCoordinates, number: int, viewpoint: RepoCoordinates) -> IssueRef:
    """A reference to ``repo#number`` as written inside ``viewpoint``."""
    return IssueRef(number=number, repo=None if _same_repo(repo, viewpoint) else repo.key)


def _names_parent(
    child_parent: IssueRef | None,
    child_repo: RepoCoordinates,
    parent_repo: RepoCoordinates,
    parent_number: int,
) -> bool:
    if child_parent is None or child_parent.number != parent_number:
        return False
    return _same_repo(_resolve_repo(child_parent, child_repo), parent_repo)


def _refresh_children(
    parent_repo: RepoCoordinates,
    parent_number: int,
    stored: TraceabilitySection,
    trigger_child: IssueRef | None,
    gw: Gateway,
    heading: str,
    diagnostics: list[Diagnostic],
) -> list[ChecklistItem]:
    """Recompute the parent's checklist from current child state.

    Children are the stored checklist entries plus the triggering child.
    Each is re-fetched: titles refresh, the checkbox mirrors the child's
    open/closed state, and entries whose issue is gone or no longer
    names this parent drop out.
    """
    refs: dict[tuple[int, str], IssueRef] = {}
    for item in stored.related_issues:
        refs.setdefault(item.ref.key(), item.ref)
    if trigger_child is not None:
        refs.setdefault(trigger_child.key(), trigger_child)

    items: list[ChecklistItem] = []
    for key in sorted(refs):
        ref = refs[key]
        child_repo = _resolve_repo(ref, parent_repo)
        try:
            child = gw.fetch_issue(child_repo, ref.number)
        except NotFoundError:
            diagnostics.append(
                Diagnostic("dangling-ref", f"checklist entry {child_repo}#{ref.number} does not exist; dropped")
            )
            continue
        child_parent = extract_parent(parse_issue_body(child.body, managed_heading=heading))
        if not _names_parent(child_parent, child_repo, parent_repo, parent_number):
            continue
        items.append(ChecklistItem(checked=child.state == "closed", title=child.title, ref=ref))
    return items


def _sync_parent(
    parent_repo: RepoCoordinates,
    parent_number: int,
    trigger_child: IssueRef | None,
    gw: Gateway,
    heading: str,
    plan: ReconcilePlan,
) -> None:
    try:
        parent = gw.fetch_issue(parent_repo, parent_number)
    except NotFoundError:
        plan.diagnostics.append(
            Diagnostic("dangling-ref", f"parent {parent_repo}#{parent_number} does not exist")
        )
        return
    stored = parse_issue_body(parent.body, managed_heading=heading).traceability or TraceabilitySection()
    items = _refresh_children(
        parent_repo, parent_number, stored, trigger_child, gw, heading, plan.diagnostics
    )
    new_ts = TraceabilitySection(
        related_issues=items,
        resolving_change=stored.resolving_change,
        test_cases=stored.test_cases,
    )
    new_body = upsert_traceability_section(parent.body, new_ts, managed_heading=heading)
    if new_body != parent.body:
        plan.patches.append(
            PatchRequest(
                repo=parent_repo,
                number=parent_number,
                new_body=new_body,
                base_body=parent.body,
                reason=f"sync sub-requirement checklist of {parent_repo}#{parent_number}",
            )
        )


def on_issue_event(
    env: EventEnvelope, gw: Gateway, heading: str = DEFAULT_MANAGED_HEADING
) -> ReconcilePlan:
    """Plan for an issue event: update the parent named by the issue's
    metadata, and clean up a former parent after a re-parenting edit.
    """
    plan = ReconcilePlan(trigger=env.summary())
    issue = env.issue
    parsed = parse_issue_body(issue.body, managed_heading=heading)
    plan.diagnostics.extend(parsed.diagnostics)

    targets: list[tuple[RepoCoordinates, int, IssueRef | None]] = []
    parent_ref = extract_parent(parsed)
    if parent_ref is not None:
        parent_repo = _resolve_repo(parent_ref, env.repo)
        child_ref = _ref_from(env.repo, issue.number, parent_repo)
        targets.append((parent_repo, parent_ref.number, child_ref))

    if env.changes_body_from is not None:
        former = extract_parent(parse_issue_body(env.changes_body_from, managed_heading=heading))
        if former is not None:
            former_repo = _resolve_repo(former, env.repo)
            already = any(
                _same_repo(repo, former_repo) and number == former.number
                for repo, number, _ in targets
            )
            if not already:
                targets.append((former_repo, former.number, None))

    for parent_repo, parent_number, trigger_child in targets:
        _sync_parent(parent_repo, parent_number, trigger_child, gw, heading, plan)
    return plan


def on_pull_request_event(
    env: EventEnvelope, gw: Gateway, heading: str = DEFAULT_MANAGED_HEADING
) -> ReconcilePlan:
    """Plan for a pull-request event: stamp each resolved issue with the
    change request and the test cases its feature files link to it.
    """
    plan = ReconcilePlan(trigger=env.summary())
    pr = env.pull_request
    links = extract_resolve_links(pr.body)
    if not links:
        plan.diagnostics.append(
            Diagnostic(
                "unlinked-change-request",
                f"pull request {env.repo}#{pr.number} names no issue it resolves",
            )
        )
        return plan

    try:
        files = gw.list_pr_feature_files(env.repo, pr.number)
    except NotFoundError:
        plan.diagnostics.append(
            Diagnostic("dangling-ref", f"pull request {env.repo}#{pr.number} does not exist")
        )
        return plan
    features = [parse_feature(text, path) for path, text in files]
    cases = collect_test_cases(features)

    for ref in links:
        target_repo = _resolve_repo(ref, env.repo)
        try:
            issue = gw.fetch_issue(target_repo, ref.number)
        except NotFoundError:
            plan.diagnostics.append(
                Diagnostic("dangling-ref", f"resolved issue {target_repo}#{ref.number} does not exist")
            )
            continue
        stored = parse_issue_body(issue.body, managed_heading=heading).traceability or TraceabilitySection()
        items = _refresh_children(
            target_repo, ref.number, stored, None, gw, heading, plan.diagnostics
        )
        # @issue-N tags are same-repository numbers; a cross-repository
        # resolve keeps its change-request link but matches no tags.
        if _same_repo(target_repo, env.repo):
            matched = [TestCaseEntry(name=c.scenario, path=c.path) for c in cases if ref.number in c.issue_links]
        else:
            matched = []
        new_ts = TraceabilitySection(
            related_issues=items,
            resolving_change=_ref_from(env.repo, pr.number, target_repo),
            test_cases=matched,
        )
        new_body = upsert_traceability_section(issue.body, new_ts, managed_heading=heading)
        if new_body != issue.body:
            plan.patches.append(
                PatchRequest(
                    repo=target_repo,
                    number=ref.number,
                    new_body=new_body,
                    base_body=issue.body,
                    reason=f"link change request {env.repo}#{pr.number} and its test cases",
                )
            )
    return plan


def plan_event(env: EventEnvelope, gw: Gateway, heading: str = DEFAULT_MANAGED_HEADING) -> ReconcilePlan:
    if env.kind is EventKind.ISSUE:
        return on_issue_event(env, gw, heading)
    return on_pull_request_event(env, gw, heading)


def apply_plan(plan: ReconcilePlan, gw: Gateway, audit: AuditLog | None = None) -> list[PatchRequest]:
    """Apply a plan's patches; returns those actually written."""
    applied = []
    for patch in plan.patches:
        if gw.update_issue_body(patch):
            applied.append(patch)
            if audit is not None:
                audit.record(patch, plan.trigger)
    return applied


def reconcile_event(
    env: EventEnvelope,
    gw: Gateway,
    audit: AuditLog | None = None,
    heading: str = DEFAULT_MANAGED_HEADING,
    max_replans: int = DEFAULT_MAX_REPLANS,
) -> ReconcileOutcome:
    """Plan and apply until the event is fully absorbed.

    Replans after a concurrent-edit conflict; terminates when a plan
    yields zero patches, which the idempotent planner guarantees after
    a successful apply.
    """
    applied: list[PatchRequest] = []
    for attempt in range(max_replans + 1):
        plan = plan_event(env, gw, heading)
        if not plan.patches:
            return ReconcileOutcome(
                trigger=plan.trigger, applied=applied, diagnostics=plan.diagnostics, replans=attempt
            )
        try:
            applied.extend(apply_plan(plan, gw, audit))
        except ConflictError:
            logger.warning("conflict while applying %s; replanning", plan.trigger)
            continue
    raise ReconcileError(f"{env.summary()} did not converge after {max_replans} replans")


def plan_to_convergence(
    events: list[EventEnvelope],
    gw,
    audit: AuditLog | None = None,
    heading: str = DEFAULT_MANAGED_HEADING,
    max_replans: int = DEFAULT_MAX_REPLANS,
):
    """Replay events in order against a fixture store and return it.

    Each event is first ingested (the store mirrors what the platform
    would already have persisted) and then reconciled to quiescence.
    """
    for env in events:
        gw.apply_event(env)
        reconcile_event(env, gw, audit=audit, heading=heading, max_replans=max_replans)
    return gw
