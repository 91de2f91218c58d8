"""Command-line entry points.

Exit codes are a stable contract: 0 clean, 1 findings at error
severity, 2 input or decode problems, 3 apply failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from tracegraph.config import Config, ConfigError, load_config
from tracegraph.gateway import (
    EventDecodeError,
    EventEnvelope,
    EventKind,
    FixtureGateway,
    Gateway,
    GatewayError,
    RepoCoordinates,
    RestGateway,
    decode_event,
)
from tracegraph.graph import findings_to_json, graph_to_json, matrix_to_csv, matrix_to_markdown
from tracegraph.lint import LintResult, findings_to_text, lint_live, lint_snapshot, write_reports
from tracegraph.reconcile import (
    AuditLog,
    ReconcileError,
    ReconcileOutcome,
    plan_event,
    reconcile_event,
)
from tracegraph.server import WebhookServer

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_INPUT = 2
EXIT_APPLY = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tracegraph",
        description="Requirements traceability over GitHub issues, pull requests, and Gherkin tests.",
    )
    parser.add_argument("--config", help="configuration file (default: .tracegraph.yaml|json)")
    parser.add_argument("--repo", help="owner/name, overrides the configured repository")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_source(p: argparse.ArgumentParser) -> None:
        p.add_argument("--snapshot", help="offline snapshot directory (issues/, pulls/, feature tree)")
        p.add_argument("--worktree", default=".", help="feature-file tree for live mode (default: .)")

    p = sub.add_parser("lint", help="validate the trace graph and report findings")
    add_source(p)
    p.add_argument("--out", help="directory for findings.json, graph.json, matrix.csv, matrix.md")
    p.add_argument("--format", choices=("text", "json", "csv", "md"), default="text")

    p = sub.add_parser("matrix", help="print the traceability matrix")
    add_source(p)
    p.add_argument("--format", choices=("md", "csv"), default="md")

    p = sub.add_parser("graph", help="print the trace graph")
    add_source(p)
    p.add_argument("--format", choices=("json",), default="json")

    p = sub.add_parser("act", help="one-shot mode for a CI event (GITHUB_EVENT_NAME/GITHUB_EVENT_PATH)")
    p.add_argument("--snapshot", help="apply against an offline snapshot instead of the live API")
    p.add_argument("--dry-run", action="store_true", help="plan only, apply nothing")
    p.add_argument("--audit-log", default="tracegraph-audit.jsonl", help="audit trail path")
    p.add_argument("--no-audit", action="store_true", help="disable the audit trail")

    p = sub.add_parser("serve", help="webhook service (WEBHOOK_SECRET, GITHUB_TOKEN)")
    p.add_argument("--port", type=int, default=8040)
    p.add_argument("--host", default="0.0.0.0")
    p.add_argument("--audit-log", default="tracegraph-audit.jsonl")
    p.add_argument("--no-audit", action="store_true")

    p = sub.add_parser("resync", help="reconcile every issue and pull request once")
    p.add_argument("--snapshot", help="offline snapshot directory")
    p.add_argument("--dry-run", action="store_true")
    p.add_argument("--audit-log", default="tracegraph-audit.jsonl")
    p.add_argument("--no-audit", action="store_true")

    return parser


def _load_cli_config(args) -> Config:
    config = load_config(args.config)
    if args.repo:
        config.repo = RepoCoordinates.parse(args.repo)
    return config


def _lint_result(args, config: Config) -> LintResult:
    if args.snapshot:
        return lint_snapshot(args.snapshot, config)
    return lint_live(RestGateway(), args.worktree, config)


def _audit(args) -> AuditLog | None:
    if getattr(args, "no_audit", False):
        return None
    return AuditLog(args.audit_log)


def _print_outcome(outcome: ReconcileOutcome) -> None:
    for diag in outcome.diagnostics:
        print(f"note: {diag}")
    if not outcome.applied:
        print(f"{outcome.trigger}: nothing to change")
    for patch in outcome.applied:
        print(f"{outcome.trigger}: patched {patch.repo}#{patch.number} ({patch.reason})")


def _cmd_lint(args, config: Config) -> int:
    result = _lint_result(args, config)
    home = config.repo.key if config.repo else None
    if args.format == "json":
        sys.stdout.write(findings_to_json(result.findings))
    elif args.format == "csv":
        sys.stdout.write(matrix_to_csv(result.matrix, result.graph, home))
    elif args.format == "md":
        sys.stdout.write(matrix_to_markdown(result.matrix, result.graph, home))
    else:
        sys.stdout.write(findings_to_text(result.findings))
        print(f"{len(result.matrix)} matrix row(s); {result.error_count} error finding(s)")
    if args.out:
        for path in write_reports(result, args.out, home):
            logger.info("wrote %s", path)
    return EXIT_FINDINGS if result.error_count else EXIT_OK


def _cmd_matrix(args, config: Config) -> int:
    result = _lint_result(args, config)
    home = config.repo.key if config.repo else None
    render = matrix_to_csv if args.format == "csv" else matrix_to_markdown
    sys.stdout.write(render(result.matrix, result.graph, home))
    return EXIT_OK


def _cmd_graph(args, config: Config) -> int:
    result = _lint_result(args, config)
    sys.stdout.write(graph_to_json(result.graph))
    return EXIT_OK


def _event_from_env(environ) -> EventEnvelope | None:
    event_name = environ.get("GITHUB_EVENT_NAME")
    event_path = environ.get("GITHUB_EVENT_PATH")
    if not event_name or not event_path:
        raise EventDecodeError("GITHUB_EVENT_NAME and GITHUB_EVENT_PATH must be set")
    payload = Path(event_path).read_text(encoding="utf-8")
    return decode_event(payload, event_name)


def _cmd_act(args, config: Config, gateway: Gateway | None = None, environ=None) -> int:
    environ = environ if environ is not None else os.environ
    try:
        env = _event_from_env(environ)
    except (EventDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if env is None:
        print(f"event ignored: {environ.get('GITHUB_EVENT_NAME')}")
        return EXIT_OK

    if gateway is None:
        if args.snapshot:
            gateway = FixtureGateway.from_snapshot(args.snapshot, env.repo)
        else:
            gateway = RestGateway()
    if isinstance(gateway, FixtureGateway):
        gateway.apply_event(env)

    heading = config.managed_section_heading
    if args.dry_run:
        plan = plan_event(env, gateway, heading)
        for diag in plan.diagnostics:
            print(f"note: {diag}")
        for patch in plan.patches:
            print(f"{plan.trigger}: would patch {patch.repo}#{patch.number} ({patch.reason})")
        if not plan.patches:
            print(f"{plan.trigger}: nothing to change")
        return EXIT_OK
    try:
        outcome = reconcile_event(env, gateway, audit=_audit(args), heading=heading)
    except (ReconcileError, GatewayError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_APPLY
    _print_outcome(outcome)
    return EXIT_OK


def _synthetic_events(gateway: Gateway, repo: RepoCoordinates) -> list[EventEnvelope]:
    events = [
        EventEnvelope(repo=repo, kind=EventKind.ISSUE, action="edited", issue=record)
        for record in gateway.list_issues(repo)
    ]
    events += [
        EventEnvelope(repo=repo, kind=EventKind.PULL_REQUEST, action="edited", pull_request=record)
        for record in gateway.list_pulls(repo)
    ]
    return events


def _cmd_resync(args, config: Config, gateway: Gateway | None = None) -> int:
    if config.repo is None and not args.snapshot:
        print("error: a repository must be configured for live resync", file=sys.stderr)
        return EXIT_INPUT
    repo = config.repo or RepoCoordinates("local", "snapshot")
    if gateway is None:
        gateway = FixtureGateway.from_snapshot(args.snapshot, repo) if args.snapshot else RestGateway()

    heading = config.managed_section_heading
    audit = None if args.dry_run else _audit(args)
    total = 0
    try:
        for env in _synthetic_events(gateway, repo):
            if args.dry_run:
                plan = plan_event(env, gateway, heading)
                for patch in plan.patches:
                    print(f"{plan.trigger}: would patch {patch.repo}#{patch.number}")
                total += len(plan.patches)
            else:
                outcome = reconcile_event(env, gateway, audit=audit, heading=heading)
                for patch in outcome.applied:
                    print(f"{outcome.trigger}: patched {patch.repo}#{patch.number}")
                total += len(outcome.applied)
    except (ReconcileError, GatewayError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_APPLY
    print(f"resync complete: {total} patch(es)")
    return EXIT_OK


def _cmd_serve(args, config: Config, gateway: Gateway | None = None) -> int:
    secret = os.environ.get("WEBHOOK_SECRET")
    if not secret:
        print("error: WEBHOOK_SECRET must be set", file=sys.stderr)
        return EXIT_INPUT
    if gateway is None and not os.environ.get("GITHUB_TOKEN"):
        print("error: GITHUB_TOKEN must be set", file=sys.stderr)
        return EXIT_INPUT
    gateway = gateway or RestGateway()
    server = WebhookServer(
        gateway,
        secret,
        host=args.host,
        port=args.port,
        audit=_audit(args),
        heading=config.managed_section_heading,
    )
    print(f"listening on {args.host}:{server.port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.stop()
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        config = _load_cli_config(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    handlers = {
        "lint": _cmd_lint,
        "matrix": _cmd_matrix,
        "graph": _cmd_graph,
        "act": _cmd_act,
        "serve": _cmd_serve,
        "resync": _cmd_resync,
    }
    try:
        return handlers[args.command](args, config)
    except (GatewayError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
