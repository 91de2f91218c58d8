"""GitHub access layer: webhook event decoding plus issue/PR read-write.

Two interchangeable backends sit behind one small interface: a live
REST client and an in-memory fixture store that can be loaded from a
snapshot directory (``issues/NNN.json``, ``pulls/NNN.json``).  All tests
run against fixtures; the live client is exercised through an injected
transport.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Protocol

import requests

logger = logging.getLogger(__name__)

_NAME_OK = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789._-")

CONSUMED_ISSUE_ACTIONS = ("opened", "edited", "closed", "reopened", "labeled", "unlabeled")
CONSUMED_PR_ACTIONS = ("opened", "edited", "closed", "synchronize")


class GatewayError(Exception):
    """Base for all gateway failures."""


class NotFoundError(GatewayError):
    pass


class RateLimitedError(GatewayError):
    def __init__(self, reset_at: float):
        super().__init__(f"rate limited until {reset_at}")
        self.reset_at = reset_at


class TransportError(GatewayError):
    pass


class ConflictError(GatewayError):
    """The issue body changed between planning and applying a patch."""


class EventDecodeError(ValueError):
    """Payload JSON is malformed or lacks a required field."""


@dataclass(frozen=True)
class RepoCoordinates:
    owner: str
    name: str

    def __post_init__(self) -> None:
        for part in (self.owner, self.name):
            if not part or not set(part) <= _NAME_OK:
                raise ValueError(f"invalid repository coordinates: {self.owner!r}/{self.name!r}")

    @property
    def key(self) -> str:
        return f"{self.owner}/{self.name}"

    def __str__(self) -> str:
        return self.key

    @classmethod
    def parse(cls, text: str) -> "RepoCoordinates":
        owner, _, name = text.partition("/")
        return cls(owner=owner, name=name)


@dataclass
class IssueRecord:
    number: int
    title: str = ""
    body: str = ""
    labels: list[str] = field(default_factory=list)
    state: str = "open"  # open | closed


@dataclass
class PullRequestRecord:
    number: int
    title: str = ""
    body: str = ""
    state: str = "open"  # open | closed
    merged: bool = False
    changed_files: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.merged:
            self.state = "closed"


class EventKind(Enum):
    ISSUE = "issues"
    PULL_REQUEST = "pull_request"


@dataclass
class EventEnvelope:
    repo: RepoCoordinates
    kind: EventKind
    action: str
    issue: IssueRecord | None = None
    pull_request: PullRequestRecord | None = None
    # Previous body carried by "edited" deliveries; used to clean up a
    # former parent when a child is re-parented.
    changes_body_from: str | None = None

    def summary(self) -> str:
        number = self.issue.number if self.issue else self.pull_request.number
        return f"{self.kind.value}/{self.action} {self.repo}#{number}"


@dataclass
class PatchRequest:
    """A planned body update: applied only if the target still matches
    the body it was planned against."""

    repo: RepoCoordinates
    number: int
    new_body: str
    base_body: str
    reason: str


def _require(payload: dict, path: str):
    node = payload
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node or node[part] is None:
            raise EventDecodeError(f"payload field missing: {path}")
        node = node[part]
    return node


def _label_names(raw: Iterable) -> list[str]:
    names = []
    for entry in raw:
        names.append(entry["name"] if isinstance(entry, dict) else str(entry))
    return names


def _issue_from_payload(data: dict) -> IssueRecord:
    return IssueRecord(
        number=int(data["number"]),
        title=data.get("title") or "",
        body=data.get("body") or "",
        labels=_label_names(data.get("labels") or []),
        state=data.get("state") or "open",
    )


def _pull_from_payload(data: dict) -> PullRequestRecord:
    return PullRequestRecord(
        number=int(data["number"]),
        title=data.get("title") or "",
        body=data.get("body") or "",
        state=data.get("state") or "open",
        merged=bool(data.get("merged")),
    )


def decode_event(payload_text: str, event_name: str) -> EventEnvelope | None:
    """Normalize a webhook/Actions payload; None for event kinds we ignore."""
    if event_name not in (EventKind.ISSUE.value, EventKind.PULL_REQUEST.value):
        return None
    try:
        payload = json.loads(payload_text)
    except json.JSONDecodeError as exc:
        raise EventDecodeError(f"payload is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise EventDecodeError("payload is not a JSON object")

    action = _require(payload, "action")
    owner = _require(payload, "repository.owner.login")
    name = _require(payload, "repository.name")
    repo = RepoCoordinates(owner=owner, name=name)

    changes_from = None
    changes = payload.get("changes")
    if isinstance(changes, dict):
        body_change = changes.get("body")
        if isinstance(body_change, dict) and isinstance(body_change.get("from"), str):
            changes_from = body_change["from"]

    if event_name == EventKind.ISSUE.value:
        data = _require(payload, "issue")
        _require(payload, "issue.number")
        return EventEnvelope(
            repo=repo,
            kind=EventKind.ISSUE,
            action=action,
            issue=_issue_from_payload(data),
            changes_body_from=changes_from,
        )
    data = _require(payload, "pull_request")
    _require(payload, "pull_request.number")
    return EventEnvelope(
        repo=repo,
        kind=EventKind.PULL_REQUEST,
        action=action,
        pull_request=_pull_from_payload(data),
        changes_body_from=changes_from,
    )


def encode_event(env: EventEnvelope) -> tuple[str, str]:
    """Inverse of :func:`decode_event` for the consumed fields."""
    payload: dict = {
        "action": env.action,
        "repository": {
            "name": env.repo.name,
            "full_name": env.repo.key,
            "owner": {"login": env.repo.owner},
        },
    }
    if env.changes_body_from is not None:
        payload["changes"] = {"body": {"from": env.changes_body_from}}
    if env.kind is EventKind.ISSUE:
        issue = env.issue
        payload["issue"] = {
            "number": issue.number,
            "title": issue.title,
            "body": issue.body,
            "labels": [{"name": n} for n in issue.labels],
            "state": issue.state,
        }
    else:
        pr = env.pull_request
        payload["pull_request"] = {
            "number": pr.number,
            "title": pr.title,
            "body": pr.body,
            "state": pr.state,
            "merged": pr.merged,
        }
    return json.dumps(payload, sort_keys=True), env.kind.value


class Gateway(Protocol):
    def fetch_issue(self, repo: RepoCoordinates, number: int) -> IssueRecord: ...

    def update_issue_body(self, patch: PatchRequest) -> bool: ...

    def list_pr_feature_files(self, repo: RepoCoordinates, number: int) -> list[tuple[str, str]]: ...

    def list_issues(self, repo: RepoCoordinates) -> list[IssueRecord]: ...

    def list_pulls(self, repo: RepoCoordinates) -> list[PullRequestRecord]: ...


class FixtureGateway:
    """Deterministic in-memory backend; the test suite's only gateway.

    Keeps an operations log so tests can assert read-before-write
    behavior and patch counts.
    """

    def __init__(self) -> None:
        self._issues: dict[str, dict[int, IssueRecord]] = {}
        self._pulls: dict[str, dict[int, PullRequestRecord]] = {}
        self.operations: list[tuple] = []

    @classmethod
    def from_snapshot(cls, root: Path | str, repo: RepoCoordinates) -> "FixtureGateway":
        """Load ``issues/*.json`` and ``pulls/*.json`` under ``root``."""
        gw = cls()
        root = Path(root)
        for path in sorted((root / "issues").glob("*.json")):
            data = json.loads(path.read_text(encoding="utf-8"))
            gw.put_issue(repo, _issue_from_payload(data))
        for path in sorted((root / "pulls").glob("*.json")):
            data = json.loads(path.read_text(encoding="utf-8"))
            record = _pull_from_payload(data)
            record.changed_files = [(f["path"], f["content"]) for f in data.get("files", [])]
            gw.put_pull(repo, record)
        gw.operations.clear()
        return gw

    def put_issue(self, repo: RepoCoordinates, record: IssueRecord) -> None:
        self._issues.setdefault(repo.key, {})[record.number] = record

    def put_pull(self, repo: RepoCoordinates, record: PullRequestRecord) -> None:
        self._pulls.setdefault(repo.key, {})[record.number] = record

    def set_issue_body(self, repo: RepoCoordinates, number: int, body: str) -> None:
        """Out-of-band edit, used to script concurrent-modification tests."""
        self._issues[repo.key][number].body = body

    def apply_event(self, env: EventEnvelope) -> None:
        """Ingest the record carried by an event, as the platform would."""
        if env.kind is EventKind.ISSUE:
            self.put_issue(env.repo, replace(env.issue, labels=list(env.issue.labels)))
        else:
            existing = self._pulls.get(env.repo.key, {}).get(env.pull_request.number)
            files = list(existing.changed_files) if existing else []
            record = replace(env.pull_request, changed_files=files)
            self.put_pull(env.repo, record)

    def fetch_issue(self, repo: RepoCoordinates, number: int) -> IssueRecord:
        self.operations.append(("fetch_issue", repo.key, number))
        try:
            record = self._issues[repo.key][number]
        except KeyError:
            raise NotFoundError(f"issue {repo}#{number} not found") from None
        return replace(record, labels=list(record.labels))

    def update_issue_body(self, patch: PatchRequest) -> bool:
        current = self.fetch_issue(patch.repo, patch.number)
        if current.body == patch.new_body:
            return False
        if current.body != patch.base_body:
            raise ConflictError(f"issue {patch.repo}#{patch.number} changed since planning")
        self.operations.append(("update_issue_body", patch.repo.key, patch.number))
        self._issues[patch.repo.key][patch.number].body = patch.new_body
        logger.info("patched %s#%s: %s", patch.repo, patch.number, patch.reason)
        return True

    def list_pr_feature_files(self, repo: RepoCoordinates, number: int) -> list[tuple[str, str]]:
        self.operations.append(("list_pr_feature_files", repo.key, number))
        try:
            record = self._pulls[repo.key][number]
        except KeyError:
            raise NotFoundError(f"pull request {repo}#{number} not found") from None
        return sorted(
            ((p, c) for p, c in record.changed_files if p.endswith(".feature")),
            key=lambda pc: pc[0],
        )

    def list_issues(self, repo: RepoCoordinates) -> list[IssueRecord]:
        self.operations.append(("list_issues", repo.key))
        return [
            replace(r, labels=list(r.labels))
            for _, r in sorted(self._issues.get(repo.key, {}).items())
        ]

    def list_pulls(self, repo: RepoCoordinates) -> list[PullRequestRecord]:
        self.operations.append(("list_pulls", repo.key))
        return [
            replace(r, changed_files=list(r.changed_files))
            for _, r in sorted(self._pulls.get(repo.key, {}).items())
        ]


class RestGateway:
    """GitHub REST v3 backend.

    Token comes from ``GITHUB_TOKEN`` unless given; transient failures
    retry with bounded exponential backoff.  The HTTP session and sleep
    function are injectable so recorded fixtures can stand in for the
    network.
    """

    def __init__(
        self,
        token: str | None = None,
        base_url: str = "https://api.github.com",
        session: requests.Session | None = None,
        sleep=time.sleep,
        max_attempts: int = 3,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.session = session or requests.Session()
        self.sleep = sleep
        self.max_attempts = max_attempts
        token = token if token is not None else os.environ.get("GITHUB_TOKEN")
        self.headers = {
            "Accept": "application/vnd.github+json",
            "User-Agent": "tracegraph/0.1",
        }
        if token:
            self.headers["Authorization"] = f"Bearer {token}"

    def _request(self, method: str, path: str, **kwargs) -> requests.Response:
        url = path if path.startswith("http") else f"{self.base_url}{path}"
        last_exc: Exception | None = None
        for attempt in range(self.max_attempts):
            try:
                response = self.session.request(method, url, headers=self.headers, timeout=30, **kwargs)
            except requests.RequestException as exc:
                last_exc = exc
                self.sleep(0.5 * 2**attempt)
                continue
            if response.status_code >= 500:
                last_exc = TransportError(f"{method} {url} -> {response.status_code}")
                self.sleep(0.5 * 2**attempt)
                continue
            if response.status_code == 404:
                raise NotFoundError(f"{method} {url} -> 404")
            if response.status_code in (403, 429) and response.headers.get("X-RateLimit-Remaining") == "0":
                raise RateLimitedError(float(response.headers.get("X-RateLimit-Reset", "0")))
            if response.status_code >= 400:
                raise TransportError(f"{method} {url} -> {response.status_code}: {response.text[:200]}")
            return response
        raise TransportError(f"{method} {url} failed after {self.max_attempts} attempts: {last_exc}")

    def _paginate(self, path: str, params: dict) -> list[dict]:
        items: list[dict] = []
        page = 1
        while True:
            response = self._request("GET", path, params={**params, "per_page": 100, "page": page})
            batch = response.json()
            items.extend(batch)
            if len(batch) < 100:
                return items
            page += 1

    def fetch_issue(self, repo: RepoCoordinates, number: int) -> IssueRecord:
        data = self._request("GET", f"/repos/{repo.owner}/{repo.name}/issues/{number}").json()
        return _issue_from_payload(data)

    def update_issue_body(self, patch: PatchRequest) -> bool:
        current = self.fetch_issue(patch.repo, patch.number)
        if current.body == patch.new_body:
            return False
        if current.body != patch.base_body:
            raise ConflictError(f"issue {patch.repo}#{patch.number} changed since planning")
        self._request(
            "PATCH",
            f"/repos/{patch.repo.owner}/{patch.repo.name}/issues/{patch.number}",
            json={"body": patch.new_body},
        )
        logger.info("patched %s#%s: %s", patch.repo, patch.number, patch.reason)
        return True

    def list_pr_feature_files(self, repo: RepoCoordinates, number: int) -> list[tuple[str, str]]:
        files = self._paginate(f"/repos/{repo.owner}/{repo.name}/pulls/{number}/files", {})
        out: list[tuple[str, str]] = []
        for entry in files:
            path = entry.get("filename", "")
            if not path.endswith(".feature") or entry.get("status") not in ("added", "modified"):
                continue
            raw_url = entry.get("raw_url")
            if not raw_url:
                continue
            out.append((path, self._request("GET", raw_url).text))
        return sorted(out, key=lambda pc: pc[0])

    def list_issues(self, repo: RepoCoordinates) -> list[IssueRecord]:
        items = self._paginate(f"/repos/{repo.owner}/{repo.name}/issues", {"state": "all"})
        return [_issue_from_payload(d) for d in items if "pull_request" not in d]

    def list_pulls(self, repo: RepoCoordinates) -> list[PullRequestRecord]:
        items = self._paginate(f"/repos/{repo.owner}/{repo.name}/pulls", {"state": "all"})
        out = []
        for d in items:
            record = _pull_from_payload(d)
            record.merged = bool(d.get("merged_at")) or record.merged
            if record.merged:
                record.state = "closed"
            out.append(record)
        return out
