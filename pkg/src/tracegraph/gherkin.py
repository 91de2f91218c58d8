"""Gherkin feature file parsing and issue-tag extraction.

Scenarios link themselves to requirements with ``@issue-N`` tags; the
test level comes from a ``@level-...`` tag or, failing that, from the
first path segment under a configured test root (``unit/``,
``integration/``, ``system/``, ``acceptance/``).  Parsing is line-based
and total: any input yields a feature file, with oddities reported as
diagnostics.  Data tables and docstrings are treated as opaque.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import PurePosixPath

from tracegraph.diagnostics import Diagnostic

DEFAULT_TEST_ROOTS = ("features",)

_HEADER_RE = re.compile(r"^(Feature|Scenario Outline|Scenario|Examples)\s*:\s*(.*)$")
_STEP_RE = re.compile(r"^(Given|When|Then|And|But)\b\s*(.*)$")
_ISSUE_TAG_RE = re.compile(r"^@issue-(\d+)$")
_LEVEL_TAG_RE = re.compile(r"^@level-(.+)$", re.IGNORECASE)


class TestLevel(Enum):
    __test__ = False  # not a pytest class

    UNIT = "unit"
    INTEGRATION = "integration"
    SYSTEM = "system"
    ACCEPTANCE = "acceptance"
    UNSPECIFIED = "unspecified"


_LEVEL_NAMES = {level.value: level for level in TestLevel if level is not TestLevel.UNSPECIFIED}


@dataclass
class Step:
    keyword: str
    text: str


@dataclass
class Scenario:
    name: str
    tags: list[str] = field(default_factory=list)
    steps: list[Step] = field(default_factory=list)
    outline: bool = False


@dataclass
class FeatureFile:
    path: str
    feature_name: str = ""
    scenarios: list[Scenario] = field(default_factory=list)
    diagnostics: list[Diagnostic] = field(default_factory=list)


@dataclass(frozen=True)
class TestCaseRef:
    """A scenario that names at least one requirement."""

    __test__ = False  # not a pytest class

    path: str
    scenario: str
    issue_links: tuple[int, ...]
    level: TestLevel


def parse_feature(text: str, path: str) -> FeatureFile:
    """Parse one feature file; never fails.

    A missing Feature header is tolerated, scenario outlines count once
    (example rows are not expanded), and duplicate scenario names keep
    the first occurrence.
    """
    feature = FeatureFile(path=path)
    pending_tags: list[str] = []
    current: Scenario | None = None
    seen_names: set[str] = set()
    in_docstring = False

    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith('"""') or line.startswith("```"):
            in_docstring = not in_docstring
            continue
        if in_docstring or not line or line.startswith("#") or line.startswith("|"):
            continue

        if line.startswith("@"):
            tokens = line.split()
            for token in tokens:
                if not token.startswith("@"):
                    feature.diagnostics.append(
                        Diagnostic("invalid-tag", f"{path}: tag line token {token!r} does not start with '@'")
                    )
            pending_tags.extend(t for t in tokens if t.startswith("@"))
            continue

        header = _HEADER_RE.match(line)
        if header:
            keyword, title = header.group(1), header.group(2).strip()
            if keyword == "Feature":
                if feature.feature_name:
                    feature.diagnostics.append(
                        Diagnostic("duplicate-feature-header", f"{path}: extra Feature header ignored")
                    )
                else:
                    feature.feature_name = title
                pending_tags = []
                continue
            if keyword in ("Scenario", "Scenario Outline"):
                current = Scenario(name=title, tags=pending_tags, outline=keyword == "Scenario Outline")
                pending_tags = []
                if title in seen_names:
                    feature.diagnostics.append(
                        Diagnostic("duplicate-scenario", f"{path}: duplicate scenario name {title!r}; first kept")
                    )
                    current = None
                    continue
                seen_names.add(title)
                feature.scenarios.append(current)
                continue
            if keyword == "Examples":
                continue

        if current is None:
            continue  # description text before any scenario
        step = _STEP_RE.match(line)
        if step:
            current.steps.append(Step(keyword=step.group(1), text=step.group(2)))
        else:
            current.steps.append(Step(keyword="", text=line))

    return feature


def extract_issue_tags(scenario: Scenario, diagnostics: list[Diagnostic] | None = None) -> list[int]:
    """Issue numbers from ``@issue-N`` tags, deduplicated and ascending."""
    numbers: set[int] = set()
    for tag in scenario.tags:
        m = _ISSUE_TAG_RE.match(tag)
        if m:
            number = int(m.group(1))
            if number >= 1:
                numbers.add(number)
            elif diagnostics is not None:
                diagnostics.append(
                    Diagnostic("invalid-issue-tag", f"tag {tag!r} must reference a positive issue number")
                )
        elif tag.startswith("@issue-") and diagnostics is not None:
            diagnostics.append(Diagnostic("invalid-issue-tag", f"tag {tag!r} has a non-numeric suffix"))
    return sorted(numbers)


def extract_level(
    scenario: Scenario,
    path: str,
    test_roots: tuple[str, ...] | list[str] = DEFAULT_TEST_ROOTS,
    diagnostics: list[Diagnostic] | None = None,
) -> TestLevel:
    """Test level from a ``@level-...`` tag, else from the path, else unspecified."""
    found: TestLevel | None = None
    for tag in scenario.tags:
        m = _LEVEL_TAG_RE.match(tag)
        if not m:
            continue
        level = _LEVEL_NAMES.get(m.group(1).casefold())
        if level is None:
            if diagnostics is not None:
                diagnostics.append(Diagnostic("invalid-level-tag", f"tag {tag!r} names an unknown level"))
            continue
        if found is None:
            found = level
        elif level is not found and diagnostics is not None:
            diagnostics.append(
                Diagnostic(
                    "conflicting-level-tags",
                    f"scenario {scenario.name!r} carries conflicting level tags; {found.value} wins",
                )
            )
    if found is not None:
        return found

    parts = PurePosixPath(path).parts
    roots = {r.strip("/") for r in test_roots}
    for i, part in enumerate(parts[:-1]):
        if part in roots and i + 1 < len(parts):
            level = _LEVEL_NAMES.get(parts[i + 1].casefold())
            if level is not None:
                return level
            break
    return TestLevel.UNSPECIFIED


def collect_test_cases(
    files: list[FeatureFile],
    test_roots: tuple[str, ...] | list[str] = DEFAULT_TEST_ROOTS,
    diagnostics: list[Diagnostic] | None = None,
) -> list[TestCaseRef]:
    """One ref per scenario carrying at least one issue link.

    Ordered by file path, then scenario position within the file.
    """
    refs: list[TestCaseRef] = []
    for feature in sorted(files, key=lambda f: f.path):
        for scenario in feature.scenarios:
            links = extract_issue_tags(scenario, diagnostics)
            if not links:
                continue
            refs.append(
                TestCaseRef(
                    path=feature.path,
                    scenario=scenario.name,
                    issue_links=tuple(links),
                    level=extract_level(scenario, feature.path, test_roots, diagnostics),
                )
            )
    return refs
