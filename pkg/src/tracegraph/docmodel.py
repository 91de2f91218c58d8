"""Issue and pull-request body conventions.

Issue bodies carry three machine-readable layers on top of ordinary
GitHub-flavored markdown:

* frontmatter metadata blocks delimited by ``---`` lines at the very
  beginning or the very end of the body, holding ``key: value`` entries
  (notably ``partOf``, which names the parent requirement),
* issue references (``#7`` or ``owner/repo#7``) anywhere outside code,
* a machine-owned ``## Traceability`` section listing sub-requirement
  checklists, the resolving change request, and linked test cases.

Parsing is total: any unicode input yields a ``ParsedBody``, with
problems reported as recoverable diagnostics.  ``upsert`` edits touch
only the managed section; every byte outside it is preserved, and
applying the same upsert twice equals applying it once.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from tracegraph.diagnostics import Diagnostic

DEFAULT_MANAGED_HEADING = "Traceability"

_NAME_CHARS = r"[A-Za-z0-9._-]+"
_REF_PATTERN = rf"(?:(?P<owner>{_NAME_CHARS})/(?P<name>{_NAME_CHARS}))?#(?P<number>[1-9][0-9]*)(?!\w)"

# A reference must not continue a word, another reference, an HTML
# entity, or a path-like token.
_REF_RE = re.compile(rf"(?<![\w./#&-]){_REF_PATTERN}")

_REF_VALUE_RE = re.compile(rf"^{_REF_PATTERN}$")

# GitHub's documented closing keywords, optionally followed by a colon.
_RESOLVE_RE = re.compile(
    rf"\b(?:close[sd]?|fix(?:e[sd])?|resolve[sd]?)\b:?[ \t]+{_REF_PATTERN}",
    re.IGNORECASE,
)

_META_RE = re.compile(r"^([A-Za-z0-9_][A-Za-z0-9_.-]*)\s*:\s*(.*)$")
_FENCE_RE = re.compile(r"^ {0,3}(`{3,}|~{3,})")
_H2_RE = re.compile(r"^ {0,3}##(?!#)(?:[ \t]+(.*?))?[ \t]*$")
_H3_RE = re.compile(r"^ {0,3}###(?!#)(?:[ \t]+(.*?))?[ \t]*$")
_CLOSING_HASHES_RE = re.compile(r"[ \t]+#+[ \t]*$")
_CODE_SPAN_RE = re.compile(r"(?<!`)(`+)(?!`)(.+?)(?<!`)\1(?!`)")

_CHECKLIST_RE = re.compile(rf"^[-*] \[( |x|X)\] (.+) \(({_NAME_CHARS}/{_NAME_CHARS})?#([1-9][0-9]*)\)\s*$")
_CHANGE_ITEM_RE = re.compile(rf"^[-*] (({_NAME_CHARS}/{_NAME_CHARS})?#([1-9][0-9]*))\s*$")
_TEST_ITEM_RE = re.compile(r"^[-*] (.+) \((.+)\)\s*$")


class FrontmatterPosition(Enum):
    LEADING = "leading"
    TRAILING = "trailing"
    NONE = "none"


@dataclass(frozen=True)
class IssueRef:
    """Reference to an issue or pull request.

    ``repo`` is an ``owner/name`` string, or None for "same repository
    as the containing document".
    """

    number: int
    repo: str | None = None

    def __post_init__(self) -> None:
        if self.number < 1:
            raise ValueError(f"issue number must be >= 1, got {self.number}")

    def __str__(self) -> str:
        return f"{self.repo}#{self.number}" if self.repo else f"#{self.number}"

    def key(self) -> tuple[int, str]:
        return (self.number, (self.repo or "").lower())

    @classmethod
    def parse(cls, text: str) -> "IssueRef | None":
        """Parse ``#N`` or ``owner/repo#N``; None when the grammar does not match."""
        m = _REF_VALUE_RE.match(text.strip())
        if not m:
            return None
        repo = f"{m.group('owner')}/{m.group('name')}" if m.group("owner") else None
        return cls(number=int(m.group("number")), repo=repo)


@dataclass
class Frontmatter:
    part_of: IssueRef | None = None
    raw_entries: dict[str, str] = field(default_factory=dict)
    position: FrontmatterPosition = FrontmatterPosition.NONE
    # Character span of the whole block, delimiters included.
    span: tuple[int, int] | None = None


@dataclass
class Section:
    heading: str
    body_span: tuple[int, int]
    content: str
    # Span including the heading line; this is the region an upsert owns.
    full_span: tuple[int, int] = (0, 0)


@dataclass(frozen=True)
class ChecklistItem:
    checked: bool
    title: str
    ref: IssueRef


@dataclass(frozen=True)
class TestCaseEntry:
    __test__ = False  # not a pytest class

    name: str
    path: str


@dataclass
class TraceabilitySection:
    related_issues: list[ChecklistItem] = field(default_factory=list)
    resolving_change: IssueRef | None = None
    test_cases: list[TestCaseEntry] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not self.related_issues and self.resolving_change is None and not self.test_cases


@dataclass
class ParsedBody:
    source: str
    frontmatter: Frontmatter
    sections: list[Section]
    references: list[IssueRef]
    traceability: TraceabilitySection | None
    diagnostics: list[Diagnostic] = field(default_factory=list)


def _line_spans(text: str) -> list[tuple[int, int, str]]:
    """Split on newlines, keeping offsets.

    Returns (start, end, body) triples where ``end`` includes the
    terminating newline and ``body`` excludes it (and any trailing CR).
    """
    spans = []
    pos = 0
    n = len(text)
    while pos < n:
        nl = text.find("\n", pos)
        end = n if nl == -1 else nl + 1
        body = text[pos : n if nl == -1 else nl]
        if body.endswith("\r"):
            body = body[:-1]
        spans.append((pos, end, body))
        pos = end
    return spans


def _is_delim(line: str) -> bool:
    return line.rstrip() == "---"


def _parse_meta_block(lines: list[str]) -> tuple[dict[str, str], list[str]] | None:
    """Parse block interior as ``key: value`` entries.

    Returns (entries, duplicate keys), or None when any non-blank line
    fails the grammar (nested or otherwise unparseable metadata) or when
    there are no entries at all.
    """
    entries: dict[str, str] = {}
    duplicates: list[str] = []
    for line in lines:
        if not line.strip():
            continue
        m = _META_RE.match(line)
        if not m:
            return None
        key, value = m.group(1), m.group(2).strip()
        if len(value) >= 2 and value[0] == value[-1] and value[0] in ("'", '"'):
            value = value[1:-1]
        if key in entries:
            duplicates.append(key)
            continue
        entries[key] = value
    if not entries:
        return None
    return entries, duplicates


def _detect_frontmatter(
    text: str, lines: list[tuple[int, int, str]], diagnostics: list[Diagnostic]
) -> Frontmatter:
    attempted: tuple[int, int] | None = None

    # Leading block: the body's first line is a delimiter.
    if lines and _is_delim(lines[0][2]):
        close = next((i for i in range(1, len(lines)) if _is_delim(lines[i][2])), None)
        if close is not None:
            parsed = _parse_meta_block([lines[i][2] for i in range(1, close)])
            if parsed is not None:
                return _build_frontmatter(
                    parsed, FrontmatterPosition.LEADING, (lines[0][0], lines[close][1]), diagnostics
                )
            if any(lines[i][2].strip() for i in range(1, close)):
                attempted = (0, close)
                diagnostics.append(
                    Diagnostic("malformed-frontmatter", "leading metadata block could not be parsed; ignored")
                )

    # Trailing block: the last non-blank line is a delimiter with a
    # matching opener above it, as in a metadata block placed at the end.
    last = next((i for i in range(len(lines) - 1, -1, -1) if lines[i][2].strip()), None)
    if last is not None and _is_delim(lines[last][2]):
        opener = next((j for j in range(last - 1, -1, -1) if _is_delim(lines[j][2])), None)
        if opener is not None and (opener, last) != attempted:
            parsed = _parse_meta_block([lines[i][2] for i in range(opener + 1, last)])
            if parsed is not None:
                return _build_frontmatter(
                    parsed,
                    FrontmatterPosition.TRAILING,
                    (lines[opener][0], lines[last][1]),
                    diagnostics,
                )
            if any(lines[i][2].strip() for i in range(opener + 1, last)):
                diagnostics.append(
                    Diagnostic("malformed-frontmatter", "trailing metadata block could not be parsed; ignored")
                )
    return Frontmatter()


def _build_frontmatter(
    parsed: tuple[dict[str, str], list[str]],
    position: FrontmatterPosition,
    span: tuple[int, int],
    diagnostics: list[Diagnostic],
) -> Frontmatter:
    entries, duplicates = parsed
    for key in duplicates:
        diagnostics.append(
            Diagnostic("duplicate-frontmatter-key", f"key {key!r} appears more than once; first value kept")
        )
    part_of = None
    if "partOf" in entries:
        part_of = IssueRef.parse(entries["partOf"])
        if part_of is None:
            diagnostics.append(
                Diagnostic("invalid-part-of", f"partOf value {entries['partOf']!r} is not an issue reference")
            )
    return Frontmatter(part_of=part_of, raw_entries=entries, position=position, span=span)


def _fenced_line_flags(lines: list[tuple[int, int, str]]) -> list[bool]:
    """Per line: is it inside (or part of) a fenced code block."""
    flags = []
    fence: tuple[str, int] | None = None
    for _, _, body in lines:
        if fence is None:
            m = _FENCE_RE.match(body)
            if m:
                fence = (m.group(1)[0], len(m.group(1)))
                flags.append(True)
                continue
            flags.append(False)
        else:
            flags.append(True)
            stripped = body.strip()
            if stripped and set(stripped) == {fence[0]} and len(stripped) >= fence[1]:
                fence = None
    return flags


def _fence_open_at(text: str, offset: int) -> tuple[str, int] | None:
    """Fence state just before ``offset``; (char, length) when a fence is open."""
    fence: tuple[str, int] | None = None
    for _, _, body in _line_spans(text[:offset]):
        if fence is None:
            m = _FENCE_RE.match(body)
            if m:
                fence = (m.group(1)[0], len(m.group(1)))
        else:
            stripped = body.strip()
            if stripped and set(stripped) == {fence[0]} and len(stripped) >= fence[1]:
                fence = None
    return fence


def _mask_code(text: str, lines: list[tuple[int, int, str]], fenced: list[bool]) -> str:
    """Blank out fenced blocks and inline code spans, preserving offsets."""
    out = list(text)
    for (start, end, body), in_fence in zip(lines, fenced):
        if in_fence:
            for i in range(start, end):
                if out[i] not in ("\n", "\r"):
                    out[i] = " "
            continue
        for m in _CODE_SPAN_RE.finditer(body):
            for i in range(start + m.start(), start + m.end()):
                out[i] = " "
    return "".join(out)


def _heading_text(match_group: str | None) -> str:
    if not match_group:
        return ""
    return _CLOSING_HASHES_RE.sub("", match_group).strip()


def _find_sections(
    text: str,
    lines: list[tuple[int, int, str]],
    fenced: list[bool],
    scan_start: int,
    scan_end: int,
) -> list[Section]:
    heads: list[tuple[int, int, str]] = []  # (line start, heading-line end, heading text)
    for (start, end, body), in_fence in zip(lines, fenced):
        if in_fence or start < scan_start or start >= scan_end:
            continue
        m = _H2_RE.match(body)
        if m:
            heads.append((start, end, _heading_text(m.group(1))))
    sections = []
    for i, (h_start, h_end, title) in enumerate(heads):
        boundary = heads[i + 1][0] if i + 1 < len(heads) else scan_end
        sections.append(
            Section(
                heading=title,
                body_span=(h_end, boundary),
                content=text[h_end:boundary],
                full_span=(h_start, boundary),
            )
        )
    return sections


def _parse_traceability(content: str) -> TraceabilitySection:
    ts = TraceabilitySection()
    current = None
    for raw in content.splitlines():
        line = raw.rstrip("\r")
        m = _H3_RE.match(line)
        if m:
            current = _heading_text(m.group(1)).casefold()
            continue
        stripped = line.strip()
        if not stripped:
            continue
        if current == "related issues":
            m = _CHECKLIST_RE.match(stripped)
            if m:
                ts.related_issues.append(
                    ChecklistItem(
                        checked=m.group(1).lower() == "x",
                        title=m.group(2),
                        ref=IssueRef(number=int(m.group(4)), repo=m.group(3)),
                    )
                )
        elif current == "change request":
            m = _CHANGE_ITEM_RE.match(stripped)
            if m and ts.resolving_change is None:
                ts.resolving_change = IssueRef(number=int(m.group(3)), repo=m.group(2))
        elif current == "test cases":
            m = _TEST_ITEM_RE.match(stripped)
            if m:
                ts.test_cases.append(TestCaseEntry(name=m.group(1), path=m.group(2)))
    return ts


def parse_issue_body(text: str, managed_heading: str = DEFAULT_MANAGED_HEADING) -> ParsedBody:
    """Parse an issue/PR body into frontmatter, sections, references,
    and the managed traceability section.

    Never raises on any input; problems surface as diagnostics.
    """
    diagnostics: list[Diagnostic] = []
    lines = _line_spans(text)
    frontmatter = _detect_frontmatter(text, lines, diagnostics)

    scan_start, scan_end = 0, len(text)
    if frontmatter.position is FrontmatterPosition.LEADING and frontmatter.span:
        scan_start = frontmatter.span[1]
    elif frontmatter.position is FrontmatterPosition.TRAILING and frontmatter.span:
        scan_end = frontmatter.span[0]

    fenced = _fenced_line_flags(lines)
    _note_midbody_blocks(lines, fenced, frontmatter, diagnostics)
    sections = _find_sections(text, lines, fenced, scan_start, scan_end)

    masked = _mask_code(text, lines, fenced)
    references = [
        IssueRef(
            number=int(m.group("number")),
            repo=f"{m.group('owner')}/{m.group('name')}" if m.group("owner") else None,
        )
        for m in _REF_RE.finditer(masked)
    ]

    traceability = None
    wanted = managed_heading.casefold()
    managed = [s for s in sections if s.heading.casefold() == wanted]
    if managed:
        traceability = _parse_traceability(managed[0].content)
        if len(managed) > 1:
            diagnostics.append(
                Diagnostic(
                    "duplicate-managed-section",
                    f"{len(managed)} '## {managed_heading}' sections found; only the first is managed",
                )
            )

    return ParsedBody(
        source=text,
        frontmatter=frontmatter,
        sections=sections,
        references=references,
        traceability=traceability,
        diagnostics=diagnostics,
    )


def _note_midbody_blocks(
    lines: list[tuple[int, int, str]],
    fenced: list[bool],
    frontmatter: Frontmatter,
    diagnostics: list[Diagnostic],
) -> None:
    """Flag metadata-looking blocks that are neither leading nor trailing."""
    claimed = frontmatter.span
    delims = [
        i
        for i, ((start, _, body), in_fence) in enumerate(zip(lines, fenced))
        if not in_fence and _is_delim(body) and not (claimed and claimed[0] <= start < claimed[1])
    ]
    for a, b in zip(delims, delims[1:]):
        interior = [lines[i][2] for i in range(a + 1, b)]
        non_blank = [ln for ln in interior if ln.strip()]
        if non_blank and all(_META_RE.match(ln) for ln in non_blank):
            diagnostics.append(
                Diagnostic(
                    "midbody-frontmatter",
                    f"metadata block at offset {lines[a][0]} is neither leading nor trailing; ignored",
                )
            )


def render_body(body: ParsedBody) -> str:
    """Inverse of :func:`parse_issue_body` for unmodified bodies."""
    return body.source


def extract_parent(body: ParsedBody) -> IssueRef | None:
    """The parent requirement named by ``partOf`` frontmatter, if any."""
    return body.frontmatter.part_of


def extract_resolve_links(text: str) -> list[IssueRef]:
    """References preceded by a closing keyword (resolves, fixes, closes, ...).

    Matches outside code fences and inline code spans only; duplicates
    collapse to the first occurrence, order of appearance kept.
    """
    lines = _line_spans(text)
    masked = _mask_code(text, lines, _fenced_line_flags(lines))
    refs: list[IssueRef] = []
    seen: set[tuple[int, str]] = set()
    for m in _RESOLVE_RE.finditer(masked):
        repo = f"{m.group('owner')}/{m.group('name')}" if m.group("owner") else None
        ref = IssueRef(number=int(m.group("number")), repo=repo)
        if ref.key() not in seen:
            seen.add(ref.key())
            refs.append(ref)
    return refs


def render_checklist_item(item: ChecklistItem) -> str:
    mark = "x" if item.checked else " "
    return f"- [{mark}] {item.title} ({item.ref})"


def render_traceability_section(
    ts: TraceabilitySection, managed_heading: str = DEFAULT_MANAGED_HEADING
) -> str:
    """Deterministic markdown for the managed section.

    Empty subsections are omitted; an all-empty section is just the
    heading line, which keeps the managed region stable once created.
    """
    parts = [f"## {managed_heading}"]
    if ts.related_issues:
        parts += ["", "### Related issues", ""]
        parts += [render_checklist_item(item) for item in ts.related_issues]
    if ts.resolving_change is not None:
        parts += ["", "### Change request", "", f"- {ts.resolving_change}"]
    if ts.test_cases:
        parts += ["", "### Test cases", ""]
        parts += [f"- {tc.name} ({tc.path})" for tc in ts.test_cases]
    return "\n".join(parts) + "\n"


def _separator_for(prefix: str) -> str:
    if not prefix or prefix.endswith("\n\n"):
        return ""
    if prefix.endswith("\n"):
        return "\n"
    return "\n\n"


def _closing_fence_prefix(text: str, offset: int) -> str:
    """A fence terminator when an unclosed fence would swallow the insertion."""
    fence = _fence_open_at(text, offset)
    if fence is None:
        return ""
    return fence[0] * max(fence[1], 3) + "\n\n"


def upsert_traceability_section(
    body: str, ts: TraceabilitySection, managed_heading: str = DEFAULT_MANAGED_HEADING
) -> str:
    """Replace or append the managed section, leaving all other bytes intact.

    Idempotent: applying the same section twice equals applying it once.
    The section lands before trailing frontmatter so that ``partOf``
    metadata stays at the end of the body where it is recognized.
    """
    parsed = parse_issue_body(body, managed_heading=managed_heading)
    rendered = render_traceability_section(ts, managed_heading)

    wanted = managed_heading.casefold()
    managed = next((s for s in parsed.sections if s.heading.casefold() == wanted), None)
    if managed is not None:
        start, end = managed.full_span
        replacement = rendered if end == len(body) else rendered + "\n"
        return body[:start] + replacement + body[end:]

    fm = parsed.frontmatter
    if fm.position is FrontmatterPosition.TRAILING and fm.span:
        insert_at = fm.span[0]
        prefix = body[:insert_at]
        addition = _separator_for(prefix) + _closing_fence_prefix(body, insert_at) + rendered + "\n"
        return prefix + addition + body[insert_at:]

    return body + _separator_for(body) + _closing_fence_prefix(body, len(body)) + rendered
