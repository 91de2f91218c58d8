"""Randomized invariants for body parsing and managed-section edits.

All loops are seeded; a failure reports the seed that produced it.
"""

from __future__ import annotations

import random

from fuzzgen import random_body, random_section, replaced_span

from tracegraph.docmodel import (
    ChecklistItem,
    IssueRef,
    extract_parent,
    parse_issue_body,
    render_body,
    render_checklist_item,
    upsert_traceability_section,
)


def _managed_region(body: str) -> tuple[int, int] | None:
    parsed = parse_issue_body(body)
    for section in parsed.sections:
        if section.heading.casefold() == "traceability":
            return section.full_span
    return None


def test_round_trip_is_byte_exact():
    rng = random.Random(1101)
    for case in range(150):
        body = random_body(rng)
        assert render_body(parse_issue_body(body)) == body, f"case {case}"


def test_parse_is_total_on_hostile_input():
    rng = random.Random(1102)
    alphabet = "#-`~[]()x \n\r\t\u2028\x00é中"
    for case in range(300):
        body = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 80)))
        parsed = parse_issue_body(body)  # must not raise
        assert extract_parent(parsed) is None or parsed.frontmatter.part_of is not None
        assert render_body(parsed) == body


def test_upsert_idempotent_and_non_interfering():
    rng = random.Random(1103)
    for case in range(150):
        body = random_body(rng)
        ts = random_section(rng)
        once = upsert_traceability_section(body, ts)
        assert upsert_traceability_section(once, ts) == once, f"case {case}: not idempotent"

        region = _managed_region(body)
        if region is None:
            start, end = replaced_span(body, once)
            assert start == end, f"case {case}: append must not remove bytes"
        else:
            r0, r1 = region
            assert once.startswith(body[:r0]), f"case {case}: bytes before managed region changed"
            assert once.endswith(body[r1:]), f"case {case}: bytes after managed region changed"
            assert len(once) >= r0 + len(body) - r1, f"case {case}: edit larger than managed region"

        # the managed section must be discoverable afterwards
        assert parse_issue_body(once).traceability is not None, f"case {case}"


def test_upsert_preserves_parent_metadata():
    rng = random.Random(1104)
    for case in range(150):
        body = random_body(rng)
        before = extract_parent(parse_issue_body(body))
        after = extract_parent(parse_issue_body(upsert_traceability_section(body, random_section(rng))))
        assert before == after, f"case {case}: parent metadata changed"


def test_checklist_items_round_trip_through_rendered_section():
    rng = random.Random(1105)
    titles = ("plain", "ends with (#9)", "uni ø title", "a) b (c)", "spaces  inside")
    for case in range(200):
        item = ChecklistItem(
            checked=rng.random() < 0.5,
            title=rng.choice(titles),
            ref=IssueRef(rng.randint(1, 500), "octo/demo" if rng.random() < 0.3 else None),
        )
        from tracegraph.docmodel import _CHECKLIST_RE  # grammar under test

        m = _CHECKLIST_RE.match(render_checklist_item(item))
        assert m, f"case {case}: {item}"
        assert (m.group(1) == "x") == item.checked
        assert m.group(2) == item.title
        assert IssueRef(int(m.group(4)), m.group(3)) == item.ref
