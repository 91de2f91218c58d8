"""Feature-file parsing, issue tags, and test levels."""

from __future__ import annotations

import random

from tracegraph.gherkin import (
    Scenario,
    TestLevel,
    collect_test_cases,
    extract_issue_tags,
    extract_level,
    parse_feature,
)

TAGGED_SCENARIO = (
    "  @issue-7\n"
    "  Scenario: New test case\n"
    "    Given initial state\n"
    "    When the trigger\n"
    "    Then resulting state\n"
)


class TestParseFeature:
    def test_single_tagged_scenario(self):
        feature = parse_feature(TAGGED_SCENARIO, "features/x.feature")
        assert len(feature.scenarios) == 1
        scenario = feature.scenarios[0]
        assert scenario.name == "New test case"
        assert scenario.tags == ["@issue-7"]
        assert [(s.keyword, s.text) for s in scenario.steps] == [
            ("Given", "initial state"),
            ("When", "the trigger"),
            ("Then", "resulting state"),
        ]

    def test_empty_file(self):
        assert parse_feature("", "features/empty.feature").scenarios == []

    def test_two_tagged_scenarios(self):
        text = (
            "Feature: Pair\n\n"
            "  @issue-7\n  Scenario: First\n    Given a\n\n"
            "  @issue-9\n  Scenario: Second\n    Given b\n"
        )
        feature = parse_feature(text, "features/pair.feature")
        assert feature.feature_name == "Pair"
        assert [(s.name, s.tags) for s in feature.scenarios] == [
            ("First", ["@issue-7"]),
            ("Second", ["@issue-9"]),
        ]

    def test_missing_feature_header_tolerated(self):
        feature = parse_feature("Scenario: Solo\n  Given x\n", "f.feature")
        assert feature.feature_name == ""
        assert [s.name for s in feature.scenarios] == ["Solo"]

    def test_duplicate_scenario_names_keep_first(self):
        text = "Scenario: Same\n  Given a\nScenario: Same\n  Given b\n"
        feature = parse_feature(text, "f.feature")
        assert len(feature.scenarios) == 1
        assert feature.scenarios[0].steps[0].text == "a"
        assert any(d.code == "duplicate-scenario" for d in feature.diagnostics)

    def test_outline_counts_once_and_examples_are_opaque(self):
        text = (
            "Feature: Outline\n\n"
            "  @issue-3\n"
            "  Scenario Outline: Many\n"
            "    Given value <v>\n"
            "    Examples:\n"
            "      | v |\n"
            "      | 1 |\n"
            "      | 2 |\n"
        )
        feature = parse_feature(text, "f.feature")
        assert len(feature.scenarios) == 1
        assert feature.scenarios[0].outline

    def test_docstrings_and_tables_skipped(self):
        text = (
            'Scenario: Doc\n  Given setup\n  """\n  Given not a step\n  """\n'
            "  Then done\n  | a | b |\n"
        )
        feature = parse_feature(text, "f.feature")
        steps = feature.scenarios[0].steps
        assert [s.text for s in steps] == ["setup", "done"]

    def test_comments_ignored_and_unknown_lines_kept(self):
        text = "Scenario: Mix\n  # a comment\n  Given start\n  something freeform\n"
        feature = parse_feature(text, "f.feature")
        assert [(s.keyword, s.text) for s in feature.scenarios[0].steps] == [
            ("Given", "start"),
            ("", "something freeform"),
        ]

    def test_tag_line_whitespace_and_order_irrelevant(self):
        loose = parse_feature("   @level-unit   @issue-7  \nScenario: S\n", "f.feature")
        tight = parse_feature("@issue-7 @level-unit\nScenario: S\n", "f.feature")
        assert extract_issue_tags(loose.scenarios[0]) == extract_issue_tags(tight.scenarios[0]) == [7]
        assert (
            extract_level(loose.scenarios[0], "f.feature")
            is extract_level(tight.scenarios[0], "f.feature")
            is TestLevel.UNIT
        )

    def test_totality_on_noise(self):
        rng = random.Random(7)
        alphabet = "@#|:\"' \nScenarioFeatureGiven<>-~`"
        for _ in range(200):
            text = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 120)))
            parse_feature(text, "f.feature")  # must not raise


class TestIssueTags:
    def test_single(self):
        assert extract_issue_tags(Scenario("s", tags=["@issue-7"])) == [7]

    def test_none(self):
        assert extract_issue_tags(Scenario("s", tags=[])) == []

    def test_dedup_and_ignore_others(self):
        assert extract_issue_tags(Scenario("s", tags=["@smoke", "@issue-7", "@issue-7"])) == [7]

    def test_sorted_ascending(self):
        assert extract_issue_tags(Scenario("s", tags=["@issue-9", "@issue-2"])) == [2, 9]

    def test_non_numeric_suffix_diagnosed(self):
        diags = []
        assert extract_issue_tags(Scenario("s", tags=["@issue-abc"]), diags) == []
        assert diags and diags[0].code == "invalid-issue-tag"

    def test_zero_rejected(self):
        diags = []
        assert extract_issue_tags(Scenario("s", tags=["@issue-0"]), diags) == []
        assert diags


class TestLevels:
    def test_tag_wins(self):
        scenario = Scenario("s", tags=["@level-acceptance"])
        assert extract_level(scenario, "features/unit/x.feature") is TestLevel.ACCEPTANCE

    def test_path_fallback(self):
        assert extract_level(Scenario("s"), "features/system/login.feature") is TestLevel.SYSTEM

    def test_unrecognized_path(self):
        assert extract_level(Scenario("s"), "somewhere/else.feature") is TestLevel.UNSPECIFIED

    def test_path_without_level_segment(self):
        assert extract_level(Scenario("s"), "features/x.feature") is TestLevel.UNSPECIFIED

    def test_conflicting_tags_first_wins(self):
        diags = []
        scenario = Scenario("s", tags=["@level-unit", "@level-system"])
        assert extract_level(scenario, "f.feature", diagnostics=diags) is TestLevel.UNIT
        assert any(d.code == "conflicting-level-tags" for d in diags)

    def test_custom_roots(self):
        assert (
            extract_level(Scenario("s"), "qa/integration/x.feature", test_roots=("qa",))
            is TestLevel.INTEGRATION
        )


class TestCollect:
    def test_single_file(self):
        feature = parse_feature(TAGGED_SCENARIO, "features/x.feature")
        refs = collect_test_cases([feature])
        assert len(refs) == 1
        assert refs[0].path == "features/x.feature"
        assert refs[0].scenario == "New test case"
        assert refs[0].issue_links == (7,)
        assert refs[0].level is TestLevel.UNSPECIFIED

    def test_untagged_scenarios_excluded(self):
        feature = parse_feature("Scenario: Plain\n  Given x\n", "f.feature")
        assert collect_test_cases([feature]) == []

    def test_ordering_across_files(self):
        texts = {
            "features/b.feature": "@issue-1\nScenario: B1\n@issue-2\nScenario: B2\n",
            "features/a.feature": "@issue-3\nScenario: A1\n",
            "features/c.feature": "@issue-4\nScenario: C1\n@issue-5\nScenario: C2\n",
        }
        files = [parse_feature(text, path) for path, text in texts.items()]
        refs = collect_test_cases(files)
        observed = [(r.path, r.scenario) for r in refs]
        assert observed == sorted(observed, key=lambda pair: pair[0]) and len(refs) == 5
        assert [r.scenario for r in refs if r.path == "features/b.feature"] == ["B1", "B2"]

    def test_count_matches_tagged_scenarios(self):
        rng = random.Random(55)
        from fuzzgen import random_feature_text

        for _ in range(30):
            files = [
                parse_feature(random_feature_text(rng, 9), f"features/system/f{i}.feature")
                for i in range(rng.randint(1, 3))
            ]
            expected = sum(
                1 for f in files for s in f.scenarios if extract_issue_tags(s)
            )
            assert len(collect_test_cases(files)) == expected
