"""Snapshot linting and the command-line surface."""

from __future__ import annotations

import json
import shutil

from conftest import FIXTURES, E2E_REPO, load_event_payload

from tracegraph.cli import _cmd_act, _cmd_resync, main
from tracegraph.config import Config
from tracegraph.gateway import FixtureGateway
from tracegraph.graph import FindingCode, matrix_cells
from tracegraph.lint import lint_snapshot, write_reports

E2E = FIXTURES / "e2e1"


def e2e_config() -> Config:
    return Config(repo=E2E_REPO)


class TestLintSnapshot:
    def test_golden_snapshot_is_clean(self):
        result = lint_snapshot(E2E, e2e_config())
        assert result.findings == []
        assert len(result.matrix) == 1
        cells = matrix_cells(result.matrix[0], result.graph, E2E_REPO.key)
        assert cells == ["#5", "#6", "#7", "#8", "New test case"]

    def test_reports_are_deterministic(self, tmp_path):
        outputs = []
        for run in range(3):
            result = lint_snapshot(E2E, e2e_config())
            out = tmp_path / f"run{run}"
            write_reports(result, out, E2E_REPO.key)
            outputs.append({p.name: p.read_bytes() for p in out.iterdir()})
        assert outputs[0] == outputs[1] == outputs[2]
        assert set(outputs[0]) == {"findings.json", "graph.json", "matrix.csv", "matrix.md"}

    def test_missing_validation_detected(self, tmp_path):
        degraded = tmp_path / "degraded"
        shutil.copytree(E2E, degraded)
        feature = degraded / "features/system/new.feature"
        text = feature.read_text()
        feature.write_text(text.replace("@issue-5 @level-acceptance", "@level-acceptance"))
        result = lint_snapshot(degraded, e2e_config())
        assert [f.code for f in result.findings] == [FindingCode.NEED_WITHOUT_VALIDATION]

    def test_dangling_parent_detected(self, tmp_path):
        degraded = tmp_path / "degraded"
        shutil.copytree(E2E, degraded)
        issue = degraded / "issues/007.json"
        data = json.loads(issue.read_text())
        data["body"] = data["body"].replace("partOf: #6", "partOf: #60")
        issue.write_text(json.dumps(data))
        result = lint_snapshot(degraded, e2e_config())
        assert FindingCode.DANGLING_REF in {f.code for f in result.findings}

    def test_empty_snapshot_is_clean(self, tmp_path):
        (tmp_path / "issues").mkdir()
        (tmp_path / "pulls").mkdir()
        result = lint_snapshot(tmp_path, e2e_config())
        assert result.findings == [] and result.matrix == []

    def test_snapshot_subdirectories_are_optional(self, tmp_path):
        result = lint_snapshot(tmp_path, e2e_config())
        assert result.findings == [] and result.matrix == []


class TestLintCommand:
    def test_exit_zero_and_reports(self, tmp_path, capsys):
        out = tmp_path / "reports"
        code = main(["--repo", "acme/device", "lint", "--snapshot", str(E2E), "--out", str(out)])
        assert code == 0
        assert "no findings" in capsys.readouterr().out
        assert (out / "matrix.csv").read_text().splitlines()[1] == "#5,#6,#7,#8,New test case"

    def test_exit_one_on_findings(self, tmp_path, capsys):
        degraded = tmp_path / "degraded"
        shutil.copytree(E2E, degraded)
        (degraded / "pulls/008.json").unlink()
        code = main(["--repo", "acme/device", "lint", "--snapshot", str(degraded)])
        assert code == 1
        assert "requirement_without_change" in capsys.readouterr().out

    def test_json_format(self, capsys):
        code = main(["--repo", "acme/device", "lint", "--snapshot", str(E2E), "--format", "json"])
        assert code == 0
        assert json.loads(capsys.readouterr().out) == []

    def test_csv_format(self, capsys):
        code = main(["--repo", "acme/device", "lint", "--snapshot", str(E2E), "--format", "csv"])
        assert code == 0
        assert capsys.readouterr().out.splitlines()[1] == "#5,#6,#7,#8,New test case"

    def test_matrix_command(self, capsys):
        assert main(["--repo", "acme/device", "matrix", "--snapshot", str(E2E)]) == 0
        assert "| #5 | #6 | #7 | #8 | New test case |" in capsys.readouterr().out

    def test_graph_command(self, capsys):
        assert main(["--repo", "acme/device", "graph", "--snapshot", str(E2E)]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert {n["id"] for n in payload["nodes"]} >= {"acme/device#5", "acme/device#6", "acme/device#7"}

    def test_bad_snapshot_path(self, capsys):
        assert main(["lint", "--snapshot", "/nonexistent/nowhere"]) == 2

    def test_live_lint_requires_repo(self, capsys):
        assert main(["lint"]) == 2
        assert "repository must be configured" in capsys.readouterr().err


def act_args(**overrides):
    defaults = dict(snapshot=None, dry_run=False, audit_log="unused.jsonl", no_audit=True)
    defaults.update(overrides)
    return type("Args", (), defaults)()


def act_env(tmp_path, name: str, event: str) -> dict:
    payload = load_event_payload(name)
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return {"GITHUB_EVENT_NAME": event, "GITHUB_EVENT_PATH": str(path)}


class TestActCommand:
    def test_issue_event_applies_patch(self, tmp_path, capsys):
        gw = FixtureGateway.from_snapshot(E2E, E2E_REPO)
        env = act_env(tmp_path, "issues_opened_7.json", "issues")
        code = _cmd_act(act_args(), e2e_config(), gateway=gw, environ=env)
        assert code == 0
        assert "patched acme/device#6" in capsys.readouterr().out
        assert "- [ ] Subtask Issue (#7)" in gw.fetch_issue(E2E_REPO, 6).body

    def test_replay_is_noop(self, tmp_path, capsys):
        gw = FixtureGateway.from_snapshot(E2E, E2E_REPO)
        env = act_env(tmp_path, "issues_opened_7.json", "issues")
        assert _cmd_act(act_args(), e2e_config(), gateway=gw, environ=env) == 0
        assert _cmd_act(act_args(), e2e_config(), gateway=gw, environ=env) == 0
        assert "nothing to change" in capsys.readouterr().out

    def test_dry_run_applies_nothing(self, tmp_path, capsys):
        gw = FixtureGateway.from_snapshot(E2E, E2E_REPO)
        env = act_env(tmp_path, "issues_opened_7.json", "issues")
        code = _cmd_act(act_args(dry_run=True), e2e_config(), gateway=gw, environ=env)
        assert code == 0
        assert "would patch acme/device#6" in capsys.readouterr().out
        assert "Traceability" not in gw.fetch_issue(E2E_REPO, 6).body

    def test_out_of_scope_event_ignored(self, tmp_path, capsys):
        env = act_env(tmp_path, "issues_opened_7.json", "push")
        code = _cmd_act(act_args(), e2e_config(), gateway=FixtureGateway(), environ=env)
        assert code == 0
        assert "event ignored" in capsys.readouterr().out

    def test_malformed_payload(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{broken")
        env = {"GITHUB_EVENT_NAME": "issues", "GITHUB_EVENT_PATH": str(path)}
        assert _cmd_act(act_args(), e2e_config(), environ=env) == 2

    def test_missing_environment(self):
        assert _cmd_act(act_args(), e2e_config(), environ={}) == 2

    def test_act_snapshot_through_main(self, tmp_path, capsys, monkeypatch):
        env = act_env(tmp_path, "issues_opened_7.json", "issues")
        for key, value in env.items():
            monkeypatch.setenv(key, value)
        code = main(
            ["--repo", "acme/device", "act", "--snapshot", str(E2E), "--no-audit"]
        )
        assert code == 0
        assert "patched acme/device#6" in capsys.readouterr().out


class AlwaysConflicting(FixtureGateway):
    def update_issue_body(self, patch):
        self.set_issue_body(patch.repo, patch.number, patch.base_body + "\nraced\n")
        return super().update_issue_body(patch)


class TestApplyFailure:
    def test_act_exits_three_when_conflicts_never_settle(self, tmp_path):
        gw = AlwaysConflicting()
        source = FixtureGateway.from_snapshot(E2E, E2E_REPO)
        for record in source.list_issues(E2E_REPO):
            gw.put_issue(E2E_REPO, record)
        env = act_env(tmp_path, "issues_opened_7.json", "issues")
        assert _cmd_act(act_args(), e2e_config(), gateway=gw, environ=env) == 3


class TestServeCommand:
    def test_requires_webhook_secret(self, monkeypatch, capsys):
        monkeypatch.delenv("WEBHOOK_SECRET", raising=False)
        assert main(["serve"]) == 2
        assert "WEBHOOK_SECRET" in capsys.readouterr().err

    def test_requires_token(self, monkeypatch, capsys):
        monkeypatch.setenv("WEBHOOK_SECRET", "s")
        monkeypatch.delenv("GITHUB_TOKEN", raising=False)
        assert main(["serve"]) == 2
        assert "GITHUB_TOKEN" in capsys.readouterr().err


class TestResyncCommand:
    def test_snapshot_resync_converges(self, capsys):
        gw = FixtureGateway.from_snapshot(E2E, E2E_REPO)
        args = act_args()
        assert _cmd_resync(args, e2e_config(), gateway=gw) == 0
        first = capsys.readouterr().out
        assert "patched acme/device#6" in first and "patched acme/device#7" in first
        assert _cmd_resync(args, e2e_config(), gateway=gw) == 0
        assert "resync complete: 0 patch(es)" in capsys.readouterr().out

    def test_live_resync_requires_repo(self, capsys):
        args = act_args(snapshot=None)
        assert _cmd_resync(args, Config(), gateway=None) == 2
