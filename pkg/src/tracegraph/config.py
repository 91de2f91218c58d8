"""Tool configuration: repository, label mapping, test roots.

Read from ``.tracegraph.yaml`` / ``.tracegraph.json`` in the working
directory (or an explicit path); command-line flags override file
values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from tracegraph.docmodel import DEFAULT_MANAGED_HEADING
from tracegraph.gateway import RepoCoordinates
from tracegraph.graph import DEFAULT_LABEL_MAP, ArtifactKind
from tracegraph.gherkin import DEFAULT_TEST_ROOTS

CONFIG_FILENAMES = (".tracegraph.yaml", ".tracegraph.yml", ".tracegraph.json")


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    repo: RepoCoordinates | None = None
    label_map: dict[ArtifactKind, str] = field(default_factory=lambda: dict(DEFAULT_LABEL_MAP))
    test_roots: list[str] = field(default_factory=lambda: list(DEFAULT_TEST_ROOTS))
    allow_level_skip: bool = False
    managed_section_heading: str = DEFAULT_MANAGED_HEADING

    def __post_init__(self) -> None:
        for kind in DEFAULT_LABEL_MAP:
            if not self.label_map.get(kind):
                raise ConfigError(f"label_map must name a label for {kind.value}")
        labels = [lbl.casefold() for lbl in self.label_map.values()]
        if len(set(labels)) != len(labels):
            raise ConfigError("label_map labels must be distinct")


_LABEL_KEYS = {
    "user_need": ArtifactKind.USER_NEED,
    "system_requirement": ArtifactKind.SYSTEM_REQUIREMENT,
    "software_requirement": ArtifactKind.SOFTWARE_REQUIREMENT,
}


def config_from_mapping(data: dict) -> Config:
    unknown = set(data) - {"repo", "labels", "test_roots", "allow_level_skip", "managed_section_heading"}
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(sorted(unknown))}")

    repo = None
    if data.get("repo"):
        try:
            repo = RepoCoordinates.parse(str(data["repo"]))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    label_map = dict(DEFAULT_LABEL_MAP)
    for key, label in (data.get("labels") or {}).items():
        if key not in _LABEL_KEYS:
            raise ConfigError(f"unknown label kind {key!r}")
        label_map[_LABEL_KEYS[key]] = str(label)

    test_roots = [str(r) for r in data.get("test_roots") or DEFAULT_TEST_ROOTS]
    return Config(
        repo=repo,
        label_map=label_map,
        test_roots=test_roots,
        allow_level_skip=bool(data.get("allow_level_skip", False)),
        managed_section_heading=str(data.get("managed_section_heading", DEFAULT_MANAGED_HEADING)),
    )


def load_config(path: str | Path | None = None, cwd: str | Path = ".") -> Config:
    """Load configuration from an explicit path or the conventional
    dotfile; defaults apply when no file exists."""
    if path is not None:
        candidate = Path(path)
        if not candidate.exists():
            raise ConfigError(f"configuration file not found: {candidate}")
    else:
        candidate = next((p for p in (Path(cwd) / n for n in CONFIG_FILENAMES) if p.exists()), None)
        if candidate is None:
            return Config()
    try:
        data = yaml.safe_load(candidate.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{candidate}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{candidate}: configuration must be a mapping")
    return config_from_mapping(data)
