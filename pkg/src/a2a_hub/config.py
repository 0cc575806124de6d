"""Hub configuration: one YAML document validated at startup.

Sections: identity, card, targets, rules, corpus, acl, canned_answers, plus
an optional messages section for the help and degraded-answer texts. All
validation happens at boot so a bad config fails the process before it can
fail a user request. Corpus file paths are resolved relative to the config
file's directory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .boundaries import BoundaryKind, DownstreamTarget, TargetConfigError
from .downstream import Messages
from .generalqa import AnswerTableError, CannedAnswerTable, CannedEntry
from .router import Route, RoutingRule, RuleTableError, default_rules, validate_rules

# Routes served by downstream agents; docqa and general run in-process.
AGENT_ROUTES = (Route.EXPENSE, Route.PM)


class ConfigError(ValueError):
    """Configuration document failed validation."""


@dataclass(frozen=True)
class SkillConfig:
    id: str
    name: str
    description: str


@dataclass(frozen=True)
class CardConfig:
    name: str = "a2a-hub"
    description: str = "Orchestration gateway for downstream agents"
    url: str = "http://127.0.0.1:8080/"
    skills: tuple[SkillConfig, ...] = ()


@dataclass(frozen=True)
class AclEntry:
    doc_uri_prefix: str
    reader_identity: str
    capability: str = "read"


def _default_canned() -> CannedAnswerTable:
    return CannedAnswerTable(
        [], "I do not have a configured answer for that question.")


@dataclass
class HubConfig:
    identity: str
    card: CardConfig = CardConfig()
    targets: list[DownstreamTarget] = field(default_factory=list)
    rules: list[RoutingRule] = field(default_factory=default_rules)
    corpus: list[tuple[str, str]] = field(default_factory=list)  # (uri, text)
    acl: list[AclEntry] = field(default_factory=list)
    canned: CannedAnswerTable = field(default_factory=_default_canned)
    messages: Messages = Messages()
    build: str = "dev"

    def targets_by_route(self) -> dict[Route, DownstreamTarget]:
        return {Route(t.id): t for t in self.targets}


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def _parse_card(raw: Any) -> CardConfig:
    if raw is None:
        return CardConfig()
    _require(isinstance(raw, dict), "card must be a mapping")
    skills = []
    for entry in raw.get("skills", []):
        _require(isinstance(entry, dict), "card.skills entries must be mappings")
        for key in ("id", "name", "description"):
            _require(isinstance(entry.get(key), str) and entry[key],
                     f"card.skills entries require a non-empty {key}")
        skills.append(SkillConfig(id=entry["id"], name=entry["name"],
                                  description=entry["description"]))
    return CardConfig(
        name=raw.get("name", CardConfig.name),
        description=raw.get("description", CardConfig.description),
        url=raw.get("url", CardConfig.url),
        skills=tuple(skills),
    )


def _parse_targets(raw: Any) -> list[DownstreamTarget]:
    if raw is None:
        return []
    _require(isinstance(raw, list), "targets must be a list")
    targets = []
    agent_route_ids = {r.value for r in AGENT_ROUTES}
    for entry in raw:
        _require(isinstance(entry, dict), "target entries must be mappings")
        _require(isinstance(entry.get("id"), str) and entry["id"],
                 "targets require a non-empty id")
        _require(entry["id"] in agent_route_ids,
                 f"target id {entry['id']!r} must name an agent route "
                 f"({', '.join(sorted(agent_route_ids))})")
        _require(isinstance(entry.get("url"), str) and entry["url"],
                 f"target {entry['id']!r} requires a url")
        try:
            boundary = BoundaryKind(entry.get("boundary"))
        except ValueError:
            raise ConfigError(
                f"target {entry['id']!r}: boundary must be one of "
                f"{[k.value for k in BoundaryKind]}") from None
        timeout_ms = entry.get("timeout_ms", 10_000)
        _require(isinstance(timeout_ms, (int, float)) and timeout_ms > 0,
                 f"target {entry['id']!r}: timeout_ms must be positive")
        try:
            target = DownstreamTarget(
                id=entry["id"], url=entry["url"], boundary=boundary,
                audience=entry.get("audience"), timeout_s=timeout_ms / 1000.0)
        except TargetConfigError as exc:
            raise ConfigError(str(exc)) from exc
        targets.append(target)
    ids = [t.id for t in targets]
    _require(len(ids) == len(set(ids)), "target ids must be unique")
    return targets


def _parse_rules(raw: Any) -> list[RoutingRule]:
    if raw is None:
        return default_rules()
    _require(isinstance(raw, list), "rules must be a list")
    rules = []
    for entry in raw:
        _require(isinstance(entry, dict), "rule entries must be mappings")
        for key in ("label", "pattern"):
            _require(isinstance(entry.get(key), str) and entry[key],
                     f"rules require a non-empty {key}")
        try:
            route = Route(entry.get("route"))
        except ValueError:
            raise ConfigError(
                f"rule {entry['label']!r}: route must be one of "
                f"{[r.value for r in Route]}") from None
        _require(isinstance(entry.get("priority"), int),
                 f"rule {entry['label']!r}: priority must be an integer")
        rules.append(RoutingRule(label=entry["label"], pattern=entry["pattern"],
                                 route=route, priority=entry["priority"]))
    try:
        return validate_rules(rules)
    except RuleTableError as exc:
        raise ConfigError(str(exc)) from exc


def _parse_corpus(raw: Any, base_dir: Path) -> list[tuple[str, str]]:
    if raw is None:
        return []
    _require(isinstance(raw, list), "corpus must be a list")
    corpus = []
    for entry in raw:
        _require(isinstance(entry, dict), "corpus entries must be mappings")
        for key in ("doc_uri", "file_path"):
            _require(isinstance(entry.get(key), str) and entry[key],
                     f"corpus entries require a non-empty {key}")
        path = Path(entry["file_path"])
        if not path.is_absolute():
            path = base_dir / path
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(
                f"corpus document {entry['doc_uri']!r}: cannot read {path}: "
                f"{exc}") from exc
        corpus.append((entry["doc_uri"], text))
    uris = [uri for uri, _ in corpus]
    _require(len(uris) == len(set(uris)), "corpus doc_uris must be unique")
    return corpus


def _parse_acl(raw: Any) -> list[AclEntry]:
    if raw is None:
        return []
    _require(isinstance(raw, list), "acl must be a list")
    entries = []
    for entry in raw:
        _require(isinstance(entry, dict), "acl entries must be mappings")
        for key in ("doc_uri_prefix", "reader_identity"):
            _require(isinstance(entry.get(key), str) and entry[key],
                     f"acl entries require a non-empty {key}")
        capability = entry.get("capability", "read")
        _require(capability == "read",
                 f"unsupported acl capability {capability!r} (only 'read')")
        entries.append(AclEntry(doc_uri_prefix=entry["doc_uri_prefix"],
                                reader_identity=entry["reader_identity"],
                                capability=capability))
    return entries


def _parse_canned(raw: Any) -> CannedAnswerTable:
    if raw is None:
        raw = {}
    _require(isinstance(raw, dict), "canned_answers must be a mapping")
    entries = []
    for entry in raw.get("entries", []):
        _require(isinstance(entry, dict), "canned_answers.entries must be mappings")
        for key in ("pattern", "answer"):
            _require(isinstance(entry.get(key), str) and entry[key],
                     f"canned answers require a non-empty {key}")
        entries.append(CannedEntry(pattern=entry["pattern"], answer=entry["answer"]))
    default_answer = raw.get(
        "default_answer", "I do not have a configured answer for that question.")
    _require(isinstance(default_answer, str) and bool(default_answer),
             "canned_answers.default_answer must be a non-empty string")
    try:
        return CannedAnswerTable(entries, default_answer)
    except AnswerTableError as exc:
        raise ConfigError(str(exc)) from exc


def _parse_messages(raw: Any) -> Messages:
    if raw is None:
        return Messages()
    _require(isinstance(raw, dict), "messages must be a mapping")
    defaults = Messages()
    help_text = raw.get("help", defaults.help_text)
    template = raw.get("degraded_template", defaults.degraded_template)
    _require(isinstance(help_text, str) and bool(help_text),
             "messages.help must be a non-empty string")
    _require(isinstance(template, str) and bool(template),
             "messages.degraded_template must be a non-empty string")
    try:
        template.format(stage="x", reason="y")
    except (KeyError, IndexError, ValueError) as exc:
        raise ConfigError(f"messages.degraded_template is not formattable: {exc}") \
            from exc
    return Messages(help_text=help_text, degraded_template=template)


def parse_config(raw: Any, base_dir: Path) -> HubConfig:
    _require(isinstance(raw, dict), "config must be a mapping")
    _require(isinstance(raw.get("identity"), str) and bool(raw["identity"]),
             "config requires a non-empty identity (the hub's caller identity)")
    build = raw.get("build", "dev")
    _require(isinstance(build, str) and bool(build), "build must be a non-empty string")
    return HubConfig(
        identity=raw["identity"],
        card=_parse_card(raw.get("card")),
        targets=_parse_targets(raw.get("targets")),
        rules=_parse_rules(raw.get("rules")),
        corpus=_parse_corpus(raw.get("corpus"), base_dir),
        acl=_parse_acl(raw.get("acl")),
        canned=_parse_canned(raw.get("canned_answers")),
        messages=_parse_messages(raw.get("messages")),
        build=build,
    )


def load_config(path: str | Path) -> HubConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    return parse_config(raw, path.parent)
