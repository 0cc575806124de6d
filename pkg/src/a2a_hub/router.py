"""Deterministic query routing.

A query is normalized into a canonical form and matched against an ordered
rule table; the lowest-priority matching rule wins and General is the
default when nothing matches. No model inference is involved anywhere, so
identical inputs always produce identical decisions.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from enum import Enum


class Route(str, Enum):
    EXPENSE = "expense"
    PM = "pm"
    DOCQA = "docqa"
    GENERAL = "general"


class RuleTableError(ValueError):
    """Rule table failed startup validation."""


@dataclass(frozen=True)
class RoutingRule:
    label: str
    pattern: str
    route: Route
    priority: int

    def compiled(self) -> re.Pattern[str]:
        return _compile(self.pattern)


@dataclass(frozen=True)
class RouteDecision:
    route: Route
    matched_rule: str | None
    normalized_query: str


# Compiled patterns are cached per pattern string; rule tables are immutable
# after startup so the cache never grows past the configured rules.
_compile_cache: dict[str, re.Pattern[str]] = {}


def _compile(pattern: str) -> re.Pattern[str]:
    compiled = _compile_cache.get(pattern)
    if compiled is None:
        compiled = re.compile(pattern, re.IGNORECASE)
        _compile_cache[pattern] = compiled
    return compiled


def normalize_query(raw: str) -> str:
    """Canonicalize a query: compatibility-normalize, casefold, collapse
    whitespace.

    Uses the NFKC(casefold(NFKC(x))) composition so the result is stable
    under re-normalization, which plain NFKC+casefold is not for a handful
    of code points.
    """
    folded = unicodedata.normalize("NFKC", unicodedata.normalize("NFKC", raw).casefold())
    return " ".join(folded.split())


def validate_rules(rules: list[RoutingRule]) -> list[RoutingRule]:
    """Validate a rule table at startup and return it sorted by priority.

    Raises RuleTableError on duplicate priorities, negative priorities, or
    patterns that do not compile. Query-time routing never fails.
    """
    seen: dict[int, str] = {}
    for rule in rules:
        if rule.priority < 0:
            raise RuleTableError(f"rule {rule.label!r}: priority must be >= 0")
        if rule.priority in seen:
            raise RuleTableError(
                f"rules {seen[rule.priority]!r} and {rule.label!r} share priority "
                f"{rule.priority}")
        seen[rule.priority] = rule.label
        try:
            _compile(rule.pattern)
        except re.error as exc:
            raise RuleTableError(f"rule {rule.label!r}: bad pattern: {exc}") from exc
    return sorted(rules, key=lambda r: r.priority)


def route_query(query: str, rules: list[RoutingRule]) -> RouteDecision:
    """Pick the lowest-priority rule whose pattern matches the normalized
    query; fall back to General with no matched rule."""
    normalized = normalize_query(query)
    for rule in sorted(rules, key=lambda r: r.priority):
        if rule.compiled().search(normalized):
            return RouteDecision(route=rule.route, matched_rule=rule.label,
                                 normalized_query=normalized)
    return RouteDecision(route=Route.GENERAL, matched_rule=None,
                         normalized_query=normalized)


def default_rules() -> list[RoutingRule]:
    """The shipped rule table.

    Expense and PM lexicons cover the English benchmark wording plus the
    Japanese business terms; DocQa gets the incident lexicon and a separate
    deadline+notice co-occurrence rule. Fully overridable from config.
    """
    return validate_rules([
        RoutingRule(label="expense-keywords",
                    pattern=r"expense|reimburs|精算|経費",
                    route=Route.EXPENSE, priority=10),
        RoutingRule(label="pm-keywords",
                    pattern=r"\bwbs\b|project plan|task breakdown|プロジェクト|タスク",
                    route=Route.PM, priority=20),
        RoutingRule(label="docqa-keywords",
                    pattern=r"incident|\bp-?1\b|infrastructure team|インシデント",
                    route=Route.DOCQA, priority=30),
        RoutingRule(label="docqa-deadline-notice",
                    pattern=r"期限.*通知|通知.*期限",
                    route=Route.DOCQA, priority=31),
    ])
