"""Benchmark harness: drive queries at a running hub and verify behavior.

Each case is issued on the JSON-RPC channel, the REST channel, or both.
Route and citation checks ride the REST channel (the UI channel carries no
such fields, by design); the single-text-part shape check rides the
JSON-RPC channel. Exit codes: 0 all passed, 1 assertion failures, 2 the hub
was unreachable.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import httpx
import yaml

from . import envelope
from .router import Route

CHANNELS = ("jsonrpc", "rest", "both")

EXIT_PASS = 0
EXIT_FAILURES = 1
EXIT_INFRA = 2


class CaseFileError(ValueError):
    """Benchmark case file failed validation."""


class HubUnreachable(Exception):
    """Could not talk to the hub at all; infrastructure problem, not a
    benchmark failure."""


@dataclass(frozen=True)
class BenchCase:
    name: str
    query: str
    expected_route: Route
    channel: str = "both"
    expected_substrings: tuple[str, ...] = ()
    expect_citations: bool = False


@dataclass
class CaseResult:
    name: str
    passed: bool
    observed_route: str | None
    latency_ms: float
    details: list[str] = field(default_factory=list)


@dataclass
class BenchReport:
    cases: list[CaseResult]

    @property
    def passed_count(self) -> int:
        return sum(1 for c in self.cases if c.passed)

    @property
    def total(self) -> int:
        return len(self.cases)

    @property
    def all_passed(self) -> bool:
        return self.passed_count == self.total

    def to_dict(self) -> dict[str, Any]:
        return {
            "cases": [
                {"name": c.name, "passed": c.passed,
                 "observed_route": c.observed_route,
                 "latency_ms": c.latency_ms, "details": c.details}
                for c in self.cases
            ],
            "summary": {"passed_count": self.passed_count, "total": self.total},
        }

    def to_text(self) -> str:
        lines = []
        for case in self.cases:
            status = "PASS" if case.passed else "FAIL"
            route = case.observed_route or "-"
            lines.append(f"{status} {case.name} route={route} "
                         f"({case.latency_ms:.1f} ms)")
            for detail in case.details:
                lines.append(f"    - {detail}")
        lines.append(f"{self.passed_count}/{self.total} passed")
        return "\n".join(lines)


def load_cases(path: str | Path) -> list[BenchCase]:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise CaseFileError(f"cannot read case file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise CaseFileError(f"case file {path} is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict) or not isinstance(raw.get("cases"), list):
        raise CaseFileError("case file must be a mapping with a cases list")
    cases = []
    for entry in raw["cases"]:
        if not isinstance(entry, dict):
            raise CaseFileError("case entries must be mappings")
        for key in ("name", "query"):
            if not isinstance(entry.get(key), str) or not entry[key]:
                raise CaseFileError(f"cases require a non-empty {key}")
        try:
            route = Route(entry.get("expected_route"))
        except ValueError:
            raise CaseFileError(
                f"case {entry['name']!r}: expected_route must be one of "
                f"{[r.value for r in Route]}") from None
        channel = entry.get("channel", "both")
        if channel not in CHANNELS:
            raise CaseFileError(
                f"case {entry['name']!r}: channel must be one of {CHANNELS}")
        substrings = entry.get("expected_substrings", [])
        if not isinstance(substrings, list) \
                or not all(isinstance(s, str) for s in substrings):
            raise CaseFileError(
                f"case {entry['name']!r}: expected_substrings must be strings")
        expect_citations = entry.get("expect_citations", False)
        if not isinstance(expect_citations, bool):
            raise CaseFileError(
                f"case {entry['name']!r}: expect_citations must be a boolean")
        cases.append(BenchCase(
            name=entry["name"], query=entry["query"], expected_route=route,
            channel=channel, expected_substrings=tuple(substrings),
            expect_citations=expect_citations))
    names = [c.name for c in cases]
    if len(names) != len(set(names)):
        raise CaseFileError("case names must be unique")
    return cases


def _run_rest(client: httpx.Client, hub_url: str, case: BenchCase,
              result: CaseResult) -> None:
    response = client.post(f"{hub_url.rstrip('/')}/tools/query",
                           json={"query": case.query})
    if response.status_code != 200:
        result.details.append(f"REST channel returned HTTP {response.status_code}")
        return
    body = response.json()
    result.observed_route = body.get("route")
    if result.observed_route != case.expected_route.value:
        result.details.append(
            f"expected route {case.expected_route.value!r}, "
            f"observed {result.observed_route!r}")
    text = body.get("text") or ""
    for needle in case.expected_substrings:
        if needle not in text:
            result.details.append(f"REST text missing substring {needle!r}")
    citations = body.get("citations") or []
    if case.expect_citations and not citations:
        result.details.append("expected citations, response has none")
    if not case.expect_citations and citations:
        result.details.append("expected no citations, response has some")


def _run_jsonrpc(client: httpx.Client, hub_url: str, case: BenchCase,
                 result: CaseResult) -> None:
    payload = envelope.build_message_send(f"bench-{case.name}", case.query)
    response = client.post(f"{hub_url.rstrip('/')}/", json=payload)
    if response.status_code != 200:
        result.details.append(
            f"JSON-RPC channel returned HTTP {response.status_code}")
        return
    try:
        text = envelope.extract_response_text(response.json())
    except (ValueError, envelope.ResponseFormatError) as exc:
        result.details.append(f"JSON-RPC response shape: {exc}")
        return
    for needle in case.expected_substrings:
        if needle not in text:
            result.details.append(f"JSON-RPC text missing substring {needle!r}")


def run_benchmark(hub_url: str, cases: list[BenchCase],
                  channel: str | None = None, fail_fast: bool = False,
                  client: httpx.Client | None = None) -> BenchReport:
    """Run all cases against a hub. ``channel`` overrides the per-case
    channel when given. Raises HubUnreachable on transport-level failure."""
    if channel is not None and channel not in CHANNELS:
        raise ValueError(f"channel must be one of {CHANNELS}")
    owned = client is None
    client = client or httpx.Client(timeout=30.0)
    report = BenchReport(cases=[])
    try:
        for case in cases:
            effective = channel or case.channel
            result = CaseResult(name=case.name, passed=False,
                                observed_route=None, latency_ms=0.0)
            start = time.perf_counter()
            try:
                if effective in ("rest", "both"):
                    _run_rest(client, hub_url, case, result)
                if effective in ("jsonrpc", "both"):
                    _run_jsonrpc(client, hub_url, case, result)
            except httpx.TransportError as exc:
                raise HubUnreachable(
                    f"cannot reach hub at {hub_url}: {exc}") from exc
            result.latency_ms = (time.perf_counter() - start) * 1000.0
            result.passed = not result.details
            report.cases.append(result)
            if fail_fast and not result.passed:
                break
    finally:
        if owned:
            client.close()
    return report


def render_report(report: BenchReport, output_format: str) -> str:
    if output_format == "json":
        return json.dumps(report.to_dict(), indent=2)
    return report.to_text()


def exit_code_for(report: BenchReport) -> int:
    return EXIT_PASS if report.all_passed else EXIT_FAILURES
