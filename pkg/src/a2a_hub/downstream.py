"""Downstream invocation and the containment layer.

invoke_agent speaks the same message/send wire shape the hub accepts, with
boundary-correct auth attached, and maps every way a call can go wrong into
a typed outcome. HubPipeline.handle_query_safely is the protective wrapper
around the whole routing pipeline: whatever fails inside, the caller gets a
non-empty human-readable text and a debug trail, never an exception.
"""

from __future__ import annotations

import logging
import time
import uuid
from dataclasses import dataclass
from typing import Any

import httpx

from . import envelope
from .boundaries import (
    AuthMaterial,
    DownstreamTarget,
    TokenCache,
    TokenIssueError,
    TokenProvider,
    acquire_credential,
    attach_auth,
)
from .docqa import Citation, DocQaEngine, EvidenceStatus
from .generalqa import CannedAnswerTable
from .router import Route, RouteDecision, RoutingRule, route_query

logger = logging.getLogger(__name__)

# A transport-level retry is attempted only when at least this much of the
# per-target deadline budget remains.
RETRY_MIN_BUDGET_S = 0.05

DEFAULT_HELP_TEXT = (
    "Please send a question as text. I can help with expense policy, project "
    "management, internal documents, and general questions."
)
DEFAULT_DEGRADED_TEMPLATE = (
    "I could not complete that request ({stage} failed: {reason}). "
    "Please retry or contact an administrator."
)
LAST_RESORT_TEXT = "I could not process that request. Please retry."


@dataclass(frozen=True)
class Ok:
    text: str
    result: Any = None  # raw downstream result object, for inspection


@dataclass(frozen=True)
class HttpFailure:
    status: int
    body_excerpt: str


@dataclass(frozen=True)
class TransportFailure:
    reason: str


@dataclass(frozen=True)
class ProtocolFailure:
    reason: str


DownstreamOutcome = Ok | HttpFailure | TransportFailure | ProtocolFailure


@dataclass(frozen=True)
class DebugRecord:
    stage: str
    detail: str
    level: str = "info"  # "info" | "error"


@dataclass(frozen=True)
class ContainedAnswer:
    text: str
    route: Route
    agent_id: str | None
    degraded: bool
    debug: tuple[DebugRecord, ...]
    matched_rule: str | None = None
    citations: tuple[Citation, ...] = ()
    structured: dict[str, Any] | None = None


@dataclass(frozen=True)
class Messages:
    help_text: str = DEFAULT_HELP_TEXT
    degraded_template: str = DEFAULT_DEGRADED_TEMPLATE


def invoke_agent(target: DownstreamTarget, user_text: str, auth: AuthMaterial,
                 client: httpx.Client) -> DownstreamOutcome:
    """POST a message/send envelope to a downstream agent.

    All attempts share one deadline budget of target.timeout_s, so a single
    transport-level retry fits inside the timeout bound and a timed-out
    attempt is never retried. Never raises: every failure comes back as an
    outcome variant.
    """
    payload = envelope.build_message_send(str(uuid.uuid4()), user_text)
    headers = attach_auth({}, auth)
    deadline = time.monotonic() + target.timeout_s
    attempt = 0
    while True:
        attempt += 1
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            return TransportFailure("deadline budget exhausted before send")
        try:
            response = client.post(target.url, json=payload, headers=headers,
                                   timeout=httpx.Timeout(remaining))
            break
        except httpx.TimeoutException as exc:
            return TransportFailure(
                f"timed out after {target.timeout_s:.3g}s ({type(exc).__name__})")
        except httpx.TransportError as exc:
            if attempt == 1 and deadline - time.monotonic() > RETRY_MIN_BUDGET_S:
                logger.debug("retrying %s after transport error: %s", target.id, exc)
                continue
            return TransportFailure(f"{type(exc).__name__}: {exc}")
        except httpx.HTTPError as exc:
            return TransportFailure(f"{type(exc).__name__}: {exc}")

    if response.status_code >= 400:
        return HttpFailure(status=response.status_code,
                           body_excerpt=response.text[:200])
    if not 200 <= response.status_code < 300:
        return ProtocolFailure(f"unexpected status {response.status_code}")
    try:
        body = response.json()
    except ValueError:
        return ProtocolFailure("response body is not JSON")
    try:
        text = envelope.extract_response_text(body)
    except envelope.ResponseFormatError as exc:
        return ProtocolFailure(str(exc))
    if not text.strip():
        return ProtocolFailure("downstream returned an empty text part")
    return Ok(text=text, result=body.get("result"))


class HubPipeline:
    """Routing pipeline with containment: route, dispatch, absorb failures.

    Shared by the JSON-RPC and REST channels; the first renders only the
    text, the second the full record. Stateless per call apart from the
    token cache and the shared HTTP client, both safe under concurrency.
    """

    def __init__(self, rules: list[RoutingRule],
                 targets: dict[Route, DownstreamTarget],
                 token_provider: TokenProvider,
                 docqa_engine: DocQaEngine,
                 general_table: CannedAnswerTable,
                 caller_identity: str,
                 messages: Messages = Messages(),
                 token_cache: TokenCache | None = None,
                 transport: httpx.BaseTransport | None = None):
        self.rules = rules
        self.targets = targets
        self.token_provider = token_provider
        self.token_cache = token_cache or TokenCache()
        self.docqa_engine = docqa_engine
        self.general_table = general_table
        self.caller_identity = caller_identity
        self.messages = messages
        self.client = httpx.Client(transport=transport)

    def close(self) -> None:
        self.client.close()

    # The containment contract: no exception escapes, text is never empty.
    def handle_query_safely(self, user_text: str | None) -> ContainedAnswer:
        debug: list[DebugRecord] = []
        try:
            answer = self._handle(user_text, debug)
        except Exception as exc:
            logger.exception("pipeline failure contained")
            debug.append(DebugRecord("pipeline", f"unexpected error: {exc!r}", "error"))
            answer = self._degraded("pipeline", "unexpected internal error",
                                    Route.GENERAL, None, debug)
        if not answer.text.strip():
            answer = ContainedAnswer(
                text=LAST_RESORT_TEXT, route=answer.route, agent_id=answer.agent_id,
                degraded=True, debug=answer.debug, matched_rule=answer.matched_rule,
                citations=answer.citations, structured=answer.structured)
        return answer

    def _handle(self, user_text: str | None,
                debug: list[DebugRecord]) -> ContainedAnswer:
        if user_text is None or not user_text.strip():
            debug.append(DebugRecord("route", "no user text; answering with help text"))
            return ContainedAnswer(text=self.messages.help_text, route=Route.GENERAL,
                                   agent_id=None, degraded=False, debug=tuple(debug))
        decision = route_query(user_text, self.rules)
        debug.append(DebugRecord(
            "route", f"route={decision.route.value} "
                     f"rule={decision.matched_rule or '<default>'}"))
        if decision.route in (Route.EXPENSE, Route.PM):
            return self._downstream_route(decision, user_text, debug)
        if decision.route is Route.DOCQA:
            return self._docqa_route(decision, debug)
        return self._general_route(decision, debug)

    def _downstream_route(self, decision: RouteDecision, user_text: str,
                          debug: list[DebugRecord]) -> ContainedAnswer:
        target = self.targets.get(decision.route)
        if target is None:
            debug.append(DebugRecord(
                "dispatch", f"no downstream target for route {decision.route.value}",
                "error"))
            return self._degraded("dispatch", "no downstream agent configured",
                                  decision.route, decision.matched_rule, debug)
        try:
            auth = acquire_credential(target, self.token_provider,
                                      self.token_cache, self.caller_identity)
        except TokenIssueError as exc:
            debug.append(DebugRecord("credential", str(exc), "error"))
            return self._degraded("credential", "could not obtain an identity token",
                                  decision.route, decision.matched_rule, debug,
                                  agent_id=target.id)
        outcome = invoke_agent(target, user_text, auth, self.client)
        if isinstance(outcome, Ok):
            debug.append(DebugRecord("invoke", f"agent {target.id} answered"))
            return ContainedAnswer(
                text=outcome.text, route=decision.route, agent_id=target.id,
                degraded=False, debug=tuple(debug),
                matched_rule=decision.matched_rule,
                structured={"agent_result": outcome.result})
        if isinstance(outcome, HttpFailure):
            detail = f"HTTP {outcome.status} from {target.id}: {outcome.body_excerpt}"
            reason = f"downstream agent returned HTTP {outcome.status}"
        elif isinstance(outcome, TransportFailure):
            detail = f"transport failure calling {target.id}: {outcome.reason}"
            reason = "downstream agent unreachable"
        else:
            detail = f"protocol failure from {target.id}: {outcome.reason}"
            reason = "downstream agent sent an unusable response"
        debug.append(DebugRecord("invoke", detail, "error"))
        return self._degraded("invoke", reason, decision.route,
                              decision.matched_rule, debug, agent_id=target.id)

    def _docqa_route(self, decision: RouteDecision,
                     debug: list[DebugRecord]) -> ContainedAnswer:
        try:
            answer, hits = self.docqa_engine.answer(decision.normalized_query)
        except Exception as exc:
            debug.append(DebugRecord("docqa", f"document QA failed: {exc!r}", "error"))
            return self._degraded("docqa", "document search unavailable",
                                  decision.route, decision.matched_rule, debug)
        structured = {
            "evidence_status": answer.evidence_status.value,
            "hits": [{"doc_uri": h.doc_uri, "snippet": h.snippet, "score": h.score}
                     for h in hits],
        }
        degraded = answer.evidence_status is EvidenceStatus.DENIED_FALLBACK
        if degraded:
            debug.append(DebugRecord(
                "evidence", "source document read was denied; snippet fallback",
                "error"))
        else:
            debug.append(DebugRecord(
                "docqa", f"{len(hits)} hits, evidence={answer.evidence_status.value}"))
        return ContainedAnswer(
            text=answer.text, route=decision.route, agent_id=None,
            degraded=degraded, debug=tuple(debug),
            matched_rule=decision.matched_rule,
            citations=answer.citations, structured=structured)

    def _general_route(self, decision: RouteDecision,
                       debug: list[DebugRecord]) -> ContainedAnswer:
        text = self.general_table.answer(decision.normalized_query)
        debug.append(DebugRecord("general", "canned-answer backend"))
        return ContainedAnswer(text=text, route=decision.route, agent_id=None,
                               degraded=False, debug=tuple(debug),
                               matched_rule=decision.matched_rule)

    def _degraded(self, stage: str, reason: str, route: Route,
                  matched_rule: str | None, debug: list[DebugRecord],
                  agent_id: str | None = None) -> ContainedAnswer:
        text = self.messages.degraded_template.format(stage=stage, reason=reason)
        return ContainedAnswer(text=text, route=route, agent_id=agent_id,
                               degraded=True, debug=tuple(debug),
                               matched_rule=matched_rule)
