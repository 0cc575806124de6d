"""Desk-scale substitute for the cloud side of the system.

Hosts mock downstream agents with configurable auth policies and injectable
faults, a token issuer, and the ACL-gated object store, so the full boundary
and failure matrix runs offline in one process. Agents are reachable three
ways that share one dispatch path: direct calls in tests, an in-process
httpx transport, and a real HTTP server for standalone probing.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable

import httpx

from . import envelope
from .boundaries import BearerIdToken

DEFAULT_TOKEN_LIFETIME_S = 3600.0


class UnknownAgentError(KeyError):
    """Admin operation referenced an agent id the scenario does not define."""


# --- auth policies -----------------------------------------------------------


@dataclass(frozen=True)
class PublicPolicy:
    """Accepts any request, authenticated or not."""


@dataclass(frozen=True)
class IamPolicy:
    """Requires a bearer token with the right audience and an invoker grant."""

    expected_audience: str
    invoker_grants: frozenset[str]

    def __post_init__(self) -> None:
        if not self.expected_audience:
            raise ValueError("IamPolicy requires a non-empty expected_audience")


MockAgentPolicy = PublicPolicy | IamPolicy


@dataclass(frozen=True)
class Allow:
    pass


@dataclass(frozen=True)
class Deny:
    status: int  # 401 or 403
    reason: str


AuthDecision = Allow | Deny


# --- faults ------------------------------------------------------------------


@dataclass(frozen=True)
class StallFault:
    duration_s: float


@dataclass(frozen=True)
class RaiseFault:
    pass


@dataclass(frozen=True)
class EmptyPartsFault:
    pass


Fault = StallFault | RaiseFault | EmptyPartsFault | None


@dataclass(frozen=True)
class MockAgentSpec:
    id: str
    policy: MockAgentPolicy
    canned_reply: str
    fault: Fault = None


# --- tokens ------------------------------------------------------------------


def format_token(sub: str, aud: str, exp: float) -> str:
    return f"sub={sub};aud={aud};exp={int(exp)}"


def parse_token(token: str) -> tuple[str, str, float] | None:
    """Parse the simulation token format; None for anything garbled."""
    fields = {}
    for piece in token.split(";"):
        key, sep, value = piece.partition("=")
        if not sep:
            return None
        fields[key] = value
    try:
        return fields["sub"], fields["aud"], float(fields["exp"])
    except (KeyError, ValueError):
        return None


class SimTokenIssuer:
    """Issues structured, signature-free identity tokens for any audience.

    Real token verification is out of scope; audience, subject and expiry
    are the semantics the boundary matrix exercises. ``failing`` makes
    issuance raise, for fault-injection runs.
    """

    def __init__(self, lifetime_s: float = DEFAULT_TOKEN_LIFETIME_S,
                 now: Callable[[], float] = time.time):
        if lifetime_s <= 0:
            raise ValueError("token lifetime must be positive")
        self.lifetime_s = lifetime_s
        self._now = now
        self.failing = False

    def issue(self, audience: str, caller_identity: str) -> BearerIdToken:
        if self.failing:
            raise RuntimeError("token issuer unavailable (injected failure)")
        expires_at = self._now() + self.lifetime_s
        return BearerIdToken(
            token=format_token(caller_identity, audience, expires_at),
            audience=audience,
            expires_at=expires_at,
        )


def evaluate_auth(headers: dict[str, str], policy: MockAgentPolicy,
                  now: float) -> AuthDecision:
    """The boundary decision table.

    Token validity (presence, parseability, expiry, audience) is checked
    before grant membership: unauthenticated traffic is rejected with 401
    before authorization is considered, and only a valid token with a
    missing invoker grant yields 403.
    """
    if isinstance(policy, PublicPolicy):
        return Allow()
    auth = next((v for k, v in headers.items() if k.lower() == "authorization"), None)
    if auth is None or not auth.startswith("Bearer "):
        return Deny(401, "missing bearer token")
    claims = parse_token(auth[len("Bearer "):])
    if claims is None:
        return Deny(401, "malformed token")
    sub, aud, exp = claims
    if exp <= now:
        return Deny(401, "token expired")
    if aud != policy.expected_audience:
        return Deny(401, "token audience mismatch")
    if sub not in policy.invoker_grants:
        return Deny(403, "caller lacks invoker grant")
    return Allow()


# --- simulation state --------------------------------------------------------


@dataclass
class RequestRecord:
    headers: dict[str, str]
    body: Any
    received_at: float


@dataclass
class AgentReply:
    """Planned response; the caller realizes stall_s its own way (a real
    sleep on the HTTP server, a simulated timeout on the test transport)."""

    status: int
    body: Any
    stall_s: float = 0.0
    json_body: bool = True


class SimulationState:
    """All mutable simulation state behind one lock.

    Admin mutations are serialized; request logs are append-only; the
    object-store ACL is the set of (doc_uri_prefix, reader_identity)
    pairs holding the read capability.
    """

    def __init__(self, agents: list[MockAgentSpec] = (),
                 objects: dict[str, str] | None = None,
                 read_grants: set[tuple[str, str]] | None = None,
                 issuer: SimTokenIssuer | None = None,
                 now: Callable[[], float] = time.time):
        self._lock = threading.Lock()
        self._now = now
        self.agents: dict[str, MockAgentSpec] = {a.id: a for a in agents}
        self.faults: dict[str, Fault] = {a.id: a.fault for a in agents}
        self.request_logs: dict[str, list[RequestRecord]] = {a.id: [] for a in agents}
        self.objects = dict(objects or {})
        self.read_grants = set(read_grants or set())
        self.issuer = issuer or SimTokenIssuer(now=now)

    # admin operations

    def set_acl_grant(self, doc_uri_prefix: str, identity: str,
                      granted: bool) -> None:
        with self._lock:
            if granted:
                self.read_grants.add((doc_uri_prefix, identity))
            else:
                self.read_grants.discard((doc_uri_prefix, identity))

    def set_fault(self, agent_id: str, fault: Fault) -> None:
        with self._lock:
            if agent_id not in self.agents:
                raise UnknownAgentError(agent_id)
            self.faults[agent_id] = fault

    def get_request_log(self, agent_id: str) -> list[RequestRecord]:
        with self._lock:
            if agent_id not in self.request_logs:
                raise UnknownAgentError(agent_id)
            return list(self.request_logs[agent_id])

    def set_issuer_failure(self, failing: bool) -> None:
        with self._lock:
            self.issuer.failing = failing

    # object store (the docqa.ObjectStore protocol)

    def fetch(self, doc_uri: str, reader_identity: str) -> str:
        from .docqa import ObjectNotFound, PermissionDenied

        with self._lock:
            if doc_uri not in self.objects:
                raise ObjectNotFound(doc_uri)
            for prefix, identity in self.read_grants:
                if identity == reader_identity and doc_uri.startswith(prefix):
                    return self.objects[doc_uri]
            raise PermissionDenied(doc_uri, reader_identity)


def dispatch_agent_request(state: SimulationState, agent_id: str,
                           headers: dict[str, str], body: bytes) -> AgentReply:
    """Shared mock-agent behavior: record the request, evaluate auth, apply
    the configured fault, or answer with the canned single-text-part reply."""
    with state._lock:
        spec = state.agents.get(agent_id)
        if spec is None:
            raise UnknownAgentError(agent_id)
        fault = state.faults.get(agent_id)
        try:
            parsed_body: Any = json.loads(body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            parsed_body = body.decode("utf-8", errors="replace")
        state.request_logs[agent_id].append(RequestRecord(
            headers={k.lower(): v for k, v in headers.items()},
            body=parsed_body,
            received_at=state._now(),
        ))
        now = state._now()

    decision = evaluate_auth(headers, spec.policy, now)
    if isinstance(decision, Deny):
        return AgentReply(status=decision.status, body={"error": decision.reason})

    request_id = parsed_body.get("id") if isinstance(parsed_body, dict) else None
    if not isinstance(request_id, (str, int)) or isinstance(request_id, bool):
        request_id = 0

    stall_s = 0.0
    if isinstance(fault, StallFault):
        stall_s = fault.duration_s
    elif isinstance(fault, RaiseFault):
        # Stands in for an unhandled exception in the agent's handler.
        return AgentReply(status=500,
                          body="Internal Server Error: unhandled exception in "
                               f"agent {agent_id!r} handler",
                          json_body=False)
    elif isinstance(fault, EmptyPartsFault):
        return AgentReply(status=200, body={
            "jsonrpc": "2.0",
            "id": request_id,
            "result": {"kind": "message", "role": "agent", "parts": []},
        })

    return AgentReply(status=200,
                      body=envelope.build_text_response(request_id, spec.canned_reply),
                      stall_s=stall_s)


# --- in-process transport ----------------------------------------------------


class SimTransport(httpx.BaseTransport):
    """Routes hub HTTP calls to the simulation without sockets.

    Honors the caller's timeout deterministically: a stall at least as long
    as the read timeout raises ReadTimeout instead of sleeping it out.
    Unknown paths raise ConnectError, standing in for unreachable hosts.
    """

    def __init__(self, state: SimulationState):
        self.state = state

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        prefix, _, agent_id = request.url.path.rpartition("/")
        if prefix != "/agents" or agent_id not in self.state.agents:
            raise httpx.ConnectError(f"simulation has no endpoint {request.url!r}",
                                     request=request)
        reply = dispatch_agent_request(self.state, agent_id,
                                       dict(request.headers), request.read())
        if reply.stall_s:
            timeout = (request.extensions.get("timeout") or {}).get("read")
            if timeout is not None and reply.stall_s >= timeout:
                raise httpx.ReadTimeout("simulated stall exceeded read timeout",
                                        request=request)
            time.sleep(reply.stall_s)
        if reply.json_body:
            return httpx.Response(reply.status, json=reply.body, request=request)
        return httpx.Response(reply.status, text=str(reply.body), request=request)


# --- HTTP app ----------------------------------------------------------------


def build_sim_app(state: SimulationState):
    """Starlette app exposing the mock agents at /agents/{id} and the admin
    surface under /admin/*, for standalone runs and end-to-end tests."""
    from starlette.applications import Starlette
    from starlette.concurrency import run_in_threadpool
    from starlette.responses import JSONResponse, PlainTextResponse, Response
    from starlette.routing import Route

    async def agent_endpoint(request):
        agent_id = request.path_params["agent_id"]
        if agent_id not in state.agents:
            return JSONResponse({"error": f"unknown agent {agent_id!r}"}, status_code=404)
        body = await request.body()
        reply = dispatch_agent_request(state, agent_id, dict(request.headers), body)
        if reply.stall_s:
            await run_in_threadpool(time.sleep, reply.stall_s)
        if reply.json_body:
            return JSONResponse(reply.body, status_code=reply.status)
        return PlainTextResponse(str(reply.body), status_code=reply.status)

    async def admin_acl(request):
        payload = await _json_or_none(request)
        if payload is None or not isinstance(payload.get("doc_uri_prefix"), str) \
                or not isinstance(payload.get("identity"), str) \
                or not isinstance(payload.get("granted"), bool):
            return JSONResponse({"error": "expected {doc_uri_prefix, identity, granted}"},
                                status_code=400)
        state.set_acl_grant(payload["doc_uri_prefix"], payload["identity"],
                            payload["granted"])
        return JSONResponse({"ok": True})

    async def admin_fault(request):
        payload = await _json_or_none(request)
        if payload is None or not isinstance(payload.get("agent_id"), str):
            return JSONResponse({"error": "expected {agent_id, fault}"}, status_code=400)
        try:
            fault = parse_fault(payload.get("fault"))
        except ValueError as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        try:
            state.set_fault(payload["agent_id"], fault)
        except UnknownAgentError:
            return JSONResponse({"error": f"unknown agent {payload['agent_id']!r}"},
                                status_code=404)
        return JSONResponse({"ok": True})

    async def admin_issuer(request):
        payload = await _json_or_none(request)
        if payload is None or not isinstance(payload.get("failing"), bool):
            return JSONResponse({"error": "expected {failing}"}, status_code=400)
        state.set_issuer_failure(payload["failing"])
        return JSONResponse({"ok": True})

    async def admin_requests(request):
        agent_id = request.path_params["agent_id"]
        try:
            records = state.get_request_log(agent_id)
        except UnknownAgentError:
            return JSONResponse({"error": f"unknown agent {agent_id!r}"}, status_code=404)
        return JSONResponse({"requests": [
            {"headers": r.headers, "body": r.body, "received_at": r.received_at}
            for r in records
        ]})

    async def _json_or_none(request) -> dict | None:
        try:
            payload = json.loads(await request.body())
        except (UnicodeDecodeError, json.JSONDecodeError):
            return None
        return payload if isinstance(payload, dict) else None

    return Starlette(routes=[
        Route("/agents/{agent_id}", agent_endpoint, methods=["POST"]),
        Route("/admin/acl", admin_acl, methods=["POST"]),
        Route("/admin/fault", admin_fault, methods=["POST"]),
        Route("/admin/issuer", admin_issuer, methods=["POST"]),
        Route("/admin/requests/{agent_id}", admin_requests, methods=["GET"]),
    ])


def parse_fault(raw: Any) -> Fault:
    """Parse the wire/scenario form of a fault: none | stall | raise |
    empty_parts, with duration_s for stalls."""
    if raw is None:
        return None
    if isinstance(raw, str):
        raw = {"kind": raw}
    if not isinstance(raw, dict) or not isinstance(raw.get("kind"), str):
        raise ValueError("fault must be a kind string or {kind, ...} object")
    kind = raw["kind"]
    if kind == "none":
        return None
    if kind == "stall":
        duration = raw.get("duration_s")
        if not isinstance(duration, (int, float)) or duration <= 0:
            raise ValueError("stall fault requires a positive duration_s")
        return StallFault(float(duration))
    if kind == "raise":
        return RaiseFault()
    if kind == "empty_parts":
        return EmptyPartsFault()
    raise ValueError(f"unknown fault kind {kind!r}")


def parse_policy(raw: Any) -> MockAgentPolicy:
    if not isinstance(raw, dict) or not isinstance(raw.get("kind"), str):
        raise ValueError("policy must be an object with a kind")
    if raw["kind"] == "public":
        return PublicPolicy()
    if raw["kind"] == "iam":
        audience = raw.get("expected_audience")
        grants = raw.get("invoker_grants", [])
        if not isinstance(audience, str) or not audience:
            raise ValueError("iam policy requires expected_audience")
        if not isinstance(grants, list) or not all(isinstance(g, str) for g in grants):
            raise ValueError("invoker_grants must be a list of identities")
        return IamPolicy(expected_audience=audience, invoker_grants=frozenset(grants))
    raise ValueError(f"unknown policy kind {raw['kind']!r}")


def load_scenario(raw: dict[str, Any]) -> tuple[list[MockAgentSpec], float]:
    """Parse a scenario document: {agents: [...], issuer: {lifetime_s}}.

    Returns the agent specs and the issuer token lifetime; object-store
    contents and ACL come from the hub config's corpus/acl sections.
    """
    agents = []
    for entry in raw.get("agents", []):
        if not isinstance(entry, dict) or not isinstance(entry.get("id"), str):
            raise ValueError("agent entries require an id")
        if not isinstance(entry.get("canned_reply"), str) or not entry["canned_reply"]:
            raise ValueError(f"agent {entry.get('id')!r} requires a canned_reply")
        agents.append(MockAgentSpec(
            id=entry["id"],
            policy=parse_policy(entry.get("policy")),
            canned_reply=entry["canned_reply"],
            fault=parse_fault(entry.get("fault")),
        ))
    issuer = raw.get("issuer", {})
    lifetime = issuer.get("lifetime_s", DEFAULT_TOKEN_LIFETIME_S)
    if not isinstance(lifetime, (int, float)) or lifetime <= 0:
        raise ValueError("issuer lifetime_s must be positive")
    return agents, float(lifetime)
