"""HTTP surface of the hub.

Two channels, one pipeline: POST / is the JSON-RPC UI channel and renders
nothing but a single text part (or a JSON-RPC error object for bodies that
never formed a request); POST /tools/query runs the identical pipeline and
returns the full structured record for inspection. Operational endpoints
are read-only views of startup state. The UI channel never answers 5xx.
"""

from __future__ import annotations

import importlib.resources
import json
import logging
from typing import Any

import httpx
from starlette.applications import Starlette
from starlette.concurrency import run_in_threadpool
from starlette.responses import JSONResponse, Response
from starlette.routing import Route as HttpRoute

from . import envelope
from .config import HubConfig
from .docqa import DocQaEngine, LocalSearchIndex, ObjectStore
from .downstream import ContainedAnswer, HubPipeline, LAST_RESORT_TEXT
from .boundaries import TokenProvider

logger = logging.getLogger(__name__)


def build_pipeline(config: HubConfig, *, object_store: ObjectStore,
                   token_provider: TokenProvider,
                   transport: httpx.BaseTransport | None = None) -> HubPipeline:
    """Assemble the pipeline from validated config plus the pluggable store
    and token provider (the simulation supplies both at desk scale)."""
    index = LocalSearchIndex(config.corpus)
    engine = DocQaEngine(backend=index, store=object_store,
                         reader_identity=config.identity)
    return HubPipeline(
        rules=config.rules,
        targets=config.targets_by_route(),
        token_provider=token_provider,
        docqa_engine=engine,
        general_table=config.canned,
        caller_identity=config.identity,
        messages=config.messages,
        transport=transport,
    )


def build_agent_card(config: HubConfig) -> dict[str, Any]:
    """The discovery card. Output modes are pinned to ["text"] no matter
    what the config says: the card must never advertise modes the UI
    channel cannot honor."""
    return {
        "name": config.card.name,
        "description": config.card.description,
        "url": config.card.url,
        "defaultInputModes": ["text"],
        "defaultOutputModes": ["text"],
        "skills": [
            {"id": s.id, "name": s.name, "description": s.description}
            for s in config.card.skills
        ],
    }


def tool_response_body(answer: ContainedAnswer) -> dict[str, Any]:
    return {
        "route": answer.route.value,
        "matched_rule": answer.matched_rule,
        "agent_id": answer.agent_id,
        "text": answer.text,
        "structured": answer.structured,
        "citations": [
            {"doc_uri": c.doc_uri, "quote": c.quote, "char_span": list(c.char_span)}
            for c in answer.citations
        ],
        "degraded": answer.degraded,
        "debug": [
            {"stage": d.stage, "detail": d.detail, "level": d.level}
            for d in answer.debug
        ],
    }


def _load_openapi_document() -> str:
    return (importlib.resources.files("a2a_hub") / "fixtures" / "openapi.yaml") \
        .read_text(encoding="utf-8")


def build_app(pipeline: HubPipeline, config: HubConfig) -> Starlette:
    card = build_agent_card(config)
    rules_view = {
        "rules": [
            {"label": r.label, "pattern": r.pattern, "route": r.route.value,
             "priority": r.priority}
            for r in sorted(config.rules, key=lambda r: r.priority)
        ],
    }
    openapi_document = _load_openapi_document()

    async def jsonrpc_endpoint(request):
        raw = await request.body()
        try:
            rpc = envelope.parse_request(raw)
        except envelope.ParseError as exc:
            return JSONResponse(
                envelope.build_error_response(exc.request_id, exc.code, str(exc)))
        except envelope.MethodNotSupported as exc:
            return JSONResponse(
                envelope.build_error_response(exc.request_id,
                                              envelope.METHOD_NOT_FOUND, str(exc)))
        if rpc.params.accepted_output_modes is not None:
            logger.debug("client acceptedOutputModes=%r",
                         list(rpc.params.accepted_output_modes))
        if rpc.params.extra:
            logger.debug("ignoring unrecognized params keys: %s",
                         sorted(rpc.params.extra))
        user_text = envelope.extract_user_text(rpc.params)
        try:
            answer = await run_in_threadpool(pipeline.handle_query_safely, user_text)
            text = answer.text
        except Exception:
            # handle_query_safely is total by contract; this is belt and
            # braces for the no-5xx guarantee.
            logger.exception("pipeline escaped containment")
            text = LAST_RESORT_TEXT
        if not text or not text.strip():
            text = LAST_RESORT_TEXT
        return JSONResponse(envelope.build_text_response(rpc.id, text))

    async def tool_query_endpoint(request):
        try:
            payload = json.loads(await request.body())
        except (UnicodeDecodeError, json.JSONDecodeError):
            return JSONResponse({"error": "body must be a JSON object"},
                                status_code=400)
        if not isinstance(payload, dict) or not isinstance(payload.get("query"), str) \
                or not payload["query"].strip():
            return JSONResponse(
                {"error": 'expected {"query": <non-empty string>}'}, status_code=400)
        answer = await run_in_threadpool(pipeline.handle_query_safely,
                                         payload["query"])
        return JSONResponse(tool_response_body(answer))

    async def agent_card_endpoint(request):
        return JSONResponse(card)

    async def openapi_endpoint(request):
        return Response(openapi_document, media_type="application/yaml")

    async def health_endpoint(request):
        return JSONResponse({"status": "ok"})

    async def routes_endpoint(request):
        return JSONResponse(rules_view)

    async def debug_version_endpoint(request):
        return JSONResponse({"build": config.build})

    return Starlette(routes=[
        HttpRoute("/", jsonrpc_endpoint, methods=["POST"]),
        HttpRoute("/tools/query", tool_query_endpoint, methods=["POST"]),
        HttpRoute("/.well-known/agent-card.json", agent_card_endpoint,
                  methods=["GET"]),
        HttpRoute("/openapi.yaml", openapi_endpoint, methods=["GET"]),
        HttpRoute("/health", health_endpoint, methods=["GET"]),
        HttpRoute("/routes", routes_endpoint, methods=["GET"]),
        HttpRoute("/debug-version", debug_version_endpoint, methods=["GET"]),
    ])
