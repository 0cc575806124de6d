"""JSON-RPC 2.0 envelope handling for the agent-to-agent message channel.

Parses inbound ``message/send`` requests, extracts user text with the
parts-before-params.text precedence, and builds the text-only responses the
conversational UI can always render. All functions here are pure; the wire
objects they return are plain JSON-serializable dicts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

SUPPORTED_METHOD = "message/send"

# JSON-RPC 2.0 error codes.
PARSE_ERROR = -32700
INVALID_REQUEST = -32600
METHOD_NOT_FOUND = -32601

_KNOWN_PARAM_KEYS = frozenset({"text", "message", "acceptedOutputModes"})


class ParseError(Exception):
    """Request body is not a well-formed JSON-RPC 2.0 request.

    ``code`` is -32700 for non-JSON bodies and -32600 for structural
    violations (missing/invalid jsonrpc, id, method, or params shapes).
    ``request_id`` is set when an id could still be recovered, so the
    error response can echo it.
    """

    def __init__(self, message: str, code: int = INVALID_REQUEST,
                 request_id: str | int | None = None):
        super().__init__(message)
        self.code = code
        self.request_id = request_id


class MethodNotSupported(Exception):
    """Envelope is valid JSON-RPC but the method is not message/send."""

    def __init__(self, method: str, request_id: str | int | None):
        super().__init__(f"unsupported method: {method!r}")
        self.method = method
        self.request_id = request_id


class ResponseFormatError(Exception):
    """A downstream response violates the single-text-part contract."""


@dataclass(frozen=True)
class Part:
    kind: str
    text: str | None = None
    data: Any = None


@dataclass(frozen=True)
class Message:
    parts: tuple[Part, ...] = ()
    role: str | None = None


@dataclass(frozen=True)
class RpcParams:
    text: str | None = None
    message: Message | None = None
    # Observed empty from the enterprise UI; recorded for observability but
    # never used to enable non-text output.
    accepted_output_modes: tuple[str, ...] | None = None
    # Unrecognized params keys, kept for logging, never echoed.
    extra: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class RpcRequest:
    id: str | int
    method: str
    params: RpcParams
    jsonrpc: str = "2.0"


def _valid_id(value: Any) -> bool:
    return isinstance(value, (str, int)) and not isinstance(value, bool)


def _parse_part(raw: Any, request_id: str | int) -> Part:
    if not isinstance(raw, dict):
        raise ParseError("message part must be an object", request_id=request_id)
    kind = raw.get("kind", "")
    if not isinstance(kind, str):
        raise ParseError("part kind must be a string", request_id=request_id)
    text = raw.get("text")
    if text is not None and not isinstance(text, str):
        raise ParseError("part text must be a string", request_id=request_id)
    if kind == "text" and text is None:
        raise ParseError("text part is missing its text field", request_id=request_id)
    return Part(kind=kind, text=text, data=raw.get("data"))


def _parse_message(raw: Any, request_id: str | int) -> Message:
    if not isinstance(raw, dict):
        raise ParseError("params.message must be an object", request_id=request_id)
    role = raw.get("role")
    if role is not None and not isinstance(role, str):
        raise ParseError("message role must be a string", request_id=request_id)
    raw_parts = raw.get("parts", [])
    if not isinstance(raw_parts, list):
        raise ParseError("message.parts must be an array", request_id=request_id)
    return Message(parts=tuple(_parse_part(p, request_id) for p in raw_parts), role=role)


def parse_request(raw_body: bytes | str) -> RpcRequest:
    """Parse and structurally validate an inbound JSON-RPC request body.

    Raises ParseError for anything that is not a well-formed request, and
    MethodNotSupported for valid envelopes whose method is not message/send.
    """
    if isinstance(raw_body, bytes):
        try:
            raw_body = raw_body.decode("utf-8")
        except UnicodeDecodeError:
            raise ParseError("body is not valid UTF-8", code=PARSE_ERROR) from None
    try:
        body = json.loads(raw_body)
    except json.JSONDecodeError:
        raise ParseError("body is not valid JSON", code=PARSE_ERROR) from None
    if not isinstance(body, dict):
        raise ParseError("request must be a JSON object")

    # Recover the id early so later errors can echo it.
    request_id = body.get("id")
    if not _valid_id(request_id):
        raise ParseError("missing or invalid request id")
    if body.get("jsonrpc") != "2.0":
        raise ParseError("missing or invalid jsonrpc version", request_id=request_id)

    method = body.get("method")
    if not isinstance(method, str):
        raise ParseError("missing or invalid method", request_id=request_id)
    if method != SUPPORTED_METHOD:
        raise MethodNotSupported(method, request_id)

    raw_params = body.get("params", {})
    if raw_params is None:
        raw_params = {}
    if not isinstance(raw_params, dict):
        raise ParseError("params must be an object", request_id=request_id)

    text = raw_params.get("text")
    if text is not None and not isinstance(text, str):
        raise ParseError("params.text must be a string", request_id=request_id)

    message = None
    if raw_params.get("message") is not None:
        message = _parse_message(raw_params["message"], request_id)

    modes = raw_params.get("acceptedOutputModes")
    if modes is not None:
        if not isinstance(modes, list) or not all(isinstance(m, str) for m in modes):
            raise ParseError("acceptedOutputModes must be an array of strings",
                             request_id=request_id)
        modes = tuple(modes)

    extra = {k: v for k, v in raw_params.items() if k not in _KNOWN_PARAM_KEYS}
    params = RpcParams(text=text, message=message, accepted_output_modes=modes,
                       extra=extra)
    return RpcRequest(id=request_id, method=method, params=params)


def extract_user_text(params: RpcParams) -> str | None:
    """Extract the user's text from parsed params.

    Precedence: every kind=="text" part, joined with newlines in original
    order, wins over params.text. The fallback applies only when the parts
    yield nothing but whitespace. Returns None when no usable text exists;
    the hub answers that case with help text, never an HTTP error.
    """
    parts = params.message.parts if params.message is not None else ()
    texts = [p.text for p in parts if p.kind == "text" and p.text is not None]
    joined = "\n".join(texts)
    if joined.strip():
        return joined
    if params.text is not None and params.text.strip():
        return params.text
    return None


def build_text_response(request_id: str | int, text: str) -> dict[str, Any]:
    """Build the UI-safe response: echoed id, exactly one text part."""
    if not text:
        raise ValueError("response text must be non-empty")
    return {
        "jsonrpc": "2.0",
        "id": request_id,
        "result": {
            "kind": "message",
            "role": "agent",
            "parts": [{"kind": "text", "text": text}],
        },
    }


def build_error_response(request_id: str | int | None, code: int,
                         message: str) -> dict[str, Any]:
    """JSON-RPC error object; the only non-text shape the UI channel emits,
    reserved for bodies that never formed a renderable request."""
    return {
        "jsonrpc": "2.0",
        "id": request_id,
        "error": {"code": code, "message": message},
    }


def build_message_send(request_id: str | int, text: str) -> dict[str, Any]:
    """Outgoing downstream request; mirrors the inbound UI shape so agents
    built to the same contract interoperate."""
    return {
        "jsonrpc": "2.0",
        "id": request_id,
        "method": SUPPORTED_METHOD,
        "params": {
            "message": {
                "role": "user",
                "parts": [{"kind": "text", "text": text}],
            },
        },
    }


def extract_response_text(body: Any) -> str:
    """Extract the single text part from a downstream JSON-RPC response.

    Raises ResponseFormatError when the response is an error object or does
    not contain exactly one part of kind "text" -- downstreams are held to
    the same text-only contract the hub exports.
    """
    if not isinstance(body, dict):
        raise ResponseFormatError("response body is not a JSON object")
    if "error" in body:
        raise ResponseFormatError(f"downstream returned an error object: {body['error']!r}")
    result = body.get("result")
    if not isinstance(result, dict):
        raise ResponseFormatError("response has no result object")
    parts = result.get("parts")
    if parts is None and isinstance(result.get("message"), dict):
        parts = result["message"].get("parts")
    if not isinstance(parts, list):
        raise ResponseFormatError("result carries no parts array")
    if len(parts) != 1:
        raise ResponseFormatError(f"expected exactly one part, got {len(parts)}")
    part = parts[0]
    if not isinstance(part, dict) or part.get("kind") != "text" \
            or not isinstance(part.get("text"), str):
        raise ResponseFormatError("single part is not a text part")
    return part["text"]


def request_to_dict(request: RpcRequest) -> dict[str, Any]:
    """Serialize a parsed request back to its wire form."""
    params: dict[str, Any] = dict(request.params.extra)
    if request.params.text is not None:
        params["text"] = request.params.text
    if request.params.message is not None:
        message: dict[str, Any] = {
            "parts": [_part_to_dict(p) for p in request.params.message.parts],
        }
        if request.params.message.role is not None:
            message["role"] = request.params.message.role
        params["message"] = message
    if request.params.accepted_output_modes is not None:
        params["acceptedOutputModes"] = list(request.params.accepted_output_modes)
    return {
        "jsonrpc": "2.0",
        "id": request.id,
        "method": request.method,
        "params": params,
    }


def _part_to_dict(part: Part) -> dict[str, Any]:
    out: dict[str, Any] = {"kind": part.kind}
    if part.text is not None:
        out["text"] = part.text
    if part.data is not None:
        out["data"] = part.data
    return out
