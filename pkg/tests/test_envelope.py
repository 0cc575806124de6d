"""Envelope parsing, text extraction precedence, and response building."""

import json

import pytest
from hypothesis import given, strategies as st

from a2a_hub import envelope
from a2a_hub.envelope import (
    Message,
    MethodNotSupported,
    ParseError,
    Part,
    ResponseFormatError,
    RpcParams,
    RpcRequest,
    build_error_response,
    build_message_send,
    build_text_response,
    extract_response_text,
    extract_user_text,
    parse_request,
    request_to_dict,
)


def body(**kwargs) -> bytes:
    base = {"jsonrpc": "2.0", "id": 1, "method": "message/send"}
    base.update(kwargs)
    return json.dumps(base).encode("utf-8")


class TestParseRequest:
    def test_valid_message_send_with_text_part(self):
        raw = body(params={"message": {"role": "user", "parts": [
            {"kind": "text", "text": "What is the height of Mount Fuji?"}]}})
        request = parse_request(raw)
        assert request.id == 1
        assert request.method == "message/send"
        assert request.params.message.parts == (
            Part(kind="text", text="What is the height of Mount Fuji?"),)

    def test_other_method_is_method_not_supported(self):
        raw = b'{"jsonrpc":"2.0","id":1,"method":"tasks/get","params":{}}'
        with pytest.raises(MethodNotSupported) as excinfo:
            parse_request(raw)
        assert excinfo.value.method == "tasks/get"
        assert excinfo.value.request_id == 1

    def test_non_json_body_is_parse_error(self):
        with pytest.raises(ParseError) as excinfo:
            parse_request(b"hello")
        assert excinfo.value.code == envelope.PARSE_ERROR

    def test_json_string_body_is_parse_error(self):
        # '"hello"' is valid JSON but not a request object.
        with pytest.raises(ParseError):
            parse_request(b'"hello"')

    def test_invalid_utf8_is_parse_error(self):
        with pytest.raises(ParseError) as excinfo:
            parse_request(b"\xff\xfe{}")
        assert excinfo.value.code == envelope.PARSE_ERROR

    @pytest.mark.parametrize("raw", [
        b'{"id": 1, "method": "message/send"}',                      # no jsonrpc
        b'{"jsonrpc": "1.0", "id": 1, "method": "message/send"}',    # wrong version
        b'{"jsonrpc": "2.0", "method": "message/send"}',             # no id
        b'{"jsonrpc": "2.0", "id": null, "method": "message/send"}',
        b'{"jsonrpc": "2.0", "id": true, "method": "message/send"}',
        b'{"jsonrpc": "2.0", "id": [1], "method": "message/send"}',
        b'{"jsonrpc": "2.0", "id": 1}',                              # no method
        b'{"jsonrpc": "2.0", "id": 1, "method": 5}',
        b'[]',
    ])
    def test_structural_violations(self, raw):
        with pytest.raises(ParseError):
            parse_request(raw)

    @pytest.mark.parametrize("params", [
        5,
        {"text": 5},
        {"message": "hi"},
        {"message": {"parts": "hi"}},
        {"message": {"parts": [5]}},
        {"message": {"parts": [{"kind": 5}]}},
        {"message": {"parts": [{"kind": "text"}]}},     # text part without text
        {"message": {"parts": [{"kind": "text", "text": 5}]}},
        {"acceptedOutputModes": "text"},
        {"acceptedOutputModes": [5]},
    ])
    def test_bad_params_shapes(self, params):
        with pytest.raises(ParseError):
            parse_request(body(params=params))

    def test_id_echoed_into_structural_errors_when_recoverable(self):
        with pytest.raises(ParseError) as excinfo:
            parse_request(body(params=5))
        assert excinfo.value.request_id == 1

    def test_string_id_and_missing_params(self):
        request = parse_request(b'{"jsonrpc":"2.0","id":"abc","method":"message/send"}')
        assert request.id == "abc"
        assert request.params == RpcParams()

    def test_accepted_output_modes_recorded(self):
        request = parse_request(body(params={"acceptedOutputModes": [], "text": "q"}))
        assert request.params.accepted_output_modes == ()

    def test_unknown_params_preserved_as_extra(self):
        request = parse_request(body(params={"text": "q", "contextId": "c-1"}))
        assert request.params.extra == {"contextId": "c-1"}


class TestExtractUserText:
    def test_single_text_part(self):
        params = RpcParams(message=Message(parts=(
            Part(kind="text", text="What is the height of Mount Fuji?"),)))
        assert extract_user_text(params) == "What is the height of Mount Fuji?"

    def test_falls_back_to_params_text(self):
        assert extract_user_text(RpcParams(text="hello")) == "hello"

    def test_only_text_parts_count(self):
        params = RpcParams(message=Message(parts=(
            Part(kind="data", data={"x": 1}), Part(kind="text", text="q"))))
        assert extract_user_text(params) == "q"

    def test_empty_input_yields_none(self):
        assert extract_user_text(RpcParams(message=Message(parts=()))) is None
        assert extract_user_text(RpcParams()) is None

    def test_multiple_text_parts_joined_in_order(self):
        params = RpcParams(message=Message(parts=(
            Part(kind="text", text="first"),
            Part(kind="data", data=1),
            Part(kind="text", text="second"))))
        assert extract_user_text(params) == "first\nsecond"

    def test_parts_win_over_params_text(self):
        params = RpcParams(text="fallback", message=Message(parts=(
            Part(kind="text", text="from parts"),)))
        assert extract_user_text(params) == "from parts"

    def test_blank_text_parts_fall_back_to_params_text(self):
        params = RpcParams(text="fallback", message=Message(parts=(
            Part(kind="text", text=""),)))
        assert extract_user_text(params) == "fallback"

    def test_blank_everything_is_none(self):
        params = RpcParams(text="   ", message=Message(parts=(
            Part(kind="text", text=" "),)))
        assert extract_user_text(params) is None


class TestBuildTextResponse:
    def test_shape(self):
        response = build_text_response(1, "ok")
        assert response == {
            "jsonrpc": "2.0",
            "id": 1,
            "result": {"kind": "message", "role": "agent",
                       "parts": [{"kind": "text", "text": "ok"}]},
        }

    def test_empty_text_rejected(self):
        with pytest.raises(ValueError):
            build_text_response("abc", "")

    def test_round_trip_recovers_id_and_text(self):
        response = build_text_response("req-7", "answer text")
        parsed = json.loads(json.dumps(response))
        assert parsed["id"] == "req-7"
        assert extract_response_text(parsed) == "answer text"


class TestExtractResponseText:
    def test_error_object_rejected(self):
        with pytest.raises(ResponseFormatError):
            extract_response_text(build_error_response(1, -32700, "boom"))

    @pytest.mark.parametrize("parts", [[], [{"kind": "text", "text": "a"},
                                            {"kind": "text", "text": "b"}],
                                       [{"kind": "data", "data": 1}]])
    def test_zero_multiple_or_non_text_parts_rejected(self, parts):
        body = {"jsonrpc": "2.0", "id": 1,
                "result": {"kind": "message", "parts": parts}}
        with pytest.raises(ResponseFormatError):
            extract_response_text(body)

    def test_nested_message_parts_accepted(self):
        body = {"jsonrpc": "2.0", "id": 1,
                "result": {"message": {"parts": [{"kind": "text", "text": "ok"}]}}}
        assert extract_response_text(body) == "ok"

    def test_non_object_body_rejected(self):
        with pytest.raises(ResponseFormatError):
            extract_response_text([1, 2])


def test_build_message_send_mirrors_inbound_shape():
    payload = build_message_send("rpc-1", "hello")
    request = parse_request(json.dumps(payload).encode())
    assert extract_user_text(request.params) == "hello"


# --- properties ---------------------------------------------------------------

ids = st.one_of(st.integers(min_value=-10**9, max_value=10**9),
                st.text(min_size=1, max_size=20))
texts = st.text(min_size=1, max_size=80).filter(lambda s: s.strip())


@given(request_id=ids, text=texts)
def test_response_always_exactly_one_text_part(request_id, text):
    serialized = json.loads(json.dumps(build_text_response(request_id, text)))
    parts = serialized["result"]["parts"]
    assert len(parts) == 1
    assert parts[0]["kind"] == "text"
    assert parts[0]["text"] == text


data_parts = st.builds(Part, kind=st.just("data"),
                       data=st.dictionaries(st.text(max_size=5),
                                            st.integers(), max_size=3))
text_parts = st.builds(Part, kind=st.just("text"), text=texts)


@given(parts=st.lists(st.one_of(data_parts, text_parts), max_size=6),
       fallback=st.booleans())
def test_text_parts_always_win_over_params_text(parts, fallback):
    # the sentinel can never be produced by joining generated part texts
    sentinel = "\x00params-text-sentinel"
    params = RpcParams(text=sentinel if fallback else None,
                       message=Message(parts=tuple(parts)))
    result = extract_user_text(params)
    part_texts = [p.text for p in parts if p.kind == "text" and p.text is not None]
    if part_texts:
        assert result == "\n".join(part_texts)
        assert result != sentinel
    elif fallback:
        assert result == sentinel
    else:
        assert result is None


requests = st.builds(
    RpcRequest,
    id=ids,
    method=st.just("message/send"),
    params=st.builds(
        RpcParams,
        text=st.one_of(st.none(), texts),
        message=st.one_of(st.none(), st.builds(
            Message,
            parts=st.lists(st.one_of(data_parts, text_parts),
                           max_size=4).map(tuple),
            role=st.one_of(st.none(), st.just("user")))),
        accepted_output_modes=st.one_of(
            st.none(), st.lists(st.sampled_from(["text", "data"]),
                                max_size=2).map(tuple)),
    ),
)


@given(request=requests)
def test_parse_of_serialized_request_is_identity(request):
    assert parse_request(json.dumps(request_to_dict(request)).encode()) == request
