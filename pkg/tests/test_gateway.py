"""Backends: mock behavior, fault profiles, HTTP protocol details."""

from __future__ import annotations

import json
from datetime import datetime, timezone

import pytest

from casedraft.gateway import (
    DEFAULT_API_KEY_ENV,
    MOCK_CREATED_AT,
    BackendConfig,
    BackendKind,
    BackendRefusal,
    DropFacts,
    Faithful,
    GatewayError,
    InjectCoordinate,
    InjectName,
    ProtocolError,
    TransportError,
    backend_config_from_dict,
    generate,
)
from casedraft.ingest import SourceFormat
from casedraft.model import CaseBundle, Mandate, ReportSectionKind
from casedraft.prompting import (
    Placement,
    PromptVariant,
    build_matrix,
    build_prompt,
    render_input,
)


def mock_config(fault=None) -> BackendConfig:
    return BackendConfig(
        name="mock", kind=BackendKind.MOCK, fault_profile=fault or Faithful()
    )


@pytest.fixture()
def intro_prompt(golden_bundle):
    text = render_input(golden_bundle, ReportSectionKind.INTRODUCTION, SourceFormat.MANDATE_TEXT)
    return build_prompt(
        ReportSectionKind.INTRODUCTION,
        SourceFormat.MANDATE_TEXT,
        text,
        PromptVariant(placement=Placement.REQUEST_LAST),
    )


# --- config -----------------------------------------------------------------

def test_backend_config_from_dict_parses_fault_profiles():
    cfg = backend_config_from_dict(
        "m", {"kind": "mock", "fault": {"kind": "drop_facts", "count": 2}}
    )
    assert cfg.kind is BackendKind.MOCK
    assert isinstance(cfg.fault_profile, DropFacts)
    assert cfg.fault_profile.count == 2

    cfg = backend_config_from_dict("m", {"kind": "mock", "fault": "faithful"})
    assert isinstance(cfg.fault_profile, Faithful)

    cfg = backend_config_from_dict(
        "m",
        {"kind": "mock", "fault": {"kind": "inject_coordinate", "latitude": 1.0, "longitude": 2.0}},
    )
    assert isinstance(cfg.fault_profile, InjectCoordinate)


def test_backend_config_rejects_unknown_kind():
    with pytest.raises((GatewayError, ValueError, KeyError)):
        backend_config_from_dict("m", {"kind": "quantum"})


# --- mock backend --------------------------------------------------------------

def test_mock_is_deterministic(intro_prompt):
    a = generate(mock_config(), intro_prompt)
    b = generate(mock_config(), intro_prompt)
    assert a.text == b.text
    assert a.latency_s == 0.0
    assert a.created_at == MOCK_CREATED_AT == datetime(1970, 1, 1, tzinfo=timezone.utc)
    assert a.prompt_id == intro_prompt.prompt_id
    assert a.backend_label == "mock"


def test_mock_embeds_question_count(intro_prompt):
    draft = generate(mock_config(), intro_prompt)
    assert "5 investigative questions" in draft.text


def test_mock_restates_every_question(golden_bundle, intro_prompt):
    draft = generate(mock_config(), intro_prompt)
    for question in golden_bundle.mandate.questions:
        assert question in draft.text


def test_drop_facts_on_bare_five_question_mandate():
    questions = tuple(f"What happened at site {n}?" for n in ("A", "B", "C", "D", "E"))
    bundle = CaseBundle(mandate=Mandate(description="d", questions=questions))
    text = render_input(bundle, ReportSectionKind.INTRODUCTION, SourceFormat.MANDATE_TEXT)
    prompt = build_prompt(
        ReportSectionKind.INTRODUCTION,
        SourceFormat.MANDATE_TEXT,
        text,
        PromptVariant(placement=Placement.REQUEST_LAST),
    )
    draft = generate(mock_config(DropFacts(1)), prompt)
    restated = [q for q in questions if q in draft.text]
    assert len(restated) == 4
    assert questions[4] not in draft.text  # facts drop from the tail


def test_inject_coordinate_appends_fabricated_position(intro_prompt):
    draft = generate(mock_config(InjectCoordinate(40.7128, -74.0060)), intro_prompt)
    assert "(40.712800, -74.006000)" in draft.text


def test_inject_name_appends_fabricated_person(intro_prompt):
    draft = generate(mock_config(InjectName("Mr Moriarty")), intro_prompt)
    assert "Mr Moriarty" in draft.text


def test_mock_token_estimate(intro_prompt):
    draft = generate(mock_config(), intro_prompt)
    assert draft.token_estimate == max(1, len(draft.text) // 4)


def test_draft_to_dict_round_trips_created_at(intro_prompt):
    d = generate(mock_config(), intro_prompt).to_dict()
    assert d["created_at"] == "1970-01-01T00:00:00+00:00"
    assert json.dumps(d)  # serializable


# --- local generate endpoint -----------------------------------------------------

def test_local_generate_wire_format(stub_server, intro_prompt):
    cfg = BackendConfig(
        name="local", kind=BackendKind.LOCAL_GENERATE,
        endpoint_url=stub_server.url, max_retries=0,
        max_new_tokens=128, temperature=0.25,
    )
    draft = generate(cfg, intro_prompt)
    assert draft.text == "local draft 1"
    assert draft.latency_s > 0.0
    request = stub_server.requests[0]
    assert request["path"] == "/api/v1/generate"
    assert sorted(request["body"].keys()) == ["max_length", "prompt", "temperature"]
    assert request["body"]["prompt"] == intro_prompt.rendered_text
    assert request["body"]["max_length"] == 128
    assert request["body"]["temperature"] == 0.25


def test_local_generate_is_stateless(stub_server, golden_bundle):
    cfg = BackendConfig(
        name="local", kind=BackendKind.LOCAL_GENERATE,
        endpoint_url=stub_server.url, max_retries=0,
    )
    matrix = build_matrix(golden_bundle)
    first = generate(cfg, matrix[0])
    generate(cfg, matrix[1])
    second_payload = stub_server.requests[1]["body"]["prompt"]
    assert first.text not in second_payload
    assert matrix[0].rendered_text != second_payload


def test_local_generate_refusal_on_http_error(stub_server, intro_prompt):
    stub_server.state["fail_on"] = {1}
    cfg = BackendConfig(
        name="local", kind=BackendKind.LOCAL_GENERATE,
        endpoint_url=stub_server.url, max_retries=0,
    )
    with pytest.raises(BackendRefusal) as excinfo:
        generate(cfg, intro_prompt)
    assert "503" in str(excinfo.value)
    assert len(stub_server.requests) == 1  # no retry on HTTP status errors


def test_local_generate_protocol_error_on_bad_shape(stub_server, intro_prompt):
    stub_server.state["raw_response"] = json.dumps({"unexpected": True}).encode()
    cfg = BackendConfig(
        name="local", kind=BackendKind.LOCAL_GENERATE,
        endpoint_url=stub_server.url, max_retries=0,
    )
    with pytest.raises(ProtocolError):
        generate(cfg, intro_prompt)


def test_local_generate_protocol_error_on_non_json(stub_server, intro_prompt):
    stub_server.state["raw_response"] = b"<html>not json</html>"
    cfg = BackendConfig(
        name="local", kind=BackendKind.LOCAL_GENERATE,
        endpoint_url=stub_server.url, max_retries=0,
    )
    with pytest.raises(ProtocolError):
        generate(cfg, intro_prompt)


def test_transport_error_after_retries(intro_prompt):
    cfg = BackendConfig(
        name="dead", kind=BackendKind.LOCAL_GENERATE,
        endpoint_url="http://127.0.0.1:9",  # discard port: connection refused
        max_retries=1, retry_backoff=0.01, timeout=0.5,
    )
    with pytest.raises(TransportError) as excinfo:
        generate(cfg, intro_prompt)
    assert "2 attempts" in str(excinfo.value)


# --- hosted chat endpoint ---------------------------------------------------------

def test_hosted_chat_wire_format(stub_server, intro_prompt, monkeypatch):
    monkeypatch.setenv(DEFAULT_API_KEY_ENV, "sk-unit-test")
    cfg = BackendConfig(
        name="hosted", kind=BackendKind.HOSTED_CHAT,
        endpoint_url=stub_server.url, model_name="test-model", max_retries=0,
    )
    draft = generate(cfg, intro_prompt)
    assert draft.text == "hosted draft 1"
    assert draft.token_estimate == 7
    request = stub_server.requests[0]
    assert request["path"] == "/v1/chat/completions"
    assert sorted(request["body"].keys()) == ["max_tokens", "messages", "model", "temperature"]
    assert request["body"]["model"] == "test-model"
    messages = request["body"]["messages"]
    assert len(messages) == 1
    assert messages[0]["role"] == "user"
    assert messages[0]["content"] == intro_prompt.rendered_text
    assert request["headers"]["authorization"] == "Bearer sk-unit-test"


def test_hosted_chat_requires_env_key(stub_server, intro_prompt, monkeypatch):
    monkeypatch.delenv(DEFAULT_API_KEY_ENV, raising=False)
    cfg = BackendConfig(
        name="hosted", kind=BackendKind.HOSTED_CHAT,
        endpoint_url=stub_server.url, model_name="test-model", max_retries=0,
    )
    with pytest.raises(GatewayError):
        generate(cfg, intro_prompt)
    assert stub_server.requests == []  # nothing sent without a key


def test_hosted_chat_honors_custom_key_env(stub_server, intro_prompt, monkeypatch):
    monkeypatch.delenv(DEFAULT_API_KEY_ENV, raising=False)
    monkeypatch.setenv("OTHER_KEY", "sk-other")
    cfg = BackendConfig(
        name="hosted", kind=BackendKind.HOSTED_CHAT,
        endpoint_url=stub_server.url, model_name="test-model",
        api_key_env="OTHER_KEY", max_retries=0,
    )
    generate(cfg, intro_prompt)
    assert stub_server.requests[0]["headers"]["authorization"] == "Bearer sk-other"
